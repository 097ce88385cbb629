"""Core data model for linear-in-parameters regression.

The observation model is ``y = Phi theta + e`` with ``e ~ N(0, sigma_e2 I)``.
``Phi`` is an N x M design matrix whose columns are basis functions evaluated
at the inputs; basis parameters such as centers enter through ``alpha``.
Everything downstream (posteriors, evidence-style scores, experiment drivers)
is built on the types and operations defined here.
"""
from __future__ import annotations

import csv
import json
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np
import scipy.linalg

from .exceptions import DegenerateDof, DimensionMismatch, RankDeficient

# Relative pivot threshold: a Cholesky pivot below RANK_RTOL times the largest
# Gram diagonal entry means the columns are numerically dependent.
RANK_RTOL = 1e-12

_SYMMETRY_RTOL = 1e-10

BASIS_KINDS = ("constant", "polynomial", "gaussian-rbf", "exponential-abs")


def _as_float_array(value, name: str) -> np.ndarray:
    arr = np.asarray(value, dtype=float)
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must contain only finite values")
    return arr


@dataclass(frozen=True)
class Dataset:
    """Observed inputs and outputs.

    Parameters
    ----------
    inputs : array_like, shape (N, d) or (N,)
        Input locations.  A 1-D array is treated as N scalar inputs.
    outputs : array_like, shape (N,)
        Observed responses.
    """

    inputs: np.ndarray
    outputs: np.ndarray

    def __post_init__(self):
        x = _as_float_array(self.inputs, "inputs")
        y = _as_float_array(self.outputs, "outputs")
        if x.ndim == 1:
            x = x[:, None]
        if x.ndim != 2:
            raise DimensionMismatch("inputs must be a 1-D or 2-D array")
        if y.ndim != 1:
            raise DimensionMismatch("outputs must be a 1-D array")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(
                f"inputs have {x.shape[0]} rows but outputs have {y.shape[0]}"
            )
        if y.shape[0] < 1:
            raise DimensionMismatch("dataset must contain at least one point")
        object.__setattr__(self, "inputs", x)
        object.__setattr__(self, "outputs", y)

    @property
    def n(self) -> int:
        return self.outputs.shape[0]

    @property
    def input_dim(self) -> int:
        return self.inputs.shape[1]


@dataclass(frozen=True)
class BasisFamily:
    """A named family of basis functions.

    ``kind`` selects the functional form, ``size`` is the number M of basis
    functions, and ``width`` is the length scale of the gaussian-rbf kind
    (ignored by the others).  The parameter layout is one center per basis
    for the located kinds and empty for constant/polynomial:

    - ``constant``:        phi_m(x) = 1
    - ``polynomial``:      phi_m(x) = x**(m-1), scalar inputs only
    - ``gaussian-rbf``:    phi_m(x) = exp(-(x - c_m)**2 / (2 width**2))
    - ``exponential-abs``: phi_m(x) = exp(|x - c_m|)
    """

    kind: str
    size: int
    width: float = 1.0

    def __post_init__(self):
        if self.kind not in BASIS_KINDS:
            raise ValueError(f"unknown basis kind {self.kind!r}; expected one of {BASIS_KINDS}")
        if not isinstance(self.size, (int, np.integer)) or self.size < 1:
            raise ValueError("basis size must be a positive integer")
        if not (math.isfinite(self.width) and self.width > 0):
            raise ValueError("width must be a positive finite number")

    @property
    def param_count(self) -> int:
        """Length of the ``alpha`` vector this family expects."""
        return self.size if self.kind in ("gaussian-rbf", "exponential-abs") else 0

    @property
    def param_layout(self) -> str:
        return "center-per-basis" if self.param_count else "none"


@dataclass(frozen=True)
class HyperParams:
    """Basis parameters plus noise (and optionally prior) variances.

    ``prior_scale`` is the isotropic prior variance sigma_p^2 on the
    coefficients; ``prior_mean`` is a common scalar prior mean and is only
    meaningful when ``prior_scale`` is set.
    """

    alpha: np.ndarray
    sigma_e2: float
    prior_scale: float | None = None
    prior_mean: float | None = None

    def __post_init__(self):
        alpha = np.atleast_1d(_as_float_array(self.alpha, "alpha"))
        if alpha.ndim != 1:
            raise DimensionMismatch("alpha must be a 1-D array")
        object.__setattr__(self, "alpha", alpha)
        if not (math.isfinite(self.sigma_e2) and self.sigma_e2 > 0):
            raise ValueError("sigma_e2 must be a positive finite number")
        if self.prior_scale is not None and not (
            math.isfinite(self.prior_scale) and self.prior_scale > 0
        ):
            raise ValueError("prior_scale must be positive and finite when given")
        if self.prior_mean is not None:
            if self.prior_scale is None:
                raise ValueError("prior_mean requires prior_scale")
            if not math.isfinite(self.prior_mean):
                raise ValueError("prior_mean must be finite")
        # keep scalars as plain floats so serialization never sees numpy reprs
        object.__setattr__(self, "sigma_e2", float(self.sigma_e2))
        for name in ("prior_scale", "prior_mean"):
            if getattr(self, name) is not None:
                object.__setattr__(self, name, float(getattr(self, name)))

    def replace(self, **changes) -> "HyperParams":
        fields = {
            "alpha": self.alpha,
            "sigma_e2": self.sigma_e2,
            "prior_scale": self.prior_scale,
            "prior_mean": self.prior_mean,
        }
        fields.update(changes)
        return HyperParams(**fields)


@dataclass(frozen=True)
class GaussianBelief:
    """A multivariate normal summarized by its mean and covariance."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(_as_float_array(self.mean, "mean"))
        cov = np.atleast_2d(_as_float_array(self.cov, "cov"))
        if mean.ndim != 1 or cov.ndim != 2:
            raise DimensionMismatch("mean must be 1-D and cov 2-D")
        if cov.shape != (mean.size, mean.size):
            raise DimensionMismatch(
                f"cov shape {cov.shape} does not match mean length {mean.size}"
            )
        asym = np.max(np.abs(cov - cov.T)) if cov.size else 0.0
        scale = max(float(np.max(np.abs(cov))) if cov.size else 0.0, 1.0)
        if asym > _SYMMETRY_RTOL * scale:
            raise ValueError("covariance is not symmetric within tolerance")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def _gram_cholesky(gram: np.ndarray) -> np.ndarray:
    """Lower Cholesky factor of a Gram matrix, with a relative pivot check."""
    try:
        chol = np.linalg.cholesky(gram)
    except np.linalg.LinAlgError as exc:
        raise RankDeficient("Gram matrix is not positive definite") from exc
    pivots = np.diag(chol) ** 2
    if np.min(pivots) < RANK_RTOL * np.max(np.diag(gram)):
        raise RankDeficient(
            "Gram matrix is numerically singular (pivot below relative threshold)"
        )
    return chol


@dataclass(frozen=True)
class DesignMatrix:
    """A validated design matrix with its cached Gram factorization.

    Built through :func:`build_design_matrix`; construction fails with
    :class:`RankDeficient` unless ``phi`` has full column rank (which
    requires M <= N).
    """

    phi: np.ndarray
    gram: np.ndarray
    chol: np.ndarray

    @property
    def n(self) -> int:
        return self.phi.shape[0]

    @property
    def m(self) -> int:
        return self.phi.shape[1]

    @property
    def log_det_gram(self) -> float:
        # log det from the factor diagonal; stable for large N and M
        return float(2.0 * np.sum(np.log(np.diag(self.chol))))

    def solve_gram(self, rhs: np.ndarray) -> np.ndarray:
        """Solve ``gram @ x = rhs`` using the cached Cholesky factor."""
        return scipy.linalg.cho_solve((self.chol, True), rhs)

    def inv_gram(self) -> np.ndarray:
        inv = scipy.linalg.cho_solve((self.chol, True), np.eye(self.m))
        return 0.5 * (inv + inv.T)


def _basis_matrix(family: BasisFamily, alpha: np.ndarray, x: np.ndarray) -> np.ndarray:
    n, d = x.shape
    if family.kind == "constant":
        return np.ones((n, family.size))
    if d != 1:
        raise DimensionMismatch(
            f"{family.kind} basis requires scalar inputs, got input_dim={d}"
        )
    t = x[:, 0]
    if family.kind == "polynomial":
        return np.vander(t, family.size, increasing=True)
    diff = t[:, None] - alpha[None, :]
    if family.kind == "gaussian-rbf":
        return np.exp(-0.5 * (diff / family.width) ** 2)
    return np.exp(np.abs(diff))


def feature_vector(family: BasisFamily, alpha, x) -> np.ndarray:
    """Basis row phi(x) for a single input point.

    ``x`` may be a scalar or a length-d vector; returns a length-M array.
    """
    alpha = _check_alpha(family, alpha)
    pt = np.atleast_1d(np.asarray(x, dtype=float))
    if pt.ndim != 1:
        raise DimensionMismatch("x must be a scalar or 1-D point")
    return _basis_matrix(family, alpha, pt[None, :])[0]


def _check_alpha(family: BasisFamily, alpha) -> np.ndarray:
    arr = np.atleast_1d(np.asarray(alpha, dtype=float))
    if arr.size != family.param_count:
        raise DimensionMismatch(
            f"{family.kind} basis with size {family.size} expects "
            f"{family.param_count} parameters, got {arr.size}"
        )
    if arr.size and not np.all(np.isfinite(arr)):
        raise ValueError("alpha must contain only finite values")
    return arr


def build_design_matrix(dataset: Dataset, family: BasisFamily, alpha) -> DesignMatrix:
    """Evaluate the basis family at the dataset inputs.

    Raises
    ------
    DimensionMismatch
        If ``alpha`` has the wrong length for the family.
    RankDeficient
        If M > N, the basis produced non-finite values, or the Gram matrix
        fails the positive-definiteness check.
    """
    alpha = _check_alpha(family, alpha)
    phi = _basis_matrix(family, alpha, dataset.inputs)
    if phi.shape[1] > phi.shape[0]:
        raise RankDeficient(
            f"more basis functions ({phi.shape[1]}) than observations ({phi.shape[0]})"
        )
    if not np.all(np.isfinite(phi)):
        raise RankDeficient("design matrix contains non-finite entries")
    gram = phi.T @ phi
    gram = 0.5 * (gram + gram.T)
    chol = _gram_cholesky(gram)
    return DesignMatrix(phi=phi, gram=gram, chol=chol)


def log_likelihood(y, design: DesignMatrix, theta, sigma_e2: float) -> float:
    """Gaussian log likelihood log p(y | theta, sigma_e2), in log domain throughout."""
    y = _check_outputs(y, design)
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if theta.shape != (design.m,):
        raise DimensionMismatch(f"theta must have length {design.m}")
    _check_noise_var(sigma_e2)
    resid = y - design.phi @ theta
    n = design.n
    return float(
        -0.5 * n * np.log(2.0 * np.pi * sigma_e2)
        - 0.5 * float(resid @ resid) / sigma_e2
    )


def ml_estimate(y, design: DesignMatrix) -> tuple[np.ndarray, float]:
    """Maximum-likelihood coefficients and (biased) noise variance.

    Returns ``theta_hat = (Phi^T Phi)^{-1} Phi^T y`` and
    ``sigma2_ml = ||y - Phi theta_hat||^2 / N``.
    """
    y = _check_outputs(y, design)
    theta_hat = design.solve_gram(design.phi.T @ y)
    resid = y - design.phi @ theta_hat
    return theta_hat, float(resid @ resid) / design.n


def ml_sampling_distribution(
    theta_true, design: DesignMatrix, sigma_e2: float
) -> GaussianBelief:
    """Exact sampling distribution of theta_hat under repeated noise draws.

    Under ``y = Phi theta_true + e`` the least-squares estimator is normal
    with mean ``theta_true`` and covariance ``sigma_e2 (Phi^T Phi)^{-1}``.
    """
    _check_noise_var(sigma_e2)
    theta_true = np.atleast_1d(np.asarray(theta_true, dtype=float))
    if theta_true.shape != (design.m,):
        raise DimensionMismatch(f"theta_true must have length {design.m}")
    return GaussianBelief(mean=theta_true, cov=sigma_e2 * design.inv_gram())


def residual_dof(design: DesignMatrix) -> int:
    """N - M, raising DegenerateDof when it is zero."""
    dof = design.n - design.m
    if dof <= 0:
        raise DegenerateDof("operation requires N > M residual degrees of freedom")
    return dof


def _check_outputs(y, design: DesignMatrix) -> np.ndarray:
    y = np.atleast_1d(np.asarray(y, dtype=float))
    if y.shape != (design.n,):
        raise DimensionMismatch(f"y must have length {design.n}")
    return y


def _check_noise_var(sigma_e2: float) -> None:
    if not (math.isfinite(sigma_e2) and sigma_e2 > 0):
        raise ValueError("sigma_e2 must be a positive finite number")


def dataset_from_csv(path) -> Dataset:
    """Load a dataset from a CSV file with header ``x_1,...,x_d,y``."""
    path = Path(path)
    with path.open(newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path} is empty; a header row is required") from None
        header = [h.strip() for h in header]
        d = len(header) - 1
        expected = [f"x_{i}" for i in range(1, d + 1)] + ["y"]
        if d < 1 or header != expected:
            raise ValueError(
                f"{path} must have header x_1,...,x_d,y; got {','.join(header)}"
            )
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 1:
                raise ValueError(f"{path}:{lineno}: expected {d + 1} fields, got {len(row)}")
            rows.append([float(v) for v in row])
    if not rows:
        raise ValueError(f"{path} contains no data rows")
    data = np.asarray(rows, dtype=float)
    return Dataset(inputs=data[:, :d], outputs=data[:, d])


def dataset_from_json(path) -> Dataset:
    """Load a dataset from a JSON file shaped ``{"x": [[...], ...], "y": [...]}``."""
    path = Path(path)
    with path.open() as fh:
        payload = json.load(fh)
    if not isinstance(payload, dict) or "x" not in payload or "y" not in payload:
        raise ValueError(f'{path} must be an object with "x" and "y" keys')
    return Dataset(inputs=payload["x"], outputs=payload["y"])
