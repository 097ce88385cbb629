"""Inference under the improper (flat) coefficient prior.

With an unnormalized uniform prior on theta the "evidence" is not a proper
marginal likelihood; what remains well defined is the area under the
likelihood,

    S(y) = (2 pi sigma_e2)^(-(N-M)/2) det(Phi^T Phi)^(-1/2)
           * exp(-||y - f_hat||^2 / (2 sigma_e2)),

where ``f_hat`` is the least-squares fit.  This module computes the flat-prior
posterior, predictive, and smoothing distributions, log S and the quantities
derived from it: the unbiased noise-variance estimator and the profiled cost
over basis parameters.
"""
from __future__ import annotations

import json
import math
import warnings
from dataclasses import dataclass

import numpy as np

from .exceptions import ConsistencyError, DegenerateFitWarning, DimensionMismatch
from .model import (
    BasisFamily,
    DesignMatrix,
    GaussianBelief,
    _check_noise_var,
    _check_outputs,
    feature_vector,
    residual_dof,
)

_REPORT_RTOL = 1e-10
_IDENTITY_RTOL = 1e-9
# Residuals below this fraction of ||y||^2 count as an exact interpolation.
# zero-residual detector: an exact interpolation computes rss at the rounding
# floor eps^2 * cond^2 relative to y^T y, while a genuinely small fit stays
# many orders above it; eps^1.5 with headroom separates the two even for
# Gram conditioning near the rank threshold
_DEGENERATE_RTOL = 1e4 * float(np.finfo(float).eps) ** 1.5


@dataclass(frozen=True)
class EvidenceReport:
    """A log score broken into its fitting / penalty / constant parts.

    The invariant ``log_value == -(fitting_term + penalty_term +
    constant_term)`` is checked at construction.
    """

    log_value: float
    fitting_term: float
    penalty_term: float
    constant_term: float

    def __post_init__(self):
        terms = (self.log_value, self.fitting_term, self.penalty_term, self.constant_term)
        if not all(math.isfinite(t) for t in terms):
            raise ValueError("all report terms must be finite")
        total = self.fitting_term + self.penalty_term + self.constant_term
        if abs(self.log_value + total) > _REPORT_RTOL * max(1.0, abs(self.log_value)):
            raise ValueError(
                "log_value must equal the negated sum of the three terms"
            )

    def to_dict(self) -> dict:
        return {
            "log_value": self.log_value,
            "fitting_term": self.fitting_term,
            "penalty_term": self.penalty_term,
            "constant_term": self.constant_term,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_terms(cls, fitting: float, penalty: float, constant: float) -> "EvidenceReport":
        return cls(
            log_value=-(fitting + penalty + constant),
            fitting_term=fitting,
            penalty_term=penalty,
            constant_term=constant,
        )


def _residual_sum_of_squares(y: np.ndarray, design: DesignMatrix) -> tuple[np.ndarray, float]:
    theta_hat = design.solve_gram(design.phi.T @ y)
    resid = y - design.phi @ theta_hat
    # direct sum of squares: nonnegative by construction, no cancellation
    return theta_hat, float(resid @ resid)


def posterior_coefficients(y, design: DesignMatrix, sigma_e2: float) -> GaussianBelief:
    """Flat-prior posterior over theta: N(theta_hat, sigma_e2 (Phi^T Phi)^{-1})."""
    y = _check_outputs(y, design)
    _check_noise_var(sigma_e2)
    theta_hat = design.solve_gram(design.phi.T @ y)
    return GaussianBelief(mean=theta_hat, cov=sigma_e2 * design.inv_gram())


def predict_at(x, family: BasisFamily, alpha, posterior: GaussianBelief) -> tuple[float, float]:
    """Predictive mean and variance of f(x) = phi(x)^T theta under ``posterior``.

    The variance is phi(x)^T Sigma phi(x); tiny negative round-off is clamped
    to zero so callers always see a nonnegative variance.
    """
    row = feature_vector(family, alpha, x)
    if row.size != posterior.dim:
        raise DimensionMismatch(
            f"basis row has length {row.size} but posterior is {posterior.dim}-dimensional"
        )
    mean = float(row @ posterior.mean)
    var = float(row @ posterior.cov @ row)
    return mean, max(var, 0.0)


def smooth(y, design: DesignMatrix, sigma_e2: float) -> GaussianBelief:
    """Posterior over the noise-free fitted values f = Phi theta.

    Mean is the projection ``f_hat = Phi (Phi^T Phi)^{-1} Phi^T y`` and the
    covariance is ``sigma_e2 Phi (Phi^T Phi)^{-1} Phi^T``.  Two quadratic-form
    identities are asserted on the way out: ``f_hat^T f_hat = y^T Phi
    (Phi^T Phi)^{-1} Phi^T y`` and ``||y - f_hat||^2 = y^T y - f_hat^T f_hat``
    (so the fit never has more energy than the data).
    """
    y = _check_outputs(y, design)
    _check_noise_var(sigma_e2)
    theta_hat, rss = _residual_sum_of_squares(y, design)
    f_hat = design.phi @ theta_hat
    yy = float(y @ y)
    ff = float(f_hat @ f_hat)
    scale = max(yy, 1.0)
    quad = float((design.phi.T @ y) @ theta_hat)
    if abs(ff - quad) > _IDENTITY_RTOL * scale:
        raise ConsistencyError("fitted-energy identity violated beyond tolerance")
    if abs(rss - (yy - ff)) > _IDENTITY_RTOL * scale:
        raise ConsistencyError("residual-energy identity violated beyond tolerance")
    if ff > yy * (1.0 + _IDENTITY_RTOL) + _IDENTITY_RTOL:
        raise ConsistencyError("fit energy exceeds data energy")
    half = design.solve_gram(design.phi.T)
    cov = sigma_e2 * (design.phi @ half)
    cov = 0.5 * (cov + cov.T)
    return GaussianBelief(mean=f_hat, cov=cov)


def log_area_under_likelihood(y, design: DesignMatrix, sigma_e2: float) -> EvidenceReport:
    """Closed-form log S(y | alpha, sigma_e2).

    Term split: fitting ``rss / (2 sigma_e2)``, penalty
    ``log det(Phi^T Phi) / 2``, constant ``(N - M)/2 log(2 pi sigma_e2)``;
    ``log_value`` is minus their sum.
    """
    y = _check_outputs(y, design)
    _check_noise_var(sigma_e2)
    _, rss = _residual_sum_of_squares(y, design)
    fitting = rss / (2.0 * sigma_e2)
    penalty = 0.5 * design.log_det_gram
    constant = 0.5 * (design.n - design.m) * np.log(2.0 * np.pi * sigma_e2)
    return EvidenceReport.from_terms(fitting, penalty, float(constant))


def unbiased_noise_variance(y, design: DesignMatrix) -> float:
    """Noise-variance estimate ``||y - f_hat||^2 / (N - M)``.

    This is the maximizer of S over sigma_e2 and is unbiased, unlike the
    maximum-likelihood divisor N.  Requires N > M; an interpolating fit
    returns the boundary value with a :class:`DegenerateFitWarning`.
    """
    y = _check_outputs(y, design)
    dof = residual_dof(design)
    _, rss = _residual_sum_of_squares(y, design)
    if rss <= _DEGENERATE_RTOL * max(float(y @ y), np.finfo(float).tiny):
        warnings.warn(
            "residual is numerically zero; noise-variance estimate is at the boundary",
            DegenerateFitWarning,
            stacklevel=2,
        )
    return rss / dof


def profiled_cost(y, design: DesignMatrix) -> float:
    """Cost over basis parameters with the noise variance profiled out.

    Equal (up to an additive constant, fixed here to zero) to minus log S
    evaluated at the profiled noise variance:

        C = (N - M)/2 * log(rss) + log det(Phi^T Phi) / 2.

    A zero residual makes the cost -inf; that sentinel is returned with a
    :class:`DegenerateFitWarning` instead of raising, so grid searches can
    treat interpolation as a boundary rather than a crash.
    """
    y = _check_outputs(y, design)
    dof = residual_dof(design)
    _, rss = _residual_sum_of_squares(y, design)
    if rss <= _DEGENERATE_RTOL * max(float(y @ y), np.finfo(float).tiny):
        warnings.warn(
            "residual is numerically zero; profiled cost is -inf",
            DegenerateFitWarning,
            stacklevel=2,
        )
        return -np.inf
    return float(0.5 * dof * np.log(rss) + 0.5 * design.log_det_gram)
