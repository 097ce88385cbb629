"""Allow ``python -m linevidence`` to behave like the installed script."""
from .cli import entry_point

entry_point()
