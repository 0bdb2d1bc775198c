"""Exception hierarchy shared across the package.

Every error carries a ``category`` used by the service and CLI to map
failures onto exit codes: ``usage`` (1), ``data`` (2), ``numeric`` (3).
"""

from __future__ import annotations


class HkgError(Exception):
    category = "data"


class ConfigError(HkgError):
    """Invalid configuration value or file."""

    category = "usage"


class ParseError(HkgError):
    """One malformed log record. Callers count and skip these."""


class UnsortedInput(HkgError):
    """Timestamps decrease where ascending order is required."""


class EmptyInput(HkgError):
    """An aggregate was requested for a user with no events."""


class EmptyPage(HkgError):
    """Pass/fail label requested for a page with no linked content."""


class EmptyGraph(HkgError):
    """Assembly produced no supervision labels."""


class DomainError(HkgError):
    """Input outside its documented domain (e.g. label not in {0,1})."""


class ShapeError(HkgError):
    """Matrix dimensions incompatible with the requested operation."""

    category = "numeric"


class TooFewEdges(HkgError):
    """Not enough supervision edges to split."""


class DegenerateLabels(HkgError):
    """AUC requested for a single-class label vector."""


class NonFiniteLoss(HkgError):
    """Training produced NaN/Inf loss; aborted with diagnostics."""

    category = "numeric"


class StaleCache(HkgError):
    """Backward called without a matching cached forward pass."""

    category = "numeric"


class LeakageError(HkgError):
    """Supervision edges leaked into a message-passing edge set."""

    category = "numeric"


class MissingRuns(HkgError):
    """Report requested over a directory with no completed runs."""


class EpochMismatch(HkgError):
    """Run sets being compared do not share an epoch count."""
