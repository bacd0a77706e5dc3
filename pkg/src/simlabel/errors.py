"""Exception types shared across the package.

Everything user-facing derives from SimlabelError so the CLI can separate
expected failures (bad input, missing artifact) from genuine bugs.
"""

from __future__ import annotations


class SimlabelError(Exception):
    """Base class for all expected, user-facing failures."""


class SchemaError(SimlabelError):
    """Invalid feature schema declaration."""


class DataError(SimlabelError):
    """Invalid dataset content. Carries every violation found, not just the first."""

    def __init__(self, message: str, violations: list[str] | None = None):
        super().__init__(message)
        self.violations = list(violations) if violations else []


class KernelError(SimlabelError):
    """Range computation or similarity evaluation failed."""


class MatcherError(SimlabelError):
    """Threshold calibration or label estimation failed."""


class AugmentError(SimlabelError):
    """Similar-dataset construction or merging failed."""


class ModelError(SimlabelError):
    """Model training, prediction, or score-file handling failed."""


class EvalError(SimlabelError):
    """Metric computation or report assembly failed."""


class ProbeError(SimlabelError):
    """Grid, shell, or recourse probing failed."""


class ConfigError(SimlabelError):
    """Run configuration is invalid or incomplete."""


class MissingArtifactError(SimlabelError):
    """A required upstream output file does not exist yet."""
