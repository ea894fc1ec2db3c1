"""Exception types shared across the package.

The CLI maps these onto process exit codes: configuration problems
(ConfigError, ModelFormatError, ShapeError) exit 2, numerical failures
(NumericalError, AnalysisError) exit 3, and I/O or data-file problems
(DataFormatError, OSError) exit 4.
"""


class KoopcreditError(Exception):
    """Base class for all package-specific errors."""


class ShapeError(KoopcreditError, ValueError):
    """Operands have incompatible dimensions or malformed content."""


class NumericalError(KoopcreditError, ArithmeticError):
    """A numerical routine failed: non-convergence, rank failure, or
    non-finite data where finite values are required."""


class ModelFormatError(KoopcreditError, ValueError):
    """A model file is syntactically or structurally invalid."""


class DataFormatError(KoopcreditError, ValueError):
    """A dataset file is malformed (bad magic number, truncation)."""


class ConfigError(KoopcreditError, ValueError):
    """An analysis configuration is missing, malformed, or inconsistent."""


class AnalysisError(KoopcreditError, RuntimeError):
    """An analysis pipeline stage failed; the message names the block
    and repeat in which the failure occurred."""
