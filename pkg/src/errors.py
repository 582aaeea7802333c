"""
Exception hierarchy
---------
Every error raised on purpose by the package derives from `GdsMambaError`
and carries the exit code the command-line surface maps it to:

- 2 : configuration, contract and data errors
- 3 : dataset / checkpoint I/O errors
- 4 : numerical failures (non-finite values)
"""
from typing import Optional


class GdsMambaError(Exception):
    """Base class for all package errors"""

    exit_code = 1


class ConfigurationError(GdsMambaError, ValueError):
    """Invalid configuration value or combination of values"""

    exit_code = 2


class DimensionError(ConfigurationError):
    """Tensor shapes (or config dimensions) that do not agree"""


class ContractError(GdsMambaError, ValueError):
    """A documented precondition of an operation was violated"""

    exit_code = 2


class BatchSizeError(ContractError):
    """Batch too small for the requested operation (e.g. training-mode BN)"""


class DataError(GdsMambaError, ValueError):
    """Labels, targets or splits that cannot be used"""

    exit_code = 2


class DatasetIOError(GdsMambaError, OSError):
    """Dataset or checkpoint container could not be read or written"""

    exit_code = 3


class CorruptDatasetError(DatasetIOError):
    """Container files disagree with their manifest"""


class VersionError(DatasetIOError):
    """Container written with an unknown format version"""


class NumericalError(GdsMambaError, ArithmeticError):
    """NaN or Inf produced where finite values are required"""

    exit_code = 4

    def __init__(self, message: str, epoch: Optional[int] = None):
        super().__init__(message)
        self.epoch = epoch
