"""Exception hierarchy.

Every error raised on purpose by the package derives from
:class:`RomBuckleError`; the CLI maps each family to its own exit code.
"""


class RomBuckleError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InvalidGeometryError(RomBuckleError, ValueError):
    exit_code = 4


class ConfigError(RomBuckleError, ValueError):
    exit_code = 3


class IncompressibleLimitError(RomBuckleError, ValueError):
    exit_code = 3


class InvalidFunctionalError(RomBuckleError, ValueError):
    exit_code = 3


class InvalidPlanError(RomBuckleError, ValueError):
    exit_code = 3


class InadmissibleStateError(RomBuckleError, ArithmeticError):
    """A deformation with ``J <= 0`` reached a model that cannot take it."""

    exit_code = 5

    def __init__(self, message, element=None):
        super().__init__(message)
        self.element = element


class NonConvergenceError(RomBuckleError, ArithmeticError):
    exit_code = 5

    def __init__(self, message, residual=None, history=None):
        super().__init__(message)
        self.residual = residual
        self.history = history or []


class SingularJacobianError(RomBuckleError, ArithmeticError):
    exit_code = 5


class SweepError(RomBuckleError):
    exit_code = 5

    def __init__(self, message, mu=None):
        super().__init__(message)
        self.mu = mu


class EmptyBasisError(RomBuckleError, ValueError):
    exit_code = 6


class DegenerateSnapshotError(RomBuckleError, ValueError):
    exit_code = 6


class StaleArtifactError(RomBuckleError):
    exit_code = 7


class GridMismatchError(RomBuckleError, ValueError):
    exit_code = 8
