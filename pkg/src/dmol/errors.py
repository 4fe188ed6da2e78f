"""Exception hierarchy shared by the solver modules."""


class DMOLError(Exception):
    """Base class for all package errors."""


class ConfigurationError(DMOLError, ValueError):
    """Invalid user input: unknown preset, bad mesh size, malformed config."""


class DomainError(DMOLError, ValueError):
    """A point lies outside the angular range of a boundary shape."""


class InvalidMaterial(DMOLError, ValueError):
    """An elastic tensor is not symmetric positive definite."""


class AssemblyError(DMOLError):
    """Material sectors do not line up with the angular mesh."""


class NumericalError(DMOLError, ArithmeticError):
    """A numerical kernel failed (eigensolver, linear solve, ...)."""


class SpectralClassificationError(NumericalError):
    """The retained eigenvalue count does not match the expected count."""


class IllConditionedModalBasis(NumericalError):
    """The modal matrix EI(0) is numerically singular."""


class DegenerateMaterial(DMOLError, ValueError):
    """The characteristic quartic of a tensor has repeated roots."""


class OracleFailure(NumericalError):
    """The finite-difference reference solver could not produce a solution."""
