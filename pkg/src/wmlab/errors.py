"""Exception hierarchy shared by all wmlab modules."""


class WmlabError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(WmlabError):
    """Invalid experiment configuration (CLI exit code 2)."""


class NumericalError(WmlabError):
    """Base class for numerical failures (CLI exit code 3)."""


class InvalidProfile(WmlabError):
    """Target geometry violates an admissibility requirement."""


class NonConvergence(NumericalError):
    """Ground-state orbit fails to connect the poles."""


class QuadratureFailure(NumericalError):
    """Green-function integrals diverge (wrong decay of the input)."""


class SingularEndpoint(NumericalError):
    """Self-similar ODE solution blows up too fast at the cone endpoint."""


class LightConeViolation(WmlabError):
    """Error field evaluated outside the backward light cone r <= t."""


class StepFailure(NumericalError):
    """Stiffness control failed while integrating an eigenfunction."""


class AmplitudeExtraction(NumericalError):
    """Oscillation window too short to read off an asymptotic amplitude."""


class LevelNotCrossed(NumericalError):
    """Inner profile never attains the equator level; no scale to extract."""


class DegenerateFit(NumericalError):
    """Exponent fit requested on a window with insufficient spread."""


class Instability(NumericalError):
    """Evolution aborted: energy grew too fast within one step."""


class Underresolved(NumericalError):
    """Evolution aborted: solution gradients exceed grid resolvability."""
