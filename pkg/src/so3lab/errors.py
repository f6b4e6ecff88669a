"""Exception types shared across the package."""


class So3LabError(Exception):
    """Base class for all so3lab errors."""


class NotSkewSymmetric(So3LabError):
    """vee() received a matrix whose symmetric part exceeds tolerance."""


class NotRotation(So3LabError):
    """A matrix failed the orthonormality or determinant check."""


class DegenerateMatrix(So3LabError):
    """project_to_rotation received a rank-deficient or reflected matrix."""


class InvalidPsiBound(So3LabError):
    """quadratic_bounds received psi outside (0, n1)."""


class SingularInertia(So3LabError):
    """Inertia matrix is not symmetric positive definite."""


class MissingEstimate(So3LabError):
    """Velocity-free control requested without an estimated velocity error."""


class UncertifiableScenario(So3LabError):
    """The inertia-ratio condition leaves no admissible psi_bar window."""


class NumericalBlowup(So3LabError):
    """State norm exceeded the blowup guard during integration."""

    def __init__(self, t: float):
        self.t = t
        super().__init__(f"state norm exceeded 1e12 at t={t:.6f} s")


class ConfigError(So3LabError):
    """Configuration file is malformed; carries the offending line number."""

    def __init__(self, message: str, line: int = 0):
        self.line = line
        super().__init__(message)
