"""Rigid-body attitude dynamics in body-frame and inertial-frame form.

The canonical simulation state is (R, Omega) in the body frame, where
J0 is constant; the inertial momentum form is provided as an equivalent
view with J = R J0 R^T and never inverts J at runtime (J^-1 comes from
the precomputed J0^-1 by congruence).
"""

from dataclasses import dataclass

import numpy as np

from . import so3
from .errors import SingularInertia


@dataclass(frozen=True)
class InertiaSpec:
    """Symmetric positive definite body inertia with cached inverse and
    eigenvalue extremes lam_min, lam_max."""

    J0: np.ndarray

    def __post_init__(self):
        j = np.asarray(self.J0, dtype=np.float64).copy()
        if j.shape != (3, 3):
            raise SingularInertia(f"expected 3x3 inertia, got shape {j.shape}")
        if np.max(np.abs(j - j.T)) > 1e-12:
            raise SingularInertia("inertia matrix must be symmetric")
        eig = so3.sym_eigvals3(j)
        if eig[0] <= 0.0:
            raise SingularInertia(f"inertia eigenvalues {eig} are not all positive")
        j.setflags(write=False)
        inv = np.linalg.inv(j)
        inv.setflags(write=False)
        object.__setattr__(self, "J0", j)
        object.__setattr__(self, "_J0_inv", inv)
        object.__setattr__(self, "_eig", eig)

    @classmethod
    def diagonal(cls, a: float, b: float, c: float) -> "InertiaSpec":
        return cls(np.diag([float(a), float(b), float(c)]))

    @property
    def J0_inv(self) -> np.ndarray:
        return self._J0_inv

    @property
    def lam_min(self) -> float:
        return float(self._eig[0])

    @property
    def lam_max(self) -> float:
        return float(self._eig[2])

    def J(self, R) -> np.ndarray:
        # inertia seen in the inertial frame
        return R @ self.J0 @ R.T

    def J_inv(self, R) -> np.ndarray:
        return R @ self.J0_inv @ R.T


@dataclass(frozen=True)
class RigidBodyState:
    """Attitude R (body to inertial) and body angular velocity Omega."""

    R: np.ndarray
    Omega: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "R", so3.check_rotation(self.R))
        object.__setattr__(self, "Omega", np.asarray(self.Omega, dtype=np.float64))

    def omega(self) -> np.ndarray:
        # inertial angular velocity
        return self.R @ self.Omega

    def momentum(self, inertia: InertiaSpec) -> np.ndarray:
        # inertial angular momentum J omega = R J0 Omega
        return self.R @ (inertia.J0 @ self.Omega)


def body_frame_derivative(inertia: InertiaSpec, state: RigidBodyState, u):
    """Euler equations in the body frame.

    Returns the kinematic tangent Omega (Rdot = R hat(Omega)) and
    Omegadot = J0^-1 (u - Omega x J0 Omega)."""
    om = state.Omega
    u = np.asarray(u, dtype=np.float64)
    dom = inertia.J0_inv @ (u - np.cross(om, inertia.J0 @ om))
    return om.copy(), dom


def inertial_frame_derivative(inertia: InertiaSpec, R, p, tau):
    """Momentum form d/dt(J omega) = tau with J = R J0 R^T.

    Returns the inertial kinematic tangent omega = J^-1 p
    (Rdot = hat(omega) R) and pdot = tau."""
    R = np.asarray(R, dtype=np.float64)
    p = np.asarray(p, dtype=np.float64)
    omega = inertia.J_inv(R) @ p
    return omega, np.asarray(tau, dtype=np.float64).copy()
