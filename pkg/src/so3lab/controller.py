"""Attitude tracking errors, PD tracking control, and the velocity-free
variant that replaces the true rate error with the observer estimate.

Desired trajectories come in two flavors: a fixed setpoint and a 3-2-1
Euler-angle family with analytic first and second derivatives, so the
feedforward terms carry no numerical-differentiation noise.
"""

from dataclasses import dataclass, field

import numpy as np

from . import kernels, so3
from .errors import MissingEstimate
from .observer import check_gain
from .rigid_body import InertiaSpec, RigidBodyState
from .so3 import WeightMatrix


@dataclass(frozen=True)
class AngleFunction:
    """Analytic angle family theta(t) = c0 + a_sin·sin(w_sin·t) + a_cos·cos(w_cos·t).

    Covers the constant, pure-sine and offset-cosine profiles used by
    the tracking scenarios, closed under two derivatives."""

    c0: float = 0.0
    a_sin: float = 0.0
    w_sin: float = 0.0
    a_cos: float = 0.0
    w_cos: float = 0.0

    @classmethod
    def constant(cls, c: float) -> "AngleFunction":
        return cls(c0=float(c))

    @classmethod
    def sine(cls, amplitude: float, rate: float) -> "AngleFunction":
        return cls(a_sin=float(amplitude), w_sin=float(rate))

    @classmethod
    def cosine_plus(cls, amplitude: float, rate: float, offset: float = 0.0) -> "AngleFunction":
        return cls(a_cos=float(amplitude), w_cos=float(rate), c0=float(offset))

    def coeffs(self) -> np.ndarray:
        return np.array([self.c0, self.a_sin, self.w_sin, self.a_cos, self.w_cos])

    def value(self, t: float) -> float:
        return float(kernels.angle_eval(self.coeffs(), float(t))[0])

    def d1(self, t: float) -> float:
        return float(kernels.angle_eval(self.coeffs(), float(t))[1])

    def d2(self, t: float) -> float:
        return float(kernels.angle_eval(self.coeffs(), float(t))[2])


@dataclass(frozen=True)
class SetpointTrajectory:
    """Constant desired attitude: evaluates to (R_d, 0, 0)."""

    R_d: np.ndarray
    kind: int = field(default=0, init=False)

    def __post_init__(self):
        object.__setattr__(self, "R_d", so3.check_rotation(self.R_d))

    def coeffs(self) -> np.ndarray:
        return np.zeros((3, 5))

    def rd0(self) -> np.ndarray:
        return self.R_d


@dataclass(frozen=True)
class Euler321Trajectory:
    """Desired attitude R_d(t) = Rz(alpha) Ry(beta) Rx(gamma) from three
    analytic angle profiles.

    Construction runs a finite-difference consistency check of the
    analytic Omega_d and its rate against the 3-2-1 kinematics
    Rdot_d = R_d·hat(Omega_d)."""

    alpha: AngleFunction
    beta: AngleFunction
    gamma: AngleFunction
    kind: int = field(default=1, init=False)

    def __post_init__(self):
        h = 1e-5
        for t in (0.0, 0.7, 1.3):
            rd, od, dod = evaluate_desired(self, t)
            rp, op, _ = evaluate_desired(self, t + h)
            rm, om, _ = evaluate_desired(self, t - h)
            od_fd = so3.vee(rd.T @ ((rp - rm) / (2.0 * h)), tol=1e-5)
            dod_fd = (op - om) / (2.0 * h)
            scale = 1.0 + np.linalg.norm(od) + np.linalg.norm(dod)
            if np.linalg.norm(od - od_fd) > 1e-6 * scale:
                raise ValueError("angle profiles violate the 3-2-1 kinematic identity")
            if np.linalg.norm(dod - dod_fd) > 1e-6 * scale:
                raise ValueError("analytic rate derivative fails finite-difference check")

    def coeffs(self) -> np.ndarray:
        return np.stack([self.alpha.coeffs(), self.beta.coeffs(), self.gamma.coeffs()])

    def rd0(self) -> np.ndarray:
        return np.eye(3)


def evaluate_desired(traj, t: float):
    """Desired attitude, body angular velocity and its rate at time t."""
    rd, od, dod = kernels.eval_desired(traj.kind, traj.coeffs(), traj.rd0(), float(t))
    return rd, od, dod


def max_desired_rate(traj, t_final: float, h: float) -> float:
    """sup_t ||Omega_d(t)|| over [0, t_final], by dense sampling at ten
    times the integration rate."""
    if traj.kind == 0:
        return 0.0
    ts = np.arange(0.0, t_final + h / 10.0, h / 10.0)
    best = 0.0
    coeffs = traj.coeffs()
    rd0 = traj.rd0()
    for t in ts:
        _, od, _ = kernels.eval_desired(traj.kind, coeffs, rd0, float(t))
        n = float(np.linalg.norm(od))
        if n > best:
            best = n
    return best


@dataclass(frozen=True)
class TrackingErrors:
    """Tracking error variables at one instant.

    Q = RᵀR_d; Psi and e_R are the weighted attitude error and its
    error vector; e_Omega = Omega − Q·Omega_d is the true rate error
    and e_Omega_bar its observer-based counterpart. Either rate error
    may be absent: the velocity-free control path carries only
    e_Omega_bar."""

    Q: np.ndarray
    Psi: float
    e_R: np.ndarray
    e_Omega: np.ndarray = None
    e_Omega_bar: np.ndarray = None


@dataclass(frozen=True)
class ControllerGains:
    """Attitude and rate feedback gains, positive scalars or SPD matrices."""

    k_R: object
    k_Omega: object

    def __post_init__(self):
        object.__setattr__(self, "k_R", check_gain("k_R", self.k_R))
        object.__setattr__(self, "k_Omega", check_gain("k_Omega", self.k_Omega))

    @property
    def is_scalar(self) -> bool:
        return isinstance(self.k_R, float) and isinstance(self.k_Omega, float)


def compute_tracking_errors(
    W: WeightMatrix,
    body: RigidBodyState,
    R_d,
    Omega_d,
    Omega_bar=None,
) -> TrackingErrors:
    """Tracking errors of the body state against (R_d, Omega_d).

    Omega_bar, when given, is the body-frame estimated rate RᵀJ⁻¹p̄ and
    fills e_Omega_bar = Omega_bar − Q·Omega_d."""
    q = body.R.T @ np.asarray(R_d, dtype=np.float64)
    psi = so3.error_function(W, q)
    e_r = so3.tracking_error_vector(W, q)
    q_od = q @ np.asarray(Omega_d, dtype=np.float64)
    e_om = body.Omega - q_od
    e_om_bar = None
    if Omega_bar is not None:
        e_om_bar = np.asarray(Omega_bar, dtype=np.float64) - q_od
    return TrackingErrors(Q=q, Psi=psi, e_R=e_r, e_Omega=e_om, e_Omega_bar=e_om_bar)


def chi_vector(inertia: InertiaSpec, e_Omega, Q, Omega_d) -> np.ndarray:
    """chi = J0·e_Omega + (2·J0 − tr[J0]·I)·Q·Omega_d, the gyroscopic
    coefficient in the rate error dynamics."""
    e_Omega = np.asarray(e_Omega, dtype=np.float64)
    q_od = np.asarray(Q, dtype=np.float64) @ np.asarray(Omega_d, dtype=np.float64)
    j0 = inertia.J0
    return j0 @ e_Omega + (2.0 * j0 - np.trace(j0) * np.eye(3)) @ q_od


def chi_bound_constant(inertia: InertiaSpec, Omega_max: float) -> float:
    """B1* = max_i |2·lam_i − tr J0| · Omega_max, the trajectory part of
    the bound ||chi|| ≤ lam_max·||e_Omega|| + B1*."""
    eig = so3.sym_eigvals3(inertia.J0)
    return float(np.max(np.abs(2.0 * eig - np.trace(inertia.J0))) * Omega_max)


def _control_law(inertia: InertiaSpec, gains: ControllerGains, e_r, e_vel, Q, Omega_d, dOmega_d):
    q_od = Q @ np.asarray(Omega_d, dtype=np.float64)
    j0 = inertia.J0
    ff = j0 @ (Q @ np.asarray(dOmega_d, dtype=np.float64)) + np.cross(q_od, j0 @ q_od)
    if isinstance(gains.k_R, float):
        u = -gains.k_R * e_r
    else:
        u = -(gains.k_R @ e_r)
    if isinstance(gains.k_Omega, float):
        u = u - gains.k_Omega * e_vel
    else:
        u = u - gains.k_Omega @ e_vel
    return u + ff


def pd_control(
    inertia: InertiaSpec,
    gains: ControllerGains,
    errors: TrackingErrors,
    Omega_d,
    dOmega_d,
) -> np.ndarray:
    """Full-state tracking control
    u = −K_R e_R − K_Ω e_Omega + J0·Q·dOmega_d + hat(Q·Omega_d)·J0·Q·Omega_d."""
    if errors.e_Omega is None:
        raise MissingEstimate("full-state control requires the true rate error")
    return _control_law(inertia, gains, errors.e_R, errors.e_Omega, errors.Q, Omega_d, dOmega_d)


def velocity_free_control(
    inertia: InertiaSpec,
    gains: ControllerGains,
    errors: TrackingErrors,
    Omega_d,
    dOmega_d,
) -> np.ndarray:
    """Velocity-free tracking control: the same law with the estimated
    rate error e_Omega_bar in place of e_Omega. Never reads e_Omega."""
    if errors.e_Omega_bar is None:
        raise MissingEstimate("velocity-free control requires an attached observer estimate")
    return _control_law(inertia, gains, errors.e_R, errors.e_Omega_bar, errors.Q, Omega_d, dOmega_d)
