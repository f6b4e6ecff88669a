"""Velocity-free angular-velocity observer.

The observer maintains an estimate frame R̄ and an estimated inertial
momentum p̄ = J·ω̄ and is driven only by the measured attitude R and the
applied inertial torque τ; it never touches the true angular velocity.
The attitude estimate error is Q_E = R R̄ᵀ, which converges to the
identity from almost every initial condition.
"""

from dataclasses import dataclass

import numpy as np

from . import so3
from .rigid_body import InertiaSpec, RigidBodyState
from .so3 import WeightMatrix


def check_gain(name: str, value):
    """Normalize a positive scalar or SPD 3x3 gain.

    Returns a float for scalars and a read-only symmetric positive
    definite array otherwise."""
    arr = np.asarray(value, dtype=np.float64)
    if arr.ndim == 0:
        g = float(arr)
        if not g > 0.0:
            raise ValueError(f"gain {name} must be positive, got {g}")
        return g
    if arr.shape != (3, 3):
        raise ValueError(f"gain {name} must be a scalar or 3x3 matrix")
    if np.max(np.abs(arr - arr.T)) > 1e-12:
        raise ValueError(f"matrix gain {name} must be symmetric")
    if so3.sym_eigvals3(arr)[0] <= 0.0:
        raise ValueError(f"matrix gain {name} must be positive definite")
    arr = arr.copy()
    arr.setflags(write=False)
    return arr


def gain_matrix(value) -> np.ndarray:
    """Matrix form of a normalized gain (scalar·I or the matrix itself)."""
    if isinstance(value, float):
        return value * np.eye(3)
    return value


def gain_scalar_reduction(value) -> float:
    """Scalar surrogate for Lyapunov bookkeeping: the gain itself when
    scalar, else the geometric mean of the eigenvalues det(K)^(1/3)."""
    if isinstance(value, float):
        return value
    return float(np.linalg.det(value) ** (1.0 / 3.0))


@dataclass(frozen=True)
class ObserverGains:
    """Observer gains, each a positive scalar or an SPD matrix."""

    k_E: object
    k_v: object

    def __post_init__(self):
        object.__setattr__(self, "k_E", check_gain("k_E", self.k_E))
        object.__setattr__(self, "k_v", check_gain("k_v", self.k_v))

    @property
    def is_scalar(self) -> bool:
        return isinstance(self.k_E, float) and isinstance(self.k_v, float)


@dataclass(frozen=True)
class ObserverState:
    """Estimate-frame attitude R̄ (paired with R through Q_E = R R̄ᵀ) and
    estimated inertial momentum p̄ = J ω̄."""

    Rbar: np.ndarray
    pbar: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "Rbar", so3.check_rotation(self.Rbar))
        object.__setattr__(self, "pbar", np.asarray(self.pbar, dtype=np.float64))

    def omega_bar(self, inertia: InertiaSpec, R_meas) -> np.ndarray:
        # estimated inertial angular velocity, recovered through the
        # measured attitude: ω̄ = J⁻¹ p̄ with J = R J₀ Rᵀ
        return inertia.J_inv(R_meas) @ self.pbar


@dataclass(frozen=True)
class EstimateErrors:
    """Estimate error variables.

    Q_E = R R̄ᵀ; Ψ_E is the weighted attitude error of Q_E; e_RE its
    error vector; e_wE = Jω − Jω̄ the momentum estimate error; and
    ω_E = ω − ω̄ − K_v J⁻¹ e_RE the velocity mismatch that drives Q̇_E.
    """

    Q_E: np.ndarray
    Psi_E: float
    e_RE: np.ndarray
    e_wE: np.ndarray
    omega_E: np.ndarray


def compute_estimate_errors(
    inertia: InertiaSpec,
    W: WeightMatrix,
    gains: ObserverGains,
    body: RigidBodyState,
    obs: ObserverState,
) -> EstimateErrors:
    q_e = body.R @ obs.Rbar.T
    psi_e = so3.error_function(W, q_e)
    e_re = so3.estimation_error_vector(W, q_e)
    e_we = body.momentum(inertia) - obs.pbar
    j_inv = inertia.J_inv(body.R)
    omega_bar = j_inv @ obs.pbar
    if isinstance(gains.k_v, float):
        corr = gains.k_v * (j_inv @ e_re)
    else:
        corr = gains.k_v @ (j_inv @ e_re)
    omega_e = body.omega() - omega_bar - corr
    return EstimateErrors(Q_E=q_e, Psi_E=psi_e, e_RE=e_re, e_wE=e_we, omega_E=omega_e)


def observer_derivative(
    inertia: InertiaSpec,
    W: WeightMatrix,
    gains: ObserverGains,
    R_meas,
    tau,
    obs: ObserverState,
):
    """Observer ODE right-hand side from the measured attitude and the
    applied inertial torque alone.

    Returns (η, ṗ̄) with Ṙ̄ = hat(η)·R̄ and
    ṗ̄ = τ + ½ K_E J⁻¹ e_RE, η = Q_Eᵀ(ω̄ + K_v J⁻¹ e_RE)."""
    R_meas = so3.check_rotation(R_meas)
    tau = np.asarray(tau, dtype=np.float64)
    q_e = R_meas @ obs.Rbar.T
    e_re = so3.estimation_error_vector(W, q_e)
    j_inv = inertia.J_inv(R_meas)
    jinv_ere = j_inv @ e_re
    if isinstance(gains.k_E, float):
        pbar_dot = tau + 0.5 * gains.k_E * jinv_ere
    else:
        pbar_dot = tau + 0.5 * (gains.k_E @ jinv_ere)
    omega_bar = j_inv @ obs.pbar
    if isinstance(gains.k_v, float):
        eta = q_e.T @ (omega_bar + gains.k_v * jinv_ere)
    else:
        eta = q_e.T @ (omega_bar + gains.k_v @ jinv_ere)
    return eta, pbar_dot


EQUILIBRIUM_ROTATIONS = (
    np.diag([1.0, -1.0, -1.0]),
    np.diag([-1.0, 1.0, -1.0]),
    np.diag([-1.0, -1.0, 1.0]),
)
for _d in EQUILIBRIUM_ROTATIONS:
    _d.setflags(write=False)
del _d


@dataclass(frozen=True)
class EquilibriumClass:
    """Classification of an observer state: the desired equilibrium
    Q_E = I, one of the three undesired equilibria Q_E = D_i, or no
    equilibrium at all."""

    kind: str
    index: int = 0

    def __str__(self) -> str:
        if self.kind == "Undesired":
            return f"Undesired({self.index})"
        return self.kind

    @property
    def is_equilibrium(self) -> bool:
        return self.kind != "NotEquilibrium"


DESIRED = EquilibriumClass("Desired")
NOT_EQUILIBRIUM = EquilibriumClass("NotEquilibrium")


def classify_equilibrium(errors: EstimateErrors, tol: float = 1e-6) -> EquilibriumClass:
    """Match (Q_E, e_wE) against the four closed-loop equilibria.

    Uses the Frobenius norm on Q_E and the Euclidean norm on the
    momentum estimate error, both against the same tolerance."""
    if np.linalg.norm(errors.e_wE) > tol:
        return NOT_EQUILIBRIUM
    if np.linalg.norm(errors.Q_E - np.eye(3)) <= tol:
        return DESIRED
    for i, d in enumerate(EQUILIBRIUM_ROTATIONS):
        if np.linalg.norm(errors.Q_E - d) <= tol:
            return EquilibriumClass("Undesired", i + 1)
    return NOT_EQUILIBRIUM


def observer_lyapunov(W: WeightMatrix, k_E, errors: EstimateErrors) -> float:
    """Observer Lyapunov value 𝒰.

    Scalar gain: 𝒰 = e_wEᵀe_wE + k_E·Ψ_E. Matrix gain: the analogue
    k̄·(e_wEᵀ K_E⁻¹ e_wE + Ψ_E) with k̄ = det(K_E)^(1/3), which reduces
    to the scalar form when K_E = k_E·I."""
    k_E = check_gain("k_E", k_E)
    e = errors.e_wE
    if isinstance(k_E, float):
        return float(e @ e + k_E * errors.Psi_E)
    kbar = gain_scalar_reduction(k_E)
    return float(kbar * (e @ np.linalg.solve(k_E, e) + errors.Psi_E))


def chetaev_function(W: WeightMatrix, k_E, errors: EstimateErrors, i: int) -> float:
    """Chetaev-style instability witness 𝒲 = k_E·(pair sum of W
    weights for D_i) − 𝒰; zero exactly at the undesired equilibrium
    D_i and increasing along trajectories while positive."""
    if i not in (1, 2, 3):
        raise ValueError(f"equilibrium index must be 1, 2 or 3, got {i}")
    eps = W.eps
    pair = float(eps.sum() - eps[i - 1])
    k_E = check_gain("k_E", k_E)
    kbar = gain_scalar_reduction(k_E)
    return kbar * pair - observer_lyapunov(W, k_E, errors)
