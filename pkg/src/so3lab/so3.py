"""SO(3)/so(3) primitives and the weighted attitude-error machinery.

Rotations are plain (3, 3) float64 ndarrays validated at the boundaries
(construction of scenarios, parser output, integrator reprojection),
never wrapped. All error functions take the diagonal weight through
WeightMatrix, which also carries the derived bound constants n1..n5.
"""

from dataclasses import dataclass

import numpy as np

from . import kernels
from .errors import DegenerateMatrix, InvalidPsiBound, NotRotation, NotSkewSymmetric

ROTATION_TOL = 1e-9
SMALL_ANGLE = 1e-8


def _as_mat3(m) -> np.ndarray:
    a = np.asarray(m, dtype=np.float64)
    if a.shape != (3, 3):
        raise ValueError(f"expected a 3x3 matrix, got shape {a.shape}")
    return a


def _as_vec3(v) -> np.ndarray:
    a = np.asarray(v, dtype=np.float64)
    if a.shape != (3,):
        raise ValueError(f"expected a 3-vector, got shape {a.shape}")
    return a


def hat(v) -> np.ndarray:
    """Map a 3-vector to the skew matrix with hat(v) w = v x w."""
    return kernels.hat3(_as_vec3(v))


def vee(m, tol: float = 1e-9) -> np.ndarray:
    """Inverse of hat. Rejects matrices whose symmetric part exceeds tol."""
    a = _as_mat3(m)
    sym = 0.5 * (a + a.T)
    if np.max(np.abs(sym)) > tol:
        raise NotSkewSymmetric(
            f"symmetric part has magnitude {np.max(np.abs(sym)):.3e} > {tol:.1e}")
    return np.array([0.5 * (a[2, 1] - a[1, 2]),
                     0.5 * (a[0, 2] - a[2, 0]),
                     0.5 * (a[1, 0] - a[0, 1])])


def exp_so3(v) -> np.ndarray:
    """Rodrigues exponential map; series branch below theta = 1e-8."""
    return kernels.exp_so3_k(_as_vec3(v))


def is_rotation(m, tol: float = ROTATION_TOL) -> bool:
    a = _as_mat3(m)
    return (kernels.ortho_defect(a) <= tol
            and abs(kernels.det3(a) - 1.0) <= tol)


def check_rotation(m, tol: float = ROTATION_TOL) -> np.ndarray:
    a = _as_mat3(m)
    defect = kernels.ortho_defect(a)
    d = kernels.det3(a)
    if defect > tol or abs(d - 1.0) > tol:
        raise NotRotation(
            f"orthogonality defect {defect:.3e}, det {d:.12f} (tol {tol:.1e})")
    return a


def project_to_rotation(m) -> np.ndarray:
    """Nearest rotation in the Frobenius sense (orthogonal polar factor).

    Newton iteration X <- (X + X^-T)/2; requires det(m) > 0."""
    a = _as_mat3(m)
    if kernels.det3(a) <= 0.0:
        raise DegenerateMatrix(f"determinant {kernels.det3(a):.3e} is not positive")
    r, ok = kernels.polar_newton(a, 1e-15, 30)
    if not ok:
        raise DegenerateMatrix("polar iteration failed; matrix is near rank-deficient")
    return r


def euler321_rotation(alpha: float, beta: float, gamma: float) -> np.ndarray:
    """R_z(alpha) R_y(beta) R_x(gamma), the 3-2-1 yaw-pitch-roll composition."""
    e1 = np.array([1.0, 0.0, 0.0])
    e2 = np.array([0.0, 1.0, 0.0])
    e3 = np.array([0.0, 0.0, 1.0])
    return exp_so3(alpha * e3) @ exp_so3(beta * e2) @ exp_so3(gamma * e1)


def random_rotation(rng: np.random.Generator) -> np.ndarray:
    """Haar-uniform rotation from a normalized Gaussian quaternion."""
    q = rng.normal(size=4)
    q /= np.linalg.norm(q)
    w, x, y, z = q
    return np.array([
        [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
        [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
        [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
    ])


def sym_eigvals3(s) -> np.ndarray:
    """Eigenvalues of a symmetric 3x3 matrix, ascending, closed form."""
    a = _as_mat3(s)
    p1 = a[0, 1] ** 2 + a[0, 2] ** 2 + a[1, 2] ** 2
    q = (a[0, 0] + a[1, 1] + a[2, 2]) / 3.0
    if p1 == 0.0:
        return np.sort(np.diagonal(a))
    p2 = (a[0, 0] - q) ** 2 + (a[1, 1] - q) ** 2 + (a[2, 2] - q) ** 2 + 2.0 * p1
    p = np.sqrt(p2 / 6.0)
    b = (a - q * np.eye(3)) / p
    r = np.clip(kernels.det3(b) / 2.0, -1.0, 1.0)
    phi = np.arccos(r) / 3.0
    hi = q + 2.0 * p * np.cos(phi)
    lo = q + 2.0 * p * np.cos(phi + 2.0 * np.pi / 3.0)
    mid = 3.0 * q - hi - lo
    return np.array([lo, mid, hi])


def spectral_norm(m) -> float:
    """Matrix 2-norm via the closed-form eigenvalues of M^T M."""
    a = _as_mat3(m)
    return float(np.sqrt(max(sym_eigvals3(a.T @ a)[2], 0.0)))


@dataclass(frozen=True)
class WeightMatrix:
    """Diagonal weights diag(eps1, eps2, eps3) with the derived constants

    n1 = min pair sum          n4 = max pair sum
    n2 = max squared pair difference
    n3 = max squared pair sum  n5 = min squared pair sum

    The entries must be distinct and positive for the error vector to
    vanish only on {I, D1, D2, D3}.
    """

    eps: np.ndarray

    def __post_init__(self):
        e = np.asarray(self.eps, dtype=np.float64).copy()
        if e.shape != (3,):
            raise ValueError(f"expected 3 weights, got shape {e.shape}")
        if not np.all(np.isfinite(e)) or np.any(e <= 0.0):
            raise ValueError("weights must be finite and positive")
        if e[0] == e[1] or e[1] == e[2] or e[0] == e[2]:
            raise ValueError("weights must be pairwise distinct")
        e.setflags(write=False)
        object.__setattr__(self, "eps", e)

    @classmethod
    def from_values(cls, e1: float, e2: float, e3: float) -> "WeightMatrix":
        return cls(np.array([e1, e2, e3]))

    @property
    def matrix(self) -> np.ndarray:
        return np.diag(self.eps)

    @property
    def trace(self) -> float:
        return float(self.eps.sum())

    @property
    def norm(self) -> float:
        # spectral norm of a positive diagonal matrix
        return float(self.eps.max())

    def _pair_sums(self) -> np.ndarray:
        e = self.eps
        return np.array([e[0] + e[1], e[1] + e[2], e[2] + e[0]])

    def _pair_diffs(self) -> np.ndarray:
        e = self.eps
        return np.array([e[0] - e[1], e[1] - e[2], e[2] - e[0]])

    @property
    def n1(self) -> float:
        return float(self._pair_sums().min())

    @property
    def n2(self) -> float:
        return float((self._pair_diffs() ** 2).max())

    @property
    def n3(self) -> float:
        return float((self._pair_sums() ** 2).max())

    @property
    def n4(self) -> float:
        return float(self._pair_sums().max())

    @property
    def n5(self) -> float:
        return float((self._pair_sums() ** 2).min())


def error_function(W: WeightMatrix, Q) -> float:
    """Attitude error 0.5 tr[W (I - Q)]; zero exactly at Q = I."""
    return float(kernels.psi_weighted(_as_mat3(Q), W.eps))


def estimation_error_vector(W: WeightMatrix, Q_E) -> np.ndarray:
    """e = 0.5 (Q W - W Q^T)^vee, the estimation-side error vector."""
    return kernels.est_error_vec(_as_mat3(Q_E), W.eps)


def tracking_error_vector(W: WeightMatrix, Q) -> np.ndarray:
    """e = 0.5 (W Q^T - Q W)^vee, the tracking-side error vector.

    Equals the exact negation of estimation_error_vector at the same Q:
    the two operands swap and negate term by term."""
    return -kernels.est_error_vec(_as_mat3(Q), W.eps)


def _error_jacobian(W: WeightMatrix, Q) -> np.ndarray:
    q = _as_mat3(Q)
    qg = q @ W.matrix
    return 0.5 * (np.trace(qg) * np.eye(3) - qg)


def E_o_matrix(W: WeightMatrix, Q_E) -> np.ndarray:
    """Jacobian of the estimation error vector: d/dt e = E_o omega_E.

    Computed as 0.5 (tr[Q_E G_E] I - Q_E G_E)."""
    return _error_jacobian(W, Q_E)


def E_c_matrix(W: WeightMatrix, Q) -> np.ndarray:
    """Jacobian of the tracking error vector: d/dt e_R = E_c e_Omega."""
    return _error_jacobian(W, Q)


@dataclass(frozen=True)
class QuadraticBounds:
    lower: float
    upper: float
    psi: float
    holds: bool


def quadratic_bounds(W: WeightMatrix, psi_bound: float, Q) -> QuadraticBounds:
    """Locally quadratic sandwich of the error function.

    lower = n1/(n2+n3) |e|^2 holds globally; the upper bound
    n1 n4/(n5 (n1 - psi_bound)) |e|^2 applies whenever Psi < psi_bound,
    which must satisfy 0 < psi_bound < n1."""
    if not (0.0 < psi_bound < W.n1):
        raise InvalidPsiBound(f"need 0 < psi_bound < n1 = {W.n1}, got {psi_bound}")
    e = estimation_error_vector(W, Q)
    ee = float(e @ e)
    psi = error_function(W, Q)
    lower = W.n1 / (W.n2 + W.n3) * ee
    upper = W.n1 * W.n4 / (W.n5 * (W.n1 - psi_bound)) * ee
    holds = (lower <= psi) and (psi >= psi_bound or psi <= upper)
    return QuadraticBounds(lower, upper, psi, holds)
