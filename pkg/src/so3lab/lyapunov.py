"""Certificate machinery for the combined observer/controller loop.

Everything here is quadratic-form bookkeeping: the inertia-ratio test,
region-of-attraction inequalities, the eight 2x2 bound matrices whose
positive definiteness certifies exponential decay of the composite
Lyapunov function V = V_c + V_o, a deterministic search for the
coupling constants (c1, c2), and evaluation of V along simulation logs.

Matrix-valued gains enter certificates through their extreme
eigenvalues; every occurrence takes the side that weakens the
certificate, so a passing certificate is conservative. Trace
evaluation reduces a matrix gain to det(K)^(1/3).
"""

from dataclasses import dataclass

import numpy as np

from . import so3
from .controller import ControllerGains, chi_bound_constant
from .errors import InvalidPsiBound, UncertifiableScenario
from .observer import ObserverGains, check_gain, gain_scalar_reduction
from .rigid_body import InertiaSpec
from .so3 import WeightMatrix


def _lohi(gain):
    if isinstance(gain, float):
        return gain, gain
    eig = so3.sym_eigvals3(gain)
    return float(eig[0]), float(eig[2])


def check_inertia_ratio(inertia: InertiaSpec, G_E: WeightMatrix):
    """Sufficient separation condition lam_max/lam_min < tr[G_E]/||G_E||.

    Returns (ok, lhs, rhs). Failure does not preclude convergence; it
    only voids the certificate route."""
    lhs = inertia.lam_max / inertia.lam_min
    rhs = G_E.trace / G_E.norm
    return bool(lhs < rhs), float(lhs), float(rhs)


def psi_bar_ceiling(inertia: InertiaSpec, G_E: WeightMatrix) -> float:
    """Largest admissible estimation-error cap:
    min{n1, (tr[G_E] − (lam_max/lam_min)·||G_E||)/2}."""
    half = 0.5 * (G_E.trace - (inertia.lam_max / inertia.lam_min) * G_E.norm)
    if half <= 0.0:
        raise UncertifiableScenario(
            "inertia ratio too large for the weight matrix: "
            f"lam_max/lam_min = {inertia.lam_max / inertia.lam_min:.6g} "
            f"vs tr/norm = {G_E.trace / G_E.norm:.6g}"
        )
    return float(min(G_E.n1, half))


def check_roa(
    inertia: InertiaSpec,
    G_E: WeightMatrix,
    k_E,
    Psi_E0: float,
    e_wE0_norm: float,
    psi_bar_E: float,
):
    """Initial-condition admissibility for the certificate.

    Requires Psi_E(0) < psi_bar_E < min{n1, (tr G_E − ratio·||G_E||)/2}
    and ||e_wE(0)||^2 < k_E·(psi_bar_E − Psi_E(0)). Returns (ok,
    (attitude_margin, cap_margin, momentum_margin)) where each margin is
    the slack of the corresponding strict inequality."""
    cap = psi_bar_ceiling(inertia, G_E)
    k_lo, _ = _lohi(check_gain("k_E", k_E))
    att = psi_bar_E - Psi_E0
    top = cap - psi_bar_E
    mom = k_lo * (psi_bar_E - Psi_E0) - e_wE0_norm**2
    ok = att > 0.0 and top > 0.0 and mom > 0.0
    return bool(ok), (float(att), float(top), float(mom))


def b_constants(G: WeightMatrix, psi: float):
    """Quadratic sandwich constants for the tracking error function:
    b1·||e_R||^2 ≤ Psi ≤ b2·||e_R||^2 on {Psi < psi}."""
    if not 0.0 < psi < G.n1:
        raise InvalidPsiBound(f"psi must lie in (0, {G.n1}), got {psi}")
    b1 = G.n1 / (G.n2 + G.n3)
    b2 = G.n1 * G.n4 / (G.n5 * (G.n1 - psi))
    return float(b1), float(b2)


def error_vector_bound(W: WeightMatrix) -> float:
    """Global cap B2* = sqrt(12·p2 + 3·p3)/2 on the attitude error
    vector norm, with p2 the largest squared weight difference and p3
    the largest squared pair sum."""
    return float(0.5 * np.sqrt(12.0 * W.n2 + 3.0 * W.n3))


def worst_case_trace_bounds(G_E: WeightMatrix, psi_bar_E: float):
    """State-free bounds used in place of the trajectory scalars:
    A_E from the lowest tr[Q_E G_E] = tr G_E − 2·psi_bar_E on the trap
    region, B_E from the highest tr[Q_E G_E] = tr G_E."""
    tr_lo = G_E.trace - 2.0 * psi_bar_E
    return tr_lo, G_E.trace


def is_pd2(m) -> bool:
    """Positive definiteness of a symmetric 2x2 by leading minors."""
    return bool(m[0, 0] > 0.0 and m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0] > 0.0)


@dataclass(frozen=True)
class BoundMatrices:
    """The eight certificate matrices and their joint definiteness."""

    M1: np.ndarray
    M2: np.ndarray
    M3: np.ndarray
    M4: np.ndarray
    W1: np.ndarray
    W2: np.ndarray
    W3: np.ndarray
    W4: np.ndarray
    all_pd: bool

    def matrices(self):
        return (self.M1, self.M2, self.M3, self.M4,
                self.W1, self.W2, self.W3, self.W4)


def _sandwich_matrices(
    inertia: InertiaSpec,
    G: WeightMatrix,
    G_E: WeightMatrix,
    cgains: ControllerGains,
    ogains: ObserverGains,
    psi: float,
    psi_bar_E: float,
    c1: float,
    c2: float,
):
    lam_m, lam_M = inertia.lam_min, inertia.lam_max
    kr_lo, kr_hi = _lohi(cgains.k_R)
    ke_lo, ke_hi = _lohi(ogains.k_E)
    b1, b2 = b_constants(G, psi)
    if not 0.0 < psi_bar_E < G_E.n1:
        raise InvalidPsiBound(f"psi_bar_E must lie in (0, {G_E.n1}), got {psi_bar_E}")
    m1 = 0.5 * np.array([[lam_m, -c1 * lam_M], [-c1 * lam_M, 2.0 * b1 * kr_lo]])
    m2 = 0.5 * np.array([[lam_M, c1 * lam_M], [c1 * lam_M, 2.0 * b2 * kr_hi]])
    q_lo = G_E.n1 / (G_E.n2 + G_E.n3)
    q_hi = G_E.n1 * G_E.n4 / (G_E.n5 * (G_E.n1 - psi_bar_E))
    m3 = 0.5 * np.array([[2.0 * ke_lo * q_lo, -c2], [-c2, 2.0]])
    m4 = 0.5 * np.array([[2.0 * ke_hi * q_hi, c2], [c2, 2.0]])
    return m1, m2, m3, m4


def bound_matrices(
    inertia: InertiaSpec,
    G: WeightMatrix,
    G_E: WeightMatrix,
    cgains: ControllerGains,
    ogains: ObserverGains,
    psi: float,
    psi_bar_E: float,
    c1: float,
    c2: float,
    Omega_max: float,
) -> BoundMatrices:
    """Evaluate all eight certificate matrices.

    M1/M3 (M2/M4) bound the composite Lyapunov function from below
    (above); W1..W4 bound its decay rate. all_pd=True certifies
    exponential stability for admissible initial conditions."""
    if c1 < 0.0 or c2 < 0.0:
        raise ValueError("coupling constants must be non-negative")
    m1, m2, m3, m4 = _sandwich_matrices(
        inertia, G, G_E, cgains, ogains, psi, psi_bar_E, c1, c2)
    lam_m, lam_M = inertia.lam_min, inertia.lam_max
    kr_lo, _ = _lohi(cgains.k_R)
    kom_lo, kom_hi = _lohi(cgains.k_Omega)
    ke_lo, _ = _lohi(ogains.k_E)
    kv_lo, kv_hi = _lohi(ogains.k_v)

    b1s = chi_bound_constant(inertia, Omega_max)
    b2s = error_vector_bound(G)
    b3s = kom_lo - 0.5 * c1 * lam_M * (np.sqrt(2.0) * G.trace + b2s)
    tr_lo, tr_hi = worst_case_trace_bounds(G_E, psi_bar_E)
    a_e = tr_lo * lam_m - G_E.norm * lam_M
    b_e = tr_hi + G_E.norm

    w1 = np.array([
        [0.5 * b3s, 0.5 * c1 * (kom_hi + b1s)],
        [0.5 * c1 * (kom_hi + b1s), 0.5 * c1 * kr_lo],
    ])
    w2 = np.array([
        [0.5 * c1 * kr_lo, 0.5 * c1 * kom_hi / lam_m],
        [0.5 * c1 * kom_hi / lam_m, c2 * a_e / (6.0 * lam_M)],
    ])
    w3 = 0.5 * np.array([
        [b3s, -kom_hi / lam_m],
        [-kom_hi / lam_m, c2 * a_e / (3.0 * lam_M * lam_m)],
    ])
    w4 = (1.0 / (2.0 * lam_m)) * np.array([
        [ke_lo * (2.0 * kv_lo * lam_m - c2 * lam_M) / lam_M, -0.5 * c2 * kv_hi * b_e],
        [-0.5 * c2 * kv_hi * b_e, c2 * a_e / (3.0 * lam_M)],
    ])
    mats = (m1, m2, m3, m4, w1, w2, w3, w4)
    all_pd = all(is_pd2(m) for m in mats)
    return BoundMatrices(*mats, all_pd=all_pd)


def _c2_cap(G_E: WeightMatrix, ke_lo: float, kv_lo: float, psi_bar_E: float,
            lam_m: float, lam_M: float) -> float:
    cap = min(
        2.0 * np.sqrt(ke_lo * G_E.n1 / (G_E.n2 + G_E.n3)),
        2.0 * np.sqrt(ke_lo * G_E.n1 * G_E.n4 / (G_E.n5 * (G_E.n1 - psi_bar_E))),
        2.0 * kv_lo * lam_m / lam_M,
    )
    return float(cap)


def _c1_cap(G: WeightMatrix, inertia: InertiaSpec, kr_lo, kr_hi, kom_lo, kom_hi,
            c2: float, a_e: float, b1s: float) -> float:
    lam_m, lam_M = inertia.lam_min, inertia.lam_max
    s = np.sqrt(2.0) * G.trace + error_vector_bound(G)
    caps = [2.0 * kom_lo / (lam_M * s)]
    if a_e > 0.0:
        caps.append(c2 * kr_lo * lam_m**2 * a_e / (3.0 * kom_hi**2 * lam_M))
    caps.append(2.0 * kr_lo * kom_lo / (kr_hi * lam_M * s + 2.0 * (kom_hi + b1s) ** 2))
    return float(min(caps))


def choose_constants(
    inertia: InertiaSpec,
    G: WeightMatrix,
    G_E: WeightMatrix,
    cgains: ControllerGains,
    ogains: ObserverGains,
    psi: float,
    psi_bar_E: float,
    Omega_max: float,
):
    """Deterministic search for coupling constants (c1, c2) making all
    eight bound matrices positive definite.

    Scans geometric grids descending from the analytic caps (ten points
    per decade, twelve decades, so down to ~1e-12 of each cap) and
    returns the first certifying pair; returns None when the scenario
    admits no certificate."""
    lam_m, lam_M = inertia.lam_min, inertia.lam_max
    kr_lo, kr_hi = _lohi(cgains.k_R)
    kom_lo, kom_hi = _lohi(cgains.k_Omega)
    ke_lo, _ = _lohi(ogains.k_E)
    kv_lo, _ = _lohi(ogains.k_v)
    tr_lo, _ = worst_case_trace_bounds(G_E, psi_bar_E)
    a_e = tr_lo * lam_m - G_E.norm * lam_M
    if a_e <= 0.0:
        return None
    b1s = chi_bound_constant(inertia, Omega_max)
    c2_top = _c2_cap(G_E, ke_lo, kv_lo, psi_bar_E, lam_m, lam_M)
    for k2 in range(1, 121):
        c2 = c2_top * 10.0 ** (-k2 / 10.0)
        c1_top = _c1_cap(G, inertia, kr_lo, kr_hi, kom_lo, kom_hi, c2, a_e, b1s)
        if c1_top <= 0.0:
            continue
        for k1 in range(1, 121):
            c1 = c1_top * 10.0 ** (-k1 / 10.0)
            bm = bound_matrices(inertia, G, G_E, cgains, ogains,
                                psi, psi_bar_E, c1, c2, Omega_max)
            if bm.all_pd:
                return float(c1), float(c2)
    return None


@dataclass(frozen=True)
class SeparationCertificate:
    """Outcome of the full certificate pipeline for one scenario."""

    ratio_ok: bool
    ratio_lhs: float
    ratio_rhs: float
    psi_bar_E_max: float
    psi_bar_E: float
    psi: float
    roa_ok: bool
    roa_margins: tuple
    c1: float
    c2: float
    matrices: BoundMatrices
    all_pd: bool

    @property
    def certified(self) -> bool:
        return self.ratio_ok and self.all_pd and self.roa_ok

    def report(self):
        """Machine-greppable key=value lines."""
        lines = [
            f"ratio_lhs={self.ratio_lhs!r}",
            f"ratio_rhs={self.ratio_rhs!r}",
            f"ratio_ok={self.ratio_ok}",
        ]
        if self.ratio_ok:
            lines.append(f"psi_bar_E_max={self.psi_bar_E_max!r}")
            lines.append(f"psi_bar_E={self.psi_bar_E!r}")
            lines.append(f"psi={self.psi!r}")
            if self.c1 is not None:
                lines.append(f"c1={self.c1!r}")
                lines.append(f"c2={self.c2!r}")
            else:
                lines.append("constants=infeasible")
            lines.append(f"all_pd={self.all_pd}")
            lines.append(f"roa_ok={self.roa_ok}")
            m = self.roa_margins
            if m is not None:
                lines.append(f"roa_margin_attitude={m[0]!r}")
                lines.append(f"roa_margin_cap={m[1]!r}")
                lines.append(f"roa_margin_momentum={m[2]!r}")
        lines.append(f"certified={self.certified}")
        return lines


_PSI_BAR_FRACTIONS = (0.5, 0.25, 0.75, 0.1, 0.9, 0.05, 0.95, 0.02, 0.98, 0.01)


def build_certificate(
    inertia: InertiaSpec,
    G: WeightMatrix,
    G_E: WeightMatrix,
    cgains: ControllerGains,
    ogains: ObserverGains,
    psi: float = None,
    psi_bar_E: float = None,
    Omega_max: float = 0.0,
    Psi_E0: float = 0.0,
    e_wE0_norm: float = 0.0,
) -> SeparationCertificate:
    """Run the whole certificate pipeline.

    When psi_bar_E is not given, candidate caps across the admissible
    window above Psi_E(0) are tried in a fixed preference order and the
    first one that both certifies and admits the initial conditions is
    kept (falling back to the best partial result)."""
    if psi is None:
        psi = 0.9 * G.n1
    ratio_ok, lhs, rhs = check_inertia_ratio(inertia, G_E)
    if not ratio_ok:
        return SeparationCertificate(
            ratio_ok=False, ratio_lhs=lhs, ratio_rhs=rhs,
            psi_bar_E_max=float("nan"), psi_bar_E=float("nan"), psi=psi,
            roa_ok=False, roa_margins=None, c1=None, c2=None,
            matrices=None, all_pd=False)
    cap = psi_bar_ceiling(inertia, G_E)
    if psi_bar_E is not None:
        candidates = [psi_bar_E]
    else:
        candidates = [Psi_E0 + f * (cap - Psi_E0) for f in _PSI_BAR_FRACTIONS
                      if Psi_E0 + f * (cap - Psi_E0) < cap]
    best = None
    for pbe in candidates:
        pair = choose_constants(inertia, G, G_E, cgains, ogains, psi, pbe, Omega_max)
        roa_ok, margins = check_roa(inertia, G_E, ogains.k_E, Psi_E0, e_wE0_norm, pbe)
        if pair is None:
            cert = SeparationCertificate(
                ratio_ok=True, ratio_lhs=lhs, ratio_rhs=rhs,
                psi_bar_E_max=cap, psi_bar_E=pbe, psi=psi,
                roa_ok=roa_ok, roa_margins=margins, c1=None, c2=None,
                matrices=None, all_pd=False)
        else:
            c1, c2 = pair
            bm = bound_matrices(inertia, G, G_E, cgains, ogains,
                                psi, pbe, c1, c2, Omega_max)
            cert = SeparationCertificate(
                ratio_ok=True, ratio_lhs=lhs, ratio_rhs=rhs,
                psi_bar_E_max=cap, psi_bar_E=pbe, psi=psi,
                roa_ok=roa_ok, roa_margins=margins, c1=c1, c2=c2,
                matrices=bm, all_pd=bm.all_pd)
        if cert.certified:
            return cert
        if best is None or (cert.all_pd and not best.all_pd):
            best = cert
    return best


@dataclass(frozen=True)
class LyapunovSample:
    """Composite Lyapunov bookkeeping at one logged instant."""

    t: float
    U: float
    V_c: float
    V_o: float
    V: float
    Psi: float
    Psi_E: float
    e_R_norm: float
    e_Omega_norm: float
    e_RE_norm: float
    e_wE_norm: float
    controller_sandwich_ok: bool
    observer_sandwich_ok: bool


def lyapunov_trace(log, c1: float, c2: float, psi: float = None,
                   psi_bar_E: float = None):
    """Evaluate V_c, V_o and the quadratic sandwiches along a log.

    V_c = e_Omega' J0 e_Omega / 2 + k_R Psi + c1 e_R' J0 e_Omega and
    V_o = U − c2 e_wE' e_RE. Lower sandwich bounds are checked at every
    sample; upper bounds only where the error function sits inside its
    validity cap (Psi < psi, Psi_E < psi_bar_E)."""
    sc = log.scenario
    inertia = sc.inertia
    G, G_E = sc.weights, sc.weights_E
    if psi is None:
        psi = 0.9 * G.n1
    if psi_bar_E is None:
        psi_bar_E = 0.9 * G_E.n1
    m1, m2, m3, m4 = _sandwich_matrices(
        inertia, G, G_E, sc.controller_gains, sc.observer_gains,
        psi, psi_bar_E, c1, c2)
    kbar_r = gain_scalar_reduction(sc.controller_gains.k_R)
    kbar_e = gain_scalar_reduction(sc.observer_gains.k_E)
    ke = sc.observer_gains.k_E
    j0 = inertia.J0
    samples = []
    slack = 1e-12
    # trace evaluation of Psi carries ~1e-13 absolute rounding noise once
    # the errors converge; the gain factor amplifies it, so each check gets
    # an absolute floor proportional to the reduced gain.
    floor_c = 1e-12 * kbar_r
    floor_o = 1e-12 * kbar_e
    for i in range(len(log.t)):
        e_r = log.e_R[i]
        e_om = log.e_Omega[i]
        e_re = log.e_RE[i]
        e_we = log.e_wE[i]
        psi_i = float(log.Psi[i])
        psie_i = float(log.Psi_E[i])
        v_c = float(0.5 * e_om @ (j0 @ e_om) + kbar_r * psi_i + c1 * e_r @ (j0 @ e_om))
        if isinstance(ke, float):
            u = float(e_we @ e_we + ke * psie_i)
        else:
            u = float(kbar_e * (e_we @ np.linalg.solve(ke, e_we) + psie_i))
        v_o = float(u - c2 * e_we @ e_re)
        alpha = np.array([np.linalg.norm(e_om), np.linalg.norm(e_r)])
        xi = np.array([np.linalg.norm(e_re), np.linalg.norm(e_we)])
        tol_c = slack * (1.0 + abs(v_c)) + floor_c
        tol_o = slack * (1.0 + abs(v_o)) + floor_o
        c_ok = alpha @ (m1 @ alpha) <= v_c + tol_c
        if psi_i < psi:
            c_ok = c_ok and v_c <= alpha @ (m2 @ alpha) + tol_c
        o_ok = xi @ (m3 @ xi) <= v_o + tol_o
        if psie_i < psi_bar_E:
            o_ok = o_ok and v_o <= xi @ (m4 @ xi) + tol_o
        samples.append(LyapunovSample(
            t=float(log.t[i]), U=u, V_c=v_c, V_o=v_o, V=v_c + v_o,
            Psi=psi_i, Psi_E=psie_i,
            e_R_norm=float(alpha[1]), e_Omega_norm=float(alpha[0]),
            e_RE_norm=float(xi[0]), e_wE_norm=float(xi[1]),
            controller_sandwich_ok=bool(c_ok), observer_sandwich_ok=bool(o_ok)))
    return samples
