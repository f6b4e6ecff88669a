"""Hot numerical kernels: fixed-size 3x3 routines and the fused Lie-group
RK4 integration loop for the plant/observer/controller system.

Everything here works on plain float64 ndarrays and scalar ints so the
whole module compiles under numba when SO3LAB_JIT is enabled; with the
flag off the same functions run as ordinary Python. Keep Python objects
(dataclasses, exceptions, dicts) out of this file.

Conventions:
  - R maps body to inertial, Rdot = R*hat(Omega).
  - Rbar evolves on the left, Rbardot = hat(eta)*Rbar.
  - Attitude updates go through the exponential map; step coordinates
    use the inverse right/left trivialized tangent (dexpinv) truncated
    at the double commutator, which preserves fourth order.
  - mode: 0 = full-state, 1 = velocity-free, 2 = open-loop.
  - traj_kind: 0 = setpoint (constant rd0), 1 = 3-2-1 Euler family.
"""

import numpy as np

from .backend import jit

BLOWUP_LIMIT = 1.0e12
REPROJECT_DEFECT = 1.0e-12


@jit
def mat_mul(a, b):
    c = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            s = 0.0
            for k in range(3):
                s += a[i, k] * b[k, j]
            c[i, j] = s
    return c


@jit
def mat_mul_t(a, b):
    # a @ b.T
    c = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            s = 0.0
            for k in range(3):
                s += a[i, k] * b[j, k]
            c[i, j] = s
    return c


@jit
def mat_t_mul(a, b):
    # a.T @ b
    c = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            s = 0.0
            for k in range(3):
                s += a[k, i] * b[k, j]
            c[i, j] = s
    return c


@jit
def mat_vec(a, v):
    w = np.empty(3)
    for i in range(3):
        w[i] = a[i, 0] * v[0] + a[i, 1] * v[1] + a[i, 2] * v[2]
    return w


@jit
def mat_t_vec(a, v):
    w = np.empty(3)
    for i in range(3):
        w[i] = a[0, i] * v[0] + a[1, i] * v[1] + a[2, i] * v[2]
    return w


@jit
def cross3(a, b):
    c = np.empty(3)
    c[0] = a[1] * b[2] - a[2] * b[1]
    c[1] = a[2] * b[0] - a[0] * b[2]
    c[2] = a[0] * b[1] - a[1] * b[0]
    return c


@jit
def hat3(v):
    m = np.zeros((3, 3))
    m[0, 1] = -v[2]
    m[0, 2] = v[1]
    m[1, 0] = v[2]
    m[1, 2] = -v[0]
    m[2, 0] = -v[1]
    m[2, 1] = v[0]
    return m


@jit
def det3(m):
    plus = (m[0, 0] * m[1, 1] * m[2, 2] + m[0, 1] * m[1, 2] * m[2, 0]
            + m[0, 2] * m[1, 0] * m[2, 1])
    minus = (m[2, 0] * m[1, 1] * m[0, 2] + m[2, 1] * m[1, 2] * m[0, 0]
             + m[2, 2] * m[1, 0] * m[0, 1])
    return plus - minus


@jit
def cof3(m):
    # cofactor matrix; cof(m)/det(m) is the inverse transpose
    c = np.empty((3, 3))
    c[0, 0] = m[1, 1] * m[2, 2] - m[1, 2] * m[2, 1]
    c[0, 1] = m[1, 2] * m[2, 0] - m[1, 0] * m[2, 2]
    c[0, 2] = m[1, 0] * m[2, 1] - m[1, 1] * m[2, 0]
    c[1, 0] = m[0, 2] * m[2, 1] - m[0, 1] * m[2, 2]
    c[1, 1] = m[0, 0] * m[2, 2] - m[0, 2] * m[2, 0]
    c[1, 2] = m[0, 1] * m[2, 0] - m[0, 0] * m[2, 1]
    c[2, 0] = m[0, 1] * m[1, 2] - m[0, 2] * m[1, 1]
    c[2, 1] = m[0, 2] * m[1, 0] - m[0, 0] * m[1, 2]
    c[2, 2] = m[0, 0] * m[1, 1] - m[0, 1] * m[1, 0]
    return c


@jit
def ortho_defect(r):
    # Frobenius norm of R^T R - I
    s = 0.0
    for i in range(3):
        for j in range(3):
            g = r[0, i] * r[0, j] + r[1, i] * r[1, j] + r[2, i] * r[2, j]
            if i == j:
                g -= 1.0
            s += g * g
    return np.sqrt(s)


@jit
def polar_newton(m, tol, maxit):
    """Orthogonal polar factor by the Newton iteration X <- (X + X^-T)/2.

    Converges for any det > 0 input. Returns (factor, ok); ok is False
    when a non-positive determinant is met or the defect never reaches
    tol."""
    x = m.copy()
    for _ in range(maxit):
        d = det3(x)
        if d <= 0.0:
            return x, False
        c = cof3(x)
        xn = np.empty((3, 3))
        for i in range(3):
            for j in range(3):
                xn[i, j] = 0.5 * (x[i, j] + c[i, j] / d)
        x = xn
        if ortho_defect(x) <= tol:
            return x, True
    return x, ortho_defect(x) <= 100.0 * tol


@jit
def exp_so3_k(v):
    """Rodrigues formula; second-order series below theta = 1e-8."""
    th2 = v[0] * v[0] + v[1] * v[1] + v[2] * v[2]
    th = np.sqrt(th2)
    if th < 1e-8:
        a = 1.0 - th2 / 6.0
        b = 0.5 - th2 / 24.0
    else:
        a = np.sin(th) / th
        b = (1.0 - np.cos(th)) / th2
    k = hat3(v)
    k2 = mat_mul(k, k)
    r = np.empty((3, 3))
    for i in range(3):
        for j in range(3):
            r[i, j] = a * k[i, j] + b * k2[i, j]
        r[i, i] += 1.0
    return r


@jit
def dexpinv_right(sig, w):
    # step coordinate rate for Rdot = R hat(w), R = R0 exp(hat(sig))
    c1 = cross3(sig, w)
    c2 = cross3(sig, c1)
    out = np.empty(3)
    for i in range(3):
        out[i] = w[i] + 0.5 * c1[i] + c2[i] / 12.0
    return out


@jit
def dexpinv_left(sig, w):
    # step coordinate rate for Rdot = hat(w) R, R = exp(hat(sig)) R0
    c1 = cross3(sig, w)
    c2 = cross3(sig, c1)
    out = np.empty(3)
    for i in range(3):
        out[i] = w[i] - 0.5 * c1[i] + c2[i] / 12.0
    return out


@jit
def est_error_vec(q, eps):
    # 0.5 * vee(Q G - G Q^T) with G = diag(eps); the matrix is skew by
    # construction so the three components are read off directly
    e = np.empty(3)
    e[0] = 0.5 * (q[2, 1] * eps[1] - eps[2] * q[1, 2])
    e[1] = 0.5 * (q[0, 2] * eps[2] - eps[0] * q[2, 0])
    e[2] = 0.5 * (q[1, 0] * eps[0] - eps[1] * q[0, 1])
    return e


@jit
def psi_weighted(q, eps):
    # 0.5 tr[G (I - Q)] with G = diag(eps)
    return 0.5 * (eps[0] * (1.0 - q[0, 0]) + eps[1] * (1.0 - q[1, 1])
                  + eps[2] * (1.0 - q[2, 2]))


@jit
def angle_eval(c, t):
    # c = [c0, a_sin, w_sin, a_cos, w_cos]:
    #   theta(t) = c0 + a_sin sin(w_sin t) + a_cos cos(w_cos t)
    s = np.sin(c[2] * t)
    co = np.cos(c[2] * t)
    s2 = np.sin(c[4] * t)
    co2 = np.cos(c[4] * t)
    th = c[0] + c[1] * s + c[3] * co2
    d1 = c[1] * c[2] * co - c[3] * c[4] * s2
    d2 = -c[1] * c[2] * c[2] * s - c[3] * c[4] * c[4] * co2
    return th, d1, d2


@jit
def eval_desired(traj_kind, coeffs, rd0, t):
    """Desired attitude, angular velocity and its rate at time t.

    Setpoint (kind 0) returns (rd0, 0, 0). The Euler family (kind 1)
    composes R_d = Rz(alpha) Ry(beta) Rx(gamma) and differentiates the
    3-2-1 kinematics analytically:
      Omega_d = gd e1 + bd Rx^T e2 + ad Rx^T Ry^T e3
    with d(Rx^T)/dt = -gd hat(e1) Rx^T and d(Ry^T)/dt = -bd hat(e2) Ry^T.
    """
    if traj_kind == 0:
        return rd0.copy(), np.zeros(3), np.zeros(3)
    al, ad, add = angle_eval(coeffs[0], t)
    be, bd, bdd = angle_eval(coeffs[1], t)
    ga, gd, gdd = angle_eval(coeffs[2], t)

    ca, sa = np.cos(al), np.sin(al)
    cb, sb = np.cos(be), np.sin(be)
    cg, sg = np.cos(ga), np.sin(ga)

    rz = np.zeros((3, 3))
    rz[0, 0] = ca
    rz[0, 1] = -sa
    rz[1, 0] = sa
    rz[1, 1] = ca
    rz[2, 2] = 1.0
    ry = np.zeros((3, 3))
    ry[0, 0] = cb
    ry[0, 2] = sb
    ry[1, 1] = 1.0
    ry[2, 0] = -sb
    ry[2, 2] = cb
    rx = np.zeros((3, 3))
    rx[0, 0] = 1.0
    rx[1, 1] = cg
    rx[1, 2] = -sg
    rx[2, 1] = sg
    rx[2, 2] = cg

    rd = mat_mul(mat_mul(rz, ry), rx)

    # column vectors carried through the transposed single-axis rotations
    rxt_e2 = np.empty(3)
    rxt_e2[0] = rx[1, 0]
    rxt_e2[1] = rx[1, 1]
    rxt_e2[2] = rx[1, 2]
    ryt_e3 = np.empty(3)
    ryt_e3[0] = ry[2, 0]
    ryt_e3[1] = ry[2, 1]
    ryt_e3[2] = ry[2, 2]
    rxt_ryt_e3 = mat_t_vec(rx, ryt_e3)

    od = np.empty(3)
    for i in range(3):
        od[i] = bd * rxt_e2[i] + ad * rxt_ryt_e3[i]
    od[0] += gd

    # products of derivative factors
    e1v = np.zeros(3)
    e1v[0] = 1.0
    e2v = np.zeros(3)
    e2v[1] = 1.0
    d_rxt_e2 = -gd * cross3(e1v, rxt_e2)
    d_rxt_ryt_e3 = -gd * cross3(e1v, rxt_ryt_e3) + mat_t_vec(
        rx, -bd * cross3(e2v, ryt_e3))
    dod = np.empty(3)
    for i in range(3):
        dod[i] = (bdd * rxt_e2[i] + bd * d_rxt_e2[i]
                  + add * rxt_ryt_e3[i] + ad * d_rxt_ryt_e3[i])
    dod[0] += gdd
    return rd, od, dod


@jit
def stage_rates(mode, t, r0, rb0, a, om, b, pb,
                j0, j0inv, eps_g, eps_ge, kr, kom, ke, kv,
                traj_kind, coeffs, rd0, tau_c):
    """Derivatives of the RK stage variables (a, Omega, b, pbar).

    a and b are the exponential step coordinates of R and Rbar relative
    to the step-start attitudes r0, rb0. The observer block reads only
    the measured attitude r and the inertial moment tau = r u.
    """
    r = mat_mul(r0, exp_so3_k(a))
    rb = mat_mul(exp_so3_k(b), rb0)
    jinv = mat_mul_t(mat_mul(r, j0inv), r)

    if mode == 2:
        u = mat_t_vec(r, tau_c)
    else:
        rd, od, dod = eval_desired(traj_kind, coeffs, rd0, t)
        q = mat_t_mul(r, rd)
        e_r = -est_error_vec(q, eps_g)
        qod = mat_vec(q, od)
        if mode == 0:
            evel = om - qod
        else:
            omb = mat_vec(jinv, pb)
            evel = mat_t_vec(r, omb) - qod
        ff = mat_vec(j0, mat_vec(q, dod)) + cross3(qod, mat_vec(j0, qod))
        u = -mat_vec(kr, e_r) - mat_vec(kom, evel) + ff

    dom = mat_vec(j0inv, u - cross3(om, mat_vec(j0, om)))
    da = dexpinv_right(a, om)

    tau = mat_vec(r, u)
    qe = mat_mul_t(r, rb)
    e_re = est_error_vec(qe, eps_ge)
    jinv_ere = mat_vec(jinv, e_re)
    dpb = tau + 0.5 * mat_vec(ke, jinv_ere)
    omb_o = mat_vec(jinv, pb)
    eta = mat_t_vec(qe, omb_o + mat_vec(kv, jinv_ere))
    db = dexpinv_left(b, eta)
    return da, dom, db, dpb, u


@jit
def rk4_step(mode, t, h, r, om, rb, pb,
             j0, j0inv, eps_g, eps_ge, kr, kom, ke, kv,
             traj_kind, coeffs, rd0, tau_c):
    """One classical RK4 step in exponential coordinates.

    Returns the advanced state, the stage-1 control (the control at the
    pre-step state), and reprojection flags for R and Rbar."""
    z = np.zeros(3)
    hh = 0.5 * h
    da1, dom1, db1, dpb1, u1 = stage_rates(
        mode, t, r, rb, z, om, z, pb,
        j0, j0inv, eps_g, eps_ge, kr, kom, ke, kv, traj_kind, coeffs, rd0, tau_c)
    da2, dom2, db2, dpb2, _ = stage_rates(
        mode, t + hh, r, rb, hh * da1, om + hh * dom1, hh * db1, pb + hh * dpb1,
        j0, j0inv, eps_g, eps_ge, kr, kom, ke, kv, traj_kind, coeffs, rd0, tau_c)
    da3, dom3, db3, dpb3, _ = stage_rates(
        mode, t + hh, r, rb, hh * da2, om + hh * dom2, hh * db2, pb + hh * dpb2,
        j0, j0inv, eps_g, eps_ge, kr, kom, ke, kv, traj_kind, coeffs, rd0, tau_c)
    da4, dom4, db4, dpb4, _ = stage_rates(
        mode, t + h, r, rb, h * da3, om + h * dom3, h * db3, pb + h * dpb3,
        j0, j0inv, eps_g, eps_ge, kr, kom, ke, kv, traj_kind, coeffs, rd0, tau_c)

    s = h / 6.0
    a = np.empty(3)
    b = np.empty(3)
    om2 = np.empty(3)
    pb2 = np.empty(3)
    for i in range(3):
        a[i] = s * (da1[i] + 2.0 * da2[i] + 2.0 * da3[i] + da4[i])
        b[i] = s * (db1[i] + 2.0 * db2[i] + 2.0 * db3[i] + db4[i])
        om2[i] = om[i] + s * (dom1[i] + 2.0 * dom2[i] + 2.0 * dom3[i] + dom4[i])
        pb2[i] = pb[i] + s * (dpb1[i] + 2.0 * dpb2[i] + 2.0 * dpb3[i] + dpb4[i])
    r2 = mat_mul(r, exp_so3_k(a))
    rb2 = mat_mul(exp_so3_k(b), rb)

    nr = 0
    nrb = 0
    if ortho_defect(r2) > REPROJECT_DEFECT:
        r2, _ = polar_newton(r2, 1e-15, 30)
        nr = 1
    if ortho_defect(rb2) > REPROJECT_DEFECT:
        rb2, _ = polar_newton(rb2, 1e-15, 30)
        nrb = 1
    return r2, om2, rb2, pb2, u1, nr, nrb


@jit
def integrate(mode, h, n_steps, log_every, r0, om0, rb0, pb0,
              j0, j0inv, eps_g, eps_ge, kr, kom, ke, kv,
              traj_kind, coeffs, rd0, tau_c):
    """Fixed-step integration with decimated logging.

    Samples log the pre-step state at t = i*h together with the control
    evaluated at that state; the final state gets one extra control
    evaluation. Returns status 1 with the offending step index when any
    velocity or momentum component leaves [-1e12, 1e12] or turns NaN.
    """
    n_log = n_steps // log_every + 1
    tlog = np.empty(n_log)
    rlog = np.empty((n_log, 3, 3))
    omlog = np.empty((n_log, 3))
    rblog = np.empty((n_log, 3, 3))
    pblog = np.empty((n_log, 3))
    ulog = np.empty((n_log, 3))

    r = r0.copy()
    om = om0.copy()
    rb = rb0.copy()
    pb = pb0.copy()
    nr_tot = 0
    nrb_tot = 0
    status = 0
    blow_step = -1
    j = 0
    for i in range(n_steps):
        t = i * h
        r2, om2, rb2, pb2, u1, nr, nrb = rk4_step(
            mode, t, h, r, om, rb, pb,
            j0, j0inv, eps_g, eps_ge, kr, kom, ke, kv,
            traj_kind, coeffs, rd0, tau_c)
        if i % log_every == 0:
            tlog[j] = t
            rlog[j] = r
            omlog[j] = om
            rblog[j] = rb
            pblog[j] = pb
            ulog[j] = u1
            j += 1
        r = r2
        om = om2
        rb = rb2
        pb = pb2
        nr_tot += nr
        nrb_tot += nrb
        m = 0.0
        for k in range(3):
            if abs(om[k]) > m:
                m = abs(om[k])
            if abs(pb[k]) > m:
                m = abs(pb[k])
        if not (m <= BLOWUP_LIMIT):
            status = 1
            blow_step = i + 1
            break

    if status == 0:
        z = np.zeros(3)
        _, _, _, _, ut = stage_rates(
            mode, n_steps * h, r, rb, z, om, z, pb,
            j0, j0inv, eps_g, eps_ge, kr, kom, ke, kv, traj_kind, coeffs, rd0, tau_c)
        tlog[j] = n_steps * h
        rlog[j] = r
        omlog[j] = om
        rblog[j] = rb
        pblog[j] = pb
        ulog[j] = ut
        j += 1
    return (tlog, rlog, omlog, rblog, pblog, ulog,
            nr_tot, nrb_tot, status, blow_step, j)
