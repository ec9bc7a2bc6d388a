# cython: boundscheck=False, wraparound=False, cdivision=True
# cython: initializedcheck=False, language_level=3
"""Compiled integration kernel.

Operation-for-operation identical to :mod:`liscell._core_py`; see that module
for the layout conventions and the algorithm notes.  Keep the two in lockstep:
the parity tests compare them trajectory against trajectory.
"""

from libc.math cimport cosh, fabs, isfinite, log, pow, sinh, sqrt, INFINITY

import numpy as np

# voltage-solve status codes
SOLVE_OK = 0
SOLVE_NO_BRACKET = 1
SOLVE_NON_FINITE = 2

# termination codes (order matters: engine maps them to the Termination enum)
TERM_VOLTAGE_CUTOFF = 0
TERM_POROSITY_FLOOR = 1
TERM_SPECIES_DEPLETED = 2
TERM_HORIZON = 3
TERM_SOLVER_FAILURE = 4

# voltage search window [V]
V_LO = 0.0
V_HI = 5.0

cdef double _V_LO = 0.0
cdef double _V_HI = 5.0
cdef double _EPS = 2.220446049250313e-16
cdef double _ROS_D = 1.0 / (2.0 + sqrt(2.0))
cdef double _ROS_E32 = 6.0 + sqrt(2.0)
cdef int _NEWTON_MAX = 120
cdef long _MAX_STEPS = 2000000
cdef int _MAX_REJECTS = 100

# representation guard for logarithms of vanishing masses (see _core_py)
cdef double _GUARD_MASS = 1e-200
cdef double _LGUARD = log(1e-200)

# sinh/cosh overflow threshold (C libm returns inf beyond it)
cdef double _ARG_MAX = 710.0

# depletion verdicts are only trusted at steps at or below this [s]
cdef double _H_CONFIRM = 1.0

# stats indices
cdef int _NFEV = 0
cdef int _NJAC = 1
cdef int _NG = 2
cdef int _NLU = 3

cdef int _SOLVE_OK = 0
cdef int _SOLVE_NO_BRACKET = 1
cdef int _SOLVE_NON_FINITE = 2


cdef class CorePack:
    """Flattened model + parameter data consumed by the kernel loops."""

    cdef public int q
    cdef public int p
    cdef double[::1] sto
    cdef double[::1] wmat
    cdef double[::1] e0
    cdef double[::1] i0
    cdef double[::1] lm0
    cdef double[::1] ln_cref
    cdef double[::1] floor_mass
    cdef double[::1] c_nernst
    cdef public double c_bv
    cdef public double a_v0
    cdef public double gamma
    cdef public double omega
    cdef public double k_p
    cdef public double s_sat


def make_pack(q, p, sto, wmat, e0, i0, lm0, ln_cref, floor_mass,
              c_nernst, c_bv, a_v0, gamma, omega, k_p, s_sat):
    """Bundle kernel inputs (1-D float64 arrays / scalars) into a pack."""
    cdef CorePack pk = CorePack()
    pk.q = int(q)
    pk.p = int(p)
    pk.sto = np.ascontiguousarray(sto, dtype=np.float64)
    pk.wmat = np.ascontiguousarray(wmat, dtype=np.float64)
    pk.e0 = np.ascontiguousarray(e0, dtype=np.float64)
    pk.i0 = np.ascontiguousarray(i0, dtype=np.float64)
    pk.lm0 = np.ascontiguousarray(lm0, dtype=np.float64)
    pk.ln_cref = np.ascontiguousarray(ln_cref, dtype=np.float64)
    pk.floor_mass = np.ascontiguousarray(floor_mass, dtype=np.float64)
    pk.c_nernst = np.ascontiguousarray(c_nernst, dtype=np.float64)
    pk.c_bv = float(c_bv)
    pk.a_v0 = float(a_v0)
    pk.gamma = float(gamma)
    pk.omega = float(omega)
    pk.k_p = float(k_p)
    pk.s_sat = float(s_sat)
    return pk


cdef bint _prep(CorePack pk, double[::1] y, double[::1] lm, double[::1] E,
                double[::1] L, double[::1] a2i, double* av_out):
    """Guarded mass logs, Nernst potentials, mass-ratio logs, prefactors.

    Returns False when porosity is non-positive/non-finite.
    """
    cdef int q = pk.q
    cdef int p = pk.p
    cdef int i, j
    cdef double eps, av, mi, se, sl, s
    eps = y[q + 1]
    if not (eps > 0.0) or not isfinite(eps):
        av_out[0] = 0.0
        return False
    av = pk.a_v0 * pow(eps, pk.gamma)
    if not isfinite(av):
        av_out[0] = 0.0
        return False
    for i in range(q):
        mi = y[i]
        if mi > _GUARD_MASS:
            lm[i] = log(mi)
        else:
            lm[i] = _LGUARD
    for j in range(p):
        se = 0.0
        sl = 0.0
        for i in range(q):
            s = pk.sto[i * p + j]
            if s != 0.0:
                se += s * (lm[i] - pk.ln_cref[i])
                sl += s * (lm[i] - pk.lm0[i])
        E[j] = pk.e0[j] - pk.c_nernst[j] * se
        # symmetric (alpha = 1/2) activity weighting, matching the F/(2RT)
        # factor in the exponential terms
        L[j] = 0.5 * sl
        a2i[j] = 2.0 * av * pk.i0[j]
    av_out[0] = av
    return True


cdef int _solve_v(CorePack pk, double[::1] a2i, double[::1] E, double[::1] L,
                  double current, double ctol, double vguess,
                  double[::1] sh, double[::1] ch, long[::1] stats,
                  double* v_out):
    """Safeguarded Newton for the voltage closing the current balance."""
    cdef int p = pk.p
    cdef double c_bv = pk.c_bv
    cdef double lo = _V_LO
    cdef double hi = _V_HI
    cdef double v, g, gp, x, shx, chx, vn
    cdef int j, it
    v = vguess if (lo < vguess < hi) else 0.5 * (lo + hi)
    for it in range(_NEWTON_MAX):
        g = -current
        gp = 0.0
        for j in range(p):
            x = c_bv * (v - E[j]) + L[j]
            if x > _ARG_MAX:
                shx = INFINITY
                chx = INFINITY
            elif x < -_ARG_MAX:
                shx = -INFINITY
                chx = INFINITY
            else:
                shx = sinh(x)
                chx = cosh(x)
            sh[j] = shx
            ch[j] = chx
            g -= a2i[j] * shx
            gp -= a2i[j] * c_bv * chx
        stats[_NG] += 1
        if not (isfinite(g) and isfinite(gp)):
            v_out[0] = v
            return _SOLVE_NON_FINITE
        if fabs(g) <= ctol:
            v_out[0] = v
            return _SOLVE_OK
        if g > 0.0:
            lo = v  # g decreasing: root above v
        else:
            hi = v
        if hi - lo <= 4.0 * _EPS * max(1.0, fabs(v)):
            # bracket at machine resolution (see _core_py for the reasoning)
            v_out[0] = v
            if hi >= _V_HI - 1e-9 or lo <= _V_LO + 1e-9:
                return _SOLVE_NO_BRACKET
            return _SOLVE_OK
        vn = v - g / gp
        if not (lo < vn < hi):
            vn = 0.5 * (lo + hi)
        v = vn
    v_out[0] = v
    return _SOLVE_NON_FINITE


cdef int _rhs(CorePack pk, double[::1] y, double current, double ctol,
              double vguess, double[::1] dy, double[::1] lm, double[::1] E,
              double[::1] L, double[::1] a2i, double[::1] sh, double[::1] ch,
              double[::1] ir, long[::1] stats, double* v_out, double* av_out):
    """Full reduced-ODE right-hand side (algebraic layer + state rates)."""
    cdef int q = pk.q
    cdef int p = pk.p
    cdef int i, j, status
    cdef double av = 0.0
    cdef double v = 0.0
    cdef double dmsp, acc, w
    stats[_NFEV] += 1
    if not _prep(pk, y, lm, E, L, a2i, &av):
        v_out[0] = 0.0
        av_out[0] = 0.0
        return _SOLVE_NON_FINITE
    status = _solve_v(pk, a2i, E, L, current, ctol, vguess, sh, ch, stats, &v)
    v_out[0] = v
    av_out[0] = av
    if status != _SOLVE_OK:
        return status
    for j in range(p):
        ir[j] = -a2i[j] * sh[j]
    dmsp = pk.k_p * y[q] * (y[q - 1] - pk.s_sat)
    for i in range(q):
        acc = 0.0
        for j in range(p):
            w = pk.wmat[i * p + j]
            if w != 0.0:
                acc += w * ir[j]
        dy[i] = acc
    dy[q - 1] -= dmsp
    dy[q] = dmsp
    dy[q + 1] = -pk.omega * dmsp
    return _SOLVE_OK


cdef void _jacobian(CorePack pk, double[::1] y, double current, double av,
                    double[::1] a2i, double[::1] ch, double[::1] ir,
                    double[::1] J, long[::1] stats):
    """Analytic Jacobian of the reduced ODE at a converged algebraic state."""
    cdef int q = pk.q
    cdef int p = pk.p
    cdef int n = q + 2
    cdef double c_bv = pk.c_bv
    cdef int i, j, k
    cdef double d, inv_m, gk, dv, s, dx, dir_jk, w
    cdef double eps, isum, ge, dir_je, dmsp_dmq, dmsp_dmsp
    stats[_NJAC] += 1
    for i in range(n * n):
        J[i] = 0.0
    # denominator of dV/d(state): -g'(V) > 0
    d = 0.0
    for j in range(p):
        d += a2i[j] * ch[j] * c_bv
    # mass columns
    for k in range(q):
        if y[k] <= _GUARD_MASS:
            continue  # log frozen at the guard: no sensitivity to this mass
        inv_m = 1.0 / y[k]
        gk = 0.0
        for j in range(p):
            s = pk.sto[k * p + j]
            if s != 0.0:
                gk += a2i[j] * ch[j] * s * (0.5 + c_bv * pk.c_nernst[j]) * inv_m
        dv = -gk / d
        for j in range(p):
            s = pk.sto[k * p + j]
            dx = c_bv * dv
            if s != 0.0:
                dx += s * (0.5 + c_bv * pk.c_nernst[j]) * inv_m
            dir_jk = -a2i[j] * ch[j] * dx
            for i in range(q):
                w = pk.wmat[i * p + j]
                if w != 0.0:
                    J[i * n + k] += w * dir_jk
    # porosity column: a_v = a_v0 eps^gamma scales every prefactor
    eps = y[q + 1]
    isum = 0.0
    for j in range(p):
        isum += ir[j]
    ge = pk.gamma / eps
    for j in range(p):
        dir_je = ge * (ir[j] - a2i[j] * ch[j] * c_bv * isum / d)
        for i in range(q):
            w = pk.wmat[i * p + j]
            if w != 0.0:
                J[i * n + (q + 1)] += w * dir_je
    # precipitation block
    dmsp_dmq = pk.k_p * y[q]
    dmsp_dmsp = pk.k_p * (y[q - 1] - pk.s_sat)
    J[(q - 1) * n + (q - 1)] -= dmsp_dmq
    J[(q - 1) * n + q] -= dmsp_dmsp
    J[q * n + (q - 1)] = dmsp_dmq
    J[q * n + q] = dmsp_dmsp
    J[(q + 1) * n + (q - 1)] = -pk.omega * dmsp_dmq
    J[(q + 1) * n + q] = -pk.omega * dmsp_dmsp


cdef int _lu_factor(double[::1] A, int[::1] piv, int n):
    """In-place LU with partial pivoting on a flat n x n matrix."""
    cdef int c, r, cc, prow
    cdef double pmax, a, inv, f, tmp
    for c in range(n):
        pmax = fabs(A[c * n + c])
        prow = c
        for r in range(c + 1, n):
            a = fabs(A[r * n + c])
            if a > pmax:
                pmax = a
                prow = r
        if pmax < 1e-300:
            return 1
        piv[c] = prow
        if prow != c:
            for cc in range(n):
                tmp = A[c * n + cc]
                A[c * n + cc] = A[prow * n + cc]
                A[prow * n + cc] = tmp
        inv = 1.0 / A[c * n + c]
        for r in range(c + 1, n):
            f = A[r * n + c] * inv
            A[r * n + c] = f
            if f != 0.0:
                for cc in range(c + 1, n):
                    A[r * n + cc] -= f * A[c * n + cc]
    return 0


cdef void _lu_solve(double[::1] A, int[::1] piv, int n, double[::1] b):
    """Solve LU x = b in place (b overwritten with x)."""
    cdef int c, r, pr
    cdef double tmp, bc
    for c in range(n):
        pr = piv[c]
        if pr != c:
            tmp = b[c]
            b[c] = b[pr]
            b[pr] = tmp
        bc = b[c]
        if bc != 0.0:
            for r in range(c + 1, n):
                b[r] -= A[r * n + c] * bc
    for c in range(n - 1, -1, -1):
        bc = b[c] / A[c * n + c]
        b[c] = bc
        if bc != 0.0:
            for r in range(c):
                b[r] -= A[r * n + c] * bc


cdef void _hermite(int n, double[::1] y0, double[::1] f0, double[::1] y1,
                   double[::1] f1, double h, double tau, double[::1] out):
    """Cubic Hermite interpolant on one accepted step (tau in [0, 1])."""
    cdef double t2 = tau * tau
    cdef double t3 = t2 * tau
    cdef double h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    cdef double h10 = t3 - 2.0 * t2 + tau
    cdef double h01 = -2.0 * t3 + 3.0 * t2
    cdef double h11 = t3 - t2
    cdef int i
    for i in range(n):
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]


def solve_once(CorePack cpk, y, current, ctol, vguess):
    """One-shot algebraic solve for engine-level use.

    Returns (status, V, a_v, E, eta, i_r) with numpy outputs.
    """
    cdef int q = cpk.q
    cdef int p = cpk.p
    cdef int j, status
    cdef double av = 0.0
    cdef double v = 0.0
    lm_a = np.zeros(q)
    E_a = np.zeros(p)
    L_a = np.zeros(p)
    a2i_a = np.zeros(p)
    sh_a = np.zeros(p)
    ch_a = np.zeros(p)
    stats_a = np.zeros(4, dtype=np.int64)
    yl_a = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] lm = lm_a
    cdef double[::1] E = E_a
    cdef double[::1] L = L_a
    cdef double[::1] a2i = a2i_a
    cdef double[::1] sh = sh_a
    cdef double[::1] ch = ch_a
    cdef long[::1] stats = stats_a
    cdef double[::1] yl = yl_a
    if not _prep(cpk, yl, lm, E, L, a2i, &av):
        return SOLVE_NON_FINITE, 0.0, 0.0, None, None, None
    status = _solve_v(cpk, a2i, E, L, current, ctol, vguess, sh, ch, stats, &v)
    if status != _SOLVE_OK:
        return status, v, av, None, None, None
    ir_a = np.empty(p)
    eta_a = np.empty(p)
    cdef double[::1] ir = ir_a
    cdef double[::1] eta = eta_a
    for j in range(p):
        ir[j] = -a2i[j] * sh[j]
        eta[j] = v - E[j]
    return status, v, av, E_a, eta_a, ir_a


def rhs_once(CorePack cpk, y, current, ctol, vguess):
    """One-shot right-hand-side evaluation (state rates + algebraic layer)."""
    cdef int q = cpk.q
    cdef int p = cpk.p
    cdef int n = q + 2
    cdef int j, status
    cdef double av = 0.0
    cdef double v = 0.0
    lm_a = np.zeros(q)
    E_a = np.zeros(p)
    L_a = np.zeros(p)
    a2i_a = np.zeros(p)
    sh_a = np.zeros(p)
    ch_a = np.zeros(p)
    ir_a = np.zeros(p)
    dy_a = np.zeros(n)
    stats_a = np.zeros(4, dtype=np.int64)
    yl_a = np.ascontiguousarray(y, dtype=np.float64)
    cdef double[::1] lm = lm_a
    cdef double[::1] E = E_a
    cdef double[::1] L = L_a
    cdef double[::1] a2i = a2i_a
    cdef double[::1] sh = sh_a
    cdef double[::1] ch = ch_a
    cdef double[::1] ir = ir_a
    cdef double[::1] dy = dy_a
    cdef long[::1] stats = stats_a
    cdef double[::1] yl = yl_a
    status = _rhs(cpk, yl, current, ctol, vguess, dy, lm, E, L, a2i,
                  sh, ch, ir, stats, &v, &av)
    if status != _SOLVE_OK:
        return status, None, v, av, None, None, None
    eta_a = np.empty(p)
    cdef double[::1] eta = eta_a
    for j in range(p):
        eta[j] = v - E[j]
    return status, dy_a, v, av, E_a, eta_a, ir_a


cdef int _fatal_species(CorePack pk, double[::1] ystate, double[::1] ir,
                        double current):
    """Index of a depleted species the discharge cannot continue without.

    Same benign-tail test as the reference kernel: a floored species only
    ends the run when the reactions consuming it carry a material share of
    the cell current.
    """
    cdef int q = pk.q
    cdef int p = pk.p
    cdef int i, j
    cdef double thresh = 0.01 * fabs(current)
    cdef double flux
    for i in range(q):
        if ystate[i] > pk.floor_mass[i]:
            continue
        flux = 0.0
        for j in range(p):
            if pk.wmat[i * p + j] * ir[j] < 0.0:
                flux += fabs(ir[j])
        if flux > thresh:
            return i
    return -1


cdef double _ev_mass(CorePack pk, double[::1] ystate):
    """Worst margin to the species concentration floors."""
    cdef int q = pk.q
    cdef int i
    cdef double worst = INFINITY
    cdef double d
    for i in range(q):
        d = ystate[i] - pk.floor_mass[i]
        if d < worst:
            worst = d
    return worst


cdef double _bisect_comp(int n, double[::1] y0v, double[::1] f0v,
                         double[::1] y1v, double[::1] f1v, double h, double t,
                         int comp, double level, double[::1] yev):
    """Bisect for yev[comp] - level crossing zero along the Hermite arc."""
    cdef double ta = 0.0
    cdef double tb = 1.0
    cdef double tm
    cdef int it
    for it in range(80):
        if (tb - ta) * h <= 1e-9 * max(1.0, t + tb * h):
            break
        tm = 0.5 * (ta + tb)
        _hermite(n, y0v, f0v, y1v, f1v, h, tm, yev)
        if yev[comp] - level > 0.0:
            ta = tm
        else:
            tb = tm
    return tb


cdef double _bisect_voltage(CorePack pk, int n, double[::1] y0v,
                            double[::1] f0v, double[::1] y1v, double[::1] f1v,
                            double h, double t, double current, double ctol,
                            double v_cutoff, double* vg, double[::1] yev,
                            double[::1] lm, double[::1] E, double[::1] L,
                            double[::1] a2i, double[::1] sh, double[::1] ch,
                            long[::1] stats):
    """Bisect for the cell voltage crossing the cutoff along the arc."""
    cdef double ta = 0.0
    cdef double tb = 1.0
    cdef double tm, aa, vv
    cdef bint above
    cdef int it, st
    for it in range(80):
        if (tb - ta) * h <= 1e-9 * max(1.0, t + tb * h):
            break
        tm = 0.5 * (ta + tb)
        _hermite(n, y0v, f0v, y1v, f1v, h, tm, yev)
        above = False
        if _prep(pk, yev, lm, E, L, a2i, &aa):
            st = _solve_v(pk, a2i, E, L, current, ctol, vg[0], sh, ch,
                          stats, &vv)
            if st == _SOLVE_OK:
                vg[0] = vv
                above = vv > v_cutoff
        if above:
            ta = tm
        else:
            tb = tm
    return tb


def simulate_core(CorePack cpk, y0, double current, double t_max,
                  double v_cutoff, double eps_min, double rtol,
                  double atol_mass, double atol_msp, double atol_eps,
                  double dt_init, double dt_max, double ctol,
                  long max_steps=_MAX_STEPS):
    """Adaptive Rosenbrock integration of one constant-current discharge.

    Returns a dict of sample arrays (one row per accepted step, plus the
    initial state and an interpolated terminal sample on event crossings),
    the termination code, end time, and work counters.
    """
    cdef int q = cpk.q
    cdef int p = cpk.p
    cdef int n = q + 2

    # per-component error weights (see _core_py for the rationale)
    atol_a = np.empty(n)
    cdef double[::1] atol_vec = atol_a
    cdef int i, j
    for i in range(q):
        atol_vec[i] = atol_mass
    atol_vec[q] = atol_msp
    atol_vec[q + 1] = atol_eps

    # scratch: node set (accepted state) and stage set (trial evaluations)
    lm_a = np.zeros(q)
    L_a = np.zeros(p)
    node_E_a = np.zeros(p)
    node_sh_a = np.zeros(p)
    node_ch_a = np.zeros(p)
    node_ir_a = np.zeros(p)
    node_a2i_a = np.zeros(p)
    stg_E_a = np.zeros(p)
    stg_sh_a = np.zeros(p)
    stg_ch_a = np.zeros(p)
    stg_ir_a = np.zeros(p)
    stg_a2i_a = np.zeros(p)
    cdef double[::1] lm = lm_a
    cdef double[::1] L = L_a
    cdef double[::1] node_E = node_E_a
    cdef double[::1] node_sh = node_sh_a
    cdef double[::1] node_ch = node_ch_a
    cdef double[::1] node_ir = node_ir_a
    cdef double[::1] node_a2i = node_a2i_a
    cdef double[::1] stg_E = stg_E_a
    cdef double[::1] stg_sh = stg_sh_a
    cdef double[::1] stg_ch = stg_ch_a
    cdef double[::1] stg_ir = stg_ir_a
    cdef double[::1] stg_a2i = stg_a2i_a

    y_a = np.ascontiguousarray(y0, dtype=np.float64).copy()
    ynew_a = np.zeros(n)
    ystage_a = np.zeros(n)
    f0_a = np.zeros(n)
    F1_a = np.zeros(n)
    F2_a = np.zeros(n)
    k1_a = np.zeros(n)
    k2_a = np.zeros(n)
    k3_a = np.zeros(n)
    rhsbuf_a = np.zeros(n)
    yev_a = np.zeros(n)
    J_a = np.zeros(n * n)
    W_a = np.zeros(n * n)
    piv_a = np.zeros(n, dtype=np.intc)
    stats_a = np.zeros(4, dtype=np.int64)
    cdef double[::1] y = y_a
    cdef double[::1] ynew = ynew_a
    cdef double[::1] ystage = ystage_a
    cdef double[::1] f0 = f0_a
    cdef double[::1] F1 = F1_a
    cdef double[::1] F2 = F2_a
    cdef double[::1] k1 = k1_a
    cdef double[::1] k2 = k2_a
    cdef double[::1] k3 = k3_a
    cdef double[::1] rhsbuf = rhsbuf_a
    cdef double[::1] yev = yev_a
    cdef double[::1] J = J_a
    cdef double[::1] W = W_a
    cdef int[::1] piv = piv_a
    cdef long[::1] stats = stats_a
    cdef double[::1] tmpmv

    ts = []
    ys = []
    vs = []
    es = []
    etas = []
    irs = []
    avs = []

    def append_sample(double tval, double[::1] ystate, double vval,
                      double avval, double[::1] Earr, double[::1] irarr):
        ts.append(tval)
        ys.append([ystate[ii] for ii in range(n)])
        vs.append(vval)
        es.append([Earr[jj] for jj in range(p)])
        etas.append([vval - Earr[jj] for jj in range(p)])
        irs.append([irarr[jj] for jj in range(p)])
        avs.append(avval)

    def result(int term, double t_end, long naccept_v, long nreject_v):
        return {
            "termination": term,
            "t_end": t_end,
            "t": np.array(ts, dtype=float),
            "y": np.array(ys, dtype=float).reshape(len(ts), n),
            "v": np.array(vs, dtype=float),
            "e": np.array(es, dtype=float).reshape(len(ts), p),
            "eta": np.array(etas, dtype=float).reshape(len(ts), p),
            "ir": np.array(irs, dtype=float).reshape(len(ts), p),
            "av": np.array(avs, dtype=float),
            "naccept": naccept_v,
            "nreject": nreject_v,
            "nfev": stats[_NFEV],
            "njac": stats[_NJAC],
            "nsolve": stats[_NG],
            "nlu": stats[_NLU],
        }

    cdef double vg = -1.0  # cold start: solver begins from window midpoint
    cdef double v = 0.0
    cdef double av = 0.0
    cdef int status
    status = _rhs(cpk, y, current, ctol, vg, f0, lm, node_E, L,
                  node_a2i, node_sh, node_ch, node_ir, stats, &v, &av)
    if status != _SOLVE_OK:
        return result(TERM_SOLVER_FAILURE, 0.0, 0, 0)
    vg = v
    append_sample(0.0, y, v, av, node_E, node_ir)

    # initial state may already violate a stop condition
    if v <= v_cutoff:
        return result(TERM_VOLTAGE_CUTOFF, 0.0, 0, 0)
    if y[q + 1] <= eps_min:
        return result(TERM_POROSITY_FLOOR, 0.0, 0, 0)
    if _fatal_species(cpk, y, node_ir, current) >= 0:
        return result(TERM_SPECIES_DEPLETED, 0.0, 0, 0)
    if t_max <= 0.0:
        return result(TERM_HORIZON, 0.0, 0, 0)

    cdef double t = 0.0
    cdef double h = min(dt_init, dt_max)
    cdef long naccept = 0
    cdef long nreject = 0
    cdef int rejects_in_a_row = 0
    cdef double node_v = v
    cdef double node_av = av
    cdef long jac_node = -1  # naccept value the cached Jacobian belongs to

    cdef bint failed, clamped
    cdef double errnorm, hmin, hd, h6, sc, e, yi, yni, fac
    cdef double v2 = 0.0
    cdef double av2 = 0.0
    cdef double vv_st = 0.0
    cdef double aa_st = 0.0
    cdef double tnew, tau, tb, t_end_val, aa2, vv2
    cdef int st, term, fi

    while t < t_max:
        if naccept + nreject >= max_steps:
            return result(TERM_SOLVER_FAILURE, t, naccept, nreject)
        if h > dt_max:
            h = dt_max
        hmin = max(1e-13, 4.0 * _EPS * max(1.0, t))
        if h < hmin:
            return result(TERM_SOLVER_FAILURE, t, naccept, nreject)
        # a final sliver step onto the horizon may undercut hmin
        clamped = False
        if t + h >= t_max:
            h = t_max - t
            clamped = True

        # Jacobian at the accepted node (converged algebraic data on hand);
        # rejections retry from the same node, so the cache stays valid
        if jac_node != naccept:
            _jacobian(cpk, y, current, node_av, node_a2i, node_ch, node_ir,
                      J, stats)
            jac_node = naccept
        hd = h * _ROS_D
        for i in range(n * n):
            W[i] = -hd * J[i]
        for i in range(n):
            W[i * n + i] += 1.0
        stats[_NLU] += 1
        if _lu_factor(W, piv, n) != 0:
            nreject += 1
            rejects_in_a_row += 1
            if rejects_in_a_row > _MAX_REJECTS:
                return result(TERM_SOLVER_FAILURE, t, naccept, nreject)
            h *= 0.25
            continue

        failed = False
        errnorm = INFINITY

        for i in range(n):
            k1[i] = f0[i]
        _lu_solve(W, piv, n, k1)
        for i in range(n):
            ystage[i] = y[i] + 0.5 * h * k1[i]
        st = _rhs(cpk, ystage, current, ctol, vg, F1, lm, stg_E, L,
                  stg_a2i, stg_sh, stg_ch, stg_ir, stats, &vv_st, &aa_st)
        if st == _SOLVE_OK:
            vg = vv_st
        else:
            failed = True
        if not failed:
            for i in range(n):
                rhsbuf[i] = F1[i] - k1[i]
            _lu_solve(W, piv, n, rhsbuf)
            for i in range(n):
                k2[i] = rhsbuf[i] + k1[i]
                ynew[i] = y[i] + h * k2[i]
            st = _rhs(cpk, ynew, current, ctol, vg, F2, lm, stg_E, L,
                      stg_a2i, stg_sh, stg_ch, stg_ir, stats, &v2, &av2)
            if st == _SOLVE_OK:
                vg = v2
            else:
                failed = True
        if not failed:
            for i in range(n):
                rhsbuf[i] = (F2[i] - _ROS_E32 * (k2[i] - F1[i])
                             - 2.0 * (k1[i] - f0[i]))
            _lu_solve(W, piv, n, rhsbuf)
            for i in range(n):
                k3[i] = rhsbuf[i]
            errnorm = 0.0
            h6 = h / 6.0
            for i in range(n):
                yi = fabs(y[i])
                yni = fabs(ynew[i])
                sc = atol_vec[i] + rtol * (yi if yi > yni else yni)
                e = fabs(h6 * (k1[i] - 2.0 * k2[i] + k3[i])) / sc
                if e > errnorm:
                    errnorm = e
            if not isfinite(errnorm):
                failed = True
            else:
                # masses and precipitate cannot go negative
                for i in range(q + 1):
                    if ynew[i] < 0.0:
                        failed = True
                        break

        if failed or errnorm > 1.0:
            nreject += 1
            rejects_in_a_row += 1
            if rejects_in_a_row > _MAX_REJECTS:
                return result(TERM_SOLVER_FAILURE, t, naccept, nreject)
            if failed:
                h *= 0.25
            else:
                fac = 0.9 * pow(errnorm, -1.0 / 3.0)
                if fac < 0.1:
                    fac = 0.1
                if fac > 0.9:
                    fac = 0.9
                h *= fac
            continue

        # an otherwise-good step that claims a load-bearing depletion must
        # prove it at a small step before the claim may terminate the run
        if h > _H_CONFIRM and _ev_mass(cpk, ynew) <= 0.0:
            if _fatal_species(cpk, ynew, stg_ir, current) >= 0:
                nreject += 1
                rejects_in_a_row += 1
                if rejects_in_a_row > _MAX_REJECTS:
                    return result(TERM_SOLVER_FAILURE, t, naccept, nreject)
                h *= 0.25
                continue

        # accepted
        rejects_in_a_row = 0
        naccept += 1
        tnew = t_max if clamped else t + h

        # event checks on the new node (stage scratch holds its algebra)
        term = -1
        tau = 1.0
        if v2 <= v_cutoff:
            term = TERM_VOLTAGE_CUTOFF
            tau = _bisect_voltage(cpk, n, y, f0, ynew, F2, h, t, current,
                                  ctol, v_cutoff, &vg, yev, lm, stg_E, L,
                                  stg_a2i, stg_sh, stg_ch, stats)
        if ynew[q + 1] <= eps_min:
            tb = _bisect_comp(n, y, f0, ynew, F2, h, t, q + 1, eps_min, yev)
            if term < 0 or tb < tau:
                term = TERM_POROSITY_FLOOR
                tau = tb
        if _ev_mass(cpk, ynew) <= 0.0:
            fi = _fatal_species(cpk, ynew, stg_ir, current)
            if fi >= 0:
                if y[fi] > cpk.floor_mass[fi]:
                    tb = _bisect_comp(n, y, f0, ynew, F2, h, t, fi,
                                      cpk.floor_mass[fi], yev)
                else:
                    # under the floor since before this step: the consuming
                    # flux became material only now, so end at the node
                    tb = 1.0
                if term < 0 or tb < tau:
                    term = TERM_SPECIES_DEPLETED
                    tau = tb

        if term >= 0:
            t_end_val = t + tau * h
            _hermite(n, y, f0, ynew, F2, h, tau, yev)
            if _prep(cpk, yev, lm, stg_E, L, stg_a2i, &aa2):
                st = _solve_v(cpk, stg_a2i, stg_E, L, current, ctol, vg,
                              stg_sh, stg_ch, stats, &vv2)
                if st == _SOLVE_OK:
                    for j in range(p):
                        stg_ir[j] = -stg_a2i[j] * stg_sh[j]
                    if t_end_val > <double> ts[len(ts) - 1]:
                        append_sample(t_end_val, yev, vv2, aa2, stg_E, stg_ir)
            return result(term, t_end_val, naccept, nreject)

        # promote stage data to node data (FSAL: F2 becomes next f0)
        t = tnew
        tmpmv = y; y = ynew; ynew = tmpmv
        tmpmv = f0; f0 = F2; F2 = tmpmv
        tmpmv = node_E; node_E = stg_E; stg_E = tmpmv
        tmpmv = node_sh; node_sh = stg_sh; stg_sh = tmpmv
        tmpmv = node_ch; node_ch = stg_ch; stg_ch = tmpmv
        tmpmv = node_ir; node_ir = stg_ir; stg_ir = tmpmv
        tmpmv = node_a2i; node_a2i = stg_a2i; stg_a2i = tmpmv
        node_v = v2
        node_av = av2
        append_sample(t, y, node_v, node_av, node_E, node_ir)

        fac = 5.0 if errnorm == 0.0 else 0.9 * pow(errnorm, -1.0 / 3.0)
        if fac < 0.2:
            fac = 0.2
        if fac > 5.0:
            fac = 5.0
        h *= fac

    return result(TERM_HORIZON, t, naccept, nreject)
