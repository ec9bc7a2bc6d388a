"""Pure-Python twin of the compiled integration kernel.

This module mirrors ``_core.pyx`` operation for operation (same loop order,
same libm calls) so that both backends agree to rounding error.  It exists so
the package works without a C toolchain; the compiled module is preferred at
import time by :mod:`liscell.kernel`.

Layout conventions shared by both backends:

- state vector ``y`` has length ``q + 2``: dissolved masses ``y[0:q]`` [g]
  (S8 first, S^2- last), precipitate mass ``y[q]`` [g], relative porosity
  ``y[q+1]``;
- matrices are flat row-major: ``sto[i*p + j]`` is the stoichiometric
  coefficient of species ``i`` in reaction ``j``; ``wmat[i*p + j]`` converts
  reaction current [A] to the species' mass rate [g/s];
- the algebraic layer (active area, Nernst potentials, Butler-Volmer
  currents, cell voltage) is eliminated per evaluation by a safeguarded
  Newton root-find on the voltage, exploiting that the current sum is
  strictly decreasing in V:  each reaction current equals
  ``-2 a_v i0_j sinh(c_bv (V - E_j) + L_j)`` with ``L_j`` half the log of
  the Butler-Volmer mass-ratio product (the symmetric alpha = 1/2 activity
  weighting that matches the F/(2RT) exponential factors; the two products
  in the rate law are exact reciprocals, which folds them into one sinh);
- time stepping is an adaptive Rosenbrock pair (the classic 2(3) L-stable
  scheme with an embedded third-order error estimate), with the Jacobian of
  the reduced ODE assembled analytically by implicit differentiation through
  the voltage solve.  Stiffness here is real: the precipitation rate constant
  times the precipitate mass reaches ~60 /s against multi-hour horizons.
"""

from __future__ import annotations

import math

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

_EPS = 2.220446049250313e-16
_ROS_D = 1.0 / (2.0 + math.sqrt(2.0))
_ROS_E32 = 6.0 + math.sqrt(2.0)
_NEWTON_MAX = 120
_MAX_STEPS = 2_000_000
_MAX_REJECTS = 100

# Representation guard for logarithms of vanishing masses.  Once a species'
# supply is exhausted its mass relaxes onto a quasi-equilibrium tail slaved to
# the cell voltage (the Nernst feedback regenerates it on any excursion
# below), bounded below by the tail value at V = 0 -- which is far above this
# guard -- so during integration the guard never binds; it only keeps the
# algebra finite for degenerate externally supplied states.
_GUARD_MASS = 1e-200
_LGUARD = math.log(_GUARD_MASS)

# sinh/cosh overflow threshold: beyond this the C library returns inf, while
# Python's math module raises; substituting inf keeps the twins identical and
# lets the non-finite rejection path handle it.
_ARG_MAX = 710.0

# A depletion verdict is only trusted at step sizes at or below this [s].
# At large steps a species riding a fast-collapsing equilibrium tail sits
# measurably off its manifold, and the restoring current can momentarily
# look load-bearing; that artifact shrinks quadratically with the step,
# while a genuinely starved reaction keeps its full current at any step.
_H_CONFIRM = 1.0

# stats indices
_NFEV = 0
_NJAC = 1
_NG = 2
_NLU = 3


class CorePack:
    """Flattened model + parameter data consumed by the kernel loops."""

    __slots__ = (
        "q", "p", "sto", "wmat", "e0", "i0",
        "lm0", "ln_cref", "floor_mass",
        "c_nernst", "c_bv", "a_v0", "gamma", "omega", "k_p", "s_sat",
    )


def make_pack(q, p, sto, wmat, e0, i0, lm0, ln_cref, floor_mass,
              c_nernst, c_bv, a_v0, gamma, omega, k_p, s_sat):
    """Bundle kernel inputs (1-D float64 arrays / scalars) into a pack."""
    pk = CorePack()
    pk.q = int(q)
    pk.p = int(p)
    pk.sto = [float(x) for x in sto]
    pk.wmat = [float(x) for x in wmat]
    pk.e0 = [float(x) for x in e0]
    pk.i0 = [float(x) for x in i0]
    pk.lm0 = [float(x) for x in lm0]
    pk.ln_cref = [float(x) for x in ln_cref]
    pk.floor_mass = [float(x) for x in floor_mass]
    pk.c_nernst = [float(x) for x in c_nernst]
    pk.c_bv = float(c_bv)
    pk.a_v0 = float(a_v0)
    pk.gamma = float(gamma)
    pk.omega = float(omega)
    pk.k_p = float(k_p)
    pk.s_sat = float(s_sat)
    return pk


def _prep(pk, y, lm, E, L, a2i):
    """Guarded mass logs, Nernst potentials, mass-ratio logs, prefactors.

    Returns (ok, a_v); ok is False when porosity is non-positive/non-finite.
    """
    q = pk.q
    p = pk.p
    eps = y[q + 1]
    if not (eps > 0.0) or not math.isfinite(eps):
        return False, 0.0
    av = pk.a_v0 * math.pow(eps, pk.gamma)
    if not math.isfinite(av):
        return False, 0.0
    for i in range(q):
        mi = y[i]
        if mi > _GUARD_MASS:
            lm[i] = math.log(mi)
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
    return True, av


def _solve_v(pk, a2i, E, L, current, ctol, vguess, sh, ch, stats):
    """Safeguarded Newton for the voltage closing the current balance.

    The residual g(V) = sum_j i_r[j](V) - I is strictly decreasing, so the
    root is unique when it exists inside [V_LO, V_HI].  On success ``sh[j]``
    and ``ch[j]`` hold sinh/cosh of the Butler-Volmer argument at the root.
    """
    p = pk.p
    c_bv = pk.c_bv
    lo = V_LO
    hi = V_HI
    v = vguess if (lo < vguess < hi) else 0.5 * (lo + hi)
    for _ in range(_NEWTON_MAX):
        g = -current
        gp = 0.0
        for j in range(p):
            x = c_bv * (v - E[j]) + L[j]
            if x > _ARG_MAX:
                shx = math.inf
                chx = math.inf
            elif x < -_ARG_MAX:
                shx = -math.inf
                chx = math.inf
            else:
                shx = math.sinh(x)
                chx = math.cosh(x)
            sh[j] = shx
            ch[j] = chx
            g -= a2i[j] * shx
            gp -= a2i[j] * c_bv * chx
        stats[_NG] += 1
        if not (math.isfinite(g) and math.isfinite(gp)):
            return SOLVE_NON_FINITE, v
        if abs(g) <= ctol:
            return SOLVE_OK, v
        if g > 0.0:
            lo = v  # g decreasing: root above v
        else:
            hi = v
        if hi - lo <= 4.0 * _EPS * max(1.0, abs(v)):
            # Bracket at machine resolution.  At an interior point this IS
            # the root to full precision; pinned to the search boundary it
            # means the root escaped the physical window.
            if hi >= V_HI - 1e-9 or lo <= V_LO + 1e-9:
                return SOLVE_NO_BRACKET, v
            return SOLVE_OK, v
        vn = v - g / gp
        if not (lo < vn < hi):
            vn = 0.5 * (lo + hi)
        v = vn
    return SOLVE_NON_FINITE, v


def _rhs(pk, y, current, ctol, vguess, dy, lm, E, L, a2i, sh, ch, ir, stats):
    """Full reduced-ODE right-hand side: solve the algebraic layer, then the
    mass/porosity rates.  Returns (status, V, a_v)."""
    stats[_NFEV] += 1
    ok, av = _prep(pk, y, lm, E, L, a2i)
    if not ok:
        return SOLVE_NON_FINITE, 0.0, 0.0
    status, v = _solve_v(pk, a2i, E, L, current, ctol, vguess, sh, ch, stats)
    if status != SOLVE_OK:
        return status, v, av
    q = pk.q
    p = pk.p
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
    return SOLVE_OK, v, av


def _jacobian(pk, y, current, av, a2i, ch, ir, J, stats):
    """Analytic Jacobian of the reduced ODE at a converged algebraic state.

    The voltage is an implicit function of the state through the current
    balance; its partial derivatives follow from one application of the
    implicit-function theorem, so no extra nonlinear solves are needed.
    Species at the representation guard have frozen logs in the right-hand
    side, so their columns are zero to match.
    """
    stats[_NJAC] += 1
    q = pk.q
    p = pk.p
    n = q + 2
    c_bv = pk.c_bv
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


def _lu_factor(A, piv, n):
    """In-place LU with partial pivoting on a flat n x n matrix."""
    for c in range(n):
        pmax = abs(A[c * n + c])
        prow = c
        for r in range(c + 1, n):
            a = abs(A[r * n + c])
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


def _lu_solve(A, piv, n, b):
    """Solve LU x = b in place (b overwritten with x)."""
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


def _hermite(n, y0, f0, y1, f1, h, tau, out):
    """Cubic Hermite interpolant on one accepted step (tau in [0, 1])."""
    t2 = tau * tau
    t3 = t2 * tau
    h00 = 2.0 * t3 - 3.0 * t2 + 1.0
    h10 = t3 - 2.0 * t2 + tau
    h01 = -2.0 * t3 + 3.0 * t2
    h11 = t3 - t2
    for i in range(n):
        out[i] = h00 * y0[i] + h10 * h * f0[i] + h01 * y1[i] + h11 * h * f1[i]


def solve_once(pk, y, current, ctol, vguess):
    """One-shot algebraic solve for engine-level use.

    Returns (status, V, a_v, E, eta, i_r) with numpy outputs.
    """
    q = pk.q
    p = pk.p
    lm = [0.0] * q
    E = [0.0] * p
    L = [0.0] * p
    a2i = [0.0] * p
    sh = [0.0] * p
    ch = [0.0] * p
    stats = [0, 0, 0, 0]
    yl = [float(v) for v in y]
    ok, av = _prep(pk, yl, lm, E, L, a2i)
    if not ok:
        return SOLVE_NON_FINITE, 0.0, 0.0, None, None, None
    status, v = _solve_v(pk, a2i, E, L, current, ctol, vguess, sh, ch, stats)
    if status != SOLVE_OK:
        return status, v, av, None, None, None
    ir = [-a2i[j] * sh[j] for j in range(p)]
    eta = [v - E[j] for j in range(p)]
    return (status, v, av, np.array(E, dtype=float),
            np.array(eta, dtype=float), np.array(ir, dtype=float))


def rhs_once(pk, y, current, ctol, vguess):
    """One-shot right-hand-side evaluation (state rates + algebraic layer)."""
    q = pk.q
    p = pk.p
    n = q + 2
    lm = [0.0] * q
    E = [0.0] * p
    L = [0.0] * p
    a2i = [0.0] * p
    sh = [0.0] * p
    ch = [0.0] * p
    ir = [0.0] * p
    dy = [0.0] * n
    stats = [0, 0, 0, 0]
    yl = [float(v) for v in y]
    status, v, av = _rhs(pk, yl, current, ctol, vguess, dy, lm, E, L, a2i,
                         sh, ch, ir, stats)
    if status != SOLVE_OK:
        return status, None, v, av, None, None, None
    eta = [v - E[j] for j in range(p)]
    return (status, np.array(dy, dtype=float), v, av,
            np.array(E, dtype=float), np.array(eta, dtype=float),
            np.array(ir, dtype=float))


def _fatal_species(pk, ystate, ir, current):
    """Index of a depleted species the discharge cannot continue without.

    A species at or below its concentration floor ends the run only when the
    reactions still consuming it carry a material share of the cell current.
    An exhausted species whose mass merely rides its equilibrium tail (its
    reactions essentially at rest, like S8 throughout the low plateau) is
    benign and must not stop the simulation.  Returns -1 when no floored
    species is load-bearing.
    """
    q = pk.q
    p = pk.p
    thresh = 0.01 * abs(current)
    for i in range(q):
        if ystate[i] > pk.floor_mass[i]:
            continue
        flux = 0.0
        for j in range(p):
            if pk.wmat[i * p + j] * ir[j] < 0.0:
                flux += abs(ir[j])
        if flux > thresh:
            return i
    return -1


def simulate_core(pk, y0, current, t_max, v_cutoff, eps_min,
                  rtol, atol_mass, atol_msp, atol_eps,
                  dt_init, dt_max, ctol, max_steps=_MAX_STEPS):
    """Adaptive Rosenbrock integration of one constant-current discharge.

    Returns a dict of sample arrays (one row per accepted step, plus the
    initial state and an interpolated terminal sample on event crossings),
    the termination code, end time, and work counters.
    """
    q = pk.q
    p = pk.p
    n = q + 2

    # per-component error weights: precipitate gets a much tighter absolute
    # floor so its exponential decay through ~1e-10 g keeps relative accuracy
    # (and stays positive); porosity is O(1) and dimensionless.
    atol_vec = [atol_mass] * q + [atol_msp, atol_eps]

    # scratch: node set (accepted state) and stage set (trial evaluations)
    lm = [0.0] * q
    L = [0.0] * p
    node_E = [0.0] * p
    node_sh = [0.0] * p
    node_ch = [0.0] * p
    node_ir = [0.0] * p
    node_a2i = [0.0] * p
    stg_E = [0.0] * p
    stg_sh = [0.0] * p
    stg_ch = [0.0] * p
    stg_ir = [0.0] * p
    stg_a2i = [0.0] * p

    y = [float(v) for v in y0]
    ynew = [0.0] * n
    ystage = [0.0] * n
    f0 = [0.0] * n
    F1 = [0.0] * n
    F2 = [0.0] * n
    k1 = [0.0] * n
    k2 = [0.0] * n
    k3 = [0.0] * n
    rhsbuf = [0.0] * n
    yev = [0.0] * n
    J = [0.0] * (n * n)
    W = [0.0] * (n * n)
    piv = [0] * n
    stats = [0, 0, 0, 0]

    ts = []
    ys = []
    vs = []
    es = []
    etas = []
    irs = []
    avs = []

    def append_sample(t, ystate, vval, avval, Earr, irarr):
        ts.append(t)
        ys.append(list(ystate))
        vs.append(vval)
        es.append(list(Earr))
        etas.append([vval - Earr[j] for j in range(p)])
        irs.append(list(irarr))
        avs.append(avval)

    def result(term, t_end, naccept, nreject):
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
            "naccept": naccept,
            "nreject": nreject,
            "nfev": stats[_NFEV],
            "njac": stats[_NJAC],
            "nsolve": stats[_NG],
            "nlu": stats[_NLU],
        }

    vg = -1.0  # cold start: solver begins from the window midpoint
    status, v, av = _rhs(pk, y, current, ctol, vg, f0, lm, node_E, L,
                         node_a2i, node_sh, node_ch, node_ir, stats)
    if status != SOLVE_OK:
        return result(TERM_SOLVER_FAILURE, 0.0, 0, 0)
    vg = v
    append_sample(0.0, y, v, av, node_E, node_ir)

    # initial state may already violate a stop condition
    if v <= v_cutoff:
        return result(TERM_VOLTAGE_CUTOFF, 0.0, 0, 0)
    if y[q + 1] <= eps_min:
        return result(TERM_POROSITY_FLOOR, 0.0, 0, 0)
    if _fatal_species(pk, y, node_ir, current) >= 0:
        return result(TERM_SPECIES_DEPLETED, 0.0, 0, 0)
    if t_max <= 0.0:
        return result(TERM_HORIZON, 0.0, 0, 0)

    t = 0.0
    h = min(dt_init, dt_max)
    naccept = 0
    nreject = 0
    rejects_in_a_row = 0
    node_v = v
    node_av = av
    jac_node = -1  # naccept value the cached Jacobian belongs to

    def stage_eval(ystate, fout):
        nonlocal vg
        st, vv, aa = _rhs(pk, ystate, current, ctol, vg, fout, lm, stg_E, L,
                          stg_a2i, stg_sh, stg_ch, stg_ir, stats)
        if st == SOLVE_OK:
            vg = vv
        return st, vv, aa

    def ev_mass(ystate):
        worst = math.inf
        for i in range(q):
            d = ystate[i] - pk.floor_mass[i]
            if d < worst:
                worst = d
        return worst

    def bisect_state(cond, f1vec):
        # cond > 0 at tau=0, <= 0 at tau=1; returns tau of the crossed side
        ta = 0.0
        tb = 1.0
        for _ in range(80):
            if (tb - ta) * h <= 1e-9 * max(1.0, t + tb * h):
                break
            tm = 0.5 * (ta + tb)
            _hermite(n, y, f0, ynew, f1vec, h, tm, yev)
            if cond(yev) > 0.0:
                ta = tm
            else:
                tb = tm
        return tb

    def bisect_voltage(f1vec):
        nonlocal vg
        ta = 0.0
        tb = 1.0
        for _ in range(80):
            if (tb - ta) * h <= 1e-9 * max(1.0, t + tb * h):
                break
            tm = 0.5 * (ta + tb)
            _hermite(n, y, f0, ynew, f1vec, h, tm, yev)
            ok, aa = _prep(pk, yev, lm, stg_E, L, stg_a2i)
            above = False
            if ok:
                st, vv = _solve_v(pk, stg_a2i, stg_E, L, current, ctol, vg,
                                  stg_sh, stg_ch, stats)
                if st == SOLVE_OK:
                    vg = vv
                    above = vv > v_cutoff
            if above:
                ta = tm
            else:
                tb = tm
        return tb

    while t < t_max:
        if naccept + nreject >= max_steps:
            return result(TERM_SOLVER_FAILURE, t, naccept, nreject)
        if h > dt_max:
            h = dt_max
        hmin = max(1e-13, 4.0 * _EPS * max(1.0, t))
        if h < hmin:
            return result(TERM_SOLVER_FAILURE, t, naccept, nreject)
        # a final sliver step onto the horizon is allowed to undercut hmin
        clamped = False
        if t + h >= t_max:
            h = t_max - t
            clamped = True

        # Jacobian at the accepted node (converged algebraic data on hand);
        # rejections retry from the same node, so the cache stays valid
        if jac_node != naccept:
            _jacobian(pk, y, current, node_av, node_a2i, node_ch, node_ir, J,
                      stats)
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
        errnorm = math.inf

        for i in range(n):
            k1[i] = f0[i]
        _lu_solve(W, piv, n, k1)
        for i in range(n):
            ystage[i] = y[i] + 0.5 * h * k1[i]
        st, _, _ = stage_eval(ystage, F1)
        if st != SOLVE_OK:
            failed = True
        if not failed:
            for i in range(n):
                rhsbuf[i] = F1[i] - k1[i]
            _lu_solve(W, piv, n, rhsbuf)
            for i in range(n):
                k2[i] = rhsbuf[i] + k1[i]
                ynew[i] = y[i] + h * k2[i]
            st, v2, av2 = stage_eval(ynew, F2)
            if st != SOLVE_OK:
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
                yi = abs(y[i])
                yni = abs(ynew[i])
                sc = atol_vec[i] + rtol * (yi if yi > yni else yni)
                e = abs(h6 * (k1[i] - 2.0 * k2[i] + k3[i])) / sc
                if e > errnorm:
                    errnorm = e
            if not math.isfinite(errnorm):
                failed = True
            else:
                # keep the trajectory on the physical manifold: masses and
                # precipitate cannot go negative
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
                fac = 0.9 * math.pow(errnorm, -1.0 / 3.0)
                if fac < 0.1:
                    fac = 0.1
                if fac > 0.9:
                    fac = 0.9
                h *= fac
            continue

        # an otherwise-good step that claims a load-bearing depletion must
        # prove it at a small step before the claim is allowed to terminate
        # the run (see _H_CONFIRM)
        if h > _H_CONFIRM and ev_mass(ynew) <= 0.0:
            if _fatal_species(pk, ynew, stg_ir, current) >= 0:
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
            tau = bisect_voltage(F2)
        if ynew[q + 1] <= eps_min:
            tb = bisect_state(lambda yy: yy[q + 1] - eps_min, F2)
            if term < 0 or tb < tau:
                term = TERM_POROSITY_FLOOR
                tau = tb
        if ev_mass(ynew) <= 0.0:
            fi = _fatal_species(pk, ynew, stg_ir, current)
            if fi >= 0:
                if y[fi] > pk.floor_mass[fi]:
                    tb = bisect_state(
                        lambda yy: yy[fi] - pk.floor_mass[fi], F2)
                else:
                    # under the floor since before this step: the consuming
                    # flux became material only now, so end at the node
                    tb = 1.0
                if term < 0 or tb < tau:
                    term = TERM_SPECIES_DEPLETED
                    tau = tb

        if term >= 0:
            t_end = t + tau * h
            _hermite(n, y, f0, ynew, F2, h, tau, yev)
            ok, aa = _prep(pk, yev, lm, stg_E, L, stg_a2i)
            if ok:
                st, vv = _solve_v(pk, stg_a2i, stg_E, L, current, ctol, vg,
                                  stg_sh, stg_ch, stats)
                if st == SOLVE_OK:
                    for j in range(p):
                        stg_ir[j] = -stg_a2i[j] * stg_sh[j]
                    if t_end > ts[-1]:
                        append_sample(t_end, yev, vv, aa, stg_E, stg_ir)
            return result(term, t_end, naccept, nreject)

        # promote stage data to node data (FSAL: F2 becomes next f0)
        t = tnew
        y, ynew = ynew, y
        f0, F2 = F2, f0
        node_E, stg_E = stg_E, node_E
        node_sh, stg_sh = stg_sh, node_sh
        node_ch, stg_ch = stg_ch, node_ch
        node_ir, stg_ir = stg_ir, node_ir
        node_a2i, stg_a2i = stg_a2i, node_a2i
        node_v = v2
        node_av = av2
        append_sample(t, y, node_v, node_av, node_E, node_ir)

        fac = 5.0 if errnorm == 0.0 else 0.9 * math.pow(errnorm, -1.0 / 3.0)
        if fac < 0.2:
            fac = 0.2
        if fac > 5.0:
            fac = 5.0
        h *= fac

    return result(TERM_HORIZON, t, naccept, nreject)
