"""Compiled cores: single-tree-search detection and log-MAP decoding.

Everything here is numba-compiled and operates on plain arrays; the
public wrappers in sphere.py and coding.py own validation, dataclasses
and trace decoding.
"""

import numpy as np
from numba import njit

VARIANT_T = 0
VARIANT_CH = 1
VARIANT_PR = 2

# trace event kinds
TRACE_EXPAND = 0
TRACE_VISIT = 1
TRACE_PRUNE = 2
TRACE_ML = 3
TRACE_BAR = 4

# counter slots
CNT_EXPANDED = 0
CNT_MULTS_PD = 1
CNT_MULTS_PRUNE = 2
CNT_SORTS_FULL = 3
CNT_MIN_OPS = 4
N_COUNTERS = 5


@njit(cache=True)
def _sts_radius(lam_ml, lam_bar, labels, ml_m, path_m, t, q):
    """Reference radius for constraint checks of level-t children.

    Shared by all siblings of one parent: counts lam_ml, every
    counter-hypothesis metric at levels <= t (their bits can still be
    updated by some sibling subtree), and at decided levels above only
    the bits where the path label differs from the ML label.  Sharing
    the radius across siblings is what makes pruning all later siblings
    after one failed check lossless: the metric is non-decreasing across
    siblings while the radius never grows.
    """
    if lam_ml == np.inf:
        return np.inf
    r2 = lam_ml
    for k in range((t + 1) * q):
        v = lam_bar[k]
        if v > r2:
            r2 = v
    m_t = path_m.shape[0]
    for lev in range(t + 1, m_t):
        pa = path_m[lev]
        ma = ml_m[lev]
        for j in range(q):
            if labels[pa, j] != labels[ma, j]:
                v = lam_bar[lev * q + j]
                if v > r2:
                    r2 = v
    return r2


@njit(cache=True)
def sts_core(r_mat, yp, inv2ss, points, labels, axis_levels,
             delta, level_min, sorted_idx, variant,
             llr_post, counters, trace_i, trace_f, trace_on):
    """Depth-first single tree search producing max-log posterior LLRs.

    Args:
        r_mat: (m, m) upper-triangular with real positive diagonal.
        yp: (m,) rotated observation.
        inv2ss: 1 / (2 sigma_n^2).
        points, labels, axis_levels: constellation tables.
        delta, level_min, sorted_idx: prior tables, rows indexed by level.
        variant: VARIANT_T, VARIANT_CH or VARIANT_PR.
        llr_post: (m * q,) output, posterior LLRs.
        counters: (5,) int64, accumulated in place.
        trace_i: (cap, 3) int64 event buffer rows (kind, level, index).
        trace_f: (cap, 2) float64 per-event values; for visits these are
            (pruning metric, exact partial distance).
        trace_on: record events when true.

    Returns:
        Number of trace events generated (may exceed the buffer size, in
        which case the excess events were dropped).
    """
    m_t = r_mat.shape[0]
    n_sym = points.shape[0]
    q = labels.shape[1]
    u_ax = axis_levels.shape[0]
    n_bits = m_t * q
    cap = trace_i.shape[0]
    ntr = 0

    path_m = np.zeros(m_t, np.int64)
    ml_m = np.full(m_t, -1, np.int64)
    acc = np.zeros(m_t, np.float64)
    res = np.zeros(m_t, np.complex128)
    lam_bar = np.full(n_bits, np.inf)
    lam_ml = np.inf
    pos = np.zeros(m_t, np.int64)

    # full-enumeration state (variant T)
    fes_key = np.zeros((m_t, n_sym))
    fes_dch = np.zeros((m_t, n_sym))
    fes_ord = np.zeros((m_t, n_sym), np.int64)

    # incremental channel-order state (variant Ch): per-axis sorted costs
    # plus a staircase frontier over the rank grid
    cu_rcost = np.zeros((m_t, u_ax))
    cu_icost = np.zeros((m_t, u_ax))
    cu_rrank = np.zeros((m_t, u_ax), np.int64)
    cu_irank = np.zeros((m_t, u_ax), np.int64)
    cu_vnext = np.zeros((m_t, u_ax), np.int64)
    cu_nstart = np.zeros(m_t, np.int64)
    cu_emit = np.zeros((m_t, n_sym), np.int64)
    cu_emitn = np.zeros(m_t, np.int64)
    cu_emitp = np.zeros(m_t, np.int64)

    # prior-order state (variant Pr); pr_seen marks whether the sliced
    # symbol's channel increment got reused by a surviving child
    pr_mstar = np.zeros(m_t, np.int64)
    pr_dchmin = np.zeros(m_t, np.float64)
    pr_seen = np.zeros(m_t, np.uint8)

    # per-detection bookkeeping charges: level-wise prior minima (Ch) or
    # level-wise full prior sorts (Pr) happen once, outside the search
    if variant == VARIANT_CH:
        counters[CNT_MIN_OPS] += m_t
    elif variant == VARIANT_PR:
        counters[CNT_SORTS_FULL] += m_t

    rc = np.empty(u_ax)
    ic = np.empty(u_ax)

    t = m_t - 1
    need_expand = True
    while True:
        if need_expand:
            need_expand = False
            counters[CNT_EXPANDED] += 1
            b = yp[t]
            for j in range(t + 1, m_t):
                b -= r_mat[t, j] * points[path_m[j]]
            counters[CNT_MULTS_PD] += m_t - 1 - t
            res[t] = b
            rii = r_mat[t, t].real
            pos[t] = 0
            if trace_on:
                if ntr < cap:
                    trace_i[ntr, 0] = TRACE_EXPAND
                    trace_i[ntr, 1] = t
                    trace_i[ntr, 2] = -1
                    trace_f[ntr, 0] = 0.0
                    trace_f[ntr, 1] = np.nan
                ntr += 1
            if variant == VARIANT_T:
                for sm in range(n_sym):
                    d = b - rii * points[sm]
                    dch = inv2ss * (d.real * d.real + d.imag * d.imag)
                    fes_dch[t, sm] = dch
                    fes_key[t, sm] = dch + delta[t, sm]
                counters[CNT_MULTS_PD] += 2 * n_sym
                counters[CNT_SORTS_FULL] += 1
                # stable insertion sort of indices by hybrid key
                for sm in range(n_sym):
                    key = fes_key[t, sm]
                    i = sm
                    while i > 0 and fes_key[t, fes_ord[t, i - 1]] > key:
                        fes_ord[t, i] = fes_ord[t, i - 1]
                        i -= 1
                    fes_ord[t, i] = sm
            elif variant == VARIANT_CH:
                zr = b.real / rii
                zi = b.imag / rii
                for u in range(u_ax):
                    d1 = zr - axis_levels[u]
                    rc[u] = d1 * d1
                    d2 = zi - axis_levels[u]
                    ic[u] = d2 * d2
                for u in range(u_ax):
                    cu_rrank[t, u] = u
                    cu_irank[t, u] = u
                for a in range(1, u_ax):
                    x = cu_rrank[t, a]
                    i = a
                    while i > 0 and rc[cu_rrank[t, i - 1]] > rc[x]:
                        cu_rrank[t, i] = cu_rrank[t, i - 1]
                        i -= 1
                    cu_rrank[t, i] = x
                for a in range(1, u_ax):
                    x = cu_irank[t, a]
                    i = a
                    while i > 0 and ic[cu_irank[t, i - 1]] > ic[x]:
                        cu_irank[t, i] = cu_irank[t, i - 1]
                        i -= 1
                    cu_irank[t, i] = x
                for u in range(u_ax):
                    cu_rcost[t, u] = rc[cu_rrank[t, u]]
                    cu_icost[t, u] = ic[cu_irank[t, u]]
                    cu_vnext[t, u] = 0
                cu_nstart[t] = 1
                cu_emitn[t] = 0
                cu_emitp[t] = 0
            else:
                # one channel increment at the per-axis nearest point; its
                # value lower-bounds every sibling's channel increment
                zr = b.real / rii
                zi = b.imag / rii
                um = 0
                vm = 0
                cbest = np.inf
                for u in range(u_ax):
                    d1 = zr - axis_levels[u]
                    c = d1 * d1
                    if c < cbest:
                        cbest = c
                        um = u
                cbest = np.inf
                for u in range(u_ax):
                    d2 = zi - axis_levels[u]
                    c = d2 * d2
                    if c < cbest:
                        cbest = c
                        vm = u
                mstar = u_ax * um + vm
                d = b - rii * points[mstar]
                pr_dchmin[t] = inv2ss * (d.real * d.real + d.imag * d.imag)
                pr_mstar[t] = mstar
                pr_seen[t] = 0

        # fetch the next child at level t in the variant's order
        got = False
        sym = -1
        pm = 0.0
        dch = -1.0
        dpr = 0.0
        if variant == VARIANT_T:
            if pos[t] < n_sym:
                sym = fes_ord[t, pos[t]]
                pos[t] += 1
                dch = fes_dch[t, sym]
                dpr = delta[t, sym]
                pm = acc[t] + dch + dpr
                got = True
        elif variant == VARIANT_CH:
            if cu_emitp[t] < cu_emitn[t]:
                sym = cu_emit[t, cu_emitp[t]]
                cu_emitp[t] += 1
                got = True
            else:
                best = np.inf
                for u in range(cu_nstart[t]):
                    v = cu_vnext[t, u]
                    if v < u_ax:
                        c = cu_rcost[t, u] + cu_icost[t, v]
                        if c < best:
                            best = c
                if best < np.inf:
                    # drain the exact-tie group, emit by ascending index
                    gn = 0
                    u = 0
                    while u < cu_nstart[t]:
                        v = cu_vnext[t, u]
                        while v < u_ax and cu_rcost[t, u] + cu_icost[t, v] == best:
                            cu_emit[t, gn] = u_ax * cu_rrank[t, u] + cu_irank[t, v]
                            gn += 1
                            v += 1
                            if v == 1 and u + 1 == cu_nstart[t] and u + 1 < u_ax:
                                cu_nstart[t] += 1
                        cu_vnext[t, u] = v
                        u += 1
                    for a in range(1, gn):
                        x = cu_emit[t, a]
                        i = a
                        while i > 0 and cu_emit[t, i - 1] > x:
                            cu_emit[t, i] = cu_emit[t, i - 1]
                            i -= 1
                        cu_emit[t, i] = x
                    cu_emitn[t] = gn
                    cu_emitp[t] = 1
                    sym = cu_emit[t, 0]
                    got = True
            if got:
                d = res[t] - r_mat[t, t].real * points[sym]
                dch = inv2ss * (d.real * d.real + d.imag * d.imag)
                counters[CNT_MULTS_PD] += 2
                dpr = delta[t, sym]
                pm = acc[t] + dch + level_min[t]
        else:
            if pos[t] < n_sym:
                sym = sorted_idx[t, pos[t]]
                pos[t] += 1
                dpr = delta[t, sym]
                pm = acc[t] + pr_dchmin[t] + dpr
                got = True

        if got:
            r2 = _sts_radius(lam_ml, lam_bar, labels, ml_m, path_m, t, q)
            if pm >= r2:
                if trace_on:
                    if ntr < cap:
                        trace_i[ntr, 0] = TRACE_PRUNE
                        trace_i[ntr, 1] = t
                        trace_i[ntr, 2] = sym
                        trace_f[ntr, 0] = pm
                        trace_f[ntr, 1] = np.nan
                    ntr += 1
                got = False

        if not got:
            # tearing down this node's enumeration; if the sliced symbol
            # never survived a check, its channel increment was spent on
            # pruning metrics alone
            if variant == VARIANT_PR and pr_seen[t] == 0:
                counters[CNT_MULTS_PRUNE] += 2
            t += 1
            if t >= m_t:
                break
            continue

        # surviving child: complete its exact partial distance
        if variant == VARIANT_PR:
            counters[CNT_MULTS_PD] += 2
            if sym == pr_mstar[t]:
                dch = pr_dchmin[t]
                pr_seen[t] = 1
            else:
                d = res[t] - r_mat[t, t].real * points[sym]
                dch = inv2ss * (d.real * d.real + d.imag * d.imag)
        dtot = acc[t] + dch + dpr
        path_m[t] = sym

        if trace_on:
            if ntr < cap:
                trace_i[ntr, 0] = TRACE_VISIT
                trace_i[ntr, 1] = t
                trace_i[ntr, 2] = sym
                trace_f[ntr, 0] = pm
                trace_f[ntr, 1] = dtot
            ntr += 1

        if t > 0:
            acc[t - 1] = dtot
            t -= 1
            need_expand = True
            continue

        # leaf: update the ML hypothesis or counter-hypotheses with the
        # exact metric
        if dtot < lam_ml:
            if ml_m[0] >= 0:
                for lev in range(m_t):
                    pa = path_m[lev]
                    ma = ml_m[lev]
                    for j in range(q):
                        if labels[pa, j] != labels[ma, j]:
                            k = lev * q + j
                            lam_bar[k] = lam_ml
                            if trace_on:
                                if ntr < cap:
                                    trace_i[ntr, 0] = TRACE_BAR
                                    trace_i[ntr, 1] = lev
                                    trace_i[ntr, 2] = k
                                    trace_f[ntr, 0] = lam_ml
                                    trace_f[ntr, 1] = np.nan
                                ntr += 1
            lam_ml = dtot
            for lev in range(m_t):
                ml_m[lev] = path_m[lev]
            if trace_on:
                if ntr < cap:
                    trace_i[ntr, 0] = TRACE_ML
                    trace_i[ntr, 1] = 0
                    trace_i[ntr, 2] = -1
                    trace_f[ntr, 0] = dtot
                    trace_f[ntr, 1] = np.nan
                ntr += 1
        else:
            for lev in range(m_t):
                pa = path_m[lev]
                ma = ml_m[lev]
                for j in range(q):
                    if labels[pa, j] != labels[ma, j]:
                        k = lev * q + j
                        if dtot < lam_bar[k]:
                            lam_bar[k] = dtot
                            if trace_on:
                                if ntr < cap:
                                    trace_i[ntr, 0] = TRACE_BAR
                                    trace_i[ntr, 1] = lev
                                    trace_i[ntr, 2] = k
                                    trace_f[ntr, 0] = dtot
                                    trace_f[ntr, 1] = np.nan
                                ntr += 1

    for lev in range(m_t):
        for j in range(q):
            k = lev * q + j
            sgn = 1.0 if labels[ml_m[lev], j] > 0 else -1.0
            llr_post[k] = sgn * (lam_bar[k] - lam_ml)
    return ntr


@njit(cache=True)
def detect_frame_batch(r_all, yp_all, inv2ss, points, labels, axis_levels,
                       delta_all, level_min_all, sorted_idx_all, variant,
                       llr_post_all, counters):
    """Run sts_core over every channel use of a frame (no tracing)."""
    tr_i = np.empty((1, 3), np.int64)
    tr_f = np.empty((1, 2), np.float64)
    for i in range(r_all.shape[0]):
        sts_core(r_all[i], yp_all[i], inv2ss, points, labels, axis_levels,
                 delta_all[i], level_min_all[i], sorted_idx_all[i], variant,
                 llr_post_all[i], counters, tr_i, tr_f, False)


@njit(cache=True)
def _jac(a, b):
    """Exact jacobian logarithm max*(a, b) = ln(e^a + e^b)."""
    if a == -np.inf:
        return b
    if b == -np.inf:
        return a
    if a > b:
        return a + np.log1p(np.exp(b - a))
    return b + np.log1p(np.exp(a - b))


@njit(cache=True)
def bcjr_core(llr_sys, llr_par, llr_ap, n_info, next_state, parity_bip,
              term_input, post_sys, post_par):
    """Exact log-MAP forward-backward pass over a terminated trellis.

    Args:
        llr_sys, llr_par: (n,) channel LLRs of systematic/parity bits.
        llr_ap: (n,) a-priori LLRs of input bits; entries past n_info are
            ignored (tail inputs are forced, not estimated).
        n_info: number of free input steps; steps n_info..n-1 take the
            terminating input term_input[state].
        next_state, parity_bip: (n_states, 2) trellis tables, parity as
            bipolar values.
        post_sys, post_par: (n,) outputs, posterior LLRs per coded bit.
    """
    n = llr_sys.shape[0]
    n_states = next_state.shape[0]

    alpha = np.full((n + 1, n_states), -np.inf)
    alpha[0, 0] = 0.0
    for j in range(n):
        for s in range(n_states):
            a = alpha[j, s]
            if a == -np.inf:
                continue
            lo = 0
            hi = 1
            if j >= n_info:
                lo = term_input[s]
                hi = lo
            for u in range(lo, hi + 1):
                c_sys = 2.0 * u - 1.0
                g = 0.5 * (c_sys * llr_sys[j] + parity_bip[s, u] * llr_par[j])
                if j < n_info:
                    g += 0.5 * c_sys * llr_ap[j]
                ns = next_state[s, u]
                alpha[j + 1, ns] = _jac(alpha[j + 1, ns], a + g)
        mx = -np.inf
        for s in range(n_states):
            if alpha[j + 1, s] > mx:
                mx = alpha[j + 1, s]
        for s in range(n_states):
            alpha[j + 1, s] -= mx

    beta = np.full((n + 1, n_states), -np.inf)
    beta[n, 0] = 0.0
    for j in range(n - 1, -1, -1):
        for s in range(n_states):
            lo = 0
            hi = 1
            if j >= n_info:
                lo = term_input[s]
                hi = lo
            acc = -np.inf
            for u in range(lo, hi + 1):
                c_sys = 2.0 * u - 1.0
                g = 0.5 * (c_sys * llr_sys[j] + parity_bip[s, u] * llr_par[j])
                if j < n_info:
                    g += 0.5 * c_sys * llr_ap[j]
                ns = next_state[s, u]
                if beta[j + 1, ns] > -np.inf:
                    acc = _jac(acc, g + beta[j + 1, ns])
            beta[j, s] = acc
        mx = -np.inf
        for s in range(n_states):
            if beta[j, s] > mx:
                mx = beta[j, s]
        for s in range(n_states):
            beta[j, s] -= mx

    for j in range(n):
        p_sys = -np.inf
        m_sys = -np.inf
        p_par = -np.inf
        m_par = -np.inf
        for s in range(n_states):
            a = alpha[j, s]
            if a == -np.inf:
                continue
            lo = 0
            hi = 1
            if j >= n_info:
                lo = term_input[s]
                hi = lo
            for u in range(lo, hi + 1):
                c_sys = 2.0 * u - 1.0
                g = 0.5 * (c_sys * llr_sys[j] + parity_bip[s, u] * llr_par[j])
                if j < n_info:
                    g += 0.5 * c_sys * llr_ap[j]
                ns = next_state[s, u]
                if beta[j + 1, ns] == -np.inf:
                    continue
                v = a + g + beta[j + 1, ns]
                if c_sys > 0.0:
                    p_sys = _jac(p_sys, v)
                else:
                    m_sys = _jac(m_sys, v)
                if parity_bip[s, u] > 0.0:
                    p_par = _jac(p_par, v)
                else:
                    m_par = _jac(m_par, v)
        post_sys[j] = p_sys - m_sys
        post_par[j] = p_par - m_par
