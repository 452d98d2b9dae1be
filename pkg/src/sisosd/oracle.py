"""Brute-force references: exhaustive max-log LLRs and exhaustive MAP
decoding for tiny blocks.

Everything here evaluates metrics directly (no recursion, no pruning) on
purpose; the value of the module is implementation independence from the
search code it checks.  Performance is a non-goal.
"""

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.special import logsumexp

MAX_VECTORS = 1 << 20
MAX_INFO_BITS = 16


@dataclass
class OracleResult:
    """Exhaustive max-log LLRs plus the per-bit hypothesis minima
    (llr = min_metric_neg - min_metric_pos exactly)."""

    llr: np.ndarray
    min_metric_pos: np.ndarray
    min_metric_neg: np.ndarray


@dataclass
class MapOracleResult:
    """Exhaustive MAP posteriors: info-bit LLRs plus per-coded-bit
    posteriors on the systematic and parity streams."""

    llr_info: np.ndarray
    post_sys: np.ndarray
    post_par: np.ndarray


def brute_force_llr(pc, pt, const) -> OracleResult:
    """Max-log LLRs by enumerating every symbol vector.

    d(s) is evaluated from scratch per vector: the full triangular-system
    distance plus the summed prior costs.

    Raises:
        ValueError: if order ** m_t exceeds the enumeration guard.
    """
    m_t = pc.r.shape[0]
    n_vec = const.order**m_t
    if n_vec > MAX_VECTORS:
        raise ValueError(f"{const.order}^{m_t} vectors exceed the oracle guard")
    idx = np.indices((const.order,) * m_t).reshape(m_t, -1).T
    syms = const.points[idx]
    resid = pc.q_h_y[None, :] - syms @ pc.r.T
    dch = pc.inv_two_sigma_sq * np.sum(resid.real**2 + resid.imag**2, axis=1)
    dpr = pt.delta[np.arange(m_t), idx].sum(axis=1)
    d = dch + dpr

    q = const.bits_per_symbol
    llr = np.empty(m_t * q)
    m_pos = np.empty(m_t * q)
    m_neg = np.empty(m_t * q)
    for lev in range(m_t):
        lab = const.labels[idx[:, lev]]
        for j in range(q):
            k = lev * q + j
            m_pos[k] = d[lab[:, j] > 0].min()
            m_neg[k] = d[lab[:, j] < 0].min()
            llr[k] = m_neg[k] - m_pos[k]
    return OracleResult(llr=llr, min_metric_pos=m_pos, min_metric_neg=m_neg)


def brute_force_map_bits(trellis, llr_sys, llr_par,
                         llr_apriori=None) -> MapOracleResult:
    """Exact MAP bit LLRs by summing over every terminated codeword.

    Args:
        trellis: the convolutional code description.
        llr_sys, llr_par: channel LLRs, length n_info + n_tail.
        llr_apriori: optional a-priori LLRs on the n_info free input bits.

    Raises:
        ValueError: on length mismatch or if the block exceeds the
            2**MAX_INFO_BITS enumeration guard.
    """
    llr_sys = np.asarray(llr_sys, dtype=np.float64)
    llr_par = np.asarray(llr_par, dtype=np.float64)
    if llr_sys.shape != llr_par.shape or llr_sys.ndim != 1:
        raise ValueError("mismatched stream lengths")
    n = llr_sys.size
    n_info = n - trellis.n_tail
    if n_info < 1 or n_info > MAX_INFO_BITS:
        raise ValueError(f"block of {n_info} info bits outside oracle range")

    words = np.arange(1 << n_info)
    u_all = (words[:, None] >> np.arange(n_info)[::-1]) & 1
    state = np.zeros(1 << n_info, dtype=np.int64)
    sys_b = np.empty((1 << n_info, n), dtype=np.int64)
    par_b = np.empty((1 << n_info, n), dtype=np.int64)
    for j in range(n):
        uj = u_all[:, j] if j < n_info else trellis.term_input[state]
        sys_b[:, j] = uj
        par_b[:, j] = trellis.parity[state, uj]
        state = trellis.next_state[state, uj]
    assert np.all(state == 0), "enumeration failed to terminate"

    c_sys = 2.0 * sys_b - 1.0
    c_par = 2.0 * par_b - 1.0
    sys_in = llr_sys.copy()
    if llr_apriori is not None:
        llr_apriori = np.asarray(llr_apriori, dtype=np.float64)
        if llr_apriori.shape != (n_info,):
            raise ValueError("a-priori length must equal the info length")
        sys_in[:n_info] += llr_apriori
    weight = 0.5 * (c_sys @ sys_in + c_par @ llr_par)

    post_sys = np.empty(n)
    post_par = np.empty(n)
    for j in range(n):
        for post, c in ((post_sys, c_sys), (post_par, c_par)):
            hi = weight[c[:, j] > 0]
            lo = weight[c[:, j] < 0]
            a = logsumexp(hi) if hi.size else -np.inf
            b = logsumexp(lo) if lo.size else -np.inf
            post[j] = a - b
    return MapOracleResult(llr_info=post_sys[:n_info], post_sys=post_sys,
                           post_par=post_par)


def write_golden_llrs(path, llr, seed: int, m_t: int, m_r: int, order: int,
                      sigma_sq: float) -> None:
    """Write LLRs as text: a header recording the generating setup, then
    one value per line at 17 significant digits."""
    lines = [
        f"# seed={seed} m_t={m_t} m_r={m_r} qam={order} sigma_sq={sigma_sq:.17g}"
    ]
    lines.extend(f"{v:.17g}" for v in np.asarray(llr, dtype=np.float64))
    Path(path).write_text("\n".join(lines) + "\n")


def read_golden_llrs(path):
    """Read a golden LLR file; returns (header dict, llr array)."""
    text = Path(path).read_text().strip().splitlines()
    if not text or not text[0].startswith("#"):
        raise ValueError(f"{path}: missing golden-file header")
    header = {}
    for tok in text[0].lstrip("# ").split():
        key, _, val = tok.partition("=")
        header[key] = float(val) if "." in val or "e" in val else int(val)
    return header, np.array([float(t) for t in text[1:]])
