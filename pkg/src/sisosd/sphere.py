"""QR preprocessing and soft-input soft-output sphere detection.

The detector solves the max-log soft demapping problem for y = H s + n:
for each coded bit, the difference between the best total metric (channel
distance plus prior cost) over symbol vectors carrying one bit value and
the best over vectors carrying the other.  Three search strategies return
identical LLRs and differ only in child enumeration order, in the metric
used for constraint checks and therefore in counted work:

    "t"  - children in ascending exact increment, found by evaluating and
           sorting all of them;
    "ch" - children in ascending channel increment, prior part replaced
           by its per-level minimum in the checks;
    "pr" - children in ascending prior cost, channel part replaced by the
           increment at the per-axis nearest point.
"""

from collections import namedtuple
from dataclasses import dataclass, field

import numpy as np

from . import _kernels

VARIANTS = ("t", "ch", "pr")
_VARIANT_CODE = {
    "t": _kernels.VARIANT_T,
    "ch": _kernels.VARIANT_CH,
    "pr": _kernels.VARIANT_PR,
}
_TRACE_KIND = ("expand", "visit", "prune", "ml", "bar")

# One search event.  For "visit" events value is the pruning metric and
# pd the exact partial distance; "prune" carries the failing metric;
# "ml"/"bar" carry the new metric; index is the point index (visit/prune)
# or the flat bit index (bar).
TraceEvent = namedtuple("TraceEvent", "kind level index value pd")


@dataclass
class PreprocessedChannel:
    """QR-reduced observation: q_h_y = Q^H y, upper-triangular r, and the
    metric scale inv_two_sigma_sq = 1 / (2 sigma_n^2)."""

    q_h_y: np.ndarray
    r: np.ndarray
    inv_two_sigma_sq: float


@dataclass
class Counters:
    """Work counters for one or more detections.

    complex_mults_pd counts complex multiplications spent on residuals
    and channel increments that enter partial distances; the prune
    bucket counts increments evaluated solely for constraint checks.
    sorts_full counts full child sorts (and, under "pr", the per-level
    prior sorts); min_ops counts per-level prior minimizations ("ch").
    """

    expanded_nodes: int = 0
    complex_mults_pd: int = 0
    complex_mults_prune: int = 0
    sorts_full: int = 0
    min_ops: int = 0

    @property
    def mults_total(self) -> int:
        return self.complex_mults_pd + self.complex_mults_prune

    @classmethod
    def from_array(cls, arr) -> "Counters":
        return cls(int(arr[0]), int(arr[1]), int(arr[2]), int(arr[3]), int(arr[4]))

    def as_array(self) -> np.ndarray:
        return np.array(
            [self.expanded_nodes, self.complex_mults_pd, self.complex_mults_prune,
             self.sorts_full, self.min_ops], dtype=np.int64)

    def merge(self, other: "Counters") -> "Counters":
        self.expanded_nodes += other.expanded_nodes
        self.complex_mults_pd += other.complex_mults_pd
        self.complex_mults_prune += other.complex_mults_prune
        self.sorts_full += other.sorts_full
        self.min_ops += other.min_ops
        return self


@dataclass
class LlrFrame:
    """Detector LLR vectors for one channel use.

    llr_ext = llr_post - llr_a.  clipped marks detections where some bit
    never saw both hypotheses (cannot happen with the default infinite
    initial radius) or where an explicit clip magnitude took effect.
    """

    llr_a: np.ndarray
    llr_post: np.ndarray
    llr_ext: np.ndarray
    clipped: bool = False


def qr_preprocess(h, y, sigma_sq: float) -> PreprocessedChannel:
    """Reduce y = H s + n to an upper-triangular system.

    Uses a Householder QR (thin form) with a diagonal phase correction
    so that r has a real, strictly positive diagonal.

    Raises:
        ValueError: on bad shapes or non-positive sigma_sq.
        np.linalg.LinAlgError: if h is numerically rank deficient.
    """
    h = np.asarray(h, dtype=np.complex128)
    y = np.asarray(y, dtype=np.complex128)
    if h.ndim != 2 or h.shape[0] < h.shape[1]:
        raise ValueError(f"need m_r >= m_t, got shape {h.shape}")
    if y.shape != (h.shape[0],):
        raise ValueError(f"y shape {y.shape} does not match h {h.shape}")
    if not sigma_sq > 0:
        raise ValueError("sigma_sq must be positive")
    q, r = np.linalg.qr(h, mode="reduced")
    diag = np.diagonal(r).copy()
    mag = np.abs(diag)
    if mag.min() <= 1e-10 * mag.max():
        raise np.linalg.LinAlgError("channel matrix is numerically rank deficient")
    phase = diag / mag
    r = r * np.conj(phase)[:, None]
    q = q * phase[None, :]
    # r now has a real positive diagonal; drop rounding dust on it
    np.fill_diagonal(r, np.real(np.diagonal(r)))
    err = np.linalg.norm(q @ r - h) / np.linalg.norm(h)
    assert err < 1e-10, f"QR reconstruction error {err:.3e}"
    return PreprocessedChannel(
        q_h_y=q.conj().T @ y,
        r=r,
        inv_two_sigma_sq=1.0 / (2.0 * sigma_sq),
    )


def delta_channel(pc: PreprocessedChannel, const, level: int,
                  parent_residual: complex, sym: int) -> float:
    """Channel metric increment for choosing point sym at a tree level.

    The counted cost of one evaluation is 2 complex multiplications: the
    diagonal term times the point, and the squared magnitude.
    """
    d = parent_residual - pc.r[level, level].real * const.points[sym]
    return pc.inv_two_sigma_sq * (d.real * d.real + d.imag * d.imag)


def pruning_metric(variant: str, d_parent, dch, dpr, level_min_prior,
                   min_dch_at_level):
    """Constraint-check metric of a child node under one variant.

    "t" uses the exact partial distance; "ch" lower-bounds the prior part
    by the level minimum; "pr" lower-bounds the channel part by the
    increment at the per-axis nearest point.  Accepts scalars or
    broadcastable arrays.
    """
    if variant == "t":
        return d_parent + dch + dpr
    if variant == "ch":
        return d_parent + dch + level_min_prior
    if variant == "pr":
        return d_parent + min_dch_at_level + dpr
    raise ValueError(f"unknown variant {variant!r}")


def _check_dims(pc: PreprocessedChannel, pt, const):
    m_t = pc.r.shape[0]
    if pc.r.shape != (m_t, m_t) or pc.q_h_y.shape != (m_t,):
        raise ValueError("inconsistent preprocessed channel shapes")
    if pt.delta.shape != (m_t, const.order):
        raise ValueError(
            f"prior table shape {pt.delta.shape} does not match "
            f"m_t={m_t}, order={const.order}")
    return m_t


def sts_detect(pc: PreprocessedChannel, pt, const, variant: str,
               clip: float | None = None, trace: list | None = None):
    """Single-tree-search detection.

    Args:
        pc: preprocessed channel.
        pt: PriorTable built for the same a-priori LLRs.
        const: the Constellation in use.
        variant: "t", "ch" or "pr".
        clip: optional output LLR magnitude clip (default off).
        trace: optional list; when given, TraceEvent records of the full
            traversal are appended (test instrumentation).

    Returns:
        (LlrFrame, Counters)
    """
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    m_t = _check_dims(pc, pt, const)
    code = _VARIANT_CODE[variant]
    llr_post = np.empty(m_t * const.bits_per_symbol)
    cnt = np.zeros(_kernels.N_COUNTERS, np.int64)
    if trace is None:
        ti = np.empty((1, 3), np.int64)
        tf = np.empty((1, 2), np.float64)
        _kernels.sts_core(pc.r, pc.q_h_y, pc.inv_two_sigma_sq, const.points,
                          const.labels, const.axis_levels, pt.delta,
                          pt.level_min, pt.sorted_idx, code, llr_post, cnt,
                          ti, tf, False)
    else:
        cap = 4096
        while True:
            cnt[:] = 0
            ti = np.empty((cap, 3), np.int64)
            tf = np.empty((cap, 2), np.float64)
            ntr = _kernels.sts_core(pc.r, pc.q_h_y, pc.inv_two_sigma_sq,
                                    const.points, const.labels,
                                    const.axis_levels, pt.delta, pt.level_min,
                                    pt.sorted_idx, code, llr_post, cnt,
                                    ti, tf, True)
            if ntr <= cap:
                break
            cap = int(ntr)
        for i in range(ntr):
            trace.append(TraceEvent(_TRACE_KIND[ti[i, 0]], int(ti[i, 1]),
                                    int(ti[i, 2]), float(tf[i, 0]),
                                    float(tf[i, 1])))
    clipped = bool(np.any(np.isinf(llr_post)))
    if clip is not None:
        limited = np.clip(llr_post, -clip, clip)
        clipped = clipped or bool(np.any(limited != llr_post))
        llr_post = limited
    frame = LlrFrame(llr_a=pt.llr_a.copy(), llr_post=llr_post,
                     llr_ext=llr_post - pt.llr_a, clipped=clipped)
    return frame, Counters.from_array(cnt)


def _constrained_min(pc, pt, const, pin_level: int, pin_bit: int,
                     pin_val: int) -> float:
    """Best metric over symbol vectors with one label bit pinned.

    Straightforward recursive depth-first search, children in ascending
    exact increment, pruned against the best leaf found so far.  Kept
    independent of the compiled search on purpose: it is the
    cross-implementation reference.
    """
    m_t = pc.r.shape[0]
    pts = const.points
    inv2ss = pc.inv_two_sigma_sq
    path = [0] * m_t
    best = np.inf

    def descend(t: int, acc: float):
        nonlocal best
        b = pc.q_h_y[t]
        for j in range(t + 1, m_t):
            b -= pc.r[t, j] * pts[path[j]]
        rii = pc.r[t, t].real
        scored = []
        for m in range(const.order):
            if t == pin_level and const.labels[m, pin_bit] != pin_val:
                continue
            d = b - rii * pts[m]
            inc = inv2ss * (d.real * d.real + d.imag * d.imag) + pt.delta[t, m]
            scored.append((acc + inc, m))
        scored.sort()
        for dnew, m in scored:
            if dnew >= best:
                break  # ascending order: later children cannot improve
            path[t] = m
            if t == 0:
                best = dnew
            else:
                descend(t - 1, dnew)

    descend(m_t - 1, 0.0)
    return best


def repeated_sd_detect(pc: PreprocessedChannel, pt, const) -> LlrFrame:
    """Max-log LLRs via one pinned hard-output search per bit hypothesis.

    Runs 2 * m_t * q constrained searches and differs from sts_detect in
    code path entirely; used as a mid-scale cross-check where brute force
    is too slow.
    """
    m_t = _check_dims(pc, pt, const)
    q = const.bits_per_symbol
    llr_post = np.empty(m_t * q)
    for lev in range(m_t):
        for j in range(q):
            lam_pos = _constrained_min(pc, pt, const, lev, j, 1)
            lam_neg = _constrained_min(pc, pt, const, lev, j, -1)
            llr_post[lev * q + j] = lam_neg - lam_pos
    return LlrFrame(llr_a=pt.llr_a.copy(), llr_post=llr_post,
                    llr_ext=llr_post - pt.llr_a,
                    clipped=bool(np.any(np.isinf(llr_post))))
