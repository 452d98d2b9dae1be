"""Outer code of the iterative loop: (5/7) octal rate-1/2 recursive
systematic convolutional code, exact log-MAP decoding, and a seeded
random interleaver.

Bipolar convention: logical bit b maps to 2b - 1, so -1 is logical 0.
LLRs are ln(P[+1]/P[-1]).
"""

from dataclasses import dataclass

import numpy as np

from . import _kernels


class Trellis:
    """Memory-2 recursive systematic code, feedback 1+D+D^2 (7 octal),
    feedforward 1+D^2 (5 octal).

    State packs the feedback register as (newest cell << 1) | oldest.
    term_input[s] is the input that drives the register toward zero; two
    such steps terminate from any state.
    """

    n_states = 4
    n_tail = 2

    def __init__(self):
        ns = np.zeros((4, 2), dtype=np.int64)
        par = np.zeros((4, 2), dtype=np.int64)
        term = np.zeros(4, dtype=np.int64)
        for s in range(4):
            s1, s2 = s >> 1, s & 1
            for u in (0, 1):
                w = u ^ s1 ^ s2
                par[s, u] = w ^ s2
                ns[s, u] = (w << 1) | s1
            term[s] = s1 ^ s2
        self.next_state = ns
        self.parity = par
        self.parity_bip = 2.0 * par - 1.0
        self.term_input = term


TRELLIS = Trellis()


def rsc_encode(info_bits) -> np.ndarray:
    """Encode bipolar info bits; returns 2*(K + 2) bipolar coded bits.

    Output is systematic/parity pairs; two tail pairs terminate the
    trellis in the zero state.
    """
    info = np.asarray(info_bits)
    if info.ndim != 1 or info.size < 1:
        raise ValueError("need a non-empty info bit vector")
    k = info.size
    u_log = (info > 0).astype(np.int64)
    out = np.empty(2 * (k + TRELLIS.n_tail), dtype=np.int8)
    s = 0
    for j in range(k + TRELLIS.n_tail):
        u = u_log[j] if j < k else TRELLIS.term_input[s]
        out[2 * j] = 2 * u - 1
        out[2 * j + 1] = 2 * TRELLIS.parity[s, u] - 1
        s = TRELLIS.next_state[s, u]
    assert s == 0
    return out


def bcjr_decode(llr_sys, llr_par, llr_apriori=None):
    """Exact log-MAP decode of one terminated frame.

    Args:
        llr_sys, llr_par: channel LLRs for the systematic and parity
            streams, length K + 2 (tail included).
        llr_apriori: optional a-priori LLRs on the K info bits.

    Returns:
        (llr_post_info, llr_ext_coded): a-posteriori LLRs of the K info
        bits, and extrinsic LLRs of all coded bits in encoder pair order
        (length 2*(K + 2)).  For systematic bits
        llr_post = llr_apriori + llr_sys + llr_ext holds exactly.
    """
    llr_sys = np.ascontiguousarray(llr_sys, dtype=np.float64)
    llr_par = np.ascontiguousarray(llr_par, dtype=np.float64)
    if llr_sys.shape != llr_par.shape or llr_sys.ndim != 1:
        raise ValueError("systematic/parity LLR lengths differ")
    n = llr_sys.size
    n_info = n - TRELLIS.n_tail
    if n_info < 1:
        raise ValueError("frame shorter than the tail")
    if not (np.all(np.isfinite(llr_sys)) and np.all(np.isfinite(llr_par))):
        raise ValueError("non-finite channel LLRs")
    ap = np.zeros(n)
    if llr_apriori is not None:
        llr_apriori = np.asarray(llr_apriori, dtype=np.float64)
        if llr_apriori.shape != (n_info,):
            raise ValueError("a-priori length must be the info length")
        ap[:n_info] = llr_apriori

    post_sys = np.empty(n)
    post_par = np.empty(n)
    _kernels.bcjr_core(llr_sys, llr_par, ap, n_info, TRELLIS.next_state,
                       TRELLIS.parity_bip, TRELLIS.term_input, post_sys,
                       post_par)
    ext = np.empty(2 * n)
    ext[0::2] = post_sys - llr_sys - ap
    ext[1::2] = post_par - llr_par
    return post_sys[:n_info].copy(), ext


@dataclass
class Interleaver:
    """A fixed bijective reordering with the seed that produced it."""

    permutation: np.ndarray
    seed: int


def build_interleaver(n: int, seed: int) -> Interleaver:
    """Random permutation of length n from a counter-based generator, so
    the same seed reproduces it on any platform."""
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))
    return Interleaver(permutation=rng.permutation(n), seed=seed)


def interleave(v, ivl: Interleaver) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != ivl.permutation.size:
        raise ValueError(
            f"vector length {v.shape[0]} != permutation {ivl.permutation.size}")
    return v[ivl.permutation]


def deinterleave(v, ivl: Interleaver) -> np.ndarray:
    v = np.asarray(v)
    if v.shape[0] != ivl.permutation.size:
        raise ValueError(
            f"vector length {v.shape[0]} != permutation {ivl.permutation.size}")
    out = np.empty_like(v)
    out[ivl.permutation] = v
    return out
