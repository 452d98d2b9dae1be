"""Per-level symbol prior tables built from a-priori bit LLRs.

The LLR sign convention everywhere is llr = ln(P[c = +1] / P[c = -1])
on bipolar bits.  A symbol's prior cost is -ln P[symbol], the sum of
its per-bit costs ln(1 + exp(-bit * llr)).
"""

from dataclasses import dataclass

import numpy as np

# |llr| is clamped here before the table is built; beyond this the
# per-bit cost saturates well below double precision anyway.
LLR_CLAMP = 50.0


@dataclass
class PriorTable:
    """Symbol prior costs for one detection, indexed [level][point].

    Attributes:
        delta: (m_t, order) array, -ln P[point] per tree level.
        level_min: (m_t,) minimum of each delta row.
        sorted_idx: (m_t, order) point indices sorted by ascending delta,
            ties broken by ascending point index.
        llr_a: flat copy of the a-priori LLRs the table was built from,
            length m_t * bits_per_symbol (unclamped).
    """

    delta: np.ndarray
    level_min: np.ndarray
    sorted_idx: np.ndarray
    llr_a: np.ndarray


def bit_cost_table(llr_rows: np.ndarray, labels: np.ndarray) -> np.ndarray:
    """Symbol prior costs for a batch of levels.

    Args:
        llr_rows: (n, q) a-priori LLRs, one row per tree level.
        labels: (order, q) bipolar labels.

    Returns:
        (n, order) array of -ln P[point] per row.
    """
    x = np.clip(llr_rows, -LLR_CLAMP, LLR_CLAMP)
    # cost per (row, point, bit) = ln(1 + exp(-label * llr))
    arg = -x[:, None, :] * labels[None, :, :].astype(np.float64)
    return np.logaddexp(0.0, arg).sum(axis=2)


def build_prior_table(llr_a, const) -> PriorTable:
    """Build the per-level prior table for one detection.

    Args:
        llr_a: a-priori LLRs, length m_t * bits_per_symbol, level 1 first.
        const: the Constellation in use.

    Returns:
        PriorTable with finite entries; each row's probabilities
        exp(-delta) sum to 1 by construction.
    """
    q = const.bits_per_symbol
    llr_a = np.asarray(llr_a, dtype=np.float64)
    if llr_a.ndim != 1 or llr_a.size % q:
        raise ValueError(f"LLR vector length {llr_a.size} not a multiple of {q}")
    rows = llr_a.reshape(-1, q)
    delta = bit_cost_table(rows, const.labels)
    return PriorTable(
        delta=delta,
        level_min=delta.min(axis=1),
        sorted_idx=np.argsort(delta, axis=1, kind="stable"),
        llr_a=llr_a.copy(),
    )


def symbol_prior(table: PriorTable, level: int, sym: int) -> float:
    """-ln P[point sym] at a tree level (levels counted from 0)."""
    if not 0 <= level < table.delta.shape[0]:
        raise IndexError(f"level {level} out of range")
    if not 0 <= sym < table.delta.shape[1]:
        raise IndexError(f"symbol index {sym} out of range")
    return float(table.delta[level, sym])
