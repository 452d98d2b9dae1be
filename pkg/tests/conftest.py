"""Shared helpers: seeded random detection instances used across tests."""

import numpy as np

from sisosd.constellation import build_gray_qam
from sisosd.prior import build_prior_table
from sisosd.simchain import draw_channel, draw_noise
from sisosd.sphere import qr_preprocess


def make_rng(seed):
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed)))


def make_instance(seed, m_t=4, m_r=4, order=16, sigma_sq=0.125,
                  prior_scale=2.0):
    """One random detection problem: channel use plus a-priori LLRs.

    The draw order (bits, channel, noise, priors) is part of the recipe;
    golden files regenerate instances through this function from the
    recorded seed and dimensions.

    Returns (pc, pt, const, extras); extras carries the raw draws.
    """
    rng = make_rng(seed)
    const = build_gray_qam(order)
    q = const.bits_per_symbol
    bits = (2 * rng.integers(0, 2, size=m_t * q) - 1).astype(np.int8)
    s = const.map_bits(bits)
    h = draw_channel(rng, m_r, m_t)
    y = h @ s + draw_noise(rng, m_r, sigma_sq)
    if prior_scale:
        llr_a = prior_scale * rng.standard_normal(m_t * q)
    else:
        llr_a = np.zeros(m_t * q)
    pc = qr_preprocess(h, y, sigma_sq)
    pt = build_prior_table(llr_a, const)
    extras = {"h": h, "s": s, "y": y, "bits": bits, "llr_a": llr_a,
              "sigma_sq": sigma_sq}
    return pc, pt, const, extras
