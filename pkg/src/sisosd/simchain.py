"""Stochastic link front-end: Rayleigh channel draws, complex AWGN and
SNR bookkeeping.

Noise convention: one complex sample has total variance 2 sigma_n^2
(sigma_n^2 per real dimension).  Channel entries are unit-variance
circularly-symmetric complex Gaussians, redrawn for every channel use.
"""

from dataclasses import dataclass

import numpy as np


@dataclass
class ChannelUse:
    """One y = h s + n realization, kept with its ingredients."""

    h: np.ndarray
    s: np.ndarray
    y: np.ndarray
    noise: np.ndarray


def ebn0_to_sigma_sq(ebn0_db: float, rate: float, q: int) -> float:
    """Noise variance per real dimension for a target Eb/N0.

    Conventions: unit average symbol energy at each transmit antenna,
    E_b = E_s / (rate * q), and no receive-side M_T power folding.
    """
    if not 0.0 < rate <= 1.0:
        raise ValueError("rate must be in (0, 1]")
    if q < 1:
        raise ValueError("q must be >= 1")
    return 1.0 / (2.0 * rate * q * 10.0 ** (ebn0_db / 10.0))


def draw_channel(rng, m_r: int, m_t: int) -> np.ndarray:
    """One i.i.d. Rayleigh channel matrix, entries CN(0, 1)."""
    g = rng.standard_normal((m_r, m_t, 2))
    return np.sqrt(0.5) * (g[..., 0] + 1j * g[..., 1])


def draw_noise(rng, n: int, sigma_sq: float) -> np.ndarray:
    """n complex noise samples, each CN(0, 2 sigma_sq)."""
    g = rng.standard_normal((n, 2))
    return np.sqrt(sigma_sq) * (g[..., 0] + 1j * g[..., 1])


def transmit(s, h, sigma_sq: float, rng) -> np.ndarray:
    """y = h s + n.  sigma_sq may be 0 for a noiseless pass; the noise
    stream is drawn either way so the generator state advances the same."""
    s = np.asarray(s)
    h = np.asarray(h)
    if h.ndim != 2 or s.shape != (h.shape[1],):
        raise ValueError(f"shape mismatch: h {h.shape}, s {s.shape}")
    if sigma_sq < 0:
        raise ValueError("sigma_sq must be non-negative")
    return h @ s + draw_noise(rng, h.shape[0], sigma_sq)


def make_channel_use(rng, s, sigma_sq: float, m_r: int) -> ChannelUse:
    """Draw a fresh channel and transmit s over it."""
    s = np.asarray(s)
    h = draw_channel(rng, m_r, s.size)
    noise = draw_noise(rng, m_r, sigma_sq)
    return ChannelUse(h=h, s=s, y=h @ s + noise, noise=noise)
