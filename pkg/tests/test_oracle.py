from pathlib import Path

import numpy as np
import pytest

from sisosd.coding import TRELLIS, rsc_encode
from sisosd.oracle import (MAX_INFO_BITS, brute_force_llr,
                           brute_force_map_bits, read_golden_llrs,
                           write_golden_llrs)
from sisosd.prior import build_prior_table, symbol_prior
from sisosd.sphere import delta_channel, qr_preprocess

from conftest import make_instance, make_rng

GOLDEN_DIR = Path(__file__).parent / "golden"


def test_single_level_noiseless_signs():
    rng = make_rng(61)
    from sisosd.constellation import build_gray_qam
    const = build_gray_qam(4)
    for _ in range(20):
        bits = (2 * rng.integers(0, 2, size=2) - 1).astype(np.int8)
        s = const.map_bits(bits)
        h = rng.standard_normal((1, 1)) + 1j * rng.standard_normal((1, 1))
        pc = qr_preprocess(h, h @ s, 1e-6)
        pt = build_prior_table(np.zeros(2), const)
        res = brute_force_llr(pc, pt, const)
        assert np.array_equal(np.sign(res.llr), bits)
        assert np.allclose(res.llr, res.min_metric_neg - res.min_metric_pos)


def test_direct_metric_equals_leaf_recursion():
    # the exhaustive evaluation and the per-level recursion must price
    # every full vector identically
    rng = make_rng(62)
    pc, pt, const, _ = make_instance(62, m_t=4, m_r=4, order=16)
    m_t = 4
    for _ in range(100):
        path = rng.integers(0, 16, size=m_t)
        d_rec = 0.0
        for t in range(m_t - 1, -1, -1):
            resid = pc.q_h_y[t] - sum(
                pc.r[t, j] * const.points[path[j]] for j in range(t + 1, m_t))
            d_rec += delta_channel(pc, const, t, resid, int(path[t]))
            d_rec += symbol_prior(pt, t, int(path[t]))
        s = const.points[path]
        r_full = pc.q_h_y - pc.r @ s
        d_direct = (pc.inv_two_sigma_sq * np.sum(np.abs(r_full) ** 2)
                    + sum(pt.delta[t, path[t]] for t in range(m_t)))
        assert abs(d_rec - d_direct) < 1e-10


def test_llr_invariant_under_enumeration_order():
    pc, pt, const, _ = make_instance(63, m_t=3, m_r=3, order=4)
    res = brute_force_llr(pc, pt, const)
    # recompute with a reversed enumeration of all vectors
    m_t = 3
    idx = np.indices((4,) * m_t).reshape(m_t, -1).T[::-1]
    syms = const.points[idx]
    resid = pc.q_h_y[None, :] - syms @ pc.r.T
    d = (pc.inv_two_sigma_sq * np.sum(np.abs(resid) ** 2, axis=1)
         + pt.delta[np.arange(m_t), idx].sum(axis=1))
    for lev in range(m_t):
        lab = const.labels[idx[:, lev]]
        for j in range(const.bits_per_symbol):
            k = lev * const.bits_per_symbol + j
            ref = d[lab[:, j] < 0].min() - d[lab[:, j] > 0].min()
            assert abs(res.llr[k] - ref) < 1e-12


def test_llr_invariant_under_prior_level_shift():
    pc, pt, const, _ = make_instance(64, m_t=3, m_r=3, order=4)
    base = brute_force_llr(pc, pt, const).llr
    pt.delta[1] += 0.37
    pt.level_min[1] += 0.37
    shifted = brute_force_llr(pc, pt, const).llr
    assert np.max(np.abs(shifted - base)) < 1e-9


def test_vector_count_guard():
    pc, pt, const, _ = make_instance(65, m_t=6, m_r=6, order=16,
                                     prior_scale=0.0)
    with pytest.raises(ValueError):
        brute_force_llr(pc, pt, const)


def _golden_roundtrip(name):
    header, llr = read_golden_llrs(GOLDEN_DIR / name)
    pc, pt, const, _ = make_instance(header["seed"], m_t=header["m_t"],
                                     m_r=header["m_r"], order=header["qam"],
                                     sigma_sq=header["sigma_sq"])
    fresh = brute_force_llr(pc, pt, const).llr
    assert llr.shape == fresh.shape
    assert np.max(np.abs(fresh - llr)) < 1e-12


def test_golden_llr_files_regenerate():
    _golden_roundtrip("llr_2x2_qpsk_seed1234.txt")
    _golden_roundtrip("llr_4x4_qam16_seed77.txt")


def test_golden_write_read_roundtrip(tmp_path):
    llr = np.array([0.25, -3.5, 1e-17, 7.123456789012345])
    path = tmp_path / "g.txt"
    write_golden_llrs(path, llr, seed=9, m_t=2, m_r=2, order=4, sigma_sq=0.125)
    header, back = read_golden_llrs(path)
    assert header == {"seed": 9, "m_t": 2, "m_r": 2, "qam": 4,
                      "sigma_sq": 0.125}
    assert np.array_equal(back, llr)
    (tmp_path / "bad.txt").write_text("1.0\n2.0\n")
    with pytest.raises(ValueError):
        read_golden_llrs(tmp_path / "bad.txt")


# ------------------------------------------------------- MAP bit oracle


def test_map_oracle_confident_at_high_snr():
    # transmitted all-zero frame: every posterior points at the sent bits
    info = -np.ones(8, dtype=np.int8)
    coded = rsc_encode(info)
    llr = 12.0 * coded.astype(np.float64)
    res = brute_force_map_bits(TRELLIS, llr[0::2], llr[1::2])
    assert np.all(res.llr_info < -8.0)
    assert np.array_equal(np.sign(res.post_sys), coded[0::2])
    assert np.array_equal(np.sign(res.post_par), coded[1::2])


def test_map_oracle_codeword_translation_equivariance():
    # xor by a codeword permutes the codebook; with -1 as logical 0 that
    # xor is a sign flip by the negated codeword, so scaling the LLRs by
    # -c scales every posterior the same way
    rng = make_rng(66)
    sys = 1.5 * rng.standard_normal(10)
    par = 1.5 * rng.standard_normal(10)
    ap = rng.standard_normal(8)
    info_c = (2 * rng.integers(0, 2, size=8) - 1).astype(np.int8)
    t = -rsc_encode(info_c).astype(float)
    t_info = -info_c.astype(float)
    a = brute_force_map_bits(TRELLIS, sys, par, ap)
    b = brute_force_map_bits(TRELLIS, t[0::2] * sys, t[1::2] * par,
                             t_info * ap)
    assert np.allclose(b.llr_info, t_info * a.llr_info, atol=1e-9)
    assert np.allclose(b.post_sys, t[0::2] * a.post_sys, atol=1e-9)
    assert np.allclose(b.post_par, t[1::2] * a.post_par, atol=1e-9)


def test_map_oracle_guards():
    n = MAX_INFO_BITS + TRELLIS.n_tail + 1
    with pytest.raises(ValueError):
        brute_force_map_bits(TRELLIS, np.zeros(n), np.zeros(n))
    with pytest.raises(ValueError):
        brute_force_map_bits(TRELLIS, np.zeros(6), np.zeros(5))
    with pytest.raises(ValueError):
        brute_force_map_bits(TRELLIS, np.zeros(6), np.zeros(6),
                             np.zeros(3))
