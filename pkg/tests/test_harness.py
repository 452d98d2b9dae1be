import contextlib
import io
import json
from pathlib import Path

import numpy as np
import pytest

from sisosd import cli, coding
from sisosd.harness import (SimConfig, frame_geometry, frame_sigma_sq,
                            normalize, parse_config_file, parse_schedule,
                            run_experiment, run_iterative_frame)

BASE = dict(m_t=4, m_r=4, qam_order=16, iterations=2, schedule="t",
            info_bits=96, frames=2, seed=3)


def small_cfg(**kw):
    args = dict(BASE)
    args.update(kw)
    return normalize(SimConfig(**args))


# ------------------------------------------------------------- config


def test_parse_schedule_forms():
    assert parse_schedule("t", 3) == ("t", "t", "t")
    assert parse_schedule("t,ch,pr", 3) == ("t", "ch", "pr")
    assert parse_schedule("schedule:ch,ch", 2) == ("ch", "ch")
    assert parse_schedule(("pr", "t"), 2) == ("pr", "t")
    with pytest.raises(ValueError):
        parse_schedule("t,ch", 3)
    with pytest.raises(ValueError):
        parse_schedule("typ", 1)


def test_normalize_rejects_bad_configs():
    bad = [dict(m_t=4, m_r=2), dict(qam_order=64), dict(iterations=0),
           dict(info_bits=0), dict(frames=0), dict(workers=0),
           dict(ebn0_db=()), dict(llr_clip=-1.0)]
    for kw in bad:
        with pytest.raises(ValueError):
            small_cfg(**kw)


def test_normalize_expands_ebn0_scalar():
    cfg = small_cfg(ebn0_db=6)
    assert cfg.ebn0_db == (6.0,)
    cfg = small_cfg(ebn0_db=[4, 8])
    assert cfg.ebn0_db == (4.0, 8.0)


def test_parse_config_file_full(tmp_path):
    text = """
# comment line
m_t = 4
m_r = 4
qam_order = 16
ebn0_db = 4, 8
iterations = 3
schedule = t,ch,pr
info_bits = 1152
frames = 7
seed = 11
llr_clip = none
workers = 2
verify_oracle = false
verify_all_variants = true
"""
    path = tmp_path / "run.cfg"
    path.write_text(text)
    cfg = parse_config_file(path)
    assert cfg.ebn0_db == (4.0, 8.0)
    assert cfg.schedule == "t,ch,pr"
    assert cfg.frames == 7 and cfg.seed == 11 and cfg.workers == 2
    assert cfg.llr_clip is None
    assert cfg.verify_all_variants and not cfg.verify_oracle
    cfg = normalize(cfg)
    assert cfg.schedule == ("t", "ch", "pr")


def test_parse_config_file_errors(tmp_path):
    cases = {
        "unknown.cfg": "mt = 4\n",
        "dup.cfg": "seed = 1\nseed = 2\n",
        "noeq.cfg": "seed 1\n",
        "badbool.cfg": "verify_oracle = maybe\n",
    }
    for name, text in cases.items():
        path = tmp_path / name
        path.write_text(text)
        with pytest.raises(ValueError):
            parse_config_file(path)


def test_parse_config_file_llr_clip(tmp_path):
    path = tmp_path / "clip.cfg"
    path.write_text("llr_clip = 25.0\n")
    assert parse_config_file(path).llr_clip == 25.0


# ----------------------------------------------------------- geometry


def test_frame_geometry_full_size():
    cfg = small_cfg(info_bits=9216)
    n_coded, n_padded, n_pad, n_use = frame_geometry(cfg)
    assert n_coded == 2 * (9216 + 2)
    assert n_padded % 16 == 0
    assert n_padded - n_coded == n_pad == 12
    assert n_use == n_padded // 16 == 1153


def test_frame_geometry_reduced_size():
    cfg = small_cfg(info_bits=1152)
    assert frame_geometry(cfg) == (2308, 2320, 12, 145)


def test_frame_sigma_sq_folds_receive_array():
    cfg = small_cfg()
    v = frame_sigma_sq(cfg, 8.0)
    assert abs(v - 4.0 / (4.0 * 10.0 ** 0.8)) < 1e-15
    cfg1 = small_cfg(m_t=2, m_r=2, qam_order=4)
    assert abs(frame_sigma_sq(cfg1, 0.0) - 2.0 / (2.0 * 0.5 * 2)) < 1e-15


# ------------------------------------------------------------- frames


def _frame(cfg, ebn0=8.0, index=0, keep=None):
    ivl = coding.build_interleaver(frame_geometry(cfg)[0], cfg.seed)
    return run_iterative_frame(cfg, ebn0, index, ivl, keep=keep)


def test_noiseless_frame_has_zero_errors():
    cfg = small_cfg(iterations=1)
    fr = _frame(cfg, ebn0=90.0)
    assert fr.errors.tolist() == [0]
    assert not fr.clipped


def test_variants_agree_within_frame():
    cfg = small_cfg(verify_all_variants=True)
    fr = _frame(cfg)
    assert fr.max_variant_dev == 0.0
    # every variant expanded nodes and paid pd multiplications
    assert np.all(fr.counters[:, :, :2] > 0)


def test_frame_matches_oracle():
    cfg = small_cfg(iterations=2, verify_oracle=True)
    fr = _frame(cfg)
    assert fr.max_oracle_dev < 1e-9


def test_frame_is_deterministic():
    cfg = small_cfg()
    a = _frame(cfg)
    b = _frame(cfg)
    assert np.array_equal(a.errors, b.errors)
    assert np.array_equal(a.counters, b.counters)
    c = _frame(cfg, index=1)
    assert not np.array_equal(a.counters, c.counters)


def test_first_iteration_prior_is_uniform():
    cfg = small_cfg(iterations=1)
    keep = {}
    _frame(cfg, keep=keep)
    assert np.all(keep["priors"][0] == 0.0)


def test_error_counts_bounded_by_info_bits():
    cfg = small_cfg(iterations=3)
    fr = _frame(cfg, ebn0=0.0)
    assert np.all(fr.errors >= 0)
    assert np.all(fr.errors <= cfg.info_bits)


# --------------------------------------------------------- experiment


def read_outputs(out_dir):
    out = Path(out_dir)
    return {
        "csv": (out / "results.csv").read_text(),
        "summary": (out / "summary.json").read_text(),
        "plot": (out / "plot_data.json").read_text(),
    }


def test_run_experiment_outputs(tmp_path):
    cfg = SimConfig(**dict(BASE, frames=3, verify_all_variants=True,
                           out_dir=str(tmp_path / "a")))
    reports = run_experiment(cfg)[8.0]
    files = read_outputs(tmp_path / "a")

    lines = files["csv"].splitlines()
    header = [ln for ln in lines if not ln.startswith("#")][0]
    assert header == ("iteration,variant,expanded_nodes_avg,mults_pd_avg,"
                      "mults_prune_avg,mults_total_avg,ber,frames,seed")
    echo = dict(ln[2:].split("=", 1) for ln in lines if ln.startswith("#"))
    assert echo["prng"] == "philox4x64"
    assert "sigma_sq" in echo and "workers" not in echo and "out_dir" not in echo
    rows = [ln.split(",") for ln in lines if ln and not ln.startswith("#")][1:]
    assert len(rows) == 2 * 3            # iterations x variants
    for r in rows:
        assert 0.0 <= float(r[6]) <= 0.5 + 1e-9

    summary = json.loads(files["summary"])
    assert summary["max_variant_llr_dev"] == 0.0
    for entry, rep in zip(summary["iterations"], reports):
        assert entry["variant"] == rep.variant
        assert entry["mults_total"]["total"] == (entry["mults_pd"]["total"]
                                                 + entry["mults_prune"]["total"])
        assert entry["expanded_nodes"]["avg"] == rep.expanded_nodes_avg
        assert entry["ber"] == rep.ber

    plot = json.loads(files["plot"])
    assert plot["iteration"] == [1, 2]
    series = plot["series"]
    for group in ("expanded_nodes", "multiplications"):
        assert set(series[group]) == {"scheduled", "t", "ch", "pr"}
        assert all(len(v) == 2 for v in series[group].values())


def test_run_experiment_deterministic_across_runs_and_workers(tmp_path):
    outs = []
    for name, workers in (("r1", 1), ("r2", 1), ("r3", 2)):
        cfg = SimConfig(**dict(BASE, frames=4, workers=workers,
                               out_dir=str(tmp_path / name)))
        run_experiment(cfg)
        outs.append(read_outputs(tmp_path / name))
    assert outs[0] == outs[1]
    assert outs[0] == outs[2]


def test_run_experiment_multi_ebn0_suffixes(tmp_path):
    cfg = SimConfig(**dict(BASE, iterations=1, frames=1,
                           ebn0_db=(6.0, 8.0), out_dir=str(tmp_path)))
    reports = run_experiment(cfg)
    assert set(reports) == {6.0, 8.0}
    for suffix in ("_eb6dB", "_eb8dB"):
        assert (tmp_path / f"results{suffix}.csv").exists()
        assert (tmp_path / f"summary{suffix}.json").exists()


# ------------------------------------------------------------------ CLI


def _run_cli(args):
    out, err = io.StringIO(), io.StringIO()
    with contextlib.redirect_stdout(out), contextlib.redirect_stderr(err):
        code = cli.main(args)
    return code, out.getvalue(), err.getvalue()


def test_cli_end_to_end(tmp_path):
    code, out, err = _run_cli([
        "--ebn0", "8", "--iterations", "2", "--variant", "ch",
        "--frames", "2", "--seed", "5", "--out", str(tmp_path / "cli")])
    assert code == 0, err
    assert "Eb/N0 = 8 dB" in out
    assert (tmp_path / "cli" / "results.csv").exists()
    lines = (tmp_path / "cli" / "results.csv").read_text().splitlines()
    assert "# schedule=ch,ch" in lines
    assert "# info_bits=9216" in lines


def test_cli_config_file_with_overrides(tmp_path):
    cfgfile = tmp_path / "run.cfg"
    cfgfile.write_text("info_bits = 96\nframes = 2\niterations = 1\n"
                       "schedule = t\nseed = 2\n")
    code, out, _ = _run_cli(["--config", str(cfgfile), "--frames", "1",
                             "--out", str(tmp_path / "o")])
    assert code == 0
    assert "1 frames x 96 info bits" in out


def test_cli_rejects_bad_input(tmp_path):
    code, _, err = _run_cli(["--variant", "bogus", "--frames", "1"])
    assert code == 1
    assert "error:" in err
    code, _, err = _run_cli(["--config", str(tmp_path / "missing.cfg")])
    assert code == 1
