"""Simulation driver: iterative detection/decoding over a coded MIMO
link, with exact work counters, BER aggregation and machine-readable
results.

Per-frame randomness comes from independent Philox streams keyed by
(master seed, frame index), so frames can be processed by any number of
workers in any order and still aggregate to byte-identical output files.
Per frame the draw order is: info bits, then all channel matrices, then
all noise samples.
"""

import json
import multiprocessing
import os
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from . import _kernels, coding
from .constellation import build_gray_qam
from .oracle import brute_force_llr
from .prior import LLR_CLAMP, PriorTable, bit_cost_table
from .simchain import ebn0_to_sigma_sq
from .sphere import VARIANTS, Counters, PreprocessedChannel

PRNG_ALGORITHM = "philox4x64"
CODE_RATE = 0.5
_FRAME_STREAM = 1  # spawn-key prefix for per-frame generators
_VARIANT_CODE = {"t": _kernels.VARIANT_T, "ch": _kernels.VARIANT_CH,
                 "pr": _kernels.VARIANT_PR}
_FLUSH_EVERY = 32  # frames between partial result flushes

# config keys that are execution parameters, not experiment parameters;
# they never enter the config echo so outputs stay comparable
_NO_ECHO = ("out_dir", "workers")


@dataclass
class SimConfig:
    """Experiment description.

    schedule may be a single variant token ("t", "ch", "pr"), a comma
    list, or an already-expanded tuple; normalize() expands it to one
    entry per iteration.
    """

    m_t: int = 4
    m_r: int = 4
    qam_order: int = 16
    ebn0_db: tuple = (8.0,)
    iterations: int = 6
    schedule: object = "t"
    info_bits: int = 9216
    frames: int = 200
    seed: int = 1
    out_dir: str | None = None
    llr_clip: float | None = None
    workers: int = 1
    verify_oracle: bool = False
    verify_all_variants: bool = False


@dataclass
class IterationReport:
    """Aggregated per-iteration outcome, exact totals plus averages."""

    iteration: int
    variant: str
    expanded_nodes_avg: float
    mults_pd_avg: float
    mults_prune_avg: float
    mults_total_avg: float
    ber: float
    frames: int
    expanded_total: int = 0
    mults_pd_total: int = 0
    mults_prune_total: int = 0
    sorts_total: int = 0
    min_ops_total: int = 0
    uses: int = 0
    errors: int = 0
    info_bits_total: int = 0


@dataclass
class FrameResult:
    """Integer outcome of one frame, cheap to merge across workers."""

    frame_index: int
    uses: int
    errors: np.ndarray    # (iterations,)
    counters: np.ndarray  # (iterations, 3 variants, 5 counter slots)
    clipped: bool
    max_variant_dev: float
    max_oracle_dev: float


def parse_schedule(value, iterations: int) -> tuple:
    """Expand a variant token / comma list / sequence to per-iteration
    variants."""
    if isinstance(value, str):
        text = value.strip()
        if text.startswith("schedule:"):
            text = text[len("schedule:"):]
        toks = tuple(t.strip() for t in text.split(",") if t.strip())
    else:
        toks = tuple(value)
    if len(toks) == 1:
        toks = toks * iterations
    if len(toks) != iterations:
        raise ValueError(
            f"schedule length {len(toks)} does not match iterations {iterations}")
    for t in toks:
        if t not in VARIANTS:
            raise ValueError(f"unknown variant {t!r} in schedule")
    return toks


def normalize(cfg: SimConfig) -> SimConfig:
    """Validate a config and expand its schedule; raises ValueError on
    any inconsistency, before any frame runs."""
    if cfg.m_r < cfg.m_t or cfg.m_t < 1:
        raise ValueError(f"need m_r >= m_t >= 1, got {cfg.m_r}x{cfg.m_t}")
    if cfg.qam_order not in (4, 16):
        raise ValueError(f"unsupported qam_order {cfg.qam_order}")
    if cfg.iterations < 1:
        raise ValueError("iterations must be >= 1")
    if cfg.info_bits < 1:
        raise ValueError("info_bits must be >= 1")
    if cfg.frames < 1:
        raise ValueError("frames must be >= 1")
    if cfg.workers < 1:
        raise ValueError("workers must be >= 1")
    ebn0 = tuple(float(e) for e in (
        cfg.ebn0_db if isinstance(cfg.ebn0_db, (tuple, list)) else (cfg.ebn0_db,)))
    if not ebn0:
        raise ValueError("ebn0_db must not be empty")
    if cfg.llr_clip is not None and not cfg.llr_clip > 0:
        raise ValueError("llr_clip must be positive or None")
    return replace(cfg, ebn0_db=ebn0,
                   schedule=parse_schedule(cfg.schedule, cfg.iterations))


_BOOL_TOKENS = {"true": True, "yes": True, "1": True,
                "false": False, "no": False, "0": False}


def parse_config_file(path) -> SimConfig:
    """Read a flat key = value config file; unknown keys are errors."""
    path = Path(path)
    known = {f.name: f for f in fields(SimConfig)}
    kv = {}
    for ln, raw in enumerate(path.read_text().splitlines(), start=1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise ValueError(f"{path}:{ln}: expected key = value")
        key, _, val = line.partition("=")
        key = key.strip()
        val = val.strip()
        if key not in known:
            raise ValueError(f"{path}:{ln}: unknown config key {key!r}")
        if key in kv:
            raise ValueError(f"{path}:{ln}: duplicate config key {key!r}")
        kv[key] = val

    cfg = SimConfig()
    for key, val in kv.items():
        if key in ("m_t", "m_r", "qam_order", "iterations", "info_bits",
                   "frames", "seed", "workers"):
            setattr(cfg, key, int(val))
        elif key == "ebn0_db":
            cfg.ebn0_db = tuple(float(t) for t in val.split(",") if t.strip())
        elif key == "schedule":
            cfg.schedule = val
        elif key == "out_dir":
            cfg.out_dir = val
        elif key == "llr_clip":
            cfg.llr_clip = None if val.lower() == "none" else float(val)
        elif key in ("verify_oracle", "verify_all_variants"):
            try:
                setattr(cfg, key, _BOOL_TOKENS[val.lower()])
            except KeyError:
                raise ValueError(f"{path}: bad boolean {val!r} for {key}") from None
    return cfg


def frame_geometry(cfg: SimConfig):
    """(coded bits, padded stream length, pad bits, channel uses)."""
    q = 4 if cfg.qam_order == 16 else 2
    per_use = cfg.m_t * q
    n_coded = 2 * (cfg.info_bits + coding.TRELLIS.n_tail)
    n_use = -(-n_coded // per_use)
    return n_coded, n_use * per_use, n_use * per_use - n_coded, n_use


def frame_sigma_sq(cfg: SimConfig, ebn0_db: float) -> float:
    """Noise variance used for one Eb/N0 point.

    Eb is referenced to the energy the whole receive array collects per
    information bit; with unit per-stream symbol energy that folds a
    factor m_r into the variance.  The realized value is echoed in every
    results file.
    """
    q = cfg.qam_order.bit_length() - 1
    return cfg.m_r * ebn0_to_sigma_sq(ebn0_db, CODE_RATE, q)


def run_iterative_frame(cfg: SimConfig, ebn0_db: float, frame_index: int,
                        ivl: coding.Interleaver, keep: dict | None = None,
                        ) -> FrameResult:
    """Simulate one frame through all iterations.

    Per iteration: detect every channel use with the decoder's
    (interleaved) extrinsic as a-priori input, hand the detector
    extrinsic to the decoder, count info-bit sign errors on the decoder
    posterior, and feed the decoder extrinsic back as the next prior.

    When keep is a dict it receives the intermediate vectors (priors,
    posteriors, decoded LLRs, channel arrays) for inspection.
    """
    const = build_gray_qam(cfg.qam_order)
    q = const.bits_per_symbol
    per_use = cfg.m_t * q
    n_coded, n_padded, n_pad, n_use = frame_geometry(cfg)
    sigma_sq = frame_sigma_sq(cfg, ebn0_db)
    inv2ss = 1.0 / (2.0 * sigma_sq)

    rng = np.random.Generator(np.random.Philox(
        np.random.SeedSequence(cfg.seed, spawn_key=(_FRAME_STREAM, frame_index))))
    info = (1 - 2 * rng.integers(0, 2, size=cfg.info_bits)).astype(np.int8)
    coded = coding.rsc_encode(info)
    tx_stream = np.concatenate(
        [coding.interleave(coded, ivl), np.ones(n_pad, dtype=np.int8)])
    syms = const.points[const.to_indices(tx_stream)].reshape(n_use, cfg.m_t)

    g = rng.standard_normal((n_use, cfg.m_r, cfg.m_t, 2))
    h_all = np.sqrt(0.5) * (g[..., 0] + 1j * g[..., 1])
    g = rng.standard_normal((n_use, cfg.m_r, 2))
    noise = np.sqrt(sigma_sq) * (g[..., 0] + 1j * g[..., 1])
    y_all = np.einsum("uij,uj->ui", h_all, syms) + noise

    q_all, r_all = np.linalg.qr(h_all)
    diag = np.diagonal(r_all, axis1=1, axis2=2)
    mag = np.abs(diag)
    if np.any(mag.min(axis=1) <= 1e-10 * mag.max(axis=1)):
        raise np.linalg.LinAlgError(
            f"rank-deficient channel draw in frame {frame_index}")
    phase = diag / mag
    r_all = np.ascontiguousarray(r_all * np.conj(phase)[:, :, None])
    q_all = q_all * phase[:, None, :]
    ii = np.arange(cfg.m_t)
    r_all[:, ii, ii] = r_all[:, ii, ii].real
    yp_all = np.ascontiguousarray(np.einsum("uji,uj->ui", q_all.conj(), y_all))

    errors = np.zeros(cfg.iterations, np.int64)
    counters = np.zeros((cfg.iterations, len(VARIANTS), _kernels.N_COUNTERS),
                        np.int64)
    clipped = False
    max_var_dev = 0.0
    max_oracle_dev = 0.0
    prior = np.zeros(n_padded)
    if keep is not None:
        keep["channel"] = (r_all, yp_all, inv2ss)
        keep["tx_stream"] = tx_stream
        keep["info"] = info
        keep["priors"] = []
        keep["posts"] = []
        keep["decoded"] = []

    run_all = cfg.verify_all_variants
    for it in range(cfg.iterations):
        sched = cfg.schedule[it]
        if keep is not None:
            keep["priors"].append(prior.copy())
        rows = prior.reshape(n_use * cfg.m_t, q)
        delta_all = np.ascontiguousarray(
            bit_cost_table(rows, const.labels).reshape(n_use, cfg.m_t, const.order))
        level_min_all = np.ascontiguousarray(delta_all.min(axis=2))
        sorted_all = np.ascontiguousarray(
            np.argsort(delta_all, axis=2, kind="stable"))

        posts = {}
        for v in (VARIANTS if run_all else (sched,)):
            llr_post = np.empty((n_use, per_use))
            cnt = np.zeros(_kernels.N_COUNTERS, np.int64)
            _kernels.detect_frame_batch(
                r_all, yp_all, inv2ss, const.points, const.labels,
                const.axis_levels, delta_all, level_min_all, sorted_all,
                _VARIANT_CODE[v], llr_post, cnt)
            counters[it, VARIANTS.index(v)] += cnt
            posts[v] = llr_post
        post = posts[sched]
        for v, other in posts.items():
            if v != sched:
                max_var_dev = max(max_var_dev,
                                  float(np.max(np.abs(other - post))))
        if cfg.verify_oracle:
            prior_rows = prior.reshape(n_use, per_use)
            for i in range(n_use):
                pc = PreprocessedChannel(q_h_y=yp_all[i], r=r_all[i],
                                         inv_two_sigma_sq=inv2ss)
                pt = PriorTable(delta=delta_all[i], level_min=level_min_all[i],
                                sorted_idx=sorted_all[i], llr_a=prior_rows[i])
                ref = brute_force_llr(pc, pt, const).llr
                max_oracle_dev = max(max_oracle_dev,
                                     float(np.max(np.abs(ref - post[i]))))

        post_flat = post.reshape(-1)
        if np.any(np.isinf(post_flat)):
            clipped = True
        if cfg.llr_clip is not None:
            limited = np.clip(post_flat, -cfg.llr_clip, cfg.llr_clip)
            clipped = clipped or bool(np.any(limited != post_flat))
            post_flat = limited
        ext = post_flat - prior
        dec_in = coding.deinterleave(ext[:n_coded], ivl)
        post_info, ext_coded = coding.bcjr_decode(dec_in[0::2], dec_in[1::2])
        errors[it] = int(np.sum((post_info > 0) != (info > 0)))
        # Saturate feedback at the bound the prior tables apply internally;
        # otherwise the extrinsic subtraction above removes more than the
        # detector actually consumed and strong LLRs flip sign.
        fed = np.clip(coding.interleave(ext_coded, ivl), -LLR_CLAMP, LLR_CLAMP)
        prior = np.concatenate([fed, np.zeros(n_pad)])
        if keep is not None:
            keep["posts"].append(post.copy())
            keep["decoded"].append(post_info.copy())

    return FrameResult(frame_index=frame_index, uses=n_use, errors=errors,
                       counters=counters, clipped=clipped,
                       max_variant_dev=max_var_dev,
                       max_oracle_dev=max_oracle_dev)


class _Aggregate:
    """Commutative merge of FrameResults plus report/file generation."""

    def __init__(self, cfg: SimConfig):
        self.cfg = cfg
        self.errors = np.zeros(cfg.iterations, np.int64)
        self.counters = np.zeros(
            (cfg.iterations, len(VARIANTS), _kernels.N_COUNTERS), np.int64)
        self.uses = 0
        self.frames = 0
        self.clipped_frames = 0
        self.max_variant_dev = 0.0
        self.max_oracle_dev = 0.0

    def add(self, fr: FrameResult):
        self.errors += fr.errors
        self.counters += fr.counters
        self.uses += fr.uses
        self.frames += 1
        self.clipped_frames += int(fr.clipped)
        self.max_variant_dev = max(self.max_variant_dev, fr.max_variant_dev)
        self.max_oracle_dev = max(self.max_oracle_dev, fr.max_oracle_dev)

    def reports(self) -> list[IterationReport]:
        cfg = self.cfg
        out = []
        bits_total = self.frames * cfg.info_bits
        for it in range(cfg.iterations):
            sched = cfg.schedule[it]
            variants = VARIANTS if cfg.verify_all_variants else (sched,)
            for v in variants:
                c = self.counters[it, VARIANTS.index(v)]
                cnt = Counters.from_array(c)
                out.append(IterationReport(
                    iteration=it + 1,
                    variant=v,
                    expanded_nodes_avg=cnt.expanded_nodes / self.uses,
                    mults_pd_avg=cnt.complex_mults_pd / self.uses,
                    mults_prune_avg=cnt.complex_mults_prune / self.uses,
                    mults_total_avg=cnt.mults_total / self.uses,
                    ber=int(self.errors[it]) / bits_total,
                    frames=self.frames,
                    expanded_total=cnt.expanded_nodes,
                    mults_pd_total=cnt.complex_mults_pd,
                    mults_prune_total=cnt.complex_mults_prune,
                    sorts_total=cnt.sorts_full,
                    min_ops_total=cnt.min_ops,
                    uses=self.uses,
                    errors=int(self.errors[it]),
                    info_bits_total=bits_total,
                ))
        return out


def _echo_items(cfg: SimConfig, ebn0_db: float) -> list[tuple[str, str]]:
    items = [("prng", PRNG_ALGORITHM)]
    for f in fields(SimConfig):
        if f.name in _NO_ECHO:
            continue
        val = getattr(cfg, f.name)
        if f.name == "ebn0_db":
            val = repr(float(ebn0_db))
        elif f.name == "schedule":
            val = ",".join(val)
        elif isinstance(val, float):
            val = repr(val)
        items.append((f.name, str(val)))
    items.append(("sigma_sq", repr(frame_sigma_sq(cfg, ebn0_db))))
    return items


def _fmt(x: float) -> str:
    return repr(float(x))


def _write_atomic(path: Path, text: str):
    try:
        tmp = path.with_name(path.name + ".tmp")
        tmp.write_text(text)
        os.replace(tmp, path)
    except OSError as exc:
        raise RuntimeError(f"failed writing {path}: {exc}") from exc


def _write_outputs(cfg: SimConfig, ebn0_db: float, agg: _Aggregate,
                   suffix: str):
    out_dir = Path(cfg.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    reports = agg.reports()
    echo = _echo_items(cfg, ebn0_db)

    lines = [f"# {k}={v}" for k, v in echo]
    lines.append("iteration,variant,expanded_nodes_avg,mults_pd_avg,"
                 "mults_prune_avg,mults_total_avg,ber,frames,seed")
    for r in reports:
        lines.append(
            f"{r.iteration},{r.variant},{_fmt(r.expanded_nodes_avg)},"
            f"{_fmt(r.mults_pd_avg)},{_fmt(r.mults_prune_avg)},"
            f"{_fmt(r.mults_total_avg)},{_fmt(r.ber)},{r.frames},{cfg.seed}")
    _write_atomic(out_dir / f"results{suffix}.csv", "\n".join(lines) + "\n")

    n_coded, n_padded, n_pad, n_use = frame_geometry(cfg)
    summary = {
        "prng": PRNG_ALGORITHM,
        "config": dict(echo[1:]),
        "geometry": {"coded_bits": n_coded, "padded_bits": n_padded,
                     "pad_bits": n_pad, "uses_per_frame": n_use},
        "clipped_frames": agg.clipped_frames,
        "max_variant_llr_dev": agg.max_variant_dev,
        "max_oracle_llr_dev": agg.max_oracle_dev,
        "iterations": [
            {
                "iteration": r.iteration,
                "variant": r.variant,
                "expanded_nodes": {"total": r.expanded_total, "uses": r.uses,
                                   "avg": r.expanded_nodes_avg},
                "mults_pd": {"total": r.mults_pd_total, "avg": r.mults_pd_avg},
                "mults_prune": {"total": r.mults_prune_total,
                                "avg": r.mults_prune_avg},
                "mults_total": {"total": r.mults_pd_total + r.mults_prune_total,
                                "avg": r.mults_total_avg},
                "sorts_full": r.sorts_total,
                "min_ops": r.min_ops_total,
                "bit_errors": r.errors,
                "info_bits": r.info_bits_total,
                "ber": r.ber,
                "frames": r.frames,
            }
            for r in reports
        ],
    }
    _write_atomic(out_dir / f"summary{suffix}.json",
                  json.dumps(summary, indent=2, sort_keys=True) + "\n")

    by_variant = {}
    sched_rows = {}
    for r in reports:
        by_variant.setdefault(r.variant, {})[r.iteration] = r
        if r.variant == cfg.schedule[r.iteration - 1]:
            sched_rows[r.iteration] = r
    its = list(range(1, cfg.iterations + 1))
    nodes = {"scheduled": [sched_rows[i].expanded_nodes_avg for i in its]}
    mults = {"scheduled": [sched_rows[i].mults_total_avg for i in its]}
    for v, rows in by_variant.items():
        if len(rows) == len(its):
            nodes[v] = [rows[i].expanded_nodes_avg for i in its]
            mults[v] = [rows[i].mults_total_avg for i in its]
    plot = {
        "prng": PRNG_ALGORITHM,
        "config": dict(echo[1:]),
        "iteration": its,
        "series": {"expanded_nodes": nodes, "multiplications": mults},
    }
    _write_atomic(out_dir / f"plot_data{suffix}.json",
                  json.dumps(plot, indent=2, sort_keys=True) + "\n")


_WORKER_CTX: dict = {}


def _init_worker(cfg, ebn0_db, ivl):
    _WORKER_CTX["args"] = (cfg, ebn0_db, ivl)


def _frame_task(frame_index: int) -> FrameResult:
    cfg, ebn0_db, ivl = _WORKER_CTX["args"]
    return run_iterative_frame(cfg, ebn0_db, frame_index, ivl)


def _warmup():
    """Compile the kernels in the parent before any workers fork."""
    const = build_gray_qam(4)
    r = np.eye(2, dtype=np.complex128)
    yp = const.points[:2].copy()
    delta = np.full((2, 4), 4 * np.log(2.0) / 2)
    lmin = delta.min(axis=1)
    sidx = np.argsort(delta, axis=1, kind="stable")
    llr = np.empty(4)
    cnt = np.zeros(_kernels.N_COUNTERS, np.int64)
    for code in _VARIANT_CODE.values():
        _kernels.detect_frame_batch(r[None], yp[None], 1.0, const.points,
                                    const.labels, const.axis_levels,
                                    delta[None], lmin[None], sidx[None],
                                    code, llr[None], cnt)
    post = np.empty(4)
    _kernels.bcjr_core(np.zeros(4), np.zeros(4), np.zeros(4), 2,
                       coding.TRELLIS.next_state, coding.TRELLIS.parity_bip,
                       coding.TRELLIS.term_input, post, post.copy())


def run_experiment(cfg: SimConfig) -> dict:
    """Run the full Monte Carlo campaign.

    Returns {ebn0_db: [IterationReport, ...]} and, when cfg.out_dir is
    set, writes results/summary/plot-data files per Eb/N0 point (partial
    results are flushed every few frame batches).
    """
    cfg = normalize(cfg)
    _warmup()
    n_coded, _, _, _ = frame_geometry(cfg)
    ivl = coding.build_interleaver(n_coded, cfg.seed)
    multi = len(cfg.ebn0_db) > 1
    out = {}
    for ebn0_db in cfg.ebn0_db:
        suffix = f"_eb{ebn0_db:g}dB" if multi else ""
        agg = _Aggregate(cfg)
        flush = (lambda: _write_outputs(cfg, ebn0_db, agg, suffix)) \
            if cfg.out_dir else (lambda: None)
        if cfg.workers == 1:
            for i in range(cfg.frames):
                agg.add(run_iterative_frame(cfg, ebn0_db, i, ivl))
                if (i + 1) % _FLUSH_EVERY == 0:
                    flush()
        else:
            ctx = multiprocessing.get_context("fork")
            with ctx.Pool(cfg.workers, initializer=_init_worker,
                          initargs=(cfg, ebn0_db, ivl)) as pool:
                done = 0
                for fr in pool.imap_unordered(_frame_task, range(cfg.frames),
                                              chunksize=1):
                    agg.add(fr)
                    done += 1
                    if done % _FLUSH_EVERY == 0:
                        flush()
        flush()
        out[ebn0_db] = agg.reports()
    return out
