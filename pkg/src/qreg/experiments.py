"""Experiment orchestration: dataset assembly, job running, sweep commands.

A job is one training run pinned by (mode, noise level, seed, optional
hyperparameter override). Sweeps expand a config into a job list, run it
serially or across processes (QREG_THREADS), and reduce the records into
small summary CSVs. Job results are sorted by their coordinates before any
file is written, so the byte content of every output is independent of
execution order and worker count.

Dataset identity is part of the experiment, not the job: features and the
train/val/test partition depend only on [data] settings. Label noise is
injected after the split, into the training partition only, seeded by the
run seed so that every mode at a given (s, seed) sees the identical
corruption. Validation and test labels stay clean; metrics measure recovery
of the true signal, and the early-stopping signal is the clean validation
set by construction.
"""

from __future__ import annotations

import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .checkpoint import MAGIC_MODEL, write_container
from .config import ExperimentConfig
from .data import Dataset, NoiseSpec, inject_noise, split, split_count, synth_blobs, synth_multitask
from .errors import ConfigError, TrainingError
from .layers import MODEL_PRESETS, Model
from .metrics import aggregate_runs
from .pruning import PruneSpec
from .quantization import QuantConfig
from .records import RunRecord, fmt
from .regularization import RegularizerConfig
from .training import MODES, train

MULTITASK_MODES = ("none", "weight_decay", "dropout", "label_smoothing", "pruning", "quantization")


def image_shape(dim: int) -> tuple[int, int, int]:
    """Single-channel (1, H, W) view of a flat feature vector.

    H is the largest divisor of dim not exceeding sqrt(dim), so the grid is
    as close to square as the factorization allows (prime dim gives 1 x dim).
    """
    h = max(d for d in range(1, math.isqrt(dim) + 1) if dim % d == 0)
    return (1, h, dim // h)


def build_datasets(cfg: ExperimentConfig, seed: int, noise: float) -> tuple[Dataset, Dataset, Dataset]:
    """(train, val, test) for one job; only train labels are ever corrupted."""
    gen_seed, test_seed, val_seed = (np.random.SeedSequence(cfg.data_seed, spawn_key=(k,)) for k in range(3))
    if cfg.data_kind == "blobs":
        per_class = (cfg.train_size + cfg.test_size) // cfg.num_classes
        full = synth_blobs(cfg.num_classes, per_class, cfg.dim, cfg.separation, gen_seed)
    else:
        full = synth_multitask(cfg.num_tasks, cfg.train_size + cfg.test_size, cfg.dim, gen_seed)
    if cfg.preset == "cnn-small":
        full = replace(full, features=full.features.reshape((full.n,) + image_shape(cfg.dim)))
    pool, test_ds = split_count(full, cfg.test_size, test_seed)
    train_ds, val_ds = split(pool, cfg.val_fraction, val_seed)
    if noise > 0.0:
        train_ds, _ = inject_noise(train_ds, NoiseSpec(fraction=noise, seed=seed),
                                   cfg.noise_exclude_original)
    return train_ds, val_ds, test_ds


def build_model(cfg: ExperimentConfig, seed: int, dropout_p: float) -> Model:
    rng = np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(0,)))
    if cfg.preset == "mlp-small":
        return MODEL_PRESETS[cfg.preset](cfg.dim, cfg.num_classes, rng, dropout_p)
    if cfg.preset == "cnn-small":
        return MODEL_PRESETS[cfg.preset](image_shape(cfg.dim), cfg.num_classes, rng, dropout_p)
    return MODEL_PRESETS[cfg.preset](cfg.dim, cfg.num_tasks, rng, dropout_p)


@dataclass(frozen=True)
class Job:
    """One training run; sort key and process-pool work unit."""

    cfg: ExperimentConfig
    mode: str
    noise: float
    seed: int
    extra: str = ""
    always_early_stop: bool = False
    quant: QuantConfig | None = None
    prune: PruneSpec | None = None
    reg: RegularizerConfig | None = None

    @property
    def key(self) -> tuple:
        return (self.mode, self.extra, self.noise, self.seed)


@dataclass
class JobResult:
    job: Job
    record: RunRecord
    state: dict | None  # final model parameters; None when training failed
    error: str | None = None

    @property
    def failed(self) -> bool:
        return self.error is not None


def run_job(job: Job) -> JobResult:
    cfg = job.cfg
    reg = job.reg if job.reg is not None else cfg.reg
    dropout_p = reg.dropout_p if job.mode == "dropout" else 0.0
    train_ds, val_ds, test_ds = build_datasets(cfg, job.seed, job.noise)
    model = build_model(cfg, job.seed, dropout_p)
    settings = cfg.train_settings(
        job.mode, job.seed, job.noise,
        always_early_stop=job.always_early_stop, extra=job.extra,
        quant=job.quant, prune=job.prune, reg=job.reg,
    )
    try:
        result = train(model, train_ds, val_ds, test_ds, settings)
    except TrainingError as e:
        record = e.record if e.record is not None else RunRecord(
            fingerprint=settings.fingerprint, seed=job.seed, num_tasks=train_ds.num_tasks
        )
        return JobResult(job=job, record=record, state=None, error=str(e))
    return JobResult(job=job, record=result.record, state=result.model.state_dict(), error=None)


def run_jobs(jobs: list[Job], quiet: bool) -> list[JobResult]:
    """Run every job and return results sorted by job coordinates.

    QREG_THREADS > 1 distributes jobs over that many worker processes; the
    default is serial. Failures do not stop the batch.
    """
    try:
        workers = int(os.environ.get("QREG_THREADS", "1"))
    except ValueError:
        workers = 1
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_job, jobs))
    else:
        results = [run_job(job) for job in jobs]
    results.sort(key=lambda r: r.job.key)
    if not quiet:
        for r in results:
            label = f"{r.job.mode}{' ' + r.job.extra if r.job.extra else ''} s={r.job.noise:g} seed={r.job.seed}"
            if r.failed:
                print(f"  {label}: FAILED ({r.error})")
            else:
                row = r.record.final_row()
                tail = f"f1_avg={fmt(row.f1_avg)}" if row.f1_avg is not None else f"test_acc={fmt(row.test_acc)}"
                print(f"  {label}: epochs={len(r.record.rows)} {tail}")
    return results


def _write_rows(path, header: list[str], rows: list[list[str]]) -> None:
    lines = [",".join(header)] + [",".join(row) for row in rows]
    with open(path, "w", newline="") as fh:
        fh.write("\n".join(lines) + "\n")


def _mean_acc(results: list[JobResult]) -> tuple[float, float]:
    summary = aggregate_runs([r.record for r in results])
    return summary.final_mean["test_acc"], summary.final_std["test_acc"]


# ---------------------------------------------------------------- commands


def cmd_train(cfg: ExperimentConfig, out_dir: str, quiet: bool,
              mode: str | None = None, noise: float = 0.0) -> int:
    """Train one job per seed; write a per-run record CSV and checkpoint."""
    mode = mode if mode is not None else cfg.modes[0]
    if mode not in MODES:
        raise ConfigError(f"unknown mode '{mode}'", key="experiment.modes")
    os.makedirs(out_dir, exist_ok=True)
    jobs = [Job(cfg=cfg, mode=mode, noise=noise, seed=seed) for seed in cfg.seeds]
    results = run_jobs(jobs, quiet)
    for r in results:
        stem = f"{r.record.fingerprint}_{r.job.seed}"
        r.record.write_csv(os.path.join(out_dir, f"run_{stem}.csv"))
        if r.state is not None:
            write_container(os.path.join(out_dir, f"checkpoint_{stem}.qreg"), r.state, MAGIC_MODEL)
    failures = [r for r in results if r.failed]
    if failures and not quiet:
        print(f"{len(failures)} of {len(results)} runs failed")
    return 3 if failures else 0


def cmd_noise_sweep(cfg: ExperimentConfig, out_dir: str, quiet: bool) -> int:
    """Sweep modes x noise levels x seeds; write sweep.csv and sweep_mean.csv.

    sweep.csv holds one row per run; sweep_mean.csv aggregates seeds and
    reports each mode's gain over the 'none' baseline at the same noise
    level, which therefore must be part of the configured modes.
    """
    if "none" not in cfg.modes:
        raise ConfigError("noise sweep needs the 'none' baseline in the mode list",
                          key="experiment.modes")
    os.makedirs(out_dir, exist_ok=True)
    jobs = [
        Job(cfg=cfg, mode=mode, noise=s, seed=seed)
        for mode in cfg.modes for s in cfg.noise_levels for seed in cfg.seeds
    ]
    results = run_jobs(jobs, quiet)
    ok = [r for r in results if not r.failed]
    failures = [r for r in results if r.failed]

    rows = [
        [r.job.mode, f"{r.job.noise:g}", str(r.job.seed), fmt(r.record.final_test_acc)]
        for r in ok
    ]
    _write_rows(os.path.join(out_dir, "sweep.csv"),
                ["mode", "s", "seed", "final_test_acc"], rows)

    grouped: dict[tuple[str, float], list[JobResult]] = {}
    for r in ok:
        grouped.setdefault((r.job.mode, r.job.noise), []).append(r)
    mean_rows = []
    for mode in cfg.modes:
        for s in cfg.noise_levels:
            bucket = grouped.get((mode, s))
            base = grouped.get(("none", s))
            if not bucket or not base:
                continue  # every seed of this cell (or its baseline) failed
            mean, std = _mean_acc(bucket)
            gain = mean - _mean_acc(base)[0]
            mean_rows.append([mode, f"{s:g}", fmt(mean), fmt(std), fmt(gain)])
    _write_rows(os.path.join(out_dir, "sweep_mean.csv"),
                ["mode", "s", "mean_acc", "std_acc", "gain_vs_baseline"], mean_rows)

    if failures:
        if not quiet:
            print(f"{len(failures)} of {len(results)} runs failed; summaries cover the rest")
        return 3
    return 0


def _stability_variants(cfg: ExperimentConfig):
    """(mode, hyper label, job overrides) for every swept hyperparameter.

    The reference setting of each mode is included even when the grid in the
    config leaves it out, so gain_vs_reference is always well defined.
    """
    variants: list[tuple[str, str, dict]] = []
    if cfg.stability_quant_bits:
        ref_bits = f"w{cfg.quant.weight_bits}a{cfg.quant.act_bits}"
        bit_grid = [(f"w{b}a{b}", replace(cfg.quant, weight_bits=b, act_bits=b)) for b in cfg.stability_quant_bits]
        if ref_bits not in [label for label, _ in bit_grid]:
            bit_grid.append((ref_bits, cfg.quant))
        for label, quant in bit_grid:
            variants.append(("quantization", label, {"quant": quant}))

    if cfg.stability_prune_ratios:
        ratio_grid = list(cfg.stability_prune_ratios)
        if cfg.prune.ratio not in ratio_grid:
            ratio_grid.append(cfg.prune.ratio)
        for ratio in ratio_grid:
            variants.append(("pruning", f"{ratio:g}", {"prune": replace(cfg.prune, ratio=ratio)}))

    if cfg.stability_dropout_rates:
        rate_grid = list(cfg.stability_dropout_rates)
        if cfg.reg.dropout_p not in rate_grid:
            rate_grid.append(cfg.reg.dropout_p)
        for rate in rate_grid:
            variants.append(("dropout", f"{rate:g}", {"reg": replace(cfg.reg, dropout_p=rate)}))
    return variants


def stability_reference(cfg: ExperimentConfig, mode: str) -> str:
    if mode == "quantization":
        return f"w{cfg.quant.weight_bits}a{cfg.quant.act_bits}"
    if mode == "pruning":
        return f"{cfg.prune.ratio:g}"
    return f"{cfg.reg.dropout_p:g}"


def cmd_stability_sweep(cfg: ExperimentConfig, out_dir: str, quiet: bool) -> int:
    """Sweep each regularizer's strength knob; write stability.csv.

    Rows are (mode, hyper, s, gain_vs_reference): the seed-mean test accuracy
    of the hyper setting minus that of the configured reference setting at
    the same noise level. The reference row itself appears with gain 0.
    """
    variants = _stability_variants(cfg)
    if not variants:
        raise ConfigError("every stability grid is empty; nothing to sweep", key="stability")
    os.makedirs(out_dir, exist_ok=True)
    jobs = [
        Job(cfg=cfg, mode=mode, noise=s, seed=seed, extra=label, **overrides)
        for mode, label, overrides in variants
        for s in cfg.noise_levels for seed in cfg.seeds
    ]
    results = run_jobs(jobs, quiet)
    ok = [r for r in results if not r.failed]
    failures = [r for r in results if r.failed]

    grouped: dict[tuple[str, str, float], list[JobResult]] = {}
    mode_of: dict[str, str] = {}
    for r in ok:
        grouped.setdefault((r.job.mode, r.job.extra, r.job.noise), []).append(r)
        mode_of[r.job.extra] = r.job.mode
    rows = []
    for mode, label, _ in variants:
        ref_label = stability_reference(cfg, mode)
        for s in cfg.noise_levels:
            bucket = grouped.get((mode, label, s))
            ref = grouped.get((mode, ref_label, s))
            if not bucket or not ref:
                continue
            gain = _mean_acc(bucket)[0] - _mean_acc(ref)[0]
            rows.append([mode, label, f"{s:g}", fmt(gain)])
    _write_rows(os.path.join(out_dir, "stability.csv"),
                ["mode", "hyper", "s", "gain_vs_reference"], rows)

    if failures:
        if not quiet:
            print(f"{len(failures)} of {len(results)} runs failed; stability.csv covers the rest")
        return 3
    return 0


def cmd_multitask(cfg: ExperimentConfig, out_dir: str, quiet: bool) -> int:
    """Compare regularizers on the multi-task set; write multitask.csv.

    Early stopping runs systematically inside every mode (so it is not a
    separate mode here), and the comparison happens at the harshest
    configured noise level. Rows hold the seed-mean per-task F1 scores and
    their average.
    """
    if cfg.data_kind != "multitask":
        raise ConfigError("the multitask command needs kind = multitask", key="data.kind")
    os.makedirs(out_dir, exist_ok=True)
    noise = max(cfg.noise_levels)
    modes = list(MULTITASK_MODES)
    jobs = [
        Job(cfg=cfg, mode=mode, noise=noise, seed=seed, always_early_stop=True)
        for mode in modes for seed in cfg.seeds
    ]
    results = run_jobs(jobs, quiet)
    ok = [r for r in results if not r.failed]
    failures = [r for r in results if r.failed]

    grouped: dict[str, list[JobResult]] = {}
    for r in ok:
        grouped.setdefault(r.job.mode, []).append(r)
    rows = []
    for mode in modes:
        bucket = grouped.get(mode)
        if not bucket:
            continue
        summary = aggregate_runs([r.record for r in bucket])
        cells = [fmt(summary.final_mean[f"f1_t{t}"]) for t in range(cfg.num_tasks)]
        rows.append([mode] + cells + [fmt(summary.final_mean["f1_avg"])])
    header = ["mode"] + [f"f1_t{t}" for t in range(cfg.num_tasks)] + ["f1_avg"]
    _write_rows(os.path.join(out_dir, "multitask.csv"), header, rows)

    if failures:
        if not quiet:
            print(f"{len(failures)} of {len(results)} runs failed; multitask.csv covers the rest")
        return 3
    return 0
