"""Experiment runner: run directories, CSV logging, sample grids and run comparison.

A run writes everything under ``<out_dir>/<mode>-seed<seed>/``::

    config.txt          resolved configuration (key = value)
    metrics.csv         one row per generation, fixed column order
    manifest.json       status, timings, error message on failure
    samples/gen_NNNN.pgm  sample grids (image datasets) every ``sample_every`` generations
    checkpoints/gen_NNNN.ckpt  engine checkpoints every ``checkpoint_every`` generations
"""

from __future__ import annotations

import csv
import json
import logging
import time
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy.stats import mannwhitneyu

from . import engine
from .data import load_dataset
from .estimator import CoevolutionaryGAN
from .exceptions import UsageError

logger = logging.getLogger(__name__)

CSV_COLUMNS = (
    "generation", "mode", "seed", "best_fid", "mean_fid", "best_d_loss", "mean_d_loss",
    "mean_novelty_g", "mean_novelty_d", "archive_size_g", "archive_size_d",
    "best_g_trained_samples", "best_d_trained_samples", "mean_g_trained_samples",
    "mean_d_trained_samples",
)
GRID_SAMPLES = 64
SAMPLE_STREAM = 4099


def run_dir(config):
    return Path(config.out_dir) / f"{config.mode}-seed{config.seed}"


def _format(value):
    # repr round-trips floats exactly and does not depend on locale
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    return str(value)


def csv_row(report):
    values = report.as_dict()
    return [_format(values[name]) for name in CSV_COLUMNS]


def read_csv(path):
    """Rows of a metrics CSV as dicts with numeric values converted."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        if tuple(reader.fieldnames or ()) != CSV_COLUMNS:
            raise UsageError(f"{path} does not have the metrics CSV header")
        rows = []
        for raw in reader:
            row = {}
            for key, value in raw.items():
                row[key] = value if key == "mode" else float(value)
            rows.append(row)
    return rows


def sample_grid(samples, columns=8):
    """Tile ``(n, c, h, w)`` samples in ``[-1, 1]`` into one 8-bit grayscale image."""
    samples = np.asarray(samples, dtype=np.float64)
    if samples.ndim != 4:
        raise UsageError("sample grids need (n, channels, height, width) samples")
    images = samples.mean(axis=1)
    n, h, w = images.shape
    columns = min(columns, n)
    rows = -(-n // columns)
    grid = np.full((rows * (h + 1) + 1, columns * (w + 1) + 1), -1.0)
    for i, image in enumerate(images):
        r, c = divmod(i, columns)
        grid[1 + r * (h + 1):1 + r * (h + 1) + h, 1 + c * (w + 1):1 + c * (w + 1) + w] = image
    return np.round((np.clip(grid, -1.0, 1.0) + 1.0) * 127.5).astype(np.uint8)


def write_pgm(path, image):
    """Write a 2-D uint8 array as binary PGM (P5)."""
    image = np.asarray(image, dtype=np.uint8)
    header = b"P5\n%d %d\n255\n" % (image.shape[1], image.shape[0])
    Path(path).write_bytes(header + image.tobytes())


def read_pgm(path):
    raw = Path(path).read_bytes()
    magic, dims, maxval, payload = raw.split(b"\n", 3)
    if magic != b"P5" or maxval != b"255":
        raise UsageError(f"{path} is not an 8-bit binary PGM")
    width, height = map(int, dims.split())
    return np.frombuffer(payload, dtype=np.uint8).reshape(height, width)


def _write_samples(directory, report, state, config):
    best = engine.best_individual(state.generators)
    rng = np.random.default_rng([config.seed, report.generation, SAMPLE_STREAM])
    samples = best.sample(GRID_SAMPLES, rng)
    directory.mkdir(exist_ok=True)
    stem = directory / f"gen_{report.generation:04d}"
    if samples.ndim == 4:
        write_pgm(stem.with_suffix(".pgm"), sample_grid(samples))
    else:
        np.savetxt(stem.with_suffix(".txt"), samples.reshape(len(samples), -1), fmt="%.6f")


def _latest_checkpoint(directory):
    found = sorted(directory.glob("gen_*.ckpt"))
    return found[-1] if found else None


def _truncate_csv(path, generation):
    with open(path, newline="") as fh:
        lines = fh.read().splitlines(keepends=True)
    kept = [lines[0]] + [line for line in lines[1:] if int(line.split(",", 1)[0]) <= generation]
    Path(path).write_text("".join(kept))


def _write_manifest(path, **fields):
    path.write_text(json.dumps(fields, indent=2, sort_keys=True) + "\n")


def run_experiment(config, resume=False):
    """Run one configuration end to end and return a process exit status.

    With ``resume`` the latest checkpoint in the run directory is loaded and
    the CSV is cut back to that generation before continuing. Any exception
    is recorded in ``manifest.json`` and reported as status 1.
    """
    out = run_dir(config)
    out.mkdir(parents=True, exist_ok=True)
    manifest = out / "manifest.json"
    csv_path = out / "metrics.csv"
    ckpt_dir = out / "checkpoints"
    started = time.time()
    try:
        (out / "config.txt").write_text(config.to_text())
        state = None
        if resume and ckpt_dir.is_dir() and _latest_checkpoint(ckpt_dir) is not None:
            state = engine.load_checkpoint(_latest_checkpoint(ckpt_dir))
            _truncate_csv(csv_path, state.generation)
            logger.info("resuming %s from generation %d", out, state.generation)
        else:
            with open(csv_path, "w", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(CSV_COLUMNS)
        _write_manifest(manifest, status="running", run_dir=str(out))
        if config.generations == 0:
            _write_manifest(manifest, status="ok", generations=0, seconds=0.0)
            return 0

        def record(report, state):
            with open(csv_path, "a", newline="") as fh:
                csv.writer(fh, lineterminator="\n").writerow(csv_row(report))
            logger.info("%s seed %d gen %d best FID %.4f", config.mode, config.seed,
                        report.generation, report.best_fid)
            final = report.generation == config.generations
            if config.sample_every and (report.generation % config.sample_every == 0 or final):
                _write_samples(out / "samples", report, state, config)
            if config.checkpoint_every and report.generation % config.checkpoint_every == 0:
                ckpt_dir.mkdir(exist_ok=True)
                engine.save_checkpoint(state, ckpt_dir / f"gen_{report.generation:04d}.ckpt")

        data = load_dataset(config)
        model = CoevolutionaryGAN.from_config(config)
        model.fit(data, callback=record, state=state)
        best = model.best_generator_
        _write_manifest(manifest, status="ok", generations=config.generations,
                        seconds=round(time.time() - started, 3),
                        best_fid=float(best.fitness), best_generator=best.genome.to_text(),
                        best_discriminator=model.best_discriminator_.genome.to_text())
        return 0
    except Exception as exc:  # recorded, not swallowed: the status tells the caller
        logger.error("run %s failed: %s", out, exc)
        _write_manifest(manifest, status="failed", error=f"{type(exc).__name__}: {exc}",
                        traceback=traceback.format_exc(),
                        seconds=round(time.time() - started, 3))
        return 1


def _run_one(config):
    return run_experiment(config)


def sweep(config, modes, seeds, processes=1):
    """Run every ``mode x seed`` combination; returns ``{(mode, seed): status}``.

    Runs are independent, so ``processes > 1`` spreads them over worker
    processes without changing any run's output.
    """
    jobs = [config.replace(mode=mode, seed=int(seed)) for mode in modes for seed in seeds]
    if processes <= 1:
        statuses = [_run_one(job) for job in jobs]
    else:
        with ProcessPoolExecutor(max_workers=processes) as pool:
            statuses = list(pool.map(_run_one, jobs))
    return {(job.mode, job.seed): status for job, status in zip(jobs, statuses)}


@dataclass(frozen=True)
class Comparison:
    u_statistic: float
    p_value: float
    values_a: tuple
    values_b: tuple

    @property
    def mean_a(self):
        return float(np.mean(self.values_a))

    @property
    def mean_b(self):
        return float(np.mean(self.values_b))

    def to_text(self):
        return (f"n_a={len(self.values_a)} mean_a={self.mean_a:.6g} "
                f"n_b={len(self.values_b)} mean_b={self.mean_b:.6g} "
                f"U={self.u_statistic:.6g} p={self.p_value:.6g}")


def final_best_fid(path):
    rows = read_csv(path)
    if not rows:
        raise UsageError(f"{path} has no generations")
    return rows[-1]["best_fid"]


def mann_whitney(values_a, values_b):
    """Two-sided Mann-Whitney U of group ``a`` with a tie-corrected normal p-value."""
    a, b = np.asarray(values_a, float), np.asarray(values_b, float)
    if len(a) < 2 or len(b) < 2:
        raise UsageError("each group needs at least two values")
    result = mannwhitneyu(a, b, alternative="two-sided", method="asymptotic",
                          use_continuity=False)
    p = float(result.pvalue)
    # all values tied: the variance vanishes and there is no evidence of a difference
    if not np.isfinite(p):
        p = 1.0
    return Comparison(float(result.statistic), p, tuple(a.tolist()), tuple(b.tolist()))


def compare_runs(csv_paths_a, csv_paths_b):
    """Compare the final best FID of two groups of runs."""
    return mann_whitney([final_best_fid(p) for p in csv_paths_a],
                        [final_best_fid(p) for p in csv_paths_b])
