"""The search loop: improvement-ranked emitters over the elite archive.

Every iteration each emitter proposes a population, all candidates are
evaluated, offered to the archive in candidate order, and each emitter
is updated with the improvement values its candidates earned. Sampling
happens in the unbounded genome space; candidates are clipped only for
evaluation and storage so the strategy update sees the true samples.
"""

from __future__ import annotations

import csv
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .archive import Archive, Elite
from .cmaes import CmaEs, CmaEsError
from .config import RunConfig
from .descriptors import (DegenerateReportError, DescriptorKey, PenaltyScaling,
                          calibrate_scaling, compute_fitness, describe)
from .evaluation import BuiltinWalker, EvaluationError, evaluate_terrain
from .external import ExternalEvaluator
from .terrain import GENOME_SIZE, clip_genome, rasterize

METRICS_FIELDS = ("iteration", "qd_score", "archive_size", "mean_fitness",
                  "evaluations", "wall_clock_s")


@dataclass(frozen=True)
class MetricsRow:
    iteration: int
    qd_score: float
    archive_size: int
    mean_fitness: float
    evaluations: int
    wall_clock_s: float


@dataclass
class RunResult:
    out_dir: Path
    config: RunConfig
    scaling: PenaltyScaling
    archive: Archive
    metrics: list[MetricsRow]


class Emitter:
    """One strategy instance plus its restart bookkeeping."""

    def __init__(self, emitter_id: int, sigma0: float, population_size: int,
                 rng: np.random.Generator, patience: int, dim: int = GENOME_SIZE):
        self.id = emitter_id
        self.sigma0 = float(sigma0)
        self.population_size = population_size
        self.patience = patience
        self.dim = dim
        self.rng = rng
        self.restarts = 0
        self._zero_streak = 0
        self._last_ask: np.ndarray | None = None
        # initial means spread over the middle of the genome box
        mean0 = rng.uniform(-0.5, 0.5, dim)
        self.cma = CmaEs(mean0, self.sigma0, population_size, rng=rng)

    def ask(self) -> np.ndarray:
        self._last_ask = self.cma.ask()
        return self._last_ask

    def tell(self, genomes, improvements, archive: Archive) -> None:
        genomes = np.asarray(genomes, dtype=np.float64)
        improvements = np.asarray(improvements, dtype=np.float64)
        if self._last_ask is None:
            raise ValueError("tell without a preceding ask")
        if genomes.shape != self._last_ask.shape or not np.array_equal(genomes, self._last_ask):
            raise ValueError("genomes do not match the emitter's last ask")
        if improvements.shape != (genomes.shape[0],):
            raise ValueError("improvements must align 1:1 with genomes")
        self._last_ask = None
        try:
            self.cma.tell(genomes, improvements)
        except CmaEsError:
            self.restart(archive)
            return
        if np.max(improvements) <= 0.0:
            self._zero_streak += 1
        else:
            self._zero_streak = 0
        if self._zero_streak >= self.patience:
            self.restart(archive)

    def restart(self, archive: Archive) -> None:
        """Reset the strategy at a random elite (or anywhere when empty)."""
        if len(archive) > 0:
            mean = archive.random_elite(self.rng).genome.copy()
        else:
            mean = self.rng.uniform(-1.0, 1.0, self.dim)
        self.cma = CmaEs(mean, self.sigma0, self.population_size, rng=self.rng)
        self.restarts += 1
        self._zero_streak = 0
        self._last_ask = None


def make_evaluator(config: RunConfig):
    if config.evaluator == "external":
        return ExternalEvaluator(config.external_command, timeout_s=config.episode_timeout_s)
    return BuiltinWalker()


def evaluate_genome(genome, *, evaluator, scaling: PenaltyScaling, mode: str,
                    alpha: float, lambda_: float, resolution_m: float,
                    episodes: int, seed: int):
    """Full pipeline for one genome: report, fitness, archive key.

    The key is None for degenerate (all-zero penalty) reports.
    """
    clipped = clip_genome(genome)
    heightmap = rasterize(clipped, resolution_m)
    report = evaluate_terrain(heightmap, evaluator, episodes=episodes,
                              seed=seed, scale=scaling.scale)
    fitness = compute_fitness(report, alpha, lambda_)
    try:
        key: DescriptorKey | None = describe(report, scaling, mode)
    except DegenerateReportError:
        key = None
    return clipped, report, fitness, key


def resolve_scaling(config: RunConfig, evaluator, seed_sequence) -> PenaltyScaling:
    configured = config.scaling_object()
    if configured is not None:
        return configured
    cal_seed = int(seed_sequence.generate_state(1, np.uint64)[0])
    return calibrate_scaling(evaluator, episodes=config.episodes, seed=cal_seed,
                             n_genomes=config.calibration_genomes,
                             resolution_m=config.resolution_m, mode=config.mode)


def _snapshot_info(config: RunConfig, iteration: int) -> dict:
    # the archive document must be byte-stable across identical runs, so
    # drop fields that legitimately vary between reruns of the same setup
    info = config.to_dict()
    info.pop("out_dir", None)
    info.pop("workers", None)
    info["iteration"] = iteration
    return info


def run(config: RunConfig, out_dir=None, evaluator=None, progress=None) -> RunResult:
    """Execute the configured search; returns the final archive and metrics.

    Writes into the run directory: the effective config, a metrics CSV
    (one row per iteration), periodic archive snapshots, and the final
    archive plus its per-elite summary CSV.
    """
    config.validate()
    target = out_dir if out_dir is not None else config.out_dir
    if target is None:
        raise ValueError("an output directory is required")
    out = Path(target)
    out.mkdir(parents=True, exist_ok=True)

    if config.workers is not None:
        import numba

        numba.set_num_threads(max(1, min(config.workers, numba.config.NUMBA_NUM_THREADS)))

    owns_evaluator = evaluator is None
    if owns_evaluator:
        evaluator = make_evaluator(config)
    try:
        master = np.random.SeedSequence(config.seed)
        cal_ss, eval_ss, emitter_root = master.spawn(3)
        scaling = resolve_scaling(config, evaluator, cal_ss)
        effective = config.resolved(scaling, str(out))
        effective.save(out / "config.json")

        archive = Archive(min_f=config.min_f, learning_rate=config.archive_learning_rate)
        emitters = [
            Emitter(i, config.sigma0, config.population, np.random.default_rng(child),
                    config.restart_patience)
            for i, child in enumerate(emitter_root.spawn(config.emitters))
        ]
        eval_rng = np.random.default_rng(eval_ss)

        metrics: list[MetricsRow] = []
        started = time.perf_counter()
        with open(out / "metrics.csv", "w", newline="") as metrics_file:
            writer = csv.writer(metrics_file)
            writer.writerow(METRICS_FIELDS)
            for iteration in range(1, config.budget + 1):
                asks = [emitter.ask() for emitter in emitters]
                improvements = np.empty(config.emitters * config.population)
                k = 0
                for batch in asks:
                    for genome_raw in batch:
                        eval_seed = int(eval_rng.integers(0, 2**63))
                        try:
                            clipped, report, fitness, key = evaluate_genome(
                                genome_raw, evaluator=evaluator, scaling=scaling,
                                mode=config.mode, alpha=config.alpha,
                                lambda_=config.lambda_,
                                resolution_m=config.resolution_m,
                                episodes=config.episodes, seed=eval_seed)
                        except EvaluationError:
                            # scored at the archive floor, never inserted
                            improvements[k] = -np.inf
                            k += 1
                            continue
                        if key is None:
                            improvements[k] = -np.inf
                        else:
                            elite = Elite(genome=clipped, fitness=fitness, key=key,
                                          report=report, eval_seed=eval_seed)
                            improvements[k] = archive.try_insert(elite)
                        k += 1
                for i, emitter in enumerate(emitters):
                    lo = i * config.population
                    emitter.tell(asks[i], improvements[lo:lo + config.population], archive)

                stats = archive.metrics(config.offset)
                row = MetricsRow(
                    iteration=iteration,
                    qd_score=stats.qd_score,
                    archive_size=stats.archive_size,
                    mean_fitness=stats.mean_fitness,
                    evaluations=iteration * config.emitters * config.population,
                    wall_clock_s=time.perf_counter() - started,
                )
                metrics.append(row)
                writer.writerow([row.iteration, repr(row.qd_score), row.archive_size,
                                 repr(row.mean_fitness), row.evaluations,
                                 f"{row.wall_clock_s:.3f}"])
                metrics_file.flush()
                if progress is not None:
                    progress(row)
                if iteration % config.snapshot_interval == 0:
                    archive.save(out / f"archive_{iteration:06d}.json",
                                 extra=_snapshot_info(effective, iteration))

        archive.save(out / "archive.json", extra=_snapshot_info(effective, config.budget))
        _write_summary_csv(out / "summary.csv", archive, scaling, config.mode)
        return RunResult(out_dir=out, config=effective, scaling=scaling,
                         archive=archive, metrics=metrics)
    finally:
        if owns_evaluator:
            evaluator.close()


def _write_summary_csv(path, archive: Archive, scaling: PenaltyScaling, mode: str) -> None:
    rows = archive.summary_rows(scaling, mode)
    if not rows:
        Path(path).write_text("")
        return
    with open(path, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
        writer.writeheader()
        writer.writerows(rows)
