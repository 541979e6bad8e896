"""Consistency-penalty ablation: paired runs with and without the STD term.

Two searches share a seed and scaling but weight the penalty-STD term
with 1 and 0 respectively. Every stored snapshot of each run is then
re-evaluated from scratch over more episodes, and the mean per-terrain
total STD is reported side by side, one row per snapshot iteration. A
lower curve for the weighted run means its archive holds terrains whose
failure statistics are more repeatable.
"""

from __future__ import annotations

import csv
import dataclasses
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .archive import Archive
from .config import RunConfig
from .descriptors import PenaltyScaling
from .evaluation import evaluate_terrain, fnv1a64
from .optimizer import RunResult, make_evaluator, resolve_scaling, run
from .terrain import rasterize

REEVAL_EPISODES = 40


@dataclass(frozen=True)
class AblationRow:
    iteration: int
    mean_std_alpha1: float
    mean_std_alpha0: float


@dataclass
class AblationResult:
    out_dir: Path
    rows: list[AblationRow]
    run_alpha1: RunResult
    run_alpha0: RunResult


def mean_total_std(archive: Archive, evaluator, scaling: PenaltyScaling,
                   resolution_m: float, reeval_seed_tag: int,
                   episodes: int = REEVAL_EPISODES) -> float:
    """Re-evaluate every elite and average the summed per-channel STD."""
    elites = archive.elites()
    if not elites:
        return float("nan")
    totals = []
    for idx, elite in enumerate(elites):
        heightmap = rasterize(elite.genome, resolution_m)
        seed = fnv1a64(reeval_seed_tag, idx)
        report = evaluate_terrain(heightmap, evaluator, episodes=episodes,
                                  seed=seed, scale=scaling.scale)
        totals.append(float(np.sum(report.std_penalties)))
    return float(np.mean(totals))


def run_std_ablation(config: RunConfig, out_dir, progress=None) -> AblationResult:
    """Run the alpha=1 / alpha=0 pair and compare snapshot archives."""
    config.validate()
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    evaluator = make_evaluator(config)
    try:
        # calibrate once so both runs share identical scaling
        master = np.random.SeedSequence(config.seed)
        scaling = resolve_scaling(config, evaluator, master.spawn(1)[0])
        base = config.resolved(scaling, str(out))

        results = {}
        for alpha in (1.0, 0.0):
            variant = dataclasses.replace(base, alpha=alpha)
            label = f"alpha{int(alpha)}"
            results[alpha] = run(variant, out / label, evaluator=evaluator,
                                 progress=progress)

        rows = []
        snapshots = range(config.snapshot_interval, config.budget + 1,
                          config.snapshot_interval)
        for iteration in snapshots:
            name = f"archive_{iteration:06d}.json"
            per_alpha = {}
            for alpha in (1.0, 0.0):
                archive = Archive.load(results[alpha].out_dir / name)
                tag = fnv1a64(config.seed, iteration, int(alpha))
                per_alpha[alpha] = mean_total_std(
                    archive, evaluator, scaling, config.resolution_m, tag)
            rows.append(AblationRow(iteration=iteration,
                                    mean_std_alpha1=per_alpha[1.0],
                                    mean_std_alpha0=per_alpha[0.0]))
    finally:
        evaluator.close()

    with open(out / "ablation.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["iteration", "mean_std_alpha1", "mean_std_alpha0"])
        for row in rows:
            writer.writerow([row.iteration, repr(row.mean_std_alpha1),
                             repr(row.mean_std_alpha0)])
    return AblationResult(out_dir=out, rows=rows,
                          run_alpha1=results[1.0], run_alpha0=results[0.0])
