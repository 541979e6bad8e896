"""Archive coordinates and fitness derived from an evaluation report.

Each scaled penalty channel is normalized by the sum of all channels,
giving ratio descriptors on the probability simplex; binning them at 0.1
per interval yields the archive cell address. Biped mode uses the five
penalty ratios plus a binary pelvis-collision flag; quadruped mode folds
the leg-contact count in as a sixth ratio channel and drops the flag.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .evaluation import N_PENALTIES, BuiltinWalker, EvaluationReport, evaluate_terrain
from .terrain import GENOME_SIZE, rasterize

MODE_CASSIE = "cassie"
MODE_ANYMAL = "anymal"
MODES = (MODE_CASSIE, MODE_ANYMAL)

N_BINS = 10
DEFAULT_ALPHA = 1.0
DEFAULT_LAMBDA = 2.0
_SIMPLEX_TOL = 1e-9


class DegenerateReportError(ValueError):
    """All penalty channels are zero; the terrain exposes no failure mode."""


def validate_mode(mode: str) -> str:
    if mode not in MODES:
        raise ValueError(f"mode must be one of {MODES}, got {mode!r}")
    return mode


@dataclass(frozen=True)
class PenaltyScaling:
    """Per-channel multipliers bringing raw penalties to a common magnitude."""

    scale: tuple[float, float, float, float, float]
    collision_scale: float = 1.0  # sixth channel, quadruped mode only

    def __post_init__(self) -> None:
        if len(self.scale) != N_PENALTIES:
            raise ValueError(f"scale must have {N_PENALTIES} entries")
        for v in (*self.scale, self.collision_scale):
            if not (math.isfinite(v) and v > 0.0):
                raise ValueError("scaling entries must be positive and finite")


def unit_scaling() -> PenaltyScaling:
    return PenaltyScaling(scale=(1.0,) * N_PENALTIES)


@dataclass(frozen=True)
class DescriptorKey:
    """Archive cell address: binned ratios plus the optional collision flag."""

    bins: tuple[int, ...]
    collision: bool | None = None

    def __post_init__(self) -> None:
        for b in self.bins:
            if not 0 <= b < N_BINS:
                raise ValueError(f"bin {b} outside [0, {N_BINS - 1}]")

    def label(self) -> str:
        tag = "".join(str(b) for b in self.bins)
        if self.collision is None:
            return tag
        return f"{tag}_c{int(self.collision)}"


@dataclass(frozen=True)
class Fitness:
    """Scalar objective with its components kept for diagnostics."""

    value: float
    mean_term: float
    std_term: float
    collision_term: float


def ratio_descriptors(report: EvaluationReport, scaling: PenaltyScaling,
                      mode: str = MODE_CASSIE) -> np.ndarray:
    """Normalize the scaled mean penalties onto the probability simplex."""
    validate_mode(mode)
    channels = list(report.mean_penalties)
    if mode == MODE_ANYMAL:
        channels.append(scaling.collision_scale * report.mean_collision_count)
    arr = np.asarray(channels, dtype=np.float64)
    total = float(arr.sum())
    if total == 0.0:
        raise DegenerateReportError("all penalty channels are zero")
    return arr / total


def bin_ratios(ratios, collision: bool | None = None) -> DescriptorKey:
    """Map simplex ratios to 0.1-wide bins; ratio 1.0 clamps into bin 9."""
    arr = np.asarray(ratios, dtype=np.float64)
    if abs(float(arr.sum()) - 1.0) > _SIMPLEX_TOL:
        raise ValueError("ratios must sum to 1")
    bins = tuple(min(N_BINS - 1, int(r * N_BINS)) for r in arr)
    return DescriptorKey(bins=bins, collision=collision)


def describe(report: EvaluationReport, scaling: PenaltyScaling,
             mode: str = MODE_CASSIE) -> DescriptorKey:
    """Report -> archive cell address for the given mode."""
    ratios = ratio_descriptors(report, scaling, mode)
    collision = report.any_collision if mode == MODE_CASSIE else None
    return bin_ratios(ratios, collision)


def compute_fitness(report: EvaluationReport, alpha: float = DEFAULT_ALPHA,
                    lam: float = DEFAULT_LAMBDA) -> Fitness:
    """Mean challenge minus inconsistency penalties.

    The collision term is the non-collision rate when any episode
    collided, and exactly zero when none did.
    """
    if alpha < 0.0 or lam < 0.0:
        raise ValueError("alpha and lambda must be nonnegative")
    mean_term = float(np.sum(report.mean_penalties))
    std_term = float(np.sum(report.std_penalties))
    collision_term = report.non_collision_rate if report.any_collision else 0.0
    value = mean_term - alpha * std_term - lam * collision_term
    return Fitness(value=value, mean_term=mean_term, std_term=std_term,
                   collision_term=collision_term)


def calibrate_scaling(evaluator=None, episodes: int = 20, seed: int = 0,
                      n_genomes: int = 100, resolution_m: float = 0.05,
                      mode: str = MODE_CASSIE) -> PenaltyScaling:
    """Set each channel scale to 1 / median raw mean over random genomes.

    Channels whose median is zero fall back to a scale of 1. The result
    should be persisted with the run so reports stay reproducible.
    """
    validate_mode(mode)
    if evaluator is None:
        evaluator = BuiltinWalker()
    rng = np.random.default_rng(seed)
    genomes = rng.uniform(-1.0, 1.0, size=(n_genomes, GENOME_SIZE))
    raw_means = np.empty((n_genomes, N_PENALTIES), dtype=np.float64)
    count_means = np.empty(n_genomes, dtype=np.float64)
    for k in range(n_genomes):
        heightmap = rasterize(genomes[k], resolution_m)
        eval_seed = int(rng.integers(0, 2**63))
        report = evaluate_terrain(heightmap, evaluator, episodes=episodes, seed=eval_seed)
        raw_means[k] = report.mean_penalties
        count_means[k] = report.mean_collision_count
    medians = np.median(raw_means, axis=0)
    scale = tuple(1.0 / m if m > 0.0 else 1.0 for m in medians)
    count_median = float(np.median(count_means))
    collision_scale = 1.0 / count_median if count_median > 0.0 else 1.0
    return PenaltyScaling(scale=scale, collision_scale=collision_scale)
