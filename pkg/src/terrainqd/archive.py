"""Sparse elite archive with soft acceptance thresholds.

Cells are addressed by DescriptorKey and store the best solution seen
for that failure-mode combination. Acceptance follows the annealing
rule: a candidate competes against the cell threshold (not the stored
elite), and every acceptance moves the threshold a fraction
`learning_rate` toward the accepted fitness. With learning_rate = 1
this degenerates to plain best-wins elitism.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .descriptors import DescriptorKey, Fitness, ratio_descriptors
from .evaluation import EvaluationReport, report_from_dict, report_to_dict

SNAPSHOT_FORMAT = "terrainqd-archive"
SNAPSHOT_VERSION = 1

DEFAULT_MIN_F = -20.0
DEFAULT_LEARNING_RATE = 0.01
DEFAULT_QD_OFFSET = 20.0


@dataclass
class Elite:
    genome: np.ndarray
    fitness: Fitness
    key: DescriptorKey
    report: EvaluationReport
    eval_seed: int


@dataclass(frozen=True)
class ArchiveMetrics:
    qd_score: float
    archive_size: int
    mean_fitness: float
    offset: float
    is_empty: bool


def _key_sort_token(key: DescriptorKey):
    return (key.bins, -1 if key.collision is None else int(key.collision))


class Archive:
    """Sparse map from descriptor keys to (elite, acceptance threshold)."""

    def __init__(self, min_f: float = DEFAULT_MIN_F,
                 learning_rate: float = DEFAULT_LEARNING_RATE):
        if not 0.0 < learning_rate <= 1.0:
            raise ValueError("learning_rate must be in (0, 1]")
        self.min_f = float(min_f)
        self.learning_rate = float(learning_rate)
        self._cells: dict[DescriptorKey, tuple[Elite, float]] = {}

    def __len__(self) -> int:
        return len(self._cells)

    def __contains__(self, key: DescriptorKey) -> bool:
        return key in self._cells

    def elites(self) -> list[Elite]:
        return [elite for elite, _ in self._cells.values()]

    def cell(self, key: DescriptorKey) -> tuple[Elite, float] | None:
        return self._cells.get(key)

    def threshold(self, key: DescriptorKey) -> float:
        cell = self._cells.get(key)
        return cell[1] if cell is not None else self.min_f

    def random_elite(self, rng: np.random.Generator) -> Elite:
        if not self._cells:
            raise LookupError("archive is empty")
        keys = sorted(self._cells.keys(), key=_key_sort_token)
        choice = keys[int(rng.integers(len(keys)))]
        return self._cells[choice][0]

    def try_insert(self, candidate: Elite) -> float:
        """Offer a candidate; returns its improvement over the cell threshold.

        fitness > threshold anneals the threshold upward; the stored elite
        is replaced only when the candidate strictly beats it (or the cell
        was empty). fitness <= threshold leaves the archive untouched.
        """
        fitness = candidate.fitness.value
        if not np.isfinite(fitness):
            raise ValueError("candidate fitness must be finite")
        cell = self._cells.get(candidate.key)
        threshold = cell[1] if cell is not None else self.min_f
        improvement = fitness - threshold
        if fitness > threshold:
            new_threshold = (1.0 - self.learning_rate) * threshold + self.learning_rate * fitness
            if cell is None or fitness > cell[0].fitness.value:
                self._cells[candidate.key] = (candidate, new_threshold)
            else:
                self._cells[candidate.key] = (cell[0], new_threshold)
        return improvement

    def metrics(self, offset: float = DEFAULT_QD_OFFSET) -> ArchiveMetrics:
        if not self._cells:
            return ArchiveMetrics(qd_score=0.0, archive_size=0, mean_fitness=0.0,
                                  offset=offset, is_empty=True)
        values = np.array([e.fitness.value for e, _ in self._cells.values()])
        return ArchiveMetrics(
            qd_score=float(np.sum(values + offset)),
            archive_size=len(values),
            mean_fitness=float(values.mean()),
            offset=offset,
            is_empty=False,
        )

    # ------------------------------------------------------------------
    # persistence

    def to_document(self, extra: dict | None = None) -> dict:
        cells = []
        for key in sorted(self._cells.keys(), key=_key_sort_token):
            elite, threshold = self._cells[key]
            cells.append({
                "bins": list(key.bins),
                "collision": key.collision,
                "threshold": threshold,
                "fitness": {
                    "value": elite.fitness.value,
                    "mean_term": elite.fitness.mean_term,
                    "std_term": elite.fitness.std_term,
                    "collision_term": elite.fitness.collision_term,
                },
                "genome": [float(v) for v in elite.genome],
                "eval_seed": elite.eval_seed,
                "report": report_to_dict(elite.report),
            })
        doc = {
            "format": SNAPSHOT_FORMAT,
            "version": SNAPSHOT_VERSION,
            "min_f": self.min_f,
            "learning_rate": self.learning_rate,
            "cells": cells,
        }
        if extra:
            doc["run"] = extra
        return doc

    def save(self, path, extra: dict | None = None) -> None:
        try:
            Path(path).write_text(json.dumps(self.to_document(extra), indent=1) + "\n")
        except OSError as exc:
            raise OSError(f"cannot write archive snapshot to {path}: {exc}") from exc

    @classmethod
    def from_document(cls, doc: dict) -> "Archive":
        if doc.get("format") != SNAPSHOT_FORMAT:
            raise ValueError("not a terrain archive snapshot")
        if doc.get("version") != SNAPSHOT_VERSION:
            raise ValueError(f"unsupported snapshot version {doc.get('version')!r}")
        archive = cls(min_f=doc["min_f"], learning_rate=doc["learning_rate"])
        for cell in doc["cells"]:
            key = DescriptorKey(bins=tuple(cell["bins"]), collision=cell["collision"])
            fit = Fitness(**cell["fitness"])
            elite = Elite(
                genome=np.array(cell["genome"], dtype=np.float64),
                fitness=fit,
                key=key,
                report=report_from_dict(cell["report"]),
                eval_seed=cell["eval_seed"],
            )
            archive._cells[key] = (elite, cell["threshold"])
        return archive

    @classmethod
    def load(cls, path) -> "Archive":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise OSError(f"cannot read archive snapshot {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ValueError(f"corrupt archive snapshot {path}: {exc}") from exc
        return cls.from_document(doc)

    @staticmethod
    def load_run_info(path) -> dict:
        doc = json.loads(Path(path).read_text())
        return doc.get("run", {})

    def summary_rows(self, scaling, mode: str) -> list[dict]:
        """One flat row per elite, ready for CSV export."""
        rows = []
        for key in sorted(self._cells.keys(), key=_key_sort_token):
            elite, threshold = self._cells[key]
            ratios = ratio_descriptors(elite.report, scaling, mode)
            row: dict = {}
            for i, b in enumerate(key.bins):
                row[f"bin_{i}"] = b
            row["collision"] = "" if key.collision is None else int(key.collision)
            for i, r in enumerate(ratios):
                row[f"ratio_{i}"] = repr(float(r))
            row["fitness"] = repr(elite.fitness.value)
            row["mean_term"] = repr(elite.fitness.mean_term)
            row["std_term"] = repr(elite.fitness.std_term)
            row["collision_term"] = repr(elite.fitness.collision_term)
            row["threshold"] = repr(threshold)
            for i, v in enumerate(elite.report.mean_penalties):
                row[f"mean_{i}"] = repr(v)
            for i, v in enumerate(elite.report.std_penalties):
                row[f"std_{i}"] = repr(v)
            row["mean_collision_count"] = repr(elite.report.mean_collision_count)
            row["non_collision_rate"] = repr(elite.report.non_collision_rate)
            row["eval_seed"] = elite.eval_seed
            rows.append(row)
        return rows
