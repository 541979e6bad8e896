import sys
from pathlib import Path

import numpy as np
import pytest

from terrainqd.archive import Archive
from terrainqd.config import RunConfig
from terrainqd.descriptors import unit_scaling
from terrainqd.evaluation import BuiltinWalker
from terrainqd.optimizer import Emitter, evaluate_genome, run

ECHO = Path(__file__).parent / "echo_evaluator.py"


def small_config(**overrides) -> RunConfig:
    base = dict(budget=3, emitters=2, population=6, episodes=3, resolution_m=0.2,
                calibration_genomes=6, snapshot_interval=2, seed=11)
    base.update(overrides)
    return RunConfig(**base)


class TestEmitter:
    def test_ask_shape_and_tell_cycle(self):
        emitter = Emitter(0, 0.5, 8, np.random.default_rng(0), patience=5)
        samples = emitter.ask()
        assert samples.shape == (8, 64)
        emitter.tell(samples, np.linspace(1, 0, 8), Archive())
        assert emitter.cma.generation == 1

    def test_tell_requires_matching_ask(self):
        emitter = Emitter(0, 0.5, 8, np.random.default_rng(1), patience=5)
        samples = emitter.ask()
        with pytest.raises(ValueError, match="match"):
            emitter.tell(samples + 1.0, np.zeros(8), Archive())
        samples = emitter.ask()
        with pytest.raises(ValueError, match="align"):
            emitter.tell(samples, np.zeros(7), Archive())

    def test_tell_without_ask(self):
        emitter = Emitter(0, 0.5, 8, np.random.default_rng(2), patience=5)
        with pytest.raises(ValueError, match="ask"):
            emitter.tell(np.zeros((8, 64)), np.zeros(8), Archive())

    def test_restart_after_patience(self):
        emitter = Emitter(0, 0.5, 8, np.random.default_rng(3), patience=3)
        archive = Archive()
        for _ in range(3):
            emitter.tell(emitter.ask(), np.full(8, -1.0), archive)
        assert emitter.restarts == 1
        # empty archive: restart mean drawn inside the genome box
        assert np.all(np.abs(emitter.cma.mean) <= 1.0)
        assert emitter.cma.sigma == 0.5

    def test_positive_improvement_resets_patience(self):
        emitter = Emitter(0, 0.5, 8, np.random.default_rng(4), patience=2)
        archive = Archive()
        values = np.full(8, -1.0)
        emitter.tell(emitter.ask(), values, archive)
        good = np.full(8, -1.0)
        good[0] = 0.5
        emitter.tell(emitter.ask(), good, archive)
        emitter.tell(emitter.ask(), values, archive)
        assert emitter.restarts == 0

    def test_restart_from_elite_genome(self):
        from test_archive import make_elite

        archive = Archive(learning_rate=1.0)
        archive.try_insert(make_elite(value=5.0, seed=99))
        emitter = Emitter(0, 0.5, 8, np.random.default_rng(5), patience=1)
        emitter.tell(emitter.ask(), np.full(8, -2.0), archive)
        assert emitter.restarts == 1
        elite = archive.elites()[0]
        assert np.array_equal(emitter.cma.mean, elite.genome)

    def test_restart_on_numerical_failure(self):
        emitter = Emitter(0, 0.5, 8, np.random.default_rng(6), patience=10)
        samples = emitter.ask()
        emitter.cma.cov = np.full((64, 64), np.nan)
        emitter.cma._eig_fresh = False
        emitter.tell(samples, np.zeros(8), Archive())
        assert emitter.restarts == 1


class TestEvaluateGenome:
    def test_zero_genome_is_degenerate(self):
        clipped, report, fitness, key = evaluate_genome(
            np.zeros(64), evaluator=BuiltinWalker(), scaling=unit_scaling(),
            mode="cassie", alpha=1.0, lambda_=2.0, resolution_m=0.2,
            episodes=3, seed=5)
        assert key is None
        assert fitness.value == 0.0
        assert not report.any_collision

    def test_unclipped_genome_is_clipped(self):
        genome = np.full(64, 3.0)
        clipped, _, _, _ = evaluate_genome(
            genome, evaluator=BuiltinWalker(), scaling=unit_scaling(),
            mode="cassie", alpha=1.0, lambda_=2.0, resolution_m=0.2,
            episodes=2, seed=5)
        assert np.all(clipped == 1.0)


class TestRun:
    def test_artifacts_and_metrics(self, tmp_path):
        result = run(small_config(), tmp_path / "run")
        assert (tmp_path / "run" / "config.json").exists()
        assert (tmp_path / "run" / "archive.json").exists()
        assert (tmp_path / "run" / "summary.csv").exists()
        assert (tmp_path / "run" / "archive_000002.json").exists()
        assert not (tmp_path / "run" / "archive_000003.json").exists()
        assert len(result.metrics) == 3
        assert result.metrics[0].evaluations == 12
        assert result.metrics[-1].evaluations == 36
        metrics_lines = (tmp_path / "run" / "metrics.csv").read_text().strip().splitlines()
        assert len(metrics_lines) == 4  # header + one row per iteration

    def test_budget_one_counts_candidates(self, tmp_path):
        result = run(small_config(budget=1, snapshot_interval=5), tmp_path / "one")
        assert len(result.metrics) == 1
        assert result.metrics[0].evaluations == 2 * 6

    def test_deterministic_archives(self, tmp_path):
        run(small_config(), tmp_path / "a")
        run(small_config(), tmp_path / "b")
        a = (tmp_path / "a" / "archive.json").read_bytes()
        b = (tmp_path / "b" / "archive.json").read_bytes()
        assert a == b

    def test_different_seeds_differ(self, tmp_path):
        run(small_config(), tmp_path / "a")
        run(small_config(seed=12), tmp_path / "b")
        a = (tmp_path / "a" / "archive.json").read_bytes()
        b = (tmp_path / "b" / "archive.json").read_bytes()
        assert a != b

    def test_effective_config_persisted_with_scaling(self, tmp_path):
        result = run(small_config(), tmp_path / "run")
        persisted = RunConfig.from_file(tmp_path / "run" / "config.json")
        assert isinstance(persisted.scaling, dict)
        assert persisted.scaling["scale"] == list(result.scaling.scale)
        # re-running from the persisted config reproduces the archive
        rerun = run(persisted, tmp_path / "rerun")
        assert ((tmp_path / "run" / "archive.json").read_bytes()
                == (tmp_path / "rerun" / "archive.json").read_bytes())

    def test_anymal_mode_keys(self, tmp_path):
        result = run(small_config(mode="anymal"), tmp_path / "anymal")
        assert len(result.archive) > 0
        for elite in result.archive.elites():
            assert len(elite.key.bins) == 6
            assert elite.key.collision is None

    def test_external_evaluator_run(self, tmp_path):
        command = f"{sys.executable} {ECHO}"
        cfg = small_config(budget=2, emitters=1, population=4, episodes=2,
                           resolution_m=0.5, calibration_genomes=3,
                           evaluator="external", external_command=command)
        result = run(cfg, tmp_path / "ext")
        assert len(result.metrics) == 2

    def test_external_failures_degrade_gracefully(self, tmp_path):
        # evaluator dies immediately: every candidate fails, run still completes
        command = f"{sys.executable} {ECHO} --die-after 0"
        cfg = small_config(budget=1, emitters=1, population=3, episodes=2,
                           resolution_m=0.5, calibration_genomes=2,
                           scaling={"scale": [1.0] * 5, "collision_scale": 1.0},
                           evaluator="external", external_command=command)
        result = run(cfg, tmp_path / "dead")
        assert len(result.archive) == 0
        assert result.metrics[0].archive_size == 0

    def test_requires_out_dir(self):
        with pytest.raises(ValueError, match="output directory"):
            run(small_config())
