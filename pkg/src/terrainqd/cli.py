"""Command line entry points.

Subcommands: `run` (one search), `std-ablation` (paired runs probing the
consistency penalty), `export` (archive to heightmaps / summary /
parallel-coordinates data), `eval` (inspect a single genome). Report
paths write figures next to every CSV they produce.

Exit codes: 0 success, 1 usage or configuration error, 2 evaluation or
runtime failure.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_RUNTIME = 2


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # argparse defaults to exit code 2
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _add_config_flags(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", metavar="FILE", help="run configuration JSON")
    group = parser.add_argument_group("config overrides")
    group.add_argument("--mode", choices=("cassie", "anymal"))
    group.add_argument("--budget", type=int, metavar="N")
    group.add_argument("--emitters", type=int, metavar="N")
    group.add_argument("--population", type=int, metavar="N")
    group.add_argument("--episodes", type=int, metavar="N")
    group.add_argument("--alpha", type=float)
    group.add_argument("--lambda", type=float, dest="lambda_")
    group.add_argument("--offset", type=float)
    group.add_argument("--min-f", type=float, dest="min_f")
    group.add_argument("--learning-rate", type=float, dest="archive_learning_rate")
    group.add_argument("--resolution", type=float, dest="resolution_m", metavar="METERS")
    group.add_argument("--seed", type=int)
    group.add_argument("--evaluator", choices=("builtin", "external"))
    group.add_argument("--external-command", dest="external_command", metavar="CMD")
    group.add_argument("--episode-timeout", type=float, dest="episode_timeout_s",
                       metavar="SECONDS")
    group.add_argument("--snapshot-interval", type=int, dest="snapshot_interval",
                       metavar="N")
    group.add_argument("--sigma0", type=float)
    group.add_argument("--workers", type=int, metavar="N",
                       help="evaluation threads (default: all cores)")


_OVERRIDE_FIELDS = ("mode", "budget", "emitters", "population", "episodes",
                    "alpha", "lambda_", "offset", "min_f", "archive_learning_rate",
                    "resolution_m", "seed", "evaluator", "external_command",
                    "episode_timeout_s", "snapshot_interval", "sigma0", "workers")


def _load_config(args):
    from .config import RunConfig

    config = RunConfig.from_file(args.config) if args.config else RunConfig()
    overrides = {f: getattr(args, f) for f in _OVERRIDE_FIELDS if hasattr(args, f)}
    return config.with_overrides(**overrides).validate()


def _progress_printer(budget: int):
    every = max(1, budget // 20)

    def report(row):
        if row.iteration % every == 0 or row.iteration == budget:
            print(f"iter {row.iteration:>5}/{budget}  qd {row.qd_score:10.2f}  "
                  f"size {row.archive_size:>5}  mean fitness {row.mean_fitness:8.3f}  "
                  f"[{row.wall_clock_s:7.1f}s]")

    return report


# ---------------------------------------------------------------------------


def cmd_run(args) -> int:
    from .optimizer import run
    from .plots import plot_metrics, plot_parallel_coordinates

    config = _load_config(args)
    result = run(config, args.out, progress=_progress_printer(config.budget))
    figures = result.out_dir / "figures"
    figures.mkdir(exist_ok=True)
    plot_metrics(result.metrics, figures / "metrics.png")
    plot_parallel_coordinates(result.archive, result.scaling, config.mode,
                              figures / "parallel_coords.png")
    stats = result.archive.metrics(config.offset)
    print(f"done: {stats.archive_size} elites, qd score {stats.qd_score:.2f}; "
          f"outputs in {result.out_dir}")
    return EXIT_OK


def cmd_std_ablation(args) -> int:
    from .ablation import run_std_ablation
    from .plots import plot_ablation, plot_metrics

    config = _load_config(args)
    result = run_std_ablation(config, args.out,
                              progress=_progress_printer(config.budget))
    figures = result.out_dir / "figures"
    figures.mkdir(exist_ok=True)
    plot_ablation(result.rows, figures / "ablation.png")
    plot_metrics(result.run_alpha1.metrics, figures / "metrics_alpha1.png")
    plot_metrics(result.run_alpha0.metrics, figures / "metrics_alpha0.png")
    final = result.rows[-1]
    print(f"final snapshot mean STD: alpha=1 {final.mean_std_alpha1:.4f}  "
          f"alpha=0 {final.mean_std_alpha0:.4f}")
    print(f"comparison written to {result.out_dir / 'ablation.csv'}")
    return EXIT_OK


def cmd_export(args) -> int:
    from .archive import Archive
    from .descriptors import PenaltyScaling, ratio_descriptors, unit_scaling
    from .plots import plot_heightmap, plot_parallel_coordinates
    from .terrain import rasterize, save_heightmap_csv, save_heightmap_pgm

    archive = Archive.load(args.archive)
    info = Archive.load_run_info(args.archive)
    mode = info.get("mode", "cassie")
    resolution = info.get("resolution_m", 0.05)
    if "scaling" in info:
        scaling = PenaltyScaling(scale=tuple(info["scaling"]["scale"]),
                                 collision_scale=info["scaling"]["collision_scale"])
    else:
        print("note: snapshot carries no run info; using unit scaling", file=sys.stderr)
        scaling = unit_scaling()

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.what == "heightmaps":
        for elite in archive.elites():
            label = elite.key.label()
            heightmap = rasterize(elite.genome, resolution)
            save_heightmap_csv(heightmap, out / f"heightmap_{label}.csv")
            save_heightmap_pgm(heightmap, out / f"heightmap_{label}.pgm")
            plot_heightmap(heightmap, out / f"heightmap_{label}.png",
                           title=f"cell {label}  fitness {elite.fitness.value:.3f}")
        print(f"exported {len(archive)} heightmaps to {out}")
    elif args.what == "summary":
        rows = archive.summary_rows(scaling, mode)
        path = out / "summary.csv"
        if rows:
            with open(path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(rows[0].keys()))
                writer.writeheader()
                writer.writerows(rows)
        else:
            path.write_text("")
        print(f"wrote {path}")
    else:  # parallel-coords
        path = out / "parallel_coords.csv"
        elites = archive.elites()
        n_ratios = 6 if mode == "anymal" else 5
        fields = [f"ratio_{i}" for i in range(n_ratios)] + ["collision", "fitness"]
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(fields)
            for elite in elites:
                ratios = ratio_descriptors(elite.report, scaling, mode)
                collision = "" if elite.key.collision is None else int(elite.key.collision)
                writer.writerow([repr(float(r)) for r in ratios]
                                + [collision, repr(elite.fitness.value)])
        plot_parallel_coordinates(archive, scaling, mode, out / "parallel_coords.png")
        print(f"wrote {path}")
    return EXIT_OK


def cmd_eval(args) -> int:
    from .descriptors import unit_scaling
    from .evaluation import report_to_dict
    from .optimizer import evaluate_genome, make_evaluator
    from .terrain import load_genome

    config = _load_config(args)
    genome = load_genome(args.genome)
    scaling = config.scaling_object()
    if scaling is None:
        print("note: no calibrated scaling in config; using unit scaling",
              file=sys.stderr)
        scaling = unit_scaling()
    evaluator = make_evaluator(config)
    try:
        _, report, fitness, key = evaluate_genome(
            genome, evaluator=evaluator, scaling=scaling, mode=config.mode,
            alpha=config.alpha, lambda_=config.lambda_,
            resolution_m=config.resolution_m, episodes=config.episodes,
            seed=config.seed)
    finally:
        evaluator.close()
    doc = {
        "report": report_to_dict(report),
        "fitness": {
            "value": fitness.value,
            "mean_term": fitness.mean_term,
            "std_term": fitness.std_term,
            "collision_term": fitness.collision_term,
        },
        "descriptor_key": None if key is None else {
            "bins": list(key.bins),
            "collision": key.collision,
        },
    }
    json.dump(doc, sys.stdout, indent=1)
    print()
    return EXIT_OK


# ---------------------------------------------------------------------------


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="terrainqd",
                     description="Quality-Diversity terrain search for "
                                 "stress-testing locomotion controllers")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p_run = sub.add_parser("run", help="run one archive-filling search")
    _add_config_flags(p_run)
    p_run.add_argument("--out", required=True, metavar="DIR", help="run directory")
    p_run.set_defaults(func=cmd_run)

    p_abl = sub.add_parser("std-ablation",
                           help="paired runs with and without the STD penalty")
    _add_config_flags(p_abl)
    p_abl.add_argument("--out", required=True, metavar="DIR")
    p_abl.set_defaults(func=cmd_std_ablation)

    p_exp = sub.add_parser("export", help="export archive contents")
    p_exp.add_argument("--archive", required=True, metavar="FILE",
                       help="archive snapshot JSON")
    p_exp.add_argument("--what", required=True,
                       choices=("heightmaps", "summary", "parallel-coords"))
    p_exp.add_argument("--out", required=True, metavar="DIR")
    p_exp.set_defaults(func=cmd_export)

    p_eval = sub.add_parser("eval", help="evaluate a single genome file")
    _add_config_flags(p_eval)
    p_eval.add_argument("--genome", required=True, metavar="FILE",
                        help="genome JSON ({\"params\": [64 numbers]})")
    p_eval.set_defaults(func=cmd_eval)
    return parser


def main(argv=None) -> int:
    from .config import ConfigError
    from .evaluation import EvaluationError
    from .terrain import GenomeError

    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ConfigError, GenomeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except EvaluationError as exc:
        print(f"evaluation error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (OSError, ValueError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
