"""Run configuration: one JSON document, validated, persisted verbatim.

CLI flags override file fields; the effective configuration (with any
auto-calibrated scaling resolved to numbers) is always written into the
run directory so a run can be reproduced from its own output.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass
from pathlib import Path

from .descriptors import MODES, PenaltyScaling
from .evaluation import N_PENALTIES

AUTO_SCALING = "auto-calibrate"


class ConfigError(ValueError):
    """Invalid run configuration; carries the offending field name."""

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field


@dataclass
class RunConfig:
    mode: str = "cassie"
    budget: int = 1000
    emitters: int = 10
    population: int = 20
    episodes: int = 20
    alpha: float = 1.0
    lambda_: float = 2.0
    offset: float = 20.0
    min_f: float = -20.0
    archive_learning_rate: float = 0.01
    resolution_m: float = 0.05
    scaling: object = AUTO_SCALING  # AUTO_SCALING or {"scale": [...], "collision_scale": x}
    seed: int = 0
    evaluator: str = "builtin"
    external_command: str | None = None
    episode_timeout_s: float = 60.0
    snapshot_interval: int = 50
    sigma0: float = 0.5
    restart_patience: int = 5
    calibration_genomes: int = 100
    workers: int | None = None
    out_dir: str | None = None

    # ------------------------------------------------------------------

    def validate(self) -> "RunConfig":
        if self.mode not in MODES:
            raise ConfigError("mode", f"must be one of {MODES}")
        for field in ("budget", "emitters", "population", "episodes",
                      "snapshot_interval", "restart_patience", "calibration_genomes"):
            value = getattr(self, field)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(field, "must be a positive integer")
        for field in ("alpha", "lambda_", "offset"):
            if float(getattr(self, field)) < 0.0:
                raise ConfigError(field, "must be nonnegative")
        for field in ("resolution_m", "sigma0", "episode_timeout_s"):
            if not float(getattr(self, field)) > 0.0:
                raise ConfigError(field, "must be positive")
        if not 0.0 < self.archive_learning_rate <= 1.0:
            raise ConfigError("archive_learning_rate", "must be in (0, 1]")
        if self.evaluator not in ("builtin", "external"):
            raise ConfigError("evaluator", "must be 'builtin' or 'external'")
        if self.evaluator == "external" and not self.external_command:
            raise ConfigError("external_command", "required when evaluator is 'external'")
        if self.workers is not None and (not isinstance(self.workers, int) or self.workers < 1):
            raise ConfigError("workers", "must be a positive integer")
        try:
            self.scaling_object()
        except ValueError as exc:
            raise ConfigError("scaling", str(exc)) from exc
        return self

    def scaling_object(self) -> PenaltyScaling | None:
        """The configured scaling, or None when it should be calibrated."""
        if self.scaling == AUTO_SCALING:
            return None
        if isinstance(self.scaling, PenaltyScaling):
            return self.scaling
        if isinstance(self.scaling, dict):
            scale = self.scaling.get("scale")
            if not isinstance(scale, (list, tuple)) or len(scale) != N_PENALTIES:
                raise ValueError(f"scaling.scale must list {N_PENALTIES} positive numbers")
            return PenaltyScaling(scale=tuple(float(v) for v in scale),
                                  collision_scale=float(self.scaling.get("collision_scale", 1.0)))
        raise ValueError("scaling must be 'auto-calibrate' or an object with 'scale'")

    def resolved(self, scaling: PenaltyScaling, out_dir: str) -> "RunConfig":
        """Copy with calibration resolved and the output directory pinned."""
        return dataclasses.replace(
            self,
            scaling={"scale": list(scaling.scale), "collision_scale": scaling.collision_scale},
            out_dir=out_dir,
        )

    # ------------------------------------------------------------------

    def to_dict(self) -> dict:
        doc = dataclasses.asdict(self)
        doc["lambda"] = doc.pop("lambda_")
        if isinstance(self.scaling, PenaltyScaling):
            doc["scaling"] = {"scale": list(self.scaling.scale),
                              "collision_scale": self.scaling.collision_scale}
        return doc

    @classmethod
    def from_dict(cls, doc: dict) -> "RunConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        kwargs = {}
        for key, value in doc.items():
            name = "lambda_" if key == "lambda" else key
            if name not in known:
                raise ConfigError(key, "unknown configuration field")
            kwargs[name] = value
        return cls(**kwargs)

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1) + "\n")

    @classmethod
    def from_file(cls, path) -> "RunConfig":
        path = Path(path)
        try:
            doc = json.loads(path.read_text())
        except OSError as exc:
            raise ConfigError("config", f"cannot read {path}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError("config", f"{path} is not valid JSON: {exc}") from exc
        if not isinstance(doc, dict):
            raise ConfigError("config", "top-level JSON value must be an object")
        return cls.from_dict(doc)

    def with_overrides(self, **overrides) -> "RunConfig":
        """Apply non-None CLI overrides on top of file values."""
        updates = {k: v for k, v in overrides.items() if v is not None}
        return dataclasses.replace(self, **updates)
