"""Pipeline configuration: a single JSON document.

Relative ``input_dir``/``output_dir`` paths resolve against the directory of
the config file. Every field takes part in :meth:`PipelineConfig.digest`.
"""

from __future__ import annotations

import dataclasses
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

from .errors import ConfigError
from .ingest import CONVENTIONS, DEFAULT_DT, DEFAULT_GAP_TOLERANCE
from .kinematics import DEFAULT_ANGLES, AngleDefinition, WindowSpec
from .stats import ALPHA, BA_MULTIPLIER
from .temporal import IMPULSE_MODES


@dataclass(frozen=True)
class PipelineConfig:
    input_dir: str = "."
    output_dir: str = "out"
    angles: tuple[AngleDefinition, ...] = DEFAULT_ANGLES
    window: WindowSpec = field(default_factory=WindowSpec)
    dt: float = DEFAULT_DT
    gap_tolerance: float = DEFAULT_GAP_TOLERANCE
    top_k: int = 5
    tails: str = "one"
    alpha: float = ALPHA
    ba_multiplier: float = BA_MULTIPLIER
    # None tests every feature column
    biomarkers: tuple[str, ...] | None = None
    # None picks the only source present, or mesh_model_24 when both are
    source: str | None = None
    # hypothesised change after treatment; "decrease" reports t on pre - post
    direction: str = "decrease"
    impulse_mode: str = "angle"
    histogram_session: str = "pre"
    workers: int = 4
    svg: bool = False
    base_dir: str = field(default=".", compare=False)

    def __post_init__(self):
        object.__setattr__(self, "angles", tuple(self.angles))
        if self.biomarkers is not None:
            object.__setattr__(self, "biomarkers", tuple(self.biomarkers))
        self.validate()

    def validate(self):
        def bad(msg):
            raise ConfigError(msg)

        if not self.angles:
            bad("at least one angle definition is required")
        names = [a.name for a in self.angles]
        if len(set(names)) != len(names):
            bad("angle names must be unique")
        if not self.dt > 0:
            bad("dt must be positive")
        if not self.gap_tolerance > 0:
            bad("gap_tolerance must be positive")
        if self.top_k < 1:
            bad("top_k must be >= 1")
        if self.tails not in ("one", "two"):
            bad("tails must be 'one' or 'two'")
        if not 0 < self.alpha < 1:
            bad("alpha must lie in (0, 1)")
        if not self.ba_multiplier > 0:
            bad("ba_multiplier must be positive")
        if self.source is not None and self.source not in CONVENTIONS:
            bad(f"source must be one of {sorted(CONVENTIONS)}")
        if self.direction not in ("decrease", "increase"):
            bad("direction must be 'decrease' or 'increase'")
        if self.impulse_mode not in IMPULSE_MODES:
            bad(f"impulse_mode must be one of {IMPULSE_MODES}")
        if self.histogram_session not in ("pre", "post", "pooled"):
            bad("histogram_session must be 'pre', 'post' or 'pooled'")
        if self.workers < 1:
            bad("workers must be >= 1")
        if self.biomarkers is not None:
            known = set(self.feature_columns())
            unknown = [b for b in self.biomarkers if b not in known]
            if unknown:
                bad(f"biomarkers not produced by the angle/window config: {unknown}")

    def feature_columns(self) -> list[str]:
        return [f"{a.name}_{s}" for a in self.angles for s in self.window.statistics]

    def selected_biomarkers(self) -> list[str]:
        return list(self.biomarkers) if self.biomarkers is not None else self.feature_columns()

    @property
    def input_path(self) -> Path:
        return Path(self.base_dir) / self.input_dir

    @property
    def output_path(self) -> Path:
        return Path(self.base_dir) / self.output_dir

    def to_dict(self) -> dict:
        return {
            "input_dir": self.input_dir,
            "output_dir": self.output_dir,
            "angles": [a.to_dict() for a in self.angles],
            "window": {"length": self.window.length, "stride": self.window.stride,
                       "statistics": list(self.window.statistics)},
            "dt": self.dt,
            "gap_tolerance": self.gap_tolerance,
            "top_k": self.top_k,
            "tails": self.tails,
            "alpha": self.alpha,
            "ba_multiplier": self.ba_multiplier,
            "biomarkers": None if self.biomarkers is None else list(self.biomarkers),
            "source": self.source,
            "direction": self.direction,
            "impulse_mode": self.impulse_mode,
            "histogram_session": self.histogram_session,
            "workers": self.workers,
            "svg": self.svg,
        }

    def digest(self) -> str:
        payload = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(payload.encode("utf-8")).hexdigest()

    def replace(self, **changes) -> "PipelineConfig":
        return dataclasses.replace(self, **changes)

    @classmethod
    def from_dict(cls, d: dict, base_dir: str | Path = ".") -> "PipelineConfig":
        known = {f.name for f in dataclasses.fields(cls)} - {"base_dir"}
        unknown = sorted(set(d) - known)
        if unknown:
            raise ConfigError(f"unknown config keys: {unknown}")
        kw = dict(d)
        try:
            if "angles" in kw:
                kw["angles"] = tuple(AngleDefinition.from_dict(a) for a in kw["angles"])
            if "window" in kw:
                w = kw["window"]
                kw["window"] = WindowSpec(int(w.get("length", 15)), int(w.get("stride", 1)),
                                          tuple(w.get("statistics", ("mean", "max", "min"))))
            return cls(**kw, base_dir=str(base_dir))
        except (KeyError, TypeError, ValueError) as exc:
            raise ConfigError(f"invalid configuration: {exc}") from None


def load_config(path) -> PipelineConfig:
    path = Path(path)
    with path.open(encoding="utf-8") as fh:
        try:
            data = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: malformed JSON ({exc.msg})") from None
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: expected a JSON object")
    return PipelineConfig.from_dict(data, base_dir=path.parent)


def write_config(config: PipelineConfig, path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        json.dump(config.to_dict(), fh, indent=2)
        fh.write("\n")
