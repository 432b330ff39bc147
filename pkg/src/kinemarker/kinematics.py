"""Joint angles from the cosine rule, windowed statistics, feature matrices."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .errors import DegenerateTriangle, InconsistentMetadata, WindowTooLong
from .ingest import CanonicalSeries, JointId

MIN_SEGMENT = 1e-9  # metres
STATISTICS = ("mean", "max", "min")


@dataclass(frozen=True)
class AngleDefinition:
    name: str
    vertex: JointId
    end_a: JointId
    end_b: JointId
    projection: str = "none"

    def __post_init__(self):
        for attr in ("vertex", "end_a", "end_b"):
            object.__setattr__(self, attr, JointId(getattr(self, attr)))
        if len({self.vertex, self.end_a, self.end_b}) != 3:
            raise ValueError(f"angle {self.name!r}: joints must be distinct")
        if self.projection not in ("none", "sagittal"):
            raise ValueError(f"angle {self.name!r}: projection must be 'none' or 'sagittal'")

    @classmethod
    def from_dict(cls, d):
        return cls(d["name"], d["vertex"], d["end_a"], d["end_b"], d.get("projection", "none"))

    def to_dict(self):
        return {"name": self.name, "vertex": self.vertex.value, "end_a": self.end_a.value,
                "end_b": self.end_b.value, "projection": self.projection}


J = JointId
DEFAULT_ANGLES: tuple[AngleDefinition, ...] = (
    AngleDefinition("left_knee_flexion", J.LEFT_KNEE, J.LEFT_HIP, J.LEFT_ANKLE),
    AngleDefinition("right_knee_flexion", J.RIGHT_KNEE, J.RIGHT_HIP, J.RIGHT_ANKLE),
    AngleDefinition("left_elbow_flexion", J.LEFT_ELBOW, J.LEFT_SHOULDER, J.LEFT_WRIST),
    AngleDefinition("right_elbow_flexion", J.RIGHT_ELBOW, J.RIGHT_SHOULDER, J.RIGHT_WRIST),
    AngleDefinition("left_arm_abduction", J.LEFT_SHOULDER, J.LEFT_ELBOW, J.LEFT_HIP),
    AngleDefinition("right_arm_abduction", J.RIGHT_SHOULDER, J.RIGHT_ELBOW, J.RIGHT_HIP),
)
del J


@dataclass(frozen=True)
class AngleSeries:
    name: str
    dt: float
    values: np.ndarray = field(repr=False)


@dataclass(frozen=True)
class WindowSpec:
    length: int = 15
    stride: int = 1
    statistics: tuple[str, ...] = STATISTICS

    def __post_init__(self):
        object.__setattr__(self, "statistics", tuple(self.statistics))
        if self.length < 1 or self.stride < 1:
            raise ValueError("window length and stride must be >= 1")
        if not self.statistics:
            raise ValueError("at least one window statistic is required")
        bad = [s for s in self.statistics if s not in STATISTICS]
        if bad:
            raise ValueError(f"unknown statistics {bad}; choose from {STATISTICS}")
        if len(set(self.statistics)) != len(self.statistics):
            raise ValueError("duplicate window statistics")


@dataclass
class FeatureMatrix:
    columns: list[str]
    values: np.ndarray  # (rows, columns)
    actions: list[str]
    patient_id: str
    session: str
    source: str

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise ValueError("feature column names must be unique")
        if self.values.shape != (len(self.actions), len(self.columns)):
            raise ValueError("values shape does not match rows/columns")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("feature matrix contains non-finite entries")

    @property
    def n_rows(self):
        return self.values.shape[0]

    def rows_for(self, action: str) -> "FeatureMatrix":
        mask = np.array([a == action for a in self.actions], dtype=bool)
        return FeatureMatrix(list(self.columns), self.values[mask],
                             [a for a in self.actions if a == action],
                             self.patient_id, self.session, self.source)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["action", *self.columns])
            for action, row in zip(self.actions, self.values):
                w.writerow([action, *(repr(float(v)) for v in row)])


# --------------------------------------------------------------------------- angles

def joint_angles(h, k, a) -> np.ndarray:
    """Vectorised interior angle at ``k`` in degrees; points on the last axis.

    Raises DegenerateTriangle (with the first offending index for batched
    input) when either limb segment is shorter than 1e-9 m.
    """
    h, k, a = (np.asarray(p, dtype=float) for p in (h, k, a))
    m = h - k
    n = a - k
    p = h - a
    mm = np.einsum("...i,...i", m, m)
    nn = np.einsum("...i,...i", n, n)
    pp = np.einsum("...i,...i", p, p)
    bad = (mm < MIN_SEGMENT ** 2) | (nn < MIN_SEGMENT ** 2)
    if np.any(bad):
        frame = int(np.flatnonzero(np.atleast_1d(bad))[0]) if np.ndim(bad) else None
        raise DegenerateTriangle(frame=frame)
    cos = (mm + nn - pp) / (2.0 * np.sqrt(mm * nn))
    theta = np.degrees(np.arccos(np.clip(cos, -1.0, 1.0)))
    return np.clip(theta, 0.0, 180.0)


def joint_angle(h, k, a) -> float:
    """Angle hip-knee-ankle style: the interior angle at ``k``, in degrees."""
    return float(joint_angles(h, k, a))


def mediolateral_axis(series: CanonicalSeries) -> int:
    """Horizontal axis (x=0 or z=2, y is up) carrying the hip-to-hip line."""
    hh = series.joint(JointId.RIGHT_HIP) - series.joint(JointId.LEFT_HIP)
    spread = np.abs(hh).mean(axis=0)
    return 0 if spread[0] >= spread[2] else 2


def compute_angle_series(series: CanonicalSeries, definition: AngleDefinition) -> AngleSeries:
    h = series.joint(definition.end_a)
    k = series.joint(definition.vertex)
    a = series.joint(definition.end_b)
    if definition.projection == "sagittal":
        keep = [ax for ax in range(3) if ax != mediolateral_axis(series)]
        h, k, a = h[:, keep], k[:, keep], a[:, keep]
    values = joint_angles(h, k, a)
    return AngleSeries(definition.name, series.dt, values)


# --------------------------------------------------------------------------- windows

def window_count(n: int, length: int, stride: int) -> int:
    return (n - length) // stride + 1


def window_statistics(angle: AngleSeries | np.ndarray, spec: WindowSpec) -> dict[str, np.ndarray]:
    values = np.asarray(angle.values if isinstance(angle, AngleSeries) else angle, dtype=float)
    if spec.length > len(values):
        raise WindowTooLong(f"window of {spec.length} frames exceeds series of {len(values)}")
    windows = np.lib.stride_tricks.sliding_window_view(values, spec.length)[::spec.stride]
    funcs = {"mean": np.mean, "max": np.max, "min": np.min}
    return {s: funcs[s](windows, axis=1) for s in spec.statistics}


def feature_name(angle_name: str, statistic: str) -> str:
    return f"{angle_name}_{statistic}"


def feature_columns(defs: Sequence[AngleDefinition], spec: WindowSpec) -> list[str]:
    return [feature_name(d.name, s) for d in defs for s in spec.statistics]


def recording_features(series: CanonicalSeries, defs: Sequence[AngleDefinition],
                       spec: WindowSpec) -> np.ndarray:
    """(windows, features) block for one recording, columns per :func:`feature_columns`."""
    cols = []
    for d in defs:
        try:
            stats = window_statistics(compute_angle_series(series, d), spec)
        except DegenerateTriangle as exc:
            raise DegenerateTriangle(f"{d.name}: limb segment shorter than 1e-9 m",
                                     frame=exc.frame) from None
        cols.extend(stats[s] for s in spec.statistics)
    return np.column_stack(cols)


def assemble_feature_matrix(recordings: Sequence[CanonicalSeries],
                            defs: Sequence[AngleDefinition],
                            spec: WindowSpec = WindowSpec()) -> FeatureMatrix:
    if not defs:
        raise ValueError("no angle definitions given")
    if not recordings:
        raise ValueError("no recordings given")
    names = [d.name for d in defs]
    if len(set(names)) != len(names):
        raise ValueError("angle definition names must be unique")
    meta = {(r.patient_id, r.session, r.source) for r in recordings}
    if len(meta) != 1:
        raise InconsistentMetadata(f"recordings mix patient/session/source: {sorted(meta)}")
    blocks, actions = [], []
    for rec in recordings:
        block = recording_features(rec, defs, spec)
        blocks.append(block)
        actions.extend([rec.action] * block.shape[0])
    patient_id, session, source = meta.pop()
    return FeatureMatrix(feature_columns(defs, spec), np.vstack(blocks), actions,
                         patient_id, session, source)
