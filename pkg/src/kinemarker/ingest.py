"""Skeleton file parsing, joint mapping, validation and resampling.

Files are JSON Lines: a header object on the first line
(``patient_id``, ``session``, ``source``, ``action``) followed by one frame
per line, ``{"t": seconds, "joints": {label: [x, y, z], ...}}``. Coordinates
are metres in a right-handed, y-up frame. Any ``rotations`` payload the mesh
regressor exports alongside the positions is accepted and ignored.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

import numpy as np

from .errors import (
    InvalidSeries,
    MissingJoint,
    NonFiniteCoordinate,
    ParseError,
    TooFewFrames,
    UnknownConvention,
    UnknownJoint,
    UnmappedJoint,
)

DEFAULT_DT = 1.0 / 30.0
DEFAULT_GAP_TOLERANCE = 0.2

SESSIONS = ("pre", "post")
ACTIONS = ("squat", "sit_to_stand")


class JointId(str, enum.Enum):
    PELVIS = "PELVIS"
    LEFT_HIP = "LEFT_HIP"
    RIGHT_HIP = "RIGHT_HIP"
    LEFT_KNEE = "LEFT_KNEE"
    RIGHT_KNEE = "RIGHT_KNEE"
    LEFT_ANKLE = "LEFT_ANKLE"
    RIGHT_ANKLE = "RIGHT_ANKLE"
    LEFT_SHOULDER = "LEFT_SHOULDER"
    RIGHT_SHOULDER = "RIGHT_SHOULDER"
    LEFT_ELBOW = "LEFT_ELBOW"
    RIGHT_ELBOW = "RIGHT_ELBOW"
    LEFT_WRIST = "LEFT_WRIST"
    RIGHT_WRIST = "RIGHT_WRIST"
    SPINE_CHEST = "SPINE_CHEST"
    NECK = "NECK"


CANONICAL_JOINTS: tuple[JointId, ...] = tuple(JointId)
JOINT_INDEX = {j: i for i, j in enumerate(CANONICAL_JOINTS)}
_CANONICAL_NAMES = tuple(j.value for j in CANONICAL_JOINTS)


@dataclass(frozen=True)
class SkeletonConvention:
    """Source joint labels and their canonical counterparts.

    ``labels`` is ordered by the source's joint slot, so a label may also be
    referred to by its index (``"4"`` is the fifth slot).
    """

    name: str
    labels: tuple[str, ...]
    mapping: Mapping[str, JointId]

    _label_set: frozenset = field(init=False, repr=False, compare=False)
    _required: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        unknown = [lab for lab in self.mapping if lab not in self.labels]
        if unknown:
            raise ValueError(f"{self.name}: mapping uses unknown labels {unknown}")
        targets = list(self.mapping.values())
        if len(set(targets)) != len(targets):
            raise ValueError(f"{self.name}: mapping is not injective")
        object.__setattr__(self, "_label_set", frozenset(self.labels))
        object.__setattr__(self, "_required",
                           tuple(lab for lab in self.labels if lab in self.mapping))

    def resolve(self, label: str) -> str:
        """Return the source label for ``label`` (a name or a slot index)."""
        if label in self._label_set:
            return label
        if label.isdigit() and int(label) < len(self.labels):
            return self.labels[int(label)]
        raise UnknownJoint(label, self.name)

    def required_labels(self) -> tuple[str, ...]:
        return self._required

    def check_coverage(self) -> None:
        covered = set(self.mapping.values())
        for joint in CANONICAL_JOINTS:
            if joint not in covered:
                raise UnmappedJoint(joint.value, self.name)


DEPTH_TRACKER_32 = SkeletonConvention(
    name="depth_tracker_32",
    labels=(
        "PELVIS", "SPINE_NAVAL", "SPINE_CHEST", "NECK",
        "CLAVICLE_LEFT", "SHOULDER_LEFT", "ELBOW_LEFT", "WRIST_LEFT",
        "HAND_LEFT", "HANDTIP_LEFT", "THUMB_LEFT",
        "CLAVICLE_RIGHT", "SHOULDER_RIGHT", "ELBOW_RIGHT", "WRIST_RIGHT",
        "HAND_RIGHT", "HANDTIP_RIGHT", "THUMB_RIGHT",
        "HIP_LEFT", "KNEE_LEFT", "ANKLE_LEFT", "FOOT_LEFT",
        "HIP_RIGHT", "KNEE_RIGHT", "ANKLE_RIGHT", "FOOT_RIGHT",
        "HEAD", "NOSE", "EYE_LEFT", "EAR_LEFT", "EYE_RIGHT", "EAR_RIGHT",
    ),
    mapping={
        "PELVIS": JointId.PELVIS,
        "HIP_LEFT": JointId.LEFT_HIP,
        "HIP_RIGHT": JointId.RIGHT_HIP,
        "KNEE_LEFT": JointId.LEFT_KNEE,
        "KNEE_RIGHT": JointId.RIGHT_KNEE,
        "ANKLE_LEFT": JointId.LEFT_ANKLE,
        "ANKLE_RIGHT": JointId.RIGHT_ANKLE,
        "SHOULDER_LEFT": JointId.LEFT_SHOULDER,
        "SHOULDER_RIGHT": JointId.RIGHT_SHOULDER,
        "ELBOW_LEFT": JointId.LEFT_ELBOW,
        "ELBOW_RIGHT": JointId.RIGHT_ELBOW,
        "WRIST_LEFT": JointId.LEFT_WRIST,
        "WRIST_RIGHT": JointId.RIGHT_WRIST,
        "SPINE_CHEST": JointId.SPINE_CHEST,
        "NECK": JointId.NECK,
    },
)

MESH_MODEL_24 = SkeletonConvention(
    name="mesh_model_24",
    labels=(
        "pelvis", "left_hip", "right_hip", "spine1", "left_knee", "right_knee",
        "spine2", "left_ankle", "right_ankle", "spine3", "left_foot", "right_foot",
        "neck", "left_collar", "right_collar", "head", "left_shoulder",
        "right_shoulder", "left_elbow", "right_elbow", "left_wrist", "right_wrist",
        "left_hand", "right_hand",
    ),
    mapping={
        "pelvis": JointId.PELVIS,
        "left_hip": JointId.LEFT_HIP,
        "right_hip": JointId.RIGHT_HIP,
        "left_knee": JointId.LEFT_KNEE,
        "right_knee": JointId.RIGHT_KNEE,
        "left_ankle": JointId.LEFT_ANKLE,
        "right_ankle": JointId.RIGHT_ANKLE,
        "spine3": JointId.SPINE_CHEST,
        "neck": JointId.NECK,
        "left_shoulder": JointId.LEFT_SHOULDER,
        "right_shoulder": JointId.RIGHT_SHOULDER,
        "left_elbow": JointId.LEFT_ELBOW,
        "right_elbow": JointId.RIGHT_ELBOW,
        "left_wrist": JointId.LEFT_WRIST,
        "right_wrist": JointId.RIGHT_WRIST,
    },
)

CONVENTIONS = {c.name: c for c in (DEPTH_TRACKER_32, MESH_MODEL_24)}


def get_convention(name: str) -> SkeletonConvention:
    try:
        return CONVENTIONS[name]
    except KeyError:
        raise UnknownConvention(f"unknown skeleton convention {name!r}") from None


@dataclass(frozen=True)
class Frame:
    t: float
    joints: Mapping[str, tuple[float, float, float]]


@dataclass(frozen=True)
class RawRecording:
    patient_id: str
    session: str
    source: str
    action: str
    frames: tuple[Frame, ...]
    canonical: bool = False
    path: str | None = None

    def timestamps(self) -> np.ndarray:
        return np.array([f.t for f in self.frames], dtype=float)


@dataclass(frozen=True)
class CanonicalSeries:
    patient_id: str
    session: str
    source: str
    action: str
    dt: float
    positions: np.ndarray = field(repr=False)  # (frames, len(CANONICAL_JOINTS), 3)
    t0: float = 0.0

    @property
    def n_frames(self) -> int:
        return self.positions.shape[0]

    def joint(self, joint: JointId | str) -> np.ndarray:
        return self.positions[:, JOINT_INDEX[JointId(joint)], :]


# --------------------------------------------------------------------------- parse

def _coordinate(value, line):
    if isinstance(value, bool):
        raise ParseError("coordinate must be a number", line)
    if isinstance(value, str):
        try:
            value = float(value)
        except ValueError:
            raise ParseError(f"coordinate {value!r} is not a number", line) from None
        if math.isfinite(value):
            raise ParseError("coordinate must be a JSON number, not a string", line)
    if not isinstance(value, (int, float)):
        raise ParseError(f"coordinate {value!r} is not a number", line)
    value = float(value)
    if not math.isfinite(value):
        raise NonFiniteCoordinate(f"non-finite coordinate {value!r}", line)
    return value


_FINITE_TYPES = (float, int)  # type() check, so bools are excluded


def _point(value, line):
    if type(value) is list and len(value) == 3:
        x, y, z = value
        if (type(x) in _FINITE_TYPES and type(y) in _FINITE_TYPES and type(z) in _FINITE_TYPES
                and math.isfinite(x + y + z)):
            return (float(x), float(y), float(z))
    if isinstance(value, Mapping):
        try:
            value = [value["x"], value["y"], value["z"]]
        except KeyError as exc:
            raise ParseError(f"point is missing component {exc.args[0]!r}", line) from None
    if not isinstance(value, (list, tuple)) or len(value) != 3:
        raise ParseError("joint position must be [x, y, z]", line)
    return tuple(_coordinate(v, line) for v in value)


def _header(obj, line):
    missing = [k for k in ("patient_id", "session", "source", "action") if k not in obj]
    if missing:
        raise ParseError(f"header is missing {missing}", line)
    if obj["session"] not in SESSIONS:
        raise ParseError(f"session must be one of {SESSIONS}", line)
    if obj["action"] not in ACTIONS:
        raise ParseError(f"action must be one of {ACTIONS}", line)
    return obj


def parse_recording(path, convention: SkeletonConvention | str | None = None) -> RawRecording:
    """Read one skeleton JSONL file.

    ``convention`` defaults to the ``source`` named in the header. Files written
    by :func:`write_recording` with ``canonical`` set are read back with
    canonical joint labels.
    """
    path = Path(path)
    header = None
    frames = []
    with path.open(encoding="utf-8") as fh:
        for lineno, raw in enumerate(fh, start=1):
            if not raw.strip():
                continue
            try:
                obj = json.loads(raw)
            except json.JSONDecodeError as exc:
                raise ParseError(f"malformed JSON ({exc.msg})", lineno) from None
            if not isinstance(obj, dict):
                raise ParseError("expected a JSON object", lineno)
            if header is None:
                header = _header(obj, lineno)
                canonical = bool(header.get("canonical", False))
                if convention is None:
                    convention = header["source"]
                if isinstance(convention, str):
                    convention = get_convention(convention)
                continue
            frames.append(_frame(obj, lineno, convention, canonical))
    if header is None:
        raise ParseError("empty file: no header line", 1)
    return RawRecording(
        patient_id=str(header["patient_id"]),
        session=header["session"],
        source=convention.name,
        action=header["action"],
        frames=tuple(frames),
        canonical=canonical,
        path=str(path),
    )


def _frame(obj, line, convention, canonical):
    if "t" not in obj or "joints" not in obj:
        raise ParseError("frame needs 't' and 'joints'", line)
    t = _coordinate(obj["t"], line)
    if not isinstance(obj["joints"], Mapping):
        raise ParseError("'joints' must be an object", line)
    joints = {}
    if canonical:
        for label, value in obj["joints"].items():
            if label not in JOINT_INDEX:
                raise UnknownJoint(label, "canonical", line)
            joints[label] = _point(value, line)
        required = _CANONICAL_NAMES
    else:
        for label, value in obj["joints"].items():
            try:
                name = convention.resolve(label)
            except UnknownJoint:
                raise UnknownJoint(label, convention.name, line) from None
            joints[name] = _point(value, line)
        required = convention.required_labels()
    for label in required:
        if label not in joints:
            raise MissingJoint(label, line)
    return Frame(t=t, joints=joints)


def write_recording(rec: RawRecording, path) -> None:
    """Serialize ``rec`` in the JSONL format; floats round-trip exactly."""
    header = {
        "patient_id": rec.patient_id,
        "session": rec.session,
        "source": rec.source,
        "action": rec.action,
    }
    if rec.canonical:
        header["canonical"] = True
    with Path(path).open("w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for fr in rec.frames:
            joints = {k: list(v) for k, v in fr.joints.items()}
            fh.write(json.dumps({"t": fr.t, "joints": joints}) + "\n")


# --------------------------------------------------------------------------- mapping

def map_to_canonical(rec: RawRecording, convention: SkeletonConvention | None = None) -> RawRecording:
    if rec.canonical:
        return rec
    convention = convention or get_convention(rec.source)
    convention.check_coverage()
    pairs = [(label, joint.value) for label, joint in convention.mapping.items()]
    frames = []
    for fr in rec.frames:
        src = fr.joints
        try:
            joints = {name: src[label] for label, name in pairs}
        except KeyError as exc:
            raise MissingJoint(exc.args[0]) from None
        frames.append(Frame(fr.t, joints))
    return RawRecording(rec.patient_id, rec.session, rec.source, rec.action,
                        tuple(frames), canonical=True, path=rec.path)


# --------------------------------------------------------------------------- validation

@dataclass(frozen=True)
class Finding:
    kind: str
    index: int | None
    message: str
    level: str = "error"

    def __str__(self):
        where = f" at frame {self.index}" if self.index is not None else ""
        return f"{self.kind}{where}: {self.message}"


def validate_series(rec: RawRecording, gap_tolerance: float = DEFAULT_GAP_TOLERANCE) -> list[Finding]:
    """Check ordering, gaps and per-frame completeness. Never raises."""
    findings = []
    if len(rec.frames) < 2:
        findings.append(Finding("TooFewFrames", None, f"{len(rec.frames)} frame(s)"))
    required = (_CANONICAL_NAMES if rec.canonical
                else get_convention(rec.source).required_labels())
    prev = None
    for i, fr in enumerate(rec.frames):
        if not math.isfinite(fr.t):
            findings.append(Finding("NonFiniteTimestamp", i, repr(fr.t)))
        elif prev is not None:
            if fr.t <= prev:
                findings.append(Finding("NonMonotonicTimestamp", i, f"{fr.t} after {prev}"))
            elif fr.t - prev > gap_tolerance:
                findings.append(Finding(
                    "GapExceedsTolerance", i,
                    f"gap {fr.t - prev:.3f} s > {gap_tolerance} s"))
        prev = fr.t
        for label in required:
            if label not in fr.joints:
                findings.append(Finding("MissingJoint", i, label))
    coords = np.array([xyz for fr in rec.frames for xyz in fr.joints.values()], dtype=float)
    if coords.size and not np.isfinite(coords).all():
        for i, fr in enumerate(rec.frames):
            for label, xyz in fr.joints.items():
                if not all(math.isfinite(c) for c in xyz):
                    findings.append(Finding("NonFiniteCoordinate", i, label))
    return findings


# --------------------------------------------------------------------------- resampling

def _position_array(rec: RawRecording) -> np.ndarray:
    if not rec.canonical:
        rec = map_to_canonical(rec)
    return np.array([[fr.joints[name] for name in _CANONICAL_NAMES] for fr in rec.frames],
                    dtype=float)


def resample_uniform(rec: RawRecording, dt: float = DEFAULT_DT) -> CanonicalSeries:
    """Linearly interpolate every coordinate onto ``t0, t0 + dt, ...``."""
    if not dt > 0:
        raise ValueError(f"dt must be positive, got {dt}")
    if len(rec.frames) < 2:
        raise TooFewFrames(f"{len(rec.frames)} frame(s); need at least 2")
    t = rec.timestamps()
    return resample_positions(rec.patient_id, rec.session, rec.source, rec.action,
                              t, _position_array(rec), dt)


def resample_positions(patient_id: str, session: str, source: str, action: str,
                       t: np.ndarray, positions: np.ndarray, dt: float = DEFAULT_DT) -> CanonicalSeries:
    """Interpolate canonical ``(n, joints, 3)`` positions sampled at ``t`` onto a uniform grid."""
    # tolerance absorbs float error in the span, e.g. 269.99999999997 frames
    n = int(math.floor((t[-1] - t[0]) / dt + 1e-9)) + 1
    grid = t[0] + dt * np.arange(n)
    flat = positions.reshape(len(t), -1)
    out = np.empty((n, flat.shape[1]))
    for c in range(flat.shape[1]):
        out[:, c] = np.interp(grid, t, flat[:, c])
    return CanonicalSeries(patient_id, session, source, action, dt=float(dt),
                           positions=out.reshape(n, len(CANONICAL_JOINTS), 3), t0=float(t[0]))


def series_to_recording(series: CanonicalSeries) -> RawRecording:
    """Canonical-labelled recording of a resampled series (for ``ingest`` output)."""
    frames = []
    for i in range(series.n_frames):
        t = series.t0 + i * series.dt
        joints = {j.value: tuple(float(c) for c in series.positions[i, k])
                  for k, j in enumerate(CANONICAL_JOINTS)}
        frames.append(Frame(t, joints))
    return RawRecording(series.patient_id, series.session, series.source, series.action,
                        tuple(frames), canonical=True)


def load_series(path, dt: float = DEFAULT_DT, gap_tolerance: float = DEFAULT_GAP_TOLERANCE,
                convention=None) -> CanonicalSeries:
    """parse -> map -> validate -> resample, raising on error-level findings."""
    return prepare_series(parse_recording(path, convention), dt, gap_tolerance, str(path))


def prepare_series(rec: RawRecording, dt: float = DEFAULT_DT,
                   gap_tolerance: float = DEFAULT_GAP_TOLERANCE, context: str = "") -> CanonicalSeries:
    """map -> validate -> resample an already parsed recording."""
    rec = map_to_canonical(rec)
    errors = [f for f in validate_series(rec, gap_tolerance) if f.level == "error"]
    if errors:
        raise InvalidSeries(errors, context=context or rec.path or "")
    return resample_uniform(rec, dt)

