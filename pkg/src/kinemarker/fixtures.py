"""Synthetic pre/post cohorts with planted effects.

Each patient gets a seeded motion programme per action (anthropometrics,
squat depth, tempo, arm motion) that is replayed in both sessions. Joint
positions are built by forward kinematics so the knee, elbow and abduction
angles come out exactly as prescribed.

The planted effect is a knee tremor in the pre session. It rides only on the
descent/ascent ramps, is odd-symmetric about each ramp centre and small
enough to keep the ramp monotone. With the window fully inside the holds at
either end, the windowed mean/max/min series therefore keep the same floor
and the same area, so the impulse descriptors stay put while smoothness
drops after "treatment".
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import PipelineConfig, write_config
from .ingest import (
    ACTIONS,
    CANONICAL_JOINTS,
    DEPTH_TRACKER_32,
    MESH_MODEL_24,
    CanonicalSeries,
    Frame,
    RawRecording,
    get_convention,
    resample_positions,
    write_recording,
)
from .pipeline import LoadedInput

FPS = 30
TREMOR_PERIOD = 5  # frames; divides the default 15-frame window
KNEE_BIOMARKERS = tuple(f"{side}_knee_flexion_{s}" for side in ("left", "right")
                        for s in ("mean", "max", "min"))


@dataclass(frozen=True)
class Anthropometrics:
    thigh: float
    shank: float
    upper_arm: float
    forearm: float
    hip_width: float
    shoulder_width: float
    trunk: float


@dataclass
class MotionProgramme:
    """Per-frame target angles (degrees) for one action of one patient."""

    action: str
    knee: np.ndarray  # (frames, 2) left, right
    elbow: np.ndarray  # (frames, 2)
    abduction: np.ndarray  # (frames, 2)
    lean: np.ndarray  # (frames,) trunk pitch, radians
    ramps: list[tuple[int, int]] = field(default_factory=list)


@dataclass
class CohortManifest:
    seed: int
    n_patients: int
    sources: tuple[str, ...]
    tremor: bool
    planted: list[tuple[str, str, str]]  # (action, biomarker, descriptor)
    files: list[str]

    def to_dict(self):
        return {"seed": self.seed, "n_patients": self.n_patients, "sources": list(self.sources),
                "tremor": self.tremor, "planted": [list(p) for p in self.planted],
                "files": self.files}


# --------------------------------------------------------------------------- motion

def _ramp(start: float, stop: float, n: int) -> np.ndarray:
    u = np.arange(n) / (n - 1)
    return start + (stop - start) * (1.0 - np.cos(np.pi * u)) / 2.0


def _smooth_noise(rng, n: int, amplitude: float, dt: float) -> np.ndarray:
    t = np.arange(n) * dt
    out = np.zeros(n)
    for _ in range(3):
        f = rng.uniform(0.1, 0.6)
        out += rng.uniform(0.3, 1.0) * np.sin(2 * np.pi * f * t + rng.uniform(0, 2 * np.pi))
    return amplitude * out / 3.0


def _knee_profile(rng, action: str, repeats: int):
    """Hold / ramp / hold / ramp pattern; returns (left, right, ramps)."""
    if action == "squat":
        high, low = rng.uniform(170, 177), rng.uniform(80, 105)
    else:
        high, low = rng.uniform(168, 176), rng.uniform(88, 100)
    asym = rng.uniform(-6, 6)
    ramp_n = int(rng.integers(26, 36))
    hold_hi = int(rng.integers(18, 26))
    hold_lo = int(rng.integers(18, 26))
    # squats start standing, sit-to-stand starts seated
    first, second = (high, low) if action == "squat" else (low, high)
    hold_first, hold_second = (hold_hi, hold_lo) if action == "squat" else (hold_lo, hold_hi)
    parts_l, parts_r, ramps = [], [], []
    pos = 0

    def add(arr_l, arr_r, ramp=False):
        nonlocal pos
        if ramp:
            ramps.append((pos, pos + len(arr_l) - 1))
        parts_l.append(arr_l)
        parts_r.append(arr_r)
        pos += len(arr_l)

    low_r = low + asym
    first_r, second_r = (high, low_r) if action == "squat" else (low_r, high)
    add(np.full(hold_first, first), np.full(hold_first, first_r))
    for _ in range(repeats):
        add(_ramp(first, second, ramp_n)[1:-1], _ramp(first_r, second_r, ramp_n)[1:-1], ramp=True)
        add(np.full(hold_second, second), np.full(hold_second, second_r))
        add(_ramp(second, first, ramp_n)[1:-1], _ramp(second_r, first_r, ramp_n)[1:-1], ramp=True)
        add(np.full(hold_first, first), np.full(hold_first, first_r))
    return np.concatenate(parts_l), np.concatenate(parts_r), ramps


def motion_programme(rng, action: str, repeats: int = 3) -> MotionProgramme:
    left, right, ramps = _knee_profile(rng, action, repeats)
    n = len(left)
    dt = 1.0 / FPS
    knee = np.column_stack([left, right])
    # 0 at standing, 1 at full flexion
    depth = (knee.max() - knee.mean(axis=1)) / max(np.ptp(knee.mean(axis=1)), 1e-9)
    if action == "squat":
        elbow = np.column_stack([rng.uniform(150, 170) + _smooth_noise(rng, n, 6.0, dt)
                                 for _ in range(2)])
        abduction = np.column_stack([rng.uniform(12, 25) + _smooth_noise(rng, n, 4.0, dt)
                                     for _ in range(2)])
        lean = np.radians(5 + 25 * depth)
    else:
        # arms swing forward/out to help the rise
        swing = rng.uniform(20, 40)
        elbow = np.column_stack([rng.uniform(130, 150) + swing * (1 - depth)
                                 + _smooth_noise(rng, n, 5.0, dt) for _ in range(2)])
        abduction = np.column_stack([rng.uniform(12, 20) + 0.6 * swing * (1 - depth)
                                     + _smooth_noise(rng, n, 4.0, dt) for _ in range(2)])
        lean = np.radians(10 + 30 * depth)
    return MotionProgramme(action, knee, elbow, abduction, lean, ramps)


def tremor(programme: MotionProgramme, amplitude: float, period: int = TREMOR_PERIOD) -> np.ndarray:
    """Zero-area, odd-symmetric oscillation confined to the ramps, (frames,)."""
    out = np.zeros(len(programme.knee))
    for s, e in programme.ramps:
        i = np.arange(s, e + 1)
        c = 0.5 * (s + e)
        env = np.sin(np.pi * (i - s) / (e - s)) ** 2
        out[s:e + 1] = amplitude * env * np.sin(2 * np.pi * (i - c) / period)
    return out


def _check_monotone_ramps(knee: np.ndarray, ramps):
    for s, e in ramps:
        for col in range(knee.shape[1]):
            d = np.diff(knee[s - 1:e + 2, col])
            if not (np.all(d > 0) or np.all(d < 0)):
                raise ValueError("tremor amplitude breaks ramp monotonicity")


# --------------------------------------------------------------------------- skeleton

def _unit(v):
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def _perp(v, ref):
    """Unit component of ``ref`` orthogonal to the unit rows of ``v``."""
    w = ref - np.sum(ref * v, axis=-1, keepdims=True) * v
    return _unit(w)


def _vec(x, y, z, n):
    return np.column_stack([np.broadcast_to(np.asarray(c, dtype=float), (n,)) for c in (x, y, z)])


def pose(body: Anthropometrics, knee_deg, elbow_deg, abd_deg, lean, origin=np.zeros(3)) -> dict:
    """Canonical joint positions (y up, facing +z, left = +x), vectorized over frames.

    Angle arguments are ``(frames, 2)`` arrays (left, right) in degrees and
    ``lean`` is ``(frames,)`` in radians. Returns ``{JointId value: (frames, 3)}``.
    """
    knee_deg, elbow_deg, abd_deg = (np.atleast_2d(a) for a in (knee_deg, elbow_deg, abd_deg))
    lean = np.atleast_1d(lean)
    n = len(lean)
    j = {}
    for k, (side, sign) in enumerate((("LEFT", 1.0), ("RIGHT", -1.0))):
        phi = np.radians((180.0 - knee_deg[:, k]) / 2.0)
        ankle = origin + _vec(sign * body.hip_width / 2, 0.08, 0.0, n)
        knee = ankle + body.shank * _vec(0.0, np.cos(phi), np.sin(phi), n)
        hip = knee + body.thigh * _vec(0.0, np.cos(phi), -np.sin(phi), n)
        j[f"{side}_ANKLE"], j[f"{side}_KNEE"], j[f"{side}_HIP"] = ankle, knee, hip
    pelvis = (j["LEFT_HIP"] + j["RIGHT_HIP"]) / 2
    up = _vec(0.0, np.cos(lean), np.sin(lean), n)
    j["PELVIS"] = pelvis
    j["SPINE_CHEST"] = pelvis + body.trunk * up
    j["NECK"] = pelvis + 1.35 * body.trunk * up
    for k, (side, sign) in enumerate((("LEFT", 1.0), ("RIGHT", -1.0))):
        shoulder = j["SPINE_CHEST"] + np.array([sign * body.shoulder_width / 2, 0.0, 0.0]) + 0.08 * up
        u = _unit(j[f"{side}_HIP"] - shoulder)
        w = _perp(u, np.array([sign, 0.0, 0.0]))
        b = np.radians(abd_deg[:, k])[:, None]
        elbow = shoulder + body.upper_arm * (np.cos(b) * u + np.sin(b) * w)
        e = _unit(shoulder - elbow)
        q = _perp(e, np.array([0.0, 0.0, 1.0]))
        g = np.radians(elbow_deg[:, k])[:, None]
        wrist = elbow + body.forearm * (np.cos(g) * e + np.sin(g) * q)
        j[f"{side}_SHOULDER"], j[f"{side}_ELBOW"], j[f"{side}_WRIST"] = shoulder, elbow, wrist
    return j


def _depth_tracker_labels(j: dict) -> dict:
    up = _unit(j["NECK"] - j["PELVIS"])
    fwd = np.array([0.0, 0.0, 1.0])
    out = {label: j[joint.value] for label, joint in DEPTH_TRACKER_32.mapping.items()}
    out["SPINE_NAVAL"] = j["PELVIS"] + 0.35 * (j["SPINE_CHEST"] - j["PELVIS"])
    head = j["NECK"] + 0.15 * up
    out["HEAD"] = head
    out["NOSE"] = head + 0.1 * fwd
    for side, sign in (("LEFT", 1.0), ("RIGHT", -1.0)):
        wrist, elbow = j[f"{side}_WRIST"], j[f"{side}_ELBOW"]
        hand_dir = _unit(wrist - elbow)
        out[f"CLAVICLE_{side}"] = j["SPINE_CHEST"] + np.array([sign * 0.05, 0.06, 0.0])
        out[f"HAND_{side}"] = wrist + 0.08 * hand_dir
        out[f"HANDTIP_{side}"] = wrist + 0.15 * hand_dir
        out[f"THUMB_{side}"] = wrist + 0.05 * hand_dir + 0.03 * fwd
        out[f"FOOT_{side}"] = j[f"{side}_ANKLE"] + np.array([0.0, -0.05, 0.15])
        out[f"EYE_{side}"] = head + np.array([sign * 0.03, 0.03, 0.08])
        out[f"EAR_{side}"] = head + np.array([sign * 0.07, 0.0, 0.0])
    return out


def _mesh_model_labels(j: dict, hip_shift: np.ndarray) -> dict:
    j = dict(j)
    # mesh-model hip centres sit lower and more medial than the tracker's
    j["LEFT_HIP"] = j["LEFT_HIP"] + hip_shift * np.array([-1.0, 1.0, 1.0])
    j["RIGHT_HIP"] = j["RIGHT_HIP"] + hip_shift
    up = _unit(j["NECK"] - j["PELVIS"])
    out = {label: j[joint.value] for label, joint in MESH_MODEL_24.mapping.items()}
    spine = j["SPINE_CHEST"] - j["PELVIS"]
    out["spine1"] = j["PELVIS"] + 0.3 * spine
    out["spine2"] = j["PELVIS"] + 0.6 * spine
    out["head"] = j["NECK"] + 0.15 * up
    for side, sign in (("left", 1.0), ("right", -1.0)):
        s = side.upper()
        out[f"{side}_foot"] = j[f"{s}_ANKLE"] + np.array([0.0, -0.05, 0.15])
        out[f"{side}_collar"] = j["SPINE_CHEST"] + np.array([sign * 0.06, 0.05, 0.0])
        out[f"{side}_hand"] = j[f"{s}_WRIST"] + 0.08 * _unit(j[f"{s}_WRIST"] - j[f"{s}_ELBOW"])
    return out


def programme_pose(body, prog: MotionProgramme, knee_offset=None, origin=np.zeros(3)) -> dict:
    knee = prog.knee if knee_offset is None else prog.knee + knee_offset[:, None]
    return pose(body, knee, prog.elbow, prog.abduction, prog.lean, origin)


def _labelled(joints: dict, source: str, hip_shift, noise: float, rng) -> dict:
    if source == DEPTH_TRACKER_32.name:
        labelled = _depth_tracker_labels(joints)
    elif source == MESH_MODEL_24.name:
        labelled = _mesh_model_labels(joints, hip_shift)
    elif source == "canonical":
        labelled = {jid.value: joints[jid.value] for jid in CANONICAL_JOINTS}
    else:
        raise ValueError(f"unknown source {source!r}")
    if noise:
        labelled = {k: v + rng.normal(0.0, noise, v.shape) for k, v in labelled.items()}
    return labelled


def to_recording(joints: dict, patient: str, session: str, action: str, source: str,
                 hip_shift=np.zeros(3), noise: float = 0.0, rng=None, dt: float = 1.0 / FPS
                 ) -> RawRecording:
    """Label a :func:`pose` result under ``source`` (or ``"canonical"``)."""
    labelled = _labelled(joints, source, hip_shift, noise, rng)
    rows = {k: list(map(tuple, v.tolist())) for k, v in labelled.items()}
    n = len(next(iter(rows.values())))
    frames = tuple(Frame(i * dt, {k: rows[k][i] for k in rows}) for i in range(n))
    canonical = source == "canonical"
    return RawRecording(patient, session, "mesh_model_24" if canonical else source, action,
                        frames, canonical=canonical)


def to_series(joints: dict, patient: str, session: str, action: str, source: str,
              hip_shift=np.zeros(3), noise: float = 0.0, rng=None, dt: float = 1.0 / FPS,
              resample_dt: float = 1.0 / FPS) -> CanonicalSeries:
    """Array shortcut for ``prepare_series(to_recording(...))``; same values, no frame dicts."""
    labelled = _labelled(joints, source, hip_shift, noise, rng)
    if source == "canonical":
        source, label_of = MESH_MODEL_24.name, {j.value: j.value for j in CANONICAL_JOINTS}
    else:
        label_of = {j.value: label for label, j in get_convention(source).mapping.items()}
    pos = np.stack([labelled[label_of[j.value]] for j in CANONICAL_JOINTS], axis=1)
    t = np.arange(len(pos)) * dt
    return resample_positions(patient, session, source, action, t, pos, resample_dt)


# --------------------------------------------------------------------------- cohort

def cohort_recordings(seed: int = 0, n_patients: int = 20, sources=("mesh_model_24",),
                      tremor_amplitude=(1.0, 2.0), mesh_noise: float = 0.0,
                      mesh_hip_shift: bool | None = None, _build=to_recording):
    """Build a cohort in memory.

    ``tremor_amplitude`` is a (low, high) range in degrees for the pre-session
    knee tremor, or ``None`` for a cohort whose pre and post sessions are
    identical. ``mesh_hip_shift`` (default: on when both sources are built)
    displaces the mesh-model hip centres to give the two sources a systematic
    knee-angle gap.

    Returns ``(recordings, planted)`` where ``recordings`` is a list of
    ``(file name, RawRecording)`` and ``planted`` lists the
    ``(action, biomarker, descriptor)`` triples carrying a real effect.
    """
    if mesh_hip_shift is None:
        mesh_hip_shift = len(sources) > 1
    rng = np.random.default_rng(seed)
    out = []
    for p in range(n_patients):
        patient = f"P{p + 1:03d}"
        prng = np.random.default_rng(rng.integers(2 ** 63))
        body = Anthropometrics(
            thigh=prng.uniform(0.38, 0.48), shank=prng.uniform(0.36, 0.45),
            upper_arm=prng.uniform(0.27, 0.33), forearm=prng.uniform(0.24, 0.29),
            hip_width=prng.uniform(0.17, 0.24), shoulder_width=prng.uniform(0.32, 0.42),
            trunk=prng.uniform(0.42, 0.52))
        hip_shift = np.array([prng.uniform(0.01, 0.04), -prng.uniform(0.02, 0.06),
                              prng.uniform(0.0, 0.03)])
        if not mesh_hip_shift:
            hip_shift = np.zeros(3)
        for action in ACTIONS:
            prog = motion_programme(prng, action)
            amp = None if tremor_amplitude is None else prng.uniform(*tremor_amplitude)
            for session in ("pre", "post"):
                offset = None
                if session == "pre" and amp is not None:
                    offset = tremor(prog, amp)
                    _check_monotone_ramps(prog.knee + offset[:, None], prog.ramps)
                joints = programme_pose(body, prog, offset)
                for source in sources:
                    nrng = np.random.default_rng(prng.integers(2 ** 63)) if mesh_noise else None
                    noise = mesh_noise if source == MESH_MODEL_24.name else 0.0
                    rec = _build(joints, patient, session, action, source,
                                 hip_shift=hip_shift, noise=noise, rng=nrng)
                    out.append((f"{patient}_{session}_{action}_{source}.jsonl", rec))
    planted = []
    if tremor_amplitude is not None:
        planted = [(a, b, "smoothness") for a in ACTIONS for b in KNEE_BIOMARKERS]
    return out, planted


def cohort_inputs(config: PipelineConfig, **kwargs):
    """In-memory cohort resampled per ``config``, ready for ``pipeline.analyse``.

    Returns ``(loaded inputs, planted)``; keyword arguments go to
    :func:`cohort_recordings`.
    """
    def build(*args, **kw):
        return to_series(*args, **kw, resample_dt=config.dt)

    series, planted = cohort_recordings(**kwargs, _build=build)
    loaded = [LoadedInput(Path("recordings") / name, None, s) for name, s in series]
    return loaded, planted


def generate_cohort(out_dir, seed: int = 0, n_patients: int = 20,
                    sources=("mesh_model_24",), tremor_amplitude=(1.0, 2.0),
                    mesh_noise: float = 0.0, mesh_hip_shift: bool | None = None,
                    config_overrides: dict | None = None) -> CohortManifest:
    """Write a cohort of JSONL recordings plus ``config.json`` and ``manifest.json``.

    Arguments as for :func:`cohort_recordings`; ``config_overrides`` are
    :class:`PipelineConfig` fields for the written config.
    """
    out = Path(out_dir)
    rec_dir = out / "recordings"
    rec_dir.mkdir(parents=True, exist_ok=True)
    recordings, planted = cohort_recordings(seed, n_patients, sources, tremor_amplitude,
                                            mesh_noise, mesh_hip_shift)
    files = []
    for name, rec in recordings:
        write_recording(rec, rec_dir / name)
        files.append(f"recordings/{name}")
    config = PipelineConfig(input_dir="recordings", output_dir="report",
                            **dict(config_overrides or {}))
    write_config(config, out / "config.json")
    manifest = CohortManifest(seed, n_patients, tuple(sources), tremor_amplitude is not None,
                              planted, sorted(files))
    (out / "manifest.json").write_text(json.dumps(manifest.to_dict(), indent=2) + "\n",
                                       encoding="utf-8")
    return manifest


__all__ = ["cohort_inputs", "cohort_recordings", "generate_cohort", "motion_programme", "pose",
           "tremor", "KNEE_BIOMARKERS"]
