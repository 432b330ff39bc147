import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import depth_frame_joints, write_jsonl
from kinemarker.errors import (
    InvalidSeries,
    MissingJoint,
    NonFiniteCoordinate,
    ParseError,
    TooFewFrames,
    UnknownConvention,
    UnknownJoint,
    UnmappedJoint,
)
from kinemarker.ingest import (
    CANONICAL_JOINTS,
    DEPTH_TRACKER_32,
    MESH_MODEL_24,
    Frame,
    JointId,
    RawRecording,
    SkeletonConvention,
    get_convention,
    load_series,
    map_to_canonical,
    parse_recording,
    resample_uniform,
    validate_series,
    write_recording,
)


def _depth_recording(times, joints=None):
    joints = joints or depth_frame_joints()
    frames = tuple(Frame(t, {k: tuple(v) for k, v in joints.items()}) for t in times)
    return RawRecording("P1", "pre", "depth_tracker_32", "squat", frames)


# --------------------------------------------------------------------------- parse

def test_parse_single_full_frame(tmp_path, depth_header):
    path = write_jsonl(tmp_path / "a.jsonl", depth_header, [{"t": 0.0, "joints": depth_frame_joints()}])
    rec = parse_recording(path, DEPTH_TRACKER_32)
    assert len(rec.frames) == 1
    assert len(rec.frames[0].joints) == 32
    assert rec.patient_id == "P1" and rec.session == "pre" and rec.action == "squat"


def test_parse_nan_string_is_non_finite(tmp_path, depth_header):
    joints = depth_frame_joints()
    joints["KNEE_LEFT"] = {"x": "NaN", "y": 1.0, "z": 0.0}
    path = write_jsonl(tmp_path / "a.jsonl", depth_header, [{"t": 0.0, "joints": joints}])
    with pytest.raises(NonFiniteCoordinate) as exc:
        parse_recording(path)
    assert exc.value.line == 2


def test_parse_nan_literal_is_non_finite(tmp_path, depth_header):
    joints = depth_frame_joints()
    line = json.dumps({"t": 0.0, "joints": joints}).replace("[0.0, 1.0, 0.5]", "[NaN, 1.0, 0.5]", 1)
    path = write_jsonl(tmp_path / "a.jsonl", depth_header, [line])
    with pytest.raises(NonFiniteCoordinate):
        parse_recording(path)


def test_parse_missing_joint(tmp_path, depth_header):
    joints = depth_frame_joints()
    del joints["KNEE_LEFT"]
    path = write_jsonl(tmp_path / "a.jsonl", depth_header, [{"t": 0.0, "joints": joints}])
    with pytest.raises(MissingJoint) as exc:
        parse_recording(path)
    assert exc.value.joint == "KNEE_LEFT"


def test_parse_unknown_label(tmp_path, depth_header):
    joints = depth_frame_joints()
    joints["TAIL"] = [0, 0, 0]
    path = write_jsonl(tmp_path / "a.jsonl", depth_header, [{"t": 0.0, "joints": joints}])
    with pytest.raises(UnknownJoint):
        parse_recording(path)


def test_parse_malformed_line_reports_line_number(tmp_path, depth_header):
    good = json.dumps({"t": 0.0, "joints": depth_frame_joints()})
    path = write_jsonl(tmp_path / "a.jsonl", depth_header, [good, "{not json"])
    with pytest.raises(ParseError) as exc:
        parse_recording(path)
    assert exc.value.line == 3
    assert "line 3" in str(exc.value)


@pytest.mark.parametrize("bad", [[0, 1], "1.0", True, [0, 1, "x"]])
def test_parse_rejects_bad_points(tmp_path, depth_header, bad):
    joints = depth_frame_joints()
    joints["PELVIS"] = bad
    path = write_jsonl(tmp_path / "a.jsonl", depth_header, [{"t": 0.0, "joints": joints}])
    with pytest.raises(ParseError):
        parse_recording(path)


def test_parse_ignores_rotations(tmp_path, depth_header):
    frame = {"t": 0.0, "joints": depth_frame_joints(), "rotations": {"pelvis": [1, 0, 0, 0]}}
    rec = parse_recording(write_jsonl(tmp_path / "a.jsonl", depth_header, [frame]))
    assert len(rec.frames) == 1


def test_parse_header_errors(tmp_path, depth_header):
    empty = tmp_path / "e.jsonl"
    empty.write_text("")
    with pytest.raises(ParseError):
        parse_recording(empty)
    bad = dict(depth_header, session="during")
    with pytest.raises(ParseError):
        parse_recording(write_jsonl(tmp_path / "b.jsonl", bad, []))
    with pytest.raises(UnknownConvention):
        parse_recording(write_jsonl(tmp_path / "c.jsonl", dict(depth_header, source="mocap"), []))


def test_mesh_slot_index_alias(tmp_path):
    header = {"patient_id": "P1", "session": "post", "source": "mesh_model_24", "action": "squat"}
    joints = {label: [float(i), 0.0, 0.0] for i, label in enumerate(MESH_MODEL_24.labels)}
    joints["4"] = joints.pop("left_knee")
    rec = map_to_canonical(parse_recording(write_jsonl(tmp_path / "m.jsonl", header,
                                                       [{"t": 0, "joints": joints}])))
    assert rec.frames[0].joints["LEFT_KNEE"] == (4.0, 0.0, 0.0)


# --------------------------------------------------------------------------- round trip

finite = st.floats(allow_nan=False, allow_infinity=False, width=64)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.tuples(finite, finite, finite), min_size=1, max_size=5))
def test_write_parse_round_trip_is_bit_exact(tmp_path_factory, points):
    labels = list(DEPTH_TRACKER_32.labels)
    frames = []
    for i, p in enumerate(points):
        joints = {lab: p for lab in labels}
        frames.append(Frame(i / 30, joints))
    rec = RawRecording("P9", "post", "depth_tracker_32", "sit_to_stand", tuple(frames))
    path = tmp_path_factory.mktemp("rt") / "r.jsonl"
    write_recording(rec, path)
    back = parse_recording(path)
    for a, b in zip(rec.frames, back.frames):
        assert a.t == b.t
        for lab in labels:
            assert [x.hex() for x in a.joints[lab]] == [float(x).hex() for x in b.joints[lab]]


# --------------------------------------------------------------------------- mapping

def test_map_depth_labels():
    rec = map_to_canonical(_depth_recording([0.0]))
    assert set(rec.frames[0].joints) == {j.value for j in CANONICAL_JOINTS}
    assert rec.frames[0].joints["LEFT_KNEE"] == tuple(depth_frame_joints()["KNEE_LEFT"])


def test_map_is_idempotent():
    once = map_to_canonical(_depth_recording([0.0, 1 / 30]))
    assert map_to_canonical(once) is once
    assert map_to_canonical(once).frames == once.frames


def test_convention_missing_shoulder_mapping():
    mapping = {k: v for k, v in DEPTH_TRACKER_32.mapping.items() if v is not JointId.LEFT_SHOULDER}
    conv = SkeletonConvention("partial", DEPTH_TRACKER_32.labels, mapping)
    with pytest.raises(UnmappedJoint):
        map_to_canonical(_depth_recording([0.0]), conv)


def test_convention_must_be_injective():
    mapping = dict(DEPTH_TRACKER_32.mapping, SPINE_NAVAL=JointId.PELVIS)
    with pytest.raises(ValueError):
        SkeletonConvention("bad", DEPTH_TRACKER_32.labels, mapping)


def test_builtin_conventions_cover_canonical_set():
    for name in ("depth_tracker_32", "mesh_model_24"):
        conv = get_convention(name)
        conv.check_coverage()
        assert len(conv.mapping) == len(CANONICAL_JOINTS)
    assert len(DEPTH_TRACKER_32.labels) == 32 and len(MESH_MODEL_24.labels) == 24
    assert MESH_MODEL_24.labels[4] == "left_knee"


# --------------------------------------------------------------------------- validation

def test_uniform_recording_has_no_findings():
    assert validate_series(_depth_recording([i / 30 for i in range(60)])) == []


def test_non_monotonic_timestamp():
    findings = validate_series(_depth_recording([0.0, 0.033, 0.033]))
    assert [(f.kind, f.index) for f in findings] == [("NonMonotonicTimestamp", 2)]


def test_gap_exceeds_tolerance():
    findings = validate_series(_depth_recording([0.0, 0.5]))
    assert [f.kind for f in findings] == ["GapExceedsTolerance"]
    assert validate_series(_depth_recording([0.0, 0.5]), gap_tolerance=0.6) == []


def test_validation_collects_missing_and_non_finite():
    joints = depth_frame_joints()
    frames = (Frame(0.0, {k: tuple(v) for k, v in joints.items()}),
              Frame(0.1, {k: (math.nan, 0.0, 0.0) if k == "NECK" else tuple(v)
                          for k, v in joints.items() if k != "PELVIS"}))
    rec = RawRecording("P1", "pre", "depth_tracker_32", "squat", frames)
    kinds = {(f.kind, f.index) for f in validate_series(rec)}
    assert kinds == {("MissingJoint", 1), ("NonFiniteCoordinate", 1)}


def test_too_few_frames_finding():
    assert [f.kind for f in validate_series(_depth_recording([0.0]))] == ["TooFewFrames"]


# --------------------------------------------------------------------------- resampling

def test_resample_two_frames_hand_interpolation():
    joints0 = {k: (0.0, 0.0, 0.0) for k in DEPTH_TRACKER_32.labels}
    joints1 = {k: (2.0, 0.0, 0.0) for k in DEPTH_TRACKER_32.labels}
    rec = RawRecording("P1", "pre", "depth_tracker_32", "squat",
                       (Frame(0.0, joints0), Frame(1.0, joints1)))
    s = resample_uniform(rec, 0.5)
    np.testing.assert_array_equal(s.joint(JointId.LEFT_KNEE)[:, 0], [0.0, 1.0, 2.0])
    assert s.n_frames == 3 and s.dt == 0.5


def test_resample_single_frame_and_bad_dt():
    with pytest.raises(TooFewFrames):
        resample_uniform(_depth_recording([0.0]), 1 / 30)
    with pytest.raises(ValueError):
        resample_uniform(_depth_recording([0.0, 0.1]), 0.0)


def test_resample_uniform_is_identity_at_nodes():
    rng = np.random.default_rng(0)
    times = [i / 30 for i in range(40)]
    frames = tuple(Frame(t, {k: tuple(rng.normal(size=3)) for k in DEPTH_TRACKER_32.labels})
                   for t in times)
    rec = RawRecording("P1", "pre", "depth_tracker_32", "squat", frames)
    s = resample_uniform(rec, 1 / 30)
    assert s.n_frames == 40
    expected = np.array([fr.joints["KNEE_RIGHT"] for fr in frames])
    np.testing.assert_allclose(s.joint("RIGHT_KNEE"), expected, rtol=0, atol=1e-12)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(0.005, 0.15), min_size=2, max_size=30),
       st.floats(-3, 3), st.floats(-3, 3), st.sampled_from([0.01, 1 / 30, 0.05]))
def test_resample_is_exact_on_affine_motion(steps, slope, intercept, dt):
    times = np.concatenate([[0.0], np.cumsum(steps)])
    frames = tuple(Frame(float(t), {k: (slope * t + intercept, 0.0, 1.0)
                                    for k in DEPTH_TRACKER_32.labels}) for t in times)
    rec = RawRecording("P1", "pre", "depth_tracker_32", "squat", frames)
    s = resample_uniform(rec, dt)
    assert s.n_frames == math.floor((times[-1] - times[0]) / dt + 1e-9) + 1
    grid = dt * np.arange(s.n_frames)
    np.testing.assert_allclose(s.joint("PELVIS")[:, 0], slope * grid + intercept, atol=1e-12)


def test_load_series_rejects_invalid(tmp_path, depth_header):
    frames = [{"t": t, "joints": depth_frame_joints()} for t in (0.0, 0.1, 0.1)]
    path = write_jsonl(tmp_path / "a.jsonl", depth_header, frames)
    with pytest.raises(InvalidSeries) as exc:
        load_series(path)
    assert exc.value.findings[0].kind == "NonMonotonicTimestamp"


def test_load_series_round_trip(tmp_path, depth_header):
    frames = [{"t": i / 30, "joints": depth_frame_joints(offset=i * 0.01)} for i in range(10)]
    s = load_series(write_jsonl(tmp_path / "a.jsonl", depth_header, frames))
    assert s.positions.shape == (10, 15, 3)
    np.testing.assert_allclose(s.joint("LEFT_KNEE")[:, 0],
                               [depth_frame_joints(i * 0.01)["KNEE_LEFT"][0] for i in range(10)],
                               atol=1e-12)
