import csv

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import canonical_series, standing_positions
from kinemarker.errors import DegenerateTriangle, InconsistentMetadata, WindowTooLong
from kinemarker.ingest import JOINT_INDEX, JointId
from kinemarker.kinematics import (
    DEFAULT_ANGLES,
    AngleDefinition,
    FeatureMatrix,
    WindowSpec,
    assemble_feature_matrix,
    compute_angle_series,
    feature_columns,
    joint_angle,
    joint_angles,
    mediolateral_axis,
    window_count,
    window_statistics,
)

KNEE = AngleDefinition("left_knee_flexion", "LEFT_KNEE", "LEFT_HIP", "LEFT_ANKLE")


def dot_oracle(h, k, a):
    m, n = np.subtract(h, k), np.subtract(a, k)
    c = np.dot(m, n) / (np.linalg.norm(m) * np.linalg.norm(n))
    return np.degrees(np.arccos(np.clip(c, -1, 1)))


def random_rotation(rng):
    q, r = np.linalg.qr(rng.normal(size=(3, 3)))
    q = q * np.sign(np.diag(r))
    if np.linalg.det(q) < 0:
        q[:, 0] = -q[:, 0]
    return q


# --------------------------------------------------------------------------- joint_angle

@pytest.mark.parametrize("h,k,a,expected", [
    ((0, 2, 0), (0, 1, 0), (0, 0, 0), 180.0),
    ((0, 1, 0), (0, 0, 0), (1, 0, 0), 90.0),
    ((0, 2, 0), (0, 0, 0), (1, 1, 0), 45.0),
])
def test_joint_angle_examples(h, k, a, expected):
    assert joint_angle(h, k, a) == pytest.approx(expected, abs=1e-12)
    assert dot_oracle(h, k, a) == pytest.approx(expected, abs=1e-12)


def test_degenerate_segments():
    with pytest.raises(DegenerateTriangle):
        joint_angle((0, 0, 0), (0, 0, 0), (1, 0, 0))
    with pytest.raises(DegenerateTriangle):
        joint_angle((0, 1, 0), (0, 0, 0), (0, 0, 5e-10))
    assert joint_angle((0, 2e-9, 0), (0, 0, 0), (2e-9, 0, 0)) == pytest.approx(90.0)


def test_angles_stay_in_range_for_nearly_collinear_points():
    # rounding would push the cosine argument just outside [-1, 1]
    h = np.array([[0.1, 0.3, 0.7]])
    k = h * 3
    a = h * 7
    theta = joint_angles(h, k, a)
    assert 0.0 <= theta[0] <= 180.0


points = st.tuples(*[st.floats(-10, 10, allow_nan=False)] * 3)


@settings(max_examples=200, deadline=None)
@given(points, points, points)
def test_cosine_rule_matches_dot_product(h, k, a):
    m, n = np.subtract(h, k), np.subtract(a, k)
    nm, nn = np.linalg.norm(m), np.linalg.norm(n)
    if min(nm, nn) < 1e-3:
        return
    # keep away from 0 and 180 degrees, where arccos amplifies rounding in both formulas
    sin = np.linalg.norm(np.cross(m, n)) / (nm * nn)
    if sin < 1e-4:
        return
    assert joint_angle(h, k, a) == pytest.approx(dot_oracle(h, k, a), abs=1e-9)


@settings(max_examples=100, deadline=None)
@given(points, points, points)
def test_swapping_ends_is_symmetric(h, k, a):
    try:
        x = joint_angle(h, k, a)
    except DegenerateTriangle:
        return
    assert joint_angle(a, k, h) == x


def test_rigid_motion_and_scale_invariance():
    rng = np.random.default_rng(7)
    h, k, a = rng.uniform(-1, 1, (3, 1000, 3))
    base = joint_angles(h, k, a)
    for _ in range(5):
        rot = random_rotation(rng)
        shift = rng.uniform(-5, 5, 3)
        scale = rng.uniform(0.1, 10)
        moved = joint_angles(*(scale * p @ rot.T + shift for p in (h, k, a)))
        assert np.max(np.abs(moved - base)) < 1e-9


# --------------------------------------------------------------------------- angle series

def test_straight_leg_gives_constant_180():
    s = compute_angle_series(canonical_series(standing_positions(12)), KNEE)
    np.testing.assert_allclose(s.values, 180.0, atol=1e-12)
    assert len(s.values) == 12


def test_single_frame_45_degrees():
    pos = standing_positions(1)
    pos[0, JOINT_INDEX[JointId.LEFT_HIP]] = (0, 2, 0)
    pos[0, JOINT_INDEX[JointId.LEFT_KNEE]] = (0, 0, 0)
    pos[0, JOINT_INDEX[JointId.LEFT_ANKLE]] = (1, 1, 0)
    s = compute_angle_series(canonical_series(pos), KNEE)
    np.testing.assert_allclose(s.values, [45.0], atol=1e-12)


def test_degenerate_frame_index_propagates():
    pos = standing_positions(10)
    pos[7, JOINT_INDEX[JointId.LEFT_HIP]] = pos[7, JOINT_INDEX[JointId.LEFT_KNEE]]
    with pytest.raises(DegenerateTriangle) as exc:
        compute_angle_series(canonical_series(pos), KNEE)
    assert exc.value.frame == 7


def test_sagittal_projection_drops_mediolateral_axis():
    pos = standing_positions(3)
    # knee pushed sideways (x) and forward (z): 3D angle sees both, sagittal only z
    pos[:, JOINT_INDEX[JointId.LEFT_KNEE]] += (0.2, 0.0, 0.2)
    series = canonical_series(pos)
    assert mediolateral_axis(series) == 0
    sag = AngleDefinition("k", "LEFT_KNEE", "LEFT_HIP", "LEFT_ANKLE", projection="sagittal")
    full = compute_angle_series(series, KNEE).values[0]
    proj = compute_angle_series(series, sag).values[0]
    hip, knee, ankle = (pos[0, JOINT_INDEX[j]][[1, 2]] for j in
                        (JointId.LEFT_HIP, JointId.LEFT_KNEE, JointId.LEFT_ANKLE))
    assert proj == pytest.approx(dot_oracle(hip, knee, ankle), abs=1e-9)
    assert full < proj < 180.0


def test_mediolateral_axis_follows_hips():
    pos = standing_positions(2)
    rot = np.array([[0, 0, 1], [0, 1, 0], [-1, 0, 0]], float)  # turn 90 degrees about y
    assert mediolateral_axis(canonical_series(pos @ rot.T)) == 2


def test_angle_definition_validation():
    with pytest.raises(ValueError):
        AngleDefinition("x", "LEFT_KNEE", "LEFT_KNEE", "LEFT_ANKLE")
    with pytest.raises(ValueError):
        AngleDefinition("x", "LEFT_KNEE", "LEFT_HIP", "NOSE")
    with pytest.raises(ValueError):
        AngleDefinition("x", "LEFT_KNEE", "LEFT_HIP", "LEFT_ANKLE", projection="frontal")
    assert AngleDefinition.from_dict(KNEE.to_dict()) == KNEE


def test_default_angle_set():
    names = [d.name for d in DEFAULT_ANGLES]
    assert names == ["left_knee_flexion", "right_knee_flexion", "left_elbow_flexion",
                     "right_elbow_flexion", "left_arm_abduction", "right_arm_abduction"]
    abd = DEFAULT_ANGLES[4]
    assert (abd.vertex, abd.end_a, abd.end_b) == (JointId.LEFT_SHOULDER, JointId.LEFT_ELBOW,
                                                  JointId.LEFT_HIP)


# --------------------------------------------------------------------------- windows

def test_window_statistics_hand_example():
    out = window_statistics(np.array([10, 20, 30, 40.0]), WindowSpec(2, 1))
    np.testing.assert_array_equal(out["mean"], [15, 25, 35])
    np.testing.assert_array_equal(out["max"], [20, 30, 40])
    np.testing.assert_array_equal(out["min"], [10, 20, 30])


def test_window_equal_to_series_and_constant():
    v = np.array([3.0, 1.0, 4.0, 1.0, 5.0])
    out = window_statistics(v, WindowSpec(5, 1))
    assert (out["mean"][0], out["max"][0], out["min"][0]) == (2.8, 5.0, 1.0)
    const = window_statistics(np.full(9, 7.5), WindowSpec(4, 2))
    for s in ("mean", "max", "min"):
        np.testing.assert_array_equal(const[s], 7.5)


def test_window_too_long():
    with pytest.raises(WindowTooLong):
        window_statistics(np.arange(4.0), WindowSpec(5))


@pytest.mark.parametrize("kw", [{"length": 0}, {"stride": 0}, {"statistics": ()},
                                {"statistics": ("median",)}, {"statistics": ("mean", "mean")}])
def test_window_spec_validation(kw):
    with pytest.raises(ValueError):
        WindowSpec(**kw)


@given(st.integers(1, 200), st.integers(1, 200), st.integers(1, 50))
def test_window_count_formula(n, length, stride):
    if length > n:
        return
    out = window_statistics(np.arange(n, dtype=float), WindowSpec(length, stride, ("mean",)))
    assert len(out["mean"]) == window_count(n, length, stride) == (n - length) // stride + 1


# --------------------------------------------------------------------------- feature matrix

def test_single_recording_single_column():
    m = assemble_feature_matrix([canonical_series(standing_positions(20))], [KNEE],
                                WindowSpec(5, 1, ("mean",)))
    assert m.columns == ["left_knee_flexion_mean"]
    assert m.values.shape == (16, 1)
    assert set(m.actions) == {"squat"}


def test_rows_labelled_with_both_actions():
    recs = [canonical_series(standing_positions(20), action="squat"),
            canonical_series(standing_positions(25), action="sit_to_stand")]
    m = assemble_feature_matrix(recs, DEFAULT_ANGLES, WindowSpec(15))
    assert m.actions == ["squat"] * 6 + ["sit_to_stand"] * 11
    assert m.columns == feature_columns(DEFAULT_ANGLES, WindowSpec(15))
    assert m.columns[:3] == ["left_knee_flexion_mean", "left_knee_flexion_max",
                             "left_knee_flexion_min"]
    assert m.rows_for("sit_to_stand").n_rows == 11


def test_inconsistent_metadata():
    recs = [canonical_series(standing_positions(20), patient="P1"),
            canonical_series(standing_positions(20), patient="P2")]
    with pytest.raises(InconsistentMetadata):
        assemble_feature_matrix(recs, [KNEE])
    with pytest.raises(ValueError):
        assemble_feature_matrix(recs[:1], [])


def test_feature_matrix_invariants_and_csv(tmp_path):
    with pytest.raises(ValueError):
        FeatureMatrix(["a", "a"], np.zeros((1, 2)), ["squat"], "P", "pre", "s")
    with pytest.raises(ValueError):
        FeatureMatrix(["a"], np.array([[np.nan]]), ["squat"], "P", "pre", "s")
    m = FeatureMatrix(["a", "b"], np.array([[0.1, 2.0], [3.0, 1 / 3]]), ["squat", "sit_to_stand"],
                      "P", "pre", "s")
    m.to_csv(tmp_path / "f.csv")
    rows = list(csv.reader(open(tmp_path / "f.csv")))
    assert rows[0] == ["action", "a", "b"]
    assert rows[2][0] == "sit_to_stand" and float(rows[2][2]) == 1 / 3
