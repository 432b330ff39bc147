import json

import numpy as np
import pytest

from kinemarker.ingest import CANONICAL_JOINTS, DEPTH_TRACKER_32, CanonicalSeries, JointId


def canonical_series(positions, patient="P1", session="pre", source="mesh_model_24",
                     action="squat", dt=1 / 30):
    return CanonicalSeries(patient, session, source, action, dt, np.asarray(positions, float))


def standing_positions(n=20, offset=(0.0, 0.0, 0.0)):
    """(n, 15, 3) upright skeleton with straight legs, y up, left = +x."""
    base = {
        JointId.PELVIS: (0.0, 1.0, 0.0),
        JointId.LEFT_HIP: (0.1, 0.95, 0.0),
        JointId.RIGHT_HIP: (-0.1, 0.95, 0.0),
        JointId.LEFT_KNEE: (0.1, 0.5, 0.0),
        JointId.RIGHT_KNEE: (-0.1, 0.5, 0.0),
        JointId.LEFT_ANKLE: (0.1, 0.08, 0.0),
        JointId.RIGHT_ANKLE: (-0.1, 0.08, 0.0),
        JointId.SPINE_CHEST: (0.0, 1.4, 0.0),
        JointId.NECK: (0.0, 1.55, 0.0),
        JointId.LEFT_SHOULDER: (0.18, 1.48, 0.0),
        JointId.RIGHT_SHOULDER: (-0.18, 1.48, 0.0),
        JointId.LEFT_ELBOW: (0.25, 1.2, 0.0),
        JointId.RIGHT_ELBOW: (-0.25, 1.2, 0.0),
        JointId.LEFT_WRIST: (0.28, 0.95, 0.1),
        JointId.RIGHT_WRIST: (-0.28, 0.95, 0.1),
    }
    frame = np.array([base[j] for j in CANONICAL_JOINTS]) + np.asarray(offset)
    return np.repeat(frame[None], n, axis=0)


def depth_frame_joints(offset=0.0):
    """All 32 depth-tracker labels with distinct positions."""
    return {label: [0.01 * i + offset, 1.0 + 0.02 * i, 0.5]
            for i, label in enumerate(DEPTH_TRACKER_32.labels)}


def write_jsonl(path, header, frames):
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(header) + "\n")
        for fr in frames:
            fh.write((fr if isinstance(fr, str) else json.dumps(fr)) + "\n")
    return path


@pytest.fixture
def depth_header():
    return {"patient_id": "P1", "session": "pre", "source": "depth_tracker_32", "action": "squat"}




# one line per acceptance criterion, printed after the run
ACCEPTANCE_RESULTS: dict[int, str] = {}


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_RESULTS:
        terminalreporter.section("acceptance criteria")
        for k in sorted(ACCEPTANCE_RESULTS):
            terminalreporter.write_line(ACCEPTANCE_RESULTS[k])
