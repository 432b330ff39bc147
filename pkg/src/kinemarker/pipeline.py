"""End-to-end assessment: skeleton files -> biomarkers -> pre/post statistics.

Stages (each usable on its own, the CLI exposes them as subcommands):

1. ``load_recordings``   parse, map, validate and resample every input file
2. ``feature_matrices``  windowed angle statistics per (patient, session, source)
3. ``rank_biomarkers``   PCA importance rankings and top-k histograms
4. ``calibrate_sources`` cross-source regression and Pearson correlation
5. ``assess``            impulse/smoothness descriptors, paired tests, Bland-Altman

Repeats of one (patient, session, action) are treated as one concatenated
recording: their descriptors share a common baseline and are summed, so no
differences are taken across the seam between two files.
"""

from __future__ import annotations

import hashlib
import logging
from collections import defaultdict
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .biomarker import (
    BiomarkerHistogram,
    ImportanceRanking,
    aggregate_histogram,
    feature_importance,
    pca_fit,
    top_k_features,
)
from .config import PipelineConfig
from .errors import (
    KinemarkerError,
    NoRecordings,
    PipelineError,
    ZeroVariance,
)
from .ingest import ACTIONS, CanonicalSeries, load_series
from .kinematics import FeatureMatrix, assemble_feature_matrix, recording_features
from .stats import (
    BlandAltmanSummary,
    bland_altman,
    fit_calibration,
    paired_t_test,
    pearson,
)
from .temporal import ScalarSeries, angular_impulse, second_derivative, smoothness

logger = logging.getLogger(__name__)

DESCRIPTORS = ("impulse", "smoothness")
DESCRIPTOR_LABELS = {"impulse": "spatial", "smoothness": "temporal"}
CALIBRATION_SOURCE = "mesh_model_24"
CALIBRATION_TARGET = "depth_tracker_32"


def _float(x):
    return None if x is None else float(x)


# --------------------------------------------------------------------------- ingest

@dataclass
class LoadedInput:
    path: Path
    sha256: str | None  # None for series that never touched disk
    series: CanonicalSeries


def discover_inputs(input_dir) -> list[Path]:
    input_dir = Path(input_dir)
    if not input_dir.is_dir():
        raise FileNotFoundError(f"input directory {input_dir} does not exist")
    return sorted(p for p in input_dir.rglob("*.jsonl") if p.is_file())


def _load_one(path: Path, config: PipelineConfig) -> LoadedInput:
    digest = hashlib.sha256(path.read_bytes()).hexdigest()
    try:
        series = load_series(path, dt=config.dt, gap_tolerance=config.gap_tolerance)
    except KinemarkerError as exc:
        raise PipelineError(f"recording {path.name}", exc) from exc
    return LoadedInput(path, digest, series)


def load_recordings(config: PipelineConfig) -> list[LoadedInput]:
    paths = discover_inputs(config.input_path)
    if not paths:
        raise NoRecordings(f"no .jsonl recordings under {config.input_path}")
    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return list(pool.map(lambda p: _load_one(p, config), paths))


def group_series(loaded: list[LoadedInput]) -> dict[tuple[str, str, str, str], list[CanonicalSeries]]:
    """(patient, session, source, action) -> repeats in file-name order."""
    groups = defaultdict(list)
    for item in loaded:
        s = item.series
        groups[(s.patient_id, s.session, s.source, s.action)].append(s)
    return dict(sorted(groups.items()))


def choose_source(config: PipelineConfig, groups) -> str:
    present = sorted({key[2] for key in groups})
    if config.source is not None:
        if config.source not in present:
            raise NoRecordings(f"no recordings from source {config.source!r}")
        return config.source
    if len(present) == 1:
        return present[0]
    return CALIBRATION_SOURCE


# --------------------------------------------------------------------------- features

def feature_matrices(config: PipelineConfig, groups, source: str | None = None
                     ) -> dict[tuple[str, str, str], FeatureMatrix]:
    """One matrix per (patient, session, source), all actions pooled."""
    by_key = defaultdict(list)
    for (patient, session, src, _action), series in groups.items():
        if source is None or src == source:
            by_key[(patient, session, src)].extend(series)

    def build(item):
        key, series = item
        try:
            return key, assemble_feature_matrix(series, config.angles, config.window)
        except KinemarkerError as exc:
            raise PipelineError(f"patient {key[0]} session {key[1]} source {key[2]}", exc) from exc

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        return dict(pool.map(build, sorted(by_key.items())))


# --------------------------------------------------------------------------- biomarkers

@dataclass
class RankingEntry:
    patient_id: str
    session: str
    scope: str  # "all" (both actions pooled) or an action
    ranking: ImportanceRanking | None
    error: str | None = None

    def to_dict(self):
        return {
            "patient_id": self.patient_id,
            "session": self.session,
            "scope": self.scope,
            "features": [] if self.ranking is None else
            [[name, score] for name, score in self.ranking.features],
            "error": self.error,
        }


def _rank(matrix: FeatureMatrix, scope: str) -> RankingEntry:
    try:
        model = pca_fit(matrix)
    except (KinemarkerError, ValueError) as exc:
        return RankingEntry(matrix.patient_id, matrix.session, scope, None,
                            f"{type(exc).__name__}: {exc}")
    return RankingEntry(matrix.patient_id, matrix.session, scope,
                        feature_importance(model, matrix.patient_id, matrix.session, scope))


def rank_biomarkers(config: PipelineConfig, matrices: dict) -> tuple[list[RankingEntry], dict[str, BiomarkerHistogram]]:
    """Pooled-action and per-action rankings; per-action top-k histograms."""
    rankings = []
    for (_patient, _session, _source), matrix in sorted(matrices.items()):
        rankings.append(_rank(matrix, "all"))
        for action in ACTIONS:
            sub = matrix.rows_for(action)
            if sub.n_rows:
                rankings.append(_rank(sub, action))
    histograms = {}
    for action in ACTIONS:
        lists = [top_k_features(r.ranking, config.top_k) for r in rankings
                 if r.scope == action and r.ranking is not None
                 and (config.histogram_session == "pooled" or r.session == config.histogram_session)]
        histograms[action] = (aggregate_histogram(lists, action) if lists
                              else BiomarkerHistogram(action, {}, 0))
    return rankings, histograms


# --------------------------------------------------------------------------- calibration

@dataclass
class CalibrationEntry:
    biomarker: str
    n: int
    slope: float | None = None
    intercept: float | None = None
    rmse_before: float | None = None
    rmse_after: float | None = None
    r: float | None = None
    p: float | None = None
    error: str | None = None

    def to_dict(self):
        return {k: (_float(v) if isinstance(v, (float, np.floating)) else v)
                for k, v in self.__dict__.items()}


def calibration_pairs(config: PipelineConfig, groups) -> dict[str, tuple[np.ndarray, np.ndarray]]:
    """Aligned (source, target) windowed feature values per biomarker.

    Recordings pair up by (patient, session, action) and repeat order; each
    pair is truncated to the shorter of the two.
    """
    cols = config.feature_columns()
    xs = defaultdict(list)
    ys = defaultdict(list)
    for (patient, session, src, action), series in groups.items():
        if src != CALIBRATION_SOURCE:
            continue
        other = groups.get((patient, session, CALIBRATION_TARGET, action))
        if not other:
            continue
        for a, b in zip(series, other):
            fa = recording_features(a, config.angles, config.window)
            fb = recording_features(b, config.angles, config.window)
            n = min(len(fa), len(fb))
            for j, name in enumerate(cols):
                xs[name].append(fa[:n, j])
                ys[name].append(fb[:n, j])
    return {name: (np.concatenate(xs[name]), np.concatenate(ys[name])) for name in xs}


def calibrate_sources(config: PipelineConfig, groups) -> list[CalibrationEntry]:
    pairs = calibration_pairs(config, groups)
    out = []
    for name in config.selected_biomarkers():
        if name not in pairs:
            continue
        x, y = pairs[name]
        entry = CalibrationEntry(name, len(x))
        try:
            model = fit_calibration(x, y)
            corr = pearson(x, y)
        except (KinemarkerError, ValueError) as exc:
            entry.error = f"{type(exc).__name__}: {exc}"
        else:
            entry.slope, entry.intercept = model.slope, model.intercept
            entry.rmse_before, entry.rmse_after = model.rmse_before, model.rmse_after
            entry.r, entry.p = corr.r, corr.p
        out.append(entry)
    return out


# --------------------------------------------------------------------------- descriptors

def biomarker_segments(series_list, config: PipelineConfig) -> dict[str, list[np.ndarray]]:
    """Windowed feature series per biomarker, one array per repeat."""
    cols = config.feature_columns()
    wanted = config.selected_biomarkers()
    out = {name: [] for name in wanted}
    for s in series_list:
        block = recording_features(s, config.angles, config.window)
        for name in wanted:
            out[name].append(block[:, cols.index(name)])
    return out


def descriptors(segments: list[np.ndarray], dt: float, impulse_mode: str = "angle") -> dict[str, float]:
    """Impulse and smoothness of a biomarker over its repeats."""
    if impulse_mode == "angle":
        baseline = min(float(seg.min()) for seg in segments)
    else:
        baseline = min(float(second_derivative(ScalarSeries(seg, dt)).values.min())
                       for seg in segments)
    impulse = sum(angular_impulse(ScalarSeries(seg, dt), impulse_mode, baseline) for seg in segments)
    smooth = sum(smoothness(ScalarSeries(seg, dt)) for seg in segments)
    return {"impulse": float(impulse), "smoothness": float(smooth)}


@dataclass
class DescriptorRow:
    patient_id: str
    session: str
    action: str
    biomarker: str
    impulse: float
    smoothness: float

    def to_dict(self):
        return dict(self.__dict__)


def compute_descriptors(config: PipelineConfig, groups, source: str) -> list[DescriptorRow]:
    feature_dt = config.dt * config.window.stride
    items = [(k, v) for k, v in groups.items() if k[2] == source]

    def work(item):
        (patient, session, _src, action), series = item
        try:
            segs = biomarker_segments(series, config)
            rows = []
            for name, seg_list in segs.items():
                d = descriptors(seg_list, feature_dt, config.impulse_mode)
                rows.append(DescriptorRow(patient, session, action, name,
                                          d["impulse"], d["smoothness"]))
            return rows
        except KinemarkerError as exc:
            raise PipelineError(f"patient {patient} session {session} action {action}", exc) from exc

    with ThreadPoolExecutor(max_workers=config.workers) as pool:
        nested = list(pool.map(work, items))
    return [row for rows in nested for row in rows]


# --------------------------------------------------------------------------- assessment

@dataclass
class TestEntry:
    action: str
    biomarker: str
    descriptor: str
    n: int
    t: float | None = None
    df: int | None = None
    p_one: float | None = None
    p_two: float | None = None
    critical: float | None = None
    significant: bool = False
    error: str | None = None

    def to_dict(self):
        d = dict(self.__dict__)
        for k in ("t", "p_one", "p_two", "critical"):
            d[k] = _float(d[k])
        return d


@dataclass
class BlandAltmanEntry:
    action: str
    biomarker: str
    descriptor: str
    patients: list[str]
    summary: BlandAltmanSummary | None
    error: str | None = None

    @property
    def key(self) -> str:
        return f"{self.action}_{self.biomarker}_{self.descriptor}"

    def to_dict(self):
        d = {"action": self.action, "biomarker": self.biomarker, "descriptor": self.descriptor,
             "patients": list(self.patients), "error": self.error}
        s = self.summary
        if s is not None:
            d.update(mean_diff=s.mean_diff, sd_diff=s.sd_diff, multiplier=s.multiplier,
                     lower_limit=s.lower_limit, upper_limit=s.upper_limit,
                     inside=s.inside, n=s.n,
                     pair_mean=[float(v) for v in s.pair_mean],
                     pair_diff=[float(v) for v in s.pair_diff])
        return d


def _paired_values(rows: list[DescriptorRow], action, biomarker, descriptor):
    pre, post = {}, {}
    for r in rows:
        if r.action == action and r.biomarker == biomarker:
            (pre if r.session == "pre" else post)[r.patient_id] = getattr(r, descriptor)
    patients = sorted(set(pre) & set(post))
    return patients, np.array([pre[p] for p in patients]), np.array([post[p] for p in patients])


def assess(config: PipelineConfig, rows: list[DescriptorRow]) -> tuple[list[TestEntry], list[BlandAltmanEntry]]:
    tests, ba = [], []
    for action in ACTIONS:
        if not any(r.action == action for r in rows):
            continue
        for name in config.selected_biomarkers():
            for desc in DESCRIPTORS:
                patients, pre, post = _paired_values(rows, action, name, desc)
                entry = TestEntry(action, name, desc, len(patients))
                try:
                    if config.direction == "decrease":
                        res = paired_t_test(post, pre, config.tails, config.alpha)
                    else:
                        res = paired_t_test(pre, post, config.tails, config.alpha)
                except (ZeroVariance, ValueError) as exc:
                    entry.error = f"{type(exc).__name__}: {exc}"
                else:
                    entry.t, entry.df = res.t, res.df
                    entry.p_one, entry.p_two = res.p_one, res.p_two
                    entry.critical, entry.significant = res.critical, res.significant
                tests.append(entry)
                try:
                    summary = bland_altman(pre, post, config.ba_multiplier)
                    ba.append(BlandAltmanEntry(action, name, desc, patients, summary))
                except (KinemarkerError, ValueError) as exc:
                    ba.append(BlandAltmanEntry(action, name, desc, patients, None,
                                               f"{type(exc).__name__}: {exc}"))
    return tests, ba


# --------------------------------------------------------------------------- report

@dataclass
class AnalysisReport:
    config: PipelineConfig
    inputs: list[tuple[str, str]]  # (relative path, sha256)
    source: str
    rankings: list[RankingEntry] = field(default_factory=list)
    histograms: dict[str, BiomarkerHistogram] = field(default_factory=dict)
    calibration: list[CalibrationEntry] = field(default_factory=list)
    descriptors: list[DescriptorRow] = field(default_factory=list)
    tests: list[TestEntry] = field(default_factory=list)
    bland_altman: list[BlandAltmanEntry] = field(default_factory=list)

    def significant(self) -> list[TestEntry]:
        return [t for t in self.tests if t.significant]

    def to_dict(self) -> dict:
        return {
            "provenance": {
                "tool": f"kinemarker {__version__}",
                "config_hash": self.config.digest(),
                "config": self.config.to_dict(),
                "analysis_source": self.source,
                "inputs": [{"file": f, "sha256": h} for f, h in self.inputs],
            },
            "rankings": [r.to_dict() for r in self.rankings],
            "histograms": {a: {"n_patients": h.n_patients,
                               "counts": dict(h.sorted_items())}
                           for a, h in sorted(self.histograms.items())},
            "calibration": [c.to_dict() for c in self.calibration],
            "descriptors": [d.to_dict() for d in self.descriptors],
            "tests": [t.to_dict() for t in self.tests],
            "bland_altman": [b.to_dict() for b in self.bland_altman],
        }


def run_pipeline(config: PipelineConfig) -> AnalysisReport:
    """Load every recording under the configured input directory and analyse it."""
    loaded = load_recordings(config)
    root = config.input_path
    for item in loaded:
        item.path = item.path.relative_to(root)
    return analyse(config, loaded)


def analyse(config: PipelineConfig, loaded: list[LoadedInput]) -> AnalysisReport:
    """Everything after ingest, on already resampled series.

    ``loaded`` paths are recorded in the provenance block as given.
    """
    if not loaded:
        raise NoRecordings("no recordings to analyse")
    groups = group_series(loaded)
    source = choose_source(config, groups)
    sessions = defaultdict(set)
    for patient, session, src, _ in groups:
        if src == source:
            sessions[patient].add(session)
    if not any(s >= {"pre", "post"} for s in sessions.values()):
        raise NoRecordings("no patient has both pre and post recordings")

    inputs = [(Path(item.path).as_posix(), item.sha256) for item in loaded]
    report = AnalysisReport(config, inputs, source)

    matrices = feature_matrices(config, groups, source)
    report.rankings, report.histograms = rank_biomarkers(config, matrices)
    report.calibration = calibrate_sources(config, groups)
    report.descriptors = compute_descriptors(config, groups, source)
    report.tests, report.bland_altman = assess(config, report.descriptors)
    logger.info("%d recordings, %d tests, %d significant", len(loaded), len(report.tests),
                len(report.significant()))
    return report
