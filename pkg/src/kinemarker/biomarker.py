"""Per-patient PCA feature ranking and cross-patient top-k histograms."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import DegenerateMatrix
from .kinematics import FeatureMatrix

N_COMPONENTS = 2
TOP_K = 5
_TIE_DECIMALS = 12


@dataclass(frozen=True)
class Standardization:
    mean: np.ndarray
    sd: np.ndarray
    zero_variance: tuple[str, ...]


def standardize(values, columns: Sequence[str] | None = None):
    """Z-score each column with the sample (n-1) standard deviation.

    Constant columns become all-zero and are listed in ``zero_variance``.
    Returns ``(standardized, Standardization)``.
    """
    x = np.asarray(values.values if isinstance(values, FeatureMatrix) else values, dtype=float)
    if columns is None:
        columns = (values.columns if isinstance(values, FeatureMatrix)
                   else [str(i) for i in range(x.shape[1])])
    if x.shape[0] < 2:
        raise ValueError("standardization needs at least 2 rows")
    mean = x.mean(axis=0)
    centered = x - mean
    sd = centered.std(axis=0, ddof=1)
    # spread below rounding level of the column magnitude is treated as constant
    flat = sd <= 1e-12 * np.maximum(np.abs(mean), 1e-300)
    safe = np.where(flat, 1.0, sd)
    z = np.where(flat, 0.0, centered / safe)
    flagged = tuple(c for c, f in zip(columns, flat) if f)
    return z, Standardization(mean, np.where(flat, 0.0, sd), flagged)


@dataclass(frozen=True)
class PcaModel:
    columns: tuple[str, ...]
    mean: np.ndarray = field(repr=False)
    sd: np.ndarray = field(repr=False)
    components: np.ndarray = field(repr=False)  # (n_components, n_features), unit rows
    explained_variance_ratio: np.ndarray
    zero_variance: tuple[str, ...] = ()

    def transform(self, values) -> np.ndarray:
        z = _apply_standardization(self, values)
        return z @ self.components.T

    def inverse_transform(self, scores) -> np.ndarray:
        """Back to the standardized feature space."""
        return np.asarray(scores) @ self.components


def _apply_standardization(model, values):
    x = np.asarray(values, dtype=float)
    sd = np.where(model.sd == 0, 1.0, model.sd)
    return np.where(model.sd == 0, 0.0, (x - model.mean) / sd)


def _orient(components: np.ndarray) -> np.ndarray:
    # sign convention: the largest-magnitude loading of each component is positive
    out = components.copy()
    for i, row in enumerate(out):
        j = int(np.argmax(np.abs(row)))
        if row[j] < 0:
            out[i] = -row
    return out


def pca_fit(matrix, columns: Sequence[str] | None = None, n_components: int = N_COMPONENTS,
            standardize_columns: bool = True) -> PcaModel:
    """Top right-singular vectors of the standardized (or just centered) matrix."""
    if isinstance(matrix, FeatureMatrix):
        columns = matrix.columns
        values = matrix.values
    else:
        values = np.asarray(matrix, dtype=float)
        columns = columns or [str(i) for i in range(values.shape[1])]
    if values.ndim != 2 or values.shape[0] < 3 or values.shape[1] < 2:
        raise ValueError(f"PCA needs at least 3 rows and 2 columns, got {values.shape}")
    if standardize_columns:
        z, params = standardize(values, columns)
        mean, sd, flagged = params.mean, params.sd, params.zero_variance
    else:
        mean = values.mean(axis=0)
        z = values - mean
        sd, flagged = np.ones(values.shape[1]), ()
    _, s, vt = np.linalg.svd(z, full_matrices=False)
    total = float(np.sum(s ** 2))
    if total == 0.0 or s[0] <= 1e-12 * math.sqrt(z.size):
        raise DegenerateMatrix("feature matrix has rank 0 after centering")
    k = min(n_components, vt.shape[0])
    ratio = s[:k] ** 2 / total
    return PcaModel(tuple(columns), mean, sd, _orient(vt[:k]), ratio, tuple(flagged))


@dataclass(frozen=True)
class ImportanceRanking:
    features: tuple[tuple[str, float], ...]
    patient_id: str = ""
    session: str = ""
    scope: str = "all"

    def names(self) -> list[str]:
        return [name for name, _ in self.features]

    def scores(self) -> dict[str, float]:
        return dict(self.features)


def feature_importance(model: PcaModel, patient_id: str = "", session: str = "",
                       scope: str = "all") -> ImportanceRanking:
    """Explained-variance-weighted absolute loadings, normalized to sum to 1."""
    raw = model.explained_variance_ratio @ np.abs(model.components)
    total = raw.sum()
    scores = raw / total if total > 0 else raw
    # ties (to 1e-12) keep column order
    order = sorted(range(len(scores)), key=lambda j: (-round(float(scores[j]), _TIE_DECIMALS), j))
    return ImportanceRanking(tuple((model.columns[j], float(scores[j])) for j in order),
                             patient_id, session, scope)


def top_k_features(ranking: ImportanceRanking, k: int = TOP_K) -> list[str]:
    if k < 1:
        raise ValueError("k must be >= 1")
    return ranking.names()[:k]


@dataclass(frozen=True)
class BiomarkerHistogram:
    action: str
    counts: dict[str, int]
    n_patients: int

    def sorted_items(self) -> list[tuple[str, int]]:
        """Descending by count; equal counts alphabetical."""
        return sorted(self.counts.items(), key=lambda kv: (-kv[1], kv[0]))


def aggregate_histogram(per_patient: Iterable[Sequence[str]], action: str) -> BiomarkerHistogram:
    lists = [list(lst) for lst in per_patient]
    if not lists:
        raise ValueError("no per-patient feature lists given")
    counts = Counter()
    for lst in lists:
        counts.update(set(lst))
    return BiomarkerHistogram(action, dict(counts), len(lists))
