"""Scalar descriptors of a biomarker time series: angular impulse and smoothness.

Impulse is the area under the min-subtracted curve (deg*s). Smoothness is the
integral of the squared second derivative (deg^2/s^3); lower means smoother.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import TooFewSamples

IMPULSE_MODES = ("angle", "acceleration")


@dataclass(frozen=True)
class ScalarSeries:
    values: np.ndarray = field(repr=False)
    dt: float

    def __post_init__(self):
        v = np.asarray(self.values, dtype=float)
        if v.ndim != 1:
            raise ValueError("series must be one-dimensional")
        if not np.all(np.isfinite(v)):
            raise ValueError("series contains non-finite values")
        if not self.dt > 0:
            raise ValueError(f"dt must be positive, got {self.dt}")
        object.__setattr__(self, "values", v)

    def __len__(self):
        return len(self.values)


def _need(s: ScalarSeries, n: int):
    if len(s) < n:
        raise TooFewSamples(f"need at least {n} samples, got {len(s)}")


def second_derivative(s: ScalarSeries) -> ScalarSeries:
    """Central second differences; the endpoints reuse the nearest 3-point stencil."""
    _need(s, 3)
    y = s.values
    d2 = np.empty_like(y)
    d2[1:-1] = (y[:-2] - 2.0 * y[1:-1] + y[2:]) / s.dt ** 2
    d2[0] = (y[0] - 2.0 * y[1] + y[2]) / s.dt ** 2
    d2[-1] = (y[-3] - 2.0 * y[-2] + y[-1]) / s.dt ** 2
    return ScalarSeries(d2, s.dt)


def trapezoid_integral(s: ScalarSeries) -> float:
    _need(s, 2)
    y = s.values
    return float(s.dt * (0.5 * (y[0] + y[-1]) + y[1:-1].sum()))


def angular_impulse(s: ScalarSeries, mode: str = "angle", baseline: float | None = None) -> float:
    """Area under ``s - min(s)``.

    ``mode="acceleration"`` integrates the min-subtracted second derivative
    instead. ``baseline`` overrides the minimum, so repeats of one action can
    share a common floor.
    """
    if mode == "angle":
        _need(s, 2)
        curve = s
    elif mode == "acceleration":
        curve = second_derivative(s)
    else:
        raise ValueError(f"impulse mode must be one of {IMPULSE_MODES}")
    floor = curve.values.min() if baseline is None else baseline
    return trapezoid_integral(ScalarSeries(curve.values - floor, s.dt))


def smoothness(s: ScalarSeries) -> float:
    d2 = second_derivative(s)
    return trapezoid_integral(ScalarSeries(d2.values ** 2, s.dt))
