"""Log-size scaling fits and correlation reports for benchmark score curves."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np


class ScalingError(Exception):
    pass


class DegenerateFitError(ScalingError):
    pass


class ZeroVarianceError(ScalingError):
    pass


@dataclass(frozen=True)
class ScorePoint:
    data_size: float
    score: float
    label: str = ""

    def __post_init__(self):
        if self.data_size <= 0:
            raise ValueError(f"data_size must be positive, got {self.data_size}")


@dataclass(frozen=True)
class ScalingFit:
    """score = a * ln(size) + b, with goodness of fit over n points."""

    a: float
    b: float
    r2: float
    n: int

    def __post_init__(self):
        if self.n < 2:
            raise ValueError("a fit needs at least 2 points")
        if self.r2 > 1.0 + 1e-12:
            raise ValueError(f"r2 cannot exceed 1, got {self.r2}")

    def to_json_obj(self) -> dict:
        return {"a": self.a, "b": self.b, "r2": self.r2, "n": self.n}


def fit_log(points: Sequence[ScorePoint]) -> ScalingFit:
    """Least-squares fit of score against the natural log of data size."""
    if len(points) < 2:
        raise DegenerateFitError(f"need at least 2 points, got {len(points)}")
    sizes = np.array([p.data_size for p in points], dtype=float)
    if len(set(sizes.tolist())) < 2:
        raise DegenerateFitError("all data sizes are equal; slope is undetermined")
    x = np.log(sizes)
    y = np.array([p.score for p in points], dtype=float)
    xm, ym = x.mean(), y.mean()
    a = float(np.dot(x - xm, y - ym) / np.dot(x - xm, x - xm))
    b = float(ym - a * xm)
    pred = a * x + b
    ss_res = float(np.sum((y - pred) ** 2))
    ss_tot = float(np.sum((y - ym) ** 2))
    r2 = 1.0 if ss_res == 0.0 else 1.0 - ss_res / ss_tot
    return ScalingFit(a=a, b=b, r2=r2, n=len(points))


def project(fit: ScalingFit, size: float) -> float:
    if size <= 0:
        raise ScalingError(f"size must be positive, got {size}")
    return fit.a * math.log(size) + fit.b


def pearson(xs: Sequence[float], ys: Sequence[float]) -> float:
    """Product-moment correlation coefficient."""
    if len(xs) != len(ys):
        raise ScalingError(f"length mismatch: {len(xs)} vs {len(ys)}")
    if len(xs) < 2:
        raise ScalingError("need at least 2 observations")
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    xd, yd = x - x.mean(), y - y.mean()
    sx = float(np.dot(xd, xd))
    sy = float(np.dot(yd, yd))
    if sx == 0.0 or sy == 0.0:
        raise ZeroVarianceError("pearson is undefined for constant input")
    return float(np.dot(xd, yd) / math.sqrt(sx * sy))


def r_squared(predicted: Sequence[float], actual: Sequence[float]) -> float:
    """Coefficient of determination: 1 - SS_res / SS_tot."""
    if len(predicted) != len(actual):
        raise ScalingError(f"length mismatch: {len(predicted)} vs {len(actual)}")
    if len(actual) < 2:
        raise ScalingError("need at least 2 observations")
    p = np.asarray(predicted, dtype=float)
    a = np.asarray(actual, dtype=float)
    ss_tot = float(np.sum((a - a.mean()) ** 2))
    if ss_tot == 0.0:
        raise ZeroVarianceError("actual values have zero variance")
    ss_res = float(np.sum((a - p) ** 2))
    return 1.0 - ss_res / ss_tot


@dataclass(frozen=True)
class CorrelationReport:
    rho: float
    r2: float

    def __post_init__(self):
        if not -1.0 - 1e-12 <= self.rho <= 1.0 + 1e-12:
            raise ValueError(f"rho {self.rho} outside [-1,1]")

    def to_json_obj(self) -> dict:
        return {"rho": self.rho, "r2": self.r2}


def correlation_report(xs: Sequence[float], ys: Sequence[float]) -> CorrelationReport:
    """Pearson rho plus the r2 of the simple linear fit of ys on xs.

    For a simple linear regression these satisfy r2 == rho ** 2.
    """
    rho = pearson(xs, ys)
    x = np.asarray(xs, dtype=float)
    y = np.asarray(ys, dtype=float)
    xd = x - x.mean()
    slope = float(np.dot(xd, y - y.mean()) / np.dot(xd, xd))
    intercept = float(y.mean() - slope * x.mean())
    r2 = r_squared(slope * x + intercept, y)
    return CorrelationReport(rho=rho, r2=r2)
