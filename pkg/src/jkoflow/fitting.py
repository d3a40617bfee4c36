"""Least-squares slope fits in log-log space."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable

import numpy as np


@dataclass(frozen=True)
class SlopeFit:
    slope: float
    intercept: float
    r_squared: float


def fit_loglog(pairs: Iterable[tuple[float, float]]) -> SlopeFit:
    """Ordinary least squares of ``log err`` against ``log eta``."""
    data = np.asarray(list(pairs), dtype=float)
    if data.ndim != 2 or data.shape[0] < 3 or data.shape[1] != 2:
        raise ValueError("need at least three (eta, err) pairs")
    if np.any(~np.isfinite(data)) or np.any(data <= 0):
        raise ValueError("log-log fit needs finite positive values")
    x, y = np.log(data[:, 0]), np.log(data[:, 1])
    xm, ym = x.mean(), y.mean()
    sxx = float(np.sum((x - xm) ** 2))
    if sxx == 0:
        raise ValueError("eta values must not all coincide")
    slope = float(np.sum((x - xm) * (y - ym)) / sxx)
    intercept = float(ym - slope * xm)
    ss_tot = float(np.sum((y - ym) ** 2))
    ss_res = float(np.sum((y - intercept - slope * x) ** 2))
    r2 = 1.0 if ss_tot == 0 else min(max(1.0 - ss_res / ss_tot, 0.0), 1.0)
    return SlopeFit(slope, intercept, r2)


def halving(start: float, count: int) -> list[float]:
    """``start, start/2, ...`` (``count`` values)."""
    return [start * math.ldexp(1.0, -k) for k in range(count)]
