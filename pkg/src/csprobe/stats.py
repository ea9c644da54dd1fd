"""Shared rank statistics: Spearman correlation with ties and seed aggregation."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Sequence

import numpy as np


class ConstantInputError(ValueError):
    """Raised when a correlation is undefined because one input has zero rank variance."""


@dataclass(frozen=True)
class RankedVector:
    """A float vector together with its 1-based average ranks.

    Tied values share the arithmetic mean of the ranks they occupy, so the
    ranks always sum to n(n+1)/2.
    """

    values: np.ndarray
    ranks: np.ndarray

    @classmethod
    def from_values(cls, values: Sequence[float]) -> "RankedVector":
        arr = np.asarray(values, dtype=float)
        return cls(values=arr, ranks=average_ranks(arr))


def average_ranks(values: Sequence[float]) -> np.ndarray:
    """1-based ranks with average-rank tie handling."""
    x = np.asarray(values, dtype=float)
    if x.ndim != 1:
        raise ValueError(f"expected a 1-D vector, got shape {x.shape}")
    order = np.argsort(x, kind="stable")
    ranks = np.empty(len(x), dtype=float)
    i = 0
    while i < len(x):
        j = i
        while j + 1 < len(x) and x[order[j + 1]] == x[order[i]]:
            j += 1
        # positions i..j (0-based) share rank mean((i+1)..(j+1))
        ranks[order[i : j + 1]] = 0.5 * (i + j) + 1.0
        i = j + 1
    return ranks


def spearman(x: Sequence[float], y: Sequence[float]) -> float:
    """Spearman rank correlation: Pearson correlation of average ranks.

    This tie-correct formulation reduces to the classical
    1 - 6*sum(d^2)/(n*(n^2-1)) expression when no ties are present.
    """
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    if xa.shape != ya.shape:
        raise ValueError(f"length mismatch: {xa.shape} vs {ya.shape}")
    if xa.ndim != 1 or len(xa) < 3:
        raise ValueError(f"need at least 3 paired values, got {xa.shape}")
    if not (np.isfinite(xa).all() and np.isfinite(ya).all()):
        raise ValueError("inputs must be finite")
    rx = average_ranks(xa)
    ry = average_ranks(ya)
    dx = rx - rx.mean()
    dy = ry - ry.mean()
    vx = float(dx @ dx)
    vy = float(dy @ dy)
    if vx == 0.0 or vy == 0.0:
        raise ConstantInputError("correlation undefined for a constant input vector")
    rho = float(dx @ dy) / math.sqrt(vx * vy)
    return max(-1.0, min(1.0, rho))


class SeedAggregate(NamedTuple):
    mean: float
    std: float
    min: float
    max: float


def aggregate_seeds(values: Sequence[float]) -> SeedAggregate:
    """Mean, population standard deviation, and extremes over per-seed values."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ValueError("need at least one value")
    return SeedAggregate(
        mean=float(arr.mean()),
        std=float(arr.std()),  # population std over the seeds actually run
        min=float(arr.min()),
        max=float(arr.max()),
    )
