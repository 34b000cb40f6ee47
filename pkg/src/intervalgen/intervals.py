"""Interval and hypercube values and the order-statistic aggregation maps."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

__all__ = [
    "Interval",
    "Hypercube",
    "AggregationSpec",
    "aggregate",
    "aggregate_hypercube",
    "reparam_centre_logrange",
    "from_centre_logrange",
    "as_pair",
]


@dataclass(frozen=True)
class Interval:
    """Closed interval ``[lower, upper]``; ``lower == upper`` is flagged as degenerate."""

    lower: float
    upper: float

    def __post_init__(self):
        if math.isnan(self.lower) or math.isnan(self.upper):
            raise ValueError("interval endpoints must not be NaN")
        if self.lower > self.upper:
            raise ValueError(f"interval requires lower <= upper, got [{self.lower}, {self.upper}]")

    @property
    def degenerate(self) -> bool:
        return self.lower == self.upper

    @property
    def centre(self) -> float:
        return 0.5 * (self.lower + self.upper)

    @property
    def half_range(self) -> float:
        return 0.5 * (self.upper - self.lower)

    def __iter__(self):
        yield self.lower
        yield self.upper


@dataclass(frozen=True)
class Hypercube:
    """Product of ``p >= 1`` intervals."""

    dims: tuple

    def __post_init__(self):
        dims = tuple(d if isinstance(d, Interval) else Interval(*d) for d in self.dims)
        if not dims:
            raise ValueError("hypercube needs at least one dimension")
        object.__setattr__(self, "dims", dims)

    @property
    def p(self) -> int:
        return len(self.dims)

    @property
    def degenerate(self) -> bool:
        return any(d.degenerate for d in self.dims)

    def __getitem__(self, j) -> Interval:
        return self.dims[j]


@dataclass(frozen=True)
class AggregationSpec:
    """Take the ``l``-th and ``u``-th order statistics (1-based) of ``m`` latent values."""

    l: int
    u: int
    m: int

    def __post_init__(self):
        if self.m < 2:
            raise ValueError(f"m must be >= 2, got {self.m}")
        if not 1 <= self.l < self.u <= self.m:
            raise ValueError(f"need 1 <= l < u <= m, got l={self.l}, u={self.u}, m={self.m}")

    @classmethod
    def minmax(cls, m: int) -> "AggregationSpec":
        return cls(1, m, m)

    @property
    def is_minmax(self) -> bool:
        return self.l == 1 and self.u == self.m


def aggregate(data: Sequence[float], spec: AggregationSpec) -> Interval:
    """``[x_(l), x_(u)]`` of the latent values; input order is irrelevant."""
    x = np.asarray(data, dtype=float)
    if x.ndim != 1 or x.size != spec.m:
        raise ValueError(f"expected {spec.m} latent values, got {x.size}")
    xs = np.sort(x, kind="stable")
    return Interval(float(xs[spec.l - 1]), float(xs[spec.u - 1]))


def aggregate_hypercube(points, specs) -> Hypercube:
    """Dimension-wise aggregation of ``m`` points in ``R^p``.

    ``specs`` is a single AggregationSpec applied to every dimension or one
    spec per dimension (all sharing ``m``).
    """
    try:
        pts = np.asarray(points, dtype=float)
    except ValueError as exc:
        raise ValueError("ragged point data") from exc
    if pts.ndim == 1:
        pts = pts[:, None]
    if pts.ndim != 2:
        raise ValueError("points must be an (m, p) array")
    p = pts.shape[1]
    if isinstance(specs, AggregationSpec):
        specs = [specs] * p
    if len(specs) != p:
        raise ValueError(f"got {len(specs)} aggregation specs for {p} dimensions")
    if len({s.m for s in specs}) != 1:
        raise ValueError("per-dimension specs must share m")
    return Hypercube(tuple(aggregate(pts[:, j], s) for j, s in enumerate(specs)))


def reparam_centre_logrange(iv) -> tuple[float, float]:
    """``(centre, log half-range)`` of a non-degenerate interval."""
    lo, hi = as_pair(iv)
    if not lo < hi:
        raise ValueError(f"log half-range undefined for [{lo}, {hi}]")
    return 0.5 * (lo + hi), math.log(0.5 * (hi - lo))


def from_centre_logrange(c: float, t: float) -> Interval:
    r = math.exp(t)
    return Interval(c - r, c + r)


def as_pair(obs) -> tuple[float, float]:
    """Endpoints of an Interval or any ``(lower, upper)`` pair (reversed pairs allowed)."""
    if isinstance(obs, Interval):
        return obs.lower, obs.upper
    lo, hi = obs
    return float(lo), float(hi)
