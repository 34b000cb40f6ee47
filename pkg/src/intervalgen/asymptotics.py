"""Large-m limits of hierarchical generative interval models and convergence diagnostics."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import special

from .intervals import as_pair
from .likelihood import (
    DescriptiveModel,
    HierarchicalModel,
    UniformMixtureModel,
    _hier_general_logpdf,
    _laguerre,
    descriptive_logpdf,
    hier_uniform_minmax_logpdf,
    loglik_hier_general,
    DEFAULT_NODES,
)

__all__ = [
    "LimitSpec",
    "base_quantile",
    "limiting_density_uniform",
    "solve_interval_identification",
    "limiting_density_general",
    "convergence_diagnostic",
    "sup_gaps",
]


def base_quantile(family: str, p):
    """Standardised quantile Q0: ``ndtri`` for gaussian, ``2p - 1`` for uniform on (-1, 1)."""
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)):
        raise ValueError("quantile fractions must lie in (0, 1)")
    if family == "gaussian":
        return special.ndtri(p)
    if family == "uniform":
        return 2.0 * p - 1.0
    raise ValueError(f"unknown location-scale family {family!r}")


def _density_callable(pi):
    if isinstance(pi, DescriptiveModel):
        return lambda a, b: float(
            np.exp(descriptive_logpdf(a, b, pi.mean_c, pi.mean_t, pi.var_c, pi.var_t, pi.rho))
        )
    return pi


def limiting_density_uniform(pi, obs) -> float:
    """Large-m limit of the uniform-local mixture density: the mixing density of (a, b) itself.

    ``pi`` is a callable ``pi(a, b)`` or a DescriptiveModel, which defines the
    law of ``(a, b) = (c - e^t, c + e^t)``. Returns 0 when ``lo > hi``.
    """
    lo, hi = as_pair(obs)
    if lo > hi:
        return 0.0
    return float(_density_callable(pi)(lo, hi))


def solve_interval_identification(family: str, obs, p_lo: float, p_hi: float) -> tuple[float, float]:
    """Location and scale for which the p_lo and p_hi quantiles equal the interval endpoints."""
    lo, hi = as_pair(obs)
    q_lo, q_hi = (float(v) for v in base_quantile(family, [p_lo, p_hi]))
    if q_hi == q_lo:
        raise ValueError("identification fails: base quantiles coincide")
    tau = (hi - lo) / (q_hi - q_lo)
    mu = lo - tau * q_lo
    return mu, tau


@dataclass(frozen=True)
class LimitSpec:
    """Location-scale local family, quantile fractions and global density ``pi(mu, tau)``.

    ``global_density`` may be a callable on (location, scale) or a
    DescriptiveModel, read as a bivariate normal on (location, log scale).
    """

    family: str
    p_lo: float
    p_hi: float
    global_density: object

    def __post_init__(self):
        if not 0 < self.p_lo < self.p_hi < 1:
            raise ValueError("need 0 < p_lo < p_hi < 1")
        base_quantile(self.family, [self.p_lo, self.p_hi])

    def pi(self, mu: float, tau: float) -> float:
        g = self.global_density
        if isinstance(g, DescriptiveModel):
            if tau <= 0:
                return 0.0
            t = math.log(tau)
            z1 = (mu - g.mean_c) / math.sqrt(g.var_c)
            z2 = (t - g.mean_t) / math.sqrt(g.var_t)
            q = 1 - g.rho**2
            quad = (z1 * z1 - 2 * g.rho * z1 * z2 + z2 * z2) / q
            dens = math.exp(-0.5 * quad) / (2 * math.pi * math.sqrt(g.var_c * g.var_t * q))
            return dens / tau
        return float(g(mu, tau))

    def jacobian(self) -> np.ndarray:
        """d(lower, upper) / d(mu, tau) for ``Q(p) = mu + tau Q0(p)``."""
        q = base_quantile(self.family, [self.p_lo, self.p_hi])
        return np.array([[1.0, q[0]], [1.0, q[1]]])


def limiting_density_general(spec: LimitSpec, obs) -> float:
    """``pi(mu*, tau*) / |det J|`` with (mu*, tau*) solving the two quantile equations."""
    lo, hi = as_pair(obs)
    if lo > hi:
        return 0.0
    mu, tau = solve_interval_identification(spec.family, (lo, hi), spec.p_lo, spec.p_hi)
    return spec.pi(mu, tau) / abs(np.linalg.det(spec.jacobian()))


def _hier_limit_spec(model: HierarchicalModel, p_lo, p_hi) -> LimitSpec:
    """Global density on (location, scale) implied by the Gaussian on transformed local parameters."""
    mean, var, rho = model.mean, model.var, model.corr
    # uniform: theta2 = log(half-range); gaussian: theta2 = log(sd^2) = 2 log(tau)
    k = 1.0 if model.local == "uniform" else 2.0

    def pi(mu, tau):
        if tau <= 0:
            return 0.0
        t = k * math.log(tau)
        z1 = (mu - mean[0]) / math.sqrt(var[0])
        z2 = (t - mean[1]) / math.sqrt(var[1])
        q = 1 - rho**2
        quad = (z1 * z1 - 2 * rho * z1 * z2 + z2 * z2) / q
        return math.exp(-0.5 * quad) / (2 * math.pi * math.sqrt(var[0] * var[1] * q)) * k / tau

    return LimitSpec(model.local, p_lo, p_hi, pi)


def convergence_diagnostic(
    model,
    obs_grid: Sequence,
    m_list: Sequence[int],
    nodes: int = DEFAULT_NODES,
    p_lo: float | None = None,
    p_hi: float | None = None,
    method: str = "adaptive",
) -> list[dict]:
    """Finite-m density versus its large-m limit at each grid interval.

    ``model`` is a UniformMixtureModel (min/max aggregation, limit is the
    descriptive density) or a HierarchicalModel with order fractions
    ``p_lo``/``p_hi``, using ``l = round(p_lo (m+1))`` and
    ``u = round(p_hi (m+1))``. Rows carry ``m, lower, upper,
    finite_m_density, limit_density, abs_gap``; a final ``m = inf`` row per
    grid point has gap 0.

    Hierarchical models default to ``method="adaptive"``: at large m the
    local likelihood is too sharply peaked for a fixed Hermite grid.
    """
    pairs = [as_pair(o) for o in obs_grid]
    lo = np.array([p[0] for p in pairs])
    hi = np.array([p[1] for p in pairs])
    if isinstance(model, UniformMixtureModel):
        limit = np.exp(descriptive_logpdf(lo, hi, model.mean_c, model.mean_t, model.var_c, model.var_t))

        def finite(m):
            return np.exp(hier_uniform_minmax_logpdf(lo, hi, m, *model.alpha, _laguerre(nodes)))

    elif isinstance(model, HierarchicalModel):
        if p_lo is None or p_hi is None:
            raise ValueError("hierarchical diagnostics need order fractions p_lo and p_hi")
        spec = _hier_limit_spec(model, p_lo, p_hi)
        limit = np.array([limiting_density_general(spec, p) for p in pairs])
        grid = model.default_grid(nodes)

        def finite(m):
            l = max(1, int(round(p_lo * (m + 1))))
            u = min(m, max(l + 1, int(round(p_hi * (m + 1)))))
            mm = HierarchicalModel(model.local, model.mean, model.var, model.corr, l, u)
            if method == "adaptive":
                return np.exp([loglik_hier_general(mm, p, m, method="adaptive") for p in pairs])
            return np.exp(_hier_general_logpdf(mm, lo, hi, [m] * len(lo), grid))

    else:
        raise TypeError(f"no limit available for {type(model).__name__}")

    rows = []
    for m in m_list:
        f = finite(m)
        for a, b, fv, lv in zip(lo, hi, f, limit):
            rows.append(
                {"m": m, "lower": a, "upper": b, "finite_m_density": float(fv), "limit_density": float(lv), "abs_gap": float(abs(fv - lv))}
            )
    for a, b, lv in zip(lo, hi, limit):
        rows.append({"m": math.inf, "lower": a, "upper": b, "finite_m_density": float(lv), "limit_density": float(lv), "abs_gap": 0.0})
    return rows


def sup_gaps(rows: list[dict]) -> dict:
    """Maximum absolute gap per m."""
    out: dict = {}
    for r in rows:
        out[r["m"]] = max(out.get(r["m"], 0.0), r["abs_gap"])
    return out
