"""Likelihoods for interval-valued observations.

Descriptive models put a density directly on the endpoints. Generative models
build the interval from ``m`` latent draws through order-statistic aggregation;
hierarchical generative models mix the i.i.d. generative density over a
global distribution of the local parameters.

Every evaluator works in log space. Reversed endpoints give ``-inf``;
degenerate observations (``lower == upper``) also give ``-inf`` and emit a
:class:`DegenerateObservationWarning`.
"""

from __future__ import annotations

import math
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy import integrate, special

from .distributions import Gaussian, ScalarFamily, Uniform
from .intervals import AggregationSpec, Interval, as_pair
from .quadrature import (
    QuadratureRule,
    TensorGrid,
    gauss_hermite_rule,
    gauss_laguerre_rule,
    tensor_grid,
)

__all__ = [
    "DegenerateObservationWarning",
    "DescriptiveModel",
    "IIDGenerativeModel",
    "UniformMixtureModel",
    "HierarchicalModel",
    "log_order_density",
    "containment_cdf_iid",
    "loglik_order_iid",
    "loglik_minmax_iid",
    "loglik_descriptive",
    "descriptive_logpdf",
    "loglik_hier_uniform_minmax",
    "hier_uniform_minmax_logpdf",
    "hier_uniform_minmax_integrand",
    "loglik_hier_general",
    "loglik_array",
    "dataset_loglik",
    "DEFAULT_NODES",
]

DEFAULT_NODES = 20
_LOG_HALF = math.log(0.5)
_LOG_2PI = math.log(2 * math.pi)


class DegenerateObservationWarning(RuntimeWarning):
    """An observation with ``lower == upper`` has zero density under continuous models."""


def _warn_degenerate():
    warnings.warn(
        "degenerate interval (lower == upper) has zero likelihood under continuous local families",
        DegenerateObservationWarning,
        stacklevel=3,
    )


def _check_pair(lo, hi) -> bool:
    """True if (lo, hi) is a strictly increasing pair; warns on ties."""
    if lo == hi:
        _warn_degenerate()
    return lo < hi


@lru_cache(maxsize=None)
def _laguerre(n):
    return gauss_laguerre_rule(n)


@lru_cache(maxsize=None)
def _hermite(n):
    return gauss_hermite_rule(n)


# ---------------------------------------------------------------------------
# model types


@dataclass(frozen=True)
class DescriptiveModel:
    """Bivariate normal on (centre, log half-range) of the interval."""

    mean_c: float = 0.0
    mean_t: float = 0.0
    var_c: float = 1.0
    var_t: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        if not (self.var_c > 0 and self.var_t > 0):
            raise ValueError("descriptive variances must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("descriptive correlation must lie in (-1, 1)")


@dataclass(frozen=True)
class IIDGenerativeModel:
    family: ScalarFamily
    agg: AggregationSpec


@dataclass(frozen=True)
class UniformMixtureModel:
    """Uniform latent data on ``[c - e^tau, c + e^tau]`` with independent normal c and tau.

    Min/max aggregation; evaluated by the one-dimensional Laguerre reduction.
    """

    mean_c: float = 0.0
    var_c: float = 1.0
    mean_t: float = 0.0
    var_t: float = 1.0

    def __post_init__(self):
        if not (self.var_c > 0 and self.var_t > 0):
            raise ValueError("global variances must be positive")

    @property
    def alpha(self):
        return (self.mean_c, self.var_c, self.mean_t, self.var_t)

    def limit(self) -> DescriptiveModel:
        """The descriptive model this mixture approaches as m grows."""
        return DescriptiveModel(self.mean_c, self.mean_t, self.var_c, self.var_t)


@dataclass(frozen=True)
class HierarchicalModel:
    """Mixture of i.i.d. generative models over a (correlated) Gaussian global density.

    Local parameters are transformed to the real line: ``uniform`` uses
    (centre, log half-range), ``gaussian`` uses (mean, log variance).
    ``u=None`` means ``u = m`` for each observation.
    """

    local: str
    mean: tuple = (0.0, 0.0)
    var: tuple = (1.0, 1.0)
    corr: float = 0.0
    l: int = 1
    u: int | None = None

    def __post_init__(self):
        if self.local not in ("uniform", "gaussian"):
            raise ValueError(f"unknown local family {self.local!r}")
        object.__setattr__(self, "mean", tuple(float(v) for v in self.mean))
        object.__setattr__(self, "var", tuple(float(v) for v in self.var))
        if len(self.mean) != 2 or len(self.var) != 2:
            raise ValueError("local families have two parameters")
        if not all(v > 0 for v in self.var):
            raise ValueError("global variances must be positive")
        if not abs(self.corr) < 1:
            raise ValueError("global correlation must lie in (-1, 1)")

    def cholesky(self) -> np.ndarray:
        s = np.sqrt(np.array(self.var))
        c = np.array([[1.0, self.corr], [self.corr, 1.0]])
        return np.linalg.cholesky(c * np.outer(s, s))

    def local_family(self, theta: np.ndarray) -> ScalarFamily:
        """Family with (vector) parameters from transformed local parameters ``theta[..., 2]``."""
        if self.local == "uniform":
            return Uniform.from_centre_logrange(theta[..., 0], theta[..., 1])
        return Gaussian(theta[..., 0], np.exp(theta[..., 1]))

    def agg(self, m: int) -> AggregationSpec:
        return AggregationSpec(self.l, m if self.u is None else self.u, m)

    def default_grid(self, n: int = DEFAULT_NODES) -> TensorGrid:
        return tensor_grid([_hermite(n), _hermite(n)])


# ---------------------------------------------------------------------------
# i.i.d. generative models


def log_order_density(family: ScalarFamily, lo, hi, m: int, l: int, u: int):
    """Log joint density of the l-th and u-th order statistics of m i.i.d. draws.

    Vectorised over ``lo``, ``hi`` and the family's parameters. Assumes
    ``lo < hi``; callers screen reversed or tied pairs.
    """
    out = (
        special.gammaln(m + 1)
        - special.gammaln(l)
        - special.gammaln(u - l)
        - special.gammaln(m - u + 1)
        + family.logpdf(lo)
        + family.logpdf(hi)
    )
    if l > 1:
        out = out + (l - 1) * family.logcdf(lo)
    if u - l > 1:
        out = out + (u - l - 1) * family.log_prob_between(lo, hi)
    if m > u:
        out = out + (m - u) * family.logsf(hi)
    return np.where(np.isnan(out), -np.inf, out)


def _agg_for(model: IIDGenerativeModel, m: int | None) -> AggregationSpec:
    agg = model.agg
    if m is None or m == agg.m:
        return agg
    if agg.is_minmax:
        return AggregationSpec.minmax(m)
    return AggregationSpec(agg.l, agg.u, m)


def containment_cdf_iid(model: IIDGenerativeModel, query) -> float:
    """P(lower >= query.lower and upper <= query.upper) for the generated interval.

    Exact multinomial sum over the number of latent points below the query
    (fewer than l) and above it (at most m - u).
    """
    lo, hi = as_pair(query)
    if not lo < hi:
        return 0.0
    fam, agg = model.family, model.agg
    p_below = float(fam.cdf(lo))
    p_above = float(fam.sf(hi))
    p_in = float(np.exp(fam.log_prob_between(lo, hi)))
    m = agg.m
    total = 0.0
    for j in range(agg.l):
        for k in range(m - agg.u + 1):
            coef = math.exp(math.lgamma(m + 1) - math.lgamma(j + 1) - math.lgamma(k + 1) - math.lgamma(m - j - k + 1))
            total += coef * p_below**j * p_above**k * p_in ** (m - j - k)
    return min(total, 1.0)


def loglik_order_iid(model: IIDGenerativeModel, obs, m: int | None = None) -> float:
    """Log density of ``[x_(l), x_(u)]`` at ``obs`` under the i.i.d. generative model."""
    lo, hi = as_pair(obs)
    if not _check_pair(lo, hi):
        return -math.inf
    agg = _agg_for(model, m)
    return float(log_order_density(model.family, lo, hi, agg.m, agg.l, agg.u))


def loglik_minmax_iid(model: IIDGenerativeModel, obs, m: int | None = None) -> float:
    """Log density of ``[min, max]``: log m(m-1) + (m-2) log(F(hi)-F(lo)) + log f(lo) + log f(hi)."""
    agg = _agg_for(model, m)
    if not agg.is_minmax:
        raise ValueError("min/max likelihood requires l=1 and u=m")
    lo, hi = as_pair(obs)
    if not _check_pair(lo, hi):
        return -math.inf
    fam, m = model.family, agg.m
    out = math.log(m * (m - 1)) + float(fam.logpdf(lo) + fam.logpdf(hi))
    if m > 2:
        out += (m - 2) * float(fam.log_prob_between(lo, hi))
    return -math.inf if math.isnan(out) else out


# ---------------------------------------------------------------------------
# descriptive models


def descriptive_logpdf(lo, hi, mean_c, mean_t, var_c, var_t, rho=0.0):
    """Vectorised log endpoint density of the (centre, log half-range) normal model."""
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        r = 0.5 * (hi - lo)
        t = np.log(r)
        zc = (0.5 * (lo + hi) - mean_c) / math.sqrt(var_c)
        zt = (t - mean_t) / math.sqrt(var_t)
        q = 1.0 - rho * rho
        quad = (zc * zc - 2 * rho * zc * zt + zt * zt) / q
        out = -0.5 * quad - _LOG_2PI - 0.5 * math.log(var_c * var_t * q) + _LOG_HALF - t
    return np.where(hi > lo, out, -np.inf)


def loglik_descriptive(model: DescriptiveModel, obs) -> float:
    """log of (1/2) g(centre, half-range), with g the density of (centre, half-range)."""
    lo, hi = as_pair(obs)
    if not _check_pair(lo, hi):
        return -math.inf
    return float(descriptive_logpdf(lo, hi, model.mean_c, model.mean_t, model.var_c, model.var_t, model.rho))


# ---------------------------------------------------------------------------
# hierarchical uniform mixture, one-dimensional Laguerre reduction


def hier_uniform_minmax_logpdf(lo, hi, m, mean_c, var_c, mean_t, var_t, rule: QuadratureRule):
    """Vectorised log density of the uniform-local hierarchical min/max model.

    With d = hi - lo, h = d/2 and z = m (tau - log h), the centre integrates out
    to a normal-cdf difference and the density becomes

        (m-1)/d^2 * int_0^inf e^{-z} phi(z/m + log h) [Phi(lo + h e^{z/m}) - Phi(hi - h e^{z/m})] dz,

    which the Laguerre rule evaluates with the ``e^{-z}`` factor as its weight.
    """
    if rule.kind != "laguerre":
        raise ValueError("the uniform mixture reduction needs a laguerre rule")
    lo = np.atleast_1d(np.asarray(lo, dtype=float))
    hi = np.atleast_1d(np.asarray(hi, dtype=float))
    m = np.broadcast_to(np.asarray(m, dtype=float), lo.shape)
    ok = hi > lo
    d = np.where(ok, hi - lo, 1.0)
    h = 0.5 * d
    centre = 0.5 * (lo + hi)
    s = rule.nodes[None, :] / m[:, None]
    # lo + h e^{s} = centre + h (e^{s} - 1); written this way to avoid cancellation at large m.
    spread = h[:, None] * np.expm1(s)
    tau = s + np.log(h)[:, None]
    log_phi_tau = -0.5 * ((tau - mean_t) ** 2 / var_t + _LOG_2PI + math.log(var_t))
    cen = Gaussian(mean_c, var_c)
    log_dphi = cen.log_prob_between(centre[:, None] - spread, centre[:, None] + spread)
    terms = np.log(rule.weights)[None, :] + log_phi_tau + log_dphi
    out = np.log(m - 1) - 2 * np.log(d) + special.logsumexp(terms, axis=1)
    return np.where(ok, out, -np.inf)


def hier_uniform_minmax_integrand(z, lo, hi, m, mean_c, var_c, mean_t, var_t):
    """The full z-integrand (including ``e^{-z}``) whose integral over z > 0 is the density."""
    z = np.asarray(z, dtype=float)
    d = hi - lo
    h = 0.5 * d
    with np.errstate(over="ignore"):
        spread = h * np.expm1(z / m)
    tau = z / m + math.log(h)
    log_phi_tau = -0.5 * ((tau - mean_t) ** 2 / var_t + _LOG_2PI + math.log(var_t))
    cen = Gaussian(mean_c, var_c)
    log_dphi = cen.log_prob_between(0.5 * (lo + hi) - spread, 0.5 * (lo + hi) + spread)
    with np.errstate(divide="ignore"):
        return (m - 1) / d**2 * np.exp(-z + log_phi_tau + log_dphi)


def loglik_hier_uniform_minmax(alpha, m: int, obs, rule: QuadratureRule | None = None) -> float:
    """Log likelihood of one interval under the uniform-local mixture.

    ``alpha = (mean_c, var_c, mean_t, var_t)``.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    lo, hi = as_pair(obs)
    if not _check_pair(lo, hi):
        return -math.inf
    rule = rule or _laguerre(DEFAULT_NODES)
    return float(hier_uniform_minmax_logpdf(lo, hi, m, *alpha, rule)[0])


# ---------------------------------------------------------------------------
# general hierarchical mixture on a tensor grid


def _grid_arrays(grid: TensorGrid):
    for r in grid.rules:
        if r.kind != "hermite":
            raise ValueError("hierarchical mixtures integrate over Gaussian axes: use hermite rules")
    nodes, w = next(grid.chunks(grid.size))
    return nodes, w


def _hier_general_logpdf(model: HierarchicalModel, lo, hi, m, grid: TensorGrid):
    nodes, w = _grid_arrays(grid)
    d = nodes.shape[1]
    theta = np.asarray(model.mean)[None, :] + (math.sqrt(2.0) * nodes) @ model.cholesky().T
    fam = model.local_family(theta)
    with np.errstate(divide="ignore"):
        logw = np.log(w) - 0.5 * d * math.log(math.pi)
    out = np.empty(len(lo))
    for i, (a, b, mi) in enumerate(zip(lo, hi, m)):
        if not a < b:
            out[i] = -math.inf
            continue
        agg = model.agg(int(mi))
        with np.errstate(divide="ignore", invalid="ignore"):
            ll = log_order_density(fam, a, b, agg.m, agg.l, agg.u)
        out[i] = special.logsumexp(logw + ll)
    return out


def _hier_adaptive_loglik(model: HierarchicalModel, lo, hi, m, tol):
    """Eq.-8-style mixture integral by adaptive 2-D quadrature in local-parameter space.

    At large m the local likelihood is a spike of width O(1/sqrt(m)) (gaussian)
    or O(1/m) next to the support edge (uniform), so the integration region is
    built around it rather than over the whole prior box.
    """
    agg = model.agg(int(m))
    mean = np.asarray(model.mean, dtype=float)
    sd = np.sqrt(np.asarray(model.var, dtype=float))
    rho = model.corr
    span = 12.0
    q = 1 - rho * rho
    log_norm = -_LOG_2PI - 0.5 * math.log(sd[0] ** 2 * sd[1] ** 2 * q)

    def log_post(t0, t1):
        fam = model.local_family(np.array([t0, t1]))
        with np.errstate(divide="ignore", invalid="ignore", over="ignore"):
            ll = float(log_order_density(fam, lo, hi, agg.m, agg.l, agg.u))
        if not ll > -math.inf:
            return -math.inf
        z0, z1 = (t0 - mean[0]) / sd[0], (t1 - mean[1]) / sd[1]
        return ll - 0.5 * (z0 * z0 - 2 * rho * z0 * z1 + z1 * z1) / q + log_norm

    if model.local == "uniform":
        return _adaptive_uniform(log_post, lo, hi, m, mean, sd, span, tol)
    return _adaptive_gaussian(log_post, lo, hi, agg, mean, sd, span, tol)


def _adaptive_uniform(log_post, lo, hi, m, mean, sd, span, tol):
    # support of the local density: hi - e^t1 <= c <= lo + e^t1, needing t1 >= log((hi - lo) / 2)
    t_edge = math.log(0.5 * (hi - lo))
    t1_lo, t1_hi = max(mean[1] - span * sd[1], t_edge), mean[1] + span * sd[1]
    if t1_lo >= t1_hi:
        return -math.inf
    c_lo = lambda t1: hi - math.exp(t1)  # noqa: E731
    c_hi = lambda t1: lo + math.exp(t1)  # noqa: E731
    # mass hugs the edge within O(1/m); break the outer axis geometrically away from it
    breaks = [t1_lo] + [t_edge + k / m for k in (1, 4, 16, 64, 256) if t_edge + k / m > t1_lo]
    breaks = sorted(b for b in set(breaks) if b < t1_hi) + [t1_hi]
    shift = -math.inf
    for a, b in zip(breaks[:-1], breaks[1:]):
        for t1 in np.linspace(a, b, 12)[1:-1]:
            for c in np.linspace(c_lo(t1), c_hi(t1), 21)[1:-1]:
                shift = max(shift, log_post(c, t1))
    if shift == -math.inf:
        return -math.inf

    def f(c, t1):
        v = log_post(c, t1)
        return math.exp(v - shift) if v > -math.inf else 0.0

    total = 0.0
    for a, b in zip(breaks[:-1], breaks[1:]):
        val, _ = integrate.dblquad(f, a, b, c_lo, c_hi, epsabs=tol, epsrel=tol)
        total += val
    return math.log(total) + shift if total > 0 else -math.inf


def _adaptive_gaussian(log_post, lo, hi, agg, mean, sd, span, tol):
    from scipy import optimize

    starts = [mean.copy()]
    # large-m peak: the (l, u) order statistics sit at the matching normal quantiles
    q_lo, q_hi = special.ndtri([agg.l / (agg.m + 1), agg.u / (agg.m + 1)])
    if q_hi > q_lo:
        s = (hi - lo) / (q_hi - q_lo)
        starts.append(np.array([lo - s * q_lo, 2 * math.log(s)]))
    for t1 in np.linspace(mean[1] - 6 * sd[1], mean[1] + 6 * sd[1], 13):
        for t0 in np.linspace(mean[0] - 6 * sd[0], mean[0] + 6 * sd[0], 13):
            starts.append(np.array([t0, t1]))
    vals = [log_post(*x) for x in starts]
    best = starts[int(np.argmax(vals))]
    neg = lambda x: -log_post(*x) if np.all(np.isfinite(x)) else math.inf  # noqa: E731
    res = optimize.minimize(neg, best, method="Nelder-Mead", options={"xatol": 1e-9, "fatol": 1e-12, "maxiter": 4000})
    mode = res.x if res.fun <= -max(vals) else best
    shift = log_post(*mode)
    if shift == -math.inf:
        return -math.inf

    # Laplace frame around the mode; fall back to the prior scales if the curvature is unusable.
    frame = np.diag(sd)
    h = 1e-4 * sd
    H = np.empty((2, 2))
    for i in range(2):
        for j in range(2):
            ei, ej = np.eye(2)[i] * h[i], np.eye(2)[j] * h[j]
            H[i, j] = (
                log_post(*(mode + ei + ej)) - log_post(*(mode + ei - ej)) - log_post(*(mode - ei + ej)) + log_post(*(mode - ei - ej))
            ) / (4 * h[i] * h[j])
    if np.all(np.isfinite(H)):
        try:
            cov = np.linalg.inv(-0.5 * (H + H.T))
            L = np.linalg.cholesky(cov)
            if np.all(np.sqrt(np.diag(cov)) < 2 * sd):
                frame = L
        except np.linalg.LinAlgError:
            pass

    def f(z0, z1):
        x = mode + frame @ np.array([z0, z1])
        v = log_post(*x)
        return math.exp(v - shift) if v > -math.inf else 0.0

    K = span
    val, _ = integrate.dblquad(f, -K, K, -K, K, epsabs=tol, epsrel=tol)
    val *= abs(np.linalg.det(frame))
    return math.log(val) + shift if val > 0 else -math.inf


def loglik_hier_general(
    model: HierarchicalModel,
    obs,
    m: int,
    grid: TensorGrid | None = None,
    method: str = "grid",
    tol: float = 1e-10,
) -> float:
    """Log likelihood of one interval under a hierarchical mixture of i.i.d. generative models.

    ``method="grid"`` (default) sums weight x i.i.d. order-statistic density over
    a Gauss-Hermite tensor grid mapped through the Cholesky factor of the global
    covariance. This is accurate for smooth local families (gaussian).
    ``method="adaptive"`` integrates the same mixture with adaptive 2-D
    quadrature and respects the support edge of uniform local families, for
    which Hermite grids converge very slowly.
    """
    lo, hi = as_pair(obs)
    if not _check_pair(lo, hi):
        return -math.inf
    if method == "adaptive":
        return _hier_adaptive_loglik(model, lo, hi, m, tol)
    if method != "grid":
        raise ValueError(f"unknown method {method!r}")
    grid = grid or model.default_grid()
    return float(_hier_general_logpdf(model, [lo], [hi], [m], grid)[0])


# ---------------------------------------------------------------------------
# dataset sums


_BLOCK = 64


def loglik_array(model, data, **options) -> np.ndarray:
    """Per-observation log likelihoods for ``data = [(obs, m), ...]``.

    ``options``: ``rule`` (laguerre, uniform mixture), ``grid`` (hierarchical),
    ``nodes`` (credit models).
    """
    from . import hypercube

    if isinstance(model, (hypercube.CreditModelSpec, hypercube.CreditDescriptiveModel)):
        return hypercube.credit_loglik_array(model, data, **options)
    if isinstance(model, DescriptiveModel):
        lo, hi = _endpoints(data)
        _screen(lo, hi)
        return descriptive_logpdf(lo, hi, model.mean_c, model.mean_t, model.var_c, model.var_t, model.rho)
    if isinstance(model, UniformMixtureModel):
        lo, hi = _endpoints(data)
        _screen(lo, hi)
        ms = np.array([m for _, m in data], dtype=float)
        rule = options.get("rule") or _laguerre(options.get("n_nodes", DEFAULT_NODES))
        return hier_uniform_minmax_logpdf(lo, hi, ms, *model.alpha, rule)
    if isinstance(model, HierarchicalModel):
        lo, hi = _endpoints(data)
        _screen(lo, hi)
        grid = options.get("grid") or model.default_grid(options.get("n_nodes", DEFAULT_NODES))
        return _hier_general_logpdf(model, lo, hi, [m for _, m in data], grid)
    if isinstance(model, IIDGenerativeModel):
        return np.array([loglik_order_iid(model, obs, m) for obs, m in data])
    raise TypeError(f"unsupported model type {type(model).__name__}")


def _endpoints(data):
    pairs = np.array([as_pair(obs) for obs, _ in data], dtype=float).reshape(-1, 2)
    return pairs[:, 0], pairs[:, 1]


def _screen(lo, hi):
    if np.any(lo == hi):
        _warn_degenerate()


def dataset_loglik(model, data, workers: int = 1, **options) -> float:
    """Sum of per-observation log likelihoods.

    Observations are split into fixed blocks of 64; block sums are added in
    order, so the total is bitwise identical for any ``workers``.
    """
    data = list(data)
    if not data:
        raise ValueError("dataset is empty")
    blocks = [data[i : i + _BLOCK] for i in range(0, len(data), _BLOCK)]

    def block_sum(block):
        return float(np.sum(loglik_array(model, block, **options)))

    if workers > 1 and len(blocks) > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            partial = list(pool.map(block_sum, blocks))
    else:
        partial = [block_sum(b) for b in blocks]
    total = 0.0
    for v in partial:
        total += v
    return -math.inf if math.isnan(total) else total
