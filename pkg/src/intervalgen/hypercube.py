"""Rectangle-valued (p = 2) likelihoods.

The hierarchical model has conditionally independent Gaussian margins given
local parameters ``(mu1, mu2, log s1^2, log s2^2)``, with

    (mu1, mu2)  ~ N2(theta1, theta2, lambda1^2, lambda2^2, rho_mu)
    log s_j^2   ~ N(eta_j, epsilon_j^2)

The 4-D Gauss-Hermite tensor sum factorises: the log-variance axes only touch
their own margin, so the sum over ``n^4`` nodes is computed as nested sums of
sizes ``n^2`` and ``n^3`` without changing its value.
:func:`loglik_hypercube_hier_bruteforce` streams the full tensor grid and is
kept as the reference path.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, fields

import numpy as np
from scipy import integrate, special

from .distributions import Gaussian
from .intervals import Hypercube, as_pair
from .quadrature import TensorGrid, gauss_hermite_rule, tensor_grid

__all__ = [
    "CreditModelSpec",
    "CreditDescriptiveModel",
    "loglik_hypercube_hier",
    "loglik_hypercube_hier_bruteforce",
    "loglik_credit_descriptive",
    "credit_loglik_array",
    "credit_node_logliks",
    "loglik_bivariate_minmax_iid",
    "box_probability",
    "PARAM_NAMES",
]

PARAM_NAMES = (
    "theta1",
    "lambda1_sq",
    "theta2",
    "lambda2_sq",
    "rho_mu",
    "eta1",
    "epsilon1_sq",
    "eta2",
    "epsilon2_sq",
)
_LOG_2PI = math.log(2 * math.pi)


def _validate(spec):
    for name in ("lambda1_sq", "lambda2_sq", "epsilon1_sq", "epsilon2_sq"):
        if not getattr(spec, name) > 0:
            raise ValueError(f"{name} must be positive")
    if not abs(spec.rho_mu) < 1:
        raise ValueError("rho_mu must lie in (-1, 1)")


@dataclass(frozen=True)
class CreditModelSpec:
    """Global parameters of the hierarchical generative rectangle model."""

    theta1: float
    lambda1_sq: float
    theta2: float
    lambda2_sq: float
    rho_mu: float
    eta1: float
    epsilon1_sq: float
    eta2: float
    epsilon2_sq: float

    def __post_init__(self):
        _validate(self)

    def as_vector(self):
        return np.array([getattr(self, f.name) for f in fields(self)])


@dataclass(frozen=True)
class CreditDescriptiveModel:
    """Descriptive rectangle model on per-margin (centre, log half-range).

    Centres are bivariate normal ``N2(theta, lambda^2, rho_mu)``; the log
    half-ranges are independent ``N(eta_j, epsilon_j^2)``.
    """

    theta1: float
    lambda1_sq: float
    theta2: float
    lambda2_sq: float
    rho_mu: float
    eta1: float
    epsilon1_sq: float
    eta2: float
    epsilon2_sq: float

    def __post_init__(self):
        _validate(self)

    def as_vector(self):
        return np.array([getattr(self, f.name) for f in fields(self)])


def _rect_arrays(data):
    rows = []
    for obs, m in data:
        if isinstance(obs, Hypercube):
            (a, b), (c, d) = as_pair(obs[0]), as_pair(obs[1])
        else:
            a, b, c, d = np.ravel(obs)
        rows.append((a, b, c, d, m))
    arr = np.array(rows, dtype=float).reshape(-1, 5)
    return arr.T


def _minmax_gauss_logpdf(lo, hi, m, mean, var):
    """Vectorised log min/max density for Gaussian latent data."""
    fam = Gaussian(mean, var)
    with np.errstate(invalid="ignore", divide="ignore"):
        out = np.log(m * (m - 1)) + fam.logpdf(lo) + fam.logpdf(hi)
        out = out + np.where(m > 2, (m - 2) * fam.log_prob_between(lo, hi), 0.0)
    return np.where(np.isnan(out), -np.inf, out)


def _node_arrays(spec: CreditModelSpec, n: int):
    rule = gauss_hermite_rule(n)
    x = math.sqrt(2.0) * rule.nodes
    logpw = np.log(rule.weights) - 0.5 * math.log(math.pi)
    s1, s2 = math.sqrt(spec.lambda1_sq), math.sqrt(spec.lambda2_sq)
    r = spec.rho_mu
    mu1 = spec.theta1 + s1 * x  # (i,)
    mu2 = spec.theta2 + s2 * (r * x[:, None] + math.sqrt(1 - r * r) * x[None, :])  # (i, j)
    lv1 = spec.eta1 + math.sqrt(spec.epsilon1_sq) * x  # (k,)
    lv2 = spec.eta2 + math.sqrt(spec.epsilon2_sq) * x  # (l,)
    return logpw, mu1, mu2, lv1, lv2


def credit_node_logliks(spec: CreditModelSpec, lo1, hi1, lo2, hi2, m, n: int):
    """Per-margin log densities at every node.

    Returns ``(logpw, ll1[g, i, k], ll2[g, i, j, l])`` where axis ``i`` and ``j``
    index the two standard-normal axes of (mu1, mu2) and ``k``, ``l`` the
    log-variance axes.
    """
    logpw, mu1, mu2, lv1, lv2 = _node_arrays(spec, n)
    lo1, hi1, lo2, hi2, m = (np.asarray(v, dtype=float) for v in (lo1, hi1, lo2, hi2, m))
    ll1 = _minmax_gauss_logpdf(
        lo1[:, None, None], hi1[:, None, None], m[:, None, None], mu1[None, :, None], np.exp(lv1)[None, None, :]
    )
    ll2 = _minmax_gauss_logpdf(
        lo2[:, None, None, None],
        hi2[:, None, None, None],
        m[:, None, None, None],
        mu2[None, :, :, None],
        np.exp(lv2)[None, None, None, :],
    )
    return logpw, ll1, ll2


def _credit_generative_logpdf(spec, lo1, hi1, lo2, hi2, m, n):
    logpw, ll1, ll2 = credit_node_logliks(spec, lo1, hi1, lo2, hi2, m, n)
    a1 = special.logsumexp(ll1 + logpw[None, None, :], axis=2)  # (g, i)
    a2 = special.logsumexp(ll2 + logpw[None, None, None, :], axis=3)  # (g, i, j)
    tot = a1[:, :, None] + a2 + logpw[None, :, None] + logpw[None, None, :]
    out = special.logsumexp(tot.reshape(len(lo1), -1), axis=1)
    ok = (hi1 > lo1) & (hi2 > lo2)
    return np.where(ok, out, -np.inf)


def _credit_descriptive_logpdf(spec, lo1, hi1, lo2, hi2):
    with np.errstate(divide="ignore", invalid="ignore"):
        r1, r2 = 0.5 * (hi1 - lo1), 0.5 * (hi2 - lo2)
        t1, t2 = np.log(r1), np.log(r2)
        z1 = (0.5 * (lo1 + hi1) - spec.theta1) / math.sqrt(spec.lambda1_sq)
        z2 = (0.5 * (lo2 + hi2) - spec.theta2) / math.sqrt(spec.lambda2_sq)
        q = 1 - spec.rho_mu**2
        out = (
            -0.5 * (z1 * z1 - 2 * spec.rho_mu * z1 * z2 + z2 * z2) / q
            - _LOG_2PI
            - 0.5 * math.log(spec.lambda1_sq * spec.lambda2_sq * q)
            + Gaussian(spec.eta1, spec.epsilon1_sq).logpdf(t1)
            + Gaussian(spec.eta2, spec.epsilon2_sq).logpdf(t2)
            - 2 * math.log(2.0)
            - t1
            - t2
        )
    ok = (hi1 > lo1) & (hi2 > lo2)
    return np.where(ok, out, -np.inf)


def credit_loglik_array(spec, data, nodes: int = 20, **_):
    """Per-rectangle log likelihoods for ``data = [(rect, m), ...]``."""
    lo1, hi1, lo2, hi2, m = _rect_arrays(data)
    if isinstance(spec, CreditDescriptiveModel):
        return _credit_descriptive_logpdf(spec, lo1, hi1, lo2, hi2)
    return _credit_generative_logpdf(spec, lo1, hi1, lo2, hi2, m, nodes)


def loglik_hypercube_hier(spec: CreditModelSpec, obs, m: int, nodes: int = 20) -> float:
    """Log likelihood of one rectangle under the hierarchical generative model."""
    return float(credit_loglik_array(spec, [(obs, m)], nodes=nodes)[0])


def loglik_credit_descriptive(spec: CreditDescriptiveModel, obs) -> float:
    return float(credit_loglik_array(spec, [(obs, 2)])[0])


def loglik_hypercube_hier_bruteforce(spec: CreditModelSpec, obs, m: int, grid: TensorGrid | None = None) -> float:
    """Same integral as :func:`loglik_hypercube_hier`, streamed over the full 4-axis grid.

    The correlated mean axes use the Cholesky map
    ``mu2 = theta2 + lambda2 (rho z1 + sqrt(1 - rho^2) z2)`` of standard normals.
    """
    grid = grid or tensor_grid([gauss_hermite_rule(20)] * 4)
    if grid.ndim != 4:
        raise ValueError("credit model integrates over four local parameters")
    lo1, hi1, lo2, hi2, _ = _rect_arrays([(obs, m)])[:, 0]
    if not (lo1 < hi1 and lo2 < hi2):
        return -math.inf
    r = spec.rho_mu
    chol = np.array([[math.sqrt(spec.lambda1_sq), 0.0], [r * math.sqrt(spec.lambda2_sq), math.sqrt(1 - r * r) * math.sqrt(spec.lambda2_sq)]])
    running = -math.inf
    for z, w in grid.chunks():
        x = math.sqrt(2.0) * z
        mu = np.array([spec.theta1, spec.theta2]) + x[:, :2] @ chol.T
        lv1 = spec.eta1 + math.sqrt(spec.epsilon1_sq) * x[:, 2]
        lv2 = spec.eta2 + math.sqrt(spec.epsilon2_sq) * x[:, 3]
        ll = _minmax_gauss_logpdf(lo1, hi1, m, mu[:, 0], np.exp(lv1)) + _minmax_gauss_logpdf(
            lo2, hi2, m, mu[:, 1], np.exp(lv2)
        )
        chunk = special.logsumexp(np.log(w) - 2 * math.log(math.pi) + ll)
        running = np.logaddexp(running, chunk)
    return float(running)


# ---------------------------------------------------------------------------
# full bivariate i.i.d. min/max likelihood


def box_probability(local, lo1, hi1, lo2, hi2) -> float:
    """P(latent point in [lo1, hi1] x [lo2, hi2]) by inclusion-exclusion of the joint cdf."""
    F = local.cdf
    return F(hi1, hi2) - F(lo1, hi2) - F(hi1, lo2) + F(lo1, lo2)


def _edge(local, fixed, lo, hi, axis, tol):
    if axis == 0:
        fn = lambda y: float(local.pdf(y, fixed))  # noqa: E731
    else:
        fn = lambda y: float(local.pdf(fixed, y))  # noqa: E731
    val, _ = integrate.quad(fn, lo, hi, epsabs=tol, epsrel=1e-12, limit=1000)
    return val


def loglik_bivariate_minmax_iid(local, m: int, obs, tol: float = 1e-10) -> float:
    """Log likelihood of a rectangle built from min/max per margin of ``m`` i.i.d. bivariate points.

    ``local`` is any bivariate family exposing ``pdf(x1, x2)`` and ``cdf(x1, x2)``
    (e.g. :class:`~intervalgen.distributions.BivariateGaussian`). The density is the sum of three cases:
    the four edges of the rectangle touched by four, three or two distinct
    latent points. Edge integrals use adaptive Gauss-Kronrod quadrature.
    """
    if m < 2:
        raise ValueError("m must be >= 2")
    if isinstance(obs, Hypercube):
        (lo1, hi1), (lo2, hi2) = as_pair(obs[0]), as_pair(obs[1])
    else:
        lo1, hi1, lo2, hi2 = (float(v) for v in np.ravel(obs))
    if not (lo1 < hi1 and lo2 < hi2):
        return -math.inf
    P = box_probability(local, lo1, hi1, lo2, hi2)
    # edges: bottom (x2 = lo2), top (x2 = hi2), left (x1 = lo1), right (x1 = hi1)
    e_bot = _edge(local, lo2, lo1, hi1, 0, tol)
    e_top = _edge(local, hi2, lo1, hi1, 0, tol)
    e_left = _edge(local, lo1, lo2, hi2, 1, tol)
    e_right = _edge(local, hi1, lo2, hi2, 1, tol)
    f_ll = float(local.pdf(lo1, lo2))
    f_lh = float(local.pdf(lo1, hi2))
    f_hl = float(local.pdf(hi1, lo2))
    f_hh = float(local.pdf(hi1, hi2))

    total = 0.0
    if m >= 4:
        total += m * (m - 1) * (m - 2) * (m - 3) * P ** (m - 4) * e_bot * e_top * e_left * e_right
    if m >= 3:
        three = (
            f_ll * e_top * e_right
            + f_lh * e_bot * e_right
            + f_hl * e_top * e_left
            + f_hh * e_bot * e_left
        )
        total += m * (m - 1) * (m - 2) * P ** (m - 3) * three
    total += m * (m - 1) * P ** (m - 2) * (f_ll * f_hh + f_lh * f_hl)
    return math.log(total) if total > 0 else -math.inf

