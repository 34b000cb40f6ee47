"""Parametric scalar and bivariate families used as local latent-data models.

Families broadcast over their parameters: ``Gaussian(mean=np.array([...]), var=...)``
is a vector of families, which is how the hierarchical likelihoods evaluate
every quadrature node in one call.

Random numbers come from numpy's PCG64 bit generator (O'Neill's permuted
congruential generator, 128-bit state, 64-bit output). Streams for workers and
replicates are derived with ``numpy.random.SeedSequence`` so that a master seed
plus an index always reproduces the same stream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import numpy as np
from scipy import integrate, special

__all__ = [
    "ScalarFamily",
    "Uniform",
    "Gaussian",
    "BivariateGaussian",
    "make_rng",
    "child_seed",
    "family_from_dict",
    "pdf",
    "cdf",
    "quantile",
    "sample",
]

_LOG_2PI = math.log(2.0 * math.pi)


def make_rng(seed) -> np.random.Generator:
    """PCG64 generator for an integer seed (or a SeedSequence)."""
    return np.random.Generator(np.random.PCG64(seed))


def child_seed(master: int, index: int) -> np.random.SeedSequence:
    """Deterministic per-worker / per-replicate seed derived from a master seed."""
    return np.random.SeedSequence([int(master), int(index)])


def _log_diff_exp(a, b):
    """log(exp(a) - exp(b)) for a >= b, elementwise."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    with np.errstate(invalid="ignore", divide="ignore", over="ignore"):
        out = a + np.log(-np.expm1(b - a))
    return np.where(a == -np.inf, -np.inf, out)


class ScalarFamily:
    """Base class for univariate local families.

    Subclasses provide ``logpdf``, ``logcdf``, ``logsf``, ``log_prob_between``,
    ``quantile`` and ``_draw``. The non-log methods are derived here.
    """

    name: str = ""

    def pdf(self, x):
        return np.exp(self.logpdf(x))

    def cdf(self, x):
        return np.exp(self.logcdf(x))

    def sf(self, x):
        return np.exp(self.logsf(x))

    def sample(self, n: int, seed=None, rng: np.random.Generator | None = None):
        """Draw ``n`` i.i.d. values; deterministic for a fixed ``seed``."""
        if n < 1:
            raise ValueError("n must be >= 1")
        if rng is None:
            rng = make_rng(seed)
        return self._draw(rng, n)

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True, eq=False)
class Uniform(ScalarFamily):
    """Uniform distribution on ``[a, b]``.

    ``a == b`` is accepted as a point mass for sampling; density evaluation
    raises in that case.
    """

    a: Any = 0.0
    b: Any = 1.0
    name = "uniform"

    def __post_init__(self):
        a = np.asarray(self.a, dtype=float)
        b = np.asarray(self.b, dtype=float)
        if not (np.all(np.isfinite(a)) and np.all(np.isfinite(b))):
            raise ValueError("uniform endpoints must be finite")
        if np.any(a > b):
            raise ValueError(f"uniform requires a <= b, got a={self.a}, b={self.b}")
        object.__setattr__(self, "a", a if a.ndim else float(a))
        object.__setattr__(self, "b", b if b.ndim else float(b))

    @classmethod
    def from_centre_logrange(cls, c, tau):
        """Uniform on ``[c - exp(tau), c + exp(tau)]``."""
        r = np.exp(tau)
        return cls(np.subtract(c, r), np.add(c, r))

    def _check_density(self):
        if np.any(np.equal(self.a, self.b)):
            raise ValueError("degenerate uniform (a == b) has no density")

    @property
    def width(self):
        return np.subtract(self.b, self.a)

    def logpdf(self, x):
        self._check_density()
        x = np.asarray(x, dtype=float)
        inside = (x >= self.a) & (x <= self.b)
        with np.errstate(divide="ignore"):
            return np.where(inside, -np.log(self.width), -np.inf)

    def logcdf(self, x):
        self._check_density()
        p = np.clip((np.asarray(x, dtype=float) - self.a) / self.width, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            return np.log(p)

    def logsf(self, x):
        self._check_density()
        p = np.clip((self.b - np.asarray(x, dtype=float)) / self.width, 0.0, 1.0)
        with np.errstate(divide="ignore"):
            return np.log(p)

    def log_prob_between(self, lo, hi):
        """log P(lo < X <= hi) for lo <= hi."""
        self._check_density()
        top = np.minimum(np.asarray(hi, dtype=float), self.b)
        bot = np.maximum(np.asarray(lo, dtype=float), self.a)
        with np.errstate(divide="ignore"):
            return np.log(np.clip(top - bot, 0.0, None) / self.width)

    def quantile(self, p):
        p = _check_prob(p)
        return np.add(self.a, np.multiply(p, self.width))

    def _draw(self, rng, n):
        return rng.uniform(self.a, self.b, size=n)

    def to_dict(self):
        return {"family": "uniform", "a": float(self.a), "b": float(self.b)}


@dataclass(frozen=True, eq=False)
class Gaussian(ScalarFamily):
    """Normal distribution parameterised by mean and variance."""

    mean: Any = 0.0
    var: Any = 1.0
    name = "gaussian"

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float)
        var = np.asarray(self.var, dtype=float)
        if not np.all(var > 0) or not np.all(np.isfinite(var)):
            raise ValueError(f"gaussian variance must be positive and finite, got {self.var}")
        object.__setattr__(self, "mean", mean if mean.ndim else float(mean))
        object.__setattr__(self, "var", var if var.ndim else float(var))

    @property
    def sd(self):
        return np.sqrt(self.var)

    def _z(self, x):
        return (np.asarray(x, dtype=float) - self.mean) / self.sd

    def logpdf(self, x):
        z = self._z(x)
        return -0.5 * (z * z + _LOG_2PI) - 0.5 * np.log(self.var)

    def logcdf(self, x):
        return special.log_ndtr(self._z(x))

    def logsf(self, x):
        return special.log_ndtr(-self._z(x))

    def cdf(self, x):
        return special.ndtr(self._z(x))

    def sf(self, x):
        return special.ndtr(-self._z(x))

    def log_prob_between(self, lo, hi):
        """log P(lo < X <= hi), computed in the tail away from the bulk."""
        zl, zu = np.broadcast_arrays(self._z(lo), self._z(hi))
        with np.errstate(invalid="ignore"):
            upper_tail = (zl + zu) > 0
        a = np.where(upper_tail, special.log_ndtr(-zl), special.log_ndtr(zu))
        b = np.where(upper_tail, special.log_ndtr(-zu), special.log_ndtr(zl))
        return _log_diff_exp(a, b)

    def quantile(self, p):
        p = _check_prob(p)
        return self.mean + self.sd * special.ndtri(p)

    def _draw(self, rng, n):
        return rng.normal(self.mean, self.sd, size=n)

    def to_dict(self):
        return {"family": "gaussian", "mean": float(self.mean), "var": float(self.var)}


def _check_prob(p):
    p = np.asarray(p, dtype=float)
    if np.any((p <= 0) | (p >= 1)) or np.any(np.isnan(p)):
        raise ValueError(f"probability must lie in (0, 1), got {p}")
    return p if p.ndim else float(p)


@dataclass(frozen=True)
class BivariateGaussian:
    """Bivariate normal with means, variances and correlation ``rho``."""

    mean1: float = 0.0
    mean2: float = 0.0
    var1: float = 1.0
    var2: float = 1.0
    rho: float = 0.0

    def __post_init__(self):
        if not (self.var1 > 0 and self.var2 > 0):
            raise ValueError("variances must be positive")
        if not abs(self.rho) < 1:
            raise ValueError("correlation must lie in (-1, 1)")

    @property
    def cov(self):
        s12 = self.rho * math.sqrt(self.var1 * self.var2)
        return np.array([[self.var1, s12], [s12, self.var2]])

    def _std(self, x1, x2):
        return (
            (np.asarray(x1, dtype=float) - self.mean1) / math.sqrt(self.var1),
            (np.asarray(x2, dtype=float) - self.mean2) / math.sqrt(self.var2),
        )

    def pdf(self, x1, x2):
        z1, z2 = self._std(x1, x2)
        q = 1.0 - self.rho**2
        e = (z1 * z1 - 2 * self.rho * z1 * z2 + z2 * z2) / q
        norm = 2 * math.pi * math.sqrt(self.var1 * self.var2 * q)
        return np.exp(-0.5 * e) / norm

    def cdf(self, x1: float, x2: float) -> float:
        """P(X1 <= x1, X2 <= x2) by conditioning on X1 (1-D adaptive quadrature)."""
        z1, z2 = (float(v) for v in self._std(x1, x2))
        if z1 == -math.inf or z2 == -math.inf:
            return 0.0
        if z1 == math.inf:
            return float(special.ndtr(z2))
        if z2 == math.inf:
            return float(special.ndtr(z1))
        if self.rho == 0:
            return float(special.ndtr(z1) * special.ndtr(z2))
        s = math.sqrt(1.0 - self.rho**2)

        def integrand(t):
            return math.exp(-0.5 * t * t) / math.sqrt(2 * math.pi) * special.ndtr((z2 - self.rho * t) / s)

        # Integrate over the standardised first coordinate; split at 0 for tail accuracy.
        lo = -40.0
        if z1 <= 0:
            val, _ = integrate.quad(integrand, lo, z1, epsabs=1e-15, epsrel=1e-13, limit=200)
        else:
            a, _ = integrate.quad(integrand, lo, 0.0, epsabs=1e-15, epsrel=1e-13, limit=200)
            b, _ = integrate.quad(integrand, 0.0, z1, epsabs=1e-15, epsrel=1e-13, limit=200)
            val = a + b
        return val

    def marginals(self):
        return Gaussian(self.mean1, self.var1), Gaussian(self.mean2, self.var2)

    def sample(self, n: int, seed=None, rng: np.random.Generator | None = None):
        if rng is None:
            rng = make_rng(seed)
        return rng.multivariate_normal([self.mean1, self.mean2], self.cov, size=n)


def family_from_dict(d: dict) -> ScalarFamily:
    """Build a family from its JSON form, e.g. ``{"family": "gaussian", "mean": 0, "var": 1}``."""
    tag = d.get("family")
    keys = {"uniform": ("a", "b"), "gaussian": ("mean", "var")}.get(tag)
    if keys is None:
        raise ValueError(f"unknown family {tag!r}; expected 'uniform' or 'gaussian'")
    missing = [k for k in keys if k not in d]
    if missing:
        raise ValueError(f"{tag} family spec is missing field {missing[0]!r}")
    vals = [float(d[k]) for k in keys]
    return Uniform(*vals) if tag == "uniform" else Gaussian(*vals)


# Functional aliases mirroring the method surface.
def pdf(family: ScalarFamily, x):
    return family.pdf(x)


def cdf(family: ScalarFamily, x):
    return family.cdf(x)


def quantile(family: ScalarFamily, p):
    return family.quantile(p)


def sample(family: ScalarFamily, n: int, seed=None):
    return family.sample(n, seed=seed)
