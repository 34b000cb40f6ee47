"""Maximum likelihood fitting, empirical-Bayes local posteriors and predictive draws."""

from __future__ import annotations

import json
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy import optimize, special

from . import hypercube as hc
from .distributions import Gaussian, Uniform, make_rng
from .intervals import AggregationSpec, Hypercube, as_pair
from .likelihood import (
    DEFAULT_NODES,
    DescriptiveModel,
    HierarchicalModel,
    IIDGenerativeModel,
    UniformMixtureModel,
    dataset_loglik,
    log_order_density,
)
from .quadrature import gauss_hermite_rule

log = logging.getLogger(__name__)

__all__ = [
    "FitOptions",
    "FitResult",
    "LocalPosterior",
    "PredictiveDensity",
    "PredictiveIntervals",
    "MODEL_TYPES",
    "fit_mle",
    "numerical_hessian",
    "fd_gradient",
    "build_model",
    "default_init",
    "local_posterior",
    "predictive_latent",
    "predictive_interval",
]

_TRANSFORMS = {
    "identity": (lambda x: x, lambda y: y),
    "log": (math.log, math.exp),
    "atanh": (math.atanh, math.tanh),
    # equivalent alternatives, for reparameterisation checks
    "half-log": (lambda x: 0.5 * math.log(x), lambda y: math.exp(2.0 * y)),
    "logit-corr": (lambda x: 2.0 * math.atanh(x), lambda y: math.tanh(0.5 * y)),
}

# model type -> (parameter names, transforms)
MODEL_TYPES = {
    "descriptive": (("mean_c", "mean_t", "var_c", "var_t"), ("identity", "identity", "log", "log")),
    "descriptive-rho": (
        ("mean_c", "mean_t", "var_c", "var_t", "rho"),
        ("identity", "identity", "log", "log", "atanh"),
    ),
    "uniform-mixture": (("mean_c", "var_c", "mean_t", "var_t"), ("identity", "log", "identity", "log")),
    "hierarchical": (("mean1", "mean2", "var1", "var2", "corr"), ("identity", "identity", "log", "log", "atanh")),
    "iid-gaussian": (("mean", "var"), ("identity", "log")),
    "credit": (hc.PARAM_NAMES, ("identity", "log", "identity", "log", "atanh", "identity", "log", "identity", "log")),
    "credit-descriptive": (
        hc.PARAM_NAMES,
        ("identity", "log", "identity", "log", "atanh", "identity", "log", "identity", "log"),
    ),
}


@dataclass
class FitOptions:
    max_iter: int = 5000
    tol: float = 1e-10
    grad_tol: float = 1e-5
    nodes: int | None = None
    workers: int = 1
    local: str = "gaussian"
    l: int = 1
    u: int | None = None
    transforms: dict | None = None  # parameter name -> transform name overrides


@dataclass
class FitResult:
    model_type: str
    names: list
    estimates: np.ndarray
    loglik: float
    hessian: np.ndarray
    ci_lower: np.ndarray
    ci_upper: np.ndarray
    free_estimates: np.ndarray
    transforms: list
    converged: bool
    iterations: int
    grad_norm: float
    message: str = ""
    options: dict = field(default_factory=dict)

    def as_dict(self) -> dict:
        return {
            "model_type": self.model_type,
            "names": list(self.names),
            "estimates": dict(zip(self.names, map(float, self.estimates))),
            "ci_lower": dict(zip(self.names, map(float, self.ci_lower))),
            "ci_upper": dict(zip(self.names, map(float, self.ci_upper))),
            "loglik": float(self.loglik),
            "hessian_free": np.asarray(self.hessian).tolist(),
            "free_estimates": list(map(float, self.free_estimates)),
            "transforms": list(self.transforms),
            "converged": bool(self.converged),
            "iterations": int(self.iterations),
            "grad_norm": float(self.grad_norm),
            "message": self.message,
            "options": self.options,
        }

    def to_json(self) -> str:
        return json.dumps(self.as_dict(), indent=2)

    @classmethod
    def from_dict(cls, d: dict) -> "FitResult":
        names = list(d["names"])
        return cls(
            model_type=d["model_type"],
            names=names,
            estimates=np.array([d["estimates"][n] for n in names]),
            loglik=d["loglik"],
            hessian=np.array(d["hessian_free"]),
            ci_lower=np.array([d["ci_lower"][n] for n in names]),
            ci_upper=np.array([d["ci_upper"][n] for n in names]),
            free_estimates=np.array(d["free_estimates"]),
            transforms=list(d["transforms"]),
            converged=d["converged"],
            iterations=d["iterations"],
            grad_norm=d["grad_norm"],
            message=d.get("message", ""),
            options=d.get("options", {}),
        )

    def __getitem__(self, name: str) -> float:
        return float(self.estimates[self.names.index(name)])

    @property
    def params(self) -> dict:
        return dict(zip(self.names, map(float, self.estimates)))

    def model(self):
        return build_model(self.model_type, self.params, FitOptions(**_option_fields(self.options)))


def _option_fields(d):
    keep = {"local", "l", "u", "nodes"}
    return {k: v for k, v in d.items() if k in keep}


# ---------------------------------------------------------------------------
# models from parameter dictionaries


def build_model(model_type: str, p: dict, options: FitOptions | None = None):
    options = options or FitOptions()
    if model_type == "descriptive":
        return DescriptiveModel(p["mean_c"], p["mean_t"], p["var_c"], p["var_t"])
    if model_type == "descriptive-rho":
        return DescriptiveModel(p["mean_c"], p["mean_t"], p["var_c"], p["var_t"], p["rho"])
    if model_type == "uniform-mixture":
        return UniformMixtureModel(p["mean_c"], p["var_c"], p["mean_t"], p["var_t"])
    if model_type == "hierarchical":
        return HierarchicalModel(
            options.local, (p["mean1"], p["mean2"]), (p["var1"], p["var2"]), p["corr"], options.l, options.u
        )
    if model_type == "iid-gaussian":
        u = options.u
        return IIDGenerativeModel(Gaussian(p["mean"], p["var"]), _iid_agg(options.l, u))
    if model_type == "credit":
        return hc.CreditModelSpec(**{n: p[n] for n in hc.PARAM_NAMES})
    if model_type == "credit-descriptive":
        return hc.CreditDescriptiveModel(**{n: p[n] for n in hc.PARAM_NAMES})
    raise ValueError(f"unknown model type {model_type!r}")


def _iid_agg(l, u):
    # Placeholder m; the dataset supplies the real m per observation.
    m = max(u or 2, 2)
    return AggregationSpec(l, u, m) if u is not None else AggregationSpec.minmax(m)


# ---------------------------------------------------------------------------
# numerical derivatives


def _steps(x, rel):
    return rel * (1.0 + np.abs(x))


def fd_gradient(f: Callable, x, rel_step: float = 1e-5) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    h = _steps(x, rel_step)
    g = np.empty_like(x)
    for j in range(len(x)):
        e = np.zeros_like(x)
        e[j] = h[j]
        g[j] = (f(x + e) - f(x - e)) / (2 * h[j])
    return g


def numerical_hessian(f: Callable, x, rel_step: float = 1e-4) -> np.ndarray:
    """Symmetric central-difference Hessian with step ``rel_step * (1 + |x_j|)``."""
    x = np.asarray(x, dtype=float)
    k = len(x)
    h = _steps(x, rel_step)
    f0 = f(x)
    H = np.empty((k, k))
    for i in range(k):
        ei = np.zeros(k)
        ei[i] = h[i]
        H[i, i] = (f(x + ei) - 2 * f0 + f(x - ei)) / h[i] ** 2
        for j in range(i + 1, k):
            ej = np.zeros(k)
            ej[j] = h[j]
            H[i, j] = H[j, i] = (f(x + ei + ej) - f(x + ei - ej) - f(x - ei + ej) + f(x - ei - ej)) / (4 * h[i] * h[j])
    bad = np.argwhere(~np.isfinite(H))
    if len(bad):
        i, j = bad[0]
        raise ValueError(f"non-finite Hessian entry at coordinates ({i}, {j})")
    return 0.5 * (H + H.T)


# ---------------------------------------------------------------------------
# fitting


def _to_free(values, transforms):
    return np.array([_TRANSFORMS[t][0](v) for v, t in zip(values, transforms)])


def _from_free(free, transforms):
    return np.array([_TRANSFORMS[t][1](v) for v, t in zip(free, transforms)])


def _maximize(nll: Callable, y0: np.ndarray, options: FitOptions):
    """Nelder-Mead, then finite-difference BFGS, then Newton steps on the numerical Hessian."""
    iters = 0
    res = optimize.minimize(
        nll,
        y0,
        method="Nelder-Mead",
        options={"maxiter": options.max_iter, "maxfev": 4 * options.max_iter, "xatol": 1e-5, "fatol": 1e-9, "adaptive": len(y0) > 4},
    )
    iters += res.nit
    y, fy = res.x, res.fun

    def grad(v):
        return fd_gradient(nll, v)

    if iters < options.max_iter:
        try:
            res = optimize.minimize(
                nll, y, jac=grad, method="BFGS", options={"gtol": 1e-7, "maxiter": options.max_iter - iters}
            )
            iters += res.nit
            if np.isfinite(res.fun) and res.fun <= fy:
                y, fy = res.x, res.fun
        except (ValueError, FloatingPointError) as exc:
            log.debug("BFGS polish failed: %s", exc)

    # Newton steps on one numerical Hessian. Near the optimum the objective
    # change drops below rounding noise, so steps inside the noise band are
    # accepted when they reduce the gradient norm.
    prev = fy
    g = grad(y)
    H = None
    noise = 1e-12 * max(1.0, abs(fy))
    for _ in range(20):
        if iters >= options.max_iter:
            break
        gn = np.linalg.norm(g)
        if gn < 0.1 * options.grad_tol:
            break
        try:
            if H is None:
                H = numerical_hessian(nll, y)
            step = -np.linalg.solve(H, g)
        except (ValueError, np.linalg.LinAlgError):
            break
        if not np.all(np.isfinite(step)) or np.dot(step, g) >= 0:
            break
        t = 1.0
        accepted = False
        while t > 1e-6:
            cand = y + t * step
            fc = nll(cand)
            if np.isfinite(fc) and fc < fy - noise:
                gc = grad(cand)
                accepted = True
                break
            if np.isfinite(fc) and fc <= fy + noise:
                gc = grad(cand)
                if np.linalg.norm(gc) < gn:
                    accepted = True
                    break
            t *= 0.5
        if not accepted:
            break
        iters += 1
        prev, y, fy, g = fy, cand, fc, gc
    rel_change = abs(prev - fy) / max(1.0, abs(fy))
    return y, fy, g, iters, rel_change


def fit_mle(
    model_type: str,
    data: Sequence,
    init: dict | Sequence | None = None,
    options: FitOptions | None = None,
) -> FitResult:
    """Maximise the dataset log likelihood over unconstrained transformed parameters.

    ``data`` is ``[(obs, m), ...]``. Variances are optimised on the log scale
    and correlations on the atanh scale; Wald intervals are formed there and
    mapped back, so variance bounds stay positive.
    """
    options = options or FitOptions()
    if model_type not in MODEL_TYPES:
        raise ValueError(f"unknown model type {model_type!r}")
    names, transforms = MODEL_TYPES[model_type]
    if options.transforms:
        unknown = set(options.transforms) - set(names)
        if unknown:
            raise ValueError(f"transform override for unknown parameters {sorted(unknown)}")
        transforms = tuple(options.transforms.get(n, t) for n, t in zip(names, transforms))
        for t in transforms:
            if t not in _TRANSFORMS:
                raise ValueError(f"unknown transform {t!r}")
    data = list(data)
    if not data:
        raise ValueError("cannot fit an empty dataset")
    if init is None:
        init = default_init(model_type, data, options)
    if isinstance(init, dict):
        init = [init[n] for n in names]
    y0 = _to_free(np.asarray(init, dtype=float), transforms)
    opts = _loglik_options(model_type, options)

    def nll(y):
        try:
            p = dict(zip(names, _from_free(y, transforms)))
            model = build_model(model_type, p, options)
        except (ValueError, OverflowError):
            return math.inf
        v = -dataset_loglik(model, data, workers=options.workers, **opts)
        return v if np.isfinite(v) else math.inf

    if not np.isfinite(nll(y0)):
        raise ValueError("log likelihood is -inf at the initial parameters")
    y, fy, g, iters, rel_change = _maximize(nll, y0, options)
    grad_norm = float(np.linalg.norm(g))
    H = numerical_hessian(nll, y)
    try:
        cov = np.linalg.inv(H)
        se = np.sqrt(np.clip(np.diag(cov), 0.0, None))
    except np.linalg.LinAlgError:
        se = np.full(len(y), np.nan)
    lo = _from_free(y - 1.959963984540054 * se, transforms)
    hi = _from_free(y + 1.959963984540054 * se, transforms)
    converged = grad_norm < options.grad_tol and rel_change < max(options.tol, 1e-10)
    msg = "converged" if converged else f"gradient norm {grad_norm:.3g} above tolerance"
    return FitResult(
        model_type=model_type,
        names=list(names),
        estimates=_from_free(y, transforms),
        loglik=-fy,
        hessian=H,
        ci_lower=np.minimum(lo, hi),
        ci_upper=np.maximum(lo, hi),
        free_estimates=y,
        transforms=list(transforms),
        converged=converged,
        iterations=iters,
        grad_norm=grad_norm,
        message=msg,
        options={"local": options.local, "l": options.l, "u": options.u, "nodes": options.nodes},
    )


def _loglik_options(model_type, options):
    if model_type in ("credit", "credit-descriptive"):
        return {"nodes": options.nodes or DEFAULT_NODES}
    if model_type in ("uniform-mixture", "hierarchical"):
        return {"n_nodes": options.nodes or DEFAULT_NODES}
    return {}


# ---------------------------------------------------------------------------
# starting values


def _ct(data):
    lo, hi = np.array([as_pair(o) for o, _ in data]).T
    return 0.5 * (lo + hi), np.log(0.5 * (hi - lo))


def _blom_range(m):
    """Approximate expected range of m standard normal draws."""
    m = np.asarray(m, dtype=float)
    return 2.0 * special.ndtri((m - 0.375) / (m + 0.25))


def default_init(model_type: str, data, options: FitOptions | None = None) -> dict:
    """Moment-based starting values."""
    if model_type.startswith("descriptive"):
        c, t = _ct(data)
        p = {"mean_c": c.mean(), "mean_t": t.mean(), "var_c": max(c.var(), 1e-6), "var_t": max(t.var(), 1e-6)}
        if model_type == "descriptive-rho":
            p["rho"] = float(np.clip(np.corrcoef(c, t)[0, 1], -0.9, 0.9))
        return p
    if model_type == "uniform-mixture":
        c, t = _ct(data)
        m = np.array([mi for _, mi in data], dtype=float)
        t = t + np.log((m + 1) / (m - 1))
        return {"mean_c": c.mean(), "var_c": max(c.var(), 1e-6), "mean_t": t.mean(), "var_t": max(t.var(), 1e-2)}
    if model_type == "hierarchical":
        c, t = _ct(data)
        m = np.array([mi for _, mi in data], dtype=float)
        lv = 2 * (np.log(2 * np.exp(t)) - np.log(_blom_range(m)))
        return {"mean1": c.mean(), "mean2": lv.mean(), "var1": max(c.var(), 1e-3), "var2": max(lv.var(), 1e-2), "corr": 0.0}
    if model_type == "iid-gaussian":
        c, t = _ct(data)
        m = np.array([mi for _, mi in data], dtype=float)
        sd = np.exp(t) * 2 / _blom_range(m)
        return {"mean": c.mean(), "var": float(np.mean(sd) ** 2)}
    if model_type in ("credit", "credit-descriptive"):
        lo1, hi1, lo2, hi2, m = hc._rect_arrays(data)
        c1, c2 = 0.5 * (lo1 + hi1), 0.5 * (lo2 + hi2)
        r1, r2 = 0.5 * (hi1 - lo1), 0.5 * (hi2 - lo2)
        rho = float(np.clip(np.corrcoef(c1, c2)[0, 1], -0.9, 0.9))
        if model_type == "credit-descriptive":
            t1, t2 = np.log(r1), np.log(r2)
        else:
            # log variance guesses from the expected normal range
            t1 = 2 * np.log(2 * r1 / _blom_range(m))
            t2 = 2 * np.log(2 * r2 / _blom_range(m))
        return {
            "theta1": c1.mean(),
            "lambda1_sq": max(c1.var(), 1e-3),
            "theta2": c2.mean(),
            "lambda2_sq": max(c2.var(), 1e-3),
            "rho_mu": rho,
            "eta1": t1.mean(),
            "epsilon1_sq": max(t1.var(), 1e-2),
            "eta2": t2.mean(),
            "epsilon2_sq": max(t2.var(), 1e-2),
        }
    raise ValueError(f"unknown model type {model_type!r}")


# ---------------------------------------------------------------------------
# empirical-Bayes local posteriors


@dataclass
class LocalPosterior:
    """Discrete posterior over local parameters supported on prior quadrature nodes.

    ``local`` is ``"uniform"`` (nodes are (a, b)), ``"gaussian"`` (mean, var)
    or ``"gaussian2"`` (mean1, mean2, var1, var2) for rectangles.
    """

    group_id: object
    local: str
    names: tuple
    nodes: np.ndarray
    weights: np.ndarray
    m: int

    def mean(self) -> np.ndarray:
        return self.weights @ self.nodes

    def sd(self) -> np.ndarray:
        mu = self.mean()
        return np.sqrt(np.clip(self.weights @ (self.nodes - mu) ** 2, 0.0, None))

    def marginal(self, j: int, bins=40):
        """Histogram-style marginal of parameter ``j``: (bin edges, probabilities)."""
        return np.histogram(self.nodes[:, j], bins=bins, weights=self.weights)


def _normalize(logw):
    logw = np.asarray(logw, dtype=float)
    top = np.max(logw)
    if not np.isfinite(top):
        raise ValueError("posterior has zero mass at every support point (model and data incompatible)")
    w = np.exp(logw - top)
    return w / w.sum()


def local_posterior(fit, obs, m: int, nodes: int | None = None, group_id=None) -> LocalPosterior:
    """Posterior of one group's local parameters with the fitted global density as prior."""
    model = fit.model() if isinstance(fit, FitResult) else fit
    if isinstance(model, hc.CreditModelSpec):
        n = nodes or DEFAULT_NODES
        (lo1, hi1), (lo2, hi2) = _rect(obs)
        logpw, ll1, ll2 = hc.credit_node_logliks(model, [lo1], [hi1], [lo2], [hi2], [m], n)
        _, mu1, mu2, lv1, lv2 = hc._node_arrays(model, n)
        # axes (i, j, k, l): mean1 node, mean2 node, log var1 node, log var2 node
        logpost = (
            logpw[:, None, None, None]
            + logpw[None, :, None, None]
            + logpw[None, None, :, None]
            + logpw[None, None, None, :]
            + ll1[0][:, None, :, None]
            + ll2[0][:, :, None, :]
        )
        ii, jj, kk, ll = np.meshgrid(*(np.arange(n),) * 4, indexing="ij")
        support = np.column_stack(
            [mu1[ii].ravel(), mu2[ii, jj].ravel(), np.exp(lv1[kk]).ravel(), np.exp(lv2[ll]).ravel()]
        )
        return LocalPosterior(group_id, "gaussian2", ("mean1", "mean2", "var1", "var2"), support, _normalize(logpost.ravel()), m)
    lo, hi = as_pair(obs)
    if isinstance(model, UniformMixtureModel):
        model = HierarchicalModel("uniform", (model.mean_c, model.mean_t), (model.var_c, model.var_t))
        nodes = nodes or 60
    if isinstance(model, HierarchicalModel):
        n = nodes or DEFAULT_NODES
        grid = model.default_grid(n)
        z, w = next(grid.chunks(grid.size))
        theta = np.asarray(model.mean) + (math.sqrt(2.0) * z) @ model.cholesky().T
        fam = model.local_family(theta)
        agg = model.agg(m)
        with np.errstate(divide="ignore", invalid="ignore"):
            logpost = np.log(w) + log_order_density(fam, lo, hi, agg.m, agg.l, agg.u)
        if model.local == "uniform":
            support = np.column_stack([fam.a, fam.b])
            names = ("a", "b")
        else:
            support = np.column_stack([fam.mean, fam.var])
            names = ("mean", "var")
        return LocalPosterior(group_id, model.local, names, support, _normalize(logpost), m)
    raise TypeError(f"no local posterior for {type(model).__name__}")


def _rect(obs):
    if isinstance(obs, Hypercube):
        return as_pair(obs[0]), as_pair(obs[1])
    a, b, c, d = np.ravel(obs)
    return (a, b), (c, d)


# ---------------------------------------------------------------------------
# predictive distributions


@dataclass
class PredictiveDensity:
    """Mixture of local densities weighted by the local posterior."""

    posterior: LocalPosterior
    prune: float = 1e-15

    def __post_init__(self):
        keep = self.posterior.weights > self.prune * self.posterior.weights.max()
        self._w = self.posterior.weights[keep] / self.posterior.weights[keep].sum()
        self._nodes = self.posterior.nodes[keep]

    def pdf(self, *x):
        cols = [np.asarray(v, dtype=float) for v in x]
        shape = np.broadcast_shapes(*(c.shape for c in cols))
        flat = [np.broadcast_to(c, shape).ravel() for c in cols]
        # bound the (points x support) work array
        step = max(1, 2_000_000 // len(self._w))
        out = np.empty(flat[0].size)
        for s in range(0, out.size, step):
            out[s : s + step] = self._pdf_flat(*(f[s : s + step] for f in flat))
        return out.reshape(shape) if shape else float(out[0])

    def _pdf_flat(self, *x):
        p = self.posterior
        n = self._nodes
        if p.local == "gaussian2":
            x1, x2 = x[0][:, None], x[1][:, None]
            dens = Gaussian(n[:, 0], n[:, 2]).pdf(x1) * Gaussian(n[:, 1], n[:, 3]).pdf(x2)
            return dens @ self._w
        xv = x[0][:, None]
        if p.local == "uniform":
            a, b = n[:, 0], n[:, 1]
            dens = np.where((xv >= a) & (xv <= b), 1.0 / (b - a), 0.0)
        else:
            dens = Gaussian(n[:, 0], n[:, 1]).pdf(xv)
        return dens @ self._w

    __call__ = pdf

    def sample(self, n: int, seed=None, rng=None) -> np.ndarray:
        rng = rng or make_rng(seed)
        idx = rng.choice(len(self._w), size=n, p=self._w)
        return _draw_latent(self.posterior.local, self._nodes[idx], rng)


def _draw_latent(local, params, rng, m=None):
    """One latent value per parameter row (or ``m`` values per row when m is given)."""
    shape = (len(params),) if m is None else (len(params), m)
    if local == "gaussian2":
        ext = (slice(None),) + ((None,) if m is not None else ())
        x1 = rng.normal(params[:, 0][ext], np.sqrt(params[:, 2])[ext], size=shape)
        x2 = rng.normal(params[:, 1][ext], np.sqrt(params[:, 3])[ext], size=shape)
        return np.stack([x1, x2], axis=-1)
    ext = (slice(None),) + ((None,) if m is not None else ())
    if local == "uniform":
        return rng.uniform(params[:, 0][ext], params[:, 1][ext], size=shape)
    return rng.normal(params[:, 0][ext], np.sqrt(params[:, 1])[ext], size=shape)


def predictive_latent(posterior: LocalPosterior) -> PredictiveDensity:
    return PredictiveDensity(posterior)


@dataclass
class PredictiveIntervals:
    """Predictive draws of intervals; arrays of shape (n, p)."""

    lower: np.ndarray
    upper: np.ndarray

    @property
    def centre(self):
        return 0.5 * (self.lower + self.upper)

    @property
    def half_range(self):
        return 0.5 * (self.upper - self.lower)


def predictive_interval(posterior: LocalPosterior, m: int, n_draws: int, seed=None, l: int = 1, u: int | None = None) -> PredictiveIntervals:
    """Draw theta from the posterior, m latent points given theta, then aggregate."""
    rng = make_rng(seed)
    idx = rng.choice(len(posterior.weights), size=n_draws, p=posterior.weights)
    x = _draw_latent(posterior.local, posterior.nodes[idx], rng, m=m)
    if x.ndim == 2:
        x = x[..., None]
    xs = np.sort(x, axis=1)
    u = m if u is None else u
    return PredictiveIntervals(xs[:, l - 1, :], xs[:, u - 1, :])
