"""Simulation helpers and study harnesses.

``run_sim_compare`` fits descriptive and uniform-mixture generative models to
data simulated from each and summarises the estimate differences;
``run_likelihood_profile`` tabulates the mixture integrand and the negative
log likelihood as m grows; ``run_credit_study`` fits rectangle models to
grouped bivariate data (a synthetic surrogate when no file is given).

Every replicate draws from its own ``SeedSequence([seed, index])`` stream and
results are collected in task order, so outputs do not depend on the thread
count.
"""

from __future__ import annotations

import json
import logging
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from . import hypercube as hc
from .distributions import child_seed, make_rng
from .inference import FitOptions, fit_mle, local_posterior, predictive_interval, predictive_latent
from .intervals import AggregationSpec, Hypercube, Interval, aggregate_hypercube
from .io import read_raw, write_rows
from .likelihood import (
    DescriptiveModel,
    HierarchicalModel,
    IIDGenerativeModel,
    UniformMixtureModel,
    _agg_for,
    _laguerre,
    descriptive_logpdf,
    hier_uniform_minmax_integrand,
    hier_uniform_minmax_logpdf,
)

log = logging.getLogger(__name__)

__all__ = [
    "StudyConfig",
    "SimulatedData",
    "CREDIT_TRUTH",
    "simulate",
    "simulate_credit_surrogate",
    "run_sim_compare",
    "run_likelihood_profile",
    "run_credit_study",
    "CreditStudyResult",
]

# Published generative-model estimates used as the surrogate truth.
CREDIT_TRUTH = {
    "theta1": 3.76,
    "lambda1_sq": 0.13,
    "theta2": -0.36,
    "lambda2_sq": 0.21,
    "rho_mu": 0.90,
    "eta1": -1.20,
    "epsilon1_sq": 0.48,
    "eta2": 0.41,
    "epsilon2_sq": 0.09,
}

SIM_PARAMS = ("mean_c", "mean_t", "var_c", "var_t")


@dataclass
class StudyConfig:
    study: str = "sim-compare"
    n_groups: int = 100
    m_grid: tuple = (5, 10, 20, 50, 100)
    replicates: int = 100
    truth: dict = field(default_factory=lambda: {"mean_c": 0.0, "var_c": 1.0, "mean_t": 0.0, "var_t": 1.0})
    seed: int = 1
    nodes: int = 20
    threads: int = 1
    max_iter: int = 5000
    output_dir: str | None = None
    m_range: tuple = (5, 56)
    posterior_groups: tuple | None = None

    def __post_init__(self):
        if self.replicates < 1:
            raise ValueError("replicates must be >= 1")
        if any(int(m) < 2 for m in self.m_grid):
            raise ValueError("m grid values must be >= 2")
        if self.threads < 1:
            raise ValueError("threads must be >= 1")
        if self.nodes < 1:
            raise ValueError("quadrature nodes must be >= 1")
        self.m_grid = tuple(int(m) for m in self.m_grid)


# ---------------------------------------------------------------------------
# simulation


@dataclass
class SimulatedData:
    """Observations as ``[(group_id, Interval | Hypercube, m), ...]`` plus optional latent arrays."""

    records: list
    latent: list | None = None

    @property
    def data(self):
        return [(obs, m) for _, obs, m in self.records]


def _m_list(m, n):
    if np.ndim(m) == 0:
        return [int(m)] * n
    m = [int(v) for v in m]
    if len(m) != n:
        raise ValueError("need one m per group")
    return m


def _interval(x, agg: AggregationSpec) -> Interval:
    xs = np.sort(x, kind="stable")
    return Interval(float(xs[agg.l - 1]), float(xs[agg.u - 1]))


def simulate(model, n: int, m=10, seed=None, rng=None, emit_latent: bool = False) -> SimulatedData:
    """Draw ``n`` observations from any supported model.

    ``m`` is one latent count or one per group. Groups are drawn in order from
    a single stream, so output is a deterministic function of the seed.
    """
    rng = rng or make_rng(seed)
    ms = _m_list(m, n)
    ids = [str(i) for i in range(n)]
    if isinstance(model, (DescriptiveModel, hc.CreditDescriptiveModel)):
        if emit_latent:
            raise ValueError("descriptive models have no latent data")
        return SimulatedData(_simulate_descriptive(model, n, ms, ids, rng))
    records, latent = [], []
    if isinstance(model, UniformMixtureModel):
        c = rng.normal(model.mean_c, math.sqrt(model.var_c), n)
        t = rng.normal(model.mean_t, math.sqrt(model.var_t), n)
        for i in range(n):
            r = math.exp(t[i])
            x = rng.uniform(c[i] - r, c[i] + r, ms[i])
            records.append((ids[i], _interval(x, AggregationSpec.minmax(ms[i])), ms[i]))
            latent.append(x)
    elif isinstance(model, HierarchicalModel):
        z = rng.standard_normal((n, 2))
        theta = np.asarray(model.mean) + z @ model.cholesky().T
        for i in range(n):
            fam = model.local_family(theta[i])
            x = fam.sample(ms[i], rng=rng)
            records.append((ids[i], _interval(x, model.agg(ms[i])), ms[i]))
            latent.append(x)
    elif isinstance(model, IIDGenerativeModel):
        for i in range(n):
            x = model.family.sample(ms[i], rng=rng)
            records.append((ids[i], _interval(x, _agg_for(model, ms[i])), ms[i]))
            latent.append(x)
    elif isinstance(model, hc.CreditModelSpec):
        mu, lv = _credit_locals(model, n, rng)
        for i in range(n):
            x = rng.normal(mu[i], np.exp(0.5 * lv[i]), size=(ms[i], 2))
            records.append((ids[i], aggregate_hypercube(x, AggregationSpec.minmax(ms[i])), ms[i]))
            latent.append(x)
    else:
        raise TypeError(f"cannot simulate from {type(model).__name__}")
    return SimulatedData(records, latent if emit_latent else None)


def _credit_locals(spec, n, rng):
    s1, s2 = math.sqrt(spec.lambda1_sq), math.sqrt(spec.lambda2_sq)
    cov = np.array([[s1 * s1, spec.rho_mu * s1 * s2], [spec.rho_mu * s1 * s2, s2 * s2]])
    z = rng.standard_normal((n, 2))
    mu = np.array([spec.theta1, spec.theta2]) + z @ np.linalg.cholesky(cov).T
    lv = np.column_stack(
        [
            rng.normal(spec.eta1, math.sqrt(spec.epsilon1_sq), n),
            rng.normal(spec.eta2, math.sqrt(spec.epsilon2_sq), n),
        ]
    )
    return mu, lv


def _simulate_descriptive(model, n, ms, ids, rng):
    if isinstance(model, DescriptiveModel):
        s = np.array([math.sqrt(model.var_c), math.sqrt(model.var_t)])
        corr = np.array([[1.0, model.rho], [model.rho, 1.0]])
        z = rng.standard_normal((n, 2)) @ np.linalg.cholesky(corr).T
        c = model.mean_c + s[0] * z[:, 0]
        t = model.mean_t + s[1] * z[:, 1]
        r = np.exp(t)
        return [(ids[i], Interval(float(c[i] - r[i]), float(c[i] + r[i])), ms[i]) for i in range(n)]
    # rectangle descriptive model: correlated centres, independent log half-ranges
    centre, lr = _credit_locals(model, n, rng)
    r = np.exp(lr)
    return [
        (ids[i], Hypercube(((centre[i, 0] - r[i, 0], centre[i, 0] + r[i, 0]), (centre[i, 1] - r[i, 1], centre[i, 1] + r[i, 1]))), ms[i])
        for i in range(n)
    ]


def simulate_credit_surrogate(seed=None, n_groups: int = 192, m_range=(5, 56), truth: dict | None = None, emit_latent=False):
    """Grouped bivariate Gaussian data under the rectangle hierarchical model, m uniform on m_range."""
    rng = make_rng(seed)
    spec = hc.CreditModelSpec(**(truth or CREDIT_TRUTH))
    m = rng.integers(m_range[0], m_range[1] + 1, n_groups)
    return simulate(spec, n_groups, m, rng=rng, emit_latent=emit_latent)


# ---------------------------------------------------------------------------
# simulation comparison


def _sim_replicate(cfg: StudyConfig, m: int, index: int):
    """Fit both models to descriptive- and generative-simulated data for one replicate."""
    rng = make_rng(child_seed(cfg.seed, index))
    tr = cfg.truth
    desc = DescriptiveModel(tr["mean_c"], tr["mean_t"], tr["var_c"], tr["var_t"])
    gen = UniformMixtureModel(tr["mean_c"], tr["var_c"], tr["mean_t"], tr["var_t"])
    datasets = {
        "descriptive": simulate(desc, cfg.n_groups, m, rng=rng).data,
        "generative": simulate(gen, cfg.n_groups, m, rng=rng).data,
    }
    opts = FitOptions(max_iter=cfg.max_iter, nodes=cfg.nodes)
    out = {}
    for source, data in datasets.items():
        row = {}
        for tag, key in (("descriptive", "D"), ("uniform-mixture", "G")):
            try:
                fit = fit_mle(tag, data, options=opts)
                ok = fit.converged and np.all(np.isfinite(fit.estimates))
                row[key] = fit.params if ok else None
            except (ValueError, FloatingPointError, np.linalg.LinAlgError) as exc:
                log.warning("replicate %d (m=%d, %s data) %s fit failed: %s", index, m, source, tag, exc)
                row[key] = None
        out[source] = row
    return out


def run_sim_compare(cfg: StudyConfig) -> list[dict]:
    """Mean and 2.5/97.5% quantiles of descriptive-minus-generative estimates per m and parameter.

    Returns summary rows with keys ``data, m, parameter, mean_diff, q025,
    q975, n_failed``. If ``cfg.output_dir`` is set, writes
    ``study_summary.csv`` and per-replicate ``study_replicates.csv``.
    """
    tasks = [(m, k * cfg.replicates + r) for k, m in enumerate(cfg.m_grid) for r in range(cfg.replicates)]
    if cfg.threads > 1:
        with ThreadPoolExecutor(max_workers=cfg.threads) as pool:
            results = list(pool.map(lambda t: _sim_replicate(cfg, *t), tasks))
    else:
        results = [_sim_replicate(cfg, *t) for t in tasks]

    summary, reps = [], []
    for source in ("descriptive", "generative"):
        for m in cfg.m_grid:
            rows = [res[source] for (mm, _), res in zip(tasks, results) if mm == m]
            good = [r for r in rows if r["D"] is not None and r["G"] is not None]
            n_failed = len(rows) - len(good)
            for p in SIM_PARAMS:
                diffs = np.array([r["D"][p] - r["G"][p] for r in good])
                if len(diffs):
                    q025, q975 = np.quantile(diffs, [0.025, 0.975])
                    mean = float(np.mean(diffs))
                else:
                    q025 = q975 = mean = math.nan
                summary.append(
                    {"data": source, "m": m, "parameter": p, "mean_diff": mean, "q025": float(q025), "q975": float(q975), "n_failed": n_failed}
                )
    for (m, idx), res in zip(tasks, results):
        for source, row in res.items():
            for key in ("D", "G"):
                est = row[key]
                reps.append([idx, m, source, key, *([est[p] for p in SIM_PARAMS] if est else [math.nan] * 4)])
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        keys = ["data", "m", "parameter", "mean_diff", "q025", "q975", "n_failed"]
        write_rows(out / "study_summary.csv", keys, [[r[k] for k in keys] for r in summary])
        write_rows(out / "study_replicates.csv", ["replicate", "m", "data", "model", *SIM_PARAMS], reps)
    return summary


# ---------------------------------------------------------------------------
# likelihood profile


def run_likelihood_profile(
    cfg: StudyConfig | None = None,
    m_values: Sequence[int] = (2, 5, 10, 25, 50, 100),
    obs=(-1.0, 1.0),
    z_grid=None,
    reference_nodes: int = 64,
):
    """Integrand samples and negative log likelihood versus m at one interval.

    Returns ``(integrand_rows, nll_rows)``. NLL rows hold the default-node
    value, a ``reference_nodes`` value and the relative gap to the descriptive
    limit; a final ``m = inf`` row is the descriptive value itself.
    """
    cfg = cfg or StudyConfig(study="profile")
    tr = cfg.truth
    alpha = (tr["mean_c"], tr["var_c"], tr["mean_t"], tr["var_t"])
    lo, hi = obs
    z_grid = np.linspace(0.0, 20.0, 201) if z_grid is None else np.asarray(z_grid, dtype=float)
    limit = -float(descriptive_logpdf(lo, hi, tr["mean_c"], tr["mean_t"], tr["var_c"], tr["var_t"]))
    integrand_rows, nll_rows = [], []
    for m in m_values:
        g = hier_uniform_minmax_integrand(z_grid, lo, hi, m, *alpha)
        integrand_rows.extend({"m": m, "z": float(z), "integrand": float(v)} for z, v in zip(z_grid, g))
        nll = -float(hier_uniform_minmax_logpdf(lo, hi, m, *alpha, _laguerre(cfg.nodes))[0])
        ref = -float(hier_uniform_minmax_logpdf(lo, hi, m, *alpha, _laguerre(reference_nodes))[0])
        nll_rows.append({"m": m, "nll": nll, "nll_reference": ref, "descriptive_nll": limit, "rel_gap": abs(nll - limit) / abs(limit)})
    nll_rows.append({"m": math.inf, "nll": limit, "nll_reference": limit, "descriptive_nll": limit, "rel_gap": 0.0})
    if cfg.output_dir:
        out = Path(cfg.output_dir)
        out.mkdir(parents=True, exist_ok=True)
        keys = ["m", "nll", "nll_reference", "descriptive_nll", "rel_gap"]
        write_rows(out / "profile.csv", keys, [[r[k] for k in keys] for r in nll_rows])
        write_rows(out / "profile_integrand.csv", ["m", "z", "integrand"], [[r["m"], r["z"], r["integrand"]] for r in integrand_rows])
    return integrand_rows, nll_rows


# ---------------------------------------------------------------------------
# credit-style grouped analysis


@dataclass
class CreditStudyResult:
    generative: object
    descriptive: object
    records: list
    rejects: list
    posteriors: dict

    def coverage(self, truth: dict | None = None) -> int:
        truth = truth or CREDIT_TRUTH
        f = self.generative
        return sum(lo <= truth[n] <= hi for n, lo, hi in zip(f.names, f.ci_lower, f.ci_upper))


def aggregate_groups(groups: dict):
    """Min/max rectangles per group; groups with fewer than two rows are rejected."""
    records, rejects = [], []
    for gid, x in groups.items():
        x = np.asarray(x, dtype=float).reshape(len(x), -1)
        if len(x) < 2:
            rejects.append((gid, len(x), "m < 2"))
            continue
        obs = aggregate_hypercube(x, AggregationSpec.minmax(len(x)))
        if obs.degenerate:
            rejects.append((gid, len(x), "degenerate"))
            continue
        records.append((gid, obs, len(x)))
    return records, rejects


def _default_posterior_groups(records):
    order = sorted(range(len(records)), key=lambda i: (records[i][2], i))
    picks = [order[0], order[len(order) // 2], order[-1]]
    return [records[i][0] for i in dict.fromkeys(picks)]


def run_credit_study(cfg: StudyConfig, data_path=None, n_draws: int = 2000) -> CreditStudyResult:
    """Fit generative and descriptive rectangle models and emit posterior/predictive outputs.

    ``data_path`` is a micro-data CSV ``group_id,x1,x2``; without it a
    surrogate with ``cfg.n_groups`` groups is simulated from the published
    generative estimates.
    """
    if data_path is not None:
        records, rejects = aggregate_groups(read_raw(data_path))
    else:
        records = simulate_credit_surrogate(cfg.seed, cfg.n_groups, cfg.m_range).records
        rejects = []
    if not records:
        raise ValueError("no usable groups")
    data = [(obs, m) for _, obs, m in records]
    opts = FitOptions(max_iter=cfg.max_iter, nodes=cfg.nodes, workers=cfg.threads)
    gen = fit_mle("credit", data, options=opts)
    desc = fit_mle("credit-descriptive", data, options=opts)

    groups = cfg.posterior_groups or _default_posterior_groups(records)
    lookup = {gid: (obs, m) for gid, obs, m in records}
    posteriors = {}
    out = Path(cfg.output_dir) if cfg.output_dir else None
    if out:
        out.mkdir(parents=True, exist_ok=True)
        (out / "fit_generative.json").write_text(gen.to_json() + "\n")
        (out / "fit_descriptive.json").write_text(desc.to_json() + "\n")
        if rejects:
            write_rows(out / "rejects.csv", ["group_id", "m", "reason"], rejects)
    for k, gid in enumerate(groups):
        obs, m = lookup[str(gid)] if str(gid) in lookup else lookup[gid]
        post = local_posterior(gen, obs, m, nodes=cfg.nodes, group_id=gid)
        posteriors[gid] = post
        if not out:
            continue
        keep = post.weights > 1e-12 * post.weights.max()
        write_rows(
            out / f"posterior_{gid}.csv",
            ["mean1", "mean2", "var1", "var2", "weight"],
            np.column_stack([post.nodes[keep], post.weights[keep]]),
        )
        draws = predictive_interval(post, m, n_draws, seed=child_seed(cfg.seed, 10_000 + k))
        write_rows(
            out / f"predictive_{gid}.csv",
            ["centre1", "half_range1", "centre2", "half_range2"],
            np.column_stack([draws.centre[:, 0], draws.half_range[:, 0], draws.centre[:, 1], draws.half_range[:, 1]]),
        )
        dens = predictive_latent(post)
        (a, b), (c, d) = (tuple(obs[0]), tuple(obs[1]))
        g1 = np.linspace(a - (b - a), b + (b - a), 41)
        g2 = np.linspace(c - (d - c), d + (d - c), 41)
        X1, X2 = np.meshgrid(g1, g2, indexing="ij")
        write_rows(
            out / f"predictive_latent_{gid}.csv",
            ["x1", "x2", "density"],
            np.column_stack([X1.ravel(), X2.ravel(), dens.pdf(X1.ravel(), X2.ravel())]),
        )
    if out:
        (out / "config.json").write_text(json.dumps(_cfg_dict(cfg), indent=2) + "\n")
    return CreditStudyResult(gen, desc, records, rejects, posteriors)


def _cfg_dict(cfg):
    d = asdict(cfg)
    d["m_grid"] = list(cfg.m_grid)
    d["m_range"] = list(cfg.m_range)
    return d
