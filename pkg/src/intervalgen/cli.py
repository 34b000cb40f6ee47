"""Command-line interface: ``intervalgen <subcommand> ...``.

Exit codes: 0 success, 1 input error, 2 fit did not converge (output still written).
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import __version__
from .asymptotics import convergence_diagnostic, sup_gaps
from .inference import FitOptions, FitResult, fit_mle, local_posterior, predictive_interval
from .intervals import AggregationSpec, aggregate_hypercube
from .io import (
    InputError,
    fit_type_for,
    load_model_spec,
    model_to_spec,
    read_observations,
    read_raw,
    write_observations,
    write_raw,
    write_rows,
)
from .likelihood import HierarchicalModel, UniformMixtureModel
from .studies import StudyConfig, run_credit_study, run_likelihood_profile, run_sim_compare, simulate

log = logging.getLogger("intervalgen")

EXIT_OK, EXIT_INPUT, EXIT_NONCONVERGED = 0, 1, 2


def _int_list(text):
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _positive(text):
    v = int(text)
    if v < 1:
        raise argparse.ArgumentTypeError("must be >= 1")
    return v


def _m_arg(text):
    """``10`` or an inclusive range ``5:56`` drawn uniformly per group."""
    if ":" in text:
        a, b = text.split(":")
        return (int(a), int(b))
    return int(text)


# ---------------------------------------------------------------------------
# subcommands


def cmd_aggregate(args):
    groups = read_raw(args.input)
    records, rejects = [], []
    for gid, x in groups.items():
        m = len(x)
        u = args.u or m
        if m < 2 or m < u:
            rejects.append((gid, m, "m < u" if m < u else "m < 2"))
            continue
        try:
            spec = AggregationSpec(args.l, u, m)
        except ValueError as exc:
            rejects.append((gid, m, str(exc)))
            continue
        cube = aggregate_hypercube(x, spec)
        records.append((gid, cube if cube.p > 1 else cube[0], m))
    if not records:
        raise InputError("no group satisfies the aggregation requirements")
    write_observations(args.output, records)
    rej_path = args.rejects or str(Path(args.output).with_suffix("")) + "_rejects.csv"
    if rejects:
        write_rows(rej_path, ["group_id", "m", "reason"], rejects)
        log.warning("%d group(s) rejected; see %s", len(rejects), rej_path)
    return EXIT_OK


def cmd_simulate(args):
    model = load_model_spec(args.model)
    rng = np.random.default_rng(np.random.SeedSequence(args.seed))
    m = args.m
    if isinstance(m, tuple):
        m = rng.integers(m[0], m[1] + 1, args.n)
    sim = simulate(model, args.n, m, rng=rng, emit_latent=bool(args.emit_latent))
    write_observations(args.output, sim.records)
    if args.emit_latent:
        write_raw(args.emit_latent, sim.latent, [gid for gid, _, _ in sim.records])
    return EXIT_OK


def _options(args, model=None):
    opts = FitOptions(max_iter=args.max_iter, tol=args.tol, nodes=args.quad_nodes, workers=args.threads)
    if isinstance(model, HierarchicalModel):
        opts.local, opts.l, opts.u = model.local, model.l, model.u
    return opts


def _init_from_model(tag, model):
    spec = model_to_spec(model)
    if tag in ("descriptive", "descriptive-rho"):
        keys = ["mean_c", "mean_t", "var_c", "var_t"] + (["rho"] if tag == "descriptive-rho" else [])
        return {k: spec[k] for k in keys}
    if tag == "uniform-mixture":
        return {"mean_c": spec["mean"][0], "var_c": spec["var"][0], "mean_t": spec["mean"][1], "var_t": spec["var"][1]}
    if tag == "hierarchical":
        return {"mean1": spec["mean"][0], "mean2": spec["mean"][1], "var1": spec["var"][0], "var2": spec["var"][1], "corr": spec["corr"]}
    if tag == "iid-gaussian":
        return {"mean": spec["family"]["mean"], "var": spec["family"]["var"]}
    return {k: spec[k] for k in spec if k != "type"}


def cmd_fit(args):
    records = read_observations(args.input)
    data = [(obs, m) for _, obs, m in records]
    model = load_model_spec(args.model)
    tag = fit_type_for(model)
    init = _init_from_model(tag, model) if args.init_from_model else None
    fit = fit_mle(tag, data, init=init, options=_options(args, model))
    Path(args.output).write_text(fit.to_json() + "\n")
    if not fit.converged:
        log.warning("fit did not converge: %s", fit.message)
        return EXIT_NONCONVERGED
    return EXIT_OK


def _load_fit(path):
    try:
        return FitResult.from_dict(json.loads(Path(path).read_text()))
    except (json.JSONDecodeError, KeyError) as exc:
        raise InputError(f"{path}: not a fit result ({exc})") from None


def _group(records, gid):
    for g, obs, m in records:
        if g == gid:
            return obs, m
    raise InputError(f"group {gid!r} not found in input")


def cmd_posterior(args):
    fit = _load_fit(args.fit)
    obs, m = _group(read_observations(args.input), args.group)
    post = local_posterior(fit, obs, m, nodes=args.quad_nodes, group_id=args.group)
    keep = post.weights > 0
    write_rows(args.output, [*post.names, "weight"], np.column_stack([post.nodes[keep], post.weights[keep]]))
    return EXIT_OK


def cmd_predict(args):
    fit = _load_fit(args.fit)
    obs, m = _group(read_observations(args.input), args.group)
    post = local_posterior(fit, obs, m, nodes=args.quad_nodes, group_id=args.group)
    draws = predictive_interval(post, m, args.n_draws, seed=args.seed)
    p = draws.lower.shape[1]
    header = [f"{k}{j}" for j in range(1, p + 1) for k in ("centre", "half_range")]
    cols = [v for j in range(p) for v in (draws.centre[:, j], draws.half_range[:, j])]
    write_rows(args.output, header, np.column_stack(cols))
    return EXIT_OK


def cmd_study(args):
    cfg = StudyConfig(
        study=args.kind,
        n_groups=args.groups or (192 if args.kind == "credit" else 100),
        m_grid=tuple(args.m_grid or (5, 10, 20, 50, 100)),
        replicates=args.replicates,
        seed=args.seed,
        nodes=args.quad_nodes or (10 if args.kind == "credit" else 20),
        threads=args.threads,
        max_iter=args.max_iter,
        output_dir=args.output,
    )
    if args.kind == "sim-compare":
        run_sim_compare(cfg)
    elif args.kind == "profile":
        run_likelihood_profile(cfg)
    else:
        res = run_credit_study(cfg, data_path=args.input)
        if not (res.generative.converged and res.descriptive.converged):
            return EXIT_NONCONVERGED
    return EXIT_OK


def cmd_limit_check(args):
    model = load_model_spec(args.model) if args.model else UniformMixtureModel()
    if not isinstance(model, (UniformMixtureModel, HierarchicalModel)):
        raise InputError("limit-check needs a hierarchical model spec")
    k = args.grid
    centres = np.linspace(-1.0, 1.0, k)
    halves = np.exp(np.linspace(-0.5, 0.5, k))
    obs = [(c - r, c + r) for c in centres for r in halves]
    rows = convergence_diagnostic(model, obs, args.m_grid, nodes=args.quad_nodes or 20, p_lo=args.p_lo, p_hi=args.p_hi)
    keys = ["m", "lower", "upper", "finite_m_density", "limit_density", "abs_gap"]
    write_rows(args.output, keys, [[r[k] for k in keys] for r in rows])
    for m, gap in sup_gaps(rows).items():
        log.info("m=%s sup gap %.3g", m, gap)
    return EXIT_OK


# ---------------------------------------------------------------------------
# parser


class _Parser(argparse.ArgumentParser):
    """Usage errors are input errors (exit 1); exit 2 is reserved for non-convergence."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_INPUT, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="intervalgen", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(sp, seed=False, fitting=False):
        sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
        sp.add_argument("--quad-nodes", type=_positive, default=None)
        sp.add_argument("--threads", type=_positive, default=1)
        if seed:
            sp.add_argument("--seed", type=int, default=1)
        if fitting:
            sp.add_argument("--max-iter", type=_positive, default=5000)
            sp.add_argument("--tol", type=float, default=1e-10)

    sp = sub.add_parser("aggregate", help="raw grouped data -> intervals or rectangles")
    sp.add_argument("--input", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--l", type=_positive, default=1)
    sp.add_argument("--u", type=_positive, default=None, help="upper order index (default: m of each group)")
    sp.add_argument("--rejects", default=None)
    sp.add_argument("-v", "--verbose", action="store_true", default=argparse.SUPPRESS)
    sp.set_defaults(func=cmd_aggregate)

    sp = sub.add_parser("simulate", help="draw observations from a model spec")
    sp.add_argument("--model", required=True)
    sp.add_argument("--output", required=True)
    sp.add_argument("--n", type=_positive, required=True)
    sp.add_argument("--m", type=_m_arg, default=10)
    sp.add_argument("--emit-latent", default=None, metavar="PATH")
    common(sp, seed=True)
    sp.set_defaults(func=cmd_simulate)

    sp = sub.add_parser("fit", help="maximum likelihood fit")
    sp.add_argument("--input", required=True)
    sp.add_argument("--model", required=True, help="model spec JSON; its type selects the model")
    sp.add_argument("--output", required=True)
    sp.add_argument("--init-from-model", action="store_true", help="start from the parameter values in the model file")
    common(sp, fitting=True)
    sp.set_defaults(func=cmd_fit)

    for name, func, helptext in (
        ("posterior", cmd_posterior, "local posterior of one group"),
        ("predict", cmd_predict, "posterior predictive interval draws for one group"),
    ):
        sp = sub.add_parser(name, help=helptext)
        sp.add_argument("--input", required=True)
        sp.add_argument("--fit", required=True)
        sp.add_argument("--group", required=True)
        sp.add_argument("--output", required=True)
        if name == "predict":
            sp.add_argument("--n-draws", type=_positive, default=2000)
        common(sp, seed=name == "predict")
        sp.set_defaults(func=func)

    sp = sub.add_parser("study", help="replication studies")
    sp.add_argument("kind", choices=["sim-compare", "profile", "credit"])
    sp.add_argument("--output", required=True, help="output directory")
    sp.add_argument("--input", default=None, help="credit: grouped micro-data CSV group_id,x1,x2")
    sp.add_argument("--replicates", type=_positive, default=100)
    sp.add_argument("--m-grid", type=_int_list, default=None)
    sp.add_argument("--groups", type=_positive, default=None)
    common(sp, seed=True, fitting=True)
    sp.set_defaults(func=cmd_study)

    sp = sub.add_parser("limit-check", help="finite-m density versus its large-m limit")
    sp.add_argument("--model", default=None, help="hierarchical spec (default: standard uniform mixture)")
    sp.add_argument("--output", required=True)
    sp.add_argument("--m-grid", "--m", dest="m_grid", type=_int_list, default=[10, 100, 1000])
    sp.add_argument("--grid", type=_positive, default=5, help="grid points per axis")
    sp.add_argument("--p-lo", type=float, default=None)
    sp.add_argument("--p-hi", type=float, default=None)
    common(sp)
    sp.set_defaults(func=cmd_limit_check)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    try:
        return args.func(args)
    except (InputError, ValueError, TypeError, FileNotFoundError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
