"""Command-line entry point.

Exit status: 0 on success, 1 on a usage error, 2 on a runtime error.
"""
from __future__ import annotations

import argparse
import csv
import io
import json
import sys
import time
import warnings
from pathlib import Path

from . import __version__
from .estimator import EstimatorConfig, PenaltyConfig, estimate_all, format_estimates_csv
from .gridio import format_grid, read_grid
from .lattice import Window
from .models import compose_specification, load_model
from .sampler import SamplerConfig, sample_field


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def _emit(text: str, out: str | None) -> None:
    if out is None:
        sys.stdout.write(text)
    else:
        Path(out).write_text(text)


def _json(obj) -> str:
    return json.dumps(obj, indent=2, sort_keys=True) + "\n"


def _int_list(text: str) -> list[int]:
    try:
        return [int(t) for t in text.split(",") if t.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


# ---------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    model = load_model(args.model)
    window = Window.parse(args.size)
    cfg = SamplerConfig(args.sweeps, args.thinning, args.seed, args.schedule)
    config = sample_field(model, window, cfg, args.boundary, exact=not args.heat_bath)
    _emit(format_grid(config), args.out)
    return 0


def cmd_estimate(args) -> int:
    config = read_grid(args.input)
    model = load_model(args.model) if args.model else None
    q_hint = args.q_min if args.q_min is not None else (model.q_min if model else None)
    if args.delta is None and args.kappa is None and q_hint is None:
        raise UsageError("need --delta, --kappa, --q-min or --model")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        pen = PenaltyConfig(config.alphabet_size, config.dim, args.delta, args.kappa, q_hint)
        batch = estimate_all(config, EstimatorConfig(pen, args.max_radius, args.margin))
    for w in caught:
        print(f"warning: {w.message}", file=sys.stderr)
    if batch.outside_theory:
        print("warning: radius range set by --max-radius: outside theorem regime", file=sys.stderr)
    l_true = model.true_radii(config, batch.sites) if model else None
    _emit(format_estimates_csv(batch, l_true), args.out)
    return 0


def cmd_experiment(args) -> int:
    from .harness import ExperimentSpec, run_experiment
    from .plotting import error_figure

    spec = ExperimentSpec.load(args.config)
    if args.seed is not None:
        obj = spec.to_dict()
        obj["seed"] = args.seed
        spec = ExperimentSpec.from_dict(obj)
    out_dir = Path(args.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    names = {"report": "report.json", "table": "report.csv", "figure": "report.png"}
    names.update(spec.outputs)
    t0 = time.perf_counter()
    report = run_experiment(spec, args.workers)
    elapsed = time.perf_counter() - t0
    (out_dir / names["report"]).write_text(report.to_json())
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["size", "replicates", "sites_scored", "over", "under", "match", "unreachable",
                "over_se", "under_se", "match_se"])
    for row in report.rows():
        w.writerow([repr(v) if isinstance(v, float) else v for v in row])
    (out_dir / names["table"]).write_text(buf.getvalue())
    if not args.no_figure:
        error_figure(report.as_dict(), out_dir / names["figure"])
    timing = {"elapsed_seconds": elapsed, "version": __version__}
    (out_dir / (Path(names["report"]).stem + ".timing.json")).write_text(_json(timing))
    return 0


def cmd_oracle(args) -> int:
    from . import oracle

    if args.oracle_cmd == "identities":
        report = oracle.identity_checks(args.seed, args.polygon_trials, args.loglik_trials)
        _emit(_json(report), args.out)
        return 0
    model = load_model(args.model)
    if args.oracle_cmd == "dobrushin":
        _emit(_json(oracle.dobrushin(model, args.samples, args.seed).as_dict()), args.out)
        return 0
    measure = oracle.exact_measure(model, Window.parse(args.size))
    if args.oracle_cmd == "exact-measure":
        out = {"model": model.to_json(), "window": args.size, "geometry": measure.geometry,
               "states": int(len(measure.probabilities))}
        sites = args.marginal if args.marginal else list(range(min(3, measure.window.size)))
        out["marginal_sites"] = sites
        out["marginal"] = measure.marginal(sites).tolist()
        if args.full:
            out["probabilities"] = measure.probabilities.tolist()
        _emit(_json(out), args.out)
        return 0
    pp = oracle.exact_pattern_probs(measure, args.radius)
    out = {"model": model.to_json(), "window": args.size, "radius": args.radius,
           "patterns": [{"key": int(k), "p_eta": float(pp.p_eta[k]), "p_cond": pp.p_cond[k].tolist()}
                        for k in pp.keys],
           "alpha0": oracle.alpha0(measure, args.radius)}
    _emit(_json(out), args.out)
    return 0


def cmd_compose(args) -> int:
    model = load_model(args.model)
    config = read_grid(args.input)
    law, support = compose_specification(model, config, args.sites, args.order)
    out = {"sites": args.sites, "law": [{"values": list(k), "probability": v} for k, v in law.items()],
           "support": sorted(int(s) for s in support), "total": float(sum(law.values()))}
    _emit(_json(out), args.out)
    return 0


# ---------------------------------------------------------------------------
# parser


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="vnrf", description="Variable-neighbourhood random fields: simulation, "
                                         "context-radius estimation and exact oracles.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="cmd", required=True, parser_class=_Parser)

    s = sub.add_parser("simulate", help="draw a configuration and write a VNRF1 grid")
    s.add_argument("--model", required=True, help="model JSON file")
    s.add_argument("--size", required=True, help="window extents, e.g. 100000 or 256x256")
    s.add_argument("--sweeps", type=int, default=1000, help="burn-in heat-bath sweeps (default 1000)")
    s.add_argument("--thinning", type=int, default=1, help="sweeps between retained samples (default 1)")
    s.add_argument("--schedule", choices=("raster", "random-site"), default="raster",
                   help="site visiting order of the heat bath")
    s.add_argument("--boundary", choices=("periodic", "free"), default="periodic",
                   help="boundary of the heat-bath window (default periodic)")
    s.add_argument("--heat-bath", action="store_true",
                   help="use heat-bath dynamics even where an exact 1-D sampler exists")
    s.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    s.add_argument("--out", help="output grid file (default stdout)")
    s.set_defaults(func=cmd_simulate)

    e = sub.add_parser("estimate", help="estimate the context radius at every security-region site")
    e.add_argument("--in", dest="input", required=True, help="VNRF1 grid file")
    g = e.add_mutually_exclusive_group()
    g.add_argument("--delta", type=float, help="penalty parameter delta")
    g.add_argument("--kappa", type=float, help="penalty constant kappa (overrides delta)")
    e.add_argument("--q-min", type=float, help="q_min used to check delta or pick it automatically")
    e.add_argument("--model", help="model JSON: adds the l_true column and supplies q_min")
    e.add_argument("--max-radius", type=int, help="override R_n (outside theorem regime)")
    e.add_argument("--margin", type=int, help="override the security-region margin")
    e.add_argument("--out", help="output CSV (default stdout)")
    e.set_defaults(func=cmd_estimate)

    x = sub.add_parser("experiment", help="Monte-Carlo error-frequency experiment")
    x.add_argument("--config", required=True, help="experiment JSON (schema 1)")
    x.add_argument("--out-dir", default=".", help="directory for report.json, report.csv, report.png")
    x.add_argument("--seed", type=int, help="override the config seed")
    x.add_argument("--workers", type=int, help="parallel replicates (default: VNRF_THREADS or CPU count)")
    x.add_argument("--no-figure", action="store_true", help="skip the PNG figure")
    x.set_defaults(func=cmd_experiment)

    o = sub.add_parser("oracle", help="exact references")
    osub = o.add_subparsers(dest="oracle_cmd", required=True, parser_class=_Parser)
    for name, helptext in (("exact-measure", "exact law on a tiny window"),
                           ("pattern-probs", "exact pattern probabilities")):
        q = osub.add_parser(name, help=helptext)
        q.add_argument("--model", required=True, help="model JSON file")
        q.add_argument("--size", required=True, help="tiny window extents (at most 2^20 states)")
        q.add_argument("--out", help="output JSON (default stdout)")
        if name == "exact-measure":
            q.add_argument("--marginal", type=_int_list, help="sites of the reported marginal")
            q.add_argument("--full", action="store_true", help="include every configuration probability")
        else:
            q.add_argument("--radius", type=int, default=1, help="pattern radius (default 1)")
    q = osub.add_parser("dobrushin", help="single-site sensitivities r(0,k)")
    q.add_argument("--model", required=True, help="model JSON file")
    q.add_argument("--samples", type=int, default=500, help="random windows for sampled lower bounds")
    q.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    q.add_argument("--out", help="output JSON (default stdout)")
    q = osub.add_parser("identities", help="randomised identity checks")
    q.add_argument("--seed", type=int, default=0, help="RNG seed (default 0)")
    q.add_argument("--polygon-trials", type=int, default=100, help="random 9x9 windows (default 100)")
    q.add_argument("--loglik-trials", type=int, default=50, help="random samples (default 50)")
    q.add_argument("--out", help="output JSON (default stdout)")
    o.set_defaults(func=cmd_oracle)

    c = sub.add_parser("compose", help="regional law composed from one-point specifications")
    c.add_argument("--model", required=True, help="model JSON file")
    c.add_argument("--in", dest="input", required=True, help="VNRF1 grid holding the outside symbols")
    c.add_argument("--sites", type=_int_list, required=True, help="comma-separated linear site indices")
    c.add_argument("--order", type=_int_list, help="site exhaustion order (default ascending)")
    c.add_argument("--out", help="output JSON (default stdout)")
    c.set_defaults(func=cmd_compose)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"vnrf: error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, RuntimeError, OSError, KeyError) as exc:
        print(f"vnrf: error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
