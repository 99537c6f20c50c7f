"""Command-line interface: ``rwb <subcommand> [options]``.

Exit status is 0 on success, 1 on bad input and 2 when a solver fails to
converge or a problem exceeds a size limit. Failures print one JSON line
``{"error": <class name>, "message": ...}`` on stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from pathlib import Path

import numpy as np

from ._parallel import set_default_threads
from .bench import BenchConfig, run_bench
from .coreset import build_coreset
from .errors import CapacityError, ConvergenceError, InputError, RWBError
from .fixed import FixedProblem, solve_fixed
from .free import FreeConfig, solve_free_rwb
from .measures import load_dataset, load_json, load_measure
from .robust import OutlierBudget, robust_distance
from .synth import ContaminationSpec, contaminate, evaluate, gen_gaussian_dataset, report_csv


class _Parser(argparse.ArgumentParser):
    # argparse exits with 2 on usage errors; 2 is reserved for solver failures
    def error(self, message):
        raise InputError(f"{self.prog}: {message}")


def _emit(text, out=None):
    if out is None:
        sys.stdout.write(text if text.endswith("\n") else text + "\n")
    else:
        Path(out).write_text(text if text.endswith("\n") else text + "\n")


def _dump(obj):
    return json.dumps(obj, sort_keys=True)


def _heartbeat(prefix):
    def beat(rec):
        obj = rec.get("objective")
        obj = "-" if obj is None else f"{obj:.6g}"
        print(
            f"[{prefix}] iter {rec['iteration']} {rec['step']} objective={obj}",
            file=sys.stderr,
            flush=True,
        )

    return beat


def _need_seed(args):
    if args.seed is None:
        raise InputError(f"{args.command} is stochastic and needs --seed")
    return int(args.seed)


def _load_support(path):
    """A measure file, or a bare ``{"points": ...}`` / list of points."""
    obj = load_json(path)
    pts = obj.get("points") if isinstance(obj, dict) else obj
    if pts is None:
        raise InputError(f"{path}: expected 'points'")
    try:
        return np.asarray(pts, dtype=np.float64).reshape(len(pts), -1)
    except (TypeError, ValueError) as exc:
        raise InputError(f"{path}: {exc}") from exc


def _free_config(args, zeta=None):
    return FreeConfig(
        z=args.z,
        zeta=args.zeta if zeta is None else zeta,
        epsilon=args.epsilon,
        gamma=args.gamma,
        t_init=args.t_init,
        iterations=args.iterations,
        ot_epsilon=args.ot_epsilon,
        rng_seed=0 if args.seed is None else int(args.seed),
        weights_on=args.weights_on,
        weight_solver=args.solver,
        rel_tol=args.rel_tol,
        max_rebuilds=args.max_rebuilds,
        radius=args.radius,
        threads=args.threads,
    )


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------


def cmd_gen(args):
    seed = _need_seed(args)
    data = gen_gaussian_dataset(
        args.m, args.n, args.d, args.spread, seed, args.clusters, args.center_scale,
        args.dispersion,
    )
    _emit(_dump(data.to_dict()), args.output)


def cmd_contaminate(args):
    seed = _need_seed(args)
    spec = ContaminationSpec(
        args.zeta, args.noise_mean, args.noise_std, args.shift_count, args.shift_std, seed
    )
    data = load_dataset(args.dataset)
    _emit(_dump(contaminate(data, spec).to_dict()), args.output)


def cmd_distance(args):
    mu, nu = load_measure(args.a), load_measure(args.b)
    budget = OutlierBudget(args.zeta_mu, args.zeta_nu)
    eps = args.eps if args.mode == "entropic" else None
    sol = robust_distance(mu, nu, budget, args.z, args.mode, eps)
    cost = max(sol.value, 0.0)
    dist = cost if args.z == 1 else cost ** (1.0 / args.z)
    if args.json:
        _emit(_dump({"distance": dist, "cost": cost, "z": args.z, "plan": sol.plan.entries.tolist()}))
    else:
        _emit(repr(dist))


def cmd_fixed_bary(args):
    data = load_dataset(args.dataset)
    support = _load_support(args.support)
    if support.shape[1] != data.dim:
        raise InputError(f"support has dimension {support.shape[1]}, data {data.dim}")
    problem = FixedProblem(data, support, args.zeta, args.z)
    sol = solve_fixed(problem, args.solver, args.eps, args.lp_max_variables)
    nu = sol.barycenter(support)
    obj = {"barycenter": nu.to_dict(), "value": sol.value, "gap": sol.gap}
    if args.output:
        _emit(_dump(nu.to_dict()), args.output)
        _emit(_dump({"value": sol.value, "gap": sol.gap}) if args.json else repr(sol.value))
    else:
        _emit(_dump(obj))


def cmd_free_bary(args):
    _need_seed(args)
    cfg = _free_config(args)
    data = load_dataset(args.dataset)
    t0 = time.perf_counter()
    nu, trace = solve_free_rwb(data, cfg, None if args.quiet else _heartbeat("free-bary"))
    runtime = time.perf_counter() - t0
    if args.trace:
        Path(args.trace).write_text(trace.to_jsonl(timing=args.timing))
    objs = trace.objectives()
    summary = {
        "objective": objs[-1] if objs else None,
        "rebuilds": trace.rebuilds,
        "converged": trace.converged,
    }
    if args.timing:
        summary["runtime_s"] = runtime
    if args.output:
        _emit(_dump(nu.to_dict()), args.output)
        _emit(_dump(summary))
    else:
        _emit(_dump({"barycenter": nu.to_dict(), **summary}))


def cmd_coreset(args):
    seed = _need_seed(args)
    data = load_dataset(args.dataset)
    anchor = load_measure(args.anchor)
    if anchor.dim != data.dim:
        raise InputError(f"anchor has dimension {anchor.dim}, data {data.dim}")
    res = build_coreset(
        data, anchor, args.epsilon, args.gamma, seed, args.zeta, args.z, threads=args.threads
    )
    _emit(_dump(res.to_dict()), args.output)


def cmd_eval(args):
    clean = load_dataset(args.clean)
    nu, ref = load_measure(args.barycenter), load_measure(args.reference)
    rep = evaluate(clean, nu, ref, args.z, args.runtime, args.threads)
    if args.json:
        _emit(_dump(rep.to_dict()))
    else:
        row = {"method": args.method, "zeta": None, "runtime_s": rep.runtime,
               "wd": rep.wd, "cost": rep.cost}
        _emit(report_csv([row]))


def cmd_bench(args):
    seed = _need_seed(args)
    cfg = BenchConfig(
        seed=seed,
        m=args.m,
        n=args.n,
        d=args.d,
        cluster_spread=args.spread,
        n_clusters=args.clusters,
        zeta=args.zeta,
        noise_mean=args.noise_mean,
        noise_std=args.noise_std,
        shift_count=args.shift_count,
        shift_std=args.shift_std,
        solver=_free_config(args, zeta=0.0),
    )
    hb = None
    if not args.quiet:
        hb = lambda method, rec: _heartbeat(f"bench:{method}")(rec)  # noqa: E731
    res = run_bench(cfg, timing=args.timing, heartbeat=hb)
    if args.trace:
        lines = []
        for method, trace in res.traces.items():
            for rec in trace.records:
                rec = dict(rec, method=method)
                if not args.timing:
                    rec.pop("elapsed", None)
                lines.append(_dump(rec))
        Path(args.trace).write_text("\n".join(lines) + "\n")
    if args.json:
        _emit(_dump({"rows": res.rows, "clean_opt": res.clean_opt}), args.output)
    else:
        _emit(res.csv(), args.output)


# ---------------------------------------------------------------------------
# Parser
# ---------------------------------------------------------------------------


def _solver_flags(p, zeta_default=0.0):
    p.add_argument("--zeta", type=float, default=zeta_default, help="outlier mass per measure")
    p.add_argument("--z", type=float, default=2.0, help="cost exponent")
    p.add_argument("--epsilon", type=float, default=0.2, help="coreset accuracy")
    p.add_argument("--gamma", type=int, default=100, help="draws per coreset ring")
    p.add_argument("--t-init", type=int, default=5, help="candidates for the initial barycenter")
    p.add_argument("--iterations", type=int, default=20)
    p.add_argument("--ot-epsilon", type=float, default=1e-3, help="additive error of entropic solves")
    p.add_argument("--weights-on", choices=("coreset", "full"), default="coreset")
    p.add_argument("--solver", choices=("auto", "lp", "entropic"), default="auto",
                   help="fixed-support solver for the weight step")
    p.add_argument("--rel-tol", type=float, default=1e-6)
    p.add_argument("--max-rebuilds", type=int, default=10)
    p.add_argument("--radius", type=float, default=None)
    p.add_argument("--timing", action="store_true", help="report wall-clock times")
    p.add_argument("--trace", help="write the solver trace as JSON lines")
    p.add_argument("--quiet", action="store_true", help="no heartbeat on stderr")


def build_parser():
    common = _Parser(add_help=False)
    common.add_argument("--json", action="store_true", help="structured JSON on stdout")
    common.add_argument("--threads", type=int, default=None, help="worker threads")
    common.add_argument("--config", help="JSON file of option values; flags override it")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("-o", "--output", help="write the main result here instead of stdout")

    parser = _Parser(prog="rwb", description="Robust Wasserstein distances and barycenters")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("gen", parents=[common], help="synthetic Gaussian-cluster dataset")
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--spread", type=float, default=0.25)
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--center-scale", type=float, default=3.0)
    p.add_argument("--dispersion", type=float, default=0.0, help="log-scale spread of per-measure noise")
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("contaminate", parents=[common], help="add Gaussian noise mass and shifts")
    p.add_argument("dataset")
    p.add_argument("--zeta", type=float, default=0.2)
    p.add_argument("--noise-mean", type=float, default=60.0)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--shift-count", type=int, default=0)
    p.add_argument("--shift-std", type=float, default=0.0)
    p.set_defaults(func=cmd_contaminate)

    p = sub.add_parser("distance", parents=[common], help="robust distance between two measures")
    p.add_argument("a")
    p.add_argument("b")
    p.add_argument("--zeta-mu", type=float, default=0.0)
    p.add_argument("--zeta-nu", type=float, default=0.0)
    p.add_argument("--z", type=float, default=2.0)
    p.add_argument("--mode", choices=("exact", "entropic"), default="exact")
    p.add_argument("--eps", type=float, default=1e-3, help="additive error in entropic mode")
    p.set_defaults(func=cmd_distance)

    p = sub.add_parser("fixed-bary", parents=[common], help="barycenter weights on a fixed support")
    p.add_argument("dataset")
    p.add_argument("--support", required=True, help="measure or points file")
    p.add_argument("--zeta", type=float, default=0.0)
    p.add_argument("--z", type=float, default=2.0)
    p.add_argument("--solver", choices=("auto", "lp", "entropic"), default="auto")
    p.add_argument("--eps", type=float, default=1e-3)
    p.add_argument("--lp-max-variables", type=int, default=50_000)
    p.set_defaults(func=cmd_fixed_bary)

    p = sub.add_parser("free-bary", parents=[common], help="free-support robust barycenter")
    p.add_argument("dataset")
    _solver_flags(p)
    p.set_defaults(func=cmd_free_bary)

    p = sub.add_parser("coreset", parents=[common], help="layered-sampling coreset")
    p.add_argument("dataset")
    p.add_argument("--anchor", required=True)
    p.add_argument("--epsilon", type=float, default=0.2)
    p.add_argument("--gamma", type=int, default=100)
    p.add_argument("--zeta", type=float, default=0.0)
    p.add_argument("--z", type=float, default=2.0)
    p.set_defaults(func=cmd_coreset)

    p = sub.add_parser("eval", parents=[common], help="WD and clean cost of a barycenter")
    p.add_argument("clean")
    p.add_argument("barycenter")
    p.add_argument("reference")
    p.add_argument("--z", type=float, default=2.0)
    p.add_argument("--runtime", type=float, default=None, help="runtime to pass through")
    p.add_argument("--method", default="computed")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("bench", parents=[common], help="contamination benchmark, CSV output")
    p.add_argument("--m", type=int, default=200)
    p.add_argument("--n", type=int, default=8)
    p.add_argument("--d", type=int, default=2)
    p.add_argument("--spread", type=float, default=0.25)
    p.add_argument("--clusters", type=int, default=4)
    p.add_argument("--noise-mean", type=float, default=60.0)
    p.add_argument("--noise-std", type=float, default=1.0)
    p.add_argument("--shift-count", type=int, default=0)
    p.add_argument("--shift-std", type=float, default=0.0)
    _solver_flags(p, zeta_default=0.2)
    p.set_defaults(func=cmd_bench)
    return parser


def _apply_config(parser, argv):
    """Re-parse with defaults taken from ``--config`` so explicit flags win."""
    args = parser.parse_args(argv)
    if not args.config:
        return args
    cfg = load_json(args.config)
    if not isinstance(cfg, dict):
        raise InputError(f"{args.config}: expected a JSON object")
    sub = parser._subparsers._group_actions[0].choices[args.command]
    dests = {a.dest for a in sub._actions}
    defaults = {}
    for key, value in cfg.items():
        dest = key.replace("-", "_")
        if dest not in dests or dest in ("config", "func", "help"):
            raise InputError(f"{args.config}: unknown option {key!r} for {args.command}")
        defaults[dest] = value
    positional = {a.dest for a in sub._actions if not a.option_strings}
    sub.set_defaults(**defaults)
    # positionals given in the file may be omitted on the command line
    for a in sub._actions:
        if a.dest in positional and a.dest in defaults:
            a.nargs = "?"
        if a.dest in defaults and a.required:
            a.required = False
    return parser.parse_args(argv)


def run(argv=None):
    """Run the CLI and return its exit status."""
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        if args.threads is not None:
            if args.threads < 1:
                raise InputError("--threads must be >= 1")
            set_default_threads(args.threads)
        args.func(args)
        return 0
    except (ConvergenceError, CapacityError) as exc:
        return _fail(exc, 2)
    except (InputError, OSError) as exc:
        return _fail(exc, 1)
    except RWBError as exc:  # pragma: no cover - every subclass is handled above
        return _fail(exc, 1)


def _fail(exc, code):
    print(_dump({"error": type(exc).__name__, "message": str(exc)}), file=sys.stderr)
    return code


def main():
    sys.exit(run())


if __name__ == "__main__":
    main()
