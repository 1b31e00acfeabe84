import argparse
import sys
import numpy as np
from typing import Optional, Sequence
from loguru import logger
from .Analyzer.analyzer import WcetAnalyzer
from .Operations.Geometry import BoundingBox, Contains
from .Operations.Mpc import ClosedLoopSim, Condense, PendulumExample
from .Operations.Mpqp import RestrictParameters, ToDual
from .Operations.Solver import Solve
from .Operations.Wcet import LookupCost, MeasureWallclock, TraceCost
from .Utilities import serialization as io

EXIT_OK = 0
EXIT_INVALID = 1
EXIT_UNRESOLVED = 2
EXIT_MISMATCH = 3


def _floats(text: str, name: str) -> np.ndarray:
    try:
        return np.array([float(v) for v in text.split(",") if v.strip() != ""], dtype=float)
    except ValueError:
        raise ValueError(f"--{name} expects comma-separated numbers, got '{text}'")


def _dims(text: str) -> tuple:
    try:
        dims = tuple(int(v) for v in text.split(","))
    except ValueError:
        raise ValueError(f"--dims expects comma-separated indices, got '{text}'")
    return dims


def _fixed(text: Optional[str]) -> dict:
    fixed = {}
    if not text:
        return fixed
    for item in text.split(","):
        key, sep, value = item.partition("=")
        if not sep:
            raise ValueError(f"--fix expects k=v pairs, got '{item}'")
        try:
            fixed[int(key)] = float(value)
        except ValueError:
            raise ValueError(f"--fix expects integer index and numeric value, got '{item}'")
    return fixed


def _positive(name: str, value) -> None:
    if value is not None and value <= 0:
        raise ValueError(f"--{name} must be positive, got {value}")


def _overrides(args) -> dict:
    seed = getattr(args, "seed", None)
    samples = getattr(args, "samples", None)
    prune = False if getattr(args, "no_prune", False) else None
    return {
        "solver": {"k_max": getattr(args, "kmax", None), "add_rule": getattr(args, "add_rule", None)},
        "certification": {"degree_cap": getattr(args, "degree_cap", None), "seed": seed,
                          "workers": getattr(args, "workers", None)},
        "validation": {"samples": samples if args.command == "validate" else None,
                       "eps": getattr(args, "eps", None), "seed": seed},
        "wcet": {"profile": getattr(args, "profile", None), "prune": prune, "seed": seed},
        "baseline": {"samples": samples if args.command == "baseline" else None, "seed": seed},
    }


def _analyzer(args) -> WcetAnalyzer:
    for name in ("kmax", "degree_cap", "samples", "eps", "grid", "repeats"):
        _positive(name, getattr(args, name, None))
    return WcetAnalyzer(getattr(args, "config", None), overrides=_overrides(args))


def _certificate(args, P, analyzer: WcetAnalyzer):
    """Certificate from --regions when given (checked against the problem and solver), else a fresh one."""
    path = getattr(args, "regions", None)
    if path is None:
        return analyzer.certify(P)
    C = io.read_cert(path)
    if C.problem_digest != P.digest():
        raise ValueError(f"{path} was certified for a different problem")
    try:
        C.check_solver(analyzer.solver_config)
    except ValueError as e:
        raise ValueError(f"{path}: {e}; rerun with the same --kmax/--add-rule")
    return C

#----------------- Subcommands ------------------

def cmd_mpc(args) -> int:
    S = PendulumExample(args.horizon, args.plant_config)
    if args.action == "simulate":
        x0 = _floats(args.x0, "x0")
        r = None if args.reference is None else _floats(args.reference, "reference")
        analyzer = _analyzer(args)
        traj = ClosedLoopSim(S, x0, args.steps, analyzer.solver_config, r=r, cm=analyzer.cost_model)
        ns, nu = S.model.n_s, S.model.n_u
        header = ["step"] + [f"x_{i}" for i in range(ns)] + [f"u_{i}" for i in range(nu)] + ["iterations", "cost"]
        rows = [[k, *traj.states[k], *traj.inputs[k], traj.iterations[k], traj.costs[k]] for k in range(args.steps)]
        io.write_csv(args.out, header, rows)
        if traj.flagged:
            logger.warning(f"Steps without an optimal solve: {traj.flagged}")
        print(f"steps={args.steps} final_norm={float(np.linalg.norm(traj.states[-1]))!r}")
        return EXIT_OK
    P = Condense(S)
    if args.slice_dims:
        P = RestrictParameters(P, _dims(args.slice_dims), _fixed(args.fix))
    io.write_json(io.problem_to_dict(P), args.out)
    if args.spec_out:
        io.write_json(io.spec_to_dict(S), args.spec_out)
    print(f"n={P.n} m={P.m} n_theta={P.n_theta}")
    return EXIT_OK


def cmd_solve(args) -> int:
    P = io.problem_from_dict(io.read_json(args.problem))
    analyzer = _analyzer(args)
    theta = _floats(args.theta, "theta")
    if theta.size != P.n_theta:
        raise ValueError(f"--theta has {theta.size} entries, expected {P.n_theta}")
    res = Solve(ToDual(P), theta, analyzer.solver_config)
    print(f"n={P.n} m={P.m} n_theta={P.n_theta}")
    print(f"status: {res.status}")
    print(f"W*: {list(res.W)}")
    print(f"x*: {None if res.x is None else res.x.tolist()}")
    print(f"iterations: {res.iterations}")
    print(f"cost: {TraceCost(res.trace, analyzer.cost_model)}")
    return EXIT_OK


def cmd_certify(args) -> int:
    P = io.problem_from_dict(io.read_json(args.problem))
    C = _analyzer(args).certify(P)
    io.write_json(io.cert_to_dict(C), args.out)
    print(f"regions={len(C.records)} unresolved={len(C.unresolved)} seed={C.options.seed}")
    return EXIT_OK


def cmd_wcet(args) -> int:
    P = io.problem_from_dict(io.read_json(args.problem))
    analyzer = _analyzer(args)
    C = _certificate(args, P, analyzer)
    report = analyzer.wcet(P, certificate=C, baseline=args.baseline)
    io.write_json(io.report_to_dict(report), args.out)
    print(f"worst_cost={report.worst_cost} witness_region={report.witness_region} status={report.status} "
          f"survivors={len(report.survivors)} pruned={len(report.pruned)}")
    if report.status != "exact":
        print(report.caveat, file=sys.stderr)
        return EXIT_UNRESOLVED
    return EXIT_OK


def cmd_validate(args) -> int:
    P = io.problem_from_dict(io.read_json(args.problem))
    analyzer = _analyzer(args)
    C = _certificate(args, P, analyzer)
    report = analyzer.validate(P, C)
    if args.out:
        io.write_json(report.to_dict(), args.out)
    print(f"samples={report.samples} checked={report.checked} matches={report.matches} "
          f"boundary_skipped={report.boundary_skipped} unresolved_hits={report.unresolved_hits} "
          f"seed={analyzer.config['validation']['seed']}")
    if report.counterexamples:
        for ce in report.counterexamples[:args.show]:
            print(f"counterexample {ce['kind']}: theta={ce['theta']} regions={ce['regions']}", file=sys.stderr)
        return EXIT_MISMATCH
    return EXIT_OK


def cmd_baseline(args) -> int:
    P = io.problem_from_dict(io.read_json(args.problem))
    result = _analyzer(args).baseline(P)
    io.write_csv(args.out, ["cost", "count"], io.histogram_rows(result.histogram))
    print(f"samples={len(result.costs)} max_cost={result.max_cost}")
    return EXIT_OK


def cmd_slice(args) -> int:
    P = io.problem_from_dict(io.read_json(args.problem))
    analyzer = _analyzer(args)
    C = _certificate(args, P, analyzer)
    i, j = _dims(args.dims)
    if i == j or not (0 <= i < P.n_theta and 0 <= j < P.n_theta):
        raise ValueError(f"--dims must name two distinct parameters in 0..{P.n_theta - 1}")
    fixed = _fixed(args.fix)
    lo, hi = BoundingBox(C.Theta0)
    base = 0.5 * (lo + hi)
    for k, v in fixed.items():
        if not 0 <= k < P.n_theta or k in (i, j):
            raise ValueError(f"--fix index {k} is invalid for dims {i},{j}")
        base[k] = v
    report = analyzer.wcet(P, certificate=C)
    costMap = {**report.region_costs, **report.advisory_costs}
    rows = []
    for a in np.linspace(lo[i], hi[i], args.grid):
        for b in np.linspace(lo[j], hi[j], args.grid):
            theta = base.copy()
            theta[i], theta[j] = a, b
            if Contains(C.Theta0, theta) == "outside":
                continue
            hit = LookupCost(C, costMap, theta)
            rows.append([float(a), float(b), "" if hit.region_id is None else hit.region_id,
                         "" if hit.cost is None else hit.cost])
    io.write_csv(args.out, [f"theta_{i}", f"theta_{j}", "region_id", "cycles"], rows)
    print(f"points={len(rows)}")
    return EXIT_OK


def cmd_archetypes(args) -> int:
    P = io.problem_from_dict(io.read_json(args.problem))
    analyzer = _analyzer(args)
    C = _certificate(args, P, analyzer)
    report = analyzer.wcet(P, certificate=C)
    header = ["region_id"] + [f"theta_{k}" for k in range(P.n_theta)] + ["cost"]
    rows = [[rid, *theta, report.region_costs.get(rid, report.advisory_costs.get(rid))]
            for rid, theta in report.archetypes if theta is not None]
    io.write_csv(args.out, header, rows)
    print(f"archetypes={len(rows)}")
    return EXIT_OK


def cmd_wallclock(args) -> int:
    P = io.problem_from_dict(io.read_json(args.problem))
    analyzer = _analyzer(args)
    C = _certificate(args, P, analyzer)
    report = analyzer.wcet(P, certificate=C)
    Dd = ToDual(P)
    rows = []
    for rid, theta in report.archetypes:
        if theta is None:
            continue
        rows.append([rid, MeasureWallclock(Dd, theta, args.repeats, analyzer.solver_config).ns])
    io.write_csv(args.out, ["region_id", "ns"], rows)
    logger.warning("Wall-clock timings are host measurements and are not certified")
    print(f"archetypes={len(rows)}")
    return EXIT_OK


def cmd_table(args) -> int:
    rows = _analyzer(args).scalability(_dims(args.horizons))
    header = ["horizon", "regions", "survivors", "cert_seconds", "worst_cost"]
    io.write_csv(args.out, header, [[r[h] for h in header] for r in rows])
    for r in rows:
        print(" ".join(f"{h}={r[h]}" for h in header))
    return EXIT_OK

#----------------- Parser ------------------

def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("-v", "--verbose", action="count", default=0, help="-v info, -vv debug")
    common.add_argument("--workers", type=int, default=None, help="worker processes (0 = all cores)")
    common.add_argument("--config", default=None, help="configuration file (defaults.yaml layout)")
    common.add_argument("--seed", type=int, default=None)
    common.add_argument("--kmax", type=int, default=None)
    common.add_argument("--add-rule", dest="add_rule", default=None, choices=["dantzig", "bland"])
    common.add_argument("--profile", default=None, help="cost profile: unit, flop or a profile file")

    parser = argparse.ArgumentParser(prog="mpcert", description="Execution-cost certification for linear MPC.")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("mpc", parents=[common], help="build or simulate the pendulum MPC problem")
    p.add_argument("action", choices=["pendulum", "simulate"])
    p.add_argument("--horizon", type=int, default=10)
    p.add_argument("--plant-config", dest="plant_config", default=None)
    p.add_argument("--out", required=True)
    p.add_argument("--spec-out", dest="spec_out", default=None)
    p.add_argument("--slice-dims", dest="slice_dims", default=None, help="keep only these parameters, e.g. 2,3")
    p.add_argument("--fix", default=None, help="values of the other parameters, e.g. 0=0.1,1=0")
    p.add_argument("--x0", default="0,0,0.05,0")
    p.add_argument("--reference", default=None)
    p.add_argument("--steps", type=int, default=50)
    p.set_defaults(func=cmd_mpc)

    p = sub.add_parser("solve", parents=[common], help="solve one parameter")
    p.add_argument("problem")
    p.add_argument("--theta", required=True)
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("certify", parents=[common], help="certify the parameter set")
    p.add_argument("problem")
    p.add_argument("--out", required=True)
    p.add_argument("--degree-cap", dest="degree_cap", type=int, default=None)
    p.set_defaults(func=cmd_certify)

    p = sub.add_parser("wcet", parents=[common], help="worst-case cost")
    p.add_argument("problem")
    p.add_argument("--regions", default=None)
    p.add_argument("--no-prune", dest="no_prune", action="store_true")
    p.add_argument("--baseline", action="store_true", help="attach a Monte-Carlo baseline to the report")
    p.add_argument("--degree-cap", dest="degree_cap", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_wcet)

    p = sub.add_parser("validate", parents=[common], help="sample-check a certified cover")
    p.add_argument("problem")
    p.add_argument("--regions", required=True)
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--eps", type=float, default=None)
    p.add_argument("--out", default=None)
    p.add_argument("--show", type=int, default=10, help="counterexamples echoed on stderr")
    p.set_defaults(func=cmd_validate)

    p = sub.add_parser("baseline", parents=[common], help="Monte-Carlo cost histogram")
    p.add_argument("problem")
    p.add_argument("--samples", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_baseline)

    p = sub.add_parser("slice", parents=[common], help="region and cost map over a 2-D grid")
    p.add_argument("problem")
    p.add_argument("--regions", default=None)
    p.add_argument("--dims", required=True)
    p.add_argument("--fix", default=None)
    p.add_argument("--grid", type=int, default=50)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_slice)

    p = sub.add_parser("archetypes", parents=[common], help="archetypal parameters with their costs")
    p.add_argument("problem")
    p.add_argument("--regions", default=None)
    p.add_argument("--no-prune", dest="no_prune", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_archetypes)

    p = sub.add_parser("wallclock", parents=[common], help="host timings of the archetypes (not certified)")
    p.add_argument("problem")
    p.add_argument("--regions", default=None)
    p.add_argument("--repeats", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_wallclock)

    p = sub.add_parser("table", parents=[common], help="scalability sweep over pendulum horizons")
    p.add_argument("--horizons", default="1,2,3,4")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_table)
    return parser


def _configure_logging(verbose: int) -> None:
    logger.remove()
    level = "WARNING" if verbose <= 0 else "INFO" if verbose == 1 else "DEBUG"
    logger.add(sys.stderr, level=level, format="<level>{level: <8}</level> {name}:{function} - {message}")


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_INVALID
    _configure_logging(args.verbose)
    try:
        return args.func(args)
    except (ValueError, OverflowError, NotImplementedError, OSError) as e:
        print(f"mpcert {args.command}: {e}", file=sys.stderr)
        return EXIT_INVALID


if __name__ == "__main__":
    sys.exit(main())
