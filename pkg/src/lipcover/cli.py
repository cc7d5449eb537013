"""Command-line front end.

Exit codes: 0 Minimum, 2 Infeasible, 3 BudgetExhausted, 1 usage or validation error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
import time
from typing import Optional

import numpy as np

from . import algorithms as alg
from .benchmarks import get_problem, grid_reference_min, problem_ids, suite
from .core import OracleError, Status, ValidationError
from .io import atomic_write_text, summary_dict, write_json, write_trace_csv
from .subsolver import BnBConfig

EXIT_CODES = {Status.MINIMUM: 0, Status.INFEASIBLE: 2, Status.BUDGET_EXHAUSTED: 3}
BENCH_COLUMNS = ["problem", "algorithm", "start", "iterations", "infeasible_queries",
                 "delta_global", "true_gap", "wall_s"]


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(1, f"{self.prog}: error: {message}\n")


def read_config_file(path) -> dict:
    """``key=value`` lines; ``#`` starts a comment; keys use flag names or dest names."""
    out = {}
    try:
        with open(path, encoding="utf-8") as fh:
            lines = fh.readlines()
    except OSError as exc:
        raise UsageError(f"cannot read config file {path}: {exc}")
    for n, line in enumerate(lines, 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{n}: expected key=value")
        k, v = (s.strip() for s in line.split("=", 1))
        out[k.lstrip("-").replace("-", "_")] = v
    return out


def _floats(s: str) -> np.ndarray:
    try:
        return np.array([float(x) for x in s.split(",")])
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {s!r}")


def _add_subsolver_flags(p):
    p.add_argument("--abs-gap-tol", type=float, help="subsolver absolute gap (default min(eta,delta)/10)")
    p.add_argument("--max-nodes", type=int, help="subsolver node cap (env LIPCOVER_MAX_NODES)")
    p.add_argument("--no-lp-bound", action="store_true", help="disable the knapsack-LP box bound")


def build_parser() -> argparse.ArgumentParser:
    ap = _Parser(prog="lipcover", description="Covering methods for smooth black-box optimisation")
    ap.add_argument("--config", help="key=value file; flags override its entries")
    sub = ap.add_subparsers(dest="command", parser_class=_Parser)

    s = sub.add_parser("solve", help="run one algorithm on a built-in problem")
    s.add_argument("--problem", required=True, help=f"one of {', '.join(problem_ids())}")
    s.add_argument("--algorithm", choices=["cover", "constrained", "relax-project"],
                   default="constrained")
    s.add_argument("--start", default=None,
                   help="'feasible', 'infeasible' or a comma-separated point")
    s.add_argument("--eta", type=float)
    s.add_argument("--delta", type=float)
    s.add_argument("--budget", type=int)
    s.add_argument("--lip-j", type=float)
    s.add_argument("--lip-h", type=float)
    s.add_argument("--mu", type=float)
    s.add_argument("--infeasible-start-mode", choices=["off", "minimize-h"], default="off")
    s.add_argument("--trace", help="trace CSV path")
    s.add_argument("--summary", help="summary JSON path")
    _add_subsolver_flags(s)

    b = sub.add_parser("bench", help="run the P1-P8 suite")
    b.add_argument("--problems", default=",".join(p.id for p in suite()))
    b.add_argument("--budget", type=int)
    b.add_argument("--out", help="comparison CSV path (stdout if omitted)")
    b.add_argument("--trace-dir", help="write one trace CSV per row here")
    _add_subsolver_flags(b)

    g = sub.add_parser("budget", help="evaluate the sufficient-budget formulas")
    g.add_argument("--d", type=int, required=True)
    g.add_argument("--diam", type=float, required=True)
    g.add_argument("--lip-j", type=float, required=True)
    g.add_argument("--eta", type=float, required=True)
    g.add_argument("--lip-h", type=float)
    g.add_argument("--delta", type=float)
    g.add_argument("--mu", type=float)
    g.add_argument("--grad-j-max", type=float)
    g.add_argument("--grad-h-max", type=float)

    m = sub.add_parser("mountaincar", help="train the mountain-car policy with and without the energy constraint")
    m.add_argument("--budget", type=int, default=10)
    m.add_argument("--lip", type=float, default=100.0, help="L_J = L_H")
    m.add_argument("--eta", type=float, default=1.0)
    m.add_argument("--delta", type=float, default=1e-3)
    m.add_argument("--out", help="per-query CSV path")
    m.add_argument("--summary", help="summary JSON path")
    return ap


def _bnb(args, eta, delta) -> Optional[BnBConfig]:
    if args.abs_gap_tol is None and args.max_nodes is None and not args.no_lp_bound:
        return None
    tol = args.abs_gap_tol if args.abs_gap_tol is not None else (
        min(eta, delta) / 10 if delta is not None else eta / 10)
    return BnBConfig(abs_gap_tol=tol, max_nodes=args.max_nodes, lp_bound=not args.no_lp_bound)


def _build_spec(args):
    try:
        prob = get_problem(args.problem)
    except KeyError as exc:
        raise UsageError(str(exc.args[0]))
    start = args.start
    if start is None:
        start = "feasible"
    over = {}
    if start in ("feasible", "infeasible"):
        start_name = start
    else:
        try:
            over["q1"] = _floats(start)
        except argparse.ArgumentTypeError as exc:
            raise UsageError(f"--start: {exc}")
        start_name = "custom"
    for flag, key in (("eta", "eta"), ("delta", "delta"), ("budget", "budget"),
                      ("lip_j", "lip_j"), ("lip_h", "lip_h"), ("mu", "convexity_mu")):
        v = getattr(args, flag)
        if v is not None:
            over[key] = v
    return prob, prob.spec(start_name, **over), start_name


def _run(algorithm: str, spec, cfg):
    if algorithm == "cover":
        return alg.covering_method(spec, cfg)
    if algorithm == "constrained":
        return alg.constrained_covering(spec, cfg)
    return alg.relax_and_project(spec, cfg)


def cmd_solve(args) -> int:
    prob, spec, start_name = _build_spec(args)
    mode = (alg.InfeasibleStartMode.MINIMIZE_H_FIRST if args.infeasible_start_mode == "minimize-h"
            else alg.InfeasibleStartMode.OFF)
    cfg = alg.AlgoConfig(bnb=_bnb(args, spec.eta, spec.delta), infeasible_start_mode=mode)
    out = _run(args.algorithm, spec, cfg)
    echo = {"problem": prob.id, "algorithm": args.algorithm, "start": start_name,
            "q1": [float(x) for x in spec.q1], "eta": spec.eta, "delta": spec.delta,
            "budget": spec.budget, "lip_j": spec.lip_j, "lip_h": spec.lip_h,
            "mu": spec.convexity_mu, "infeasible_start_mode": mode.value,
            "abs_gap_tol": args.abs_gap_tol, "max_nodes": args.max_nodes}
    summary = summary_dict(out, echo)
    if args.trace:
        write_trace_csv(args.trace, out.trace)
    if args.summary:
        write_json(args.summary, summary)
    gamma = "null" if out.gamma is None else f"{out.gamma:.6g}"
    dg = "inf" if out.delta_global is None else f"{out.delta_global:.6g}"
    best = "none" if out.best_value is None else f"{out.best_value:.10g}"
    print(f"{prob.id} {args.algorithm}: status={out.status.value} iterations={out.iterations} "
          f"best={best} delta_global={dg} gamma={gamma} "
          f"infeasible_queries={out.infeasible_queries}")
    if out.subsolver_node_limit:
        print("warning: the subsolver hit its node limit in at least one iteration", file=sys.stderr)
    return EXIT_CODES[out.status]


def _bench_rows(args):
    ids = [s.strip() for s in args.problems.split(",") if s.strip()]
    for pid in ids:
        prob = get_problem(pid)
        runs = [("constrained", "infeasible"), ("constrained", "feasible")]
        if prob.constraint.mu is not None:
            runs.append(("relax-project", "feasible"))
        for algorithm, start in runs:
            yield prob, algorithm, start


def cmd_bench(args) -> int:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(BENCH_COLUMNS)
    failures = 0
    for prob, algorithm, start in _bench_rows(args):
        over = {} if args.budget is None else {"budget": args.budget}
        try:
            spec = prob.spec(start, **over)
            cfg = alg.AlgoConfig(bnb=_bnb(args, spec.eta, spec.delta))
            t0 = time.perf_counter()
            out = _run(algorithm, spec, cfg)
            wall = time.perf_counter() - t0
            ref = grid_reference_min(prob)
            gap = (out.best_value - ref.value) if (out.best_value is not None and ref.feasible) else None
            row = [prob.id, algorithm, start, out.iterations, out.infeasible_queries,
                   "inf" if out.delta_global is None else repr(out.delta_global),
                   "" if gap is None else repr(gap), f"{wall:.3f}"]
            if args.trace_dir:
                write_trace_csv(f"{args.trace_dir}/{prob.id}_{algorithm}_{start}.csv", out.trace)
        except (ValidationError, OracleError, RuntimeError) as exc:
            failures += 1
            row = [prob.id, algorithm, start, "", "", "", "", ""]
            print(f"{prob.id} {algorithm} {start}: error: {exc}", file=sys.stderr)
        w.writerow(row)
        print(",".join(str(x) for x in row), file=sys.stderr)
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    else:
        sys.stdout.write(buf.getvalue())
    return 1 if failures else 0


def cmd_budget(args) -> int:
    inp = alg.BudgetInputs(d=args.d, diam=args.diam, lip_j=args.lip_j, eta=args.eta,
                           lip_h=args.lip_h or 0.0, delta=args.delta, mu=args.mu,
                           grad_j_max=args.grad_j_max, grad_h_max=args.grad_h_max)
    print(f"t_sufficient_unconstrained={alg.t_sufficient_unconstrained(inp)}")
    if args.lip_h is not None and args.delta is not None:
        print(f"t_sufficient_constrained={alg.t_sufficient_constrained(inp)}")
    mu_args = (args.mu, args.grad_j_max, args.grad_h_max, args.lip_h)
    if any(v is not None for v in (args.mu, args.grad_j_max, args.grad_h_max)):
        if any(v is None for v in mu_args):
            raise UsageError("the μ-convex budget needs --mu, --grad-j-max, --grad-h-max and --lip-h")
        print(f"kappa={alg.kappa_mu_convex(inp)!r}")
        print(f"t_sufficient_mu_convex={alg.t_sufficient_mu_convex(inp)}")
    return 0


def cmd_mountaincar(args) -> int:
    from .mountaincar import GOAL_ENERGY, TrainConfig, train

    results = {}
    for constrained in (True, False):
        cfg = TrainConfig(constrained=constrained, budget=args.budget, lip_j=args.lip,
                          lip_h=args.lip, eta=args.eta, delta=args.delta)
        results["constrained" if constrained else "unconstrained"] = train(cfg)
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(["run", "query", "reward", "terminal_energy", "constraint", "theta"])
    for name, res in results.items():
        for k, (rw, en) in enumerate(zip(res.rewards, res.energies), 1):
            theta = ";".join(repr(float(x)) for x in res.outcome.queries[k - 1].point)
            w.writerow([name, k, repr(rw), repr(en), repr(GOAL_ENERGY - en), theta])
    if args.out:
        atomic_write_text(args.out, buf.getvalue())
    summary = {}
    for name, res in results.items():
        summary[name] = {
            "status": res.outcome.status.value,
            "episodes": res.episodes,
            "episodes_if_unshared": res.episodes_unshared,
            "episodes_if_fully_shared": res.episodes_fully_shared,
            "best_reward": res.best_reward,
            "best_theta": [float(x) for x in res.best_theta],
            "success": res.success,
            "oracle_calls": res.outcome.oracle_calls,
            "wall_ms": res.outcome.wall_ms,
        }
        print(f"{name}: episodes={res.episodes} best_reward={res.best_reward:.4f} "
              f"success={res.success} status={res.outcome.status.value}")
    if args.summary:
        write_json(args.summary, summary)
    return 0


COMMANDS = {"solve": cmd_solve, "bench": cmd_bench, "budget": cmd_budget,
            "mountaincar": cmd_mountaincar}


def main(argv=None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        # only --config and the command name; the full parse would enforce required flags
        pre_parser = argparse.ArgumentParser(add_help=False)
        pre_parser.add_argument("--config")
        pre, rest = pre_parser.parse_known_args(argv)
        command = next((a for a in rest if a in COMMANDS), None)
        if pre.config and command:
            values = read_config_file(pre.config)
            subparser = parser._subparsers._group_actions[0].choices[command]
            known = {a.dest for a in subparser._actions}
            unknown = sorted(set(values) - known)
            if unknown:
                raise UsageError(f"unknown config keys: {', '.join(unknown)}")
            for action in subparser._actions:
                if action.dest not in values:
                    continue
                if isinstance(action, argparse._StoreTrueAction):
                    flag = values[action.dest].lower()
                    if flag not in ("true", "false"):
                        raise UsageError(f"config key {action.dest} must be true or false")
                    values[action.dest] = flag == "true"
                action.required = False
            subparser.set_defaults(**values)
        args = parser.parse_args(argv)
        if not args.command:
            parser.print_help(sys.stderr)
            return 1
        return COMMANDS[args.command](args)
    except (UsageError, ValidationError, OracleError) as exc:
        print(f"lipcover: error: {exc}", file=sys.stderr)
        return 1
    except SystemExit as exc:
        # argparse exits directly on --help and on malformed flags
        return exc.code if isinstance(exc.code, int) else 1


if __name__ == "__main__":
    sys.exit(main())
