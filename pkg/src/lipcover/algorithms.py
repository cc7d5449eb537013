"""Sequential drivers: covering method, constrained covering, relax-and-project.

All three keep the full query history, rebuild the approximants from it at
every iteration, and delegate the surrogate subproblem to
:func:`lipcover.subsolver.solve`.

Reported ``delta_global`` uses the subsolver's certified lower bound rather
than the incumbent surrogate value, and takes the running maximum of those
bounds (valid because the minorants tighten and the surrogate feasible sets
shrink as data accumulates).  This absorbs the subsolver gap tolerance.
"""

from __future__ import annotations

import enum
import math
import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .approximants import ApproximantSet, Kind
from .core import (IterationTrace, ProblemSpec, RunOutcome, Status, ValidationError,
                   oracle_eval, validate_problem)
from .projection import balls_from_majorant, project_union_detailed
from .subsolver import BnBConfig, BnBStatus, ProblemKind, SurrogateProblem, solve

__all__ = [
    "InfeasibleStartMode",
    "AlgoConfig",
    "BudgetInputs",
    "covering_method",
    "constrained_covering",
    "relax_and_project",
    "gamma_certificate",
    "t_sufficient_unconstrained",
    "t_sufficient_constrained",
    "t_sufficient_mu_convex",
    "kappa_mu_convex",
    "delta_gap_bound",
    "pigeonhole_budget",
]

ASSUMPTION2_NOTE = ("constrained covering relies on a well-behaved constraint near its "
                    "boundary; this cannot be checked through the oracle")


class InfeasibleStartMode(str, enum.Enum):
    OFF = "Off"
    MINIMIZE_H_FIRST = "MinimizeHFirst"


@dataclass(frozen=True)
class AlgoConfig:
    """``bnb=None`` means a subsolver tolerance derived from ``eta``/``delta``."""

    bnb: Optional[BnBConfig] = None
    infeasible_start_mode: InfeasibleStartMode = InfeasibleStartMode.OFF
    projection_shrink: float = 1e-10

    def bnb_for(self, spec: ProblemSpec, constrained: bool) -> BnBConfig:
        if self.bnb is not None:
            return self.bnb
        return BnBConfig.for_thresholds(spec.eta, spec.delta if constrained else None)


class _Run:
    """Shared bookkeeping for one driver run."""

    def __init__(self, spec: ProblemSpec):
        self.spec = spec
        self.t0 = time.perf_counter()
        self.records = []
        self.trace = []
        self.best_lb = -math.inf
        self.node_limit = False
        self.notes = []
        self.best_idx: Optional[int] = None
        self.delta_global = math.inf

    def query(self, x):
        rec = oracle_eval(self.spec.oracle, x, self.spec.domain)
        self.records.append(rec)
        return rec

    def min_over(self, level: Optional[float]):
        best = None
        for i, r in enumerate(self.records):
            if level is not None and r.h_value > level:
                continue
            if best is None or r.j_value < self.records[best].j_value:
                best = i
        return best

    def j_minorant(self):
        return ApproximantSet.from_records(self.records, self.spec.lip_j, Kind.MINORANT)

    def h_approx(self, curvature, kind):
        return ApproximantSet.from_records(self.records, curvature, kind, which="h")

    def absorb(self, res):
        if res.status is BnBStatus.NODE_LIMIT:
            self.node_limit = True
        if res.lower_bound > self.best_lb:
            self.best_lb = res.lower_bound

    def log(self, rec, lb, nodes, t_iter, level, relax=None, phase="main", clamped=False):
        self.trace.append(IterationTrace(
            iter=len(self.trace) + 1,
            query=rec.point,
            j_at_query=rec.j_value,
            h_at_query=rec.h_value,
            feasible_flag=rec.h_value <= 0,
            within_delta_flag=level is not None and rec.h_value <= level,
            delta_global=self.delta_global,
            surrogate_lb=lb,
            subsolver_nodes=nodes,
            wall_ms=int(round(1000 * (time.perf_counter() - t_iter))),
            relax_point=relax,
            phase=phase,
            projection_clamped=clamped,
        ))

    def outcome(self, status, gamma=None):
        best = self.best_idx
        return RunOutcome(
            status=status,
            trace=self.trace,
            oracle_calls=len(self.records),
            best_point=None if best is None else np.array(self.records[best].point),
            best_value=None if best is None else self.records[best].j_value,
            delta_global=None if math.isinf(self.delta_global) else self.delta_global,
            gamma=gamma,
            wall_ms=int(round(1000 * (time.perf_counter() - self.t0))),
            subsolver_node_limit=self.node_limit,
            queries=list(self.records),
            notes=self.notes,
        )


def covering_method(spec: ProblemSpec, config: Optional[AlgoConfig] = None) -> RunOutcome:
    """Unconstrained covering method; any constraint data from the oracle is ignored."""
    validate_problem(spec)
    config = config or AlgoConfig()
    bnb = config.bnb_for(spec, constrained=False)
    run = _Run(spec)
    run.query(spec.q1)
    run.best_idx = 0
    status = None
    while len(run.records) < spec.budget:
        t_iter = time.perf_counter()
        res = solve(SurrogateProblem(ProblemKind.MIN_MINORANT, run.j_minorant(), spec.domain), bnb)
        run.absorb(res)
        if res.point is None:
            run.notes.append("subsolver returned no point")
            break
        rec = run.query(res.point)
        run.best_idx = run.min_over(None)
        run.delta_global = run.records[run.best_idx].j_value - run.best_lb
        run.log(rec, res.lower_bound, res.nodes_expanded, t_iter, None)
        if run.delta_global <= spec.eta:
            status = Status.MINIMUM
            break
    return run.outcome(status or Status.BUDGET_EXHAUSTED)


def gamma_certificate(h_minorant: ApproximantSet, spec: ProblemSpec, bnb: BnBConfig):
    """``-min(LB, 0)`` for a certified lower bound ``LB`` of ``inf H^-`` over the box."""
    res = solve(SurrogateProblem(ProblemKind.MIN_MINORANT, h_minorant, spec.domain), bnb)
    lb = res.lower_bound
    return (0.0 if lb >= 0 else -lb), res


def constrained_covering(spec: ProblemSpec, config: Optional[AlgoConfig] = None,
                         infeasible_start_mode=None) -> RunOutcome:
    """Covering method under a smooth, possibly non-convex constraint ``H <= 0``."""
    validate_problem(spec)
    config = config or AlgoConfig()
    mode = InfeasibleStartMode(infeasible_start_mode or config.infeasible_start_mode)
    bnb = config.bnb_for(spec, constrained=True)
    run = _Run(spec)
    run.notes.append(ASSUMPTION2_NOTE)
    delta = spec.delta
    run.query(spec.q1)

    if mode is InfeasibleStartMode.MINIMIZE_H_FIRST:
        while len(run.records) < spec.budget and run.min_over(delta) is None:
            t_iter = time.perf_counter()
            hm = run.h_approx(spec.lip_h, Kind.MINORANT)
            res = solve(SurrogateProblem(ProblemKind.MIN_MINORANT, hm, spec.domain), bnb)
            if res.status is BnBStatus.NODE_LIMIT:
                run.node_limit = True
            if res.point is None:
                break
            rec = run.query(res.point)
            run.log(rec, res.lower_bound, res.nodes_expanded, t_iter, delta, phase="feasibility")

    status = None
    iterations = 0
    while status is None and len(run.records) < spec.budget:
        t_iter = time.perf_counter()
        jm = run.j_minorant()
        hm = run.h_approx(spec.lip_h, Kind.MINORANT)
        res = solve(SurrogateProblem(ProblemKind.MINORANT_CONSTRAINT, jm, spec.domain, hm), bnb)
        iterations += 1
        if res.status is BnBStatus.INFEASIBLE:
            status = Status.INFEASIBLE
            break
        run.absorb(res)
        if res.point is None:
            run.notes.append("subsolver hit its node limit without a feasible point")
            break
        rec = run.query(res.point)
        if rec.h_value <= delta:
            run.best_idx = run.min_over(delta)
            run.delta_global = run.records[run.best_idx].j_value - run.best_lb
        run.log(rec, res.lower_bound, res.nodes_expanded, t_iter, delta)
        if run.delta_global <= spec.eta:
            status = Status.MINIMUM

    gamma = None
    if status is not Status.MINIMUM and math.isinf(run.delta_global):
        gamma, gres = gamma_certificate(run.h_approx(spec.lip_h, Kind.MINORANT), spec, bnb)
        if gres.status is BnBStatus.NODE_LIMIT:
            run.node_limit = True
        if status is None:
            # no main-loop iteration at all means the budget, not the data, ran out
            status = Status.INFEASIBLE if (iterations > 0 or len(run.trace) > 0) \
                else Status.BUDGET_EXHAUSTED
    if status is None:
        status = Status.BUDGET_EXHAUSTED
    return run.outcome(status, gamma)


class PreconditionError(ValidationError):
    """A driver precondition (e.g. a feasible start) does not hold."""


def relax_and_project(spec: ProblemSpec, config: Optional[AlgoConfig] = None) -> RunOutcome:
    """Violation-free covering for a μ-convex constraint, started from a feasible ``q1``."""
    validate_problem(spec)
    if spec.convexity_mu is None:
        raise ValidationError("relax-and-project needs the convexity constant μ")
    if not spec.lip_h > 0:
        raise ValidationError("relax-and-project needs L_H > 0")
    config = config or AlgoConfig()
    bnb = config.bnb_for(spec, constrained=True)
    run = _Run(spec)
    first = run.query(spec.q1)
    if first.h_value > 0:
        raise PreconditionError(
            f"relax-and-project requires a feasible q1 (H(q1) = {first.h_value:.6g} > 0)")
    run.best_idx = 0
    status = None
    while len(run.records) < spec.budget:
        t_iter = time.perf_counter()
        jm = run.j_minorant()
        hsc = run.h_approx(spec.convexity_mu, Kind.SC_MINORANT)
        res = solve(SurrogateProblem(ProblemKind.SC_CONSTRAINT, jm, spec.domain, hsc), bnb)
        if res.status is BnBStatus.INFEASIBLE:
            # impossible in exact arithmetic since q1 satisfies the relaxation
            run.notes.append("relaxed subproblem reported infeasible")
            break
        run.absorb(res)
        if res.point is None:
            run.notes.append("subsolver hit its node limit without a feasible point")
            break
        hplus = run.h_approx(spec.lip_h, Kind.MAJORANT)
        balls, dropped = balls_from_majorant(hplus, spec.lip_h, config.projection_shrink)
        if dropped:
            run.notes.append(f"iteration {len(run.trace) + 1}: dropped {dropped} empty balls")
        proj = project_union_detailed(res.point, balls, spec.domain)
        if hplus(proj.point) > bnb.feas_tol:
            raise RuntimeError("projected point fails the majorant gate")
        rec = run.query(proj.point)
        run.best_idx = run.min_over(None)
        run.delta_global = run.records[run.best_idx].j_value - run.best_lb
        run.log(rec, res.lower_bound, res.nodes_expanded, t_iter, 0.0,
                relax=np.array(res.point), clamped=proj.clamped)
        if run.delta_global <= spec.eta:
            status = Status.MINIMUM
            break
    return run.outcome(status or Status.BUDGET_EXHAUSTED)


# budget calculators ---------------------------------------------------------

def _ceil(x: float) -> int:
    """Ceiling that forgives float noise just above an integer."""
    r = round(x)
    if abs(x - r) <= 1e-9 * max(1.0, abs(x)):
        return int(r)
    return int(math.ceil(x))


@dataclass(frozen=True)
class BudgetInputs:
    d: int
    diam: float
    lip_j: float
    eta: float
    lip_h: float = 0.0
    delta: Optional[float] = None
    mu: Optional[float] = None
    grad_j_max: Optional[float] = None
    grad_h_max: Optional[float] = None

    def __post_init__(self):
        if self.d < 1 or not self.diam > 0:
            raise ValidationError("need d >= 1 and diam > 0")
        if not self.eta > 0:
            raise ValidationError("eta must be positive")


def _cover_factor(inp: BudgetInputs) -> float:
    return (inp.diam * math.sqrt(inp.d)) ** inp.d


def pigeonhole_budget(d: int, diam: float, eps: float) -> int:
    if not eps > 0:
        raise ValidationError("eps must be positive")
    return _ceil((diam * math.sqrt(d)) ** d * eps ** (-d / 2)) + 1


def t_sufficient_unconstrained(inp: BudgetInputs) -> int:
    return _ceil(_cover_factor(inp) * (inp.lip_j / inp.eta) ** (inp.d / 2)) + 1


def delta_gap_bound(grad_j_max: float, delta: float, lip_h: float) -> float:
    if not lip_h > 0:
        raise ValidationError("lip_h must be positive")
    return grad_j_max * math.sqrt(2 * delta / lip_h)


def t_sufficient_constrained(inp: BudgetInputs) -> int:
    if inp.delta is None or not inp.delta > 0 or not inp.lip_h > 0:
        raise ValidationError("constrained budget needs delta > 0 and lip_h > 0")
    if inp.grad_j_max is not None:
        slack = delta_gap_bound(inp.grad_j_max, inp.delta, inp.lip_h)
        if inp.eta < slack:
            warnings.warn(f"eta={inp.eta} is below the delta-relaxation slack {slack:.4g}; "
                          "the sufficient-budget guarantee does not apply", stacklevel=2)
    terms = (inp.lip_j / inp.eta) ** (inp.d / 2) + (inp.lip_h / inp.delta) ** (inp.d / 2)
    return _ceil(_cover_factor(inp) * terms) + 1


def kappa_mu_convex(inp: BudgetInputs) -> float:
    for name in ("mu", "grad_j_max", "grad_h_max"):
        v = getattr(inp, name)
        if v is None or not v > 0:
            raise ValidationError(f"μ-convex budget needs a positive {name}")
    if not inp.lip_j > 0 or not inp.lip_h > 0:
        raise ValidationError("μ-convex budget needs positive L_J and L_H")
    return inp.lip_j * (inp.lip_h * inp.grad_j_max / (2 * inp.lip_j * inp.grad_h_max)
                        + 2 * inp.lip_h / inp.mu)


def t_sufficient_mu_convex(inp: BudgetInputs) -> int:
    return _ceil(_cover_factor(inp) * (kappa_mu_convex(inp) / inp.eta) ** (inp.d / 2)) + 1
