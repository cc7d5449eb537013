"""White-box test functions, the benchmark suite and reference optima."""

from __future__ import annotations

import functools
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Optional

import numpy as np
from scipy.optimize import minimize

from .core import BoxDomain, FirstOrderOracle, FunctionOracle, ProblemSpec

__all__ = [
    "TestFunction",
    "BenchmarkProblem",
    "branin",
    "modified_branin",
    "bowl",
    "invbowl",
    "sinq",
    "rosenbrock",
    "sinc_objective",
    "quartic_constraint",
    "shifted_parabola",
    "BRANIN_MIN",
    "suite",
    "get_problem",
    "problem_ids",
    "infeasible_instance",
    "appendix_examples",
    "rosenbrock_problem",
    "grid_reference_min",
    "ReferenceResult",
    "Assumption2Report",
    "assumption2_audit",
    "resistive_oracle",
]

_BR_B = 5.1 / (4 * math.pi ** 2)
_BR_C = 5 / math.pi
_BR_S = 10 * (1 - 1 / (8 * math.pi))
BRANIN_MIN = 0.39788735772973816

BOWL_CENTER = np.array([-3.0, -3.0])
BOWL_RADIUS = 10.0


def branin(x):
    x1, x2 = float(x[0]), float(x[1])
    u = x2 - _BR_B * x1 * x1 + _BR_C * x1 - 6
    val = u * u + _BR_S * math.cos(x1) + 10
    grad = np.array([2 * u * (-2 * _BR_B * x1 + _BR_C) - _BR_S * math.sin(x1), 2 * u])
    return val, grad


def modified_branin(x):
    val, grad = branin(x)
    return val + 20 * float(x[0]) - 30 * float(x[1]), grad + np.array([20.0, -30.0])


def bowl(x, center=BOWL_CENTER, radius=BOWL_RADIUS):
    diff = np.asarray(x, dtype=np.float64) - center
    return 0.5 * (float(diff @ diff) - radius ** 2), diff


def invbowl(x, center=BOWL_CENTER, radius=BOWL_RADIUS):
    val, grad = bowl(x, center, radius)
    return -val, -grad


def sinq(x):
    x = np.asarray(x, dtype=np.float64)
    r = float(x @ x) / 10
    return math.sin(r), math.cos(r) * x / 5


def rosenbrock(x, a: float = 1.0, b: float = 5.0):
    """``sum_i b (x_{i+1} - x_i^2)^2 + (a - x_i)^2``, minimum 0 at ``a 1_d``."""
    x = np.asarray(x, dtype=np.float64)
    head, tail = x[:-1], x[1:]
    r = tail - head ** 2
    val = float(np.sum(b * r ** 2 + (a - head) ** 2))
    grad = np.zeros_like(x)
    grad[:-1] += -4 * b * r * head - 2 * (a - head)
    grad[1:] += 2 * b * r
    return val, grad


def sinc_objective(x):
    """``sin(x)/(2x) - 0.02 x`` in 1-D, extended by continuity at 0."""
    t = float(np.asarray(x).reshape(-1)[0])
    if abs(t) < 1e-4:
        val = 0.5 - t * t / 12
        der = -t / 6
    else:
        val = math.sin(t) / (2 * t)
        der = (t * math.cos(t) - math.sin(t)) / (2 * t * t)
    return val - 0.02 * t, np.array([der - 0.02])


def quartic_constraint(x):
    t = float(np.asarray(x).reshape(-1)[0])
    w = t * t - 36
    return (w * w - 900) / 4000, np.array([4 * t * w / 4000])


def shifted_parabola(x):
    t = float(np.asarray(x).reshape(-1)[0])
    return ((t - 1) ** 2 - 49) / 100, np.array([(t - 1) / 50])


@dataclass(frozen=True)
class TestFunction:
    """A white-box function; ``true_lip`` is ``None`` when only estimated."""

    name: str
    evaluator: Callable
    lip: float
    true_lip: Optional[float] = None
    mu: Optional[float] = None

    def __call__(self, x):
        return self.evaluator(x)

    def value(self, x) -> float:
        return self.evaluator(x)[0]


BR = TestFunction("Br", branin, 75.0)
MBR = TestFunction("MBr", modified_branin, 75.0)
BOWL = TestFunction("Bowl", bowl, 2.0, true_lip=1.0, mu=0.5)
INVBOWL = TestFunction("InvBowl", invbowl, 2.0, true_lip=1.0)
SINQ = TestFunction("SinQ", sinq, 6.0)


@dataclass(frozen=True)
class BenchmarkProblem:
    id: str
    objective: TestFunction
    constraint: TestFunction
    domain: BoxDomain
    starts: Dict[str, np.ndarray]
    eta: float = 0.1
    delta: float = 1e-5
    budget: int = 400
    lip_j: Optional[float] = None
    lip_h: Optional[float] = None
    mu: Optional[float] = None
    extra: dict = field(default_factory=dict)

    @property
    def d(self) -> int:
        return self.domain.d

    def oracle(self) -> FunctionOracle:
        return FunctionOracle(self.objective.evaluator, self.constraint.evaluator)

    def spec(self, start: str = "feasible", **overrides) -> ProblemSpec:
        q1 = overrides.pop("q1", None)
        if q1 is None:
            q1 = self.starts[start]
        base = ProblemSpec(
            domain=self.domain,
            oracle=overrides.pop("oracle", None) or self.oracle(),
            q1=np.asarray(q1, dtype=np.float64),
            lip_j=self.lip_j if self.lip_j is not None else self.objective.lip,
            lip_h=self.lip_h if self.lip_h is not None else self.constraint.lip,
            eta=self.eta,
            delta=self.delta,
            budget=self.budget,
            convexity_mu=self.mu if self.mu is not None else self.constraint.mu,
            name=f"{self.id}/{start}",
        )
        return replace(base, **overrides) if overrides else base


_BOX2 = BoxDomain.cube(2, -10.0, 10.0)
_R_SINQ_INF = math.sqrt(40 * math.pi / 3)
_R_SINQ_FEAS = math.sqrt(20 * math.pi / 3)
_BOWL_HALF = BOWL_CENTER + (BOWL_RADIUS / 2) * np.array([1.0, 1.0]) / math.sqrt(2)


def _pair(pid_odd: str, pid_even: str, con: TestFunction, inf_start, feas_start):
    starts = {"infeasible": np.array(inf_start, dtype=float),
              "feasible": np.array(feas_start, dtype=float)}
    return [BenchmarkProblem(pid_odd, BR, con, _BOX2, starts),
            BenchmarkProblem(pid_even, MBR, con, _BOX2, starts)]


@functools.lru_cache(maxsize=1)
def _suite():
    return (
        _pair("P1", "P2", SINQ, (-_R_SINQ_INF, _R_SINQ_INF), (_R_SINQ_FEAS, _R_SINQ_FEAS))
        + _pair("P3", "P4", MBR, (5.5, -9.0), (0.0, 10.0))
        + _pair("P5", "P6", INVBOWL, _BOWL_HALF, (5.5, -9.0))
        + _pair("P7", "P8", BOWL, (5.5, -9.0), _BOWL_HALF)
    )


def suite() -> list:
    """Problems P1..P8 on ``[-10, 10]^2`` with infeasible and feasible starts."""
    return list(_suite())


def infeasible_instance() -> BenchmarkProblem:
    """Minimise MBr subject to Br <= 0: empty feasible set since min Br > 0."""
    start = {"infeasible": np.array([0.0, 0.0])}
    start["feasible"] = start["infeasible"]
    return BenchmarkProblem("INF", MBR, BR, _BOX2, start)


def appendix_examples(lip_j: float = 0.2):
    """The two 1-D illustration problems on ``[-10, 10]``."""
    box = BoxDomain.cube(1, -10.0, 10.0)
    j = TestFunction("SincTilt", sinc_objective, lip_j)
    ex1 = BenchmarkProblem(
        "APXB-1", j, TestFunction("Quartic", quartic_constraint, 0.2), box,
        {"infeasible": np.array([-10.0]), "feasible": np.array([-10.0])},
        eta=0.01, delta=1e-8, budget=400, lip_j=lip_j, lip_h=0.2)
    ex2 = BenchmarkProblem(
        "APXB-2", j, TestFunction("Parabola", shifted_parabola, 1.2, true_lip=0.02, mu=0.01),
        box, {"feasible": np.array([-5.0]), "infeasible": np.array([-9.0])},
        eta=0.01, delta=1e-8, budget=400, lip_j=lip_j, lip_h=1.2, mu=0.01)
    return ex1, ex2


def rosenbrock_problem(d: int, budget: int = 400) -> BenchmarkProblem:
    """Rosenbrock under an inverted-bowl constraint, started at the corner ``-10 1_d``."""
    q1 = np.full(d, -10.0)
    xstar = np.ones(d)
    center = 0.5 * (q1 + xstar)
    radius = 0.4 * float(np.linalg.norm(xstar - q1))
    con = TestFunction(f"InvBowl{d}",
                       functools.partial(invbowl, center=center, radius=radius), 2.0,
                       true_lip=1.0)
    obj = TestFunction(f"Rosenbrock{d}", rosenbrock, 60.0)
    return BenchmarkProblem(f"ROSEN-{d}", obj, con, BoxDomain.cube(d, -10.0, 10.0),
                            {"feasible": q1, "infeasible": q1}, budget=budget,
                            lip_j=60.0, lip_h=2.0,
                            extra={"bowl_center": center, "bowl_radius": radius})


def problem_ids() -> list:
    return [p.id for p in suite()] + ["INF", "APXB-1", "APXB-2", "ROSEN-2", "ROSEN-3"]


def get_problem(pid: str) -> BenchmarkProblem:
    for p in suite():
        if p.id == pid:
            return p
    if pid == "INF":
        return infeasible_instance()
    if pid == "APXB-1":
        return appendix_examples()[0]
    if pid == "APXB-2":
        return appendix_examples()[1]
    if pid.startswith("ROSEN-"):
        try:
            d = int(pid.split("-", 1)[1])
        except ValueError:
            d = 0
        if d >= 2:
            return rosenbrock_problem(d)
    raise KeyError(f"unknown problem id {pid!r}; known: {', '.join(problem_ids())}")


@dataclass
class ReferenceResult:
    feasible: bool
    point: Optional[np.ndarray]
    value: Optional[float]
    grid_value: Optional[float] = None


def _grid(domain: BoxDomain, step: float) -> np.ndarray:
    axes = [np.linspace(lo, hi, int(round((hi - lo) / step)) + 1)
            for lo, hi in zip(domain.lower, domain.upper)]
    return np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, domain.d)


def _values(fn: TestFunction, pts) -> np.ndarray:
    return np.array([fn.evaluator(p)[0] for p in pts])


def grid_reference_min(problem: BenchmarkProblem, grid_step: float = 0.05,
                       level: float = 0.0, polish_starts: int = 8) -> ReferenceResult:
    """Grid argmin over ``{H <= level}`` followed by an SLSQP polish.

    The polish starts from the ``polish_starts`` best feasible grid points and
    keeps the best result still satisfying ``H <= level + 1e-9``.
    """
    if problem.d > 3:
        raise ValueError("grid_reference_min is limited to d <= 3")
    key = (problem.id, float(grid_step), float(level), int(polish_starts))
    if key not in _REFERENCE_CACHE:
        _REFERENCE_CACHE[key] = _grid_reference(problem, grid_step, level, polish_starts)
    return _REFERENCE_CACHE[key]


_REFERENCE_CACHE: dict = {}


def _grid_reference(problem, grid_step, level, polish_starts):
    pts = _grid(problem.domain, grid_step)
    hv = _values(problem.constraint, pts)
    ok = hv <= level
    if not np.any(ok):
        return ReferenceResult(False, None, None)
    pts = pts[ok]
    jv = _values(problem.objective, pts)
    order = np.argsort(jv, kind="stable")
    grid_best = float(jv[order[0]])
    best_x, best_v = pts[order[0]].copy(), grid_best
    bounds = list(zip(problem.domain.lower, problem.domain.upper))
    obj = problem.objective.evaluator
    con = problem.constraint.evaluator
    cons = [{"type": "ineq", "fun": lambda x: level - con(x)[0], "jac": lambda x: -con(x)[1]}]
    for k in order[:polish_starts]:
        res = minimize(lambda x: obj(x)[0], pts[k], jac=lambda x: obj(x)[1], method="SLSQP",
                       bounds=bounds, constraints=cons, options={"maxiter": 200, "ftol": 1e-12})
        x = problem.domain.clamp(res.x)
        v = obj(x)[0]
        if con(x)[0] <= level + 1e-9 and v < best_v:
            best_x, best_v = x, float(v)
    return ReferenceResult(True, best_x, best_v, grid_best)


@dataclass
class Assumption2Report:
    band_points: int
    min_grad_norm: Optional[float]
    threshold: float

    @property
    def passed(self) -> bool:
        return self.min_grad_norm is None or self.min_grad_norm >= self.threshold


def assumption2_audit(constraint, delta: float, lip_h: float, grid_step: float,
                      domain: BoxDomain) -> Assumption2Report:
    """Check ``|grad H| >= sqrt(2 L_H delta)`` on the band ``{0 < H <= delta}``.

    The band is usually thinner than the grid, so every grid point is also
    pushed by one Newton step toward the level ``delta/2``; points that land in
    the band (and inside the domain) are audited together with the grid hits.
    """
    fn = constraint.evaluator if isinstance(constraint, TestFunction) else constraint
    pts = _grid(domain, grid_step)
    norms = []
    for p in pts:
        hv, hg = fn(p)
        if 0 < hv <= delta:
            norms.append(float(np.linalg.norm(hg)))
        gg = float(hg @ hg)
        if gg == 0.0:
            continue
        q = p - (hv - delta / 2) * hg / gg
        if np.linalg.norm(q - p) > grid_step or not domain.contains(q):
            continue
        hq, gq = fn(q)
        if 0 < hq <= delta:
            norms.append(float(np.linalg.norm(gq)))
    thr = math.sqrt(2 * lip_h * delta)
    return Assumption2Report(len(norms), min(norms) if norms else None, thr)


class _Resistive(FirstOrderOracle):
    def __init__(self, c: float, objective: Callable):
        super().__init__()
        self.c = float(c)
        self.objective = objective

    def _evaluate(self, x):
        jv, jg = self.objective(x)
        return jv, jg, self.c, np.zeros_like(x)


def resistive_oracle(c: float, objective: Callable = sinq) -> FirstOrderOracle:
    """Oracle reporting the constant constraint ``H = c > 0`` with zero gradient."""
    if not c > 0:
        raise ValueError("resistive oracle needs c > 0")
    return _Resistive(c, objective)
