"""Domain types, problem specification, oracles and run bookkeeping.

Points are plain 1-D ``float64`` numpy arrays; the containers below store
them read-only so that a validated :class:`ProblemSpec` can be shared
between threads.
"""

from __future__ import annotations

import enum
import math
import threading
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np

__all__ = [
    "ValidationError",
    "OracleError",
    "as_point",
    "BoxDomain",
    "QueryRecord",
    "FirstOrderOracle",
    "FunctionOracle",
    "FiniteDifferenceOracle",
    "ProblemSpec",
    "Status",
    "IterationTrace",
    "RunOutcome",
    "validate_problem",
    "oracle_eval",
    "finite_diff_oracle",
]


class ValidationError(ValueError):
    """A problem specification violates one of its invariants."""


class OracleError(RuntimeError):
    """An oracle returned non-finite or malformed output."""


def as_point(x, d: Optional[int] = None, name: str = "point") -> np.ndarray:
    arr = np.array(x, dtype=np.float64).reshape(-1)
    if d is not None and arr.shape[0] != d:
        raise ValidationError(f"{name} has length {arr.shape[0]}, expected {d}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(f"{name} has non-finite coordinates")
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class BoxDomain:
    """Axis-aligned box ``[lower, upper]``."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lo = as_point(self.lower, name="lower")
        hi = as_point(self.upper, len(lo), name="upper")
        if np.any(lo > hi):
            k = int(np.argmax(lo > hi))
            raise ValidationError(f"box lower[{k}] > upper[{k}]")
        object.__setattr__(self, "lower", lo)
        object.__setattr__(self, "upper", hi)

    @classmethod
    def cube(cls, d: int, lo: float, hi: float) -> "BoxDomain":
        return cls(np.full(d, float(lo)), np.full(d, float(hi)))

    @property
    def d(self) -> int:
        return self.lower.shape[0]

    @property
    def diameter(self) -> float:
        return float(np.linalg.norm(self.upper - self.lower))

    @property
    def center(self) -> np.ndarray:
        return 0.5 * (self.lower + self.upper)

    def contains(self, x, tol: float = 0.0) -> bool:
        x = np.asarray(x, dtype=np.float64)
        return bool(np.all(x >= self.lower - tol) and np.all(x <= self.upper + tol))

    def clamp(self, x) -> np.ndarray:
        return np.minimum(np.maximum(np.asarray(x, dtype=np.float64), self.lower), self.upper)


@dataclass(frozen=True)
class QueryRecord:
    """One first-order oracle answer for both the objective and the constraint."""

    point: np.ndarray
    j_value: float
    j_grad: np.ndarray
    h_value: float
    h_grad: np.ndarray


class FirstOrderOracle:
    """Base class: maps a point to ``(J, grad J, H, grad H)`` and counts calls.

    Subclasses implement :meth:`_evaluate`. The call counter is protected by a
    lock; everything else must be deterministic.
    """

    def __init__(self):
        self._lock = threading.Lock()
        self._calls = 0

    @property
    def call_count(self) -> int:
        return self._calls

    def reset(self) -> None:
        with self._lock:
            self._calls = 0

    def _evaluate(self, x: np.ndarray):
        raise NotImplementedError

    def __call__(self, x) -> QueryRecord:
        x = np.array(x, dtype=np.float64).reshape(-1)
        with self._lock:
            self._calls += 1
        out = self._evaluate(x)
        try:
            jv, jg, hv, hg = out
            jv = float(jv)
            hv = float(hv)
            jg = np.array(jg, dtype=np.float64).reshape(-1)
            hg = np.array(hg, dtype=np.float64).reshape(-1)
        except (TypeError, ValueError) as exc:
            raise OracleError(f"malformed oracle output at {x}: {exc}") from exc
        if jg.shape != x.shape or hg.shape != x.shape:
            raise OracleError("oracle gradient dimension does not match the query")
        if not (math.isfinite(jv) and math.isfinite(hv) and np.all(np.isfinite(jg))
                and np.all(np.isfinite(hg))):
            raise OracleError(f"non-finite oracle output at {x}")
        for a in (x, jg, hg):
            a.setflags(write=False)
        return QueryRecord(x, jv, jg, hv, hg)


class FunctionOracle(FirstOrderOracle):
    """Oracle backed by two white-box callables returning ``(value, gradient)``.

    ``constraint`` may be omitted for unconstrained problems, in which case
    ``H`` is reported as the constant ``-1`` with zero gradient.
    """

    def __init__(self, objective: Callable, constraint: Optional[Callable] = None):
        super().__init__()
        self.objective = objective
        self.constraint = constraint

    def _evaluate(self, x):
        jv, jg = self.objective(x)
        if self.constraint is None:
            return jv, jg, -1.0, np.zeros_like(x)
        hv, hg = self.constraint(x)
        return jv, jg, hv, hg


class FiniteDifferenceOracle(FirstOrderOracle):
    """Forward-difference gradients of two scalar black boxes.

    Per query: ``J(x)``, ``H(x)``, then ``J(x + step e_k)`` for every ``k``, then
    ``H(x + step e_k)`` for every ``k``. The raw black-box calls are counted in
    ``raw_calls_j`` / ``raw_calls_h``; one query counts once in ``call_count``.
    """

    def __init__(self, black_box_j: Callable, black_box_h: Callable, step: float):
        if not step > 0:
            raise ValidationError("finite-difference step must be positive")
        super().__init__()
        self.black_box_j = black_box_j
        self.black_box_h = black_box_h
        self.step = float(step)
        self.raw_calls_j = 0
        self.raw_calls_h = 0

    def _call(self, fn, x, which):
        v = float(fn(x))
        if which == "j":
            self.raw_calls_j += 1
        else:
            self.raw_calls_h += 1
        if not math.isfinite(v):
            raise OracleError(f"non-finite black-box output at {x}")
        return v

    def _forward(self, fn, x, base, which):
        grad = np.empty_like(x)
        for k in range(x.shape[0]):
            xp = x.copy()
            xp[k] += self.step
            grad[k] = (self._call(fn, xp, which) - base) / self.step
        return grad

    def _evaluate(self, x):
        jv = self._call(self.black_box_j, x, "j")
        hv = self._call(self.black_box_h, x, "h")
        jg = self._forward(self.black_box_j, x, jv, "j")
        hg = self._forward(self.black_box_h, x, hv, "h")
        return jv, jg, hv, hg


def finite_diff_oracle(black_box_j: Callable, black_box_h: Callable, step: float
                       ) -> FiniteDifferenceOracle:
    return FiniteDifferenceOracle(black_box_j, black_box_h, step)


def oracle_eval(oracle: FirstOrderOracle, point, domain: Optional[BoxDomain] = None
                ) -> QueryRecord:
    """Query ``oracle`` at ``point``; with ``domain`` given, enforce containment."""
    if domain is not None and not domain.contains(point):
        raise ValidationError(f"query {np.asarray(point).tolist()} lies outside the domain")
    return oracle(point)


@dataclass(frozen=True)
class ProblemSpec:
    """Everything an algorithm run needs; check it with :func:`validate_problem`."""

    domain: BoxDomain
    oracle: FirstOrderOracle
    q1: np.ndarray
    lip_j: float
    lip_h: float = 0.0
    eta: float = 0.1
    delta: float = 1e-5
    budget: int = 400
    convexity_mu: Optional[float] = None
    grad_j_max: Optional[float] = None
    grad_h_max: Optional[float] = None
    name: str = ""

    @property
    def d(self) -> int:
        return self.domain.d


def validate_problem(spec: ProblemSpec) -> ProblemSpec:
    """Return ``spec`` unchanged, or raise :class:`ValidationError` naming the
    first violated invariant."""
    if not isinstance(spec.domain, BoxDomain):
        raise ValidationError("domain must be a BoxDomain")
    if not math.isfinite(spec.domain.diameter):
        raise ValidationError("domain diameter is not finite")
    if not isinstance(spec.oracle, FirstOrderOracle):
        raise ValidationError("oracle must be a FirstOrderOracle")
    q1 = as_point(spec.q1, spec.d, name="q1")
    for name in ("lip_j", "lip_h"):
        v = getattr(spec, name)
        if not (math.isfinite(v) and v >= 0):
            raise ValidationError(f"{name} must be finite and >= 0, got {v}")
    if spec.convexity_mu is not None:
        mu = spec.convexity_mu
        if not mu > 0:
            raise ValidationError(f"μ must be positive, got {mu}")
        if mu > spec.lip_h:
            raise ValidationError(f"μ exceeds L_H ({mu} > {spec.lip_h})")
    if not spec.eta > 0:
        raise ValidationError(f"eta must be positive, got {spec.eta}")
    if not spec.delta > 0:
        raise ValidationError(f"delta must be positive, got {spec.delta}")
    if int(spec.budget) != spec.budget or spec.budget < 1:
        raise ValidationError(f"budget must be a positive integer, got {spec.budget}")
    for name in ("grad_j_max", "grad_h_max"):
        v = getattr(spec, name)
        if v is not None and not (math.isfinite(v) and v >= 0):
            raise ValidationError(f"{name} must be finite and >= 0")
    if not spec.domain.contains(q1):
        raise ValidationError(f"q1 {q1.tolist()} lies outside the domain")
    return spec


class Status(str, enum.Enum):
    MINIMUM = "Minimum"
    INFEASIBLE = "Infeasible"
    BUDGET_EXHAUSTED = "BudgetExhausted"


@dataclass
class IterationTrace:
    iter: int
    query: np.ndarray
    j_at_query: float
    h_at_query: float
    feasible_flag: bool
    within_delta_flag: bool
    delta_global: float
    surrogate_lb: float
    subsolver_nodes: int
    wall_ms: int
    relax_point: Optional[np.ndarray] = None
    phase: str = "main"
    projection_clamped: bool = False


@dataclass
class RunOutcome:
    status: Status
    trace: list = field(default_factory=list)
    oracle_calls: int = 0
    best_point: Optional[np.ndarray] = None
    best_value: Optional[float] = None
    delta_global: Optional[float] = None
    gamma: Optional[float] = None
    wall_ms: int = 0
    subsolver_node_limit: bool = False
    queries: list = field(default_factory=list)
    notes: list = field(default_factory=list)

    @property
    def infeasible_queries(self) -> int:
        return sum(1 for r in self.queries if r.h_value > 0)

    @property
    def iterations(self) -> int:
        return len(self.trace)


def records_to_arrays(records: Sequence[QueryRecord]):
    """Stack query records into ``(points, j, grad_j, h, grad_h)`` arrays."""
    pts = np.array([r.point for r in records])
    return (pts,
            np.array([r.j_value for r in records]),
            np.array([r.j_grad for r in records]),
            np.array([r.h_value for r in records]),
            np.array([r.h_grad for r in records]))
