"""Spatial branch-and-bound for the surrogate subproblems.

Every surrogate objective is a minorant ``max_i p_i(x)`` whose pieces share
the curvature ``-L/2``.  On a box with midpoint ``m`` and half-widths ``h`` a
piece satisfies

    p_i(m + y) >= p_i(m) + grad p_i(m) . y - (L/2) |h|^2,

which is exactly the bound obtained by replacing ``x.x`` with its separable
secant overestimator.  Minimising the right-hand side over ``|y_k| <= h_k``
gives a closed-form bound per piece; the box bound is the max over pieces.

Constrained kinds prune a box as soon as one constraint piece is provably
positive on it.  An optional LP bound couples the best objective piece with
each constraint piece's linearisation (a fractional-knapsack LP, solved in
closed form through its breakpoints), which keeps boxes straddling the
constraint boundary from stalling the search.

Boxes are expanded best-first in batches; bounds for a batch are computed
with numpy in one shot.  Node ids break heap ties, so identical inputs give
identical results.
"""

from __future__ import annotations

import enum
import heapq
import itertools
import math
import os
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .approximants import ApproximantSet, Kind
from .core import BoxDomain, ValidationError

__all__ = [
    "ProblemKind",
    "SurrogateProblem",
    "BnBConfig",
    "BnBStatus",
    "BnBResult",
    "GridReference",
    "solve",
    "lower_bound_box",
    "prune_constraint",
    "incumbent_candidate",
    "brute_force_reference",
    "default_max_nodes",
]


class ProblemKind(str, enum.Enum):
    MIN_MINORANT = "MinMinorant"
    MINORANT_CONSTRAINT = "MinMinorantWithMinorantConstraint"
    SC_CONSTRAINT = "MinMinorantWithScMinorantConstraint"


_CONSTRAINT_KIND = {
    ProblemKind.MINORANT_CONSTRAINT: Kind.MINORANT,
    ProblemKind.SC_CONSTRAINT: Kind.SC_MINORANT,
}


@dataclass(frozen=True)
class SurrogateProblem:
    kind: ProblemKind
    objective: ApproximantSet
    box: BoxDomain
    constraint: Optional[ApproximantSet] = None

    def __post_init__(self):
        kind = ProblemKind(self.kind)
        object.__setattr__(self, "kind", kind)
        if self.objective.kind is not Kind.MINORANT:
            raise ValidationError("surrogate objective must be a Minorant")
        if self.objective.d != self.box.d:
            raise ValidationError("objective and box dimensions differ")
        if kind is ProblemKind.MIN_MINORANT:
            if self.constraint is not None:
                raise ValidationError("MinMinorant takes no constraint")
            return
        if self.constraint is None:
            raise ValidationError(f"{kind.value} needs a constraint")
        if self.constraint.kind is not _CONSTRAINT_KIND[kind]:
            raise ValidationError(
                f"{kind.value} needs a {_CONSTRAINT_KIND[kind].value} constraint")
        if self.constraint.d != self.box.d:
            raise ValidationError("constraint and box dimensions differ")

    @property
    def d(self) -> int:
        return self.box.d

    def objective_at(self, x):
        return self.objective(x)

    def constraint_at(self, x):
        if self.constraint is None:
            x = np.asarray(x, dtype=np.float64)
            return np.full(x.shape[:-1], -np.inf) if x.ndim > 1 else -math.inf
        return self.constraint(x)


def default_max_nodes() -> int:
    env = os.environ.get("LIPCOVER_MAX_NODES")
    if env:
        try:
            n = int(env)
        except ValueError:
            raise ValidationError(f"LIPCOVER_MAX_NODES must be an integer, got {env!r}")
        if n < 1:
            raise ValidationError("LIPCOVER_MAX_NODES must be positive")
        return n
    return 2_000_000


@dataclass(frozen=True)
class BnBConfig:
    """Branch-and-bound settings.

    ``lp_bound`` enables the knapsack-LP bound for constrained kinds;
    ``batch`` is the number of boxes expanded per vectorised round.
    """

    abs_gap_tol: float = 1e-6
    max_nodes: Optional[int] = None
    feas_tol: float = 1e-9
    batch: int = 128
    lp_bound: bool = True
    lp_pieces: int = 16

    def __post_init__(self):
        if not self.abs_gap_tol > 0:
            raise ValidationError("abs_gap_tol must be positive")
        if self.max_nodes is None:
            object.__setattr__(self, "max_nodes", default_max_nodes())
        if int(self.max_nodes) < 1:
            raise ValidationError("max_nodes must be positive")
        if not self.feas_tol >= 0:
            raise ValidationError("feas_tol must be >= 0")
        if int(self.batch) < 1:
            raise ValidationError("batch must be positive")

    @classmethod
    def for_thresholds(cls, eta: float, delta: Optional[float] = None, **kw) -> "BnBConfig":
        tol = min(eta, delta) / 10 if delta is not None else eta / 10
        return cls(abs_gap_tol=tol, **kw)


class BnBStatus(str, enum.Enum):
    OPTIMAL = "Optimal"
    INFEASIBLE = "Infeasible"
    NODE_LIMIT = "NodeLimit"


@dataclass
class BnBResult:
    """``lower_bound`` is ``+inf`` for an Infeasible verdict (empty feasible set)."""

    status: BnBStatus
    point: Optional[np.ndarray]
    value: Optional[float]
    lower_bound: float
    nodes_expanded: int


class _Kernel:
    """Vectorised bounds, pruning and incumbent candidates for batches of boxes."""

    def __init__(self, problem: SurrogateProblem, feas_tol: float, lp_bound: bool,
                 lp_pieces: int):
        obj = problem.objective
        self.q = np.asarray(obj.centers)
        self.v = np.asarray(obj.values)
        self.g = np.asarray(obj.grads)
        self.lip = obj.curvature
        self.feas_tol = feas_tol
        con = problem.constraint
        self.has_con = con is not None
        self.sc = problem.kind is ProblemKind.SC_CONSTRAINT
        self.lp = lp_bound and self.has_con
        self.lp_pieces = lp_pieces
        if self.has_con:
            self.hq = np.asarray(con.centers)
            self.hv = np.asarray(con.values)
            self.hg = np.asarray(con.grads)
            self.hc = con.curvature
            self.hs = con.signed_curvature

    @staticmethod
    def _pieces_at(m, q, v, g, s):
        diff = m[:, None, :] - q
        val = v + np.einsum("btd,td->bt", diff, g) + 0.5 * s * np.einsum("btd,btd->bt", diff, diff)
        grad = g + s * diff
        return val, grad

    def objective(self, x):
        diff = x[:, None, :] - self.q
        val = self.v + np.einsum("btd,td->bt", diff, self.g) - 0.5 * self.lip * np.einsum(
            "btd,btd->bt", diff, diff)
        return val.max(axis=1)

    def constraint(self, x):
        if not self.has_con:
            return np.full(x.shape[0], -np.inf)
        diff = x[:, None, :] - self.hq
        val = self.hv + np.einsum("btd,td->bt", diff, self.hg) + 0.5 * self.hs * np.einsum(
            "btd,btd->bt", diff, diff)
        return val.max(axis=1)

    def evaluate(self, lo, hi):
        """Return ``(lb_secant, lb, infeasible, cand_points, cand_values, cand_feasible)``.

        ``cand_*`` have shape ``(B, 2)``: box center and the bound's minimising vertex.
        """
        m = 0.5 * (lo + hi)
        h = 0.5 * (hi - lo)
        hh = np.einsum("bd,bd->b", h, h)
        pm, grad = self._pieces_at(m, self.q, self.v, self.g, -self.lip)
        piece_lb = pm - np.einsum("btd,bd->bt", np.abs(grad), h) - 0.5 * self.lip * hh[:, None]
        istar = np.argmax(piece_lb, axis=1)
        rows = np.arange(lo.shape[0])
        lb_sec = piece_lb[rows, istar]
        lb = lb_sec.copy()
        infeasible = np.zeros(lo.shape[0], dtype=bool)
        gstar = grad[rows, istar]
        # sign 0 maps to the lower corner
        vertex = m - np.where(gstar > 0, 1.0, np.where(gstar < 0, -1.0, 1.0)) * h
        vertex = np.minimum(np.maximum(vertex, lo), hi)
        center_val = pm.max(axis=1)
        vertex_val = self.objective(vertex)
        if self.has_con:
            hm, hgrad = self._pieces_at(m, self.hq, self.hv, self.hg, self.hs)
            if self.sc:
                y = np.clip(-hgrad / self.hc, -h[:, None, :], h[:, None, :])
                con_min = hm + np.einsum("btd,btd->bt", hgrad, y) + 0.5 * self.hc * np.einsum(
                    "btd,btd->bt", y, y)
                c0 = hm
            else:
                shift = 0.5 * self.hc * hh[:, None]
                con_min = hm - np.einsum("btd,bd->bt", np.abs(hgrad), h) - shift
                c0 = hm - shift
            infeasible = con_min.max(axis=1) > self.feas_tol
            if self.lp:
                lb = np.maximum(lb, self._lp_bound(pm[rows, istar] - 0.5 * self.lip * hh,
                                                   gstar, c0, hgrad, con_min, h))
            center_con = hm.max(axis=1)
            vertex_con = self.constraint(vertex)
            cand_feas = np.stack([center_con <= self.feas_tol, vertex_con <= self.feas_tol], 1)
        else:
            cand_feas = np.ones((lo.shape[0], 2), dtype=bool)
        cand_pts = np.stack([m, vertex], axis=1)
        cand_vals = np.stack([center_val, vertex_val], axis=1)
        return lb_sec, lb, infeasible, cand_pts, cand_vals, cand_feas

    def _lp_bound(self, obj_c, s, con_c, a, con_min, h):
        """``obj_c + min s.y`` s.t. ``con_c_j + a_j.y <= feas_tol``, ``|y| <= h``.

        Evaluated for the ``lp_pieces`` constraint pieces with the largest
        relaxed minimum; the best (largest) of the per-piece LP values is used.
        The LP value equals ``max_{lam >= 0} -lam b - sum |s + lam a| h`` whose
        maximum sits at ``lam = 0`` or a breakpoint ``-s_k / a_k``.
        """
        tH = con_c.shape[1]
        if tH > self.lp_pieces:
            idx = np.argpartition(-con_min, self.lp_pieces - 1, axis=1)[:, :self.lp_pieces]
            con_c = np.take_along_axis(con_c, idx, axis=1)
            a = np.take_along_axis(a, idx[:, :, None], axis=1)
        b = self.feas_tol - con_c                              # (B, k)
        sk = s[:, None, :]                                     # (B, 1, d)
        with np.errstate(divide="ignore", invalid="ignore"):
            lam = -sk / a                                      # (B, k, d)
        lam = np.where(np.isfinite(lam) & (lam > 0), lam, 0.0)
        lam = np.concatenate([np.zeros(lam.shape[:2] + (1,)), lam], axis=2)  # (B, k, d+1)
        lin = sk[:, :, None, :] + lam[..., None] * a[:, :, None, :]          # (B, k, d+1, d)
        phi = -lam * b[:, :, None] - np.einsum("bkcd,bd->bkc", np.abs(lin), h)
        return obj_c + phi.max(axis=2).max(axis=1)


def _split(lo, hi):
    width = hi - lo
    k = np.argmax(width, axis=1)
    rows = np.arange(lo.shape[0])
    mid = 0.5 * (lo[rows, k] + hi[rows, k])
    hi_left = hi.copy()
    hi_left[rows, k] = mid
    lo_right = lo.copy()
    lo_right[rows, k] = mid
    # interleave so that children of box b are 2b, 2b+1
    clo = np.empty((2 * lo.shape[0], lo.shape[1]))
    chi = np.empty_like(clo)
    clo[0::2], chi[0::2] = lo, hi_left
    clo[1::2], chi[1::2] = lo_right, hi
    return clo, chi


def solve(problem: SurrogateProblem, config: Optional[BnBConfig] = None) -> BnBResult:
    """Globally minimise the surrogate objective over the box (and constraint)."""
    config = config or BnBConfig()
    ker = _Kernel(problem, config.feas_tol, config.lp_bound, config.lp_pieces)
    tol = config.abs_gap_tol
    ids = itertools.count()
    inc_val = math.inf
    inc_pt = None
    pruned_lb = math.inf
    stalled_lb = math.inf
    scale = 1.0 + float(np.max(np.abs(np.concatenate([problem.box.lower, problem.box.upper]))))
    min_half = 1e-13 * scale

    lo0 = problem.box.lower[None, :].copy()
    hi0 = problem.box.upper[None, :].copy()
    heap: list = []
    nodes = 1

    def absorb(lo, hi):
        nonlocal inc_val, inc_pt, pruned_lb
        _, lb, infeas, cpts, cvals, cfeas = ker.evaluate(lo, hi)
        vals = np.where(cfeas & ~infeas[:, None], cvals, np.inf).reshape(-1)
        j = int(np.argmin(vals))
        if vals[j] < inc_val:
            inc_val = float(vals[j])
            inc_pt = cpts.reshape(-1, cpts.shape[-1])[j].copy()
        for b in range(lo.shape[0]):
            if infeas[b]:
                continue
            lbb = float(lb[b])
            if lbb < inc_val - tol:
                heapq.heappush(heap, (lbb, next(ids), lo[b], hi[b]))
            else:
                pruned_lb = min(pruned_lb, lbb)

    absorb(lo0, hi0)
    status = None
    while heap:
        if heap[0][0] >= inc_val - tol:
            break
        if nodes >= config.max_nodes:
            status = BnBStatus.NODE_LIMIT
            break
        take = min(config.batch, max(1, (config.max_nodes - nodes) // 2))
        los, his = [], []
        while heap and len(los) < take and heap[0][0] < inc_val - tol:
            lbb, _, lo, hi = heapq.heappop(heap)
            if np.max(hi - lo) <= 2 * min_half:
                stalled_lb = min(stalled_lb, lbb)
                continue
            los.append(lo)
            his.append(hi)
        if not los:
            continue
        clo, chi = _split(np.array(los), np.array(his))
        nodes += clo.shape[0]
        absorb(clo, chi)

    heap_lb = heap[0][0] if heap else math.inf
    lower = min(heap_lb, pruned_lb, stalled_lb, inc_val)
    if status is None:
        if inc_pt is None and math.isinf(lower) and lower > 0:
            status = BnBStatus.INFEASIBLE
        elif inc_pt is not None and inc_val - lower <= tol:
            status = BnBStatus.OPTIMAL
        else:
            status = BnBStatus.NODE_LIMIT
    if status is BnBStatus.INFEASIBLE:
        return BnBResult(status, None, None, math.inf, nodes)
    if inc_pt is not None:
        inc_pt = problem.box.clamp(inc_pt)
    if math.isinf(lower) and lower > 0:
        lower = -math.inf
    return BnBResult(status, inc_pt, None if inc_pt is None else inc_val, float(lower), nodes)


def _single(problem: SurrogateProblem, box: BoxDomain, lp_bound=False, feas_tol=1e-9):
    ker = _Kernel(problem, feas_tol, lp_bound, 16)
    return ker.evaluate(box.lower[None, :], box.upper[None, :])


def lower_bound_box(problem: SurrogateProblem, box: BoxDomain) -> float:
    """Secant-envelope lower bound of the objective minorant on ``box``."""
    lb_sec = _single(problem, box)[0]
    return float(lb_sec[0])


def prune_constraint(problem: SurrogateProblem, box: BoxDomain, feas_tol: float = 1e-9) -> str:
    if problem.constraint is None:
        raise ValidationError("prune_constraint needs a constrained problem")
    infeas = _single(problem, box, feas_tol=feas_tol)[2]
    return "ProvablyInfeasible" if bool(infeas[0]) else "MaybeFeasible"


def incumbent_candidate(problem: SurrogateProblem, box: BoxDomain, feas_tol: float = 1e-9):
    """Best of (center, bound vertex) satisfying the true constraint, or ``None``."""
    _, _, _, cpts, cvals, cfeas = _single(problem, box, feas_tol=feas_tol)
    best = None
    for k in range(2):
        if cfeas[0, k] and (best is None or cvals[0, k] < best[1]):
            best = (cpts[0, k].copy(), float(cvals[0, k]))
    return best


@dataclass
class GridReference:
    feasible: bool
    point: Optional[np.ndarray]
    value: Optional[float]


def brute_force_reference(problem: SurrogateProblem, grid_step: float,
                          feas_tol: float = 1e-9) -> GridReference:
    """Uniform-grid minimum of the true surrogate (test oracle; ``d <= 3``)."""
    if problem.d > 3:
        raise ValidationError("brute_force_reference is limited to d <= 3")
    axes = [np.linspace(lo, hi, max(2, int(round((hi - lo) / grid_step)) + 1))
            for lo, hi in zip(problem.box.lower, problem.box.upper)]
    pts = np.stack(np.meshgrid(*axes, indexing="ij"), axis=-1).reshape(-1, problem.d)
    best_val, best_pt = math.inf, None
    for chunk in np.array_split(pts, max(1, len(pts) // 20000)):
        vals = np.asarray(problem.objective(chunk))
        if problem.constraint is not None:
            vals = np.where(np.asarray(problem.constraint(chunk)) <= feas_tol, vals, np.inf)
        j = int(np.argmin(vals))
        if vals[j] < best_val:
            best_val, best_pt = float(vals[j]), chunk[j].copy()
    if best_pt is None:
        return GridReference(False, None, None)
    return GridReference(True, best_pt, best_val)
