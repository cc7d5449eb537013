"""Piecewise-quadratic minorants and majorants built from first-order data.

For data ``(q_i, f(q_i), grad f(q_i))`` and a curvature coefficient ``c``:

* ``Minorant``:    ``max_i  l_i(x) - (c/2) |x - q_i|^2``  (valid for ``c >= K_f``)
* ``Majorant``:    ``min_i  l_i(x) + (c/2) |x - q_i|^2``
* ``ScMinorant``:  ``max_i  l_i(x) + (c/2) |x - q_i|^2``  (valid for μ-convex f, ``c = μ``)

where ``l_i`` is the linearization at ``q_i``. Evaluation is a linear scan
over the pieces; ties go to the lowest index.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from .core import QueryRecord

__all__ = [
    "Kind",
    "Piece",
    "ApproximantSet",
    "AffineForm",
    "linearization",
    "evaluate",
    "affine_decomposition",
    "SandwichReport",
    "sandwich_audit",
]


class Kind(str, enum.Enum):
    MINORANT = "Minorant"
    MAJORANT = "Majorant"
    SC_MINORANT = "ScMinorant"


@dataclass(frozen=True)
class Piece:
    center: np.ndarray
    value: float
    grad: np.ndarray


def linearization(piece: Piece, x) -> float:
    """``f(q) + grad f(q) . (x - q)``."""
    x = np.asarray(x, dtype=np.float64)
    return float(piece.value + np.dot(piece.grad, x - piece.center))


@dataclass(frozen=True)
class AffineForm:
    slope: np.ndarray
    intercept: float

    def __call__(self, x) -> float:
        return float(np.dot(self.slope, x) + self.intercept)


class ApproximantSet:
    """Immutable collection of pieces sharing one curvature coefficient.

    ``centers`` has shape ``(t, d)``, ``values`` ``(t,)``, ``grads`` ``(t, d)``.
    Use :meth:`extended` to obtain a set with one more piece.
    """

    __slots__ = ("centers", "values", "grads", "curvature", "kind")

    def __init__(self, centers, values, grads, curvature: float, kind: Kind):
        centers = np.array(centers, dtype=np.float64, ndmin=2)
        values = np.array(values, dtype=np.float64).reshape(-1)
        grads = np.array(grads, dtype=np.float64, ndmin=2)
        if centers.shape[0] == 0:
            raise ValueError("an approximant needs at least one piece")
        if grads.shape != centers.shape or values.shape[0] != centers.shape[0]:
            raise ValueError("inconsistent piece arrays")
        if not curvature >= 0:
            raise ValueError("curvature must be >= 0")
        kind = Kind(kind)
        if kind is Kind.SC_MINORANT and not curvature > 0:
            raise ValueError("a strongly-convex minorant needs μ > 0")
        for a in (centers, values, grads):
            a.setflags(write=False)
        self.centers = centers
        self.values = values
        self.grads = grads
        self.curvature = float(curvature)
        self.kind = kind

    @classmethod
    def from_pieces(cls, pieces: Sequence[Piece], curvature: float, kind: Kind):
        return cls([p.center for p in pieces], [p.value for p in pieces],
                   [p.grad for p in pieces], curvature, kind)

    @classmethod
    def from_records(cls, records: Sequence[QueryRecord], curvature: float, kind: Kind,
                     which: str = "j"):
        if which == "j":
            vals = [r.j_value for r in records]
            grads = [r.j_grad for r in records]
        else:
            vals = [r.h_value for r in records]
            grads = [r.h_grad for r in records]
        return cls([r.point for r in records], vals, grads, curvature, kind)

    def __len__(self) -> int:
        return self.centers.shape[0]

    @property
    def d(self) -> int:
        return self.centers.shape[1]

    @property
    def pieces(self) -> list:
        return [Piece(c, float(v), g) for c, v, g in zip(self.centers, self.values, self.grads)]

    @property
    def signed_curvature(self) -> float:
        """Coefficient ``s`` of the ``(s/2)|x - q_i|^2`` term in every piece."""
        return -self.curvature if self.kind is Kind.MINORANT else self.curvature

    def extended(self, center, value: float, grad) -> "ApproximantSet":
        return ApproximantSet(np.vstack([self.centers, center]),
                              np.append(self.values, value),
                              np.vstack([self.grads, grad]),
                              self.curvature, self.kind)

    def piece_values(self, x) -> np.ndarray:
        """Values of every piece at ``x``; shape ``(..., t)`` for ``x`` of shape ``(..., d)``."""
        x = np.asarray(x, dtype=np.float64)
        diff = x[..., None, :] - self.centers
        lin = self.values + np.einsum("...td,td->...t", diff, self.grads)
        return lin + 0.5 * self.signed_curvature * np.einsum("...td,...td->...t", diff, diff)

    def __call__(self, x):
        pv = self.piece_values(x)
        out = pv.min(axis=-1) if self.kind is Kind.MAJORANT else pv.max(axis=-1)
        return float(out) if np.ndim(out) == 0 else out

    def active_piece(self, x) -> int:
        pv = self.piece_values(x)
        return int(np.argmin(pv) if self.kind is Kind.MAJORANT else np.argmax(pv))


def evaluate(approx: ApproximantSet, x):
    return approx(x)


def affine_decomposition(approx: ApproximantSet):
    """Split ``approx`` into a common quadratic term and affine pieces.

    Returns ``(s, forms)`` with ``approx(x) == (s/2) x.x + max_i forms[i](x)``
    (``min_i`` for a majorant), ``s = -L`` for a minorant and ``+c`` otherwise.
    """
    s = approx.signed_curvature
    q = approx.centers
    slopes = approx.grads - s * q
    intercepts = (approx.values - np.einsum("td,td->t", approx.grads, q)
                  + 0.5 * s * np.einsum("td,td->t", q, q))
    return s, [AffineForm(sl.copy(), float(b)) for sl, b in zip(slopes, intercepts)]


def eval_decomposed(s: float, forms: Sequence[AffineForm], x, kind: Kind):
    x = np.asarray(x, dtype=np.float64)
    slopes = np.array([f.slope for f in forms])
    b = np.array([f.intercept for f in forms])
    aff = x @ slopes.T + b
    agg = aff.min(axis=-1) if Kind(kind) is Kind.MAJORANT else aff.max(axis=-1)
    return 0.5 * s * np.einsum("...d,...d->...", x, x) + agg


@dataclass
class SandwichReport:
    n_points: int
    minorant_violations: int
    majorant_violations: int
    sc_violations: int
    bound_violations: int
    max_violation: float

    @property
    def ok(self) -> bool:
        return (self.minorant_violations == 0 and self.majorant_violations == 0
                and self.sc_violations == 0 and self.bound_violations == 0)


def sandwich_audit(records: Sequence[QueryRecord], grid_points, grid_values, lip: float,
                   mu: Optional[float] = None, which: str = "j", tol: float = 1e-9
                   ) -> SandwichReport:
    """Check ``f^- <= f <= f^+`` and the quadratic error bound on a grid.

    ``grid_values`` holds the true function at ``grid_points`` (shape ``(n, d)``).
    Violations are counted with a small absolute ``tol`` for rounding. When
    ``mu`` is given, ``f^- <= f^{-,sc} <= f`` is checked too.
    """
    pts = np.asarray(grid_points, dtype=np.float64)
    f = np.asarray(grid_values, dtype=np.float64)
    lo = ApproximantSet.from_records(records, lip, Kind.MINORANT, which)(pts)
    hi = ApproximantSet.from_records(records, lip, Kind.MAJORANT, which)(pts)
    diff = pts[:, None, :] - lo_centers(records)
    bound = lip * np.einsum("ntd,ntd->nt", diff, diff).min(axis=1)
    scale = tol * np.maximum(1.0, np.abs(f))
    v_lo = lo - f
    v_hi = f - hi
    v_bound = np.maximum(hi - f, f - lo) - bound
    worst = [v_lo.max(), v_hi.max(), v_bound.max()]
    sc_bad = 0
    if mu is not None:
        sc = ApproximantSet.from_records(records, mu, Kind.SC_MINORANT, which)(pts)
        v_sc = np.maximum(sc - f, lo - sc)
        sc_bad = int(np.sum(v_sc > scale))
        worst.append(v_sc.max())
    return SandwichReport(
        n_points=len(f),
        minorant_violations=int(np.sum(v_lo > scale)),
        majorant_violations=int(np.sum(v_hi > scale)),
        sc_violations=sc_bad,
        bound_violations=int(np.sum(v_bound > scale)),
        max_violation=float(max(0.0, *worst)),
    )


def lo_centers(records: Sequence[QueryRecord]) -> np.ndarray:
    return np.array([r.point for r in records])
