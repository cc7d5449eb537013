"""Projection onto the inner approximation ``{H^+ <= 0}``, a finite union of balls.

Piece ``i`` of the majorant is ``<= 0`` exactly on the ball with center
``q_i - grad_i / L_H`` and squared radius ``|grad_i|^2 / L_H^2 - 2 H_i / L_H``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .approximants import ApproximantSet
from .core import BoxDomain, ValidationError

__all__ = ["Ball", "ProjectionResult", "balls_from_majorant", "project_union",
           "project_union_detailed"]


@dataclass(frozen=True)
class Ball:
    center: np.ndarray
    radius: float

    def __post_init__(self):
        if not (math.isfinite(self.radius) and self.radius >= 0):
            raise ValidationError("ball radius must be finite and >= 0")

    def contains(self, x, tol: float = 0.0) -> bool:
        return float(np.linalg.norm(np.asarray(x) - self.center)) <= self.radius + tol

    def project(self, z) -> np.ndarray:
        z = np.asarray(z, dtype=np.float64)
        diff = z - self.center
        dist = float(np.linalg.norm(diff))
        if dist <= self.radius:
            return z.copy()
        return self.center + (self.radius / dist) * diff


def balls_from_majorant(h_pieces, lip_h: float, shrink: float = 0.0):
    """Balls whose union is ``{H^+ <= 0}``; returns ``(balls, dropped)``.

    ``h_pieces`` is a sequence of :class:`Piece` or an :class:`ApproximantSet`.
    Pieces with a negative squared radius have an empty sublevel set and are
    dropped; their count is returned.  ``shrink`` scales radii by ``1 - shrink``.
    """
    if not lip_h > 0:
        raise ValidationError("balls_from_majorant needs L_H > 0")
    if isinstance(h_pieces, ApproximantSet):
        h_pieces = h_pieces.pieces
    balls, dropped = [], 0
    for p in h_pieces:
        g = np.asarray(p.grad, dtype=np.float64)
        r2 = float(g @ g) / lip_h ** 2 - 2 * p.value / lip_h
        if r2 < 0:
            dropped += 1
            continue
        balls.append(Ball(np.asarray(p.center) - g / lip_h, math.sqrt(r2) * (1 - shrink)))
    return balls, dropped


@dataclass
class ProjectionResult:
    point: np.ndarray
    ball_index: int
    clamped: bool


def _box_fallback(z, ball: Ball, box: BoxDomain, steps: int):
    """Approximate nearest point of ``ball ∩ box`` along ``clamp((1-s) z + s c)``."""
    z = np.asarray(z, dtype=np.float64)
    lo, hi = 0.0, 1.0
    end = box.clamp(ball.center)
    if not ball.contains(end):
        return None
    for _ in range(steps):
        mid = 0.5 * (lo + hi)
        x = box.clamp((1 - mid) * z + mid * ball.center)
        if ball.contains(x):
            hi, end = mid, x
        else:
            lo = mid
    return end


def project_union_detailed(z, balls: Sequence[Ball], box: BoxDomain,
                           fallback_steps: int = 60) -> ProjectionResult:
    if not balls:
        raise ValidationError("empty ball list: no known feasible point to project onto")
    z = np.asarray(z, dtype=np.float64)
    cands = [b.project(z) for b in balls]
    dists = [float(np.linalg.norm(c - z)) for c in cands]
    k = int(np.argmin(dists))
    best = cands[k]
    if box.contains(best):
        return ProjectionResult(best, k, False)
    # nearest union point leaves the box: fall back ball by ball
    best_d, best_pt, best_k = math.inf, None, -1
    for i, (b, c) in enumerate(zip(balls, cands)):
        pt = c if box.contains(c) else _box_fallback(z, b, box, fallback_steps)
        if pt is None:
            continue
        dd = float(np.linalg.norm(pt - z))
        if dd < best_d:
            best_d, best_pt, best_k = dd, pt, i
    if best_pt is None:
        raise ValidationError("no ball intersects the box")
    return ProjectionResult(best_pt, best_k, True)


def project_union(z, balls: Sequence[Ball], box: BoxDomain) -> np.ndarray:
    """Nearest point of the union of ``balls`` to ``z`` (ties: lowest ball index)."""
    return project_union_detailed(z, balls, box).point
