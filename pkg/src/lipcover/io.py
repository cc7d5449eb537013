"""Trace CSV and summary JSON, written atomically.

Trace columns (header row, RFC-4180 quoting via :mod:`csv`)::

    iter, phase, query, j_at_query, h_at_query, feasible_flag,
    within_delta_flag, delta_global, surrogate_lb, subsolver_nodes,
    wall_ms, relax_point, projection_clamped

Vectors are ``;``-separated ``repr`` floats, so they parse back exactly;
``inf`` and ``-inf`` are spelled as such and an absent relax point is empty.
"""

from __future__ import annotations

import csv
import io
import json
import math
import os
import tempfile
from typing import Iterable

import numpy as np

from .core import IterationTrace, RunOutcome

__all__ = ["TRACE_COLUMNS", "write_trace_csv", "read_trace_csv", "trace_to_csv_text",
           "summary_dict", "write_json", "atomic_write_text"]

TRACE_COLUMNS = ["iter", "phase", "query", "j_at_query", "h_at_query", "feasible_flag",
                 "within_delta_flag", "delta_global", "surrogate_lb", "subsolver_nodes",
                 "wall_ms", "relax_point", "projection_clamped"]


def _vec(v) -> str:
    if v is None:
        return ""
    return ";".join(repr(float(x)) for x in np.asarray(v).reshape(-1))


def _unvec(s: str):
    if s == "":
        return None
    return np.array([float(x) for x in s.split(";")])


def _bool(s: str) -> bool:
    if s not in ("true", "false"):
        raise ValueError(f"bad boolean {s!r}")
    return s == "true"


def atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    folder = os.path.dirname(os.path.abspath(path))
    os.makedirs(folder, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=folder, prefix=".tmp-", suffix=os.path.basename(path))
    try:
        with os.fdopen(fd, "w", newline="", encoding="utf-8") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def trace_to_csv_text(trace: Iterable[IterationTrace]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\r\n")
    w.writerow(TRACE_COLUMNS)
    for r in trace:
        w.writerow([r.iter, r.phase, _vec(r.query), repr(float(r.j_at_query)),
                    repr(float(r.h_at_query)), str(bool(r.feasible_flag)).lower(),
                    str(bool(r.within_delta_flag)).lower(), repr(float(r.delta_global)),
                    repr(float(r.surrogate_lb)), r.subsolver_nodes, r.wall_ms,
                    _vec(r.relax_point), str(bool(r.projection_clamped)).lower()])
    return buf.getvalue()


def write_trace_csv(path, trace: Iterable[IterationTrace]) -> None:
    atomic_write_text(path, trace_to_csv_text(trace))


def read_trace_csv(path) -> list:
    with open(path, newline="", encoding="utf-8") as fh:
        rows = list(csv.reader(fh))
    if not rows or rows[0] != TRACE_COLUMNS:
        raise ValueError("not a trace file: header mismatch")
    out = []
    for row in rows[1:]:
        rec = dict(zip(TRACE_COLUMNS, row))
        out.append(IterationTrace(
            iter=int(rec["iter"]), query=_unvec(rec["query"]),
            j_at_query=float(rec["j_at_query"]), h_at_query=float(rec["h_at_query"]),
            feasible_flag=_bool(rec["feasible_flag"]),
            within_delta_flag=_bool(rec["within_delta_flag"]),
            delta_global=float(rec["delta_global"]), surrogate_lb=float(rec["surrogate_lb"]),
            subsolver_nodes=int(rec["subsolver_nodes"]), wall_ms=int(rec["wall_ms"]),
            relax_point=_unvec(rec["relax_point"]), phase=rec["phase"],
            projection_clamped=_bool(rec["projection_clamped"]),
        ))
    return out


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def summary_dict(outcome: RunOutcome, config: dict) -> dict:
    return {
        "status": outcome.status.value,
        "best_point": None if outcome.best_point is None else [float(x) for x in outcome.best_point],
        "best_value": _num(outcome.best_value),
        "delta_global": _num(outcome.delta_global),
        "gamma": _num(outcome.gamma),
        "oracle_calls": outcome.oracle_calls,
        "iterations": outcome.iterations,
        "infeasible_queries": outcome.infeasible_queries,
        "subsolver_node_limit": outcome.subsolver_node_limit,
        "wall_ms": outcome.wall_ms,
        "notes": list(outcome.notes),
        "config": config,
    }


def write_json(path, obj) -> None:
    atomic_write_text(path, json.dumps(obj, indent=2, sort_keys=False, allow_nan=False) + "\n")
