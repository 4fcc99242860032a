"""Per-loop performance accounting and report emission.

Useful bytes count the data a loop must move: direct arguments transfer
every iteration element, indirect arguments transfer each distinct
referenced element once, and read-modify-write modes (RW, INC) count both
directions. Achieved bandwidth is useful bytes over wall time. Reports
come out as CSV (flat columns) or JSON with all timing-dependent fields
grouped under a ``timing`` key, so everything else diffs byte-exactly
between runs.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .core import INC, RW, Loop

__all__ = ["PerfRecord", "PerfCollector", "useful_bytes", "records_csv",
           "emit_report", "REPORT_SCHEMA"]

_CSV_HEADER = "loop,time_sec,calls,gb_per_sec,pct_runtime,nb,nc,comm_sec,comp_sec"


def _mode_factor(mode) -> int:
    return 2 if mode in (RW, INC) else 1


def useful_bytes(loop: Loop) -> int:
    """Bytes a single invocation moves, as a pure function of loop and mesh."""
    total = 0
    n = loop.iter_set.size
    indirect_groups: dict[tuple, list] = {}
    for a in loop.args:
        if a.kind == "direct":
            total += n * a.dat.dim * a.dat.itemsize * _mode_factor(a.mode)
        elif a.kind == "global":
            total += a.glob.dim * a.glob.dtype.itemsize
        else:
            indirect_groups.setdefault((a.dat.name, a.mode), []).append(a)
    for (_, mode), args in indirect_groups.items():
        cols = [a.map.table[:, a.slot] for a in args]
        distinct = np.unique(np.concatenate(cols)).size if n else 0
        d = args[0].dat
        total += distinct * d.dim * d.itemsize * _mode_factor(mode)
    return total


@dataclass
class PerfRecord:
    loop: str
    calls: int
    time_sec: float
    useful_bytes: int
    gb_per_sec: float
    pct_runtime: float
    nb: int | None = None
    nc: int | None = None
    comm_sec: float = 0.0
    comp_sec: float = 0.0


@dataclass
class _Accum:
    calls: int = 0
    time_sec: float = 0.0
    useful_bytes: int = 0
    nb: int | None = None
    nc: int | None = None
    comm_sec: float = 0.0
    comp_sec: float = 0.0


@dataclass
class PerfCollector:
    """Merges per-invocation measurements into one record per loop name."""
    accum: dict[str, _Accum] = field(default_factory=dict)

    def add(self, loop: str, seconds: float, bytes_: int,
            nb: int | None = None, nc: int | None = None,
            comm: float = 0.0, comp: float = 0.0) -> None:
        a = self.accum.setdefault(loop, _Accum())
        a.calls += 1
        a.time_sec += seconds
        a.useful_bytes += bytes_
        if nb is not None:
            a.nb, a.nc = nb, nc
        a.comm_sec += comm
        a.comp_sec += comp

    def finalize(self) -> list[PerfRecord]:
        total = sum(a.time_sec for a in self.accum.values())
        out = []
        for name, a in self.accum.items():
            bw = a.useful_bytes / a.time_sec / 1e9 if a.time_sec > 0 else 0.0
            pct = 100.0 * a.time_sec / total if total > 0 else 0.0
            out.append(PerfRecord(name, a.calls, a.time_sec, a.useful_bytes,
                                  bw, pct, a.nb, a.nc, a.comm_sec, a.comp_sec))
        return out


def records_csv(records: list[PerfRecord]) -> str:
    rows = [_CSV_HEADER]
    for r in records:
        rows.append(
            f"{r.loop},{r.time_sec:.6f},{r.calls},{r.gb_per_sec:.4f},"
            f"{r.pct_runtime:.2f},{'' if r.nb is None else r.nb},"
            f"{'' if r.nc is None else r.nc},{r.comm_sec:.6f},{r.comp_sec:.6f}")
    return "\n".join(rows) + "\n"


REPORT_SCHEMA = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["schema", "config", "mesh", "loops"],
    "properties": {
        "schema": {"const": "meshloop-report/1"},
        "notes": {"type": "array", "items": {"type": "string"}},
        "config": {"type": "object"},
        "mesh": {
            "type": "object",
            "required": ["sets"],
            "properties": {"sets": {"type": "object",
                                    "additionalProperties": {"type": "integer"}}},
        },
        "loops": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["loop", "calls", "useful_bytes", "timing"],
                "properties": {
                    "loop": {"type": "string"},
                    "calls": {"type": "integer", "minimum": 0},
                    "useful_bytes": {"type": "integer", "minimum": 0},
                    "nb": {"type": ["integer", "null"]},
                    "nc": {"type": ["integer", "null"]},
                    "timing": {
                        "type": "object",
                        "required": ["time_sec", "gb_per_sec", "pct_runtime"],
                        "properties": {
                            "time_sec": {"type": "number", "minimum": 0},
                            "gb_per_sec": {"type": "number", "minimum": 0},
                            "pct_runtime": {"type": "number", "minimum": 0},
                            "comm_sec": {"type": "number", "minimum": 0},
                            "comp_sec": {"type": "number", "minimum": 0},
                        },
                    },
                },
            },
        },
        "halo_stats": {
            "type": ["array", "null"],
            "items": {
                "type": "object",
                "required": ["nranks", "av_neighbors", "tot", "pct_halo"],
            },
        },
        "renumber": {"type": ["object", "null"]},
        "globals": {"type": ["object", "null"]},
    },
}


def report_dict(records: list[PerfRecord], config: dict | None = None,
                mesh_sets: dict | None = None, halo_rows=None,
                renumber: dict | None = None, globals_: dict | None = None,
                notes: list[str] | None = None) -> dict:
    loops = []
    for r in records:
        loops.append({
            "loop": r.loop,
            "calls": r.calls,
            "useful_bytes": r.useful_bytes,
            "nb": r.nb,
            "nc": r.nc,
            "timing": {
                "time_sec": r.time_sec,
                "gb_per_sec": r.gb_per_sec,
                "pct_runtime": r.pct_runtime,
                "comm_sec": r.comm_sec,
                "comp_sec": r.comp_sec,
            },
        })
    halo = None
    if halo_rows is not None:
        halo = [{"nranks": h.nranks, "av_neighbors": h.av_neighbors,
                 "tot": h.avg_total_elements, "pct_halo": h.pct_halo}
                for h in halo_rows]
    return {
        "schema": "meshloop-report/1",
        "notes": notes or [],
        "config": config or {},
        "mesh": {"sets": mesh_sets or {}},
        "loops": loops,
        "halo_stats": halo,
        "renumber": renumber,
        "globals": globals_,
    }


def emit_report(records: list[PerfRecord], path=None, fmt: str | None = None,
                **sections) -> str:
    """Render records as CSV or JSON; write to ``path`` when given.

    ``fmt`` defaults from the path suffix (.csv/.json), else JSON.
    """
    if fmt is None:
        fmt = "csv" if path is not None and str(path).endswith(".csv") else "json"
    if fmt == "csv":
        text = records_csv(records)
    elif fmt == "json":
        text = json.dumps(report_dict(records, **sections), indent=2,
                          sort_keys=True) + "\n"
    else:
        raise ValueError(f"unknown report format {fmt!r}")
    if path is not None:
        with open(path, "w", encoding="utf-8") as fh:
            fh.write(text)
    return text
