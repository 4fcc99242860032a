"""Auto-tuning: block-size and hybrid-balance sweeps over measured runs.

Each candidate is measured as the median of a few repeated runs (dat
payloads restored between runs, so tuning never changes results). Chosen
block sizes persist in a JSON lookup table keyed by (loop, backend,
nranks) and can be loaded on later runs. A candidate whose repeats vary
by more than half the median is flagged and the default size kept.
"""
from __future__ import annotations

import json
import statistics
from dataclasses import dataclass, field, replace

from .core import Mesh
from .executor import BackendConfig, run_program

__all__ = ["BlockTuneResult", "BalanceTuneResult", "tune_block_size",
           "tune_balance", "save_table", "load_table", "table_key"]

VARIANCE_LIMIT = 0.5


@dataclass
class BlockTuneResult:
    best: dict[str, int]                 # loop name -> chosen block size
    curves: dict[str, list[tuple[int, float]]]
    flagged: set[str] = field(default_factory=set)


@dataclass
class BalanceTuneResult:
    best: float
    curve: list[tuple[float, float]]
    flagged: bool = False


def _measure(program, mesh: Mesh, config: BackendConfig, repeats: int):
    """Median per-loop seconds and total seconds over repeated runs."""
    state = mesh.snapshot()
    per_loop: dict[str, list[float]] = {}
    totals = []
    for _ in range(repeats):
        mesh.restore(state)
        result = run_program(program, mesh, config)
        totals.append(result.total_sec)
        for rec in result.perf:
            per_loop.setdefault(rec.loop, []).append(rec.time_sec)
    mesh.restore(state)
    med = {name: statistics.median(ts) for name, ts in per_loop.items()}
    spread = {name: (max(ts) - min(ts), statistics.median(ts))
              for name, ts in per_loop.items()}
    return med, spread, statistics.median(totals)


def tune_block_size(program, mesh: Mesh, candidates, config: BackendConfig,
                    repeats: int = 3) -> BlockTuneResult:
    """Pick the block size with minimal median time, per loop."""
    cands = list(candidates)
    if not cands:
        raise ValueError("no block size candidates")
    curves: dict[str, list[tuple[int, float]]] = {}
    spreads: dict[tuple[str, int], tuple[float, float]] = {}
    for size in cands:
        cfg = replace(config, block_size=int(size), block_size_table=None)
        med, spread, _ = _measure(program, mesh, cfg, repeats)
        for name, t in med.items():
            curves.setdefault(name, []).append((int(size), t))
            spreads[(name, int(size))] = spread[name]
    best: dict[str, int] = {}
    flagged: set[str] = set()
    for name, curve in curves.items():
        size, _ = min(curve, key=lambda p: p[1])
        delta, med_t = spreads[(name, size)]
        if med_t > 0 and delta > VARIANCE_LIMIT * med_t and len(cands) > 1:
            flagged.add(name)
            best[name] = config.block_size
        else:
            best[name] = size
    return BlockTuneResult(best, curves, flagged)


def tune_balance(program, mesh: Mesh, candidates, config: BackendConfig,
                 repeats: int = 3) -> BalanceTuneResult:
    """Pick the hybrid balance factor with minimal median total time."""
    cands = [float(b) for b in candidates]
    if not cands:
        raise ValueError("no balance candidates")
    curve = []
    for beta in cands:
        cfg = replace(config, backend="hybrid", balance=beta)
        _, _, total = _measure(program, mesh, cfg, repeats)
        curve.append((beta, total))
    best, _ = min(curve, key=lambda p: p[1])
    return BalanceTuneResult(best, curve)


def table_key(loop: str, backend: str, nranks: int) -> str:
    return f"{loop}|{backend}|{nranks}"


def save_table(path, best: dict[str, int], config: BackendConfig,
               curves: dict[str, list[tuple[int, float]]] | None = None) -> None:
    """Persist chosen block sizes keyed by (loop, backend, nranks).

    When given, the measured sweep curves are stored alongside so the
    size-vs-time shape survives for later inspection.
    """
    entries = [{"loop": name, "backend": config.backend,
                "nranks": config.nranks, "block_size": size}
               for name, size in sorted(best.items())]
    doc = {"entries": entries}
    if curves is not None:
        doc["curves"] = {name: [[int(s), t] for s, t in curve]
                         for name, curve in sorted(curves.items())}
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2)
        fh.write("\n")


def load_table(path) -> dict[str, dict]:
    with open(path, "r", encoding="utf-8") as fh:
        data = json.load(fh)
    out = {}
    for e in data["entries"]:
        out[table_key(e["loop"], e["backend"], e["nranks"])] = e
    return out


def lookup_block_sizes(table: dict[str, dict], backend: str,
                       nranks: int) -> dict[str, int]:
    """Per-loop block sizes applicable to one backend configuration."""
    out = {}
    for e in table.values():
        if e["backend"] == backend and e["nranks"] == nranks:
            out[e["loop"]] = int(e["block_size"])
    return out
