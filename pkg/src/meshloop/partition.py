"""Mesh decomposition across ranks and owner-compute halo construction.

Partitioners assign each element of a set to a rank: trivial contiguous
blocks, recursive coordinate bisection over element coordinates, or
weighted contiguous blocks (used by the two-class hybrid backend).
Iteration sets of indirect loops are *derived*: an element is owned by the
rank owning the first target of the loop's first indirect argument.

Halo construction closes each rank's working set: the *exec halo* of an
iteration set holds elements owned elsewhere whose indirect writes land on
locally owned data (they are executed redundantly); the *nonexec halo*
holds elements whose data is only read. Import lists are ordered by
ascending global id and export lists mirror them element-for-element.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .core import Dat, Loop, Mesh, MeshError, Set

__all__ = [
    "PartitionAssignment", "SetHalos", "RankLayout", "HaloStatsRow",
    "partition_trivial", "partition_rcb", "partition_weighted",
    "derive_assignments", "build_halos", "halo_stats", "halo_stats_csv",
]


@dataclass
class PartitionAssignment:
    """Rank of every element of one set."""
    set_name: str
    nranks: int
    rank_of: np.ndarray

    def owned_by(self, rank: int) -> np.ndarray:
        return np.nonzero(self.rank_of == rank)[0]

    def sizes(self) -> list[int]:
        return np.bincount(self.rank_of, minlength=self.nranks).tolist()


def partition_trivial(set_: Set, nranks: int) -> PartitionAssignment:
    """Consecutive blocks of elements to consecutive ranks, sizes within 1."""
    if nranks < 1:
        raise MeshError(f"nranks must be >= 1, got {nranks}")
    base, rem = divmod(set_.size, nranks)
    counts = [base + 1 if r < rem else base for r in range(nranks)]
    rank_of = np.repeat(np.arange(nranks, dtype=np.int64), counts)
    return PartitionAssignment(set_.name, nranks, rank_of)


def partition_weighted(set_: Set, weights) -> PartitionAssignment:
    """Contiguous blocks sized by recursive weighted bisection.

    Each bisection gives the left group ``round(total * w_left / w)``
    elements, so every realized split is within one element of its ideal.
    """
    w = np.asarray(weights, dtype=np.float64)
    if w.ndim != 1 or w.size < 1 or np.any(w <= 0):
        raise MeshError("weights must be a non-empty vector of positive values")
    sizes = np.zeros(w.size, dtype=np.int64)

    def split(lo_rank, hi_rank, count):
        if hi_rank - lo_rank == 1:
            sizes[lo_rank] = count
            return
        mid = (lo_rank + hi_rank) // 2
        wl = w[lo_rank:mid].sum()
        wr = w[mid:hi_rank].sum()
        left = int(np.floor(count * wl / (wl + wr) + 0.5))
        split(lo_rank, mid, left)
        split(mid, hi_rank, count - left)

    split(0, w.size, set_.size)
    rank_of = np.repeat(np.arange(w.size, dtype=np.int64), sizes)
    return PartitionAssignment(set_.name, w.size, rank_of)


def partition_rcb(coords: Dat, nranks: int) -> PartitionAssignment:
    """Recursive median bisection of element coordinates, cycling the axes.

    ``nranks`` must be a power of two. Median ties go to the lower half by
    (coordinate, element index), which makes the assignment deterministic.
    """
    if nranks < 1 or (nranks & (nranks - 1)) != 0:
        raise MeshError(f"rcb needs a power-of-two rank count, got {nranks}")
    if coords.dim not in (2, 3):
        raise MeshError(f"rcb needs 2-D or 3-D coordinates, got dim {coords.dim}")
    pts = coords.fetch()
    set_ = coords.set
    rank_of = np.zeros(set_.size, dtype=np.int64)

    def bisect(elems: np.ndarray, first_rank: int, nparts: int, depth: int):
        if nparts == 1:
            rank_of[elems] = first_rank
            return
        axis = depth % coords.dim
        order = np.lexsort((elems, pts[elems, axis]))
        half = (len(elems) + 1) // 2
        bisect(elems[order[:half]], first_rank, nparts // 2, depth + 1)
        bisect(elems[order[half:]], first_rank + nparts // 2, nparts // 2, depth + 1)

    bisect(np.arange(set_.size), 0, nranks, 0)
    return PartitionAssignment(set_.name, nranks, rank_of)


def derive_assignments(mesh: Mesh, loops: list[Loop],
                       base: dict[str, PartitionAssignment],
                       nranks: int) -> dict[str, PartitionAssignment]:
    """Complete a partial assignment to cover every set the loops touch.

    Iteration sets with indirect arguments follow their first loop's first
    indirect map: the element goes to the owner of map column 1's target.
    Any other touched set falls back to trivial blocks.
    """
    out = dict(base)
    for loop in loops:
        s = loop.iter_set
        if s.name in out:
            continue
        indirect = [a for a in loop.args if a.kind == "indirect"]
        if indirect:
            m = indirect[0].map
            tgt = out.get(m.to_set.name)
            if tgt is None:
                raise MeshError(
                    f"cannot derive ownership of {s.name!r}: target set "
                    f"{m.to_set.name!r} has no assignment")
            out[s.name] = PartitionAssignment(
                s.name, nranks, tgt.rank_of[m.table[:, 0]].copy())
        else:
            out[s.name] = partition_trivial(s, nranks)
    for loop in loops:
        for a in loop.args:
            if a.kind == "indirect" and a.dat.set.name not in out:
                raise MeshError(f"set {a.dat.set.name!r} touched by loop "
                                f"{loop.name!r} has no assignment")
    return out


@dataclass
class SetHalos:
    """One rank's slice of one set: owned elements plus imported halos."""
    owned: np.ndarray
    exec_halo: np.ndarray
    nonexec_halo: np.ndarray
    imports: dict[int, np.ndarray] = field(default_factory=dict)
    exports: dict[int, np.ndarray] = field(default_factory=dict)

    @property
    def local_ids(self) -> np.ndarray:
        return np.concatenate([self.owned, self.exec_halo, self.nonexec_halo])

    @property
    def halo_count(self) -> int:
        return len(self.exec_halo) + len(self.nonexec_halo)


@dataclass
class RankLayout:
    """Owner-compute decomposition: per-rank, per-set halos and mirrors."""
    nranks: int
    assignments: dict[str, PartitionAssignment]
    sets: dict[str, list[SetHalos]]

    def neighbors(self, rank: int) -> list[int]:
        out = set()
        for per_rank in self.sets.values():
            h = per_rank[rank]
            out.update(h.imports)
            out.update(h.exports)
        return sorted(out)

    def totals(self, rank: int) -> tuple[int, int]:
        """(owned + halo, halo) element counts over all sets on one rank."""
        owned = halo = 0
        for per_rank in self.sets.values():
            h = per_rank[rank]
            owned += len(h.owned)
            halo += h.halo_count
        return owned + halo, halo


def build_halos(mesh: Mesh, loops: list[Loop],
                assignments: dict[str, PartitionAssignment]) -> RankLayout:
    """Close every rank's working set for the given loop program."""
    nranks = next(iter(assignments.values())).nranks if assignments else 1
    touched: dict[str, Set] = {}
    for loop in loops:
        touched[loop.iter_set.name] = loop.iter_set
        for a in loop.args:
            if a.dat is not None:
                touched[a.dat.set.name] = a.dat.set
    for name in touched:
        if name not in assignments:
            raise MeshError(f"set {name!r} is touched by the program but unassigned")

    exec_sets: dict[str, list[set]] = {n: [set() for _ in range(nranks)] for n in touched}
    # Exec halo: foreign iteration elements whose indirect writes hit owned data.
    for loop in loops:
        s = loop.iter_set.name
        iter_owner = assignments[s].rank_of
        for a in loop.indirect_write_args():
            tgt_owner = assignments[a.dat.set.name].rank_of[a.map.table[:, a.slot]]
            for r in range(nranks):
                hit = np.nonzero((iter_owner != r) & (tgt_owner == r))[0]
                exec_sets[s][r].update(hit.tolist())

    halos: dict[str, list[SetHalos]] = {}
    for name, s in touched.items():
        owner = assignments[name].rank_of
        halos[name] = [
            SetHalos(
                owned=np.nonzero(owner == r)[0],
                exec_halo=np.array(sorted(exec_sets[name][r]), dtype=np.int64),
                nonexec_halo=np.empty(0, dtype=np.int64),
            )
            for r in range(nranks)
        ]

    # Nonexec halo: remaining references from executed (owned + exec) elements.
    nonexec: dict[str, list[set]] = {n: [set() for _ in range(nranks)] for n in touched}
    for loop in loops:
        s = loop.iter_set.name
        for r in range(nranks):
            h = halos[s][r]
            executed = np.concatenate([h.owned, h.exec_halo])
            if executed.size == 0:
                continue
            for a in loop.args:
                if a.kind != "indirect":
                    continue
                tname = a.dat.set.name
                refs = np.unique(a.map.table[executed, a.slot])
                present_owner = assignments[tname].rank_of[refs]
                foreign = refs[present_owner != r]
                th = halos[tname][r]
                for g in foreign.tolist():
                    if g not in exec_sets[tname][r]:
                        nonexec[tname][r].add(g)
    for name in touched:
        for r in range(nranks):
            halos[name][r].nonexec_halo = np.array(
                sorted(nonexec[name][r]), dtype=np.int64)

    # Imports grouped by owner; exports are their exact mirrors.
    for name in touched:
        owner = assignments[name].rank_of
        for r in range(nranks):
            h = halos[name][r]
            halo_ids = np.concatenate([h.exec_halo, h.nonexec_halo])
            halo_ids.sort()
            for src in np.unique(owner[halo_ids]).tolist() if halo_ids.size else []:
                h.imports[src] = halo_ids[owner[halo_ids] == src]
        for r in range(nranks):
            for src, ids in halos[name][r].imports.items():
                halos[name][src].exports[r] = ids
    return RankLayout(nranks, dict(assignments), halos)


@dataclass
class HaloStatsRow:
    nranks: int
    av_neighbors: float
    avg_total_elements: float
    pct_halo: float


def halo_stats(layouts: list[RankLayout]) -> list[HaloStatsRow]:
    """Average neighbour count, held elements, and halo percentage per layout."""
    rows = []
    for lay in layouts:
        nb, tot, pct = [], [], []
        for r in range(lay.nranks):
            total, halo = lay.totals(r)
            nb.append(len(lay.neighbors(r)))
            tot.append(total)
            pct.append(100.0 * halo / total if total else 0.0)
        rows.append(HaloStatsRow(lay.nranks, float(np.mean(nb)),
                                 float(np.mean(tot)), float(np.mean(pct))))
    return rows


def halo_stats_csv(rows: list[HaloStatsRow]) -> str:
    out = ["nranks,av_neighbors,tot,pct_halo"]
    for row in rows:
        out.append(f"{row.nranks},{row.av_neighbors:.2f},"
                   f"{row.avg_total_elements:.1f},{row.pct_halo:.2f}")
    return "\n".join(out) + "\n"
