"""Mesh renumbering for cache locality.

Target sets (sets that maps point into) get a bandwidth-reducing
breadth-first ordering in the Cuthill-McKee family, derived from a
co-occurrence adjacency graph: two elements are adjacent when they appear
together in some row of an incident map. Source sets (sets that loops
iterate over, e.g. edges) are instead reordered lexicographically by their
renumbered targets, so consecutively executed elements touch nearby data.

Determinism rules, pinned for golden tests: the traversal of each
connected component starts from its minimum-degree vertex (ties to the
lowest index), appends unvisited neighbours sorted by ascending degree
then index, and components are processed in order of their lowest-index
vertex. An already-banded graph therefore renumbers to the identity.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Map, Mesh, MeshError, Set

__all__ = [
    "Permutation", "BandwidthStats", "compute_ordering", "apply_permutation",
    "bandwidth_metric", "row_order_by_targets", "renumber_mesh",
]


@dataclass
class Permutation:
    """A bijection on one set: ``forward[old] = new`` and its inverse."""
    set_name: str
    forward: np.ndarray
    inverse: np.ndarray
    mesh_version: int

    @property
    def size(self) -> int:
        return self.forward.size

    def is_identity(self) -> bool:
        return bool(np.array_equal(self.forward, np.arange(self.size)))


@dataclass
class BandwidthStats:
    """Per-row index spread of one map: the locality proxy we optimize."""
    max_span: int
    mean_span: float


def _co_occurrence_csr(mesh: Mesh, set_: Set) -> tuple[np.ndarray, np.ndarray]:
    """CSR adjacency over ``set_`` from row co-occurrence in incident maps."""
    incident = [m for m in mesh.maps.values()
                if m.to_set is set_ or m.from_set is set_]
    if not incident:
        raise MeshError(f"set {set_.name!r} has no incident map; cannot derive adjacency")
    pairs = []
    for m in incident:
        if m.to_set is not set_ or m.from_set.size == 0:
            continue
        t = m.table
        for i in range(m.arity):
            for j in range(i + 1, m.arity):
                pairs.append(np.stack([t[:, i], t[:, j]], axis=1))
    n = set_.size
    edges = (np.concatenate(pairs, axis=0) if pairs
             else np.empty((0, 2), dtype=np.int64))
    edges = edges[edges[:, 0] != edges[:, 1]]
    sym = np.concatenate([edges, edges[:, ::-1]], axis=0)
    if len(sym):
        order = np.lexsort((sym[:, 1], sym[:, 0]))
        sym = sym[order]
        keep = np.ones(len(sym), dtype=bool)
        keep[1:] = np.any(sym[1:] != sym[:-1], axis=1)
        sym = sym[keep]
    indptr = np.zeros(n + 1, dtype=np.int64)
    np.add.at(indptr, sym[:, 0] + 1, 1)
    indptr = np.cumsum(indptr)
    return indptr, sym[:, 1].copy()


def _bfs_order(indptr: np.ndarray, indices: np.ndarray, n: int) -> np.ndarray:
    degree = np.diff(indptr)
    visited = np.zeros(n, dtype=bool)
    order = np.empty(n, dtype=np.int64)
    pos = 0
    for lead in range(n):
        if visited[lead]:
            continue
        # Discover the component containing the lowest unvisited index,
        # then restart the traversal from its minimum-degree vertex.
        comp = [lead]
        visited[lead] = True
        head = 0
        while head < len(comp):
            v = comp[head]
            head += 1
            for w in indices[indptr[v]:indptr[v + 1]]:
                if not visited[w]:
                    visited[w] = True
                    comp.append(int(w))
        comp_arr = np.array(comp)
        start = int(comp_arr[np.lexsort((comp_arr, degree[comp_arr]))[0]])

        seen = {start}
        queue = [start]
        head = 0
        while head < len(queue):
            v = queue[head]
            head += 1
            order[pos] = v
            pos += 1
            nbrs = [int(w) for w in indices[indptr[v]:indptr[v + 1]] if w not in seen]
            nbrs.sort(key=lambda w: (degree[w], w))
            seen.update(nbrs)
            queue.extend(nbrs)
    return order


def compute_ordering(mesh: Mesh, set_: Set) -> Permutation:
    """Bandwidth-reducing ordering of ``set_`` over its co-occurrence graph."""
    indptr, indices = _co_occurrence_csr(mesh, set_)
    order = _bfs_order(indptr, indices, set_.size)
    forward = np.empty(set_.size, dtype=np.int64)
    forward[order] = np.arange(set_.size)
    return Permutation(set_.name, forward, order.copy(), mesh.version)


def row_order_by_targets(mesh: Mesh, map_: Map) -> Permutation:
    """Permutation of a map's source set sorting rows by their target tuples."""
    t = map_.table
    keys = tuple(t[:, i] for i in reversed(range(map_.arity)))
    order = np.lexsort(keys)  # stable: ties keep original row order
    forward = np.empty(map_.from_set.size, dtype=np.int64)
    forward[order] = np.arange(map_.from_set.size)
    return Permutation(map_.from_set.name, forward, order.copy(), mesh.version)


def apply_permutation(mesh: Mesh, perm: Permutation) -> Mesh:
    """Renumber one set in place: dats move, map targets rewrite, map rows reorder."""
    if mesh.frozen:
        raise MeshError("cannot renumber a frozen mesh")
    if perm.mesh_version != mesh.version:
        raise MeshError(
            f"stale permutation for set {perm.set_name!r}: mesh changed since it was computed")
    set_ = mesh.sets[perm.set_name]
    if perm.forward.size != set_.size:
        raise MeshError(f"permutation size {perm.forward.size} != set size {set_.size}")
    f = perm.forward
    for d in mesh.dats.values():
        if d.set is set_:
            vals = d.fetch()
            moved = np.empty_like(vals)
            moved[f] = vals
            d.put(moved)
    for m in mesh.maps.values():
        if m.to_set is set_:
            m.table = f[m.table]
        if m.from_set is set_:
            moved_rows = np.empty_like(m.table)
            moved_rows[f] = m.table
            m.table = moved_rows
    mesh.version += 1
    return mesh


def bandwidth_metric(mesh: Mesh, map_: Map) -> BandwidthStats:
    """Max and mean over map rows of (max index - min index) within the row."""
    if map_.table.shape[0] == 0:
        return BandwidthStats(0, 0.0)
    spans = map_.table.max(axis=1) - map_.table.min(axis=1)
    return BandwidthStats(int(spans.max()), float(spans.mean()))


def renumber_mesh(mesh: Mesh) -> dict:
    """Renumber every set touched by a map and report per-map span stats.

    Target sets are ordered first, then each remaining source set is
    row-sorted by its first declared map. Returns
    ``{"permutations": {set: Permutation}, "maps": {map: (before, after)}}``.
    """
    before = {name: bandwidth_metric(mesh, m) for name, m in mesh.maps.items()}
    perms: dict[str, Permutation] = {}
    to_sets = [s for s in mesh.sets.values()
               if any(m.to_set is s for m in mesh.maps.values())]
    for s in to_sets:
        perm = compute_ordering(mesh, s)
        apply_permutation(mesh, perm)
        perms[s.name] = perm
    from_sets = [s for s in mesh.sets.values()
                 if s.name not in perms
                 and any(m.from_set is s for m in mesh.maps.values())]
    for s in from_sets:
        primary = next(m for m in mesh.maps.values() if m.from_set is s)
        perm = row_order_by_targets(mesh, primary)
        apply_permutation(mesh, perm)
        perms[s.name] = perm
    after = {name: bandwidth_metric(mesh, m) for name, m in mesh.maps.items()}
    return {"permutations": perms,
            "maps": {name: (before[name], after[name]) for name in mesh.maps}}
