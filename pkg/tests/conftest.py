"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately re-derive expectations from first
principles (pure-Python set arithmetic, exhaustive scans) so they share
no code path with the implementations they check.
"""
from __future__ import annotations

import os

import numpy as np
import pytest

from meshloop import (INC, READ, Loop, Mesh, arg_direct, arg_indirect)
from meshloop.core import WRITE_MODES


SEED = int(os.environ.get("MESHLOOP_SEED", "0"))


@pytest.fixture
def rng():
    return np.random.default_rng(SEED)


def path_mesh(order=None) -> Mesh:
    """4-node path with 3 arity-2 edges; ``order`` relabels the path nodes.

    ``order[k]`` is the 1-based label carried by the k-th node along the
    path, so ``order=(3, 1, 4, 2)`` presents the path scrambled.
    """
    order = order or (1, 2, 3, 4)
    mesh = Mesh()
    nodes = mesh.decl_set("nodes", 4)
    edges = mesh.decl_set("edges", 3)
    rows = []
    for k in range(3):
        rows.extend((order[k], order[k + 1]))
    mesh.decl_map("edge_nodes", edges, nodes, 2, rows)
    return mesh


def inc_loop(mesh: Mesh, map_name="edge_nodes", dat_name="acc") -> Loop:
    """Canonical indirect-INC loop: every map column increments the target."""
    m = mesh.maps[map_name]
    if dat_name not in mesh.dats:
        mesh.decl_dat(dat_name, m.to_set, 1, "int64",
                      np.zeros(m.to_set.size, dtype=np.int64))
    dat = mesh.dats[dat_name]
    args = [arg_indirect(dat, m, k + 1, INC) for k in range(m.arity)]

    def kern(*views):
        for v in views:
            v[0] += 1

    return Loop(f"inc_{map_name}", m.from_set, args, kern)


def random_loop_mesh(rng, max_elems=500):
    """Random bipartite mesh plus an indirect-INC loop over it."""
    nt = int(rng.integers(2, max(3, max_elems // 3)))
    ni = int(rng.integers(1, max(2, max_elems - nt)))
    arity = int(rng.integers(1, 4))
    mesh = Mesh()
    tgt = mesh.decl_set("tgt", nt)
    it = mesh.decl_set("it", ni)
    m = mesh.decl_map("m", it, tgt, arity,
                      rng.integers(1, nt + 1, size=ni * arity))
    vals = mesh.decl_dat("vals", tgt, 1, "int64", np.zeros(nt, dtype=np.int64))
    src = mesh.decl_dat("src", it, 1, "int64",
                        rng.integers(0, 100, size=ni).astype(np.int64))
    args = [arg_direct(src, READ)]
    args += [arg_indirect(vals, m, k + 1, INC) for k in range(arity)]

    def kern(s, *targets):
        for t in targets:
            t[0] += s[0]

    return mesh, Loop("fuzz", it, args, kern)


# -- independent oracles --------------------------------------------------

def brute_force_halos(loops, assignments):
    """Reachability closure straight from the owner-compute definitions.

    Returns ``(exec_halo, nonexec_halo)`` as per-set, per-rank Python sets.
    """
    nranks = next(iter(assignments.values())).nranks
    owner = {name: a.rank_of for name, a in assignments.items()}
    exec_h = {name: [set() for _ in range(nranks)] for name in assignments}
    nonex = {name: [set() for _ in range(nranks)] for name in assignments}
    for loop in loops:
        s = loop.iter_set.name
        for e in range(loop.iter_set.size):
            for a in loop.args:
                if a.kind == "indirect" and a.mode in WRITE_MODES:
                    t = int(a.map.table[e, a.slot])
                    r = int(owner[a.dat.set.name][t])
                    if r != int(owner[s][e]):
                        exec_h[s][r].add(e)
    for loop in loops:
        s = loop.iter_set.name
        for r in range(nranks):
            executed = [e for e in range(loop.iter_set.size)
                        if int(owner[s][e]) == r or e in exec_h[s][r]]
            for a in loop.args:
                if a.kind != "indirect":
                    continue
                ts = a.dat.set.name
                for e in executed:
                    t = int(a.map.table[e, a.slot])
                    if int(owner[ts][t]) != r and t not in exec_h[ts][r]:
                        nonex[ts][r].add(t)
    return exec_h, nonex


def assert_layout_matches_oracle(layout, loops, assignments):
    exec_h, nonex = brute_force_halos(loops, assignments)
    for name, per_rank in layout.sets.items():
        for r, h in enumerate(per_rank):
            assert set(h.exec_halo.tolist()) == exec_h.get(name, [set()] * len(per_rank))[r], \
                f"exec halo mismatch for set {name} rank {r}"
            assert set(h.nonexec_halo.tolist()) == nonex.get(name, [set()] * len(per_rank))[r], \
                f"nonexec halo mismatch for set {name} rank {r}"


def loop_write_targets(loop, e):
    """(dat name, target element) pairs element ``e`` writes through maps."""
    out = set()
    for a in loop.args:
        if a.kind == "indirect" and a.mode in WRITE_MODES:
            out.add((a.dat.name, int(a.map.table[e, a.slot])))
    return out


def assert_plan_race_free(loop, plan):
    """Exhaustive conflict scan of a plan at block and element level."""
    block_of = lambda e: int(np.searchsorted(plan.block_bounds, e, "right") - 1)
    targets_by_block = [set() for _ in range(plan.nblocks)]
    for e in range(plan.n):
        targets_by_block[block_of(e)] |= loop_write_targets(loop, e)
    for color in range(plan.ncolors):
        seen = {}
        for b in plan.blocks_by_color[color]:
            for t in targets_by_block[b]:
                assert t not in seen, \
                    f"blocks {seen[t]} and {b} share color {color} and target {t}"
                seen[t] = int(b)
    for b in range(plan.nblocks):
        lo, hi = plan.block_bounds[b], plan.block_bounds[b + 1]
        for c in range(int(plan.elem_ncolors[b])):
            seen = {}
            for e in range(lo, hi):
                if plan.elem_color[e] != c:
                    continue
                for t in loop_write_targets(loop, e):
                    assert t not in seen, \
                        f"elements {seen[t]} and {e} share color {c} in block {b}"
                    seen[t] = e
