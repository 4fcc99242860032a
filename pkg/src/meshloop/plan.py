"""Per-loop execution plans: mini-partition blocking and two-level coloring.

The iteration set is cut into contiguous blocks (the last one ragged).
Blocks whose elements indirectly write a common target element never share
a block color, so all blocks of one color can run concurrently; within a
block, elements writing a common target get distinct element colors and
execute color by color. Loops with no indirect writes need a single color.

Coloring is greedy first-fit in block-index order (element-index order
inside blocks), which makes rebuilds deterministic. Plans are cached on
the mesh, keyed by the loop's structural signature, the block size, and
the mesh version.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .core import Loop, Mesh

__all__ = ["PlanConfig", "ExecPlan", "PlanStats", "build_plan", "plan_for", "plan_stats"]


@dataclass
class PlanConfig:
    block_size: int = 256


@dataclass
class ExecPlan:
    """Race-freedom certificate for one loop at one block size."""
    n: int
    block_size: int
    nblocks: int
    block_bounds: np.ndarray          # nblocks+1 offsets into the iteration set
    block_color: np.ndarray
    ncolors: int
    blocks_by_color: list[np.ndarray]
    elem_color: np.ndarray
    elem_ncolors: np.ndarray          # per block
    block_elem_order: list[np.ndarray]  # per block: elements by (color, index)

    def block_elements(self, b: int) -> np.ndarray:
        return np.arange(self.block_bounds[b], self.block_bounds[b + 1])


@dataclass
class PlanStats:
    nb: int
    nc: int
    blocks_per_color: list[int]


def build_plan(n: int, write_cols: list[tuple[str, np.ndarray]],
               block_size: int) -> ExecPlan:
    """Plan ``n`` iterations whose indirect writes target ``write_cols``.

    ``write_cols`` holds one ``(dat key, target index column)`` pair per
    indirect write argument; targets of distinct dats never conflict.
    """
    if block_size < 1:
        raise ValueError(f"block size must be >= 1, got {block_size}")
    nblocks = -(-n // block_size) if n else 0
    bounds = np.minimum(np.arange(nblocks + 1) * block_size, n)
    block_of = np.minimum(np.arange(n) // block_size, max(nblocks - 1, 0))

    elem_color = np.zeros(n, dtype=np.int64)
    elem_ncolors = np.ones(nblocks, dtype=np.int64)
    if not write_cols or n == 0:
        block_color = np.zeros(nblocks, dtype=np.int64)
        ncolors = 1 if nblocks else 0
    else:
        # Disambiguate targets of different dats by offsetting their ids.
        offset, bases = 0, {}
        cols = []
        for key, col in write_cols:
            if key not in bases:
                bases[key] = offset
                offset += int(col.max(initial=-1)) + 1
            cols.append(col + bases[key])
        tgt = np.concatenate(cols)
        blk = np.tile(block_of, len(cols))

        order = np.lexsort((blk, tgt))
        tgt_s, blk_s = tgt[order], blk[order]
        starts = np.nonzero(np.r_[True, tgt_s[1:] != tgt_s[:-1]])[0]
        ends = np.r_[starts[1:], len(tgt_s)]

        adj: list[set] = [set() for _ in range(nblocks)]
        for s, e in zip(starts, ends):
            group = np.unique(blk_s[s:e])
            if len(group) > 1:
                for b in group:
                    adj[b].update(group.tolist())
        block_color = np.empty(nblocks, dtype=np.int64)
        for b in range(nblocks):
            used = {int(block_color[nb]) for nb in adj[b] if nb < b}
            c = 0
            while c in used:
                c += 1
            block_color[b] = c
        ncolors = int(block_color.max()) + 1 if nblocks else 0

        # Element colors within each block, over the same write targets.
        ncols = len(cols)
        tgt2 = np.stack(cols, axis=1) if ncols > 1 else tgt.reshape(n, 1)
        for b in range(nblocks):
            lo, hi = int(bounds[b]), int(bounds[b + 1])
            used_by_target: dict[int, set] = {}
            maxc = 0
            for e in range(lo, hi):
                forbidden = set()
                for t in tgt2[e]:
                    forbidden |= used_by_target.get(int(t), set())
                c = 0
                while c in forbidden:
                    c += 1
                elem_color[e] = c
                maxc = max(maxc, c)
                for t in tgt2[e]:
                    used_by_target.setdefault(int(t), set()).add(c)
            elem_ncolors[b] = maxc + 1

    blocks_by_color = [np.nonzero(block_color == c)[0] for c in range(ncolors)]
    order_per_block = []
    for b in range(nblocks):
        lo, hi = int(bounds[b]), int(bounds[b + 1])
        order_per_block.append(lo + np.argsort(elem_color[lo:hi], kind="stable"))
    return ExecPlan(n, block_size, nblocks, bounds, block_color, ncolors,
                    blocks_by_color, elem_color, elem_ncolors, order_per_block)


def _write_cols(loop: Loop) -> list[tuple[str, np.ndarray]]:
    return [(a.dat.name, a.map.table[:, a.slot]) for a in loop.indirect_write_args()]


def plan_for(loop: Loop, mesh: Mesh, block_size: int | None = None) -> ExecPlan:
    """Build or fetch the cached plan for a loop on this mesh."""
    if block_size is None:
        block_size = PlanConfig().block_size
    key = (loop.signature(), block_size, mesh.version)
    plan = mesh._plan_cache.get(key)
    if plan is None:
        plan = build_plan(loop.iter_set.size, _write_cols(loop), block_size)
        mesh._plan_cache[key] = plan
        mesh._plan_builds += 1
    return plan


def plan_stats(plan: ExecPlan) -> PlanStats:
    return PlanStats(plan.nblocks, plan.ncolors,
                     [len(b) for b in plan.blocks_by_color])
