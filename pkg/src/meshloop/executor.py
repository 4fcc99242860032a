"""Loop execution backends.

Four backends share one kernel-callback contract:

* ``serial``  — elements in ascending index order; the reference semantics
  every other backend is tested against.
* ``threads`` — colored execution from a per-loop plan: block colors run
  as barrier-separated phases on a worker pool, element colors sequence
  conflicting elements inside each block.
* ``ranks``   — in-process workers standing in for message-passing ranks.
  Each rank executes its owned elements plus its exec halo redundantly,
  communicates only through per-pair channels carrying (dat, rows)
  payloads, and exchanges a dat's halo lazily when a loop reads data some
  earlier loop wrote. Increments and writes landing on non-owned elements
  during redundant execution stay local and are discarded; the owner
  computes them itself.
* ``hybrid``  — ranks with a weighted partition: one wide worker class
  takes a partition ``balance`` times the combined size of the rest, and
  each rank executes its local elements through the colored-plan path.

Global reductions accumulate per-worker partials and combine them in a
fixed ascending order, so runs with identical configuration produce
identical results down to float rounding.
"""
from __future__ import annotations

import queue
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .core import (AOS, INC, MAX, MIN, READ, RW, WRITE_MODES, Dat, ExecError,
                   Loop, Mesh, MeshError)
from .partition import (PartitionAssignment, RankLayout, build_halos,
                        derive_assignments, partition_rcb, partition_trivial,
                        partition_weighted)
from .perf import PerfCollector, PerfRecord, useful_bytes
from .plan import build_plan, plan_for, plan_stats

__all__ = [
    "BackendConfig", "RunResult", "ExchangeTimeout", "reduce_global",
    "run_serial", "run_threads", "run_ranks", "run_hybrid", "run_program",
    "build_layout",
]

_BACKENDS = ("serial", "threads", "ranks", "hybrid")


class ExchangeTimeout(ExecError):
    """A rank waited longer than the configured bound for a halo message."""


@dataclass
class BackendConfig:
    backend: str = "serial"
    nthreads: int = 4
    nranks: int = 1
    block_size: int = 256
    block_size_table: dict | None = None   # per-loop block size overrides
    partitioner: str = "trivial"           # trivial | rcb
    coord_dat: str = "coords"
    balance: float = 1.0                   # hybrid partition size ratio
    class_a_ranks: int = 1
    class_a_width: int = 4
    class_b_width: int = 1
    class_a_speed: float = 1.0             # divides simulated per-element cost
    class_b_speed: float = 1.0
    timeout_ms: float = 10000.0
    simulated_elem_cost: float = 0.0       # seconds per element, slept per block
    cost_model: Callable[[int], float] | None = None  # per-element cost f(block size)
    phase_callback: Callable[[str, int], None] | None = None

    def __post_init__(self):
        if self.backend not in _BACKENDS:
            raise MeshError(f"unknown backend {self.backend!r}; expected one of {_BACKENDS}")
        if self.nthreads < 1 or self.nranks < 1 or self.block_size < 1:
            raise MeshError("nthreads, nranks and block_size must be positive")
        if self.backend == "hybrid":
            if self.nranks < 2:
                raise MeshError("hybrid execution needs at least 2 ranks")
            if not 0 < self.class_a_ranks < self.nranks:
                raise MeshError("hybrid needs class-A and class-B ranks")
        if self.balance <= 0:
            raise MeshError(f"balance must be positive, got {self.balance}")
        if self.partitioner not in ("trivial", "rcb"):
            raise MeshError(f"unknown partitioner {self.partitioner!r}")

    def block_size_for(self, loop_name: str) -> int:
        if self.block_size_table and loop_name in self.block_size_table:
            return int(self.block_size_table[loop_name])
        return self.block_size

    def elem_cost(self, block_size: int) -> float:
        if self.cost_model is not None:
            return float(self.cost_model(block_size))
        return self.simulated_elem_cost


@dataclass
class RunResult:
    perf: list[PerfRecord]
    total_sec: float
    messages: int = 0
    layout: RankLayout | None = None
    assignments: dict[str, PartitionAssignment] | None = None


# -- reductions ---------------------------------------------------------


def _reduce_identity(mode, dtype: np.dtype, dim: int) -> np.ndarray:
    if mode is INC:
        return np.zeros(dim, dtype=dtype)
    big = np.iinfo(dtype).max if dtype.kind == "i" else np.inf
    small = np.iinfo(dtype).min if dtype.kind == "i" else -np.inf
    return np.full(dim, big if mode is MIN else small, dtype=dtype)


def reduce_global(partials: Sequence, mode, initial=None):
    """Combine per-worker partials in the given (ascending) order."""
    if mode not in (INC, MIN, MAX):
        raise MeshError(f"mode {mode} is not a reduction")
    arrs = [np.atleast_1d(np.asarray(p)) for p in partials]
    if initial is not None:
        acc = np.atleast_1d(np.asarray(initial)).copy()
    elif not arrs:
        raise MeshError("nothing to reduce")
    elif mode is INC:
        acc = np.zeros_like(arrs[0])
    else:
        acc, arrs = arrs[0].copy(), arrs[1:]
    for p in arrs:
        if mode is INC:
            acc = acc + p
        elif mode is MIN:
            acc = np.minimum(acc, p)
        else:
            acc = np.maximum(acc, p)
    return acc[0] if acc.size == 1 else acc


# -- element access -----------------------------------------------------


def _view_accessor(flat: np.ndarray, size: int, dim: int, layout,
                   tgt: np.ndarray | None):
    """Closure giving the length-``dim`` logical view of one element."""
    if layout is AOS:
        rows = flat.reshape(size, dim)
        if tgt is None:
            return rows.__getitem__
        return lambda e: rows[tgt[e]]
    cols = flat.reshape(dim, size)
    if tgt is None:
        return lambda e: cols[:, e]
    return lambda e: cols[:, tgt[e]]


def _gather_rows(flat, size, dim, layout, idx) -> np.ndarray:
    if layout is AOS:
        return flat.reshape(size, dim)[idx]
    return flat.reshape(dim, size)[:, idx].T.copy()


def _scatter_rows(flat, size, dim, layout, idx, vals) -> None:
    if layout is AOS:
        flat.reshape(size, dim)[idx] = vals
    else:
        flat.reshape(dim, size)[:, idx] = vals.T


def _run_elements(kernel, accessors, elements, loop_name: str) -> None:
    e = None
    try:
        for e in elements:
            kernel(*[a(e) for a in accessors])
    except Exception as err:
        raise ExecError(f"kernel failed in loop {loop_name!r} at element "
                        f"{'?' if e is None else int(e) + 1}: {err}") from err


def _global_accessors(loop: Loop) -> list[int]:
    return [i for i, a in enumerate(loop.args) if a.kind == "global"]


# -- serial backend -----------------------------------------------------


def _serial_accessors(loop: Loop) -> list:
    out = []
    for a in loop.args:
        if a.kind == "global":
            buf = a.glob.buffer
            out.append(lambda e, buf=buf: buf)
        else:
            d = a.dat
            tgt = a.map.table[:, a.slot] if a.kind == "indirect" else None
            out.append(_view_accessor(d.data, d.set.size, d.dim, d.layout, tgt))
    return out


def run_serial(loop: Loop, mesh: Mesh, config: BackendConfig | None = None,
               collector: PerfCollector | None = None) -> None:
    """Apply the kernel to elements in ascending order: the reference run."""
    mesh.freeze()
    n = loop.iter_set.size
    t0 = time.perf_counter()
    cost = config.elem_cost(max(n, 1)) if config else 0.0
    if cost:
        time.sleep(cost * n)
    _run_elements(loop.kernel, _serial_accessors(loop), range(n), loop.name)
    if collector is not None:
        collector.add(loop.name, time.perf_counter() - t0, useful_bytes(loop))


# -- threads backend ----------------------------------------------------


def _threads_loop(loop: Loop, mesh: Mesh, config: BackendConfig,
                  pool: ThreadPoolExecutor,
                  collector: PerfCollector | None) -> None:
    bs = config.block_size_for(loop.name)
    plan = plan_for(loop, mesh, bs)
    base = _serial_accessors(loop)
    red_idx = [i for i in _global_accessors(loop)
               if loop.args[i].mode in (INC, MIN, MAX)]
    cost = config.elem_cost(bs)
    t0 = time.perf_counter()

    partials: dict[int, list] = {i: [None] * plan.nblocks for i in red_idx}

    def exec_block(b: int) -> None:
        accessors = base
        if red_idx:
            accessors = list(base)
            for i in red_idx:
                g = loop.args[i].glob
                scratch = _reduce_identity(loop.args[i].mode, g.dtype, g.dim)
                partials[i][b] = scratch
                accessors[i] = lambda e, s=scratch: s
        order = plan.block_elem_order[b]
        if cost:
            time.sleep(cost * len(order))
        _run_elements(loop.kernel, accessors, order, loop.name)

    for color in range(plan.ncolors):
        if config.phase_callback is not None:
            config.phase_callback(loop.name, color)
        blocks = plan.blocks_by_color[color]
        nchunk = min(config.nthreads, len(blocks))
        if nchunk <= 1:
            for b in blocks:
                exec_block(int(b))
        else:
            def run_chunk(chunk):
                for b in chunk:
                    exec_block(int(b))
            futures = [pool.submit(run_chunk, chunk)
                       for chunk in np.array_split(blocks, nchunk)]
            for f in futures:
                f.result()

    for i in red_idx:
        arg = loop.args[i]
        parts = [p for p in partials[i] if p is not None]
        arg.glob.buffer[:] = np.atleast_1d(
            reduce_global(parts, arg.mode, initial=arg.glob.buffer.copy()))
    if collector is not None:
        st = plan_stats(plan)
        collector.add(loop.name, time.perf_counter() - t0, useful_bytes(loop),
                      nb=st.nb, nc=st.nc)


def run_threads(loop: Loop, mesh: Mesh, config: BackendConfig | None = None,
                collector: PerfCollector | None = None) -> None:
    """Colored execution of one loop on a transient worker pool."""
    config = config or BackendConfig(backend="threads")
    mesh.freeze()
    with ThreadPoolExecutor(max_workers=config.nthreads) as pool:
        _threads_loop(loop, mesh, config, pool, collector)


# -- rank layout construction -------------------------------------------


def _unique_loops(program: Sequence[Loop]) -> list[Loop]:
    seen, out = set(), []
    for loop in program:
        sig = loop.signature()
        if sig not in seen:
            seen.add(sig)
            out.append(loop)
    return out


def build_layout(mesh: Mesh, program: Sequence[Loop], config: BackendConfig,
                 weights=None) -> RankLayout:
    """Partition every touched set and build the owner-compute halos.

    Target sets of the program's maps get the primary partition (trivial
    blocks, coordinate bisection, or the given per-rank weights);
    iteration sets and the rest are derived from it.
    """
    loops = _unique_loops(program)
    to_sets = []
    for loop in loops:
        for a in loop.args:
            if a.kind == "indirect" and a.map.to_set not in to_sets:
                to_sets.append(a.map.to_set)
    base: dict[str, PartitionAssignment] = {}
    for s in to_sets:
        if weights is not None:
            base[s.name] = partition_weighted(s, weights)
        elif config.partitioner == "rcb":
            coords = mesh.dats.get(config.coord_dat)
            if coords is not None and coords.set is s:
                base[s.name] = partition_rcb(coords, config.nranks)
            else:
                raise MeshError(
                    f"rcb partitioning needs coordinates dat {config.coord_dat!r} "
                    f"on set {s.name!r}")
        else:
            base[s.name] = partition_trivial(s, config.nranks)
    assignments = derive_assignments(mesh, loops, base, config.nranks)
    return build_halos(mesh, loops, assignments)


def _hybrid_weights(config: BackendConfig) -> np.ndarray:
    n_a = config.class_a_ranks
    n_b = config.nranks - n_a
    w_a = config.balance * n_b / n_a
    return np.array([w_a] * n_a + [1.0] * n_b)


# -- rank workers --------------------------------------------------------


class _Channels:
    """Unbounded per-(src, dst) queues standing in for point-to-point links."""

    def __init__(self, nranks: int, timeout_ms: float):
        self.queues = {(s, d): queue.Queue()
                       for s in range(nranks) for d in range(nranks) if s != d}
        self.timeout = timeout_ms / 1000.0

    def send(self, src: int, dst: int, tag, payload) -> None:
        self.queues[(src, dst)].put((tag, payload))

    def recv(self, src: int, dst: int, tag, loop_name: str, dat_name: str):
        try:
            got_tag, payload = self.queues[(src, dst)].get(timeout=self.timeout)
        except queue.Empty:
            raise ExchangeTimeout(
                f"rank {dst}: no message from rank {src} for dat {dat_name!r} "
                f"before loop {loop_name!r} within {self.timeout * 1000:.0f} ms"
            ) from None
        if got_tag != tag:
            raise ExecError(f"rank {dst}: message tag mismatch: "
                            f"expected {tag}, got {got_tag}")
        return payload


class _RankCtx:
    """One rank's private arrays, localized maps, and exchange lists."""

    def __init__(self, rank: int, mesh: Mesh, layout: RankLayout,
                 program: Sequence[Loop], config: BackendConfig,
                 channels: _Channels, hybrid: bool):
        self.rank = rank
        self.mesh = mesh
        self.layout = layout
        self.config = config
        self.channels = channels
        self.hybrid = hybrid
        self.is_class_a = hybrid and rank < config.class_a_ranks
        self.width = (config.class_a_width if self.is_class_a
                      else config.class_b_width) if hybrid else 1
        self.speed = (config.class_a_speed if self.is_class_a
                      else config.class_b_speed)

        self.g2l: dict[str, np.ndarray] = {}
        self.lsize: dict[str, int] = {}
        for sname, per_rank in layout.sets.items():
            h = per_rank[rank]
            ids = h.local_ids
            g2l = np.full(mesh.sets[sname].size, -1, dtype=np.int64)
            g2l[ids] = np.arange(ids.size)
            self.g2l[sname] = g2l
            self.lsize[sname] = int(ids.size)

        self.local: dict[str, np.ndarray] = {}
        for dat in mesh.dats.values():
            if dat.set.name not in self.g2l:
                continue
            ids = layout.sets[dat.set.name][rank].local_ids
            logical = dat.fetch()[ids]
            self.local[dat.name] = (logical.ravel().copy() if dat.layout is AOS
                                    else logical.T.ravel().copy())

        # Executed elements per iteration set, ascending global id.
        self.exec_ids: dict[str, np.ndarray] = {}
        self.owned_flag: dict[str, np.ndarray] = {}
        for loop in _unique_loops(program):
            sname = loop.iter_set.name
            if sname in self.exec_ids:
                continue
            h = layout.sets[sname][rank]
            ids = np.sort(np.concatenate([h.owned, h.exec_halo]))
            self.exec_ids[sname] = ids
            owner = layout.assignments[sname].rank_of
            self.owned_flag[sname] = (owner[ids] == rank).astype(np.int8)

        self.imp_loc: dict[str, dict[int, np.ndarray]] = {}
        self.exp_loc: dict[str, dict[int, np.ndarray]] = {}
        for sname, per_rank in layout.sets.items():
            h = per_rank[rank]
            g2l = self.g2l[sname]
            self.imp_loc[sname] = {src: g2l[ids] for src, ids in h.imports.items()}
            self.exp_loc[sname] = {dst: g2l[ids] for dst, ids in h.exports.items()}

        self._dat_acc_cache: dict = {}
        self.plan_cache: dict = {}
        self.partials: dict[tuple[int, int], np.ndarray] = {}
        self.loop_comp = np.zeros(len(program))
        self.loop_comm = np.zeros(len(program))
        self.loop_bytes: dict[str, int] = {}
        self.messages = 0
        self.error: Exception | None = None

    # -- bindings --

    def _dat_accessors(self, loop: Loop) -> list:
        key = loop.signature()
        cached = self._dat_acc_cache.get(key)
        if cached is not None:
            return cached
        ids = self.exec_ids[loop.iter_set.name]
        out = []
        for a in loop.args:
            if a.kind == "global":
                out.append(None)
                continue
            d = a.dat
            flat = self.local[d.name]
            size = self.lsize[d.set.name]
            if a.kind == "direct":
                tgt = self.g2l[d.set.name][ids]
            else:
                tgt = self.g2l[d.set.name][a.map.table[ids, a.slot]]
            out.append(_view_accessor(flat, size, d.dim, d.layout, tgt))
        self._dat_acc_cache[key] = out
        return out

    def local_useful_bytes(self, loop: Loop) -> int:
        """Useful bytes counting executed (owned + exec halo) elements."""
        key = loop.name
        if key in self.loop_bytes:
            return self.loop_bytes[key]
        ids = self.exec_ids[loop.iter_set.name]
        total = 0
        groups: dict[tuple, list] = {}
        for a in loop.args:
            f = 2 if a.mode in (RW, INC) else 1
            if a.kind == "direct":
                total += ids.size * a.dat.dim * a.dat.itemsize * f
            elif a.kind == "global":
                total += a.glob.dim * a.glob.dtype.itemsize
            else:
                groups.setdefault((a.dat.name, a.mode), []).append(a)
        for (_, mode), args in groups.items():
            cols = [a.map.table[ids, a.slot] for a in args]
            distinct = np.unique(np.concatenate(cols)).size if ids.size else 0
            d = args[0].dat
            total += distinct * d.dim * d.itemsize * (2 if mode in (RW, INC) else 1)
        self.loop_bytes[key] = total
        return total

    # -- exchange --

    def exchange(self, dat: Dat, prog_idx: int, loop_name: str) -> None:
        sname = dat.set.name
        flat = self.local[dat.name]
        size = self.lsize[sname]
        for dst in sorted(self.exp_loc[sname]):
            rows = _gather_rows(flat, size, dat.dim, dat.layout,
                                self.exp_loc[sname][dst])
            self.channels.send(self.rank, dst, (prog_idx, dat.name, self.rank), rows)
            self.messages += 1
        for src in sorted(self.imp_loc[sname]):
            rows = self.channels.recv(src, self.rank, (prog_idx, dat.name, src),
                                      loop_name, dat.name)
            _scatter_rows(flat, size, dat.dim, dat.layout,
                          self.imp_loc[sname][src], rows)

    # -- execution --

    def run_loop(self, prog_idx: int, loop: Loop, pool) -> None:
        ids = self.exec_ids[loop.iter_set.name]
        n = ids.size
        accessors = list(self._dat_accessors(loop))
        flag = self.owned_flag[loop.iter_set.name]
        red = []
        for i in _global_accessors(loop):
            a = loop.args[i]
            if a.mode is READ:
                buf = a.glob.buffer
                accessors[i] = lambda e, buf=buf: buf
            else:
                red.append((i, a))
        cost = self.config.elem_cost(self.config.block_size_for(loop.name))
        cost = cost / self.speed if self.speed > 0 else cost

        if not self.hybrid or pool is None:
            # Contributions from redundantly executed foreign elements are
            # discarded: they index the scratch buffer, owned the partial.
            for i, a in red:
                part = _reduce_identity(a.mode, a.glob.dtype, a.glob.dim)
                self.partials[(prog_idx, i)] = part
                bufs = (part.copy(), part)
                accessors[i] = lambda e, bufs=bufs, flag=flag: bufs[flag[e]]
            if cost:
                time.sleep(cost * n)
            _run_elements(loop.kernel, accessors, range(n), loop.name)
            return

        # Hybrid: colored execution over the rank-local iteration slice,
        # with per-block reduction partials combined in block order.
        key = (loop.signature(), self.config.block_size_for(loop.name))
        plan = self.plan_cache.get(key)
        if plan is None:
            cols = []
            for a in loop.indirect_write_args():
                cols.append((a.dat.name, self.g2l[a.dat.set.name][a.map.table[ids, a.slot]]))
            plan = build_plan(n, cols, key[1])
            self.plan_cache[key] = plan
        block_parts: dict[int, list] = {i: [None] * plan.nblocks for i, _ in red}

        def exec_block(b: int) -> None:
            acc = accessors
            if red:
                acc = list(accessors)
                for i, a in red:
                    part = _reduce_identity(a.mode, a.glob.dtype, a.glob.dim)
                    block_parts[i][b] = part
                    bufs = (part.copy(), part)
                    acc[i] = lambda e, bufs=bufs, flag=flag: bufs[flag[e]]
            order = plan.block_elem_order[b]
            if cost:
                time.sleep(cost * len(order))
            _run_elements(loop.kernel, acc, order, loop.name)

        for color in range(plan.ncolors):
            blocks = plan.blocks_by_color[color]
            nchunk = min(self.width, len(blocks))
            if nchunk <= 1:
                for b in blocks:
                    exec_block(int(b))
            else:
                def run_chunk(chunk):
                    for b in chunk:
                        exec_block(int(b))
                futures = [pool.submit(run_chunk, chunk)
                           for chunk in np.array_split(blocks, nchunk)]
                for f in futures:
                    f.result()
        for i, a in red:
            parts = [p for p in block_parts[i] if p is not None]
            ident = _reduce_identity(a.mode, a.glob.dtype, a.glob.dim)
            self.partials[(prog_idx, i)] = np.atleast_1d(
                reduce_global(parts, a.mode, initial=ident))


def _rank_main(ctx: _RankCtx, program: Sequence[Loop], dats_by_loop) -> None:
    pool = None
    try:
        if ctx.hybrid and ctx.width > 1:
            pool = ThreadPoolExecutor(max_workers=ctx.width)
        dirty: dict[str, bool] = {}
        for i, loop in enumerate(program):
            reads, writes = dats_by_loop[i]
            t0 = time.perf_counter()
            for dat in reads:
                if dirty.get(dat.name):
                    ctx.exchange(dat, i, loop.name)
                    dirty[dat.name] = False
            t1 = time.perf_counter()
            ctx.loop_comm[i] += t1 - t0
            ctx.run_loop(i, loop, pool)
            ctx.loop_comp[i] += time.perf_counter() - t1
            for dat in writes:
                dirty[dat.name] = True
    except Exception as err:  # surfaced by the coordinator after join
        ctx.error = err
    finally:
        if pool is not None:
            pool.shutdown(wait=False)


def _loop_dat_roles(program: Sequence[Loop], layout: RankLayout):
    """Per program entry: dats needing fresh halos before, dats written after.

    A direct read needs an exchange only when some rank executes the loop
    redundantly (nonempty exec halo); the decision comes from the shared
    layout so every rank derives the same schedule.
    """
    roles = []
    for loop in program:
        iter_redundant = any(
            layout.sets[loop.iter_set.name][r].exec_halo.size
            for r in range(layout.nranks))
        reads, writes, seen_r, seen_w = [], [], set(), set()
        for a in loop.args:
            if a.dat is None:
                continue
            fresh = a.mode in (READ, RW) and (a.kind == "indirect" or iter_redundant)
            if fresh and a.dat.name not in seen_r:
                seen_r.add(a.dat.name)
                reads.append(a.dat)
            if a.mode in WRITE_MODES and a.dat.name not in seen_w:
                seen_w.add(a.dat.name)
                writes.append(a.dat)
        roles.append((reads, writes))
    return roles


def _run_rank_program(program: Sequence[Loop], mesh: Mesh,
                      layout: RankLayout, config: BackendConfig,
                      collector: PerfCollector | None,
                      hybrid: bool) -> RunResult:
    mesh.freeze()
    t_start = time.perf_counter()
    nranks = layout.nranks
    channels = _Channels(nranks, config.timeout_ms)
    ctxs = [_RankCtx(r, mesh, layout, program, config, channels, hybrid)
            for r in range(nranks)]
    roles = _loop_dat_roles(program, layout)
    threads = [threading.Thread(target=_rank_main, args=(c, program, roles),
                                daemon=True, name=f"rank-{c.rank}")
               for c in ctxs]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    for c in ctxs:
        if c.error is not None:
            raise ExecError(f"rank {c.rank} failed: {c.error}") from c.error

    # Deterministic rank-ordered combination of global reductions.
    for i, loop in enumerate(program):
        for j in _global_accessors(loop):
            a = loop.args[j]
            if a.mode is READ:
                continue
            parts = [c.partials[(i, j)] for c in ctxs]
            a.glob.buffer[:] = np.atleast_1d(
                reduce_global(parts, a.mode, initial=a.glob.buffer.copy()))

    # Gather owned rows back into the framework-owned global dats.
    for dat in mesh.dats.values():
        if dat.set.name not in layout.sets:
            continue
        logical = dat.fetch()
        for c in ctxs:
            h = layout.sets[dat.set.name][c.rank]
            if h.owned.size == 0:
                continue
            rows = _gather_rows(c.local[dat.name], c.lsize[dat.set.name],
                                dat.dim, dat.layout,
                                np.arange(h.owned.size))
            logical[h.owned] = rows
        dat.put(logical)

    if collector is not None:
        for i, loop in enumerate(program):
            comm = float(np.mean([c.loop_comm[i] for c in ctxs]))
            comp = float(np.mean([c.loop_comp[i] for c in ctxs]))
            bytes_ = sum(c.local_useful_bytes(loop) for c in ctxs)
            collector.add(loop.name, comm + comp, bytes_, comm=comm, comp=comp)
    total = time.perf_counter() - t_start
    return RunResult(perf=collector.finalize() if collector else [],
                     total_sec=total,
                     messages=sum(c.messages for c in ctxs),
                     layout=layout, assignments=layout.assignments)


def run_ranks(program: Sequence[Loop], mesh: Mesh, layout: RankLayout,
              config: BackendConfig | None = None,
              collector: PerfCollector | None = None) -> RunResult:
    """Owner-compute execution of a whole program over in-process ranks."""
    config = config or BackendConfig(backend="ranks")
    return _run_rank_program(program, mesh, layout, config, collector, hybrid=False)


def run_hybrid(program: Sequence[Loop], mesh: Mesh,
               config: BackendConfig | None = None,
               collector: PerfCollector | None = None) -> RunResult:
    """Two-class execution: weighted partition sizes, per-class worker pools."""
    config = config or BackendConfig(backend="hybrid", nranks=2)
    layout = build_layout(mesh, program, config, weights=_hybrid_weights(config))
    return _run_rank_program(program, mesh, layout, config, collector, hybrid=True)


def run_program(program: Sequence[Loop], mesh: Mesh,
                config: BackendConfig | None = None) -> RunResult:
    """Execute a loop program on the configured backend and collect timings."""
    config = config or BackendConfig()
    collector = PerfCollector()
    if config.backend == "serial":
        t0 = time.perf_counter()
        for loop in program:
            run_serial(loop, mesh, config, collector)
        return RunResult(collector.finalize(), time.perf_counter() - t0)
    if config.backend == "threads":
        mesh.freeze()
        t0 = time.perf_counter()
        with ThreadPoolExecutor(max_workers=config.nthreads) as pool:
            for loop in program:
                _threads_loop(loop, mesh, config, pool, collector)
        return RunResult(collector.finalize(), time.perf_counter() - t0)
    if config.backend == "ranks":
        layout = build_layout(mesh, program, config)
        return run_ranks(program, mesh, layout, config, collector)
    layout_weights = _hybrid_weights(config)
    layout = build_layout(mesh, program, config, weights=layout_weights)
    return _run_rank_program(program, mesh, layout, config, collector, hybrid=True)
