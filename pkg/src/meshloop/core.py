"""Data model for unstructured-mesh computations.

A :class:`Mesh` owns sets (collections of homogeneous elements), maps
(fixed-arity connectivity tables between sets), dats (per-element data
arrays) and a table of named scalar constants. Computations are expressed
as :class:`Loop` descriptors: an iteration set, a user kernel, and one
access descriptor per kernel argument. The access descriptors are what
allow the executors to schedule iterations race-free.

Declarations happen single-threaded during a construction phase. The mesh
freezes at first execution; afterwards topology and constants are
immutable and only executors mutate dat payloads.
"""
from __future__ import annotations

import enum
from typing import Callable, Iterable, Sequence

import numpy as np

__all__ = [
    "MeshError", "DeclError", "FrozenError", "LoopError", "ExecError",
    "AccessMode", "READ", "WRITE", "RW", "INC", "MIN", "MAX",
    "Layout", "AOS", "SOA",
    "Set", "Map", "Dat", "Global", "LoopArg", "Loop", "Mesh",
    "arg_direct", "arg_indirect", "arg_global", "transform_layout",
]


class MeshError(Exception):
    """Base class for all mesh-framework errors."""


class DeclError(MeshError):
    """Invalid declaration: bad sizes, dangling references, duplicates."""


class FrozenError(MeshError):
    """Mutation attempted after the mesh was frozen by execution."""


class LoopError(MeshError):
    """Loop descriptor violates argument compatibility rules."""


class ExecError(MeshError):
    """Failure raised while executing a loop."""


class AccessMode(enum.Enum):
    READ = "read"
    WRITE = "write"
    RW = "rw"
    INC = "inc"
    MIN = "min"
    MAX = "max"


READ = AccessMode.READ
WRITE = AccessMode.WRITE
RW = AccessMode.RW
INC = AccessMode.INC
MIN = AccessMode.MIN
MAX = AccessMode.MAX

#: Modes that write to a dat. READ never conflicts.
WRITE_MODES = frozenset((WRITE, RW, INC))
#: Modes allowed on dat arguments.
DAT_MODES = frozenset((READ, WRITE, RW, INC))
#: Modes allowed on global arguments (INC/MIN/MAX are reductions).
GLOBAL_MODES = frozenset((READ, INC, MIN, MAX))


class Layout(enum.Enum):
    """Physical ordering of a dat payload: element-major or component-major."""
    AOS = "aos"
    SOA = "soa"


AOS = Layout.AOS
SOA = Layout.SOA

_KINDS = {"float64": np.dtype(np.float64), "int64": np.dtype(np.int64)}


def _as_dtype(kind) -> np.dtype:
    if isinstance(kind, str):
        if kind not in _KINDS:
            raise DeclError(f"unsupported element kind {kind!r}; expected one of {sorted(_KINDS)}")
        return _KINDS[kind]
    dt = np.dtype(kind)
    if dt not in _KINDS.values():
        raise DeclError(f"unsupported element kind {dt}; expected float64 or int64")
    return dt


class Set:
    """A collection of homogeneous mesh elements (nodes, edges, cells...)."""

    __slots__ = ("name", "size")

    def __init__(self, name: str, size: int):
        self.name = name
        self.size = int(size)

    def __repr__(self):
        return f"Set({self.name!r}, {self.size})"


class Map:
    """Fixed-arity connectivity from one set to another.

    The table is stored 0-based internally as an ``(from.size, arity)``
    integer array; declarations take 1-based entries.
    """

    __slots__ = ("name", "from_set", "to_set", "arity", "table")

    def __init__(self, name: str, from_set: Set, to_set: Set, arity: int,
                 table: np.ndarray):
        self.name = name
        self.from_set = from_set
        self.to_set = to_set
        self.arity = int(arity)
        self.table = table  # 0-based, shape (from_set.size, arity)

    def __repr__(self):
        return f"Map({self.name!r}, {self.from_set.name}->{self.to_set.name}, arity={self.arity})"


class Dat:
    """Data array holding ``dim`` values per element of one set.

    The framework owns the payload; callers seed values with :meth:`put`
    and read results back with :meth:`fetch`. Both speak logical
    element-major order regardless of the physical layout.
    """

    __slots__ = ("name", "set", "dim", "dtype", "layout", "data")

    def __init__(self, name: str, set_: Set, dim: int, dtype: np.dtype,
                 layout: Layout, data: np.ndarray):
        self.name = name
        self.set = set_
        self.dim = int(dim)
        self.dtype = dtype
        self.layout = layout
        self.data = data  # flat, length set.size * dim

    def fetch(self) -> np.ndarray:
        """Logical values as a fresh ``(size, dim)`` array."""
        if self.layout is AOS:
            return self.data.reshape(self.set.size, self.dim).copy()
        return self.data.reshape(self.dim, self.set.size).T.copy()

    def put(self, values) -> None:
        """Overwrite logical values from an element-major array."""
        vals = np.asarray(values, dtype=self.dtype).reshape(self.set.size, self.dim)
        if self.layout is AOS:
            self.data[:] = vals.ravel()
        else:
            self.data[:] = vals.T.ravel()

    def get(self, e: int, c: int = 0):
        """Logical accessor: value of component ``c`` at element ``e``."""
        if self.layout is AOS:
            return self.data[e * self.dim + c]
        return self.data[c * self.set.size + e]

    @property
    def itemsize(self) -> int:
        return self.dtype.itemsize

    def __repr__(self):
        return (f"Dat({self.name!r}, set={self.set.name}, dim={self.dim}, "
                f"{self.dtype.name}, {self.layout.value})")


def transform_layout(dat: Dat, target: Layout) -> Dat:
    """Permute a dat payload between element-major and component-major order.

    Logical values are unchanged; the round trip restores the payload
    exactly. A same-layout request is the identity.
    """
    if dat.layout is target:
        return dat
    if target is SOA:
        dat.data = dat.data.reshape(dat.set.size, dat.dim).T.ravel().copy()
    else:
        dat.data = dat.data.reshape(dat.dim, dat.set.size).T.ravel().copy()
    dat.layout = target
    return dat


class Global:
    """A small global value used as a loop argument (reduction or broadcast)."""

    __slots__ = ("name", "buffer")

    def __init__(self, values, name: str = "global", dtype=None):
        arr = np.asarray(values, dtype=dtype)
        if arr.ndim == 0:
            arr = arr.reshape(1)
        self.name = name
        self.buffer = arr.astype(_as_dtype(arr.dtype), copy=True)

    @property
    def dim(self) -> int:
        return self.buffer.size

    @property
    def dtype(self) -> np.dtype:
        return self.buffer.dtype

    @property
    def value(self):
        return self.buffer[0] if self.buffer.size == 1 else self.buffer.copy()

    def __repr__(self):
        return f"Global({self.name!r}, {self.buffer!r})"


class LoopArg:
    """One kernel argument: a dat accessed directly or through a map, or a global."""

    __slots__ = ("kind", "dat", "map", "slot", "glob", "mode")

    def __init__(self, kind: str, mode: AccessMode, dat: Dat | None = None,
                 map_: Map | None = None, slot: int = 0, glob: Global | None = None):
        self.kind = kind          # "direct" | "indirect" | "global"
        self.mode = mode
        self.dat = dat
        self.map = map_
        self.slot = slot          # 0-based map column (indirect only)
        self.glob = glob

    @property
    def writes(self) -> bool:
        return self.mode in WRITE_MODES


def arg_direct(dat: Dat, mode: AccessMode) -> LoopArg:
    """Access ``dat`` at the iteration element itself."""
    return LoopArg("direct", mode, dat=dat)


def arg_indirect(dat: Dat, map_: Map, index: int, mode: AccessMode) -> LoopArg:
    """Access ``dat`` through ``map_`` at 1-based column ``index``."""
    return LoopArg("indirect", mode, dat=dat, map_=map_, slot=index - 1)


def arg_global(glob: Global, mode: AccessMode) -> LoopArg:
    """A global broadcast (READ) or reduction (INC/MIN/MAX) argument."""
    return LoopArg("global", mode, glob=glob)


class Loop:
    """An iteration set, per-argument access descriptors, and a user kernel.

    The kernel receives one view per argument, in argument order: a length-
    ``dim`` array for dat arguments (logical component order, independent of
    physical layout) and the accumulator buffer for global arguments. It
    must not touch anything outside its declared views.
    """

    def __init__(self, name: str, iter_set: Set, args: Sequence[LoopArg],
                 kernel: Callable):
        self.name = name
        self.iter_set = iter_set
        self.args = tuple(args)
        self.kernel = kernel
        self._validate()

    def _validate(self):
        for i, a in enumerate(self.args):
            where = f"loop {self.name!r} arg {i}"
            if a.kind == "direct":
                if a.mode not in DAT_MODES:
                    raise LoopError(f"{where}: mode {a.mode.name} not valid on a dat")
                if a.dat.set is not self.iter_set:
                    raise LoopError(
                        f"{where}: direct dat {a.dat.name!r} lives on set "
                        f"{a.dat.set.name!r}, not iteration set {self.iter_set.name!r}")
            elif a.kind == "indirect":
                if a.mode not in DAT_MODES:
                    raise LoopError(f"{where}: mode {a.mode.name} not valid on a dat")
                if a.map.from_set is not self.iter_set:
                    raise LoopError(
                        f"{where}: map {a.map.name!r} is from set "
                        f"{a.map.from_set.name!r}, not iteration set {self.iter_set.name!r}")
                if a.map.to_set is not a.dat.set:
                    raise LoopError(
                        f"{where}: map {a.map.name!r} targets set {a.map.to_set.name!r} "
                        f"but dat {a.dat.name!r} lives on {a.dat.set.name!r}")
                if not 0 <= a.slot < a.map.arity:
                    raise LoopError(
                        f"{where}: map index {a.slot + 1} outside 1..{a.map.arity}")
            elif a.kind == "global":
                if a.mode not in GLOBAL_MODES:
                    raise LoopError(f"{where}: mode {a.mode.name} not valid on a global")
            else:
                raise LoopError(f"{where}: unknown argument kind {a.kind!r}")

    def signature(self) -> tuple:
        """Structural identity used for plan caching; ignores buffer identity."""
        parts = []
        for a in self.args:
            if a.kind == "direct":
                parts.append(("d", a.dat.name, a.mode.name))
            elif a.kind == "indirect":
                parts.append(("i", a.dat.name, a.map.name, a.slot, a.mode.name))
            else:
                parts.append(("g", a.glob.dim, a.glob.dtype.name, a.mode.name))
        return (self.name, self.iter_set.name, tuple(parts))

    def indirect_write_args(self) -> list[LoopArg]:
        return [a for a in self.args if a.kind == "indirect" and a.writes]

    def __repr__(self):
        return f"Loop({self.name!r}, over={self.iter_set.name}, nargs={len(self.args)})"


class Mesh:
    """Sets, maps, dats and constants of one problem instance.

    ``auto_soa_threshold``: dats with more components than this are stored
    component-major on declaration; ``None`` disables the policy.
    """

    def __init__(self, auto_soa_threshold: int | None = 4):
        self.sets: dict[str, Set] = {}
        self.maps: dict[str, Map] = {}
        self.dats: dict[str, Dat] = {}
        self.auto_soa_threshold = auto_soa_threshold
        self.version = 0
        self._constants: dict[str, float | int] = {}
        self._frozen = False
        self._plan_cache: dict = {}
        self._plan_builds = 0

    # -- declarations -------------------------------------------------

    def _check_mutable(self, what: str):
        if self._frozen:
            raise FrozenError(f"cannot {what}: mesh is frozen (execution has started)")

    def _check_name(self, kind: str, name: str):
        for table in (self.sets, self.maps, self.dats):
            if name in table:
                raise DeclError(f"duplicate name {name!r} declaring {kind}")

    def decl_set(self, name: str, size: int) -> Set:
        self._check_mutable("declare set")
        self._check_name("set", name)
        if size < 0:
            raise DeclError(f"set {name!r}: negative size {size}")
        s = Set(name, size)
        self.sets[name] = s
        self.version += 1
        return s

    def decl_map(self, name: str, from_set: Set, to_set: Set, arity: int,
                 table: Iterable[int]) -> Map:
        """Declare connectivity; ``table`` is flat, 1-based, row-major."""
        self._check_mutable("declare map")
        self._check_name("map", name)
        if arity < 1:
            raise DeclError(f"map {name!r}: arity must be positive, got {arity}")
        self._require_owned(from_set)
        self._require_owned(to_set)
        t = np.asarray(list(table) if not isinstance(table, np.ndarray) else table,
                       dtype=np.int64).ravel()
        expected = from_set.size * arity
        if t.size != expected:
            raise DeclError(
                f"map {name!r}: table has {t.size} entries, expected "
                f"{from_set.size} x {arity} = {expected}")
        bad = np.nonzero((t < 1) | (t > to_set.size))[0]
        if bad.size:
            p = int(bad[0])
            raise DeclError(
                f"map {name!r}: entry {t[p]} out of range 1..{to_set.size} "
                f"at row {p // arity + 1}, slot {p % arity + 1}")
        m = Map(name, from_set, to_set, arity, (t - 1).reshape(from_set.size, arity))
        self.maps[name] = m
        self.version += 1
        return m

    def decl_dat(self, name: str, set_: Set, dim: int, kind, data) -> Dat:
        self._check_mutable("declare dat")
        self._check_name("dat", name)
        if dim < 1:
            raise DeclError(f"dat {name!r}: dim must be positive, got {dim}")
        self._require_owned(set_)
        dtype = _as_dtype(kind)
        payload = np.asarray(data, dtype=dtype).ravel().copy()
        expected = set_.size * dim
        if payload.size != expected:
            raise DeclError(
                f"dat {name!r}: payload has {payload.size} values, expected "
                f"{set_.size} x {dim} = {expected}")
        d = Dat(name, set_, dim, dtype, AOS, payload)
        if self.auto_soa_threshold is not None and dim > self.auto_soa_threshold:
            transform_layout(d, SOA)
        self.dats[name] = d
        self.version += 1
        return d

    def _require_owned(self, obj):
        table = self.sets if isinstance(obj, Set) else self.maps
        if table.get(obj.name) is not obj:
            raise DeclError(f"{obj!r} is not declared on this mesh")

    # -- constants ----------------------------------------------------

    def set_constant(self, name: str, value) -> None:
        """Store a named scalar; write-once, frozen at first execution."""
        if self._frozen:
            raise FrozenError(f"cannot set constant {name!r}: constants table is frozen")
        if not isinstance(value, (int, float, np.integer, np.floating)):
            raise DeclError(f"constant {name!r}: expected a scalar, got {type(value).__name__}")
        self._constants[name] = value

    def get_constant(self, name: str):
        if name not in self._constants:
            raise DeclError(f"unknown constant {name!r}")
        return self._constants[name]

    # -- lifecycle ----------------------------------------------------

    @property
    def frozen(self) -> bool:
        return self._frozen

    def freeze(self) -> None:
        """End the construction phase; topology and constants become immutable."""
        self._frozen = True

    def snapshot(self) -> dict:
        """Capture dat payloads and layouts (for restore after measured runs)."""
        return {name: (d.data.copy(), d.layout) for name, d in self.dats.items()}

    def restore(self, state: dict) -> None:
        for name, (data, layout) in state.items():
            d = self.dats[name]
            d.data[:] = data
            d.layout = layout

    def __repr__(self):
        return (f"Mesh(sets={list(self.sets)}, maps={list(self.maps)}, "
                f"dats={list(self.dats)})")
