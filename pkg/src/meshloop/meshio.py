"""Text mesh format: the fixture format used by the CLI and the test suite.

::

    sets <n>
    <name> <size>                 # one line per set
    maps <n>
    <name> <from> <to> <arity>    # then from.size lines of arity 1-based ints
    ...
    dats <n>
    <name> <set> <dim> <kind>     # then set.size lines of dim values

Tokens are whitespace-separated; ``#`` starts a comment that runs to the
end of the line.
"""
from __future__ import annotations

import numpy as np

from .core import Mesh, MeshError

__all__ = ["FormatError", "parse_mesh", "load_mesh", "format_mesh", "dump_mesh"]


class FormatError(MeshError):
    """Malformed mesh text."""


class _Tokens:
    def __init__(self, text: str):
        self.toks = []
        for line in text.splitlines():
            body = line.split("#", 1)[0]
            self.toks.extend(body.split())
        self.pos = 0

    def next(self, what: str) -> str:
        if self.pos >= len(self.toks):
            raise FormatError(f"unexpected end of input while reading {what}")
        tok = self.toks[self.pos]
        self.pos += 1
        return tok

    def next_int(self, what: str) -> int:
        tok = self.next(what)
        try:
            return int(tok)
        except ValueError:
            raise FormatError(f"expected integer for {what}, got {tok!r}") from None

    def next_value(self, what: str) -> str:
        return self.next(what)

    def expect(self, keyword: str):
        tok = self.next(f"{keyword!r} header")
        if tok != keyword:
            raise FormatError(f"expected {keyword!r}, got {tok!r}")

    def done(self) -> bool:
        return self.pos >= len(self.toks)


def parse_mesh(text: str, auto_soa_threshold: int | None = 4) -> Mesh:
    """Build a mesh from its text form."""
    tk = _Tokens(text)
    mesh = Mesh(auto_soa_threshold=auto_soa_threshold)
    try:
        tk.expect("sets")
        for _ in range(tk.next_int("set count")):
            name = tk.next("set name")
            mesh.decl_set(name, tk.next_int(f"size of set {name!r}"))
        tk.expect("maps")
        for _ in range(tk.next_int("map count")):
            name = tk.next("map name")
            from_name = tk.next("map source set")
            to_name = tk.next("map target set")
            arity = tk.next_int(f"arity of map {name!r}")
            for key in (from_name, to_name):
                if key not in mesh.sets:
                    raise FormatError(f"map {name!r} references unknown set {key!r}")
            from_set, to_set = mesh.sets[from_name], mesh.sets[to_name]
            flat = [tk.next_int(f"map {name!r} entry")
                    for _ in range(from_set.size * arity)]
            mesh.decl_map(name, from_set, to_set, arity, flat)
        tk.expect("dats")
        for _ in range(tk.next_int("dat count")):
            name = tk.next("dat name")
            set_name = tk.next("dat set")
            if set_name not in mesh.sets:
                raise FormatError(f"dat {name!r} references unknown set {set_name!r}")
            set_ = mesh.sets[set_name]
            dim = tk.next_int(f"dim of dat {name!r}")
            kind = tk.next(f"kind of dat {name!r}")
            if kind not in ("float64", "int64"):
                raise FormatError(f"dat {name!r}: unknown kind {kind!r}")
            conv = int if kind == "int64" else float
            try:
                vals = [conv(tk.next_value(f"dat {name!r} value"))
                        for _ in range(set_.size * dim)]
            except ValueError as err:
                raise FormatError(f"dat {name!r}: bad value ({err})") from None
            mesh.decl_dat(name, set_, dim, kind, vals)
    except MeshError as err:
        if isinstance(err, FormatError):
            raise
        raise FormatError(str(err)) from err
    if not tk.done():
        raise FormatError(f"trailing input starting at token {tk.toks[tk.pos]!r}")
    return mesh


def load_mesh(path, auto_soa_threshold: int | None = 4) -> Mesh:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_mesh(fh.read(), auto_soa_threshold=auto_soa_threshold)


def _fmt_value(v, dtype) -> str:
    if dtype.kind == "i":
        return str(int(v))
    return repr(float(v))


def format_mesh(mesh: Mesh) -> str:
    """Serialize a mesh; parsing the result reproduces identical declarations."""
    out = []
    out.append(f"sets {len(mesh.sets)}")
    for s in mesh.sets.values():
        out.append(f"{s.name} {s.size}")
    out.append(f"maps {len(mesh.maps)}")
    for m in mesh.maps.values():
        out.append(f"{m.name} {m.from_set.name} {m.to_set.name} {m.arity}")
        for row in m.table + 1:
            out.append(" ".join(str(int(v)) for v in row))
    out.append(f"dats {len(mesh.dats)}")
    for d in mesh.dats.values():
        out.append(f"{d.name} {d.set.name} {d.dim} {d.dtype.name}")
        for row in d.fetch():
            out.append(" ".join(_fmt_value(v, d.dtype) for v in row))
    return "\n".join(out) + "\n"


def dump_mesh(mesh: Mesh, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(format_mesh(mesh))
