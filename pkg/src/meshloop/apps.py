"""Bundled benchmark programs and mesh generators.

``gen_mesh`` triangulates the unit square into a nodes/edges/cells mesh
with a boundary-edge set; ``sample_mesh`` is a small hand-made
triangulated disk (14 nodes, 17 cells) used by tests and docs.

Two apps exercise every framework feature with checkable results:

* cell-area: compute each cell's area from node coordinates, scatter a
  third of it to the cell's nodes, and sum the node areas into a global
  total. Conservation: the node total equals the cell total.
* diffusion: explicit graph-Laplacian relaxation with Dirichlet boundary
  values, one residual reduction per step. Its loop roster covers the
  direct, indirect-increment, boundary-write, and reduction shapes. The
  steady state with ``u = x`` on the boundary is the plane ``u = x``,
  which interior nodes reach to machine precision.

Both apps have int64 twins (scaled integer arithmetic) so cross-backend
equivalence tests can assert bit-exact results, immune to float
reassociation.
"""
from __future__ import annotations

import numpy as np

from .core import (INC, READ, RW, WRITE, ExecError, Global, Loop, Mesh,
                   arg_direct, arg_global, arg_indirect)

__all__ = [
    "gen_mesh", "sample_mesh", "build_cell_area", "build_diffusion",
    "UnstableTimestep", "stability_bound", "check_residual_history",
]


class UnstableTimestep(ExecError):
    """Explicit diffusion step exceeds the stable timestep bound."""


def _require(mesh: Mesh, sets=(), maps=(), dats=()):
    missing = [f"set {n!r}" for n in sets if n not in mesh.sets]
    missing += [f"map {n!r}" for n in maps if n not in mesh.maps]
    missing += [f"dat {n!r}" for n in dats if n not in mesh.dats]
    if missing:
        raise ExecError("mesh lacks required " + ", ".join(missing))


# -- mesh generators ------------------------------------------------------

def gen_mesh(n: int, auto_soa_threshold: int | None = 4) -> Mesh:
    """Triangulated unit square: (n+1)^2 nodes, 2n^2 cells, 3n^2+2n edges.

    Each grid square splits along its (ix, iy)->(ix+1, iy+1) diagonal.
    Numbering is deterministic: nodes row-major, edges grouped as
    horizontals, verticals, then diagonals, boundary edges
    bottom/top/left/right.
    """
    if n < 1:
        raise ValueError(f"refinement must be >= 1, got {n}")
    mesh = Mesh(auto_soa_threshold=auto_soa_threshold)
    nn = (n + 1) ** 2
    nodes = mesh.decl_set("nodes", nn)
    edges = mesh.decl_set("edges", 3 * n * n + 2 * n)
    cells = mesh.decl_set("cells", 2 * n * n)
    bedges = mesh.decl_set("bedges", 4 * n)

    def nid(ix, iy):  # 1-based node id
        return iy * (n + 1) + ix + 1

    cell_rows = []
    for iy in range(n):
        for ix in range(n):
            a, b = nid(ix, iy), nid(ix + 1, iy)
            c, d = nid(ix + 1, iy + 1), nid(ix, iy + 1)
            cell_rows.append((a, b, c))
            cell_rows.append((a, c, d))
    edge_rows = []
    for iy in range(n + 1):
        for ix in range(n):
            edge_rows.append((nid(ix, iy), nid(ix + 1, iy)))
    for iy in range(n):
        for ix in range(n + 1):
            edge_rows.append((nid(ix, iy), nid(ix, iy + 1)))
    for iy in range(n):
        for ix in range(n):
            edge_rows.append((nid(ix, iy), nid(ix + 1, iy + 1)))
    bedge_rows = []
    for ix in range(n):
        bedge_rows.append((nid(ix, 0), nid(ix + 1, 0)))
    for ix in range(n):
        bedge_rows.append((nid(ix, n), nid(ix + 1, n)))
    for iy in range(n):
        bedge_rows.append((nid(0, iy), nid(0, iy + 1)))
    for iy in range(n):
        bedge_rows.append((nid(n, iy), nid(n, iy + 1)))

    mesh.decl_map("cell_nodes", cells, nodes, 3, np.array(cell_rows).ravel())
    mesh.decl_map("edge_nodes", edges, nodes, 2, np.array(edge_rows).ravel())
    mesh.decl_map("bedge_nodes", bedges, nodes, 2, np.array(bedge_rows).ravel())

    coords = np.empty((nn, 2))
    for iy in range(n + 1):
        for ix in range(n + 1):
            coords[iy * (n + 1) + ix] = (ix / n, iy / n)
    mesh.decl_dat("coords", nodes, 2, "float64", coords.ravel())
    return mesh


_SAMPLE_CELLS = (
    (1, 3, 10), (1, 2, 3), (3, 9, 10), (2, 3, 4), (3, 4, 9),
    (9, 14, 10), (14, 13, 10), (13, 12, 10), (12, 1, 10), (12, 11, 1),
    (11, 8, 1), (8, 2, 1), (8, 7, 2), (7, 4, 2), (7, 6, 4),
    (6, 5, 4), (5, 9, 4),
)

_SAMPLE_COORDS = (
    (-0.6, 0.8), (0.6, 0.8), (0.0, 0.0), (1.0, -0.3), (0.9, -1.6),
    (1.8, -1.2), (2.2, 0.2), (1.2, 1.6), (0.0, -1.1), (-1.0, -0.3),
    (0.0, 2.1), (-1.2, 1.6), (-2.2, 0.2), (-1.8, -1.2),
)


def sample_mesh(auto_soa_threshold: int | None = 4) -> Mesh:
    """Hand-made triangulated disk: 14 nodes, 17 cells, every node used."""
    mesh = Mesh(auto_soa_threshold=auto_soa_threshold)
    nodes = mesh.decl_set("nodes", 14)
    cells = mesh.decl_set("cells", 17)
    mesh.decl_map("cell_nodes", cells, nodes, 3,
                  np.array(_SAMPLE_CELLS).ravel())
    mesh.decl_dat("coords", nodes, 2, "float64",
                  np.array(_SAMPLE_COORDS).ravel())
    return mesh


# -- cell-area app --------------------------------------------------------

def _k_tri_area(c1, c2, c3, out):
    out[0] = 0.5 * abs((c2[0] - c1[0]) * (c3[1] - c1[1])
                       - (c3[0] - c1[0]) * (c2[1] - c1[1]))


def _k_distribute(ac, a1, a2, a3):
    third = ac[0] / 3.0
    a1[0] += third
    a2[0] += third
    a3[0] += third


def _k_distribute_int(ac, a1, a2, a3):
    third = ac[0] // 3
    a1[0] += third
    a2[0] += third
    a3[0] += third


def _k_sum(v, total):
    total[0] += v[0]


def build_cell_area(mesh: Mesh, dtype: str = "float64"):
    """Loop program computing per-node area shares plus their global total.

    Returns ``(program, handles)`` where handles expose the ``areac`` and
    ``arean`` dats and the ``total`` global. The int64 twin skips the
    geometric area computation and seeds cell areas with multiples of
    three, so the scatter stays exact.
    """
    _require(mesh, sets=("cells", "nodes"), maps=("cell_nodes",),
             dats=("coords",) if dtype == "float64" else ())
    cells, nodes = mesh.sets["cells"], mesh.sets["nodes"]
    cn = mesh.maps["cell_nodes"]
    program = []
    if dtype == "float64":
        areac = mesh.decl_dat("areac", cells, 1, dtype, np.zeros(cells.size))
        arean = mesh.decl_dat("arean", nodes, 1, dtype, np.zeros(nodes.size))
        total = Global(np.zeros(1), name="area_total")
        coords = mesh.dats["coords"]
        program.append(Loop("area_calc", cells, [
            arg_indirect(coords, cn, 1, READ),
            arg_indirect(coords, cn, 2, READ),
            arg_indirect(coords, cn, 3, READ),
            arg_direct(areac, WRITE),
        ], _k_tri_area))
        distribute = _k_distribute
    else:
        seed = 3 * np.arange(1, cells.size + 1, dtype=np.int64)
        areac = mesh.decl_dat("areac", cells, 1, dtype, seed)
        arean = mesh.decl_dat("arean", nodes, 1, dtype,
                              np.zeros(nodes.size, dtype=np.int64))
        total = Global(np.zeros(1, dtype=np.int64), name="area_total")
        distribute = _k_distribute_int
    program.append(Loop("area_distribute", cells, [
        arg_direct(areac, READ),
        arg_indirect(arean, cn, 1, INC),
        arg_indirect(arean, cn, 2, INC),
        arg_indirect(arean, cn, 3, INC),
    ], distribute))
    program.append(Loop("area_total", nodes, [
        arg_direct(arean, READ),
        arg_global(total, INC),
    ], _k_sum))
    return program, {"areac": areac, "arean": arean, "total": total}


# -- diffusion app --------------------------------------------------------

def stability_bound(mesh: Mesh) -> float:
    """Largest stable explicit timestep: 1 / max node degree (unit weights)."""
    en = mesh.maps["edge_nodes"]
    deg = np.bincount(en.table.ravel(), minlength=mesh.sets["nodes"].size)
    return 1.0 / max(int(deg.max()), 1)


def _k_copy(src, dst):
    dst[0] = src[0]


def _k_edge_flux(u1, u2, f1, f2):
    d = u2[0] - u1[0]
    f1[0] += d
    f2[0] -= d


def _k_boundary_fix(u1, u2, g1, g2):
    u1[0] = g1[0]
    u2[0] = g2[0]


def build_diffusion(mesh: Mesh, steps: int, dt: float | None = None,
                    dtype: str = "float64"):
    """Loop program for ``steps`` explicit diffusion steps.

    Per step: save the state, accumulate edge fluxes, update nodes while
    reducing the squared-flux residual, and re-impose ``u = x`` on the
    boundary. The int64 twin replaces the timestep with an exact integer
    shift and reduces the absolute flux sum instead.
    """
    _require(mesh, sets=("nodes", "edges", "bedges"),
             maps=("edge_nodes", "bedge_nodes"),
             dats=("coords",) if dtype == "float64" else ())
    nodes, edges, bedges = (mesh.sets[k] for k in ("nodes", "edges", "bedges"))
    en, bn = mesh.maps["edge_nodes"], mesh.maps["bedge_nodes"]
    bound = stability_bound(mesh)
    if dtype == "float64":
        if dt is None:
            dt = 0.9 * bound
        if dt > bound * (1 + 1e-12):
            raise UnstableTimestep(
                f"dt={dt} exceeds the stable bound 1/max_degree = {bound}")
        x = mesh.dats["coords"].fetch()[:, 0]
        u = mesh.decl_dat("u", nodes, 1, dtype, np.zeros(nodes.size))
        u0 = mesh.decl_dat("u_prev", nodes, 1, dtype, np.zeros(nodes.size))
        flux = mesh.decl_dat("flux", nodes, 1, dtype, np.zeros(nodes.size))
        g = mesh.decl_dat("bc_values", nodes, 1, dtype, x)

        def _k_update(u_, up, f, res, dt=dt):
            nu = up[0] + dt * f[0]
            res[0] += f[0] * f[0]
            u_[0] = nu
            f[0] = 0.0
        res_dtype = np.float64
    else:
        scale = int(round(1.0 / bound)) + 1
        ids = np.arange(nodes.size, dtype=np.int64)
        u = mesh.decl_dat("u", nodes, 1, dtype, (ids * 7) % 23)
        u0 = mesh.decl_dat("u_prev", nodes, 1, dtype, np.zeros(nodes.size, np.int64))
        flux = mesh.decl_dat("flux", nodes, 1, dtype, np.zeros(nodes.size, np.int64))
        g = mesh.decl_dat("bc_values", nodes, 1, dtype, (ids * 13) % 31)

        def _k_update(u_, up, f, res, scale=scale):
            nu = up[0] + f[0] // scale
            res[0] += abs(f[0])
            u_[0] = nu
            f[0] = 0
        res_dtype = np.int64

    residuals = [Global(np.zeros(1, dtype=res_dtype), name=f"residual_{k}")
                 for k in range(steps)]
    program = []
    for k in range(steps):
        program.append(Loop("state_save", nodes, [
            arg_direct(u, READ),
            arg_direct(u0, WRITE),
        ], _k_copy))
        program.append(Loop("edge_flux", edges, [
            arg_indirect(u, en, 1, READ),
            arg_indirect(u, en, 2, READ),
            arg_indirect(flux, en, 1, INC),
            arg_indirect(flux, en, 2, INC),
        ], _k_edge_flux))
        program.append(Loop("node_update", nodes, [
            arg_direct(u, WRITE),
            arg_direct(u0, READ),
            arg_direct(flux, RW),
            arg_global(residuals[k], INC),
        ], _k_update))
        program.append(Loop("boundary_fix", bedges, [
            arg_indirect(u, bn, 1, WRITE),
            arg_indirect(u, bn, 2, WRITE),
            arg_indirect(g, bn, 1, READ),
            arg_indirect(g, bn, 2, READ),
        ], _k_boundary_fix))
    handles = {"u": u, "flux": flux, "bc_values": g, "residuals": residuals,
               "dt": dt, "dt_bound": bound}
    return program, handles


def check_residual_history(residuals) -> np.ndarray:
    """Post-run guard: sustained residual growth flags an unstable timestep."""
    hist = np.array([r.value for r in residuals], dtype=np.float64)
    if hist.size >= 4:
        ref = max(hist[:3].max(), np.finfo(np.float64).tiny)
        if hist[-1] > 10.0 * ref and np.all(np.diff(hist[-3:]) > 0):
            raise UnstableTimestep(
                f"residual history grows (last={hist[-1]:.3e}); "
                f"timestep exceeds the stable bound")
    return hist
