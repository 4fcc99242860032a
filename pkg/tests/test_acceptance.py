"""Acceptance suite: one test per release criterion.

Each test prints a single ``[PASS] criterion N: ...`` line (visible with
``pytest -s`` or on failure) including its elapsed time. Numeric
tolerances are asserted; the quoted time budgets are design targets and
are reported, not asserted, to keep CI free of timing flakes.
"""
from __future__ import annotations

import json
import time

import jsonschema
import numpy as np
import pytest

from meshloop import (BackendConfig, Loop, Mesh, arg_direct,
                      bandwidth_metric, partition_weighted,
                      plan_for, plan_stats, run_program, transform_layout,
                      useful_bytes)
from meshloop.core import AOS, INC, READ, SOA
from meshloop.apps import (build_cell_area, build_diffusion, gen_mesh,
                           sample_mesh)
from meshloop.executor import build_layout
from meshloop.partition import halo_stats, partition_trivial, derive_assignments, build_halos
from meshloop.perf import REPORT_SCHEMA, emit_report
from meshloop.renumber import Permutation, apply_permutation, renumber_mesh
from meshloop.tuner import tune_block_size

from conftest import (SEED, assert_layout_matches_oracle,
                      assert_plan_race_free, random_loop_mesh)


def _report(criterion: str, detail: str, t0: float) -> None:
    print(f"[PASS] criterion {criterion}: {detail} ({time.time() - t0:.1f}s)")


# -- 1: backend equivalence ------------------------------------------------

def _build_case(app: str, n: int, dtype: str, renumber_on: bool):
    mesh = gen_mesh(n)
    if app == "cell-area":
        prog, handles = build_cell_area(mesh, dtype)
    else:
        prog, handles = build_diffusion(mesh, steps=2, dtype=dtype)
    if renumber_on:
        renumber_mesh(mesh)
    return mesh, prog, handles


def _result_vectors(app: str, handles) -> tuple[np.ndarray, np.ndarray]:
    if app == "cell-area":
        return (handles["arean"].fetch().ravel(),
                np.atleast_1d(handles["total"].value))
    return (handles["u"].fetch().ravel(),
            np.array([g.value for g in handles["residuals"]]))


def _equiv_configs():
    yield BackendConfig(backend="serial")
    for nt in (1, 2, 4, 8):
        yield BackendConfig(backend="threads", nthreads=nt, block_size=256)
    for bs in (1, 64, 1024):
        yield BackendConfig(backend="threads", nthreads=4, block_size=bs)
    for nr in (1, 2, 4, 8):
        yield BackendConfig(backend="ranks", nranks=nr, partitioner="trivial")
    for nr in (2, 8):
        yield BackendConfig(backend="ranks", nranks=nr, partitioner="rcb")
    for nr in (2, 4, 8):
        yield BackendConfig(backend="hybrid", nranks=nr, balance=1.5)


def test_criterion_01_backend_equivalence():
    t0 = time.time()
    runs = 0
    for app in ("cell-area", "diffusion"):
        for n in (1, 8, 32):
            for dtype in ("int64", "float64"):
                for renum in (False, True):
                    ref_mesh, ref_prog, ref_h = _build_case(app, n, dtype, renum)
                    run_program(ref_prog, ref_mesh, BackendConfig())
                    ref_a, ref_b = _result_vectors(app, ref_h)
                    for config in _equiv_configs():
                        mesh, prog, handles = _build_case(app, n, dtype, renum)
                        run_program(prog, mesh, config)
                        got_a, got_b = _result_vectors(app, handles)
                        runs += 1
                        where = (f"{app} n={n} {dtype} renum={renum} "
                                 f"{config.backend}")
                        if dtype == "int64":
                            np.testing.assert_array_equal(got_a, ref_a, where)
                            np.testing.assert_array_equal(got_b, ref_b, where)
                        else:
                            np.testing.assert_allclose(got_a, ref_a, rtol=1e-12,
                                                       err_msg=where)
                            np.testing.assert_allclose(got_b, ref_b, rtol=1e-12,
                                                       err_msg=where)
    _report("1", f"backend equivalence over {runs} runs", t0)


# -- 2: plan validity ------------------------------------------------------

def test_criterion_02_plan_validity_fuzz():
    t0 = time.time()
    rng = np.random.default_rng(SEED + 2)
    for _ in range(200):
        mesh, loop = random_loop_mesh(rng, max_elems=500)
        bs = int(rng.choice([1, 2, 7, 16, 64, 256]))
        plan = plan_for(loop, mesh, bs)
        assert_plan_race_free(loop, plan)
    _report("2", "zero same-color conflicts over 200 random meshes", t0)


# -- 3: halo correctness and scaling trend ----------------------------------

def test_criterion_03_halo_oracle_and_trend():
    t0 = time.time()
    rng = np.random.default_rng(SEED + 3)
    for _ in range(50):
        mesh, loop = random_loop_mesh(rng, max_elems=150)
        nranks = int(rng.integers(2, 6))
        base = {"tgt": partition_trivial(mesh.sets["tgt"], nranks)}
        assignments = derive_assignments(mesh, [loop], base, nranks)
        layout = build_halos(mesh, [loop], assignments)
        assert_layout_matches_oracle(layout, [loop], assignments)

    mesh = gen_mesh(64)
    prog, _ = build_diffusion(mesh, steps=1, dtype="int64")
    pct = {}
    for part in ("rcb", "trivial"):
        rows = [halo_stats([build_layout(
                    mesh, prog, BackendConfig(backend="ranks", nranks=nr,
                                              partitioner=part))])[0]
                for nr in (2, 4, 8, 16)]
        pct[part] = [r.pct_halo for r in rows]
    assert all(b > a for a, b in zip(pct["rcb"], pct["rcb"][1:])), pct
    assert all(r <= t for r, t in zip(pct["rcb"], pct["trivial"])), pct
    _report("3", f"closure oracle x50; rcb %H {pct['rcb'][0]:.1f}"
                 f"->{pct['rcb'][-1]:.1f} <= trivial", t0)


# -- 4: renumbering effect ---------------------------------------------------

def test_criterion_04_renumbering_span_and_invariance():
    t0 = time.time()
    rng = np.random.default_rng(SEED + 4)

    ref_mesh = gen_mesh(64)
    ref_prog, ref_h = build_diffusion(ref_mesh, steps=2, dtype="int64")
    run_program(ref_prog, ref_mesh, BackendConfig())
    ref_u = ref_h["u"].fetch().ravel()

    mesh = gen_mesh(64)
    prog, handles = build_diffusion(mesh, steps=2, dtype="int64")
    nshuf = rng.permutation(mesh.sets["nodes"].size)
    apply_permutation(mesh, Permutation("nodes", nshuf, np.argsort(nshuf),
                                        mesh.version))
    eshuf = rng.permutation(mesh.sets["edges"].size)
    apply_permutation(mesh, Permutation("edges", eshuf, np.argsort(eshuf),
                                        mesh.version))
    shuffled = bandwidth_metric(mesh, mesh.maps["edge_nodes"])
    report = renumber_mesh(mesh)
    ordered = report["maps"]["edge_nodes"][1]
    reduction = 1.0 - ordered.mean_span / shuffled.mean_span
    assert reduction >= 0.30, (shuffled, ordered)

    run_program(prog, mesh, BackendConfig())
    total_forward = report["permutations"]["nodes"].forward[nshuf]
    got_u = handles["u"].fetch().ravel()[total_forward]
    np.testing.assert_array_equal(got_u, ref_u)
    _report("4", f"mean span cut by {100 * reduction:.0f}%; results invariant", t0)


# -- 5: layout round-trip ----------------------------------------------------

def test_criterion_05_layout_round_trip_1000():
    t0 = time.time()
    rng = np.random.default_rng(SEED + 5)
    for i in range(1000):
        size = int(rng.integers(0, 60))
        dim = int(rng.integers(1, 9))
        kind = "int64" if rng.integers(2) else "float64"
        mesh = Mesh(auto_soa_threshold=None)
        s = mesh.decl_set("s", size)
        vals = (rng.integers(-99, 99, size * dim) if kind == "int64"
                else rng.standard_normal(size * dim))
        d = mesh.decl_dat("d", s, dim, kind, vals)
        before = d.data.copy()
        transform_layout(d, SOA)
        if dim == 1:
            np.testing.assert_array_equal(d.data, before)
        transform_layout(d, AOS)
        np.testing.assert_array_equal(d.data, before)
    _report("5", "1000 random dats: AoS->SoA->AoS exact, dim-1 identity", t0)


# -- 6: hybrid weighting -----------------------------------------------------

def test_criterion_06_hybrid_weighting():
    t0 = time.time()
    for total in (7000, 997, 64):
        mesh = Mesh()
        s = mesh.decl_set("s", total)
        for beta in (0.5, 1.0, 1.5, 2.5):
            for n_b in (1, 2, 3):
                sizes = partition_weighted(
                    s, [beta * n_b] + [1.0] * n_b).sizes()
                ideal_a = total * beta / (1.0 + beta)
                assert abs(sizes[0] - ideal_a) <= 1 + n_b, (beta, sizes)
                assert max(sizes[1:]) - min(sizes[1:]) <= 1
    mesh = Mesh()
    s = mesh.decl_set("s", 7000)
    assert partition_weighted(s, [5.0, 1.0, 1.0]).sizes() == [5000, 1000, 1000]
    _report("6", "realized sizes track balance; 2.5 -> 5000:1000:1000", t0)


# -- 7: tuner soundness ------------------------------------------------------

def test_criterion_07_tuner_finds_planted_minimum():
    t0 = time.time()
    mesh = gen_mesh(16)
    prog, handles = build_cell_area(mesh, "int64")
    cfg = BackendConfig(backend="threads", nthreads=1,
                        cost_model=lambda bs: 2e-5 * (bs / 128 + 128 / bs))
    result = tune_block_size(prog, mesh, [32, 64, 128, 256, 512], cfg)
    assert result.best["area_distribute"] == 128, result.curves["area_distribute"]

    ref_mesh = gen_mesh(16)
    ref_prog, ref_h = build_cell_area(ref_mesh, "int64")
    run_program(ref_prog, ref_mesh, BackendConfig())
    tuned = BackendConfig(backend="threads", nthreads=4,
                          block_size_table=result.best)
    run_program(prog, mesh, tuned)
    np.testing.assert_array_equal(handles["arean"].fetch(),
                                  ref_h["arean"].fetch())
    _report("7", "planted optimum 128 found; tuned results bit-equal", t0)


# -- 8: perf accounting ------------------------------------------------------

def test_criterion_08_perf_accounting(tmp_path):
    t0 = time.time()
    mesh = Mesh()
    s = mesh.decl_set("s", 1000)
    d3 = mesh.decl_dat("d3", s, 3, "float64", np.zeros(3000))
    d1 = mesh.decl_dat("d1", s, 1, "float64", np.zeros(1000))
    assert useful_bytes(Loop("r", s, [arg_direct(d3, READ)], lambda v: None)) == 24_000
    assert useful_bytes(Loop("i", s, [arg_direct(d1, INC)], lambda v: None)) == 16_000
    sm = sample_mesh()
    prog, _ = build_cell_area(sm, "int64")
    distribute = next(l for l in prog if l.name == "area_distribute")
    assert useful_bytes(distribute) == 360

    mesh2 = gen_mesh(8)
    prog2, _ = build_cell_area(mesh2, "float64")
    outcome = run_program(prog2, mesh2, BackendConfig(backend="threads"))
    path = tmp_path / "report.json"
    emit_report(outcome.perf, path, fmt="json",
                config={"backend": "threads"},
                mesh_sets={n: st.size for n, st in mesh2.sets.items()})
    jsonschema.validate(json.loads(path.read_text()), REPORT_SCHEMA)
    assert sum(r.pct_runtime for r in outcome.perf) == pytest.approx(100.0,
                                                                     abs=0.01)
    _report("8", "useful bytes 24000/16000/360; schema valid; pct sums 100", t0)


# -- 9: block statistics and load-imbalance effect ---------------------------

def test_criterion_09_block_stats_and_imbalance():
    t0 = time.time()
    mesh = gen_mesh(64)
    prog, _ = build_diffusion(mesh, steps=1, dtype="int64")
    flux = next(l for l in prog if l.name == "edge_flux")
    prev_nb = None
    band = []
    for bs in (64, 128, 256, 512, 1024, 2048):
        st = plan_stats(plan_for(flux, mesh, bs))
        if prev_nb is not None:
            assert abs(prev_nb / 2 - st.nb) <= 1, (bs, prev_nb, st.nb)
        assert 4 <= st.nc <= 24, (bs, st.nc)
        band.append(st.nc)
        prev_nb = st.nb

    def flux_time(bs: int, nthreads: int) -> float:
        times = []
        for _ in range(3):
            m = gen_mesh(64)
            p, _ = build_diffusion(m, steps=1, dtype="int64")
            f = next(l for l in p if l.name == "edge_flux")
            cfg = BackendConfig(backend="threads", nthreads=nthreads,
                                block_size=bs, simulated_elem_cost=5e-6)
            out = run_program([f], m, cfg)
            times.append(out.perf[0].time_sec)
        return sorted(times)[1]

    balanced = flux_time(64, 8)     # nb/nc ~ 32 blocks per color, 8 workers
    starved = flux_time(2048, 8)    # nb/nc ~ 1 block per color, 8 workers
    assert starved > balanced, (starved, balanced)
    _report("9", f"nb halves per doubling, nc in {min(band)}..{max(band)}; "
                 f"starved colors {starved / balanced:.1f}x slower", t0)


# -- 10: diffusion physics ---------------------------------------------------

def test_criterion_10_harmonic_convergence():
    t0 = time.time()
    mesh = gen_mesh(8)
    prog, handles = build_diffusion(mesh, steps=400, dt=1 / 6, dtype="float64")
    run_program(prog, mesh, BackendConfig())
    u = handles["u"].fetch().ravel()
    x = mesh.dats["coords"].fetch()[:, 0]
    err = float(np.max(np.abs(u - x)))
    assert err < 1e-6, err
    _report("10", f"harmonic boundary-value max error {err:.1e}", t0)
