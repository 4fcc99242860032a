import numpy as np

from meshloop import (INC, RW, Loop, Mesh, arg_direct, arg_indirect,
                      plan_for, plan_stats)
from meshloop.apps import gen_mesh, sample_mesh
from meshloop.plan import build_plan

from conftest import assert_plan_race_free, inc_loop, random_loop_mesh


def direct_loop(mesh):
    s = mesh.sets.get("s") or mesh.decl_set("s", 20)
    d = mesh.dats.get("d") or mesh.decl_dat("d", s, 1, "float64", np.zeros(s.size))
    return Loop("direct", s, [arg_direct(d, RW)], lambda v: None)


def clique_mesh():
    """Three edges all incrementing node 1."""
    mesh = Mesh()
    nodes = mesh.decl_set("nodes", 1)
    edges = mesh.decl_set("edges", 3)
    mesh.decl_map("en", edges, nodes, 1, [1, 1, 1])
    return mesh


def test_direct_only_loop_needs_one_color():
    mesh = Mesh()
    loop = direct_loop(mesh)
    for bs in (1, 4, 256):
        plan = plan_for(loop, mesh, bs)
        st = plan_stats(plan)
        assert st.nc == 1
        assert np.all(plan.elem_color == 0)


def test_default_block_size_is_256():
    mesh = Mesh()
    loop = direct_loop(mesh)
    assert plan_for(loop, mesh).block_size == 256


def test_clique_forces_distinct_block_colors():
    mesh = clique_mesh()
    loop = inc_loop(mesh, "en")
    plan = plan_for(loop, mesh, 1)
    st = plan_stats(plan)
    assert (st.nb, st.nc) == (3, 3)
    assert st.blocks_per_color == [1, 1, 1]
    assert_plan_race_free(loop, plan)


def test_clique_single_block_needs_three_element_colors():
    mesh = clique_mesh()
    loop = inc_loop(mesh, "en")
    plan = plan_for(loop, mesh, 8)
    assert plan.nblocks == 1 and plan.ncolors == 1
    assert plan.elem_ncolors[0] == 3
    assert_plan_race_free(loop, plan)


def test_sample_mesh_plan_is_conflict_free():
    mesh = sample_mesh()
    loop = inc_loop(mesh, "cell_nodes")
    plan = plan_for(loop, mesh, 4)
    assert_plan_race_free(loop, plan)


def test_blocks_are_contiguous_with_ragged_tail():
    mesh = sample_mesh()
    loop = inc_loop(mesh, "cell_nodes")
    plan = plan_for(loop, mesh, 4)
    assert plan.nblocks == 5
    assert plan.block_bounds.tolist() == [0, 4, 8, 12, 16, 17]


def test_empty_iteration_set_plans_cleanly():
    mesh = Mesh()
    nodes = mesh.decl_set("nodes", 3)
    none = mesh.decl_set("none", 0)
    mesh.decl_map("en", none, nodes, 1, [])
    loop = inc_loop(mesh, "en")
    plan = plan_for(loop, mesh, 16)
    assert plan.nblocks == 0 and plan.ncolors == 0


def test_block_count_halves_and_colors_stay_banded():
    mesh = gen_mesh(16)
    loop = inc_loop(mesh, "edge_nodes")
    prev = None
    for bs in (64, 128, 256, 512):
        st = plan_stats(plan_for(loop, mesh, bs))
        assert sum(st.blocks_per_color) == st.nb
        if prev is not None:
            assert abs(prev / 2 - st.nb) <= 1
        assert 2 <= st.nc <= 24
        prev = st.nb


def test_plan_cache_reuses_and_counts_builds():
    mesh = sample_mesh()
    loop = inc_loop(mesh, "cell_nodes")
    assert mesh._plan_builds == 0
    p1 = plan_for(loop, mesh, 4)
    assert mesh._plan_builds == 1
    p2 = plan_for(loop, mesh, 4)
    assert p2 is p1 and mesh._plan_builds == 1
    plan_for(loop, mesh, 8)
    assert mesh._plan_builds == 2
    # a structurally identical descriptor hits the same cache entry
    twin = inc_loop(mesh, "cell_nodes")
    assert plan_for(twin, mesh, 4) is p1
    assert mesh._plan_builds == 2


def test_rebuild_determinism():
    mesh, loop = random_loop_mesh(np.random.default_rng(42), max_elems=300)
    cols = [(a.dat.name, a.map.table[:, a.slot])
            for a in loop.indirect_write_args()]
    a = build_plan(loop.iter_set.size, cols, 32)
    b = build_plan(loop.iter_set.size, cols, 32)
    np.testing.assert_array_equal(a.block_color, b.block_color)
    np.testing.assert_array_equal(a.elem_color, b.elem_color)


def test_fuzzed_plans_have_no_conflicts(rng):
    for _ in range(20):
        mesh, loop = random_loop_mesh(rng, max_elems=200)
        bs = int(rng.choice([1, 3, 16, 64]))
        plan = plan_for(loop, mesh, bs)
        assert_plan_race_free(loop, plan)


def test_two_dats_do_not_conflict_with_each_other():
    """Writes to different dats through the same map never collide."""
    mesh = Mesh()
    nodes = mesh.decl_set("nodes", 4)
    edges = mesh.decl_set("edges", 4)
    m = mesh.decl_map("en", edges, nodes, 1, [1, 2, 3, 4])
    a = mesh.decl_dat("a", nodes, 1, "int64", np.zeros(4, np.int64))
    b = mesh.decl_dat("b", nodes, 1, "int64", np.zeros(4, np.int64))
    loop = Loop("two", edges,
                [arg_indirect(a, m, 1, INC), arg_indirect(b, m, 1, INC)],
                lambda x, y: None)
    plan = plan_for(loop, mesh, 1)
    assert plan.ncolors == 1  # identity targets: no element shares a target
