import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from mrcfie.mesh import (MeshError, TriMesh, bisect_region, build_connectivity, cap_region,
                         generate_primitive, icosphere, mesh_stats, refine_region, structured_cube,
                         torus_grid, voxel_surface)


def half_edge_balance(mesh):
    """Sum of signed traversals per undirected edge; zero when consistently oriented."""
    t = mesh.triangles
    he = np.stack([t, np.roll(t, -1, axis=1)], axis=2).reshape(-1, 2)
    key = np.sort(he, axis=1)
    sign = np.where(he[:, 0] < he[:, 1], 1, -1)
    _, inv = np.unique(key, axis=0, return_inverse=True)
    return np.bincount(inv.ravel(), weights=sign)


def test_minimal_cube_counts(cube1):
    conn = build_connectivity(cube1)
    assert (cube1.n_vertices, cube1.n_triangles) == (8, 12)
    assert conn.n_interior == 18 and conn.n_boundary == 0
    assert conn.euler_characteristic == 2 and conn.genus == 0


def test_open_square():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [1, 1, 0], [0, 1, 0]])
    conn = build_connectivity(TriMesh(v, np.array([[0, 1, 2], [0, 2, 3]])))
    assert conn.n_interior == 1 and conn.n_boundary == 4
    assert not conn.closed and conn.genus is None


def test_closed_interior_edges_are_three_halves_f(sphere3):
    conn = build_connectivity(sphere3)
    assert conn.n_interior == 3 * sphere3.n_triangles // 2
    assert conn.n_interior + conn.n_boundary == conn.n_edges


def test_rwg_tplus_traverses_edge_in_stored_order(sphere2):
    conn = build_connectivity(sphere2)
    tri = sphere2.triangles
    for n in range(conn.n_interior):
        a, b = conn.edges[n]
        tp, tm = conn.tplus[n], conn.tminus[n]
        rolled = list(zip(tri[tp], np.roll(tri[tp], -1)))
        assert (a, b) in rolled
        assert (b, a) in list(zip(tri[tm], np.roll(tri[tm], -1)))


def test_non_manifold_rejected():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0], [0, 0, 1]])
    with pytest.raises(MeshError, match="non-manifold"):
        build_connectivity(TriMesh(v, np.array([[0, 1, 2], [1, 0, 3], [0, 1, 4]])))


def test_degenerate_triangle_rejected():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
    with pytest.raises(MeshError, match="degenerate"):
        TriMesh(v, np.array([[0, 1, 2]]))


def test_inconsistent_orientation_rejected():
    v = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [0, -1, 0]])
    with pytest.raises(MeshError, match="orientation"):
        build_connectivity(TriMesh(v, np.array([[0, 1, 2], [0, 1, 3]])))


def test_structured_grid_ratios():
    st_ = mesh_stats(structured_cube(1.0, 3))
    assert st_.h_ratio == pytest.approx(np.sqrt(2), rel=1e-12)
    assert st_.area_ratio == pytest.approx(1.0, rel=1e-12)


def test_icosahedron_equal_areas():
    assert mesh_stats(icosphere(1.0, 0)).area_ratio == pytest.approx(1.0, abs=1e-12)


def test_generate_primitive_examples(cube1, sphere3):
    assert build_connectivity(cube1).n_rwg == 18
    conn = build_connectivity(sphere3)
    assert sphere3.n_triangles == 1280 and conn.closed and conn.genus == 0
    assert sphere3.nesting.depth == 3
    assert np.allclose(np.linalg.norm(sphere3.vertices, axis=1), 0.5)


def test_cube_nesting_is_dyadic():
    m = generate_primitive("cube", 1.0, 0.5)
    nest = m.nesting
    assert nest.depth == 1
    assert len(nest.levels[0]) == 12 and len(nest.levels[1]) == 48
    assert np.all(nest.children_counts(0) == 4)
    coarse = m.level_mesh(0)
    # each child lies inside its parent (flat faces): centroid in the parent plane
    for t, p in enumerate(nest.parents[0]):
        c = m.vertices[m.triangles[t]].mean(axis=0)
        pc = coarse.corners[p]
        n = np.cross(pc[1] - pc[0], pc[2] - pc[0])
        assert abs(n @ (c - pc[0])) < 1e-12


def test_generate_primitive_errors():
    with pytest.raises(ValueError):
        generate_primitive("cube", 1.0, 2.0)
    with pytest.raises(ValueError):
        generate_primitive("cube", 1.0, 0.0)
    with pytest.raises(MemoryError):
        generate_primitive("cube", 1.0, 1e-3)
    with pytest.raises(ValueError):
        generate_primitive("cone", 1.0, 0.5)


def test_sphere_primitive_from_target_h():
    m = generate_primitive("sphere", 0.5, 0.15)
    conn = build_connectivity(m)
    assert conn.closed and conn.genus == 0
    assert 0.1 < conn.lengths.mean() < 0.2


def test_refine_everything_quadruples(cube1):
    fine = refine_region(cube1, None, 1)
    assert fine.n_triangles == 4 * cube1.n_triangles
    assert np.all(~fine.nesting.green[-1])


def test_refine_empty_region_is_identity(cube1):
    out = refine_region(cube1, lambda c: np.zeros(len(c), dtype=bool), 2)
    assert out is cube1


def test_cap_refinement_reaches_edge_ratio_20():
    # lambda/10 sphere at 300 MHz, cap refined towards lambda/200
    base = generate_primitive("sphere", 0.5, 0.1)
    fine = refine_region(base, cap_region((0, 0, 1), 0.25), 5)
    assert mesh_stats(fine).h_ratio >= 20


def test_local_refinement_closure_is_conforming(sphere2):
    fine = refine_region(sphere2, cap_region((1, 0, 0), 0.4), 2)
    conn = build_connectivity(fine)
    assert conn.closed and conn.genus == 0
    assert np.all(half_edge_balance(fine) == 0)
    assert fine.nesting.green[-1].any()
    counts = set(np.unique(fine.nesting.children_counts(fine.nesting.depth - 1)))
    assert counts <= {1, 2, 4}


def test_hetero_first_row_ratios():
    # one bisection plus one four-way step: area and edge ratios near 9.44 and 4.23, within 20%
    from mrcfie.harness import hetero_sphere
    st_ = mesh_stats(hetero_sphere(0.5, 3, 1))
    assert st_.area_ratio == pytest.approx(9.44, rel=0.2)
    assert st_.h_ratio == pytest.approx(4.23, rel=0.2)


def test_bisection_halves_selected_areas(sphere2):
    region = cap_region((0, 0, 1), 0.5)
    out = bisect_region(sphere2, region, project=lambda p: p)
    assert out.n_triangles > sphere2.n_triangles
    assert np.all(half_edge_balance(out) == 0)
    counts = out.nesting.children_counts(out.nesting.depth - 1)
    assert counts.max() == 2
    assert out.areas.sum() == pytest.approx(sphere2.areas.sum(), rel=1e-12)


def test_torus_and_genus_two():
    assert build_connectivity(torus_grid(1.0, 0.3, 12, 6)).genus == 1
    occ = np.ones((5, 3, 1), dtype=bool)
    occ[1, 1, 0] = occ[3, 1, 0] = False
    assert build_connectivity(voxel_surface(occ)).genus == 2


def test_outward_flux_positive(sphere2, cube4):
    for m in (sphere2, cube4):
        assert m.signed_flux_of_position() > 0


@settings(max_examples=15, deadline=None)
@given(n=st.integers(1, 5))
def test_cube_euler_and_orientation(n):
    m = structured_cube(1.0, n)
    conn = build_connectivity(m)
    assert conn.euler_characteristic == 2
    assert np.all(half_edge_balance(m) == 0)
    assert conn.n_interior == 18 * n * n


@settings(max_examples=15, deadline=None)
@given(axis=st.sampled_from([(1, 0, 0), (0, 1, 0), (1, 1, 1), (-1, 0.3, 0)]),
       angle=st.floats(0.2, 1.2), levels=st.integers(1, 2))
def test_flat_refinement_conserves_area(axis, angle, levels):
    base = structured_cube(1.0, 2)
    c = (0.5, 0.5, 0.5)

    def region(cent):
        d = cent - np.asarray(c)
        d /= np.linalg.norm(d, axis=1, keepdims=True)
        a = np.asarray(axis, float) / np.linalg.norm(axis)
        return d @ a > np.cos(angle)
    fine = refine_region(base, region, levels)
    assert fine.areas.sum() == pytest.approx(6.0, rel=1e-12)
    conn = build_connectivity(fine)
    assert conn.genus == 0
    nest = fine.nesting
    for l in range(nest.depth):
        parents = nest.parents[l]
        assert len(parents) == len(nest.levels[l + 1])
        assert parents.min() >= 0 and parents.max() < len(nest.levels[l])
        assert np.all(np.isin(nest.children_counts(l), [1, 2, 4]))
