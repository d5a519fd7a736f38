import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anisostokes.mesh import (DIRICHLET, NEUMANN, MeshError, build_composite, facet_measures,
                              read_amesh, refine, rigid_motion_basis, tag_interface, tag_outer,
                              write_amesh)
from anisostokes.tensor import INNER, OUTER


@pytest.fixture(scope="module")
def square4():
    return build_composite(2, "square", 4.0, 0.25, 0.5)


@pytest.fixture(scope="module")
def cube4():
    return build_composite(3, "cube", 4.0, 0.5, 0.5)


def test_unit_square_inner_area(square4):
    assert abs(square4.region_measure(INNER) - 1.0) <= 1e-12
    assert abs(square4.region_measure(OUTER) - 63.0) <= 1e-10


def test_unit_cube_interface_area(cube4):
    assert abs(cube4.interface_measures().sum() - 6.0) <= 1e-10
    assert abs(cube4.region_measure(INNER) - 1.0) <= 1e-12


def test_invalid_geometry_rejected():
    with pytest.raises(MeshError):
        build_composite(2, "square", 0.5, 0.25, 0.5)
    with pytest.raises(MeshError):
        build_composite(2, "square", 2.0, 0.75, 0.5)
    with pytest.raises(MeshError):
        build_composite(4, "square", 2.0, 0.25, 0.5)
    with pytest.raises(MeshError):
        build_composite(2, "hexagon", 2.0, 0.25, 0.5)


def test_interface_facets_have_one_cell_per_side(square4):
    cells = square4.interface_cells
    assert np.all(square4.regions[cells[:, 0]] == INNER)
    assert np.all(square4.regions[cells[:, 1]] == OUTER)
    # every interface facet belongs to both of its cells
    for f, (a, b) in zip(square4.interface_facets, cells):
        assert set(f) <= set(square4.cells[a]) and set(f) <= set(square4.cells[b])


def test_cells_positively_oriented(cube4):
    pts = cube4.vertices[cube4.cells]
    vol = np.linalg.det(pts[:, 1:] - pts[:, :1])
    assert np.all(vol > 0)


@pytest.mark.parametrize("dim", [2, 3])
def test_refinement_counts(dim):
    m = build_composite(dim, "square", 2.0, 0.5, 0.5)
    r1 = refine(m)
    r2 = refine(r1)
    assert r1.nc == 2 ** dim * m.nc and r2.nc == 4 ** dim * m.nc
    assert len(r1.interface_facets) == 2 ** (dim - 1) * len(m.interface_facets)
    assert len(r1.outer_facets) == 2 ** (dim - 1) * len(m.outer_facets)
    assert np.array_equal(r1.vertices[:m.nv], m.vertices)
    assert r1.h == m.h / 2
    for reg in (INNER, OUTER):
        assert abs(r2.region_measure(reg) - m.region_measure(reg)) <= 1e-12 * m.region_measure(OUTER)


def test_refined_tags_follow_parents(square4):
    tagged = tag_interface(square4, lambda c: c[:, 0] > 0)
    r = refine(tagged)
    cen = r.vertices[r.interface_facets].mean(axis=1)
    assert np.array_equal(r.interface_tags == NEUMANN, cen[:, 0] > 0)
    out = tag_outer(square4, lambda c: c[:, 1] > 0)
    ro = refine(out)
    cen = ro.vertices[ro.outer_facets].mean(axis=1)
    assert np.array_equal(ro.outer_tags == NEUMANN, cen[:, 1] > 0)


def test_right_edge_normal(square4):
    nrm = square4.interface_normals()
    cen = square4.vertices[square4.interface_facets].mean(axis=1)
    right = np.isclose(cen[:, 0], 0.5)
    assert np.allclose(nrm[right], [1.0, 0.0], atol=1e-15)
    assert np.allclose(np.linalg.norm(nrm, axis=1), 1.0)


def test_refined_facets_inherit_normals(square4):
    r = refine(square4)
    cen = r.vertices[r.interface_facets].mean(axis=1)
    top = np.isclose(cen[:, 1], 0.5)
    assert np.allclose(r.interface_normals()[top], [0.0, 1.0], atol=1e-15)


@pytest.mark.parametrize("shape,outer", [("square", "box"), ("square", "ball"), ("disk", "ball")])
def test_closed_surface_normal_integral_vanishes(shape, outer):
    m = build_composite(2, shape, 2.0, 0.25, 0.5, outer_shape=outer)
    s = (m.interface_measures()[:, None] * m.interface_normals()).sum(axis=0)
    o = (m.outer_measures()[:, None] * m.outer_normals()).sum(axis=0)
    assert np.max(np.abs(s)) <= 1e-12 and np.max(np.abs(o)) <= 1e-12


def test_closed_surface_normal_integral_3d(cube4):
    s = (cube4.interface_measures()[:, None] * cube4.interface_normals()).sum(axis=0)
    assert np.max(np.abs(s)) <= 1e-12


def test_ball_boundary_on_circle():
    m = build_composite(2, "square", 2.0, 0.25, 0.5, outer_shape="ball")
    r = np.linalg.norm(m.vertices[m.outer_vertices()], axis=1)
    assert np.allclose(r, 2.0, atol=1e-12)
    r2 = refine(m)
    assert np.allclose(np.linalg.norm(r2.vertices[r2.outer_vertices()], axis=1), 2.0, atol=1e-12)


def test_rigid_basis_2d():
    b = rigid_motion_basis(2)
    assert len(b) == 3
    x = np.array([[0.3, -0.7]])
    vals = b(x)[:, 0]
    assert np.allclose(vals, [[1, 0], [0, 1], [0.7, 0.3]])


@given(dim=st.sampled_from([2, 3]), seed=st.integers(0, 1000))
@settings(max_examples=10)
def test_rigid_fields_have_zero_strain_and_divergence(dim, seed):
    b = rigid_motion_basis(dim)
    assert len(b) == dim * (dim + 1) // 2
    G = b.gradients()
    assert np.max(np.abs(G + np.swapaxes(G, 1, 2))) == 0.0
    assert np.max(np.abs(np.trace(G, axis1=1, axis2=2))) == 0.0
    pts = np.random.default_rng(seed).uniform(-1, 1, (100, dim))
    vals = b(pts).reshape(len(b), -1)
    assert np.linalg.matrix_rank(vals) == len(b)


def test_facet_measures_of_unit_triangle():
    pts = np.array([[[0.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.0, 1.0, 0.0]]])
    assert facet_measures(pts)[0] == pytest.approx(0.5)


def test_amesh_round_trip(tmp_path, square4):
    m = tag_interface(square4, lambda c: c[:, 1] > 0)
    path = tmp_path / "m.amesh"
    write_amesh(m, path)
    assert path.read_text().splitlines()[0].startswith("amesh 1")
    back = read_amesh(path)
    assert np.array_equal(back.vertices, m.vertices)
    assert np.array_equal(back.cells, m.cells)
    assert np.array_equal(back.regions, m.regions)
    assert np.array_equal(back.interface_tags, m.interface_tags)
    assert np.array_equal(back.outer_tags, m.outer_tags)
    assert set(np.unique(back.outer_tags)) <= {DIRICHLET, NEUMANN}
