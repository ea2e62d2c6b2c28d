import itertools

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from lwelasto.mesh import KUHN_OFFSETS, BoxDomain, build_box_mesh, mesh_statistics


def test_unit_cube_counts(cube3):
    assert cube3.num_vertices == 64
    assert cube3.num_tets == 162


def test_single_cube_kuhn_split():
    mesh = build_box_mesh(BoxDomain((0, 0, 0), (1, 1, 1), (1, 1, 1)))
    assert mesh.num_tets == 6
    vols = mesh.tet_volumes()
    assert np.allclose(vols, 1 / 6)
    # every tet contains the main diagonal
    for tet in mesh.tets:
        pts = mesh.vertices[tet]
        assert any(np.allclose(p, 0) for p in pts)
        assert any(np.allclose(p, 1) for p in pts)


def test_kuhn_offsets_positive():
    for off in KUHN_OFFSETS:
        e = off[1:] - off[0]
        assert np.linalg.det(e) > 0


@given(
    n=st.tuples(st.integers(1, 4), st.integers(1, 4), st.integers(1, 4)),
    ext=st.tuples(*[st.floats(0.2, 3.0)] * 3),
)
@settings(max_examples=25, deadline=None)
def test_volumes_positive_and_sum_to_box(n, ext):
    lo = np.array([-0.5, 0.1, 2.0])
    dom = BoxDomain(lo, lo + np.array(ext), n)
    mesh = build_box_mesh(dom)
    vols = mesh.tet_volumes()
    assert np.all(vols > 0)
    assert np.isclose(vols.sum(), dom.volume, rtol=1e-12)
    assert mesh.num_tets == 6 * np.prod(n)


def test_conforming_faces(cube2):
    # every interior triangle is shared by exactly two tets, boundary ones by one
    counts = {}
    for tet in cube2.tets:
        for face in itertools.combinations(sorted(tet), 3):
            counts[face] = counts.get(face, 0) + 1
    assert set(counts.values()) <= {1, 2}
    boundary = [f for f, c in counts.items() if c == 1]
    flags = cube2.boundary_vertex_flags
    assert all(flags[list(f)].all() for f in boundary)
    # 6 faces, each split into 2 * 2 * 2 triangles
    assert len(boundary) == 6 * 8


def test_diameter_is_cell_diagonal():
    dom = BoxDomain((-1, -1, -1), (1, 1, 1), (3, 3, 3))
    mesh = build_box_mesh(dom)
    stats = mesh_statistics(mesh)
    assert np.isclose(mesh.h, np.sqrt(3) * 2 / 3)
    assert np.isclose(stats["h"], mesh.h)


def test_boundary_flags(cube3):
    v = cube3.vertices
    on = np.any((np.abs(v) < 1e-14) | (np.abs(v - 1) < 1e-14), axis=1)
    assert np.array_equal(on, cube3.boundary_vertex_flags)
    assert (~on).sum() == 8


def test_locate_recovers_points(cube3, rng):
    pts = rng.uniform(0, 1, size=(500, 3))
    tets, local = cube3.locate(pts)
    verts = cube3.vertices[cube3.tets[tets]]
    # barycentric reconstruction
    J = np.transpose(verts[:, 1:] - verts[:, :1], (0, 2, 1))
    xi = np.linalg.solve(J, (pts - verts[:, 0])[..., None])[..., 0]
    lam = np.column_stack([1 - xi.sum(1), xi])
    assert np.all(lam > -1e-12)


def test_locate_rejects_outside(cube3):
    with pytest.raises(ValueError):
        cube3.locate(np.array([[1.5, 0.5, 0.5]]))


@pytest.mark.parametrize("bad", [
    dict(lo=(0, 0, 0), hi=(1, 1, 1), n=(0, 1, 1)),
    dict(lo=(0, 0, 0), hi=(0, 1, 1), n=(1, 1, 1)),
    dict(lo=(0, 0), hi=(1, 1), n=(1, 1)),
])
def test_domain_validation(bad):
    with pytest.raises(ValueError):
        BoxDomain(**bad)


def test_from_spacing():
    dom = BoxDomain.from_spacing((-1, -1, -1), (1, 1, 1), 3.0 ** -3)
    assert dom.n == (54, 54, 54)
