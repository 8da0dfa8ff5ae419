import numpy as np
import pytest

import gamma_elliptic as ge
from gamma_elliptic import surface_mesh as sm
from gamma_elliptic.verification import fit_rate


def test_icosahedron_combinatorics(sphere_meshes):
    m0 = sphere_meshes[0]
    assert (m0.n_vertices, m0.n_triangles) == (12, 20)
    assert m0.euler_characteristic == 2
    m0.validate(expected_euler=2)


def test_subdivision_counts(sphere_meshes):
    m1 = sphere_meshes[1]
    assert (m1.n_vertices, m1.n_triangles) == (42, 80)
    for a, b in zip(sphere_meshes, sphere_meshes[1:]):
        assert b.n_triangles == 4 * a.n_triangles
        b.validate(expected_euler=2)


def test_torus_grid_combinatorics(torus_meshes):
    t0 = torus_meshes[0]
    assert (t0.n_vertices, t0.n_triangles) == (192, 384)
    assert t0.euler_characteristic == 0
    t0.validate(expected_euler=0)
    for m in torus_meshes[1:]:
        m.validate(expected_euler=0)


def test_vertices_on_surface(sphere_meshes, torus_meshes, sphere_atlas, torus_atlas):
    for mesh, atlas in ((sphere_meshes[3], sphere_atlas), (torus_meshes[1], torus_atlas)):
        proj = atlas.project(mesh.vertices)
        assert np.linalg.norm(proj - mesh.vertices, axis=1).max() < 1e-10


def test_mesh_size_icosahedron(sphere_meshes):
    # icosahedron edge for circumradius 1: 4 / sqrt(10 + 2*sqrt(5))
    expected = 4.0 / np.sqrt(10.0 + 2.0 * np.sqrt(5.0))
    assert sm.mesh_size(sphere_meshes[0]) == pytest.approx(expected, rel=1e-12)


def test_refine_halves_mesh_size(sphere_meshes, torus_meshes):
    for family in (sphere_meshes, torus_meshes):
        for a, b in zip(family, family[1:]):
            ratio = sm.mesh_size(b) / sm.mesh_size(a)
            assert 0.45 <= ratio <= 0.60


def test_sphere_area_convergence(sphere_meshes):
    exact = 4.0 * np.pi
    errs = [abs(m.total_area() - exact) / exact for m in sphere_meshes]
    # measured hierarchy (rate-2 decay); the level-4 value is ~1.2e-3
    pinned = [0.24, 0.075, 0.020, 5.0e-3, 1.3e-3]
    for e, cap in zip(errs, pinned):
        assert e < cap
    assert all(b < a for a, b in zip(errs, errs[1:]))  # monotone toward exact
    hs = [sm.mesh_size(m) for m in sphere_meshes]
    assert 1.8 <= fit_rate(hs, errs) <= 2.2


def test_torus_area_convergence(torus_meshes, torus_atlas):
    exact = torus_atlas.area
    errs = [abs(m.total_area() - exact) / exact for m in torus_meshes]
    hs = [sm.mesh_size(m) for m in torus_meshes]
    assert 1.8 <= fit_rate(hs, errs) <= 2.2


def test_element_geometry_examples():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0.5, np.sqrt(3) / 2, 0]])
    mesh = ge.SurfaceMesh(verts, np.array([[0, 1, 2]]), label="equilateral")
    eg = ge.element_geometry(mesh, 0)
    assert eg.area == pytest.approx(np.sqrt(3) / 4, rel=1e-14)
    assert np.abs(eg.basis_gradients.sum(axis=0)).max() < 1e-12
    assert np.abs(eg.basis_gradients @ eg.normal).max() < 1e-12
    # hat gradients reproduce the gradient of affine restrictions
    affine_vals = verts @ np.array([2.0, -1.0, 0.0]) + 3.0
    recon = (affine_vals[:, None] * eg.basis_gradients).sum(axis=0)
    P = np.eye(3) - np.outer(eg.normal, eg.normal)
    assert np.allclose(recon, P @ np.array([2.0, -1.0, 0.0]), atol=1e-12)


def test_element_geometry_bad_index(sphere_meshes):
    with pytest.raises(ge.MeshError):
        ge.element_geometry(sphere_meshes[0], 999)


def test_degenerate_triangle_rejected():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [2, 0, 0]])
    mesh = ge.SurfaceMesh(verts, np.array([[0, 1, 2]]), label="degenerate")
    with pytest.raises(ge.MeshError):
        mesh.element_arrays()


def test_orientation_validation_catches_flip(sphere_meshes):
    m = sphere_meshes[0]
    tris = m.triangles.copy()
    tris[0] = tris[0][[0, 2, 1]]
    bad = ge.SurfaceMesh(m.vertices, tris, label="flipped")
    with pytest.raises(ge.MeshError):
        bad.validate()


def test_open_mesh_rejected():
    verts = np.array([[0.0, 0, 0], [1, 0, 0], [0, 1, 0], [1, 1, 0]])
    tris = np.array([[0, 1, 2], [1, 3, 2]])
    open_mesh = ge.SurfaceMesh(verts, tris, label="open")
    with pytest.raises(ge.MeshError):
        open_mesh.validate()


def test_unknown_preset(sphere_atlas):
    with pytest.raises(ge.MeshError):
        ge.build_mesh(sphere_atlas, "cube", 1)


def test_vtk_export_roundtrip(tmp_path, sphere_meshes):
    mesh = sphere_meshes[1]
    path = tmp_path / "mesh.vtk"
    ge.write_vtk(mesh, path, point_data={"height": mesh.vertices[:, 2]})
    lines = path.read_text().splitlines()
    assert lines[0].startswith("# vtk DataFile")
    assert lines[3] == "DATASET POLYDATA"
    assert f"POINTS {mesh.n_vertices} double" in lines
    assert f"POLYGONS {mesh.n_triangles} {4 * mesh.n_triangles}" in lines
    assert f"POINT_DATA {mesh.n_vertices}" in lines
    pts_start = lines.index(f"POINTS {mesh.n_vertices} double") + 1
    first = np.array(lines[pts_start].split(), dtype=float)
    assert np.allclose(first, mesh.vertices[0])


def test_csv_export_roundtrip(tmp_path, sphere_meshes):
    mesh = sphere_meshes[0]
    vp, tp = tmp_path / "v.csv", tmp_path / "t.csv"
    ge.write_csv(mesh, vp, tp)
    verts = np.loadtxt(vp, delimiter=",", skiprows=1)
    tris = np.loadtxt(tp, delimiter=",", skiprows=1, dtype=int)
    assert np.allclose(verts, mesh.vertices)
    assert np.array_equal(tris, mesh.triangles)


def test_meshes_are_immutable(sphere_meshes):
    with pytest.raises(ValueError):
        sphere_meshes[0].vertices[0, 0] = 7.0
