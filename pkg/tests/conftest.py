import numpy as np
import pytest

import gamma_elliptic as ge


@pytest.fixture(scope="session")
def sphere_atlas():
    return ge.sphere_atlas()


@pytest.fixture(scope="session")
def torus_atlas():
    return ge.torus_atlas(2.0, 1.0)


@pytest.fixture(scope="session")
def sphere_meshes(sphere_atlas):
    """Icosahedral hierarchy, levels 0..4 (20 .. 5120 triangles)."""
    meshes = [ge.build_mesh(sphere_atlas, "sphere-icosahedral", 0)]
    for _ in range(4):
        meshes.append(ge.refine(meshes[-1], sphere_atlas))
    return meshes


@pytest.fixture(scope="session")
def torus_meshes(torus_atlas):
    """Torus grid hierarchy, levels 0..2 (384 .. 6144 triangles)."""
    meshes = [ge.build_mesh(torus_atlas, "torus-grid", 1)]
    for _ in range(2):
        meshes.append(ge.refine(meshes[-1], torus_atlas))
    return meshes


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def fd_jacobian(chart, y, h=1e-6):
    """Independent finite-difference Jacobian of a chart map."""
    y = np.asarray(y, dtype=float)
    d = chart.dim
    cols = []
    for k in range(d):
        e = np.zeros(d)
        e[k] = 1.0
        cols.append((chart.map(y + h * e, check=False) - chart.map(y - h * e, check=False)) / (2 * h))
    return np.stack(cols, axis=-1)
