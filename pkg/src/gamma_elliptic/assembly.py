"""P1 Galerkin assembly of the weak forms over a surface mesh.

Coefficients are ambient fields sampled at the quadrature points of the
affine elements (3-point symmetric midpoint rule, degree-2 exact). With the
tangentiality policy on (the default), the matrix coefficient acts through
the element-tangent sandwich P A P + (I - P) and vector coefficients are
projected, so only tangential action enters the forms.

Assembly is single-threaded and deterministic; assembled objects are plain
scipy CSR matrices / numpy vectors and are never mutated afterwards.
"""

from __future__ import annotations

from dataclasses import dataclass, field as dataclass_field
from typing import Optional

import numpy as np
import scipy.io
import scipy.sparse as sp

from .fields import (
    AmbientMatrixField,
    AmbientScalarField,
    AmbientVectorField,
    constant_scalar,
    constant_vector,
    identity_matrix,
)
from ._backend import get_kernels
from .surface_mesh import SurfaceMesh


class AssemblyError(ValueError):
    pass


class CoefficientError(AssemblyError):
    """Coefficient violates ellipticity / tangentiality requirements."""


# Symmetric 3-point rule at edge midpoints: degree-2 exact, equal weights.
QUAD_BARY = np.array([[0.5, 0.5, 0.0], [0.0, 0.5, 0.5], [0.5, 0.0, 0.5]])
PHI_AT_QUAD = QUAD_BARY  # phi_i at quadrature point q is just the barycentric coord


@dataclass
class CoefficientSet:
    """Ambient coefficients of the scalar elliptic operator.

    ``ellipticity`` is the claimed lower bound of the tangential quadratic
    form of A; it is validated against quadrature samples during assembly.
    """

    A: AmbientMatrixField = dataclass_field(default_factory=lambda: identity_matrix(3))
    b: Optional[AmbientVectorField] = None
    c: Optional[AmbientVectorField] = None
    d: Optional[AmbientScalarField] = None
    ellipticity: float = 1.0
    project_tangential: bool = True


@dataclass
class DiscreteField:
    """Vertex coefficient vector of a piecewise-linear function."""

    values: np.ndarray
    mesh_token: str

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=float)
        if self.values.ndim != 1:
            raise AssemblyError("DiscreteField values must be a vector")
        if not np.all(np.isfinite(self.values)):
            raise AssemblyError("DiscreteField values must be finite")

    @classmethod
    def from_values(cls, mesh: SurfaceMesh, values) -> "DiscreteField":
        values = np.asarray(values, dtype=float)
        if values.shape != (mesh.n_vertices,):
            raise AssemblyError("value count does not match mesh vertices")
        return cls(values, mesh.token)

    @classmethod
    def interpolate(cls, mesh: SurfaceMesh, f: AmbientScalarField) -> "DiscreteField":
        return cls.from_values(mesh, f(mesh.vertices))

    def check_mesh(self, mesh: SurfaceMesh):
        if self.mesh_token != mesh.token or len(self.values) != mesh.n_vertices:
            raise AssemblyError("DiscreteField does not belong to this mesh")


@dataclass
class SparseSystem:
    """Square sparse system with an optional mean-value constraint row."""

    matrix: sp.csr_matrix
    rhs: np.ndarray
    constraint: Optional[np.ndarray] = None  # weighted vertex masses (M 1)

    def __post_init__(self):
        n = self.matrix.shape[0]
        if self.matrix.shape != (n, n):
            raise AssemblyError("system matrix must be square")
        if self.rhs.shape != (n,):
            raise AssemblyError("rhs length does not match matrix")
        if self.constraint is not None and self.constraint.shape != (n,):
            raise AssemblyError("constraint row length does not match matrix")


# ---------------------------------------------------------------------------
# Quadrature-point sampling


def quadrature_points(mesh: SurfaceMesh) -> np.ndarray:
    """Coordinates of the rule's points on every element, (nt, q, 3)."""
    p = mesh.vertices[mesh.triangles]  # (nt, 3, 3)
    return np.einsum("qi,tia->tqa", QUAD_BARY, p)


def _element_projections(mesh: SurfaceMesh) -> np.ndarray:
    _, normals, _ = mesh.element_arrays()
    return np.eye(3) - np.einsum("ta,tb->tab", normals, normals)


def _sample_matrix(mesh: SurfaceMesh, A: AmbientMatrixField, project: bool) -> np.ndarray:
    xq = quadrature_points(mesh)
    Aq = A(xq)  # (nt, q, 3, 3)
    if not project:
        return Aq
    P = _element_projections(mesh)[:, None]  # (nt, 1, 3, 3)
    PAP = np.einsum("tqab,tqbc,tqcd->tqad", np.broadcast_to(P, Aq.shape), Aq,
                    np.broadcast_to(P, Aq.shape), optimize=True)
    return PAP + (np.eye(3) - P)


def _sample_vector(mesh: SurfaceMesh, v: AmbientVectorField, project: bool) -> np.ndarray:
    xq = quadrature_points(mesh)
    vq = v(xq)  # (nt, q, 3)
    if not project:
        return vq
    P = _element_projections(mesh)
    return np.einsum("tab,tqb->tqa", P, vq)


def tangential_ellipticity_samples(
    mesh: SurfaceMesh, A: AmbientMatrixField, project: bool = True
) -> np.ndarray:
    """Smallest tangential eigenvalue of sym(A) at every quadrature point."""
    xq = quadrature_points(mesh)
    Aq = A(xq)
    Aq = 0.5 * (Aq + np.swapaxes(Aq, -1, -2))
    P = _element_projections(mesh)[:, None]
    P = np.broadcast_to(P, Aq.shape)
    PAP = np.einsum("tqab,tqbc,tqcd->tqad", P, Aq, P, optimize=True)
    # lift the normal direction above any tangential eigenvalue so the
    # smallest eigenvalue of the lifted matrix is the tangential minimum
    mu = float(np.abs(Aq).sum(axis=(-1, -2)).max()) + 1.0
    lifted = PAP + mu * (np.eye(3) - P)
    return np.linalg.eigvalsh(lifted)[..., 0]


def _scatter_blocks(mesh: SurfaceMesh, blocks: np.ndarray) -> sp.csr_matrix:
    tris = mesh.triangles
    rows = np.repeat(tris, 3, axis=1).ravel()
    cols = np.tile(tris, (1, 3)).ravel()
    n = mesh.n_vertices
    mat = sp.coo_matrix((blocks.ravel(), (rows, cols)), shape=(n, n))
    return mat.tocsr()


# ---------------------------------------------------------------------------
# Bilinear forms


def assemble_stiffness(
    mesh: SurfaceMesh,
    A: Optional[AmbientMatrixField] = None,
    *,
    ellipticity: Optional[float] = None,
    project: bool = True,
) -> sp.csr_matrix:
    """Stiffness matrix of (A grad u, grad v); constants lie in its kernel."""
    if A is None:
        A = identity_matrix(3)
    areas, _, grads = mesh.element_arrays()
    samples = tangential_ellipticity_samples(mesh, A, project)
    smallest = float(samples.min())
    if smallest <= 0.0:
        raise CoefficientError(
            f"tangential ellipticity violated at a quadrature point (min={smallest:.3e})"
        )
    if ellipticity is not None and smallest < 0.9 * ellipticity:
        raise CoefficientError(
            f"sampled tangential ellipticity {smallest:.6g} is below "
            f"0.9 * claimed constant {ellipticity:.6g}"
        )
    Aq = _sample_matrix(mesh, A, project)
    blocks = get_kernels().stiffness_blocks(grads, areas, np.ascontiguousarray(Aq))
    return _scatter_blocks(mesh, blocks)


def assemble_convection_b(
    mesh: SurfaceMesh, b: Optional[AmbientVectorField], *, project: bool = True
) -> sp.csr_matrix:
    """Matrix of the form (u, b . grad v): entries int phi_j (b . grad phi_i)."""
    if b is None:
        return sp.csr_matrix((mesh.n_vertices, mesh.n_vertices))
    areas, _, grads = mesh.element_arrays()
    bq = _sample_vector(mesh, b, project)
    blocks = get_kernels().convection_blocks(
        grads, areas, np.ascontiguousarray(PHI_AT_QUAD), np.ascontiguousarray(bq)
    )
    return _scatter_blocks(mesh, blocks)


def assemble_convection_c(
    mesh: SurfaceMesh, c: Optional[AmbientVectorField], *, project: bool = True
) -> sp.csr_matrix:
    """Matrix of the form ((c . grad u), v): the transpose of assemble_convection_b(c)."""
    return assemble_convection_b(mesh, c, project=project).T.tocsr()


def assemble_mass(mesh: SurfaceMesh, d: Optional[AmbientScalarField] = None) -> sp.csr_matrix:
    """Weighted mass matrix; d=None means unit weight."""
    if d is None:
        d = constant_scalar(1.0)
    areas, _, _ = mesh.element_arrays()
    dq = d(quadrature_points(mesh))
    blocks = get_kernels().mass_blocks(
        areas, np.ascontiguousarray(PHI_AT_QUAD), np.ascontiguousarray(dq)
    )
    return _scatter_blocks(mesh, blocks)


def assemble_load(mesh: SurfaceMesh, f: AmbientScalarField) -> np.ndarray:
    """Load vector with entries int f phi_i; entries sum to int f."""
    areas, _, _ = mesh.element_arrays()
    fq = f(quadrature_points(mesh))
    entries = get_kernels().load_entries(
        areas, np.ascontiguousarray(PHI_AT_QUAD), np.ascontiguousarray(fq)
    )
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), entries.ravel())
    return out


def assemble_load_div(
    mesh: SurfaceMesh, F: AmbientVectorField, *, project: bool = True
) -> np.ndarray:
    """Divergence-form load with entries -int F . grad phi_i; entries sum to 0."""
    areas, _, grads = mesh.element_arrays()
    Fq = _sample_vector(mesh, F, project)
    entries = get_kernels().load_div_entries(grads, areas, np.ascontiguousarray(Fq))
    out = np.zeros(mesh.n_vertices)
    np.add.at(out, mesh.triangles.ravel(), entries.ravel())
    return out


def assemble_operator(mesh: SurfaceMesh, coeffs: CoefficientSet) -> sp.csr_matrix:
    """Full operator K_A + G_b + G_c + M_d of the general weak form."""
    T = assemble_stiffness(
        mesh, coeffs.A, ellipticity=coeffs.ellipticity, project=coeffs.project_tangential
    )
    if coeffs.b is not None:
        T = T + assemble_convection_b(mesh, coeffs.b, project=coeffs.project_tangential)
    if coeffs.c is not None:
        T = T + assemble_convection_c(mesh, coeffs.c, project=coeffs.project_tangential)
    if coeffs.d is not None:
        T = T + assemble_mass(mesh, coeffs.d)
    return T.tocsr()


# ---------------------------------------------------------------------------
# Norms and functionals


def discrete_norm(mesh: SurfaceMesh, field: DiscreteField, m: int = 1, p: float = 2.0) -> float:
    """Discrete W^{m,p} norm (sum_{k<=m} ||grad^k u||_p^p)^{1/p}, m in {0, 1}."""
    if p <= 1.0:
        raise AssemblyError("discrete_norm requires p > 1")
    if m not in (0, 1):
        raise AssemblyError("discrete_norm supports m in {0, 1}")
    field.check_mesh(mesh)
    areas, _, grads = mesh.element_arrays()
    u_tri = field.values[mesh.triangles]  # (nt, 3)
    kernels = get_kernels()
    uq = np.ascontiguousarray(u_tri @ PHI_AT_QUAD.T)  # (nt, q)
    total = kernels.power_sum(areas, uq, p)
    if m == 1:
        gu = np.einsum("ti,tia->ta", u_tri, grads)
        gnorm = np.linalg.norm(gu, axis=1)
        q = PHI_AT_QUAD.shape[0]
        gq = np.ascontiguousarray(np.repeat(gnorm[:, None], q, axis=1))
        total += kernels.power_sum(areas, gq, p)
    return float(total ** (1.0 / p))


def mean_value(mesh: SurfaceMesh, field: DiscreteField, normalized: bool = False) -> float:
    """The surface integral of the P1 function (1^T M_1 u); with
    ``normalized`` the integral is divided by the mesh area."""
    field.check_mesh(mesh)
    areas, _, _ = mesh.element_arrays()
    u_tri = field.values[mesh.triangles]
    uq = u_tri @ PHI_AT_QUAD.T
    q = PHI_AT_QUAD.shape[0]
    integral = float(np.einsum("t,tq->", areas / q, uq))
    return integral / mesh.total_area() if normalized else integral


def mass_constraint_row(mesh: SurfaceMesh) -> np.ndarray:
    """Weighted vertex masses M_1 . 1, i.e. entries int phi_i; sums to the area."""
    return assemble_load(mesh, constant_scalar(1.0))


def export_matrix_market(matrix, path) -> None:
    """Write a sparse matrix (or a dense array) in Matrix Market format."""
    scipy.io.mmwrite(str(path), sp.coo_matrix(matrix))


ZERO_SCALAR = constant_scalar(0.0)
ZERO_VECTOR = constant_vector((0.0, 0.0, 0.0))
