"""High-level solvers, well-posedness checkers, and stability estimators.

Mean-zero problems are solved in saddle-point form with a single Lagrange
multiplier row (the weighted vertex masses); unconstrained problems dispatch
to conjugate gradients when symmetric and to a transpose-free nonsymmetric
Krylov method (BiCGStab) otherwise. Solutions of constrained problems are
re-centered exactly after the Krylov solve.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass, field as dataclass_field
from typing import Optional, Union

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .assembly import (
    CoefficientSet,
    DiscreteField,
    SparseSystem,
    assemble_load,
    assemble_load_div,
    assemble_mass,
    assemble_operator,
    assemble_stiffness,
    discrete_norm,
    mass_constraint_row,
    mean_value,
    quadrature_points,
    tangential_ellipticity_samples,
)
from .fields import AmbientMatrixField, AmbientScalarField, AmbientVectorField
from .surface_mesh import SurfaceMesh


class SolverError(RuntimeError):
    pass


class ConditionViolationError(SolverError):
    """A well-posedness precondition is violated and no override was given."""

    def __init__(self, message: str, report: "ConditionReport"):
        super().__init__(message)
        self.report = report


VERDICT_HOLDS = "holds-sufficiently"
VERDICT_VIOLATED = "violated"
VERDICT_INCONCLUSIVE = "inconclusive"


@dataclass
class ReactionVerdict:
    verdict: str
    lam: Optional[float] = None
    witness_measure: float = 0.0

    def to_dict(self):
        return {
            "verdict": self.verdict,
            "lambda": self.lam,
            "witness_measure": self.witness_measure,
        }


@dataclass
class ConditionReport:
    """Ellipticity estimate plus reaction-condition verdicts for both routes."""

    ellipticity: float
    via_b: ReactionVerdict
    via_c: ReactionVerdict
    divfree_residual_c: float = 0.0

    @property
    def both_routes_violated(self) -> bool:
        return (
            self.via_b.verdict == VERDICT_VIOLATED
            and self.via_c.verdict == VERDICT_VIOLATED
        )

    def to_dict(self):
        return {
            "ellipticity": self.ellipticity,
            "reaction_via_b": self.via_b.to_dict(),
            "reaction_via_c": self.via_c.to_dict(),
            "divfree_residual_c": self.divfree_residual_c,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


@dataclass
class SolveReport:
    solution: DiscreteField
    multiplier: Optional[float]
    iterations: int
    residual: float
    wall_time: float
    diagnostics: dict = dataclass_field(default_factory=dict)

    def to_dict(self):
        return {
            "solution": self.solution.values.tolist(),
            "mesh": self.solution.mesh_token,
            "multiplier": self.multiplier,
            "iterations": self.iterations,
            "residual": self.residual,
            "wall_time": self.wall_time,
            "diagnostics": self.diagnostics,
        }

    def to_json(self, **kwargs) -> str:
        return json.dumps(self.to_dict(), **kwargs)


# ---------------------------------------------------------------------------
# Linear algebra layer


@dataclass
class KrylovResult:
    x: np.ndarray
    iterations: int
    residual: float
    converged: bool
    method: str


def _jacobi(diag: np.ndarray) -> spla.LinearOperator:
    d = np.where(np.abs(diag) > 1e-300, np.abs(diag), 1.0)
    inv = 1.0 / d
    n = len(d)
    return spla.LinearOperator((n, n), matvec=lambda v: inv * v)


def _is_symmetric(A: sp.spmatrix) -> bool:
    diff = abs(A - A.T)
    scale = abs(A).max() or 1.0
    return diff.max() <= 1e-12 * scale


def solve_linear_system(
    system: SparseSystem, tol: float = 1e-10, max_iter: Optional[int] = None
) -> KrylovResult:
    """Krylov solve with method dispatch; constrained systems are solved in
    bordered saddle-point form. Returns the best iterate plus a failure flag
    rather than raising."""
    A = system.matrix.tocsr()
    b = system.rhs
    n = A.shape[0]
    if system.constraint is not None:
        c = system.constraint
        A = sp.bmat(
            [[A, c.reshape(-1, 1)], [c.reshape(1, -1), None]], format="csr"
        )
        b = np.concatenate([b, [0.0]])
    m = A.shape[0]
    if max_iter is None:
        max_iter = 10 * m
    bnorm = float(np.linalg.norm(b))
    if bnorm == 0.0:
        return KrylovResult(np.zeros(n), 0, 0.0, True, "trivial")

    diag = A.diagonal().copy()
    if system.constraint is not None:
        diag[-1] = max(float(np.mean(np.abs(diag[:-1]))), 1e-300)
    M = _jacobi(diag)

    count = {"n": 0}

    def cb(_):
        count["n"] += 1

    symmetric = _is_symmetric(A)
    if symmetric and system.constraint is None:
        fn, method = spla.cg, "cg"
    elif symmetric:
        fn, method = spla.minres, "minres"
    else:
        fn, method = spla.bicgstab, "bicgstab"

    # The solvers' internal stopping estimates can be loose (notably MINRES);
    # enforce the true relative residual by restarting from the best iterate
    # with a tightened tolerance.
    x = None
    res = np.inf
    rtol_eff = tol
    progressed = -1
    while count["n"] < max_iter and count["n"] > progressed:
        progressed = count["n"]
        x, info = fn(A, b, x0=x, rtol=rtol_eff, maxiter=max_iter - count["n"], M=M, callback=cb)
        res = float(np.linalg.norm(b - A @ x) / bnorm)
        if res <= tol or info < 0:  # done, or hard breakdown
            break
        rtol_eff = max(rtol_eff * max(min(0.3, 0.3 * tol / res), 1e-6), 1e-16)
    converged = res <= tol
    return KrylovResult(x[:n], count["n"], res, converged, method)


def orthonormal_complement(c: np.ndarray) -> np.ndarray:
    """Orthonormal basis (n x (n-1)) of the hyperplane {x : c . x = 0}."""
    c = np.asarray(c, dtype=float)
    n = len(c)
    v = c / np.linalg.norm(c)
    w = v.copy()
    w[0] -= 1.0  # reflector mapping v -> e_1
    nw = np.linalg.norm(w)
    if nw < 1e-14:
        return np.eye(n)[:, 1:]
    w /= nw
    H = np.eye(n) - 2.0 * np.outer(w, w)
    return H[:, 1:]


# ---------------------------------------------------------------------------
# Mean-zero (divergence-form) solves


def _resolve_load(mesh: SurfaceMesh, load) -> np.ndarray:
    if isinstance(load, AmbientScalarField):
        vec = assemble_load(mesh, load)
        total = abs(float(vec.sum()))
        norm = float(np.linalg.norm(vec))
        if norm > 0 and total > 1e-8 * norm:
            raise SolverError(
                f"scalar load is not discretely mean-zero (sum={total:.3e}, norm={norm:.3e})"
            )
        return vec
    if isinstance(load, AmbientVectorField):
        return assemble_load_div(mesh, load)
    vec = np.asarray(load, dtype=float)
    if vec.shape != (mesh.n_vertices,):
        raise SolverError("load vector length does not match mesh")
    total, norm = abs(float(vec.sum())), float(np.linalg.norm(vec))
    if norm > 0 and total > 1e-8 * norm:
        raise SolverError("load vector is not discretely mean-zero")
    return vec


def _recenter(mesh: SurfaceMesh, values: np.ndarray, c: np.ndarray) -> np.ndarray:
    area = float(c.sum())
    return values - (float(c @ values) / area)


def solve_laplace_beltrami(
    mesh: SurfaceMesh,
    A: Optional[AmbientMatrixField] = None,
    load: Union[AmbientScalarField, AmbientVectorField, np.ndarray] = None,
    tol: float = 1e-10,
    ellipticity: Optional[float] = None,
    max_iter: Optional[int] = None,
) -> SolveReport:
    """Mean-zero solve of the divergence-form problem (A grad u, grad v) = <f, v>."""
    t0 = time.perf_counter()
    K = assemble_stiffness(mesh, A, ellipticity=ellipticity)
    rhs = _resolve_load(mesh, load)
    c = mass_constraint_row(mesh)
    result = solve_linear_system(SparseSystem(K, rhs, c), tol=tol, max_iter=max_iter)
    if not result.converged:
        raise SolverError(
            f"Krylov solve ({result.method}) failed: residual {result.residual:.3e} "
            f"after {result.iterations} iterations"
        )
    values = _recenter(mesh, result.x, c)
    u = DiscreteField.from_values(mesh, values)
    h1 = discrete_norm(mesh, u, 1, 2)
    load_norm = float(np.linalg.norm(rhs))
    report = SolveReport(
        solution=u,
        multiplier=float(c @ result.x / max(float(c.sum()), 1e-300)),
        iterations=result.iterations,
        residual=result.residual,
        wall_time=time.perf_counter() - t0,
        diagnostics={
            "method": result.method,
            "h1_norm": h1,
            "load_norm": load_norm,
            "apriori_quotient": h1 / load_norm if load_norm > 0 else 0.0,
            "mean_value": mean_value(mesh, u),
        },
    )
    return report


def solve_biharmonic(
    mesh: SurfaceMesh,
    f: AmbientScalarField,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
) -> SolveReport:
    """Fourth-order solve by splitting into two successive mean-zero
    Laplace-Beltrami solves; signs are fixed so the composition inverts the
    squared operator."""
    t0 = time.perf_counter()
    first = solve_laplace_beltrami(mesh, load=f, tol=tol, max_iter=max_iter)
    inner = first.solution.values
    c = mass_constraint_row(mesh)
    inner = _recenter(mesh, inner, c)
    K = assemble_stiffness(mesh)
    M = assemble_mass(mesh)
    rhs2 = M @ inner  # mean-zero: the recentered stage couples through the mass pairing
    second_sys = SparseSystem(K, rhs2, c)
    result = solve_linear_system(second_sys, tol=tol, max_iter=max_iter)
    if not result.converged:
        raise SolverError("second stage of biharmonic splitting failed")
    values = _recenter(mesh, result.x, c)
    u = DiscreteField.from_values(mesh, values)
    return SolveReport(
        solution=u,
        multiplier=None,
        iterations=first.iterations + result.iterations,
        residual=max(first.residual, result.residual),
        wall_time=time.perf_counter() - t0,
        diagnostics={
            "stage_residuals": [first.residual, result.residual],
            "intermediate_h1": first.diagnostics["h1_norm"],
        },
    )


# ---------------------------------------------------------------------------
# General elliptic solves


def check_ellipticity(
    coeffs: Union[CoefficientSet, AmbientMatrixField],
    mesh: SurfaceMesh,
    samples: Optional[int] = None,
) -> float:
    """Smallest sampled tangential eigenvalue of sym(A) over quadrature points."""
    if isinstance(coeffs, CoefficientSet):
        A, project = coeffs.A, coeffs.project_tangential
    else:
        A, project = coeffs, True
    vals = tangential_ellipticity_samples(mesh, A, project).ravel()
    if samples is not None:
        if samples < 1:
            raise ValueError("samples must be >= 1")
        stride = max(1, len(vals) // samples)
        vals = vals[::stride]
    return float(vals.min())


def check_div_free(mesh: SurfaceMesh, c: AmbientVectorField, *, project: bool = True) -> float:
    """max_i |int c . grad phi_i| over all vertex hats."""
    if c is None:
        return 0.0
    return float(np.abs(assemble_load_div(mesh, c, project=project)).max())


def _reaction_route(
    mesh: SurfaceMesh,
    d: Optional[AmbientScalarField],
    vec: Optional[AmbientVectorField],
    project: bool,
) -> ReactionVerdict:
    """Verdict for one clause: int(d w + vec . grad w) >= lambda int_M w for
    all nonnegative w. Certified only through the sufficient route (vec = 0,
    d >= 0 with a positive-measure witness set); hat functions are sampled as
    nonnegative test candidates."""
    areas, _, _ = mesh.element_arrays()
    xq = quadrature_points(mesh)
    w_q = np.repeat(areas[:, None] / xq.shape[1], xq.shape[1], axis=1)

    dq = d(xq) if d is not None else np.zeros(xq.shape[:-1])
    dmax = float(dq.max())
    dmin = float(dq.min())
    vec_scale = 0.0
    if vec is not None:
        vec_scale = float(np.linalg.norm(vec(xq), axis=-1).max())

    # hat-function test: h_i = int(d phi_i + vec . grad phi_i)
    hat = assemble_load(mesh, d) if d is not None else np.zeros(mesh.n_vertices)
    if vec is not None:
        hat = hat - assemble_load_div(mesh, vec, project=project)
    hat_mass = mass_constraint_row(mesh)
    scale = float(hat_mass.max()) * (1.0 + abs(dmax) + abs(dmin) + vec_scale)
    hats_fail = bool(np.any(hat < -1e-10 * scale))

    witness_possible = vec_scale <= 1e-12 * (1.0 + abs(dmax)) and dmin >= -1e-12 * (
        1.0 + abs(dmax)
    )
    if witness_possible and dmax > 1e-14:
        # pick lambda maximizing lambda * |{d >= lambda}| over sampled candidates
        candidates = np.unique(dq[dq > 0])
        if len(candidates) > 64:
            candidates = np.quantile(candidates, np.linspace(0.0, 1.0, 64))
        best_lam, best_measure, best_score = 0.0, 0.0, -1.0
        for lam in candidates:
            measure = float(w_q[dq >= lam - 1e-15].sum())
            score = lam * measure
            if score > best_score and measure > 0:
                best_lam, best_measure, best_score = float(lam), measure, score
        if best_measure > 0:
            return ReactionVerdict(VERDICT_HOLDS, best_lam, best_measure)

    if witness_possible and dmax <= 1e-14:
        # both terms vanish identically: the clause cannot hold for any
        # positive lambda (constants are in the kernel)
        return ReactionVerdict(VERDICT_VIOLATED)
    if hats_fail:
        return ReactionVerdict(VERDICT_VIOLATED)
    return ReactionVerdict(VERDICT_INCONCLUSIVE)


def check_reaction_condition(coeffs: CoefficientSet, mesh: SurfaceMesh) -> ConditionReport:
    """Evaluate both reaction clauses plus ellipticity and div-free residual."""
    project = coeffs.project_tangential
    via_b = _reaction_route(mesh, coeffs.d, coeffs.b, project)
    via_c = _reaction_route(mesh, coeffs.d, coeffs.c, project)
    return ConditionReport(
        ellipticity=check_ellipticity(coeffs, mesh),
        via_b=via_b,
        via_c=via_c,
        divfree_residual_c=check_div_free(mesh, coeffs.c, project=project),
    )


def solve_general_elliptic(
    mesh: SurfaceMesh,
    coeffs: CoefficientSet,
    f: AmbientScalarField,
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
    override_conditions: bool = False,
    divergence_load: Optional[AmbientVectorField] = None,
) -> SolveReport:
    """Unconstrained solve of the full weak form on the whole P1 space."""
    t0 = time.perf_counter()
    condition = check_reaction_condition(coeffs, mesh)
    if condition.both_routes_violated and not override_conditions:
        raise ConditionViolationError(
            "both reaction clauses are violated; pass override_conditions=True to proceed",
            condition,
        )
    T = assemble_operator(mesh, coeffs)
    rhs = assemble_load(mesh, f)
    if divergence_load is not None:
        rhs = rhs + assemble_load_div(
            mesh, divergence_load, project=coeffs.project_tangential
        )
    result = solve_linear_system(SparseSystem(T, rhs), tol=tol, max_iter=max_iter)
    if not result.converged:
        raise SolverError(
            f"Krylov solve ({result.method}) failed: residual {result.residual:.3e}"
        )
    u = DiscreteField.from_values(mesh, result.x)
    h1 = discrete_norm(mesh, u, 1, 2)
    load_norm = float(np.linalg.norm(rhs))
    return SolveReport(
        solution=u,
        multiplier=None,
        iterations=result.iterations,
        residual=result.residual,
        wall_time=time.perf_counter() - t0,
        diagnostics={
            "method": result.method,
            "h1_norm": h1,
            "load_norm": load_norm,
            "apriori_quotient": h1 / load_norm if load_norm > 0 else 0.0,
            "condition_report": condition.to_dict(),
        },
    )


def solve_divfree_cd(
    mesh: SurfaceMesh,
    A: Optional[AmbientMatrixField],
    c: AmbientVectorField,
    load: Union[AmbientScalarField, AmbientVectorField, np.ndarray],
    tol: float = 1e-10,
    max_iter: Optional[int] = None,
    divfree_threshold: float = 0.1,
) -> SolveReport:
    """Mean-zero convection-diffusion solve for weakly divergence-free c.

    The gate compares the hat residual max_i |int c . grad phi_i| against
    ``divfree_threshold`` times the largest hat mass; exactly div-free fields
    sit orders of magnitude below the default at every preset level, while a
    generic projected field sits above it.
    """
    t0 = time.perf_counter()
    residual_c = check_div_free(mesh, c)
    scale = float(mass_constraint_row(mesh).max())
    if residual_c > divfree_threshold * scale:
        raise SolverError(
            f"convection field is not discretely divergence-free "
            f"(residual {residual_c:.3e} > {divfree_threshold:.1e} * {scale:.3e})"
        )
    from .assembly import assemble_convection_c  # local import to avoid cycle noise

    K = assemble_stiffness(mesh, A)
    Gc = assemble_convection_c(mesh, c)
    T = (K + Gc).tocsr()
    rhs = _resolve_load(mesh, load)
    crow = mass_constraint_row(mesh)
    result = solve_linear_system(SparseSystem(T, rhs, crow), tol=tol, max_iter=max_iter)
    if not result.converged:
        raise SolverError(
            f"Krylov solve ({result.method}) failed: residual {result.residual:.3e}"
        )
    values = _recenter(mesh, result.x, crow)
    u = DiscreteField.from_values(mesh, values)
    skew = float(values @ ((Gc + Gc.T) @ values)) / 2.0
    return SolveReport(
        solution=u,
        multiplier=float(crow @ result.x / max(float(crow.sum()), 1e-300)),
        iterations=result.iterations,
        residual=result.residual,
        wall_time=time.perf_counter() - t0,
        diagnostics={
            "method": result.method,
            "divfree_residual": residual_c,
            "coercivity_margin": check_ellipticity(A, mesh) if A is not None else 1.0,
            "skew_energy": skew,
            "mean_value": mean_value(mesh, u),
        },
    )


# ---------------------------------------------------------------------------
# Spectral diagnostics


def _dense(M) -> np.ndarray:
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


def estimate_inf_sup(
    T, X, Y, tol: float = 1e-10, max_iter: int = 500
) -> float:
    """Smallest generalized singular value of T in the (X, Y) norm pair.

    Runs inverse iteration on the normal equations T^t Y^{-1} T w = s^2 X w.
    Intended for desk-scale diagnostics: operands are densified.
    """
    Td, Xd, Yd = _dense(T), _dense(X), _dense(Y)
    n = Td.shape[1]
    for name, M in (("X", Xd), ("Y", Yd)):
        eig = np.linalg.eigvalsh(0.5 * (M + M.T))
        if eig[0] <= 0:
            raise SolverError(f"norm matrix {name} is not positive definite")
    YinvT = sla.solve(Yd, Td, assume_a="pos")
    N = Td.T @ YinvT
    N = 0.5 * (N + N.T)
    lu, piv = sla.lu_factor(N)
    rng = np.random.default_rng(12345)
    w = rng.standard_normal(n)
    w /= np.sqrt(w @ (Xd @ w))
    sigma2 = float(w @ (N @ w))
    for _ in range(max_iter):
        z = sla.lu_solve((lu, piv), Xd @ w)
        z /= np.sqrt(z @ (Xd @ z))
        new_sigma2 = float(z @ (N @ z)) / float(z @ (Xd @ z))
        done = abs(new_sigma2 - sigma2) <= tol * max(abs(new_sigma2), 1e-300)
        w, sigma2 = z, new_sigma2
        if done:
            break
    return float(np.sqrt(max(sigma2, 0.0)))


def fredholm_kernel(T) -> tuple[float, np.ndarray]:
    """Smallest singular value of T and the corresponding right singular
    vector (the kernel candidate when the value is numerically zero)."""
    Td = _dense(T)
    _, svals, vt = np.linalg.svd(Td)
    return float(svals[-1]), vt[-1]


def restricted_mean_zero(mesh: SurfaceMesh, *matrices):
    """Restrict matrices to the discrete mean-zero subspace.

    Returns (Z, restricted...) where Z is an orthonormal basis of the
    complement of the weighted-mass constraint row.
    """
    c = mass_constraint_row(mesh)
    Z = orthonormal_complement(c)
    out = [Z.T @ _dense(M) @ Z for M in matrices]
    return (Z, *out)
