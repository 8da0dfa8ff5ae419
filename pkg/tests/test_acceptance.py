"""Acceptance suite: every criterion at its stated tolerance.

Run with ``pytest tests/test_acceptance.py -v -s`` to see one PASS/FAIL line
per criterion.
"""

import time

import numpy as np
import pytest
import scipy.sparse.linalg as spla

import gamma_elliptic as ge
from gamma_elliptic import geometry as geo
from gamma_elliptic import verification as vf
from gamma_elliptic.assembly import CoefficientSet


def record(name: str, ok: bool, detail: str):
    print(f"[{'PASS' if ok else 'FAIL'}] {name}: {detail}")
    assert ok, f"{name}: {detail}"


@pytest.fixture(scope="module")
def sphere_atlas_acc():
    return ge.sphere_atlas()


@pytest.fixture(scope="module")
def sphere_hierarchy(sphere_atlas_acc):
    """Icosahedral levels 0..6 (20 .. 81920 triangles)."""
    meshes = [ge.build_mesh(sphere_atlas_acc, "sphere-icosahedral", 0)]
    for _ in range(6):
        meshes.append(ge.refine(meshes[-1], sphere_atlas_acc))
    return meshes


def test_criterion_1_sphere_eigen_convergence(sphere_hierarchy):
    """L2 rate in [1.9, 2.1], H1 rate in [0.9, 1.1] on 4 levels up to 20480
    triangles, within 60 s."""
    t0 = time.perf_counter()
    case = vf.sphere_eigen_case(levels_base=2)  # 320 -> 20480 triangles
    report = vf.convergence_study(
        case, levels=4, rate_window_l2=(1.9, 2.1), rate_window_h1=(0.9, 1.1)
    )
    elapsed = time.perf_counter() - t0
    ok = (
        report.passed is True
        and 1.9 <= report.rate_l2 <= 2.1
        and 0.9 <= report.rate_h1 <= 1.1
        and report.levels[-1].dofs == 10242
        and elapsed < 60.0
    )
    record(
        "criterion 1 (sphere eigenproblem convergence)",
        ok,
        f"L2 rate {report.rate_l2:.3f}, H1 rate {report.rate_h1:.3f}, {elapsed:.1f}s",
    )


def test_criterion_2_torus_general_convergence():
    """Variable-A + rotational-c + unit-d manufactured solve on the torus."""
    t0 = time.perf_counter()
    case = vf.torus_general_case()
    report = vf.convergence_study(
        case, levels=4, rate_window_l2=(1.9, 2.1), rate_window_h1=(0.9, 1.1)
    )
    elapsed = time.perf_counter() - t0
    ok = (
        report.passed is True
        and 1.9 <= report.rate_l2 <= 2.1
        and 0.9 <= report.rate_h1 <= 1.1
        and elapsed < 120.0
    )
    record(
        "criterion 2 (torus general elliptic convergence)",
        ok,
        f"L2 rate {report.rate_l2:.3f}, H1 rate {report.rate_h1:.3f}, {elapsed:.1f}s",
    )


def test_criterion_3_operator_identities(sphere_hierarchy, sphere_atlas_acc):
    """Adjoint transpose identity, constant-kernel row sums, projection
    idempotence/consistency at 1000 random points."""
    mesh = sphere_hierarchy[3]
    A = ge.matrix_from_scalars(
        [
            [ge.parse_expression("2 + 0.5*x1^2"), ge.parse_expression("0.3*x3"),
             ge.parse_expression("0")],
            [ge.parse_expression("-0.3*x3"), ge.parse_expression("2"),
             ge.parse_expression("0.1*x2")],
            [ge.parse_expression("0"), ge.parse_expression("0.1*x2"),
             ge.parse_expression("2 + x2^2")],
        ]
    )
    b = ge.rotation_field()
    c = ge.vector_from_scalars(
        [ge.parse_expression("x3"), ge.parse_expression("0.2"), ge.parse_expression("x1")]
    )
    d = ge.parse_expression("1 + 0.5*x1")
    T1 = ge.assemble_operator(mesh, CoefficientSet(A=A, b=b, c=c, d=d, ellipticity=0.5))
    T2 = ge.assemble_operator(
        mesh, CoefficientSet(A=ge.transpose_matrix(A), b=c, c=b, d=d, ellipticity=0.5)
    )
    scale = abs(T1).max()
    adjoint_err = abs(T1.T - T2).max()

    K = ge.assemble_stiffness(mesh)
    row_sum_err = np.abs(K @ np.ones(mesh.n_vertices)).max()
    k_scale = abs(K).max()

    rng = np.random.default_rng(2024)
    pts = ge.random_surface_points(sphere_atlas_acc, 1000, rng)
    idx, y = sphere_atlas_acc.locate(pts)
    proj_err = 0.0
    for k, chart in enumerate(sphere_atlas_acc.charts):
        mask = idx == k
        if not mask.any():
            continue
        P = ge.tangential_projection(chart, y[mask])
        nu = ge.unit_normal(chart, y[mask])
        idem = np.abs(np.einsum("...ab,...bc->...ac", P, P) - P).max()
        cons = np.abs(P - (np.eye(3) - np.einsum("...a,...b->...ab", nu, nu))).max()
        proj_err = max(proj_err, idem, cons)

    ok = (
        adjoint_err <= 1e-12 * scale
        and row_sum_err <= 1e-12 * k_scale
        and proj_err <= 1e-10
    )
    record(
        "criterion 3 (operator identities)",
        ok,
        f"adjoint {adjoint_err:.2e} (scale {scale:.2e}), row sums {row_sum_err:.2e}, "
        f"projection {proj_err:.2e}",
    )


def test_criterion_4_fredholm_degeneracy(sphere_hierarchy):
    """Pure diffusion has exactly the constant near-null direction; adding
    unit reaction removes it."""
    mesh = sphere_hierarchy[3]
    K = ge.assemble_stiffness(mesh)
    svals = np.linalg.svd(K.toarray(), compute_uv=False)
    near_null = int(np.sum(svals <= 1e-10 * svals[0]))
    smin, kernel = ge.fredholm_kernel(K)
    cv = float(np.std(kernel) / abs(np.mean(kernel)))

    M = ge.assemble_mass(mesh)
    smin_reg, _ = ge.fredholm_kernel(K + M)
    mass_scale = float(spla.eigsh(M, k=1, which="SA", return_eigenvectors=False)[0])

    ok = (
        near_null == 1
        and smin <= 1e-10 * svals[0]
        and cv <= 1e-6
        and smin_reg >= 0.5 * mass_scale
    )
    record(
        "criterion 4 (Fredholm degeneracy)",
        ok,
        f"near-null count {near_null}, kernel cv {cv:.2e}, "
        f"regularized smin {smin_reg:.3e} vs mass scale {mass_scale:.3e}",
    )


def test_criterion_5_skew_symmetry(sphere_hierarchy):
    """Div-free residual decays at rate >= 1.5; quadratic skew energy bounded
    by 10 x residual for 20 random vectors."""
    rot = ge.rotation_field()
    hs, res = [], []
    for mesh in sphere_hierarchy[2:5]:
        hs.append(ge.mesh_size(mesh))
        res.append(ge.check_div_free(mesh, rot))
    rate = vf.fit_rate(hs, res)

    mesh = sphere_hierarchy[3]
    eps_h = ge.check_div_free(mesh, rot)
    Gc = ge.assemble_convection_c(mesh, rot)
    S = (Gc + Gc.T).tocsr()
    rng = np.random.default_rng(555)
    worst = 0.0
    for _ in range(20):
        u = rng.standard_normal(mesh.n_vertices)
        worst = max(worst, abs(u @ (S @ u)) / (eps_h * (u @ u)))
    ok = rate >= 1.5 and worst <= 10.0
    record(
        "criterion 5 (skew-symmetry / div-free)",
        ok,
        f"residual rate {rate:.2f}, worst energy ratio {worst:.3f} (bound 10)",
    )


def test_criterion_6_integration_by_parts(sphere_hierarchy, sphere_atlas_acc):
    """Three-term identity residual decays at rate >= 1 and is <= 1e-3 at the
    finest level."""
    u = ge.parse_expression("x3")
    phi = ge.constant_vector((0.0, 0.0, 1.0))
    hs, res = [], []
    for mesh in sphere_hierarchy[2:7]:
        hs.append(ge.mesh_size(mesh))
        res.append(vf.ibp_residual_test(mesh, sphere_atlas_acc, u, phi))
    rate = vf.fit_rate(hs, res)
    ok = rate >= 1.0 and res[-1] <= 1e-3
    record(
        "criterion 6 (integration by parts)",
        ok,
        f"rate {rate:.2f}, finest residual {res[-1]:.2e}",
    )


def test_criterion_7_biharmonic_splitting(sphere_hierarchy, sphere_atlas_acc):
    """f = 4 x3 drives the splitting solver to u = x3 at L2 rate >= 1.9."""
    f = ge.parse_expression("4*x3")
    exact = ge.parse_expression("x3")
    hs, errs = [], []
    for mesh in sphere_hierarchy[2:5]:
        rep = ge.solve_biharmonic(mesh, f, tol=1e-10)
        l2, _ = vf.errors_against_exact(mesh, rep.solution, exact, sphere_atlas_acc)
        hs.append(ge.mesh_size(mesh))
        errs.append(l2)
    rate = vf.fit_rate(hs, errs)
    ok = rate >= 1.9
    record("criterion 7 (biharmonic splitting)", ok, f"L2 rate {rate:.3f}")


def test_criterion_8_inf_sup_stability(sphere_hierarchy):
    """Discrete inf-sup constant varies by <= 1.5x over 3 refinements."""
    values = []
    for mesh in sphere_hierarchy[1:4]:
        K = ge.assemble_stiffness(mesh)
        M = ge.assemble_mass(mesh)
        _, Kr, Hr = ge.restricted_mean_zero(mesh, K, K + M)
        values.append(ge.estimate_inf_sup(Kr, Hr, Hr))
    spread = max(values) / min(values)
    ok = spread <= 1.5
    record(
        "criterion 8 (inf-sup stability)",
        ok,
        f"alpha_h = {[round(v, 4) for v in values]}, max/min {spread:.3f}",
    )


def test_criterion_9_lp_stability_sweep():
    """||u_h||_{1,p} / ||f||_{0,p} varies by <= 2x across levels for each p."""
    case = vf.sphere_eigen_case()
    sweep = vf.lp_stability_sweep(case, [1.5, 2.0, 3.0, 4.0], levels=3)
    spreads = sweep["max_over_min"]
    ok = all(spreads[p] <= 2.0 for p in (1.5, 2.0, 3.0, 4.0))
    record(
        "criterion 9 (L^p stability sweep)",
        ok,
        "max/min " + ", ".join(f"p={p}: {spreads[p]:.3f}" for p in (1.5, 2.0, 3.0, 4.0)),
    )


def test_criterion_10_geometry_oracle_suite(sphere_atlas_acc):
    """Condensed geometry example/invariant suite at stated tolerances, < 5 s."""
    t0 = time.perf_counter()
    rng = np.random.default_rng(99)
    failures = []

    def check(label, ok):
        if not ok:
            failures.append(label)

    sph = sphere_atlas_acc.charts[0]
    tor = ge.torus_atlas().charts[0]
    plane = ge.planar_chart()

    y = np.array([np.pi / 2, 0.7])
    check("sphere metric", np.allclose(ge.metric_tensor(sph, y), np.eye(2), atol=1e-9))
    check("torus metric", np.allclose(
        ge.metric_tensor(tor, np.array([0.0, 0.3])), np.diag([1.0, 9.0]), atol=1e-9))
    check("planar metric", np.allclose(
        ge.metric_tensor(plane, np.array([0.5, 0.5])), np.eye(2), atol=1e-14))
    check("sphere area element", np.isclose(ge.area_element(sph, y), 1.0, atol=1e-12))
    check("torus area element", np.isclose(
        ge.area_element(tor, np.array([0.0, 0.1])), 3.0, atol=1e-12))

    ys = rng.uniform([0.3, 0.0], [np.pi - 0.3, 2 * np.pi], size=(100, 2))
    x = sph.map(ys)
    nu = ge.unit_normal(sph, ys)
    check("sphere normal outward", np.abs(nu - x).max() < 1e-12)
    check("torus normal", np.allclose(
        ge.unit_normal(tor, np.array([0.0, 0.0])), [1, 0, 0], atol=1e-12))
    P = ge.tangential_projection(sph, ys)
    check("projection idempotent", np.abs(
        np.einsum("...ab,...bc->...ac", P, P) - P).max() < 1e-12)
    check("projection vs normal formula", np.abs(
        P - (np.eye(3) - np.einsum("...a,...b->...ab", nu, nu))).max() < 1e-10)
    check("P nu = 0", np.abs(np.einsum("...ab,...b->...a", P, nu)).max() < 1e-12)

    x3 = ge.parse_expression("x3")
    px3 = geo.restrict_scalar(sph, x3)
    sg = ge.surface_gradient(sph, px3, ys)
    expected = -x[..., 2][..., None] * x
    expected[..., 2] += 1.0
    check("surface gradient x3", np.abs(sg - expected).max() < 1e-12)
    check("gradient tangential", np.abs(
        np.einsum("...ab,...b->...a", P, sg) - sg).max() < 1e-10)

    rot = ge.rotation_field()
    check("killing divergence", np.abs(ge.surface_divergence(
        sph, geo.restrict_vector(sph, rot), ys)).max() < 1e-8)

    for expr, l in (("x3", 1), ("x1*x2", 2),
                    ("x3*(5*x3^2 - 3*(x1^2 + x2^2 + x3^2))/2", 3)):
        u = ge.parse_expression(expr)
        pu = geo.restrict_scalar(sph, u)
        vals = u(x)
        lb = ge.laplace_beltrami_apply(sph, pu, ys)
        scale = max(np.abs(vals).max(), 1.0) * l * (l + 1)
        check(f"eigen identity l={l}",
              np.abs(lb + l * (l + 1) * vals).max() < 1e-6 * scale)

    B = ge.shape_operator(sph, ys)
    check("sphere shape operator", np.abs(B - P).max() < 1e-8)
    check("B nu = 0", np.abs(np.einsum("...ab,...b->...a", B, nu)).max() < 1e-8)
    Bt = ge.shape_operator(tor, np.array([0.0, 0.0]))
    check("torus curvatures", np.allclose(
        np.sort(np.linalg.eigvals(Bt).real), [0, 1 / 3, 1], atol=1e-8))

    comp = ge.tangential_components(sph, np.array([0.0, 0.0, -1.0]), np.array([np.pi / 2, 0.0]))
    check("tangential components", np.allclose(comp, [1.0, 0.0], atol=1e-12))

    # two-chart agreement at overlap points
    chart_z, chart_x = sphere_atlas_acc.charts
    pts = ge.random_surface_points(sphere_atlas_acc, 300, rng)
    keep = (np.abs(pts[:, 2]) < 0.9) & (np.abs(pts[:, 0]) < 0.9)
    pts = pts[keep][:100]
    P1 = ge.tangential_projection(chart_z, chart_z.inverse(pts))
    P2 = ge.tangential_projection(chart_x, chart_x.inverse(pts))
    check("parametrization independence", np.abs(P1 - P2).max() < 1e-8)

    elapsed = time.perf_counter() - t0
    ok = not failures and elapsed < 5.0
    record(
        "criterion 10 (geometry oracle suite)",
        ok,
        f"{elapsed:.2f}s" + (f", failures: {failures}" if failures else ""),
    )
