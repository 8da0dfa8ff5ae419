"""Benchmark the compiled element kernels against the numpy fallback.

Usage: python benchmarks/bench_kernels.py [--level N] [--repeats K]

Two views: the isolated per-element kernels on prepared arrays (the hot
loops the extension exists for), and end-to-end assembly on an icosahedral
sphere mesh (which also pays for coefficient sampling and sparse scatter,
shared by both backends).
"""

import argparse
import time

import numpy as np

import gamma_elliptic as ge
from gamma_elliptic import _backend
from gamma_elliptic.assembly import DiscreteField


def best_of(fn, repeats, *args):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best


def bench_isolated(mesh, repeats):
    rng = np.random.default_rng(0)
    nt, q = mesh.n_triangles, 3
    areas, _, grads = mesh.element_arrays()
    grads = np.ascontiguousarray(grads)
    areas = np.ascontiguousarray(areas)
    amat = rng.standard_normal((nt, q, 3, 3))
    phi = np.ascontiguousarray(rng.uniform(0, 1, (q, 3)))
    bvec = rng.standard_normal((nt, q, 3))
    dvals = rng.standard_normal((nt, q))

    cases = [
        ("stiffness_blocks", (grads, areas, amat)),
        ("convection_blocks", (grads, areas, phi, bvec)),
        ("mass_blocks", (areas, phi, dvals)),
        ("load_div_entries", (grads, areas, bvec)),
        ("power_sum p=2", ("power_sum", (areas, dvals, 2.0))),
        ("power_sum p=3.5", ("power_sum", (areas, dvals, 3.5))),
    ]
    print("\nisolated kernels:")
    header = f"{'kernel':>18}  " + "  ".join(
        f"{b:>10}" for b in _backend.available_backends()
    )
    print(header + "   speedup")
    for label, spec in cases:
        if isinstance(spec[0], str):
            fname, args = spec
        else:
            fname, args = label, spec
        times = {}
        for backend in _backend.available_backends():
            mod = _backend.select_backend(backend)
            times[backend] = best_of(getattr(mod, fname), repeats, *args)
        row = "  ".join(f"{times[b] * 1e3:8.2f}ms" for b in _backend.available_backends())
        speed = ""
        if {"compiled", "python"} <= times.keys():
            speed = f"   {times['python'] / times['compiled']:5.2f}x"
        print(f"{label:>18}  {row}{speed}")


def bench_assembly(mesh, repeats):
    d = ge.parse_expression("1 + 0.25*x1^2")
    rot = ge.rotation_field()
    u = DiscreteField.interpolate(mesh, ge.parse_expression("x1*x2 + x3"))
    steps = [
        ("assemble_stiffness", lambda: ge.assemble_stiffness(mesh)),
        ("assemble_convection", lambda: ge.assemble_convection_c(mesh, rot)),
        ("assemble_mass", lambda: ge.assemble_mass(mesh, d)),
        ("discrete_norm 1,4", lambda: ge.discrete_norm(mesh, u, 1, 4.0)),
    ]
    print("\nend-to-end assembly (includes sampling and scatter):")
    for label, fn in steps:
        times = {}
        for backend in _backend.available_backends():
            _backend.select_backend(backend)
            times[backend] = best_of(fn, repeats)
        row = "  ".join(
            f"{b}: {times[b] * 1e3:8.2f}ms" for b in _backend.available_backends()
        )
        speed = ""
        if {"compiled", "python"} <= times.keys():
            speed = f"   speedup {times['python'] / times['compiled']:5.2f}x"
        print(f"{label:>20}  {row}{speed}")


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--level", type=int, default=5, help="icosahedral refinement level")
    parser.add_argument("--repeats", type=int, default=5)
    args = parser.parse_args()

    atlas = ge.sphere_atlas()
    mesh = ge.build_mesh(atlas, "sphere-icosahedral", args.level)
    mesh.element_arrays()
    print(f"mesh: {mesh.n_vertices} vertices, {mesh.n_triangles} triangles")
    print(f"backends: {_backend.available_backends()}")

    try:
        bench_isolated(mesh, args.repeats)
        bench_assembly(mesh, args.repeats)
    finally:
        _backend.select_backend(
            "compiled" if "compiled" in _backend.available_backends() else "python"
        )


if __name__ == "__main__":
    main()
