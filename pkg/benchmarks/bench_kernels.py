"""Side-by-side timing of the numba and numpy kernel paths.

Run:  python3 benchmarks/bench_kernels.py [--n 256] [--repeats 20]

Times the element-loop kernels both ways on one mesh, verifies the two
paths agree to rounding, and reports the speedup.  The numba path is
compiled once before timing so JIT cost is excluded.
"""

import argparse
import time

import numpy as np

from gllod import forms, kernels, mesh


def timeit(fn, repeats):
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def main():
    parser = argparse.ArgumentParser(description=__doc__)
    parser.add_argument("--n", type=int, default=256, help="mesh subdivisions")
    parser.add_argument("--repeats", type=int, default=20)
    args = parser.parse_args()

    m = mesh.build_uniform(args.n)
    rng = np.random.default_rng(7)
    nv = m.num_vertices
    vre = rng.standard_normal(nv)
    vim = rng.standard_normal(nv)
    dre = rng.standard_normal(nv)
    dim_ = rng.standard_normal(nv)
    bary, w = forms.QUAD_RULES["dunavant4"]
    area = 0.5 / (args.n * args.n)
    tri = m.triangles
    weight = rng.standard_normal((m.num_triangles, w.size))

    cases = {
        "quartic_integral": (
            lambda: kernels.quartic_integral_numpy(tri, vre, vim, bary, w, area),
            lambda: kernels._quartic_integral_nb(tri, vre, vim, bary, w, area),
        ),
        "line_coeffs": (
            lambda: kernels.line_coeffs_numpy(tri, vre, vim, dre, dim_, bary, w, area),
            lambda: kernels._line_coeffs_nb(tri, vre, vim, dre, dim_, bary, w, area),
        ),
        "cubic_load": (
            lambda: kernels.cubic_load_numpy(tri, vre, vim, bary, w, area, nv),
            lambda: kernels._cubic_load_nb(tri, vre, vim, bary, w, area, nv),
        ),
        "density_quad_values": (
            lambda: kernels.density_quad_values_numpy(tri, vre, vim, bary),
            lambda: kernels._density_quad_values_nb(tri, vre, vim, bary),
        ),
        "weighted_mass_local": (
            lambda: kernels.weighted_mass_local_numpy(weight, bary, w, area),
            lambda: kernels._weighted_mass_local_nb(weight, bary, w, area),
        ),
    }

    if not kernels.HAS_NUMBA:
        raise SystemExit("numba unavailable; nothing to compare")

    print(f"mesh n={args.n} ({m.num_triangles} elements), best of {args.repeats}")
    print(f"{'kernel':<22}{'numpy':>12}{'numba':>12}{'speedup':>10}")
    for name, (np_fn, nb_fn) in cases.items():
        ref = np.asarray(np_fn())
        nb_fn()  # JIT warmup
        got = np.asarray(nb_fn())
        rel = np.max(np.abs(ref - got)) / max(np.max(np.abs(ref)), 1e-300)
        assert rel < 1e-12, f"{name}: paths disagree ({rel:.2e})"
        t_np = timeit(np_fn, args.repeats)
        t_nb = timeit(nb_fn, args.repeats)
        print(f"{name:<22}{t_np * 1e3:>10.2f}ms{t_nb * 1e3:>10.2f}ms{t_np / t_nb:>9.1f}x")


if __name__ == "__main__":
    main()
