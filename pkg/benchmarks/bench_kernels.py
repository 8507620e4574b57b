#!/usr/bin/env python3
"""Benchmark the numba kernels against their pure-numpy fallbacks.

Run with the package importable (pip install -e .). The numpy reference
implementations are always available through specx._kernels.NUMPY_IMPLS, so
one process can time both paths; rerun with SPECX_NO_NUMBA=1 to check that
the dispatch itself picks the fallback.
"""

import time

import numpy as np

from specx import _kernels
from specx.mesh import build_sphere_mesh


def timeit(fn, *args, repeat=5):
    best = np.inf
    out = None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn(*args)
        best = min(best, time.perf_counter() - t0)
    return best, out


def main():
    print(f"numba active: {_kernels.USING_NUMBA}")
    mesh = build_sphere_mesh(6)
    corners = mesh.corners
    x = mesh.vertices / np.linalg.norm(mesh.vertices, axis=1, keepdims=True)
    x = np.ascontiguousarray(x)
    a = np.array([0.4, 0.2, -0.1])
    b = np.array([0.3, -0.5, 0.2])
    areas = mesh.vertex_areas
    vals = np.ascontiguousarray(np.tile(x, (1, 1)))

    cases = [
        ("tri_geometry", (corners,)),
        ("mobius_batch", (x, a)),
        ("cap_reflect_raw", (x, b)),
        ("gl_pointwise", (vals, areas, 0.1)),
    ]
    print(f"{'kernel':<18}{'active [ms]':>12}{'numpy [ms]':>12}{'speedup':>9}")
    for name, args in cases:
        active = getattr(_kernels, name)
        reference = _kernels.NUMPY_IMPLS[name]
        active(*args)  # trigger jit compilation outside the timing loop
        t_active, out_a = timeit(active, *args)
        t_numpy, out_n = timeit(reference, *args)
        if not isinstance(out_a, tuple):
            out_a, out_n = (out_a,), (out_n,)
        ok = all(np.allclose(pa, pn, atol=1e-10)
                 for pa, pn in zip(out_a, out_n))
        flag = "" if ok else "  MISMATCH"
        print(f"{name:<18}{1e3 * t_active:>12.3f}{1e3 * t_numpy:>12.3f}"
              f"{t_numpy / t_active:>9.2f}{flag}")


if __name__ == "__main__":
    main()
