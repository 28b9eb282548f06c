"""Compare the compiled and the pure-Python raster kernels.

Usage::

    python3 benchmarks/bench_kernels.py [--ny 516 --nx 600 --wet 0.09 --repeat 5]

The mask imitates a precipitation field: smoothed noise thresholded so that
roughly ``--wet`` of the cells are wet, giving many blob-shaped regions.
Timings are the best of ``--repeat`` runs.
"""

from __future__ import annotations

import argparse
import timeit

import numpy as np
from scipy import ndimage

from raintrack import kernels


def rain_mask(ny: int, nx: int, wet: float, seed: int = 0) -> np.ndarray:
    field = ndimage.gaussian_filter(np.random.default_rng(seed).standard_normal((ny, nx)), 3.0)
    return field > np.quantile(field, 1.0 - wet)


def main(argv=None) -> None:
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--ny", type=int, default=516)
    p.add_argument("--nx", type=int, default=600)
    p.add_argument("--wet", type=float, default=0.09)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    mask = rain_mask(args.ny, args.nx, args.wet)
    backends = ["python"] + (["cython"] if kernels.HAVE_CYTHON else [])
    cases = {
        "label, 8-connected": lambda b: kernels.label(mask, 8, backend=b),
        "label, 4-connected": lambda b: kernels.label(mask, 4, backend=b),
        "dilate, radius 2": lambda b: kernels.dilate_square(mask, 2, backend=b),
        "dilate, radius 6": lambda b: kernels.dilate_square(mask, 6, backend=b),
    }

    # results must agree before timings mean anything
    if len(backends) == 2:
        for name, fn in cases.items():
            a, b = fn("python"), fn("cython")
            same = all(np.array_equal(x, y) for x, y in zip(a, b)) if isinstance(a, tuple) else np.array_equal(a, b)
            if not same:
                raise SystemExit(f"backends disagree on {name}")

    n_regions = kernels.label(mask, 8)[1]
    print(f"mask {args.ny}x{args.nx}, {mask.mean():.1%} wet, {n_regions} regions; default backend: {kernels.BACKEND}")
    print(f"{'kernel':22s}" + "".join(f"{b:>12s}" for b in backends) + ("     speedup" if len(backends) == 2 else ""))
    for name, fn in cases.items():
        times = []
        for b in backends:
            fn(b)  # warm up
            times.append(min(timeit.repeat(lambda: fn(b), number=1, repeat=args.repeat)))
        row = f"{name:22s}" + "".join(f"{1e3 * t:10.2f}ms" for t in times)
        if len(times) == 2:
            row += f"{times[0] / times[1]:11.1f}x"
        print(row)


if __name__ == "__main__":
    main()
