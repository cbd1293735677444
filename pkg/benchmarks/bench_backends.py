"""Compare the compiled core with the numpy fallback.

Run with ``python3 benchmarks/bench_backends.py [--n 512] [--repeat 5]``.
Also times one 2D FFT round trip at the same size for scale.
"""
import argparse
import timeit

import numpy as np

from farfield import _fallback, backend, kernels


def _best(fn, repeat):
    return min(timeit.repeat(fn, number=1, repeat=repeat))


def _with_core(core, fn):
    saved = backend.potential_radials, backend.table_sum
    backend.potential_radials, backend.table_sum = core.potential_radials, core.table_sum
    try:
        return fn()
    finally:
        backend.potential_radials, backend.table_sum = saved


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--n", type=int, default=512)
    p.add_argument("--repeat", type=int, default=5)
    args = p.parse_args(argv)

    try:
        from farfield import _speedups
    except ImportError:
        _speedups = None
    cores = {"python": _fallback}
    if _speedups is not None:
        cores["compiled"] = _speedups

    x = np.linspace(-24, 24, args.n)
    X1, X2 = np.meshgrid(x, x, indexing="ij")
    pts = np.stack([X1, X2], -1)
    s = (X1**2 + X2**2).ravel()

    cases = {
        "potential_radials k<=6": lambda core: lambda: core.potential_radials(s, 0.25, 6),
        "bs_kernel_deriv |alpha|=4": lambda core: lambda: _with_core(
            core, lambda: kernels.bs_kernel_deriv((2, 2), 1.0, pts)),
        "riesz_tensor_deriv l=1 |beta|=2": lambda core: lambda: _with_core(
            core, lambda: kernels.riesz_tensor_deriv(1, (1, 1), 1.0, pts)),
    }
    print(f"grid {args.n}x{args.n}, best of {args.repeat}, selected backend: {backend.BACKEND}")
    print(f"{'case':30s}" + "".join(f"{name:>12s}" for name in cores) + ("    speedup" if len(cores) > 1 else ""))
    for label, make in cases.items():
        times = {name: _best(make(core), args.repeat) for name, core in cores.items()}
        row = f"{label:30s}" + "".join(f"{times[n] * 1e3:10.1f}ms" for n in cores)
        if len(cores) > 1:
            row += f"{times['python'] / times['compiled']:10.1f}x"
        print(row)
    w = np.random.default_rng(0).standard_normal((args.n, args.n))
    fft = _best(lambda: np.fft.irfft2(np.fft.rfft2(w), s=w.shape), args.repeat)
    print(f"{'fft round trip (reference)':30s}{fft * 1e3:10.1f}ms")


if __name__ == "__main__":
    main()
