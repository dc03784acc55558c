"""Time the numba and numpy paths of the hot kernels, and the full pipeline under each.

    python3 benchmarks/bench_kernels.py [--repeat 5]
"""
import argparse
import os
import subprocess
import sys
import time

import numpy as np

from otocqsl import ChainParams, _kernels
from otocqsl.bath import stationary_kernel
from otocqsl.spinchain import decompose, site_operator


def best_of(fn, repeat):
    fn()  # warm-up, includes JIT compilation on the first call
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def kernel_inputs(N=10, n_lags=241):
    p = ChainParams(N=N)
    _, H_B, _ = decompose(p)
    E, V = np.linalg.eigh(H_B)
    w = np.exp(-(E - E[0]))
    w = (w / w.sum()).astype(np.complex128)
    zb = V.T @ site_operator("z", 1, N - 1).real @ V
    taus = p.dt * np.arange(n_lags)
    rows = stationary_kernel(p.with_(t_max=p.dt * (n_lags - 1))).rows()
    rng = np.random.default_rng(0)
    ops = rng.standard_normal((n_lags, 2, 2)) + 1j * rng.standard_normal((n_lags, 2, 2))
    overlap = (np.abs(zb) ** 2).astype(np.complex128)
    return E, w, overlap, taus, rows, ops, p.dt


def pipeline_seconds(disable_numba):
    code = (
        "import time; from otocqsl import ChainParams; from otocqsl.bath import stationary_kernel;"
        "from otocqsl.redfield import qsl_bounds; p = ChainParams(); qsl_bounds(p, stationary_kernel(p));"
        "t0 = time.perf_counter(); qsl_bounds(p, stationary_kernel(p)); print(time.perf_counter() - t0)"
    )
    env = dict(os.environ, OTOCQSL_DISABLE_NUMBA="1" if disable_numba else "0")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    return float(out.stdout.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--repeat", type=int, default=5)
    ap.add_argument("--skip-pipeline", action="store_true")
    args = ap.parse_args()

    E, w, ov, taus, rows, ops, dt = kernel_inputs()
    cases = {
        "spectral_correlator (d=512, 241 lags)": (
            lambda: _kernels.np_spectral_correlator(E, w, ov, taus),
            lambda: _kernels.nb_spectral_correlator(E, w, ov, taus),
        ),
        "memory_sums (241 x 241)": (
            lambda: _kernels.np_memory_sums(rows, ops, dt),
            lambda: _kernels.nb_memory_sums(rows, ops, dt),
        ),
        "abs_re_memory (241 x 241)": (
            lambda: _kernels.np_abs_re_memory(rows, dt, False),
            lambda: _kernels.nb_abs_re_memory(rows, dt, False),
        ),
    }
    print(f"{'kernel':40s} {'numpy [ms]':>11s} {'numba [ms]':>11s} {'speedup':>8s}")
    for name, (f_np, f_nb) in cases.items():
        a = np.asarray(f_np())
        b = np.asarray(f_nb())
        assert np.allclose(a, b, atol=1e-10), name
        t_np, t_nb = best_of(f_np, args.repeat), best_of(f_nb, args.repeat)
        print(f"{name:40s} {1e3 * t_np:11.2f} {1e3 * t_nb:11.2f} {t_np / t_nb:8.1f}x")
    if not args.skip_pipeline:
        t_np, t_nb = pipeline_seconds(True), pipeline_seconds(False)
        print(f"{'full N=10 bounds pipeline':40s} {1e3 * t_np:11.0f} {1e3 * t_nb:11.0f} {t_np / t_nb:8.1f}x")


if __name__ == "__main__":
    main()
