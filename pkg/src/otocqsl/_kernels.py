"""Hot inner loops, each with a numba and a pure-numpy implementation.

The numba path is used when numba imports cleanly and the environment
variable ``OTOCQSL_DISABLE_NUMBA`` is unset (or ``0``). Both paths are kept
importable so tests and ``benchmarks/bench_kernels.py`` can compare them.

``spectral_correlator`` always takes the numpy path: as one batched GEMM it
outruns the compiled double loop. The numba twin is kept for the benchmark.
"""
import os

import numpy as np

try:
    import numba
except ImportError:  # pragma: no cover - numba is a declared dependency
    numba = None


def _numba_requested() -> bool:
    flag = os.environ.get("OTOCQSL_DISABLE_NUMBA", "0").strip().lower()
    return flag in ("", "0", "false", "no")


USE_NUMBA = numba is not None and _numba_requested()


def np_spectral_correlator(energies, left_weights, overlap, taus):
    """sum_mn left_weights[m] * overlap[m, n] * exp(i (E_m - E_n) tau) for each tau."""
    # one GEMM over all lags; d x len(taus) phases stay small for d <= 2048
    phases = np.exp(1j * np.outer(energies, taus))
    return np.sum(left_weights[:, None] * phases * (overlap @ phases.conj()), axis=0)


def _nb_spectral_correlator(energies, left_weights, overlap, taus):
    d = energies.shape[0]
    out = np.empty(taus.shape[0], dtype=np.complex128)
    phase = np.empty(d, dtype=np.complex128)
    for j in range(taus.shape[0]):
        for m in range(d):
            phase[m] = np.exp(1j * energies[m] * taus[j])
        acc = 0.0 + 0.0j
        for m in range(d):
            row = 0.0 + 0.0j
            for n in range(d):
                row += overlap[m, n] * phase[n].conjugate()
            acc += left_weights[m] * phase[m] * row
        out[j] = acc
    return out


def np_memory_sums(gamma_rows, ops, dt):
    """Trapezoidal memory sums S_n = int_0^{t_n} Gamma(t_n, s) Z(s) ds on the grid.

    ``gamma_rows[n, k]`` holds Gamma(t_n, s_k) for k <= n (entries above the
    diagonal are ignored); ``ops`` is the (n_points, 2, 2) operator trajectory.
    """
    n_points = ops.shape[0]
    out = np.zeros((n_points, 2, 2), dtype=np.complex128)
    for n in range(1, n_points):
        w = np.full(n + 1, dt)
        w[0] = w[-1] = 0.5 * dt
        out[n] = np.tensordot(w * gamma_rows[n, : n + 1], ops[: n + 1], axes=1)
    return out


def _nb_memory_sums(gamma_rows, ops, dt):
    n_points = ops.shape[0]
    out = np.zeros((n_points, 2, 2), dtype=np.complex128)
    for n in range(1, n_points):
        for k in range(n + 1):
            w = dt
            if k == 0 or k == n:
                w = 0.5 * dt
            c = w * gamma_rows[n, k]
            for a in range(2):
                for b in range(2):
                    out[n, a, b] += c * ops[k, a, b]
    return out


def np_abs_re_memory(gamma_rows, dt, signed=False):
    """Trapezoidal int_0^{t_n} |Re Gamma(t_n, s)| ds (or bare Re when ``signed``)."""
    n_points = gamma_rows.shape[0]
    out = np.zeros(n_points)
    for n in range(1, n_points):
        re = gamma_rows[n, : n + 1].real
        if not signed:
            re = np.abs(re)
        out[n] = dt * (re.sum() - 0.5 * (re[0] + re[-1]))
    return out


def _nb_abs_re_memory(gamma_rows, dt, signed=False):
    n_points = gamma_rows.shape[0]
    out = np.zeros(n_points)
    for n in range(1, n_points):
        acc = 0.0
        for k in range(n + 1):
            re = gamma_rows[n, k].real
            if not signed:
                re = abs(re)
            if k == 0 or k == n:
                re *= 0.5
            acc += re
        out[n] = dt * acc
    return out


if numba is not None:
    nb_spectral_correlator = numba.njit(cache=True)(_nb_spectral_correlator)
    nb_memory_sums = numba.njit(cache=True)(_nb_memory_sums)
    nb_abs_re_memory = numba.njit(cache=True)(_nb_abs_re_memory)
else:  # pragma: no cover
    nb_spectral_correlator = np_spectral_correlator
    nb_memory_sums = np_memory_sums
    nb_abs_re_memory = np_abs_re_memory


def spectral_correlator(energies, left_weights, overlap, taus):
    args = (
        np.ascontiguousarray(energies, dtype=np.float64),
        np.ascontiguousarray(left_weights, dtype=np.complex128),
        np.ascontiguousarray(overlap, dtype=np.complex128),
        np.ascontiguousarray(taus, dtype=np.float64),
    )
    # BLAS beats the compiled loop here at every size we use, so numpy runs regardless of the flag
    return np_spectral_correlator(*args)


def memory_sums(gamma_rows, ops, dt):
    gamma_rows = np.ascontiguousarray(gamma_rows, dtype=np.complex128)
    ops = np.ascontiguousarray(ops, dtype=np.complex128)
    if USE_NUMBA:
        return nb_memory_sums(gamma_rows, ops, float(dt))
    return np_memory_sums(gamma_rows, ops, float(dt))


def abs_re_memory(gamma_rows, dt, signed=False):
    gamma_rows = np.ascontiguousarray(gamma_rows, dtype=np.complex128)
    if USE_NUMBA:
        return nb_abs_re_memory(gamma_rows, float(dt), bool(signed))
    return np_abs_re_memory(gamma_rows, float(dt), bool(signed))
