import os
import subprocess
import sys

import numpy as np
import pytest

from otocqsl import _kernels


def _case(seed, n=40, d=12):
    rng = np.random.default_rng(seed)
    E = np.sort(rng.standard_normal(d))
    w = rng.random(d) + 0j
    ov = rng.random((d, d)) + 0j
    taus = np.linspace(0, 3, n)
    rows = np.tril(rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)))
    ops = rng.standard_normal((n, 2, 2)) + 1j * rng.standard_normal((n, 2, 2))
    return E, w, ov, taus, rows, ops


@pytest.mark.parametrize("seed", [0, 1, 2])
def test_paths_agree(seed):
    E, w, ov, taus, rows, ops = _case(seed)
    assert np.allclose(_kernels.nb_spectral_correlator(E, w, ov, taus),
                       _kernels.np_spectral_correlator(E, w, ov, taus), atol=1e-12)
    assert np.allclose(_kernels.nb_memory_sums(rows, ops, 0.05), _kernels.np_memory_sums(rows, ops, 0.05), atol=1e-12)
    for signed in (False, True):
        assert np.allclose(_kernels.nb_abs_re_memory(rows, 0.05, signed),
                           _kernels.np_abs_re_memory(rows, 0.05, signed), atol=1e-12)


def test_spectral_correlator_oracle():
    E, w, ov, taus, _, _ = _case(4, n=5, d=4)
    ref = [sum(w[m] * ov[m, n] * np.exp(1j * (E[m] - E[n]) * t) for m in range(4) for n in range(4)) for t in taus]
    assert np.allclose(_kernels.spectral_correlator(E, w, ov, taus), ref)


def test_memory_sums_oracle():
    _, _, _, _, rows, ops = _case(5, n=6)
    dt = 0.1
    out = _kernels.memory_sums(rows, ops, dt)
    assert np.allclose(out[0], 0)
    n = 4
    ref = sum((0.5 if k in (0, n) else 1.0) * dt * rows[n, k] * ops[k] for k in range(n + 1))
    assert np.allclose(out[n], ref)


def test_abs_re_memory_oracle():
    _, _, _, _, rows, _ = _case(6, n=6)
    dt = 0.1
    n = 5
    ref = sum((0.5 if k in (0, n) else 1.0) * dt * abs(rows[n, k].real) for k in range(n + 1))
    assert np.isclose(_kernels.abs_re_memory(rows, dt)[n], ref)


def test_env_flag_disables_numba():
    code = "from otocqsl import _kernels; print(_kernels.USE_NUMBA)"
    env = dict(os.environ, OTOCQSL_DISABLE_NUMBA="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "False"
    env["OTOCQSL_DISABLE_NUMBA"] = "0"
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "True"
