"""Closed-system evolution of the full chain and the Haar-averaged OTOC.

The averaged OTOC of the quenched chain equals the purity of the first spin,
``exp(-S2)``. :func:`exact_average_otoc` evaluates that side;
:func:`haar_average_otoc_mc` samples the Haar average over unitaries on the
rest of the chain directly and serves as an independent check.
"""
import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .params import ChainParams, TimeGrid
from .spinchain import build_chain_hamiltonian, decompose

log = logging.getLogger(__name__)

PURITY_FLOOR = 1e-300


class InvariantWarning(RuntimeWarning):
    """A numerical invariant was violated beyond its tolerance."""


@dataclass
class OtocSeries:
    grid: TimeGrid
    otoc: np.ndarray
    renyi2: np.ndarray


def thermal_state(H: np.ndarray, beta: float) -> np.ndarray:
    """Gibbs state exp(-beta H)/Z from the eigendecomposition of H."""
    E, V = np.linalg.eigh(H)
    weights = np.exp(-beta * (E - E[0]))
    weights /= weights.sum()
    return (V * weights) @ V.conj().T


def excited_projector() -> np.ndarray:
    return np.array([[0.0, 0.0], [0.0, 1.0]])


def initial_state(params: ChainParams) -> np.ndarray:
    """Post-quench state sigma^x|0><0|sigma^x (x) rho_B^beta = |1><1| (x) rho_B^beta."""
    _, H_B, _ = decompose(params)
    return np.kron(excited_projector(), thermal_state(H_B, params.beta))


def _rotated(rho0, V):
    return V.conj().T @ rho0 @ V


def propagate(rho0: np.ndarray, H: np.ndarray, grid: TimeGrid) -> np.ndarray:
    """rho(t_n) = U(t_n) rho0 U(t_n)^dagger for every grid point, shape (n, d, d)."""
    E, V = np.linalg.eigh(H)
    C = _rotated(rho0, V)
    out = np.empty((len(grid),) + rho0.shape, dtype=np.complex128)
    for n, t in enumerate(grid.points):
        phase = np.exp(-1j * E * t)
        out[n] = V @ (phase[:, None] * C * phase.conj()[None, :]) @ V.conj().T
    return out


def purity(rho: np.ndarray) -> float:
    # tr(rho^2) without the matrix product
    return float(np.real(np.sum(rho * rho.T)))


def renyi2_entropy(rho: np.ndarray) -> float:
    """-ln tr(rho^2), with the purity clamped into [1e-300, 1]."""
    p = purity(rho)
    if not 0.0 <= p <= 1.0 + 1e-10:
        warnings.warn(f"purity {p!r} outside [0, 1]", InvariantWarning, stacklevel=2)
    return -np.log(min(max(p, PURITY_FLOOR), 1.0))


def reduced_state_series(H: np.ndarray, rho0: np.ndarray, grid, dA: int = 2) -> np.ndarray:
    """tr_B rho(t) at every grid point (or any array of times) without forming rho(t).

    With rho(t) = V D C D^dag V^dag, each entry of the reduced state is a
    quadratic form phase^T (C * K_ij) conj(phase), so the cost per time point
    is dA^2 matrix-vector products.
    """
    d = H.shape[0]
    dB = d // dA
    E, V = np.linalg.eigh(H)
    C = _rotated(rho0, V)
    blocks = [V[i * dB:(i + 1) * dB] for i in range(dA)]
    forms = {}
    for i in range(dA):
        for j in range(dA):
            forms[i, j] = C * (blocks[i].T @ blocks[j].conj())
    times = grid.points if isinstance(grid, TimeGrid) else np.atleast_1d(np.asarray(grid, dtype=float))
    out = np.empty((len(times), dA, dA), dtype=np.complex128)
    for n, t in enumerate(times):
        phase = np.exp(-1j * E * t)
        for (i, j), G in forms.items():
            out[n, i, j] = phase @ (G @ phase.conj())
    return out


def exact_average_otoc(params: ChainParams, grid: TimeGrid = None) -> OtocSeries:
    if grid is None:
        grid = TimeGrid.from_params(params)
    H = build_chain_hamiltonian(params)
    rho_A = reduced_state_series(H, initial_state(params), grid)
    renyi = np.array([renyi2_entropy(r) for r in rho_A])
    return OtocSeries(grid=grid, otoc=np.exp(-renyi), renyi2=renyi)


def haar_unitary(d: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed d x d unitary: QR of a complex Ginibre matrix with the R-diagonal phases removed."""
    Z = (rng.standard_normal((d, d)) + 1j * rng.standard_normal((d, d))) / np.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    diag = np.diagonal(R)
    return Q * (diag / np.abs(diag))


def sample_rng(seed: int, index: int) -> np.random.Generator:
    """Independent stream for one sample, keyed by (seed, index)."""
    return np.random.default_rng([int(seed), int(index)])


@dataclass
class HaarEstimate:
    times: np.ndarray
    estimate: np.ndarray
    stderr: np.ndarray
    imag_mean: np.ndarray
    imag_stderr: np.ndarray
    n_samples: int


def haar_otoc_statistics(params: ChainParams, times, n_samples: int, seed: int = 0, H: np.ndarray = None) -> HaarEstimate:
    """Monte Carlo Haar average of tr[B^dag(t) A B(t) A] with A the post-quench state.

    The raw Haar mean of the trace equals purity(rho_A)/d_B, so samples are
    scaled by d_B = 2^(N-1); the scaled estimator targets exp(-S2) directly.
    The same unitaries are reused at every requested time.
    """
    if n_samples < 2:
        raise ValueError("n_samples must be at least 2")
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if H is None:
        H = build_chain_hamiltonian(params)
    rho0 = initial_state(params)
    d = rho0.shape[0]
    dB = d // 2
    E, V = np.linalg.eigh(H)
    C = _rotated(rho0, V)
    states = []
    for t in times:
        phase = np.exp(-1j * E * t)
        states.append(V @ (phase[:, None] * C * phase.conj()[None, :]) @ V.conj().T)
    samples = np.empty((len(times), n_samples), dtype=np.complex128)
    eye_A = np.eye(2)
    for k in range(n_samples):
        B = np.kron(eye_A, haar_unitary(dB, sample_rng(seed, k)))
        Bh = B.conj().T
        for j, rho in enumerate(states):
            # tr[(I x B^dag) rho(t) (I x B) rho(t)]
            samples[j, k] = np.sum((Bh @ rho @ B) * rho.T)
    samples *= dB
    scale = 1.0 / np.sqrt(n_samples)
    est = HaarEstimate(
        times=times,
        estimate=samples.real.mean(axis=1),
        stderr=samples.real.std(axis=1, ddof=1) * scale,
        imag_mean=samples.imag.mean(axis=1),
        imag_stderr=samples.imag.std(axis=1, ddof=1) * scale,
        n_samples=n_samples,
    )
    for t, m, s in zip(times, est.imag_mean, est.imag_stderr):
        # the trace is real for Hermitian A; only report imaginary parts above roundoff
        if abs(m) > max(3 * s, 1e-12):
            log.warning("imaginary part of Haar OTOC at t=%g is %.3e (stderr %.3e)", t, m, s)
    return est


def haar_average_otoc_mc(params: ChainParams, t: float, n_samples: int, seed: int = 0):
    """(estimate, stderr) of the Haar-averaged OTOC at a single time."""
    est = haar_otoc_statistics(params, [t], n_samples, seed)
    return float(est.estimate[0]), float(est.stderr[0])


def exact_otoc_at(params: ChainParams, times) -> np.ndarray:
    """exp(-S2) of the first spin at arbitrary times."""
    rho_A = reduced_state_series(build_chain_hamiltonian(params), initial_state(params), times)
    return np.array([purity(r) for r in rho_A])
