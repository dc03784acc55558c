"""Pauli operators on the chain, Ising Hamiltonians and partial traces.

Basis convention: computational z-basis, site 1 is the most significant
qubit and |0> is the sigma^z = +1 eigenstate. Operators are plain dense
numpy arrays.
"""
from functools import reduce

import numpy as np

from .params import ChainParams, MAX_SITES

PAULI = {
    "x": np.array([[0, 1], [1, 0]], dtype=np.complex128),
    "y": np.array([[0, -1j], [1j, 0]], dtype=np.complex128),
    "z": np.array([[1, 0], [0, -1]], dtype=np.complex128),
}
IDENTITY2 = np.eye(2, dtype=np.complex128)


def site_operator(alpha: str, site: int, N: int) -> np.ndarray:
    """Embed sigma^alpha at ``site`` (1-based) of an N-site chain."""
    if alpha not in PAULI:
        raise ValueError(f"unknown Pauli component {alpha!r}")
    if not 1 <= N <= MAX_SITES:
        raise ValueError(f"N must be in [1, {MAX_SITES}], got {N}")
    if not 1 <= site <= N:
        raise ValueError(f"site {site} outside chain of length {N}")
    left = np.eye(2 ** (site - 1))
    right = np.eye(2 ** (N - site))
    return np.kron(np.kron(left, PAULI[alpha]), right)


def _diag_z(site, N):
    # sigma^z_site diagonal as +-1 vector, avoids building dense matrices
    idx = np.arange(2**N)
    bit = (idx >> (N - site)) & 1
    return 1.0 - 2.0 * bit


def _x_matrix(site, N):
    d = 2**N
    idx = np.arange(d)
    out = np.zeros((d, d))
    out[idx, idx ^ (1 << (N - site))] = 1.0
    return out


def ising_hamiltonian(N: int, J: float, h: float, g: float, ising_sign: float = -1.0) -> np.ndarray:
    """ising_sign*J sum s^z_i s^z_{i+1} - h sum s^x_i - g sum s^z_i, open chain, real symmetric."""
    if not 1 <= N <= MAX_SITES:
        raise ValueError(f"N must be in [1, {MAX_SITES}], got {N}")
    diag = np.zeros(2**N)
    for i in range(1, N):
        diag += ising_sign * J * _diag_z(i, N) * _diag_z(i + 1, N)
    for i in range(1, N + 1):
        diag -= g * _diag_z(i, N)
    H = np.diag(diag)
    if h != 0:
        for i in range(1, N + 1):
            H -= h * _x_matrix(i, N)
    return H


def build_chain_hamiltonian(params: ChainParams) -> np.ndarray:
    return ising_hamiltonian(params.N, params.J, params.h, params.g, params.ising_sign)


def decompose(params: ChainParams):
    """Split H into (H_A, H_B, H_I): site 1, sites 2..N, and the 1-2 bond.

    H == kron(H_A, I) + kron(I, H_B) + H_I holds exactly.
    """
    N = params.N
    H_A = (-params.h * PAULI["x"] - params.g * PAULI["z"]).real
    H_B = ising_hamiltonian(N - 1, params.J, params.h, params.g, params.ising_sign)
    H_I = np.diag(params.ising_sign * params.J * _diag_z(1, N) * _diag_z(2, N))
    return H_A, H_B, H_I


def embed_pieces(H_A, H_B, H_I):
    return np.kron(H_A, np.eye(H_B.shape[0])) + np.kron(np.eye(H_A.shape[0]), H_B) + H_I


def partial_trace(rho: np.ndarray, dims, keep: str = "A") -> np.ndarray:
    """Reduced state of a bipartite dA x dB operator, keeping 'A' or 'B'."""
    dA, dB = dims
    if rho.shape != (dA * dB, dA * dB):
        raise ValueError(f"operator of shape {rho.shape} does not match dims {dims}")
    t = rho.reshape(dA, dB, dA, dB)
    if keep == "A":
        return np.einsum("ibjb->ij", t)
    if keep == "B":
        return np.einsum("aiaj->ij", t)
    raise ValueError(f"keep must be 'A' or 'B', got {keep!r}")


def kron_all(ops):
    return reduce(np.kron, ops)


def hermiticity_error(M: np.ndarray) -> float:
    return float(np.max(np.abs(M - M.conj().T))) if M.size else 0.0


def check_density_matrix(rho: np.ndarray, herm_tol: float = 1e-10, trace_tol: float = 1e-10):
    """Raise ValueError when ``rho`` is not Hermitian with unit trace."""
    herm = hermiticity_error(rho)
    if herm > herm_tol:
        raise ValueError(f"density matrix not Hermitian (max deviation {herm:.3e})")
    tr = np.trace(rho)
    if abs(tr - 1) > trace_tol:
        raise ValueError(f"density matrix trace {tr} differs from 1")
