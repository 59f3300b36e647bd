"""Small Fock-space toolkit (Jordan-Wigner) used as an exact oracle for N <= ~6.

Basis state index ``sum_j n_j 2^j``: bit ``j`` is the occupation of site ``j``.
"""
from __future__ import annotations

from functools import lru_cache

import numpy as np
from scipy.linalg import eigh


@lru_cache(maxsize=8)
def annihilators(N: int) -> tuple[np.ndarray, ...]:
    dim = 2**N
    idx = np.arange(dim)
    ops = []
    for j in range(N):
        c = np.zeros((dim, dim))
        occ = (idx >> j) & 1
        parity = np.array([bin(i & ((1 << j) - 1)).count("1") % 2 for i in idx])
        src = idx[occ == 1]
        c[src ^ (1 << j), src] = (-1.0) ** parity[occ == 1]
        c.setflags(write=False)
        ops.append(c)
    return tuple(ops)


def occupations(N: int) -> np.ndarray:
    """Array (2^N, N) of the occupation pattern of each basis state."""
    idx = np.arange(2**N)
    return ((idx[:, None] >> np.arange(N)) & 1).astype(np.uint8)


def quadratic_hamiltonian(Hsp) -> np.ndarray:
    Hsp = np.asarray(Hsp)
    c = annihilators(Hsp.shape[0])
    return sum(Hsp[i, j] * c[i].T @ c[j] for i in range(len(c)) for j in range(len(c)) if Hsp[i, j] != 0)


def many_body_propagator(Hsp, t: float) -> np.ndarray:
    E, V = eigh(quadratic_hamiltonian(Hsp))
    return (V * np.exp(-1j * t * E)) @ V.conj().T


def random_pure_state(N: int, seed=None, n_particles: int | None = None) -> np.ndarray:
    """Haar-like random state, optionally restricted to a fixed particle-number sector."""
    rng = np.random.default_rng(seed)
    psi = rng.normal(size=2**N) + 1j * rng.normal(size=2**N)
    if n_particles is not None:
        psi[occupations(N).sum(1) != n_particles] = 0
    return psi / np.linalg.norm(psi)


def two_point(psi) -> np.ndarray:
    N = int(np.log2(len(psi)))
    c = annihilators(N)
    cp = [ci @ psi for ci in c]
    return np.array([[np.vdot(cp[i], cp[j]) for j in range(N)] for i in range(N)])


def four_point(psi) -> np.ndarray:
    """``D[i,j,k,l] = <c_i^dag c_j c_k^dag c_l>``."""
    N = int(np.log2(len(psi)))
    c = annihilators(N)
    # c_k^dag c_l |psi>
    hop = [[c[k].T @ (c[l] @ psi) for l in range(N)] for k in range(N)]
    cpsi = [ci @ psi for ci in c]
    D = np.zeros((N,) * 4, dtype=complex)
    for i in range(N):
        for j in range(N):
            # <psi| c_i^dag c_j = (c_j^dag c_i |psi>)^dag
            bra = c[j].T @ cpsi[i]
            for k in range(N):
                for l in range(N):
                    D[i, j, k, l] = np.vdot(bra, hop[k][l])
    return D
