"""Fermionic Gaussian states: correlation matrices, quench Hamiltonians and propagators.

Conventions
-----------
``C[i, j] = Tr[rho c_i^dag c_j]``. A single-particle unitary ``U = exp(-i t H)``
maps ``C -> conj(U) @ C @ U.T``.

Hermitian matrices are vectorized in the real orthonormal basis

    E_aa                         (n slots, diagonal)
    (E_ab + E_ba) / sqrt(2)      (n(n-1)/2 slots, a < b, "sym")
    i (E_ab - E_ba) / sqrt(2)    (n(n-1)/2 slots, a < b, "anti")

in that order, with the pairs ``a < b`` in lexicographic order. The map is a
linear isometry from Hermitian matrices (Frobenius norm) to R^(n^2).
"""
from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.linalg import eigh
from scipy.stats import unitary_group

from .errors import InvalidArgumentError, NumericalError
from .lattice import Lattice, LatticeKind

SQRT2 = np.sqrt(2.0)
HERMITIAN_TOL = 1e-10


# --------------------------------------------------------------------------
# Hermitian <-> real vector
# --------------------------------------------------------------------------

@lru_cache(maxsize=64)
def _pairs(n: int) -> tuple[np.ndarray, np.ndarray]:
    a, b = np.triu_indices(n, 1)
    a.setflags(write=False)
    b.setflags(write=False)
    return a, b


@dataclass(frozen=True)
class SlotIndex:
    """Layout of the Hermitian basis for an ``n x n`` matrix."""

    n: int

    @property
    def n_pairs(self) -> int:
        return self.n * (self.n - 1) // 2

    @property
    def dim(self) -> int:
        return self.n * self.n

    @property
    def pairs(self) -> tuple[np.ndarray, np.ndarray]:
        return _pairs(self.n)

    def diag(self, a: int) -> int:
        return a

    def pair_position(self, a: int, b: int) -> int:
        if a == b or not (0 <= a < self.n and 0 <= b < self.n):
            raise InvalidArgumentError(f"invalid pair ({a}, {b}) for n={self.n}")
        a, b = min(a, b), max(a, b)
        # lexicographic rank of (a, b) among pairs with a < b
        return a * self.n - a * (a + 1) // 2 + (b - a - 1)

    def sym(self, a: int, b: int) -> int:
        return self.n + self.pair_position(a, b)

    def anti(self, a: int, b: int) -> int:
        return self.n + self.n_pairs + self.pair_position(a, b)

    def support(self) -> np.ndarray:
        """Array of shape (n^2, 2): the (a, b) site pair each slot touches."""
        a, b = self.pairs
        d = np.arange(self.n)
        return np.concatenate(
            [np.stack([d, d], 1), np.stack([a, b], 1), np.stack([a, b], 1)]
        )

    def slots_within(self, sites) -> np.ndarray:
        """Slots whose support lies entirely inside ``sites``."""
        inside = np.zeros(self.n, dtype=bool)
        inside[list(sites)] = True
        sup = self.support()
        return np.flatnonzero(inside[sup[:, 0]] & inside[sup[:, 1]])

    def slots_with_range(self, max_range: int, coords=None) -> np.ndarray:
        """Slots whose two sites are at most ``max_range`` apart (Chebyshev distance)."""
        sup = self.support()
        if coords is None:
            dist = np.abs(sup[:, 0] - sup[:, 1])
        else:
            coords = np.asarray(coords)
            dist = np.abs(coords[sup[:, 0]] - coords[sup[:, 1]]).max(axis=1)
        return np.flatnonzero(dist <= max_range)


def hermitian_to_vec(C, tol: float = HERMITIAN_TOL) -> np.ndarray:
    C = np.asarray(C)
    if C.ndim != 2 or C.shape[0] != C.shape[1]:
        raise InvalidArgumentError(f"expected a square matrix, got shape {C.shape}")
    if np.abs(C - C.conj().T).max(initial=0.0) > tol * max(1.0, np.abs(C).max(initial=0.0)):
        raise InvalidArgumentError("matrix is not Hermitian")
    n = C.shape[0]
    a, b = _pairs(n)
    off = C[a, b]
    return np.concatenate([C.diagonal().real, SQRT2 * off.real, SQRT2 * off.imag])


def vec_to_hermitian(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    n = int(round(np.sqrt(x.shape[-1])))
    if n * n != x.shape[-1]:
        raise InvalidArgumentError(f"vector length {x.shape[-1]} is not a perfect square")
    m = n * (n - 1) // 2
    a, b = _pairs(n)
    C = np.zeros(x.shape[:-1] + (n, n), dtype=complex)
    idx = np.arange(n)
    C[..., idx, idx] = x[..., :n]
    off = (x[..., n:n + m] + 1j * x[..., n + m:]) / SQRT2
    C[..., a, b] = off
    C[..., b, a] = off.conj()
    return C


def observable_to_vec(o) -> tuple[np.ndarray, np.ndarray]:
    """Real functionals giving the real and imaginary part of ``sum_ij o_ij C_ij``.

    For a Hermitian ``o`` the second vector is zero.
    """
    o = np.asarray(o, dtype=complex)
    herm = (o + o.conj().T) / 2
    skew = (o - o.conj().T) / 2j
    return hermitian_to_vec(herm.T), hermitian_to_vec(skew.T)


# --------------------------------------------------------------------------
# Hamiltonians and propagators
# --------------------------------------------------------------------------

@dataclass(frozen=True)
class SingleParticleHamiltonian:
    data: np.ndarray
    h: float
    phi: float
    theta_L: float

    @property
    def n_sites(self) -> int:
        return self.data.shape[0]


def wavevector(lattice: Lattice, theta_L: float) -> np.ndarray:
    # Chains use the x-projection of the 2d laser wavevector.
    if lattice.kind is LatticeKind.CHAIN:
        return np.array([2 * np.pi * np.cos(theta_L), 0.0])
    return 2 * np.pi * np.array([np.cos(theta_L), np.sin(theta_L)])


def hopping_matrix(lattice: Lattice) -> np.ndarray:
    H = np.zeros((lattice.n_sites, lattice.n_sites))
    for i, j in lattice.edges:
        H[i, j] = H[j, i] = -1.0
    return H


def onsite_potential(lattice: Lattice, h: float, phi: float, theta_L: float) -> np.ndarray:
    return h * np.cos(lattice.all_coords() @ wavevector(lattice, theta_L) + phi)


def build_hamiltonian(lattice: Lattice, h: float, phi: float, theta_L: float) -> SingleParticleHamiltonian:
    if h < 0:
        raise InvalidArgumentError("potential strength h must be non-negative")
    H = hopping_matrix(lattice)
    H[np.diag_indices_from(H)] = onsite_potential(lattice, h, phi, theta_L)
    return SingleParticleHamiltonian(H, float(h), float(phi), float(theta_L))


class Propagator:
    """Caches the eigendecomposition of a Hermitian ``H`` to evaluate ``exp(-i t H)``."""

    def __init__(self, H):
        H = np.asarray(getattr(H, "data", H))
        if not np.iscomplexobj(H):
            H = H.astype(float)
        try:
            self.energies, self.modes = eigh(H)
        except np.linalg.LinAlgError as exc:
            raise NumericalError(f"eigendecomposition failed: {exc}") from exc

    def __call__(self, t: float, rows=None, cols=None) -> np.ndarray:
        left = self.modes if rows is None else self.modes[rows]
        right = self.modes if cols is None else self.modes[cols]
        return (left * np.exp(-1j * t * self.energies)) @ right.conj().T


def propagator(H, t: float) -> np.ndarray:
    return Propagator(H)(t)


# --------------------------------------------------------------------------
# Correlation matrices
# --------------------------------------------------------------------------

def direct_sum(C0, C_anc) -> np.ndarray:
    C0 = np.asarray(C0, dtype=complex)
    C_anc = np.asarray(C_anc, dtype=complex)
    n0, na = C0.shape[0], C_anc.shape[0] if C_anc.size else 0
    C = np.zeros((n0 + na, n0 + na), dtype=complex)
    C[:n0, :n0] = C0
    if na:
        C[n0:, n0:] = C_anc
    return C


def embed(C0, system_sites, n_total: int, C_anc=None, ancilla_sites=None) -> np.ndarray:
    """Place ``C0 (+) C_anc`` onto lattice order; empty ancillas by default."""
    C = np.zeros((n_total, n_total), dtype=complex)
    sys_ = np.asarray(system_sites)
    C[np.ix_(sys_, sys_)] = C0
    if C_anc is not None and np.size(C_anc):
        anc = np.asarray(ancilla_sites)
        C[np.ix_(anc, anc)] = C_anc
    return C


def evolve_correlations(C_tot, U) -> np.ndarray:
    C_tot = np.asarray(C_tot)
    U = np.asarray(U)
    if U.shape[1] != C_tot.shape[0]:
        raise InvalidArgumentError(f"shape mismatch: U {U.shape} vs C {C_tot.shape}")
    return U.conj() @ C_tot @ U.T


def is_valid_correlation_matrix(C, tol: float = 1e-9) -> bool:
    C = np.asarray(C)
    if np.abs(C - C.conj().T).max(initial=0.0) > tol:
        return False
    ev = np.linalg.eigvalsh((C + C.conj().T) / 2)
    return bool(ev.min(initial=0.0) >= -tol and ev.max(initial=0.0) <= 1 + tol)


def random_gaussian_state(N: int, filling: float = 0.5, seed=None) -> np.ndarray:
    """Random valid correlation matrix ``V diag(lam) V^dag`` with mean occupation ``filling``."""
    if not 0.0 <= filling <= 1.0:
        raise InvalidArgumentError("filling must lie in [0, 1]")
    rng = np.random.default_rng(seed)
    lam = rng.random(N)
    mean = lam.mean()
    if filling <= mean:
        lam = lam * (filling / mean)
    else:
        lam = 1.0 - (1.0 - lam) * (1.0 - filling) / (1.0 - mean)
    V = unitary_group.rvs(N, random_state=rng) if N > 1 else np.ones((1, 1), dtype=complex)
    C = (V * lam) @ V.conj().T
    return (C + C.conj().T) / 2
