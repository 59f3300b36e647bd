"""Two- and four-point correlator tomography from the same occupation snapshots.

Coordinates
-----------
Four-point correlators ``D'[i,j,k,l] = <c_i^dag c_j c_k^dag c_l>`` are
redundant: anticommutation gives

    D'[i,j,k,l] = delta_jk C[i,l] + T[i,k,j,l],   T[i,k,j,l] = <c_i^dag c_k^dag c_l c_j>

with ``T`` antisymmetric in ``(i,k)`` and in ``(j,l)``. The reduced vector is
``vec(C) (+) vec(Gamma)`` where ``Gamma[(i,k),(j,l)] = T[i,k,j,l]`` over ordered
pairs ``i < k``, ``j < l``. ``Gamma`` is Hermitian, so both blocks use the
real Hermitian basis. A number-conserving quench maps ``Gamma -> conj(Lam) Gamma
Lam^T`` with ``Lam = U ^ U`` (antisymmetric square), so the transport map is
block diagonal, and ``<n_j n_j'> = Gamma[(j,j'),(j,j')]``.
"""
from __future__ import annotations

import numpy as np

from . import fock
from .ensemble import QuenchEnsemble
from .errors import InvalidArgumentError, RankDeficientError, ResourceError
from .gaussian import _pairs, hermitian_to_vec, observable_to_vec, vec_to_hermitian
from .observables import Observable
from .simulator import ShotDataset, estimate_observable, record_stream
from .tomo_map import diagonal_readout, pseudo_inverse, rank_check

DEFAULT_CAP = 8


def _check_cap(N: int, cap: int) -> None:
    if N > cap:
        raise ResourceError(f"four-point maps are limited to N <= {cap} (got N={N})")


def n_pairs(N: int) -> int:
    return N * (N - 1) // 2


def reduced_dim(N: int) -> int:
    return N * N + n_pairs(N) ** 2


def pair_unitary(U) -> np.ndarray:
    """``(U ^ U)[(j,l),(b,d)] = U_jb U_ld - U_jd U_lb`` on ordered pairs."""
    U = np.asarray(U)
    a, b = _pairs(U.shape[0])
    return U[np.ix_(a, a)] * U[np.ix_(b, b)] - U[np.ix_(a, b)] * U[np.ix_(b, a)]


def conjugation_map(V) -> np.ndarray:
    """Real matrix of ``x -> vec(conj(V) X V^T)`` on the Hermitian basis."""
    V = np.asarray(V)
    n = V.shape[0]
    basis = vec_to_hermitian(np.eye(n * n))
    moved = V.conj()[None] @ basis @ V.T[None]
    a, b = _pairs(n)
    d = np.arange(n)
    off = moved[:, a, b]
    cols = np.concatenate([moved[:, d, d].real, np.sqrt(2) * off.real, np.sqrt(2) * off.imag], axis=1)
    return cols.T


def u4_map(U, cap: int = DEFAULT_CAP) -> np.ndarray:
    """Transport of the reduced correlation vector under ``U``; block diagonal."""
    U = np.asarray(U)
    N = U.shape[0]
    _check_cap(N, cap)
    R2 = conjugation_map(U)
    R4 = conjugation_map(pair_unitary(U))
    out = np.zeros((reduced_dim(N),) * 2)
    out[: N * N, : N * N] = R2
    out[N * N:, N * N:] = R4
    return out


# --------------------------------------------------------------------------
# conversions between the full four-index tensor and reduced coordinates
# --------------------------------------------------------------------------

def reduced_from_correlators(C, D) -> np.ndarray:
    """Reduced vector from ``C`` and the full tensor ``D'``."""
    C = np.asarray(C)
    D = np.asarray(D)
    N = C.shape[0]
    a, b = _pairs(N)
    # Gamma[(i,k),(j,l)] = D'[i,j,k,l] - delta_jk C[i,l]
    Gam = D[a[:, None], a[None, :], b[:, None], b[None, :]].copy()
    delta = (a[None, :] == b[:, None])  # j == k
    Gam -= np.where(delta, C[a[:, None], b[None, :]], 0)
    return np.concatenate([hermitian_to_vec(C), hermitian_to_vec(Gam, tol=1e-8)])


def split_reduced(x, N: int) -> tuple[np.ndarray, np.ndarray]:
    x = np.asarray(x, dtype=float)
    return vec_to_hermitian(x[: N * N]), vec_to_hermitian(x[N * N:])


def antisymmetric_tensor(Gam, N: int) -> np.ndarray:
    """``T[i,k,j,l]`` from the pair matrix ``Gamma``."""
    a, b = _pairs(N)
    T = np.zeros((N,) * 4, dtype=complex)
    P = np.arange(len(a))
    for sgn_row, (r1, r2) in ((1, (a, b)), (-1, (b, a))):
        for sgn_col, (c1, c2) in ((1, (a, b)), (-1, (b, a))):
            T[r1[:, None], r2[:, None], c1[None, :], c2[None, :]] = sgn_row * sgn_col * Gam[P[:, None], P[None, :]]
    return T


def correlators_from_reduced(x, N: int) -> tuple[np.ndarray, np.ndarray]:
    """Inverse of ``reduced_from_correlators``: returns ``(C, D')``."""
    C, Gam = split_reduced(x, N)
    T = antisymmetric_tensor(Gam, N)
    D = np.transpose(T, (0, 2, 1, 3)).copy()  # D[i,j,k,l] <- T[i,k,j,l]
    eye = np.eye(N)
    D += np.einsum("jk,il->ijkl", eye, C)
    return C, D


def element_functional(N: int, i: int, j: int, k: int, l: int) -> tuple[np.ndarray, np.ndarray]:
    """Real functionals for the real and imaginary part of ``D'[i,j,k,l]``."""
    M = n_pairs(N)
    re = np.zeros(reduced_dim(N))
    im = np.zeros(reduced_dim(N))
    if j == k:
        o = np.zeros((N, N))
        o[i, l] = 1
        r2, i2 = observable_to_vec(o)
        re[: N * N] += r2
        im[: N * N] += i2
    if i != k and j != l:
        sign = (1 if i < k else -1) * (1 if j < l else -1)
        P = _pair_position(N, min(i, k), max(i, k))
        Q = _pair_position(N, min(j, l), max(j, l))
        o = np.zeros((M, M))
        o[P, Q] = sign
        r4, i4 = observable_to_vec(o)
        re[N * N:] += r4
        im[N * N:] += i4
    return re, im


def density_density_functional(N: int, j: int, jp: int) -> np.ndarray:
    """Functional for ``<n_j n_j'>``; reduces to ``<n_j>`` when ``j == j'``."""
    x = np.zeros(reduced_dim(N))
    if j == jp:
        x[j] = 1.0
    else:
        x[N * N + _pair_position(N, min(j, jp), max(j, jp))] = 1.0
    return x


def _pair_position(N: int, a: int, b: int) -> int:
    return a * N - a * (a + 1) // 2 + (b - a - 1)


# --------------------------------------------------------------------------
# measurement model
# --------------------------------------------------------------------------

def quartic_measurement_vector(n) -> np.ndarray:
    """Single-site occupations followed by products ``n_j n_j'`` for ``j < j'``."""
    n = np.asarray(n)
    a, b = _pairs(n.shape[-1])
    return np.concatenate([n, n[..., a] * n[..., b]], axis=-1)


def readout_map(U) -> np.ndarray:
    """``F_s = B U^(4)``: expectations of the quartic vector from the reduced ``|D_0)``."""
    U = np.asarray(U)
    N = U.shape[0]
    M = n_pairs(N)
    F = np.zeros((N + M, reduced_dim(N)))
    F[:N, : N * N] = diagonal_readout(U)
    F[N:, N * N:] = diagonal_readout(pair_unitary(U))
    return F


def forward_map_4(ensemble: QuenchEnsemble, delta: float = 1e-3, cap: int = DEFAULT_CAP, rank_tol: float = 1e-10):
    """Stacked four-point map and its truncated pseudo-inverse.

    Raises ``RankDeficientError`` (with a null-space basis in ``report``) if the
    map is structurally rank deficient at relative tolerance ``rank_tol``.
    """
    if ensemble.ancilla_sites:
        raise InvalidArgumentError("four-point tomography is implemented without ancillas")
    _check_cap(ensemble.N, cap)
    p = ensemble.probabilities
    F = np.vstack([p[s] * readout_map(ensemble.unitary(s)) for s in range(ensemble.S)])
    rep = rank_check(F, rank_tol)
    if not rep.full_rank:
        raise RankDeficientError(
            f"four-point map has rank {rep.rank} < {F.shape[1]}",
            {**rep.summary(), "null_space": rep.null_space},
        )
    bundle = pseudo_inverse(F, delta, fingerprint=ensemble.fingerprint())
    bundle.meta["kind"] = "fourpoint"
    return F, bundle


def quartic_dataset(dataset: ShotDataset) -> ShotDataset:
    return ShotDataset(dataset.s, quartic_measurement_vector(dataset.n), dataset.fingerprint, dataset.seed, dict(dataset.meta))


def estimate_fourpoint(dataset: ShotDataset, bundle4, coeffs):
    """Estimate a linear functional of the reduced vector from raw occupation data.

    ``coeffs`` is a real functional or a ``(re, im)`` pair for complex targets.
    """
    data4 = quartic_dataset(dataset)
    if isinstance(coeffs, tuple):
        re, im = coeffs
        coeffs = Observable("fourpoint", None, np.asarray(re, float), np.asarray(im, float))
    return estimate_observable(data4, bundle4, None, coeffs)


# --------------------------------------------------------------------------
# exact Fock-space experiments for non-Gaussian targets
# --------------------------------------------------------------------------

def run_fock_experiment(psi, ensemble: QuenchEnsemble, R: int, seed: int) -> ShotDataset:
    """Occupation snapshots of ``V_s |psi>`` with ``s ~ p``, sampled exactly in Fock space."""
    if R < 1:
        raise InvalidArgumentError("R must be at least 1")
    N = ensemble.N
    if ensemble.ancilla_sites:
        raise InvalidArgumentError("Fock experiments are implemented without ancillas")
    patterns = fock.occupations(N)
    cdf_s = np.cumsum(ensemble.probabilities)
    cdf_s[-1] = 1.0
    s = np.empty(R, dtype=np.int64)
    u = np.empty(R)
    for r in range(R):
        g = record_stream(seed, r)
        s[r] = np.searchsorted(cdf_s, g.random(), side="right")
        u[r] = g.random()
    n = np.zeros((R, N), dtype=np.uint8)
    for member in np.unique(s):
        q = ensemble.members[member][1]
        V = fock.many_body_propagator(ensemble.hamiltonian(int(member)), q.t)
        prob = np.abs(V @ psi) ** 2
        cdf = np.cumsum(prob / prob.sum())
        cdf[-1] = 1.0
        idx = np.flatnonzero(s == member)
        n[idx] = patterns[np.searchsorted(cdf, u[idx], side="right")]
    return ShotDataset(s, n, ensemble.fingerprint(), seed, {"ensemble": ensemble.to_dict(), "source": "fock"})
