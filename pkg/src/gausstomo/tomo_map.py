"""Measurement maps from initial correlations to occupation expectations, and their inverses."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .ensemble import QuenchEnsemble
from .errors import InvalidArgumentError, RankDeficientError, ResourceError
from .gaussian import SQRT2, SlotIndex, _pairs, evolve_correlations
from .lattice import chebyshev_patch

DEFAULT_MEMORY_CAP = 2 * 1024**3
DEFAULT_W_FLOOR = 1e-8


def _map(threads, fn, items):
    items = list(items)
    if threads and threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, items))
    return [fn(i) for i in items]


def diagonal_readout(V) -> np.ndarray:
    """Rows ``j`` evaluate ``x -> [conj(V) X V^T]_jj`` for ``X`` in the Hermitian basis.

    ``V`` has shape (rows, n): the columns of the propagator acting on the block
    being reconstructed.
    """
    V = np.asarray(V)
    a, b = _pairs(V.shape[1])
    w = V[:, a].conj() * V[:, b]
    return np.hstack([np.abs(V) ** 2, SQRT2 * w.real, -SQRT2 * w.imag])


def forward_map_single(U, system_sites, ancilla_sites=None):
    """Return ``(F_s, F_s_anc)``; ``F_s_anc`` is ``None`` when there are no ancillas."""
    U = np.asarray(U)
    F_s = diagonal_readout(U[:, list(system_sites)])
    if ancilla_sites is None:
        sys_ = set(system_sites)
        ancilla_sites = [i for i in range(U.shape[1]) if i not in sys_]
    F_anc = diagonal_readout(U[:, list(ancilla_sites)]) if len(ancilla_sites) else None
    return F_s, F_anc


def ancilla_offset(U, ancilla_sites, C_anc) -> np.ndarray:
    """``F_s_anc @ vec(C_anc)`` evaluated without forming ``F_s_anc``."""
    n = U.shape[0]
    if C_anc is None or not np.size(C_anc) or not np.any(C_anc):
        return np.zeros(n)
    Ua = np.asarray(U)[:, list(ancilla_sites)]
    return np.einsum("ja,ab,jb->j", Ua.conj(), np.asarray(C_anc), Ua).real


@dataclass
class MeasurementMap:
    """Stacked map ``F = (p_1 F_1; ...; p_S F_S)`` plus the ancilla offset ``d_anc``.

    ``row_s`` and ``row_site`` label each row by ensemble member and lattice site.
    """

    F: np.ndarray
    d_anc: np.ndarray
    row_s: np.ndarray
    row_site: np.ndarray
    probabilities: np.ndarray
    fingerprint: str
    n_system: int
    slots: np.ndarray | None = None

    @property
    def S(self) -> int:
        return len(self.probabilities)

    @property
    def rows_per_member(self) -> int:
        return self.F.shape[0] // self.S

    def expectation(self, C0) -> np.ndarray:
        """Exact ``E[z] = F vec(C0) + d_anc``."""
        from .gaussian import hermitian_to_vec

        x = hermitian_to_vec(C0)
        if self.slots is not None:
            x = x[self.slots]
        return self.F @ x + self.d_anc


def estimate_map_bytes(ensemble: QuenchEnsemble, n_rows=None, n_cols=None) -> int:
    rows = ensemble.S * (ensemble.n_total if n_rows is None else n_rows)
    cols = ensemble.N**2 if n_cols is None else n_cols
    return 8 * rows * cols


def stack_forward(
    ensemble: QuenchEnsemble,
    C_anc=None,
    *,
    memory_cap: int = DEFAULT_MEMORY_CAP,
    threads: int = 1,
    onsite_offset=None,
) -> MeasurementMap:
    need = estimate_map_bytes(ensemble)
    if need > memory_cap:
        raise ResourceError(
            f"stacked map needs ~{need / 1e9:.2f} GB (cap {memory_cap / 1e9:.2f} GB); "
            "use truncated_local_map for local observables"
        )
    sys_ = list(ensemble.system_sites)
    anc = list(ensemble.ancilla_sites)
    p = ensemble.probabilities
    Us = list(ensemble.unitaries(onsite_offset))

    def block(s):
        U = Us[s]
        return p[s] * diagonal_readout(U[:, sys_]), p[s] * ancilla_offset(U, anc, C_anc)

    blocks = _map(threads, block, range(ensemble.S))
    n_tot = ensemble.n_total
    return MeasurementMap(
        F=np.vstack([b[0] for b in blocks]),
        d_anc=np.concatenate([b[1] for b in blocks]),
        row_s=np.repeat(np.arange(ensemble.S), n_tot),
        row_site=np.tile(np.arange(n_tot), ensemble.S),
        probabilities=p,
        fingerprint=ensemble.fingerprint(),
        n_system=ensemble.N,
    )


# --------------------------------------------------------------------------
# rank diagnostics
# --------------------------------------------------------------------------

@dataclass
class RankReport:
    rank: int
    n_columns: int
    threshold: float
    singular_values: np.ndarray = field(repr=False)
    n_obs: int | None = None
    null_space: np.ndarray | None = field(default=None, repr=False)

    @property
    def full_rank(self) -> bool:
        return self.rank >= self.n_columns

    @property
    def sufficient(self) -> bool:
        """Whether the rank covers the requested observable count (or all columns)."""
        return self.rank >= (self.n_columns if self.n_obs is None else self.n_obs)

    def summary(self) -> dict:
        sv = self.singular_values
        return {
            "rank": self.rank,
            "n_columns": self.n_columns,
            "deficiency": self.n_columns - self.rank,
            "n_obs": self.n_obs,
            "sufficient": self.sufficient,
            "threshold": self.threshold,
            "sigma_max": float(sv[0]) if sv.size else 0.0,
            "sigma_min": float(sv[-1]) if sv.size else 0.0,
        }


def rank_check(F, threshold: float = 1e-10, n_obs: int | None = None) -> RankReport:
    """Numerical column rank of ``F`` at relative singular-value ``threshold``."""
    F = np.asarray(F)
    _, s, Vt = np.linalg.svd(F, full_matrices=True)
    smax = s[0] if s.size else 0.0
    rank = int(np.sum(s >= threshold * smax)) if smax > 0 else 0
    return RankReport(rank, F.shape[1], threshold, s, n_obs, Vt[rank:].T)


# --------------------------------------------------------------------------
# noise matrix and inverses
# --------------------------------------------------------------------------

def occupation_covariance(C) -> np.ndarray:
    """``Cov[n_j, n_k] = delta_jk C_jj - |C_jk|^2`` for a Gaussian state with kernel ``C``."""
    C = np.asarray(C)
    W = -np.abs(C) ** 2
    W[np.diag_indices_from(W)] += C.diagonal().real
    return W


def noise_matrix(ensemble: QuenchEnsemble, C_anc=None, threads: int = 1, onsite_offset=None) -> np.ndarray:
    """Blocks ``p_s W_s`` of shape (S, N_tot, N_tot), with the system replaced by ``I/2``."""
    n_tot = ensemble.n_total
    sys_ = np.asarray(ensemble.system_sites)
    C_bar = np.zeros((n_tot, n_tot), dtype=complex)
    C_bar[sys_, sys_] = 0.5
    if C_anc is not None and np.size(C_anc):
        anc = np.asarray(ensemble.ancilla_sites)
        C_bar[np.ix_(anc, anc)] = C_anc
    p = ensemble.probabilities
    Us = list(ensemble.unitaries(onsite_offset))

    def block(s):
        return p[s] * occupation_covariance(evolve_correlations(C_bar, Us[s]))

    return np.stack(_map(threads, block, range(ensemble.S)))


def as_blocks(W, rows_per_block: int) -> np.ndarray:
    W = np.asarray(W)
    if W.ndim == 3:
        return W
    S = W.shape[0] // rows_per_block
    return np.stack([W[s * rows_per_block:(s + 1) * rows_per_block, s * rows_per_block:(s + 1) * rows_per_block] for s in range(S)])


def block_diag_dense(blocks) -> np.ndarray:
    from scipy.linalg import block_diag

    return block_diag(*blocks)


@dataclass
class InverseBundle:
    """Left inverse ``G`` with the quantities needed for estimation and complexity queries.

    ``W`` is stored as diagonal blocks of shape (S, n, n). ``L`` is the Gram
    matrix ``F^T W^-1 F`` for the optimal inverse and ``None`` for SVD-based
    inverses. ``basis`` spans the retained subspace (columns), when truncated.
    """

    G: np.ndarray
    W: np.ndarray | None
    L: np.ndarray | None
    retained_rank: int
    dim: int
    method: str
    fingerprint: str = ""
    delta: float | None = None
    w_floor: float | None = None
    basis: np.ndarray | None = field(default=None, repr=False)
    singular_values: np.ndarray | None = field(default=None, repr=False)
    slots: np.ndarray | None = None
    row_sites: np.ndarray | None = None
    meta: dict = field(default_factory=dict)

    @property
    def projector(self) -> np.ndarray:
        if self.basis is None:
            return np.eye(self.dim)
        return self.basis @ self.basis.T

    def estimate(self, z, d_anc=None) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        if d_anc is not None:
            z = z - d_anc
        return self.G @ z

    def covariance(self, O=None) -> np.ndarray:
        """Single-shot covariance ``O G W G^T O^T`` (``O`` defaults to identity)."""
        if self.W is None:
            raise InvalidArgumentError("bundle carries no noise matrix")
        A = self.G if O is None else np.atleast_2d(O) @ self.G
        S, n, _ = self.W.shape
        A3 = A.reshape(A.shape[0], S, n)
        AW = np.einsum("ksn,snm->ksm", A3, self.W)
        return AW.reshape(A.shape[0], -1) @ A.T

    def projection_bias(self, F, O=None) -> float:
        """Spectral norm of ``O (G F - I)``: worst-case bias from truncation."""
        D = self.G @ F - np.eye(self.G.shape[0])
        if O is not None:
            D = np.atleast_2d(O) @ D
        return float(np.linalg.norm(D, 2)) if D.size else 0.0

    def sidecar(self) -> dict:
        return {
            "method": self.method,
            "fingerprint": self.fingerprint,
            "delta": self.delta,
            "w_floor": self.w_floor,
            "retained_rank": self.retained_rank,
            "dim": self.dim,
            **self.meta,
        }


def optimal_inverse(
    F, W, w_floor: float = DEFAULT_W_FLOOR, fingerprint: str = "", rank_rtol: float = 1e-12
) -> InverseBundle:
    """Minimum-variance left inverse ``G = L^-1 F^T W~^-1`` with ``L = F^T W~^-1 F``.

    ``W~ = W + w_floor I`` keeps deterministic (zero-variance) outcomes from
    making ``W`` singular. ``F`` must have full column rank at relative
    singular-value tolerance ``rank_rtol``.
    """
    fingerprint = fingerprint or getattr(F, "fingerprint", "")
    F = getattr(F, "F", F)
    F = np.asarray(F, dtype=float)
    n_rows, dim = F.shape
    sv = np.linalg.svd(F, compute_uv=False)
    rank = int(np.sum(sv >= rank_rtol * sv[0])) if sv.size and sv[0] > 0 else 0
    if rank < dim:
        raise RankDeficientError(
            f"measurement map has rank {rank} < {dim}: {dim - rank} directions unobservable",
            {"rank": rank, "n_columns": dim, "sigma_max": float(sv[0]) if sv.size else 0.0,
             "sigma_min": float(sv[-1]) if sv.size else 0.0},
        )
    Wb = np.asarray(W, dtype=float)
    if Wb.ndim == 2:
        Wb = Wb[None] if Wb.shape[0] == n_rows else None
    if Wb is None or Wb.shape[0] * Wb.shape[1] != n_rows:
        raise InvalidArgumentError("noise matrix does not conform to F")
    S, n, _ = Wb.shape
    Fb = F.reshape(S, n, dim)
    X = np.empty_like(Fb)
    eye = np.eye(n)
    for s in range(S):
        Ws = Wb[s] + w_floor * eye
        try:
            X[s] = cho_solve(cho_factor(Ws, lower=True), Fb[s])
        except LinAlgError:
            X[s] = np.linalg.lstsq(Ws, Fb[s], rcond=None)[0]
    X = X.reshape(n_rows, dim)
    L = F.T @ X
    L = (L + L.T) / 2
    ev = eigh(L, eigvals_only=True)
    lmax = ev[-1] if ev.size else 0.0
    tol = dim * np.finfo(float).eps * max(lmax, 1e-300)
    if ev.size == 0 or ev[0] <= tol:
        deficiency = int(np.sum(ev <= tol))
        raise RankDeficientError(
            f"Gram matrix is singular: {deficiency} of {dim} directions unobservable",
            {"rank": dim - deficiency, "n_columns": dim, "lambda_min": float(ev[0]), "lambda_max": float(lmax)},
        )
    G = cho_solve(cho_factor(L, lower=True), X.T)
    return InverseBundle(G, Wb, L, dim, dim, "optimal", fingerprint, None, w_floor)


def pseudo_inverse(F, delta: float = 1e-3, W=None, fingerprint: str = "") -> InverseBundle:
    """Truncated Moore-Penrose inverse discarding singular values below ``delta * sigma_max``.

    Singular values exactly at the threshold are kept.
    """
    if not 0 < delta <= 1:
        raise InvalidArgumentError("delta must lie in (0, 1]")
    fingerprint = fingerprint or getattr(F, "fingerprint", "")
    F = np.asarray(getattr(F, "F", F), dtype=float)
    U, s, Vt = np.linalg.svd(F, full_matrices=False)
    keep = s >= delta * s[0] if s.size and s[0] > 0 else np.zeros_like(s, dtype=bool)
    r = int(keep.sum())
    V = Vt[:r].T
    G = (V / s[:r]) @ U[:, :r].T
    Wb = None
    if W is not None:
        Wb = np.asarray(W, dtype=float)
        if Wb.ndim == 2:
            Wb = Wb[None]
    return InverseBundle(G, Wb, None, r, F.shape[1], "pseudo", fingerprint, delta, None, V, s)


# --------------------------------------------------------------------------
# localized inverse
# --------------------------------------------------------------------------

def default_inner_radius(ell_out: int, t_max: float) -> int:
    """Inner patch radius covering the outer patch's backward light cone.

    Band velocity of unit hopping is at most 2, so outer densities depend
    (up to exponential tails) on correlations within ``ell_out + 2 t_max``.
    """
    return int(ell_out + math.ceil(2.0 * t_max))


def truncated_local_map(
    ensemble: QuenchEnsemble,
    target: int,
    ell_in: int,
    ell_out: int,
    delta: float = 1e-3,
    C_anc=None,
    with_noise: bool = True,
) -> tuple[MeasurementMap, InverseBundle]:
    """Localized map around lattice site ``target`` and its truncated inverse.

    Rows are the occupations inside the outer Chebyshev patch (radius
    ``ell_out``) of every member; columns are the Hermitian-basis slots whose
    two sites both lie in the inner patch (radius ``ell_in``). The returned
    bundle's ``slots`` are indices into the full system basis and
    ``row_sites`` are the lattice sites read out per member.
    """
    lat = ensemble.lattice
    sys_ = list(ensemble.system_sites)
    sys_pos = {site: k for k, site in enumerate(sys_)}
    if target not in sys_pos:
        raise InvalidArgumentError(f"target site {target} is not a system site")
    outer = np.array(chebyshev_patch(lat, target, ell_out))
    inner_sites = [s for s in chebyshev_patch(lat, target, ell_in) if s in sys_pos]
    inner_sys = np.array([sys_pos[s] for s in inner_sites])
    # inner_sys is sorted, so these full-basis slots line up with the columns
    # of the inner-block readout below
    slots = SlotIndex(ensemble.N).slots_within(inner_sys)
    p = ensemble.probabilities
    anc = list(ensemble.ancilla_sites)
    blocks, d_blocks, W_blocks = [], [], []
    C_bar = None
    if with_noise:
        C_bar = np.zeros((ensemble.n_total,) * 2, dtype=complex)
        C_bar[sys_, sys_] = 0.5
        if C_anc is not None and np.size(C_anc):
            C_bar[np.ix_(anc, anc)] = C_anc
    for s in range(ensemble.S):
        U = ensemble.unitary(s)
        Uo = U[outer]
        blocks.append(p[s] * diagonal_readout(Uo[:, [sys_[k] for k in inner_sys]]))
        d_blocks.append(p[s] * ancilla_offset(Uo, anc, C_anc))
        if with_noise:
            Cs = Uo.conj() @ C_bar @ Uo.T
            W_blocks.append(p[s] * occupation_covariance(Cs))
    F = np.vstack(blocks)
    if F.shape[1] == 0:
        raise RankDeficientError("inner patch contains no slots", {"rank": 0, "n_columns": 0})
    mmap = MeasurementMap(
        F=F,
        d_anc=np.concatenate(d_blocks),
        row_s=np.repeat(np.arange(ensemble.S), len(outer)),
        row_site=np.tile(outer, ensemble.S),
        probabilities=p,
        fingerprint=ensemble.fingerprint(),
        n_system=ensemble.N,
        slots=slots,
    )
    bundle = pseudo_inverse(F, delta, np.stack(W_blocks) if with_noise else None, mmap.fingerprint)
    bundle.slots = slots
    bundle.row_sites = outer
    bundle.meta.update({"target": int(target), "ell_in": int(ell_in), "ell_out": int(ell_out)})
    return mmap, bundle
