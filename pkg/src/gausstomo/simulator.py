"""Exact snapshot sampling from Gaussian states and the linear estimators built on it.

Occupations of a fermionic Gaussian state form a determinantal process with
marginal kernel ``C``. Sites are visited in canonical order; after each
outcome the kernel of the remaining sites is conditioned by a Schur-complement
update. Kernels are kept in factorized form ``K = A M A^dag`` so that a shot
costs ``O(N_tot r^2)`` with ``r`` the number of initially occupied-able modes.
"""
from __future__ import annotations

import itertools
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError, NumericalError
from .ensemble import QuenchEnsemble
from .gaussian import embed, vec_to_hermitian

PROB_TOL = 1e-8
_BATCH_ELEMENTS = 4_000_000


def _step_probability(M, a):
    """``p = a M a^dag`` for each batch element, plus ``v = M a^dag``."""
    v = M @ a.conj()
    p = (v @ a).real
    return p, v


def _check_probability(p):
    if np.any(p < -PROB_TOL) or np.any(p > 1 + PROB_TOL):
        bad = p[(p < -PROB_TOL) | (p > 1 + PROB_TOL)][0]
        raise NumericalError(f"conditional occupation probability {bad:.3e} outside [0, 1]")
    return np.clip(p, 0.0, 1.0)


def _condition(M, v, p, occupied):
    """Schur-complement update of ``M`` after observing ``occupied`` at a site.

    Occupied: ``M - v v^dag / p``; empty: ``M + v v^dag / (1 - p)``.
    """
    denom = np.where(occupied, p, 1.0 - p)
    safe = denom > 0
    coef = np.where(occupied, -1.0, 1.0) / np.where(safe, denom, 1.0)
    coef = np.where(safe, coef, 0.0)
    M += coef[:, None, None] * (v[:, :, None] * v.conj()[:, None, :])
    return M


def sample_factorized(A, M0, uniforms) -> np.ndarray:
    """Draw one snapshot per row of ``uniforms`` from the kernel ``A M0 A^dag``.

    ``uniforms`` has shape (B, N_tot); site ``k`` of shot ``b`` is occupied
    when ``uniforms[b, k] < p``.
    """
    A = np.asarray(A, dtype=complex)
    uniforms = np.atleast_2d(uniforms)
    B, n_sites = uniforms.shape
    r = A.shape[1]
    out = np.zeros((B, n_sites), dtype=np.uint8)
    chunk = max(1, _BATCH_ELEMENTS // max(1, r * r))
    for lo in range(0, B, chunk):
        hi = min(B, lo + chunk)
        M = np.broadcast_to(np.asarray(M0, dtype=complex), (hi - lo, r, r)).copy()
        for k in range(n_sites):
            p, v = _step_probability(M, A[k])
            p = _check_probability(p)
            occ = uniforms[lo:hi, k] < p
            out[lo:hi, k] = occ
            if k + 1 < n_sites:
                M = _condition(M, v, p, occ)
    return out


def sample_occupations(C, rng=None) -> np.ndarray:
    """One exact snapshot ``n in {0,1}^N`` from the Gaussian state with correlation matrix ``C``."""
    C = np.asarray(C, dtype=complex)
    rng = np.random.default_rng(rng)
    return sample_factorized(np.eye(C.shape[0]), C, rng.random((1, C.shape[0])))[0]


def pattern_probability(C, n) -> float:
    """Probability of snapshot ``n`` as the product of the sampler's conditionals."""
    C = np.asarray(C, dtype=complex)
    n = np.asarray(n, dtype=bool)
    M = C[None].copy()
    prob = 1.0
    eye = np.eye(C.shape[0])
    for k in range(C.shape[0]):
        p, v = _step_probability(M, eye[k])
        p = _check_probability(p)
        prob *= p[0] if n[k] else 1.0 - p[0]
        if prob == 0.0:
            return 0.0
        M = _condition(M, v, p, n[k:k + 1])
    return float(prob)


def all_patterns(N: int) -> np.ndarray:
    return np.array(list(itertools.product((0, 1), repeat=N)), dtype=np.uint8)


def pattern_distribution(C) -> np.ndarray:
    """Sampler-implied probabilities of all ``2^N`` patterns, in ``all_patterns`` order."""
    N = np.asarray(C).shape[0]
    return np.array([pattern_probability(C, n) for n in all_patterns(N)])


def void_probability(C, sites) -> float:
    """``P(n_j = 0 for all j in sites) = det(I - C_A)``."""
    sites = list(sites)
    if not sites:
        return 1.0
    CA = np.asarray(C)[np.ix_(sites, sites)]
    return float(np.linalg.det(np.eye(len(sites)) - CA).real)


def inclusion_exclusion_distribution(C) -> np.ndarray:
    """Pattern probabilities from void probabilities alone (independent oracle).

    ``P(occupied set = X) = sum_{Y subset X} (-1)^|Y| P(void on Y u X^c)``.
    """
    N = np.asarray(C).shape[0]
    probs = []
    for n in all_patterns(N):
        X = [i for i in range(N) if n[i]]
        Xc = [i for i in range(N) if not n[i]]
        total = 0.0
        for k in range(len(X) + 1):
            for Y in itertools.combinations(X, k):
                total += (-1) ** k * void_probability(C, Xc + list(Y))
        probs.append(total)
    return np.array(probs)


# --------------------------------------------------------------------------
# experiments
# --------------------------------------------------------------------------

@dataclass
class ShotDataset:
    """Records ``(s_r, n_r)``; ``s`` is stored 0-based, exported 1-based."""

    s: np.ndarray
    n: np.ndarray
    fingerprint: str
    seed: int | None = None
    meta: dict = field(default_factory=dict)

    @property
    def R(self) -> int:
        return len(self.s)

    @property
    def n_sites(self) -> int:
        return self.n.shape[1]

    def records(self):
        return [(int(s) + 1, tuple(int(x) for x in n)) for s, n in zip(self.s, self.n)]

    def subset(self, idx) -> "ShotDataset":
        return ShotDataset(self.s[idx], self.n[idx], self.fingerprint, self.seed, dict(self.meta))

    def mean_z(self, S: int, sites=None) -> np.ndarray:
        """Empirical mean of ``z_r = n_r (x) e_{s_r}``, laid out as (s, site) blocks."""
        n = self.n if sites is None else self.n[:, sites]
        z = np.zeros((S, n.shape[1]))
        np.add.at(z, self.s, n)
        return z.ravel() / self.R


def record_stream(seed: int, r: int) -> np.random.Generator:
    """Independent generator for record ``r``; results do not depend on batching."""
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(r,)))


def record_draws(seed: int, R: int, n_sites: int, probabilities) -> tuple[np.ndarray, np.ndarray]:
    """Member labels and per-site uniforms for ``R`` records."""
    cdf = np.cumsum(probabilities)
    cdf[-1] = 1.0
    s = np.empty(R, dtype=np.int64)
    u = np.empty((R, n_sites))
    for r in range(R):
        g = record_stream(seed, r)
        s[r] = np.searchsorted(cdf, g.random(), side="right")
        u[r] = g.random(n_sites)
    return s, u


def run_experiment(C0, ensemble: QuenchEnsemble, R: int, seed: int, C_anc=None) -> ShotDataset:
    """Simulate ``R`` repetitions: draw ``s ~ p``, evolve, measure all occupations."""
    if R < 1:
        raise InvalidArgumentError("R must be at least 1")
    C0 = np.asarray(C0, dtype=complex)
    if C0.shape != (ensemble.N, ensemble.N):
        raise InvalidArgumentError(f"C0 has shape {C0.shape}, expected {(ensemble.N,) * 2}")
    n_tot = ensemble.n_total
    C_tot = embed(C0, ensemble.system_sites, n_tot, C_anc, ensemble.ancilla_sites)
    keep = np.flatnonzero(np.any(C_tot != 0, axis=1))
    M0 = C_tot[np.ix_(keep, keep)]
    s, u = record_draws(seed, R, n_tot, ensemble.probabilities)
    n = np.zeros((R, n_tot), dtype=np.uint8)
    for member in np.unique(s):
        idx = np.flatnonzero(s == member)
        A = ensemble.unitary(int(member))[:, keep].conj()
        n[idx] = sample_factorized(A, M0, u[idx])
    return ShotDataset(s, n, ensemble.fingerprint(), seed, {"ensemble": ensemble.to_dict()})


# --------------------------------------------------------------------------
# estimators
# --------------------------------------------------------------------------

@dataclass
class EstimateResult:
    value: complex | float
    stderr: float
    R_used: int
    stderr_parts: tuple[float, float] | None = None

    def to_dict(self) -> dict:
        v = self.value
        out = {"stderr": self.stderr, "R_used": self.R_used}
        if isinstance(v, complex):
            out.update(value_re=v.real, value_im=v.imag)
        else:
            out["value"] = float(v)
        return out


def _check_compatible(dataset: ShotDataset, bundle) -> None:
    if bundle.fingerprint and dataset.fingerprint and bundle.fingerprint != dataset.fingerprint:
        raise InvalidArgumentError(
            f"dataset ensemble {dataset.fingerprint} does not match bundle ensemble {bundle.fingerprint}"
        )


def _restrict(bundle, o):
    o = np.asarray(o, dtype=float)
    slots = getattr(bundle, "slots", None)
    if slots is not None and o.shape[0] != bundle.G.shape[0]:
        o = o[slots]
    return o


def shot_estimates(dataset: ShotDataset, bundle, o, d_anc=None) -> np.ndarray:
    """Single-shot estimators ``(o|G z_r) - mu_O`` for a real functional ``o``."""
    _check_compatible(dataset, bundle)
    o = _restrict(bundle, o)
    sites = getattr(bundle, "row_sites", None)
    n = dataset.n if sites is None else dataset.n[:, sites]
    b = (bundle.G.T @ o).reshape(-1, n.shape[1])
    theta = np.empty(dataset.R)
    for member in np.unique(dataset.s):
        idx = np.flatnonzero(dataset.s == member)
        theta[idx] = n[idx] @ b[member]
    if d_anc is not None and np.any(d_anc):
        theta -= float(o @ (bundle.G @ np.asarray(d_anc)))
    return theta


def _mean_se(theta):
    R = len(theta)
    se = float(np.std(theta, ddof=1) / np.sqrt(R)) if R > 1 else float("inf")
    return float(np.mean(theta)), se


def estimate_observable(dataset: ShotDataset, bundle, d_anc, o) -> EstimateResult:
    """Estimate ``<O>``; ``o`` is a real functional or an ``Observable`` (complex if non-Hermitian)."""
    if hasattr(o, "re"):
        re_val, re_se = _mean_se(shot_estimates(dataset, bundle, o.re, d_anc))
        if o.is_hermitian:
            return EstimateResult(re_val, re_se, dataset.R)
        im_val, im_se = _mean_se(shot_estimates(dataset, bundle, o.im, d_anc))
        return EstimateResult(complex(re_val, im_val), float(np.hypot(re_se, im_se)), dataset.R, (re_se, im_se))
    val, se = _mean_se(shot_estimates(dataset, bundle, o, d_anc))
    return EstimateResult(val, se, dataset.R)


def estimate_vector(dataset: ShotDataset, bundle, d_anc=None) -> np.ndarray:
    """``G (mean z - d_anc)`` in the bundle's coordinates."""
    _check_compatible(dataset, bundle)
    S = bundle.G.shape[1] // (dataset.n_sites if bundle.row_sites is None else len(bundle.row_sites))
    zbar = dataset.mean_z(S, bundle.row_sites)
    if d_anc is not None:
        zbar = zbar - d_anc
    return bundle.G @ zbar


def estimate_correlation_matrix(dataset: ShotDataset, bundle, d_anc=None) -> np.ndarray:
    """Sample-mean estimate of ``C0`` mapped back to a Hermitian matrix."""
    if bundle.slots is not None:
        raise InvalidArgumentError("localized bundles estimate only patch slots; use estimate_vector")
    return vec_to_hermitian(estimate_vector(dataset, bundle, d_anc))
