"""Sample-complexity quantities derived from an inverse bundle."""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from enum import Enum

import numpy as np
from scipy.linalg import LinAlgError, cho_factor, cho_solve, eigh

from .errors import InvalidArgumentError

EIG_TOL = 1e-13


class MetricKind(str, Enum):
    OBSERVABLE = "observable"
    WORST = "worst"
    AVERAGE = "average"


@dataclass
class ComplexityReport:
    sigma2: float
    R_required: float
    kind: MetricKind
    epsilon: float
    unrecoverable_norm: float = 0.0

    def to_dict(self) -> dict:
        d = asdict(self)
        d["kind"] = self.kind.value
        return d


def _factor(L):
    L = np.asarray(L, dtype=float)
    try:
        return cho_factor(L, lower=True)
    except LinAlgError:
        return None


def sigma_observable(L, o, return_residual: bool = False):
    """``(o|L^-1|o)`` via a Cholesky solve.

    If ``L`` is singular, the component of ``o`` outside its range cannot be
    estimated; the variance of the recoverable part is returned and, with
    ``return_residual``, the norm of the unrecoverable component as well.
    """
    L = np.asarray(L, dtype=float)
    o = np.asarray(o, dtype=float)
    fac = _factor(L)
    if fac is not None:
        val = float(o @ cho_solve(fac, o))
        return (val, 0.0) if return_residual else val
    ev, V = eigh(L)
    good = ev > EIG_TOL * max(ev[-1], 1e-300)
    c = V.T @ o
    val = float(np.sum(c[good] ** 2 / ev[good]))
    resid = float(np.linalg.norm(c[~good]))
    return (val, resid) if return_residual else val


def sigma_worst(L) -> float:
    """``||L^-1|| = 1 / lambda_min(L)``; ``inf`` if ``L`` is numerically singular."""
    L = np.asarray(L, dtype=float)
    lam = eigh(L, eigvals_only=True, subset_by_index=[0, 0])[0]
    lmax = eigh(L, eigvals_only=True, subset_by_index=[L.shape[0] - 1, L.shape[0] - 1])[0]
    if lam <= EIG_TOL * max(lmax, 1e-300):
        return math.inf
    return float(1.0 / lam)


def sigma_avg(L) -> float:
    """``tr(L^-1) / dim``, where ``dim = N^2`` is the number of basis slots."""
    L = np.asarray(L, dtype=float)
    fac = _factor(L)
    if fac is None:
        return math.inf
    Linv = cho_solve(fac, np.eye(L.shape[0]))
    return float(np.trace(Linv) / L.shape[0])


def covariance_worst(cov) -> float:
    """Largest eigenvalue of a covariance block: worst unit-norm observable in its span."""
    cov = np.asarray(cov, dtype=float)
    return float(eigh((cov + cov.T) / 2, eigvals_only=True)[-1])


def predicted_variance(G, W, o) -> float:
    """Single-shot variance ``(o|G W G^T|o)``; ``W`` dense or as (S, n, n) blocks."""
    o = np.asarray(o, dtype=float)
    b = np.asarray(G).T @ o
    W = np.asarray(W)
    if W.ndim == 3:
        S, n, _ = W.shape
        b3 = b.reshape(S, n)
        return float(np.einsum("sn,snm,sm->", b3, W, b3))
    return float(b @ W @ b)


def samples_required(sigma2: float, epsilon: float, p_fail: float | None = None) -> int:
    """Repetitions for accuracy ``epsilon``.

    Without ``p_fail`` the standard error equals ``epsilon``; with it, Chebyshev
    guarantees ``Pr[|error| > epsilon] <= p_fail``.
    """
    if epsilon <= 0:
        raise InvalidArgumentError("epsilon must be positive")
    if p_fail is not None and not 0 < p_fail < 1:
        raise InvalidArgumentError("p_fail must lie in (0, 1)")
    if not math.isfinite(sigma2):
        return math.inf
    denom = epsilon**2 * (1.0 if p_fail is None else p_fail)
    # guard against float noise pushing an exact ratio over an integer
    return max(1, math.ceil(sigma2 / denom - 1e-9))


def report(sigma2: float, epsilon: float, kind, p_fail=None, unrecoverable=0.0) -> ComplexityReport:
    return ComplexityReport(float(sigma2), samples_required(sigma2, epsilon, p_fail), MetricKind(kind), epsilon, unrecoverable)
