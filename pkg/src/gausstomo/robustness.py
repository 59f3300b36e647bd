"""Reconstruction bias under miscalibrated quench Hamiltonians."""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .ensemble import QuenchEnsemble, global_scheme_ensemble, sample_local_ensemble
from .errors import RankDeficientError
from .lattice import chain
from .observables import local_slots
from .tomo_map import noise_matrix, optimal_inverse, pseudo_inverse, stack_forward


def perturb_hamiltonian(H, nu: float, rng) -> np.ndarray:
    """``H + diag(xi)`` with ``xi_i ~ Normal(0, nu)`` (``nu`` is the variance)."""
    H = np.asarray(H, dtype=float)
    return H + np.diag(disorder(H.shape[0], nu, rng))


def disorder(n: int, nu: float, rng) -> np.ndarray:
    rng = np.random.default_rng(rng)
    return np.sqrt(nu) * rng.standard_normal(n) if nu > 0 else np.zeros(n)


def bias_metric(G, F_err, basis=None, rows=None, spectral_radius: bool = False) -> float:
    """Largest singular value of ``G F_err - I`` on the retained subspace.

    ``basis`` (columns) spans the retained subspace; ``rows`` restricts the
    output to observable directions (slot indices or a functional matrix).
    With ``spectral_radius`` the largest |eigenvalue| of the compressed
    square operator is returned instead.
    """
    G = np.asarray(G)
    F_err = np.asarray(F_err)
    dim = G.shape[0]
    if rows is not None:
        rows = np.asarray(rows)
        O = np.eye(dim)[rows] if rows.ndim == 1 else rows
    else:
        O = None
    GO = G if O is None else O @ G
    D = GO @ F_err - (np.eye(dim) if O is None else O)
    if basis is not None:
        D = D @ basis
    if spectral_radius:
        Q = basis if basis is not None else np.eye(dim)
        square = (Q.T @ D) if O is None else (O @ Q).T @ D
        return float(np.max(np.abs(np.linalg.eigvals(square)))) if square.size else 0.0
    return float(np.linalg.norm(D, 2)) if D.size else 0.0


@dataclass
class SweepConfig:
    scheme: str = "local"
    sizes: tuple = (10, 20, 30, 40)
    S: int = 400
    t_max: float = 5.0
    h_max: float = 6.0
    theta_L: float = 2 / 3
    grid_points: int = 30
    ensemble_seed: int = 0
    delta: float = 1e-3
    local_range: int = 1
    w_floor: float = 1e-8
    system_row: int = 0
    h_grid: tuple = tuple(np.linspace(0.0, 5.0, 6))
    phi_grid: tuple = tuple(np.linspace(0.0, np.pi / 2, 3))


@dataclass
class RobustnessSweep:
    scheme: str
    nu_values: list
    trials: int
    records: list = field(default_factory=list)  # dicts: N, nu, trial, metric, radius, h, phi
    best: dict = field(default_factory=dict)  # (N, nu) -> {"metric", "h", "phi"} re-optimized per nu
    best_overall: dict = field(default_factory=dict)  # N -> {"h", "phi", "metrics": {nu: max}}

    def maxima(self) -> dict:
        """``(N, nu) -> max metric over trials`` (best (h, phi) for the global scheme)."""
        if self.best:
            return {k: v["metric"] for k, v in self.best.items()}
        out: dict = {}
        for rec in self.records:
            key = (rec["N"], rec["nu"])
            out[key] = max(out.get(key, 0.0), rec["metric"])
        return out


def _trial_rng(seed, N, nu_index, trial):
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(int(N), int(nu_index), int(trial))))


def _member_maps(ensemble: QuenchEnsemble, offset=None):
    return stack_forward(ensemble, onsite_offset=offset).F


def _local_setup(cfg: SweepConfig, N: int):
    ens = sample_local_ensemble(cfg.S, cfg.t_max, cfg.h_max, cfg.theta_L, cfg.grid_points, cfg.ensemble_seed, chain(N))
    bundle = pseudo_inverse(stack_forward(ens), cfg.delta)
    rows = local_slots(N, cfg.local_range)
    return ens, bundle.G[rows], bundle.basis, rows


def _global_setup(cfg: SweepConfig, N: int, h: float, phi: float):
    ens = global_scheme_ensemble(N, cfg.system_row, h=h, phi=phi, theta_L=0.798)
    mmap = stack_forward(ens)
    bundle = optimal_inverse(mmap, noise_matrix(ens), cfg.w_floor)
    return ens, bundle.G


def robustness_sweep(cfg: SweepConfig, nu_values, trials: int = 50, seed: int = 0) -> RobustnessSweep:
    """Max-over-trials bias metric for each system size and disorder variance.

    Within a trial one disorder draw perturbs every ensemble member. For the
    global scheme every (h, phi) combination sees the same draws and the best
    combination is reported both per ``nu`` and once across all ``nu``.
    """
    if trials < 1:
        raise ValueError("trials must be at least 1")
    nu_values = [float(v) for v in nu_values]
    sweep = RobustnessSweep(cfg.scheme, nu_values, trials)
    for N in cfg.sizes:
        if cfg.scheme == "local":
            ens, G_rows, basis, rows = _local_setup(cfg, N)
            for k, nu in enumerate(nu_values):
                for trial in range(trials):
                    xi = disorder(ens.n_total, nu, _trial_rng(seed, N, k, trial))
                    F_err = _member_maps(ens, xi if nu > 0 else None)
                    E = G_rows @ F_err - np.eye(F_err.shape[1])[rows]
                    metric = float(np.linalg.norm(E @ basis, 2))
                    # spectral radius of the operator compressed to the local slots
                    radius = float(np.max(np.abs(np.linalg.eigvals(E[:, rows]))))
                    sweep.records.append({"N": N, "nu": nu, "trial": trial, "metric": metric, "radius": radius, "h": None, "phi": None})
        else:
            table = {}
            for h in cfg.h_grid:
                for phi in cfg.phi_grid:
                    try:
                        ens, G = _global_setup(cfg, N, float(h), float(phi))
                    except RankDeficientError:
                        continue
                    for k, nu in enumerate(nu_values):
                        worst = 0.0
                        for trial in range(trials):
                            xi = disorder(ens.n_total, nu, _trial_rng(seed, N, k, trial))
                            F_err = _member_maps(ens, xi if nu > 0 else None)
                            m = bias_metric(G, F_err)
                            radius = bias_metric(G, F_err, spectral_radius=True)
                            worst = max(worst, m)
                            sweep.records.append({"N": N, "nu": nu, "trial": trial, "metric": m, "radius": radius, "h": float(h), "phi": float(phi)})
                        table[(float(h), float(phi), nu)] = worst
            combos = sorted({(h, phi) for h, phi, _ in table})
            for nu in nu_values:
                h, phi = min(combos, key=lambda c: table[(c[0], c[1], nu)])
                sweep.best[(N, nu)] = {"metric": table[(h, phi, nu)], "h": h, "phi": phi}
            h, phi = min(combos, key=lambda c: np.mean([np.log10(table[(c[0], c[1], nu)] + 1e-300) for nu in nu_values]))
            sweep.best_overall[N] = {"h": h, "phi": phi, "metrics": {nu: table[(h, phi, nu)] for nu in nu_values}}
    return sweep


def growth_slope(maxima: dict, nu: float, sizes) -> float:
    """Least-squares slope of metric vs N at fixed ``nu``."""
    sizes = list(sizes)
    y = [maxima[(N, nu)] for N in sizes]
    return float(np.polyfit(sizes, y, 1)[0])
