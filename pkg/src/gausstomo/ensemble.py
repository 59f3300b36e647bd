"""Quench ensembles for the local (randomized) and global (single-quench) schemes."""
from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from .errors import InvalidArgumentError
from .gaussian import Propagator, build_hamiltonian
from .lattice import Lattice, chain, expansion_layout

GLOBAL_THETA_L = 0.798
GLOBAL_TIME_PER_SITE = 0.75


@dataclass(frozen=True)
class QuenchParams:
    t: float
    h: float
    phi: float
    theta_L: float

    def __post_init__(self):
        if not self.t > 0:
            raise InvalidArgumentError(f"evolution time must be positive, got {self.t}")
        if self.h < 0:
            raise InvalidArgumentError(f"potential strength must be non-negative, got {self.h}")


@dataclass(frozen=True)
class QuenchEnsemble:
    """Weighted quench list on a lattice whose ``system_sites`` carry the target state."""

    lattice: Lattice
    members: tuple[tuple[float, QuenchParams], ...]
    system_sites: tuple[int, ...]
    _unitaries: dict = field(default_factory=dict, repr=False, compare=False, hash=False)

    def __post_init__(self):
        if not self.members:
            raise InvalidArgumentError("ensemble needs at least one member")
        p = np.array([m[0] for m in self.members])
        if np.any(p <= 0) or abs(p.sum() - 1) > 1e-12:
            raise InvalidArgumentError("member probabilities must be positive and sum to 1")

    @property
    def S(self) -> int:
        return len(self.members)

    @property
    def N(self) -> int:
        return len(self.system_sites)

    @property
    def n_total(self) -> int:
        return self.lattice.n_sites

    @property
    def probabilities(self) -> np.ndarray:
        return np.array([m[0] for m in self.members])

    @property
    def ancilla_sites(self) -> tuple[int, ...]:
        sys_ = set(self.system_sites)
        return tuple(i for i in range(self.n_total) if i not in sys_)

    def hamiltonian(self, s: int, lattice_offset=None) -> np.ndarray:
        q = self.members[s][1]
        H = build_hamiltonian(self.lattice, q.h, q.phi, q.theta_L).data
        if lattice_offset is not None:
            H = H + np.diag(lattice_offset)
        return H

    def unitary(self, s: int) -> np.ndarray:
        """``exp(-i t_s H_s)`` on the full lattice, cached per member."""
        U = self._unitaries.get(s)
        if U is None:
            U = Propagator(self.hamiltonian(s))(self.members[s][1].t)
            self._unitaries[s] = U
        return U

    def unitaries(self, onsite_offset=None):
        """Yield all member unitaries; an ``onsite_offset`` bypasses the cache."""
        for s in range(self.S):
            if onsite_offset is None:
                yield self.unitary(s)
            else:
                yield Propagator(self.hamiltonian(s, onsite_offset))(self.members[s][1].t)

    def to_dict(self) -> dict:
        return {
            "lattice": self.lattice.to_dict(),
            "system_sites": list(self.system_sites),
            "members": [
                {"p": p, "t": q.t, "h": q.h, "phi": q.phi, "theta_L": q.theta_L}
                for p, q in self.members
            ],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "QuenchEnsemble":
        members = tuple(
            (float(m["p"]), QuenchParams(float(m["t"]), float(m["h"]), float(m["phi"]), float(m["theta_L"])))
            for m in d["members"]
        )
        return cls(Lattice.from_dict(d["lattice"]), members, tuple(int(i) for i in d["system_sites"]))

    def fingerprint(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()[:16]


def grid_values(upper: float, grid_points: int) -> np.ndarray:
    """Right endpoints of ``grid_points`` equal intervals of ``(0, upper]``."""
    return upper * np.arange(1, grid_points + 1) / grid_points


def sample_local_ensemble(
    S: int,
    t_max: float,
    h_max: float,
    theta_L: float,
    grid_points: int = 30,
    seed=None,
    lattice: Lattice | None = None,
    N: int | None = None,
) -> QuenchEnsemble:
    """Draw ``S`` grid tuples ``(t, h, phi)`` uniformly with replacement, ``p_s = 1/S``.

    The lattice defaults to a chain of ``N`` sites; all sites belong to the system.
    """
    if S < 1 or grid_points < 1:
        raise InvalidArgumentError("S and grid_points must be at least 1")
    if not (t_max > 0 and h_max > 0):
        raise InvalidArgumentError("t_max and h_max must be positive")
    if lattice is None:
        if N is None:
            raise InvalidArgumentError("pass either a lattice or N")
        lattice = chain(N)
    rng = np.random.default_rng(seed)
    ts = grid_values(t_max, grid_points)
    hs = grid_values(h_max, grid_points)
    phis = grid_values(2 * np.pi, grid_points)
    idx = rng.integers(0, grid_points, size=(S, 3))
    members = tuple(
        (1.0 / S, QuenchParams(float(ts[i]), float(hs[j]), float(phis[k]), float(theta_L)))
        for i, j, k in idx
    )
    return QuenchEnsemble(lattice, members, tuple(range(lattice.n_sites)))


def global_scheme_ensemble(
    N: int,
    system_row: int = 0,
    h: float = 1.0,
    phi: float = 0.0,
    theta_L: float = GLOBAL_THETA_L,
    time_per_site: float = GLOBAL_TIME_PER_SITE,
) -> QuenchEnsemble:
    layout = expansion_layout(N, system_row)
    q = QuenchParams(time_per_site * N, h, phi, theta_L)
    return QuenchEnsemble(layout.lattice, ((1.0, q),), layout.system_sites)
