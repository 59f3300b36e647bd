"""Rectangular lattices with open boundaries.

Sites are indexed row-major, ``index = y * Lx + x``; every vectorization in
the package inherits this order.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .errors import InvalidArgumentError


class LatticeKind(str, Enum):
    CHAIN = "chain"
    GRID = "grid"


@dataclass(frozen=True)
class Lattice:
    kind: LatticeKind
    Lx: int
    Ly: int = 1
    edges: tuple[tuple[int, int], ...] = field(default=(), repr=False, compare=False)

    @property
    def n_sites(self) -> int:
        return self.Lx * self.Ly

    def coords(self, site: int) -> tuple[int, int]:
        if not 0 <= site < self.n_sites:
            raise InvalidArgumentError(f"site {site} outside lattice of {self.n_sites} sites")
        return site % self.Lx, site // self.Lx

    def index(self, x: int, y: int = 0) -> int:
        if not (0 <= x < self.Lx and 0 <= y < self.Ly):
            raise InvalidArgumentError(f"coordinates ({x}, {y}) outside {self.Lx}x{self.Ly} lattice")
        return y * self.Lx + x

    def all_coords(self) -> np.ndarray:
        """Integer array of shape (n_sites, 2) holding (x, y) per site."""
        idx = np.arange(self.n_sites)
        return np.stack([idx % self.Lx, idx // self.Lx], axis=1)

    def adjacency(self) -> np.ndarray:
        A = np.zeros((self.n_sites, self.n_sites), dtype=int)
        for i, j in self.edges:
            A[i, j] = A[j, i] = 1
        return A

    def to_dict(self) -> dict:
        return {"kind": self.kind.value, "Lx": self.Lx, "Ly": self.Ly}

    @classmethod
    def from_dict(cls, d: dict) -> "Lattice":
        return build_lattice(d["kind"], int(d["Lx"]), int(d.get("Ly", 1)))


def build_lattice(kind, Lx: int, Ly: int = 1) -> Lattice:
    kind = LatticeKind(kind.value if isinstance(kind, LatticeKind) else str(kind).lower())
    if Lx < 1 or Ly < 1:
        raise InvalidArgumentError(f"lattice dimensions must be positive, got {Lx}x{Ly}")
    if kind is LatticeKind.CHAIN and Ly != 1:
        raise InvalidArgumentError("a chain has Ly = 1")
    edges = []
    for y in range(Ly):
        for x in range(Lx):
            i = y * Lx + x
            if x + 1 < Lx:
                edges.append((i, i + 1))
            if y + 1 < Ly:
                edges.append((i, i + Lx))
    return Lattice(kind, Lx, Ly, tuple(sorted(edges)))


def chain(N: int) -> Lattice:
    return build_lattice(LatticeKind.CHAIN, N, 1)


def grid(Lx: int, Ly: int) -> Lattice:
    return build_lattice(LatticeKind.GRID, Lx, Ly)


@dataclass(frozen=True)
class ExpansionLayout:
    """A 1d system of ``N`` sites embedded as one row of an ``N x (N + 11)`` grid."""

    lattice: Lattice
    system_row: int
    system_sites: tuple[int, ...]
    ancilla_sites: tuple[int, ...]

    @property
    def N(self) -> int:
        return len(self.system_sites)


EXTRA_ROWS = 11


def expansion_layout(N: int, system_row: int = 0) -> ExpansionLayout:
    if N < 2:
        raise InvalidArgumentError("expansion layout needs N >= 2")
    Ly = N + EXTRA_ROWS
    if not 0 <= system_row < Ly:
        raise InvalidArgumentError(f"system_row {system_row} outside [0, {Ly})")
    lat = grid(N, Ly)
    sys_sites = tuple(system_row * N + x for x in range(N))
    in_sys = set(sys_sites)
    anc = tuple(i for i in range(lat.n_sites) if i not in in_sys)
    return ExpansionLayout(lat, system_row, sys_sites, anc)


def sublattice_sign(lattice: Lattice, site: int) -> int:
    x, y = lattice.coords(site)
    return 1 if (x + y) % 2 == 0 else -1


def sublattice_matrix(lattice: Lattice) -> np.ndarray:
    return np.diag([sublattice_sign(lattice, i) for i in range(lattice.n_sites)]).astype(float)


def chebyshev_patch(lattice: Lattice, center: int, ell: int) -> tuple[int, ...]:
    """Sites within Chebyshev distance ``ell`` of ``center``, clipped, in canonical order."""
    if ell < 0:
        raise InvalidArgumentError("patch radius must be non-negative")
    cx, cy = lattice.coords(center)
    xy = lattice.all_coords()
    mask = np.maximum(np.abs(xy[:, 0] - cx), np.abs(xy[:, 1] - cy)) <= ell
    return tuple(int(i) for i in np.flatnonzero(mask))
