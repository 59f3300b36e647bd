"""Named quadratic observables expressed as real functionals on the Hermitian basis."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InvalidArgumentError
from .gaussian import SlotIndex, observable_to_vec
from .lattice import Lattice


@dataclass
class Observable:
    """``<O> = sum_ij coeffs_ij C_ij`` split into real functionals for its real and imaginary part."""

    name: str
    coeffs: np.ndarray
    re: np.ndarray
    im: np.ndarray

    @property
    def is_hermitian(self) -> bool:
        return not np.any(self.im)

    @classmethod
    def from_matrix(cls, name: str, coeffs) -> "Observable":
        coeffs = np.asarray(coeffs, dtype=complex)
        re, im = observable_to_vec(coeffs)
        return cls(name, coeffs, re, im)


def matrix_element(N: int, i: int, j: int, name: str | None = None) -> Observable:
    """The correlator ``<c_i^dag c_j>``."""
    if not (0 <= i < N and 0 <= j < N):
        raise InvalidArgumentError(f"element ({i}, {j}) outside {N}x{N}")
    o = np.zeros((N, N), dtype=complex)
    o[i, j] = 1.0
    return Observable.from_matrix(name or f"C[{i},{j}]", o)


def center_site(lattice: Lattice) -> int:
    return lattice.index((lattice.Lx - 1) // 2, (lattice.Ly - 1) // 2)


def middle_current(N: int, lattice: Lattice | None = None) -> Observable:
    """``<c_m^dag c_{m+1}>`` at the centre of a chain (or along x at the centre of a grid)."""
    if lattice is None or lattice.Ly == 1:
        m = (N - 1) // 2
        return matrix_element(N, m, m + 1, "middle_current")
    m = center_site(lattice)
    return matrix_element(N, m, m + 1, "middle_current")


def long_range_current(N: int, d: int | None = None) -> Observable:
    """``<c_i^dag c_{i+d}>`` centred on the chain; ``d`` defaults to ``N // 2``."""
    d = N // 2 if d is None else int(d)
    if not 1 <= d < N:
        raise InvalidArgumentError(f"distance {d} invalid for N={N}")
    i = max(0, (N - 1) // 2 - d // 2)
    i = min(i, N - 1 - d)
    return matrix_element(N, i, i + d, f"long_range_current_{d}")


def local_slots(N: int, max_range: int = 1, coords=None) -> np.ndarray:
    """Basis slots of densities and correlators between sites at most ``max_range`` apart."""
    return SlotIndex(N).slots_with_range(max_range, coords)


def resolve(name: str, N: int, lattice: Lattice | None = None) -> Observable:
    """Parse shortcuts ``middle_current``, ``long_range_current`` / ``long_range_current(d)``."""
    name = name.strip()
    if name == "middle_current":
        return middle_current(N, lattice)
    if name.startswith("long_range_current"):
        arg = name[len("long_range_current"):].strip("()")
        return long_range_current(N, int(arg) if arg else None)
    raise InvalidArgumentError(f"unknown observable shortcut {name!r}")
