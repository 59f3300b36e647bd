import numpy as np
import pytest

from gausstomo.errors import InvalidArgumentError
from gausstomo.gaussian import SlotIndex, hermitian_to_vec, random_gaussian_state
from gausstomo.lattice import chain, grid
from gausstomo.observables import (
    Observable,
    center_site,
    local_slots,
    long_range_current,
    matrix_element,
    middle_current,
    resolve,
)


def test_middle_current_position():
    ob = middle_current(8)
    assert ob.coeffs[3, 4] == 1 and np.count_nonzero(ob.coeffs) == 1
    assert not ob.is_hermitian
    g = grid(5, 5)
    ob2 = middle_current(25, g)
    m = center_site(g)
    assert m == g.index(2, 2)
    assert ob2.coeffs[m, m + 1] == 1


def test_long_range_current():
    ob = long_range_current(10)
    i, j = np.argwhere(ob.coeffs)[0]
    assert j - i == 5 and 0 <= i and j < 10
    with pytest.raises(InvalidArgumentError):
        long_range_current(4, 4)


def test_functionals_reproduce_element():
    C = random_gaussian_state(6, seed=2)
    ob = matrix_element(6, 1, 4)
    x = hermitian_to_vec(C)
    assert complex(ob.re @ x, ob.im @ x) == pytest.approx(C[1, 4])


def test_hermitian_observable_has_no_imaginary_part():
    o = np.zeros((3, 3))
    o[0, 1] = o[1, 0] = 1
    assert Observable.from_matrix("x", o).is_hermitian


def test_local_slots_range_one():
    N = 5
    idx = SlotIndex(N)
    sl = set(local_slots(N, 1).tolist())
    expect = set(range(N)) | {idx.sym(a, a + 1) for a in range(N - 1)} | {idx.anti(a, a + 1) for a in range(N - 1)}
    assert sl == expect


def test_local_slots_grid_coords():
    g = grid(3, 3)
    sl = local_slots(9, 1, g.all_coords())
    # Chebyshev range 1 takes bonds and plaquette diagonals
    n_diag = 2 * 2 * 2
    assert len(sl) == 9 + 2 * (len(g.edges) + n_diag)


def test_resolve():
    assert resolve("middle_current", 6).name == "middle_current"
    assert resolve("long_range_current(2)", 6).name == "long_range_current_2"
    with pytest.raises(InvalidArgumentError):
        resolve("nope", 6)
