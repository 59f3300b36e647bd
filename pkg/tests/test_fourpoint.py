import numpy as np
import pytest

from gausstomo import fock
from gausstomo.ensemble import global_scheme_ensemble, sample_local_ensemble
from gausstomo.errors import InvalidArgumentError, RankDeficientError, ResourceError
from gausstomo.fourpoint import (
    correlators_from_reduced,
    density_density_functional,
    element_functional,
    estimate_fourpoint,
    forward_map_4,
    n_pairs,
    quartic_measurement_vector,
    readout_map,
    reduced_dim,
    reduced_from_correlators,
    run_fock_experiment,
    u4_map,
)
from gausstomo.gaussian import build_hamiltonian, evolve_correlations, propagator, random_gaussian_state
from gausstomo.lattice import chain

from conftest import random_hermitian, random_unitary


def gaussian_four_point(C):
    """Wick: <c_i^dag c_j c_k^dag c_l> = C_ij C_kl + C_il (delta_jk - C_kj)."""
    N = C.shape[0]
    return np.einsum("ij,kl->ijkl", C, C) + np.einsum("il,jk->ijkl", C, np.eye(N) - C.T)


def test_fock_two_point_of_gaussian_ground_state():
    N = 4
    H = build_hamiltonian(chain(N), 1.0, 0.3, 0.5).data
    E, V = np.linalg.eigh(fock.quadratic_hamiltonian(H))
    psi = V[:, 0]
    e, v = np.linalg.eigh(H)
    occ = v[:, e < 0]
    # C_ij = <c_i^dag c_j> = sum_occ conj(v_i) v_j
    np.testing.assert_allclose(fock.two_point(psi), occ.conj() @ occ.T, atol=1e-10)
    np.testing.assert_allclose(fock.four_point(psi), gaussian_four_point(occ.conj() @ occ.T), atol=1e-10)


def test_identity_map():
    np.testing.assert_allclose(u4_map(np.eye(3)), np.eye(reduced_dim(3)), atol=1e-14)


def test_group_property(rng):
    U1, U2 = random_unitary(rng, 4), random_unitary(rng, 4)
    np.testing.assert_allclose(u4_map(U1 @ U2), u4_map(U1) @ u4_map(U2), atol=1e-9)


@pytest.mark.parametrize("N", [3, 4])
def test_transport_matches_fock_oracle(N):
    g = np.random.default_rng(N)
    Hsp = random_hermitian(g, N)
    t = 0.9
    U = propagator(Hsp, t)
    V = fock.many_body_propagator(Hsp, t)
    for seed in range(3):
        psi = fock.random_pure_state(N, seed)
        x0 = reduced_from_correlators(fock.two_point(psi), fock.four_point(psi))
        phi = V @ psi
        x1 = reduced_from_correlators(fock.two_point(phi), fock.four_point(phi))
        assert np.abs(u4_map(U) @ x0 - x1).max() < 1e-9


def test_two_point_block_matches_gaussian_evolution(rng):
    C = random_gaussian_state(3, seed=1)
    U = random_unitary(rng, 3)
    x = reduced_from_correlators(C, gaussian_four_point(C))
    Ct, _ = correlators_from_reduced(u4_map(U) @ x, 3)
    np.testing.assert_allclose(Ct, evolve_correlations(C, U), atol=1e-12)


def test_reduced_round_trip_and_symmetry():
    psi = fock.random_pure_state(4, 7)
    C, D = fock.two_point(psi), fock.four_point(psi)
    C2, D2 = correlators_from_reduced(reduced_from_correlators(C, D), 4)
    np.testing.assert_allclose(C2, C, atol=1e-12)
    np.testing.assert_allclose(D2, D, atol=1e-12)
    # D'_ijkl = conj(D'_lkji)
    np.testing.assert_allclose(D, np.conj(np.transpose(D, (3, 2, 1, 0))), atol=1e-12)


def test_element_and_density_functionals():
    psi = fock.random_pure_state(4, 3)
    C, D = fock.two_point(psi), fock.four_point(psi)
    x = reduced_from_correlators(C, D)
    for idx in [(0, 1, 2, 3), (1, 2, 2, 0), (3, 3, 1, 0), (2, 0, 0, 2)]:
        re, im = element_functional(4, *idx)
        assert complex(re @ x, im @ x) == pytest.approx(D[idx], abs=1e-12)
    occ = fock.occupations(4).astype(float)
    prob = np.abs(psi) ** 2
    for j, jp in [(0, 3), (1, 2), (2, 2)]:
        assert density_density_functional(4, j, jp) @ x == pytest.approx(prob @ (occ[:, j] * occ[:, jp]), abs=1e-12)


def test_quartic_vector():
    np.testing.assert_array_equal(quartic_measurement_vector(np.array([1, 1])), [1, 1, 1])
    for N in range(1, 6):
        v = quartic_measurement_vector(np.zeros(N))
        assert len(v) == N + n_pairs(N) and not v.any()


def test_readout_matches_wick_expectation(rng):
    C = random_gaussian_state(4, seed=2)
    U = random_unitary(rng, 4)
    pred = readout_map(U) @ reduced_from_correlators(C, gaussian_four_point(C))
    Cs = evolve_correlations(C, U)
    d = np.diag(Cs).real
    a, b = np.triu_indices(4, 1)
    direct = np.r_[d, d[a] * d[b] - np.abs(Cs[a, b]) ** 2]
    np.testing.assert_allclose(pred, direct, atol=1e-9)


def test_forward_map_rank_and_round_trip():
    N = 4
    ens = sample_local_ensemble(200, 5.0, 6.0, 2 / 3, seed=1, N=N)
    F, b = forward_map_4(ens, delta=1e-12)
    psi = fock.random_pure_state(N, 5)
    x = reduced_from_correlators(fock.two_point(psi), fock.four_point(psi))
    np.testing.assert_allclose(b.projector @ x, b.G @ (F @ x), atol=1e-6)
    assert b.retained_rank == reduced_dim(N)


def test_forward_map_errors():
    small = sample_local_ensemble(3, 5.0, 6.0, 2 / 3, seed=1, N=4)
    with pytest.raises(RankDeficientError) as exc:
        forward_map_4(small)
    assert exc.value.report["null_space"].shape[1] > 0
    with pytest.raises(ResourceError):
        forward_map_4(sample_local_ensemble(3, 5.0, 6.0, 2 / 3, seed=1, N=9))
    with pytest.raises(InvalidArgumentError):
        forward_map_4(global_scheme_ensemble(2))


def test_gaussian_density_density_estimate():
    N = 3
    ens = sample_local_ensemble(100, 5.0, 6.0, 2 / 3, seed=4, N=N)
    _, b = forward_map_4(ens)
    C = random_gaussian_state(N, seed=3)
    from gausstomo.simulator import run_experiment

    data = run_experiment(C, ens, 20000, seed=1)
    est = estimate_fourpoint(data, b, density_density_functional(N, 0, 2))
    truth = (C[0, 0] * C[2, 2] - abs(C[0, 2]) ** 2).real
    assert abs(est.value - truth) < 4 * est.stderr
    # n_j^2 = n_j
    nn = estimate_fourpoint(data, b, density_density_functional(N, 1, 1))
    assert abs(nn.value - C[1, 1].real) < 4 * nn.stderr
