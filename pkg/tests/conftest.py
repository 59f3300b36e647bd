import numpy as np
import pytest

from gausstomo.ensemble import QuenchEnsemble, QuenchParams
from gausstomo.lattice import chain


@pytest.fixture
def rng():
    return np.random.default_rng(1234)


def random_hermitian(rng, n):
    A = rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n))
    return (A + A.conj().T) / 2


def random_unitary(rng, n):
    Q, R = np.linalg.qr(rng.normal(size=(n, n)) + 1j * rng.normal(size=(n, n)))
    return Q * (np.diag(R) / abs(np.diag(R)))


def identity_ensemble(N):
    """Single-member ensemble whose cached unitary is forced to the identity."""
    ens = QuenchEnsemble(chain(N), ((1.0, QuenchParams(1.0, 0.0, 0.0, 0.0)),), tuple(range(N)))
    ens._unitaries[0] = np.eye(N, dtype=complex)
    return ens


def pytest_terminal_summary(terminalreporter):
    mod = __import__("sys").modules.get("test_acceptance")
    if mod is None or not getattr(mod, "RESULTS", None):
        return
    terminalreporter.section("acceptance criteria")
    for line in sorted(mod.RESULTS, key=lambda s: int(s.split("criterion")[1].split(":")[0])):
        terminalreporter.write_line(line)
