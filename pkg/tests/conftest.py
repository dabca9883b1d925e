import numpy as np
import pytest

from spreadhl.pauli_model import ModelHamiltonian

ACCEPTANCE_LINES: list[str] = []


def random_hermitian(d, rng):
    a = rng.normal(size=(d, d)) + 1j * rng.normal(size=(d, d))
    return (a + a.conj().T) / 2


def random_state(d, rng):
    v = rng.normal(size=d) + 1j * rng.normal(size=d)
    return v / np.linalg.norm(v)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture
def theta_z():
    def make(theta):
        return ModelHamiltonian(1, ((theta, "Z"),))
    return make


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in ACCEPTANCE_LINES:
            terminalreporter.write_line(line)


def hand_dataset(angles, bases, records, dt=0.01, alpha=1.0, m_t=1, model=None, exact=False):
    """Dataset with explicit probes, bases and records (for likelihood tests)."""
    from spreadhl.dataset import MeasurementDataset

    md = {"n": len(bases[0]), "true_model": None if model is None else model.to_dict(),
          "master_seed": 0, "dt": dt, "alpha": alpha, "m_t": m_t, "R": len(angles),
          "K": len(bases), "S": max(rec[3] for rec in records) + 1, "bases": list(bases),
          "angles": [list(map(float, np.ravel(a))) for a in angles], "exact": exact}
    return MeasurementDataset(md, list(records))
