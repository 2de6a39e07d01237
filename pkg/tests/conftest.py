import numpy as np
import pytest

from graphvqe.pauli import AXES, Hamiltonian


def random_hamiltonian(n: int, rng: np.random.Generator, edge_prob: float = 0.6) -> Hamiltonian:
    """Random one/two-local Hamiltonian for property tests."""
    two, one = {}, {}
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < edge_prob:
                for _ in range(rng.integers(1, 4)):
                    a, b = rng.choice(AXES), rng.choice(AXES)
                    two[(i, j, str(a), str(b))] = float(rng.normal())
        if rng.random() < 0.5:
            one[(i, str(rng.choice(AXES)))] = float(rng.normal())
    if not two and not one:
        one[(0, "z")] = 1.0
    return Hamiltonian(n, two, one)


def random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    psi = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return psi / np.linalg.norm(psi)


@pytest.fixture
def rng():
    return np.random.default_rng(20250810)
