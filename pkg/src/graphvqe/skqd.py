"""Sample-based Krylov subspace ground-energy estimation.

Reference states are Trotter-evolved through uniform time steps dt, each
Krylov state is measured in the computational basis, and the Hamiltonian is
projected onto the span of all sampled bitstrings (an orthonormal set, so the
projected problem is a standard eigenproblem).  Because subspaces are
accumulated across Krylov indices, the minimum eigenvalue is non-increasing
in the Krylov dimension (eigenvalue interlacing) and the error curve is
monotone.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import qsim
from .pauli import Hamiltonian, basis_action, operator_norm
from .qsim import Gate, NoiseSpec

REL_ERROR_FLOOR = 1e-6  # |E0| below this flags absolute instead of relative error


@dataclass(frozen=True)
class SkqdConfig:
    d_max: int = 10
    trotter_steps: int = 10
    shots: int = 25
    noise: NoiseSpec | None = None
    seed: int = 0

    def __post_init__(self):
        if self.d_max < 1:
            raise ValueError("d_max must be >= 1")
        if self.shots < 1:
            raise ValueError("shots must be >= 1")
        if self.trotter_steps < 1:
            raise ValueError("trotter_steps must be >= 1")


@dataclass(frozen=True)
class InitialState:
    """Reference state plus (optionally) the gate record that prepared it.

    Without a record, gate-level noise cannot be replayed and only readout
    noise applies to its samples.
    """

    psi: np.ndarray
    gates: tuple = ()
    base: np.ndarray | None = None  # replay start state; default |0...0>

    def record_for(self, evolution: list, k: int) -> list:
        return list(self.gates) + list(evolution) * k


@dataclass
class SampledSubspace:
    """Distinct sampled bitstrings in first-appearance order with provenance."""

    strings: list = field(default_factory=list)
    first_k: dict = field(default_factory=dict)

    def add(self, bits: str, k: int) -> None:
        if bits not in self.first_k:
            self.first_k[bits] = k
            self.strings.append(bits)

    def at_dim(self, d: int) -> list:
        """Strings contributed by Krylov indices k < d (nested accumulation)."""
        return [s for s in self.strings if self.first_k[s] < d]

    def __len__(self) -> int:
        return len(self.strings)


def krylov_time_step(h: Hamiltonian) -> float:
    """Uniform Krylov time step dt = pi / ||H||."""
    return float(np.pi / operator_norm(h))


def krylov_states(h: Hamiltonian, psi0: np.ndarray, d: int, dt: float, steps: int) -> list:
    """[psi_0, ..., psi_{d-1}] with psi_k one Trotterized dt step past psi_{k-1}."""
    if abs(np.linalg.norm(psi0) - 1.0) > 1e-8:
        raise ValueError("reference state must be normalized")
    states = [psi0]
    for _ in range(d - 1):
        states.append(qsim.trotter_evolve(h, states[-1], dt, steps))
    return states


def build_subspace(
    h: Hamiltonian,
    init: InitialState,
    config: SkqdConfig,
    rng: np.random.Generator,
    dt: float | None = None,
) -> SampledSubspace:
    """Measure every Krylov state ``config.shots`` times and pool the strings."""
    if dt is None:
        dt = krylov_time_step(h)
    states = krylov_states(h, init.psi, config.d_max, dt, config.trotter_steps)
    evolution = qsim.trotter_gates(h, dt, config.trotter_steps)
    subspace = SampledSubspace()
    for k, psi_k in enumerate(states):
        record = init.record_for(evolution, k) if config.noise is not None else None
        shots = qsim.sample_bitstrings(
            psi_k,
            config.shots,
            rng,
            noise=config.noise,
            record=record,
            base_state=init.base,
        )
        for bits in shots:
            subspace.add(bits, k)
    return subspace


def ground_estimate(h: Hamiltonian, strings: list) -> float:
    """Minimum eigenvalue of H projected onto the span of sampled bitstrings."""
    if not strings:
        raise ValueError("empty subspace")
    index = {qsim.bits_to_index(s): col for col, s in enumerate(strings)}
    size = len(strings)
    mat = np.zeros((size, size), dtype=complex)
    terms = h.canonical_terms()
    for y, col in index.items():
        for coeff, sites in terms:
            x, phase = basis_action(y, sites)
            row = index.get(x)
            if row is not None:
                mat[row, col] += coeff * phase
    return float(np.linalg.eigvalsh(mat)[0])


@dataclass(frozen=True)
class CurvePoint:
    d: int
    estimate: float
    error: float
    subspace_size: int
    absolute: bool  # True when |E0| < floor forced an absolute error


def run_curve(
    h: Hamiltonian,
    init: InitialState,
    config: SkqdConfig,
    e0: float,
    rng: np.random.Generator | None = None,
) -> list:
    """Ground-energy error versus Krylov dimension over nested subspaces.

    Asserts the interlacing monotonicity of the estimates (tolerance 1e-10)
    and the variational bound against the oracle energy ``e0``.
    """
    if rng is None:
        rng = np.random.default_rng(config.seed)
    dt = krylov_time_step(h)
    subspace = build_subspace(h, init, config, rng, dt)
    absolute = abs(e0) < REL_ERROR_FLOOR
    points = []
    previous = np.inf
    for d in range(1, config.d_max + 1):
        strings = subspace.at_dim(d)
        estimate = ground_estimate(h, strings)
        if estimate > previous + 1e-10:
            raise AssertionError(
                f"interlacing violated at d={d}: {estimate} > {previous}"
            )
        if estimate < e0 - 1e-8:
            raise AssertionError(f"variational bound violated: {estimate} < {e0}")
        previous = min(previous, estimate)
        err = abs(estimate - e0) if absolute else abs(estimate - e0) / abs(e0)
        points.append(CurvePoint(d, estimate, err, len(strings), absolute))
    return points


def haar_initial_state(n: int, rng: np.random.Generator) -> InitialState:
    """Haar-random reference state.

    There is no preparing circuit, so noise replay starts from the state
    itself and only the evolution gates (plus readout) pick up noise.
    """
    psi = qsim.haar_random_state(n, rng)
    return InitialState(psi=psi, base=psi)


def ansatz_initial_state(n: int, depth: int, theta: np.ndarray) -> InitialState:
    """Reference state prepared by the ladder-wise ansatz, with its gate record."""
    gates = tuple(qsim.hea_gates(n, depth, theta))
    return InitialState(psi=qsim.apply_record(list(gates), qsim.zero_state(n)), gates=gates)
