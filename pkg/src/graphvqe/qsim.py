"""Dense statevector simulator.

Provides Pauli-rotation gates, the ladder-wise hardware-efficient ansatz,
expectation values, ground-space fidelity, first-order Trotter evolution,
computational-basis sampling with an optional stochastic Pauli noise model,
and ansatz-parameter gradients (parameter-shift and adjoint sweeps, which
agree analytically).

Conventions: rotations are exp(-i theta/2 * P); statevectors are little-endian
(qubit 0 = least significant bit); emitted bitstrings put qubit 0 first.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .pauli import Hamiltonian, Spectrum, apply_to_state, pauli_action

_SINGLE = ("x", "y", "z")
_PAIRED = ("xx", "yy", "zz")


@dataclass(frozen=True)
class Gate:
    """A Pauli rotation exp(-i theta/2 * P) on one or two qubits.

    ``param`` is the index of the driving parameter in the enclosing circuit's
    parameter vector, or -1 for fixed-angle gates (e.g. Trotter factors).
    """

    kind: str
    qubits: tuple
    theta: float
    param: int = -1

    def sites(self) -> tuple[tuple[int, str], ...]:
        return tuple((q, ax) for q, ax in zip(self.qubits, self.kind))


@dataclass(frozen=True)
class NoiseSpec:
    """Stochastic noise: per-gate depolarizing insertion + readout flips."""

    p1: float = 0.0
    p2: float = 0.0
    p_readout: float = 0.0

    def __post_init__(self):
        for name in ("p1", "p2", "p_readout"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} outside [0, 1]")

    def is_zero(self) -> bool:
        return self.p1 == 0.0 and self.p2 == 0.0 and self.p_readout == 0.0


# -----------------------------------------------------------------------------
# states and gates
# -----------------------------------------------------------------------------


def zero_state(n: int) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[0] = 1.0
    return psi


def basis_state(n: int, bits: str) -> np.ndarray:
    psi = np.zeros(1 << n, dtype=complex)
    psi[bits_to_index(bits)] = 1.0
    return psi


def haar_random_state(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-measure random state: i.i.d. complex normal amplitudes, normalized."""
    amps = rng.normal(size=1 << n) + 1j * rng.normal(size=1 << n)
    return amps / np.linalg.norm(amps)


def index_to_bits(k: int, n: int) -> str:
    return "".join("1" if (k >> i) & 1 else "0" for i in range(n))


def bits_to_index(bits: str) -> int:
    return sum(1 << i for i, b in enumerate(bits) if b == "1")


def apply_pauli_rotation(psi: np.ndarray, kind: str, qubits: tuple, theta: float) -> np.ndarray:
    """exp(-i theta/2 * P)|psi> for P the Pauli string named by ``kind``."""
    if kind in _SINGLE:
        if len(qubits) != 1:
            raise ValueError(f"{kind} rotation needs one qubit, got {qubits}")
    elif kind in _PAIRED:
        if len(qubits) != 2 or qubits[0] == qubits[1]:
            raise ValueError(f"{kind} rotation needs two distinct qubits, got {qubits}")
    else:
        raise ValueError(f"unknown rotation kind {kind!r}")
    dim = psi.shape[0]
    for q in qubits:
        if not 0 <= q < dim.bit_length() - 1:
            raise ValueError(f"qubit index {q} out of range")
    sites = tuple((q, ax) for q, ax in zip(qubits, kind))
    return np.cos(theta / 2) * psi - 1j * np.sin(theta / 2) * pauli_action(psi, sites)


def apply_gate(psi: np.ndarray, gate: Gate) -> np.ndarray:
    return apply_pauli_rotation(psi, gate.kind, gate.qubits, gate.theta)


def apply_record(record: list, psi: np.ndarray) -> np.ndarray:
    for g in record:
        psi = apply_gate(psi, g)
    return psi


# -----------------------------------------------------------------------------
# ladder-wise hardware-efficient ansatz
# -----------------------------------------------------------------------------


def hea_param_count(n: int, depth: int) -> int:
    """Parameter count 3n + 5nD of the ladder-wise ansatz."""
    return 3 * n + 5 * n * depth


def hea_gates(n: int, depth: int, theta: np.ndarray) -> list:
    """Gate sequence of the ladder-wise ansatz.

    Layout: an initial universal single-qubit layer (per qubit: x, z, x; 3n
    parameters), then ``depth`` blocks of n zz + n xx + n yy ladder rotations
    on pairs (i, i+1 mod n) followed by per-qubit x then z rotations (5n per
    block).
    """
    if n < 2:
        raise ValueError("ansatz needs n >= 2 for the two-qubit ladder")
    theta = np.asarray(theta, dtype=float)
    expect = hea_param_count(n, depth)
    if theta.shape != (expect,):
        raise ValueError(f"expected {expect} parameters for (n={n}, D={depth}), got {theta.shape}")
    gates = []
    k = 0
    for i in range(n):
        for kind in ("x", "z", "x"):
            gates.append(Gate(kind, (i,), float(theta[k]), k))
            k += 1
    for _ in range(depth):
        for kind in ("zz", "xx", "yy"):
            for i in range(n):
                pair = (i, (i + 1) % n)
                gates.append(Gate(kind, pair, float(theta[k]), k))
                k += 1
        for i in range(n):
            for kind in ("x", "z"):
                gates.append(Gate(kind, (i,), float(theta[k]), k))
                k += 1
    return gates


def hea_prepare(n: int, depth: int, theta: np.ndarray) -> np.ndarray:
    """U(theta)|0...0> for the ladder-wise ansatz."""
    return apply_record(hea_gates(n, depth, theta), zero_state(n))


# -----------------------------------------------------------------------------
# observables
# -----------------------------------------------------------------------------


def expectation(h: Hamiltonian, psi: np.ndarray) -> float:
    """<psi|H|psi>; raises if the imaginary residue exceeds 1e-10."""
    if psi.shape[0] != h.dim:
        raise ValueError("state dimension does not match Hamiltonian")
    val = np.vdot(psi, apply_to_state(h, psi))
    if abs(val.imag) > 1e-10:
        raise ValueError(f"expectation has imaginary residue {val.imag:.2e}")
    return float(val.real)


def fidelity(psi: np.ndarray, spectrum: Spectrum) -> float:
    """Overlap <psi|P_ground|psi> with the (possibly degenerate) ground space."""
    if psi.shape[0] != spectrum.eigenvectors.shape[0]:
        raise ValueError("state dimension does not match spectrum")
    return spectrum.ground_fidelity(psi)


# -----------------------------------------------------------------------------
# Trotter evolution
# -----------------------------------------------------------------------------


def trotter_gates(h: Hamiltonian, t: float, steps: int) -> list:
    """First-order Trotter circuit for exp(-iHt) in canonical term order."""
    if steps < 1:
        raise ValueError("steps must be >= 1")
    tau = t / steps
    step_gates = []
    for coeff, sites in h.canonical_terms():
        kind = "".join(ax for _, ax in sites)
        qubits = tuple(q for q, _ in sites)
        # exp(-i c P tau) = exp(-i theta/2 P) with theta = 2 c tau
        step_gates.append(Gate(kind, qubits, 2.0 * coeff * tau))
    return step_gates * steps


def trotter_evolve(h: Hamiltonian, psi: np.ndarray, t: float, steps: int) -> np.ndarray:
    """First-order Trotter approximation of exp(-iHt)|psi>."""
    if psi.shape[0] != h.dim:
        raise ValueError("state dimension does not match Hamiltonian")
    return apply_record(trotter_gates(h, t, steps), psi)


def exact_evolve(h: Hamiltonian, psi: np.ndarray, t: float) -> np.ndarray:
    """Dense-oracle exp(-iHt)|psi> via eigendecomposition (test/diagnostic use)."""
    from .pauli import to_dense

    vals, vecs = np.linalg.eigh(to_dense(h))
    return vecs @ (np.exp(-1j * vals * t) * (vecs.conj().T @ psi))


# -----------------------------------------------------------------------------
# sampling
# -----------------------------------------------------------------------------

_PAULI_1Q = ("x", "y", "z")
_PAULI_2Q = [
    (a, b) for a in ("i", "x", "y", "z") for b in ("i", "x", "y", "z") if (a, b) != ("i", "i")
]


def _insert_noise(psi: np.ndarray, qubits: tuple, rng: np.random.Generator) -> np.ndarray:
    if len(qubits) == 1:
        ax = _PAULI_1Q[rng.integers(3)]
        return pauli_action(psi, ((qubits[0], ax),))
    a, b = _PAULI_2Q[rng.integers(15)]
    sites = tuple((q, ax) for q, ax in zip(qubits, (a, b)) if ax != "i")
    return pauli_action(psi, sites)


def _sample_indices(psi: np.ndarray, m: int, rng: np.random.Generator) -> np.ndarray:
    probs = np.abs(psi) ** 2
    cdf = np.cumsum(probs)
    cdf /= cdf[-1]
    return np.searchsorted(cdf, rng.random(m))


def sample_bitstrings(
    psi: np.ndarray,
    m: int,
    rng: np.random.Generator,
    noise: NoiseSpec | None = None,
    record: list | None = None,
    base_state: np.ndarray | None = None,
) -> list:
    """Draw ``m`` computational-basis shots from |psi>.

    Noiseless mode samples from |<x|psi>|^2 directly.  With a ``noise`` spec
    and a gate ``record``, each shot re-prepares the state from ``base_state``
    (default |0...0>) along the record, stochastically inserting a uniform
    random Pauli after each gate (prob. p1 single-qubit / p2 two-qubit), then
    flips each readout bit independently with p_readout.  Without a record
    only readout flips apply.
    """
    if m < 1:
        raise ValueError("shot count must be >= 1")
    norm = np.linalg.norm(psi)
    if abs(norm - 1.0) > 1e-8:
        raise ValueError(f"state is not normalized (norm={norm})")
    n = psi.shape[0].bit_length() - 1
    if noise is None or noise.is_zero():
        return [index_to_bits(k, n) for k in _sample_indices(psi, m, rng)]

    gate_noise = (noise.p1 > 0 or noise.p2 > 0) and record is not None
    outs = []
    for _ in range(m):
        if gate_noise:
            state = zero_state(n) if base_state is None else base_state.copy()
            for g in record:
                state = apply_gate(state, g)
                p = noise.p1 if len(g.qubits) == 1 else noise.p2
                if p > 0.0 and rng.random() < p:
                    state = _insert_noise(state, g.qubits, rng)
        else:
            state = psi
        k = int(_sample_indices(state, 1, rng)[0])
        if noise.p_readout > 0.0:
            flips = rng.random(n) < noise.p_readout
            for q in np.nonzero(flips)[0]:
                k ^= 1 << int(q)
        outs.append(index_to_bits(k, n))
    return outs


# -----------------------------------------------------------------------------
# ansatz-parameter gradients
# -----------------------------------------------------------------------------


def parameter_shift_grad(h: Hamiltonian, n: int, depth: int, theta: np.ndarray) -> np.ndarray:
    """Exact gradient dC/dtheta_k = [C(+pi/2) - C(-pi/2)] / 2 per parameter.

    Valid because every ansatz gate is exp(-i theta/2 P) with P^2 = I.
    """
    theta = np.asarray(theta, dtype=float)
    grad = np.zeros_like(theta)
    for k in range(theta.shape[0]):
        shifted = theta.copy()
        shifted[k] = theta[k] + np.pi / 2
        plus = expectation(h, hea_prepare(n, depth, shifted))
        shifted[k] = theta[k] - np.pi / 2
        minus = expectation(h, hea_prepare(n, depth, shifted))
        grad[k] = 0.5 * (plus - minus)
    return grad


def hea_energy_and_grad(h: Hamiltonian, n: int, depth: int, theta: np.ndarray) -> tuple:
    """(energy, gradient) via a single adjoint reverse sweep over the circuit."""
    gates = hea_gates(n, depth, theta)
    psi = apply_record(gates, zero_state(n))
    lam = apply_to_state(h, psi)
    energy = float(np.vdot(psi, lam).real)
    grad = np.zeros(hea_param_count(n, depth))
    for g in reversed(gates):
        # d/dtheta exp(-i theta/2 P) contributes Im(<lam|P|psi_k>)
        deriv = np.vdot(lam, pauli_action(psi, g.sites())).imag
        if g.param >= 0:
            grad[g.param] += deriv
        psi = apply_pauli_rotation(psi, g.kind, g.qubits, -g.theta)
        lam = apply_pauli_rotation(lam, g.kind, g.qubits, -g.theta)
    return energy, grad


def adjoint_grad(h: Hamiltonian, n: int, depth: int, theta: np.ndarray) -> np.ndarray:
    """Gradient of <H> over ansatz parameters by the adjoint method."""
    return hea_energy_and_grad(h, n, depth, theta)[1]
