"""One- and two-local Pauli Hamiltonians, benchmark families, and exact spectral oracles.

A Hamiltonian is stored as a sparse coefficient map

    H = sum_{i<j} sum_{a,b} J[i,j,a,b] * sigma_a(i) sigma_b(j)
      + sum_i sum_a K[i,a] * sigma_a(i)

with axes a, b in {"x", "y", "z"}.  Qubit indices are 0-based and statevectors
use the little-endian convention (qubit 0 is the least significant bit of the
basis index).
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

AXES = ("x", "y", "z")

#: families of tunable benchmark Hamiltonians and their parameter names
FAMILY_PARAMS = {
    "xxz_1d": ("Jzz",),
    "xxz_x_1d": ("Jzz", "Kx"),
    "xxz_z_1d": ("Jzz", "Kz"),
    "xxz_2d33": ("Jzz1", "Jzz2"),
    "xyz_2d33": ("Jyy", "Jzz1", "Jzz2"),
}

_2D_FAMILIES = ("xxz_2d33", "xyz_2d33")

# -----------------------------------------------------------------------------
# bit-kernel: Pauli-string action on statevectors and basis states
# -----------------------------------------------------------------------------

_INDEX_CACHE: dict[int, np.ndarray] = {}


def _indices(dim: int) -> np.ndarray:
    idx = _INDEX_CACHE.get(dim)
    if idx is None:
        idx = np.arange(dim)
        _INDEX_CACHE[dim] = idx
    return idx


def pauli_action(psi: np.ndarray, sites: tuple[tuple[int, str], ...]) -> np.ndarray:
    """Return P|psi> for the Pauli string P = prod sigma_axis(qubit).

    ``sites`` is a tuple of (qubit, axis) pairs acting on distinct qubits.
    """
    dim = psi.shape[0]
    idx = _indices(dim)
    flip = 0
    phase: np.ndarray | complex = 1.0 + 0.0j
    for q, ax in sites:
        bit = (idx >> q) & 1
        if ax == "x":
            flip ^= 1 << q
        elif ax == "y":
            flip ^= 1 << q
            phase = phase * (1j * (2 * bit - 1))
        elif ax == "z":
            phase = phase * (1 - 2 * bit)
        else:
            raise ValueError(f"unknown Pauli axis {ax!r}")
    if flip:
        out = psi[idx ^ flip]
        if isinstance(phase, np.ndarray):
            out = out * phase
        return out
    return psi * phase


def basis_action(index: int, sites: tuple[tuple[int, str], ...]) -> tuple[int, complex]:
    """Return (target, amplitude) of P|index> for a computational basis state."""
    flip = 0
    phase = 1.0 + 0.0j
    for q, ax in sites:
        bit = (index >> q) & 1
        if ax == "x":
            flip ^= 1 << q
        elif ax == "y":
            flip ^= 1 << q
            # phase evaluated at the target bit, which is the flipped source bit
            phase *= 1j * (2 * (1 - bit) - 1)
        elif ax == "z":
            phase *= 1 - 2 * bit
        else:
            raise ValueError(f"unknown Pauli axis {ax!r}")
    return index ^ flip, phase


# -----------------------------------------------------------------------------
# Hamiltonian container
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Hamiltonian:
    """Sparse one/two-local Pauli Hamiltonian on ``n`` qubits.

    ``two_local`` maps (i, j, a, b) with i < j to the real coefficient of
    sigma_a(i) sigma_b(j); ``one_local`` maps (i, a) to the coefficient of
    sigma_a(i).  Zero coefficients are dropped on construction.
    """

    n: int
    two_local: dict = field(default_factory=dict)
    one_local: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.n < 1:
            raise ValueError("qubit count must be >= 1")
        two = {}
        for key, coeff in self.two_local.items():
            i, j, a, b = key
            if not (0 <= i < j < self.n):
                raise ValueError(f"two-local key {key} violates 0 <= i < j < n")
            if a not in AXES or b not in AXES:
                raise ValueError(f"two-local key {key} has invalid axes")
            if coeff != 0.0:
                two[(i, j, a, b)] = float(coeff)
        one = {}
        for key, coeff in self.one_local.items():
            i, a = key
            if not 0 <= i < self.n:
                raise ValueError(f"one-local key {key} out of range")
            if a not in AXES:
                raise ValueError(f"one-local key {key} has invalid axis")
            if coeff != 0.0:
                one[(i, a)] = float(coeff)
        object.__setattr__(self, "two_local", two)
        object.__setattr__(self, "one_local", one)

    @property
    def dim(self) -> int:
        return 1 << self.n

    def canonical_terms(self) -> list[tuple[float, tuple[tuple[int, str], ...]]]:
        """Terms as (coefficient, sites) in the canonical deterministic order.

        Two-local terms sorted by (i, j, a, b), then one-local by (i, a).
        This order fixes the Trotter product and sampling reproducibility.
        """
        terms = []
        for (i, j, a, b) in sorted(self.two_local):
            terms.append((self.two_local[(i, j, a, b)], ((i, a), (j, b))))
        for (i, a) in sorted(self.one_local):
            terms.append((self.one_local[(i, a)], ((i, a),)))
        return terms

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "two_local": [[i, j, a + b, c] for (i, j, a, b), c in sorted(self.two_local.items())],
            "one_local": [[i, a, c] for (i, a), c in sorted(self.one_local.items())],
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "Hamiltonian":
        two = {(i, j, ab[0], ab[1]): c for i, j, ab, c in doc["two_local"]}
        one = {(i, a): c for i, a, c in doc["one_local"]}
        return cls(doc["n"], two, one)

    @classmethod
    def loads(cls, text: str) -> "Hamiltonian":
        return cls.from_json_dict(json.loads(text))


def apply_to_state(h: Hamiltonian, psi: np.ndarray) -> np.ndarray:
    """Matrix-free H|psi> via per-term bit manipulation."""
    if psi.shape[0] != h.dim:
        raise ValueError(f"state dimension {psi.shape[0]} != 2^{h.n}")
    out = np.zeros(h.dim, dtype=complex)
    for coeff, sites in h.canonical_terms():
        out += coeff * pauli_action(psi, sites)
    return out


def to_dense(h: Hamiltonian) -> np.ndarray:
    """Dense Hermitian 2^n x 2^n matrix of ``h``."""
    if h.n > 14:
        raise ValueError(f"to_dense refused for n={h.n} > 14 (memory guard)")
    dim = h.dim
    idx = _indices(dim)
    mat = np.zeros((dim, dim), dtype=complex)
    for coeff, sites in h.canonical_terms():
        flip = 0
        phase = np.ones(dim, dtype=complex)
        for q, ax in sites:
            bit = (idx >> q) & 1
            if ax == "x":
                flip ^= 1 << q
            elif ax == "y":
                flip ^= 1 << q
                phase = phase * (1j * (2 * bit - 1))
            else:
                phase = phase * (1 - 2 * bit)
        mat[idx, idx ^ flip] += coeff * phase
    return mat


# -----------------------------------------------------------------------------
# exact spectral oracles
# -----------------------------------------------------------------------------


@dataclass
class Spectrum:
    """Full eigendecomposition with a projector onto the ground eigenspace."""

    eigenvalues: np.ndarray  # ascending
    eigenvectors: np.ndarray  # unitary, columns are eigenvectors
    degeneracy_tol: float

    @property
    def ground_energy(self) -> float:
        return float(self.eigenvalues[0])

    @property
    def ground_degeneracy(self) -> int:
        return int(np.sum(self.eigenvalues <= self.eigenvalues[0] + self.degeneracy_tol))

    def ground_block(self) -> np.ndarray:
        """Eigenvector columns spanning the ground eigenspace."""
        return self.eigenvectors[:, : self.ground_degeneracy]

    @cached_property
    def ground_projector(self) -> np.ndarray:
        block = self.ground_block()
        return block @ block.conj().T

    def ground_fidelity(self, psi: np.ndarray) -> float:
        """<psi|P_ground|psi>, well defined for degenerate ground spaces."""
        overlaps = self.ground_block().conj().T @ psi
        return float(np.real(np.vdot(overlaps, overlaps)))


def exact_spectrum(h: Hamiltonian, degeneracy_tol: float = 1e-9) -> Spectrum:
    """Dense Hermitian eigensolve; eigenvalues ascending."""
    if h.n > 12:
        raise ValueError(f"exact_spectrum refused for n={h.n} > 12")
    mat = to_dense(h)
    vals, vecs = np.linalg.eigh(mat)
    return Spectrum(vals, vecs, degeneracy_tol)


def operator_norm(h: Hamiltonian) -> float:
    """Spectral norm max |eigenvalue| (used for the Krylov time step)."""
    if h.n > 12:
        raise ValueError(f"operator_norm refused for n={h.n} > 12")
    vals = np.linalg.eigvalsh(to_dense(h))
    return float(max(abs(vals[0]), abs(vals[-1])))


# -----------------------------------------------------------------------------
# benchmark families
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class FamilySpec:
    """A benchmark family member: family name, qubit count, tunable parameters."""

    family: str
    n: int
    params: dict

    def __post_init__(self):
        if self.family not in FAMILY_PARAMS:
            raise ValueError(f"unknown family {self.family!r}")
        expected = set(FAMILY_PARAMS[self.family])
        got = set(self.params)
        if got != expected:
            raise ValueError(
                f"{self.family} expects params {sorted(expected)}, got {sorted(got)}"
            )
        if self.family in _2D_FAMILIES and self.n != 9:
            raise ValueError(f"{self.family} requires n=9 (3x3 lattice)")
        if self.family not in _2D_FAMILIES and self.n < 3:
            raise ValueError("1D periodic families require n >= 3")
        object.__setattr__(self, "params", {k: float(v) for k, v in self.params.items()})

    def key(self) -> tuple:
        """Hashable identity, usable as a cache key."""
        return (self.family, self.n, tuple(sorted(self.params.items())))

    def tunables(self) -> np.ndarray:
        """Tunable parameter values in the family's canonical order."""
        return np.array([self.params[name] for name in FAMILY_PARAMS[self.family]])


def lattice33_coords(i: int) -> tuple[int, int]:
    """Row-major 3x3 lattice coordinates with x, y in {-1, 0, 1}."""
    if not 0 <= i < 9:
        raise ValueError("3x3 lattice site index out of range")
    row, col = divmod(i, 3)
    return col - 1, row - 1


def lattice33_edges() -> tuple[list[tuple[int, int]], list[tuple[int, int]]]:
    """(nearest, next-nearest) neighbour pairs of the 3x3 grid, i < j ordering."""
    nn, nnn = [], []
    for i in range(9):
        r, c = divmod(i, 3)
        if c < 2:
            nn.append((i, i + 1))
        if r < 2:
            nn.append((i, i + 3))
        if r < 2 and c < 2:
            nnn.append((i, i + 4))
        if r < 2 and c > 0:
            nnn.append((i, i + 2))
    return sorted(nn), sorted(nnn)


def _ring_edges(n: int) -> list[tuple[int, int]]:
    edges = {tuple(sorted((i, (i + 1) % n))) for i in range(n)}
    return sorted(edges)


def build_family(spec: FamilySpec) -> Hamiltonian:
    """Construct the named benchmark Hamiltonian.

    1D families live on a periodic ring (site indices modulo n); the 2D
    families on the 3x3 grid with nearest and next-nearest couplings.
    """
    p = spec.params
    two: dict = {}
    one: dict = {}
    if spec.family in ("xxz_1d", "xxz_x_1d", "xxz_z_1d"):
        for (i, j) in _ring_edges(spec.n):
            two[(i, j, "x", "x")] = 1.0
            two[(i, j, "y", "y")] = 1.0
            two[(i, j, "z", "z")] = p["Jzz"]
        if spec.family == "xxz_x_1d":
            for i in range(spec.n):
                one[(i, "x")] = p["Kx"]
        elif spec.family == "xxz_z_1d":
            for i in range(spec.n):
                one[(i, "z")] = p["Kz"]
    else:
        nn, nnn = lattice33_edges()
        jyy = p.get("Jyy", 1.0)
        for edges, jzz in ((nn, p["Jzz1"]), (nnn, p["Jzz2"])):
            for (i, j) in edges:
                two[(i, j, "x", "x")] = 1.0
                two[(i, j, "y", "y")] = jyy
                two[(i, j, "z", "z")] = jzz
    return Hamiltonian(spec.n, two, one)
