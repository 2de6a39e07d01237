"""Encode Pauli Hamiltonians as undirected feature graphs.

Qubits become nodes and two-local couplings become edges.  Edge feature rows
hold coupling coefficients selected by an axis-pair layout; one-local field
strengths are absorbed into the node feature vectors (no self-loop edges are
materialized, so attention neighbourhoods stay purely two-local).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .pauli import AXES, Hamiltonian, lattice33_coords

_KINDS = ("one_hot", "invariant_field", "lattice_coord")


@dataclass(frozen=True)
class FeatureScheme:
    """Node/edge featurization recipe.

    kind:
        "one_hot"         per-site indicator vectors (base dim n)
        "invariant_field" a constant 1 per node (base dim 1), permutation
                          invariant, so graph size does not enter the features
        "lattice_coord"   3x3 lattice coordinates (x, y) in {-1, 0, 1}
    edge_layout:
        ordered axis pairs whose coupling coefficients populate edge rows
    node_axes:
        one-local axes whose field strengths are appended to node features
    """

    kind: str
    edge_layout: tuple = ("xx", "yy", "zz")
    node_axes: tuple = ()

    def __post_init__(self):
        if self.kind not in _KINDS:
            raise ValueError(f"unknown scheme kind {self.kind!r}")
        if not 1 <= len(self.edge_layout) <= 9:
            raise ValueError("edge layout must list between 1 and 9 axis pairs")
        for pair in self.edge_layout:
            if len(pair) != 2 or pair[0] not in AXES or pair[1] not in AXES:
                raise ValueError(f"invalid edge layout entry {pair!r}")
        if len(set(self.edge_layout)) != len(self.edge_layout):
            raise ValueError("duplicate edge layout entries")
        if len(self.node_axes) > 3 or any(a not in AXES for a in self.node_axes):
            raise ValueError("node_axes must be distinct Pauli axes (at most 3)")
        if len(set(self.node_axes)) != len(self.node_axes):
            raise ValueError("duplicate node axes")

    @property
    def edge_dim(self) -> int:
        return len(self.edge_layout)

    def base_dim(self, n: int) -> int:
        return {"one_hot": n, "invariant_field": 1, "lattice_coord": 2}[self.kind]

    def node_dim(self, n: int) -> int:
        return self.base_dim(n) + len(self.node_axes)


@dataclass(frozen=True)
class HGraph:
    """Undirected feature graph: node matrix O, edge list, edge matrix E."""

    n: int
    node_features: np.ndarray  # n x node_dim
    edges: tuple  # ((i, j), ...) with i < j, ascending
    edge_features: np.ndarray  # m x edge_dim, rows aligned with edges

    def __post_init__(self):
        o = np.asarray(self.node_features, dtype=float)
        e = np.asarray(self.edge_features, dtype=float)
        edges = tuple(tuple(pair) for pair in self.edges)
        if o.ndim != 2 or o.shape[0] != self.n:
            raise ValueError("node feature matrix must be n x d")
        if e.ndim != 2 or e.shape[0] != len(edges):
            raise ValueError("edge feature matrix must have one row per edge")
        seen = set()
        for (i, j) in edges:
            if not 0 <= i < j < self.n:
                raise ValueError(f"edge {(i, j)} violates 0 <= i < j < n")
            if (i, j) in seen:
                raise ValueError(f"duplicate edge {(i, j)}")
            seen.add((i, j))
        object.__setattr__(self, "node_features", o)
        object.__setattr__(self, "edge_features", e)
        object.__setattr__(self, "edges", edges)

    @property
    def m(self) -> int:
        return len(self.edges)

    @property
    def node_dim(self) -> int:
        return self.node_features.shape[1]

    @property
    def edge_dim(self) -> int:
        return self.edge_features.shape[1]

    def degrees(self) -> np.ndarray:
        deg = np.zeros(self.n, dtype=int)
        for (i, j) in self.edges:
            deg[i] += 1
            deg[j] += 1
        return deg

    def to_json_dict(self) -> dict:
        return {
            "n": self.n,
            "O": self.node_features.tolist(),
            "edges": [list(e) for e in self.edges],
            "E": self.edge_features.tolist(),
        }

    def dumps(self) -> str:
        return json.dumps(self.to_json_dict(), sort_keys=True)

    @classmethod
    def from_json_dict(cls, doc: dict) -> "HGraph":
        return cls(
            doc["n"],
            np.array(doc["O"], dtype=float),
            tuple(tuple(e) for e in doc["edges"]),
            np.array(doc["E"], dtype=float).reshape(len(doc["edges"]), -1),
        )

    @classmethod
    def loads(cls, text: str) -> "HGraph":
        return cls.from_json_dict(json.loads(text))


def encode(h: Hamiltonian, scheme: FeatureScheme) -> HGraph:
    """Build the feature graph of ``h`` under ``scheme``.

    Rejects (rather than silently dropping) any nonzero coefficient the scheme
    cannot represent.
    """
    layout = {pair: k for k, pair in enumerate(scheme.edge_layout)}
    for (i, j, a, b) in h.two_local:
        if a + b not in layout:
            raise ValueError(
                f"coupling {a + b} on edge {(i, j)} is not representable by the edge layout"
            )
    axis_slot = {ax: k for k, ax in enumerate(scheme.node_axes)}
    for (i, a) in h.one_local:
        if a not in axis_slot:
            raise ValueError(f"one-local {a} field on site {i} is not representable by the scheme")

    pairs = sorted({(i, j) for (i, j, _, _) in h.two_local})
    e = np.zeros((len(pairs), scheme.edge_dim))
    for row, (i, j) in enumerate(pairs):
        for (a, b), col in layout.items():
            e[row, col] = h.two_local.get((i, j, a, b), 0.0)

    if scheme.kind == "one_hot":
        base = np.eye(h.n)
    elif scheme.kind == "invariant_field":
        base = np.ones((h.n, 1))
    else:
        if h.n != 9:
            raise ValueError("lattice_coord scheme requires the 3x3 lattice (n=9)")
        base = np.array([lattice33_coords(i) for i in range(h.n)], dtype=float)

    fields = np.zeros((h.n, len(scheme.node_axes)))
    for (i, a), coeff in h.one_local.items():
        fields[i, axis_slot[a]] = coeff

    o = np.concatenate([base, fields], axis=1) if scheme.node_axes else base
    return HGraph(h.n, o, tuple(pairs), e)


def reconstruct_targets(g: HGraph) -> tuple:
    """The (O, E) matrices the autoencoder loss reconstructs, verbatim."""
    return g.node_features.copy(), g.edge_features.copy()
