"""Graph-conditioned parameter generation for variational quantum eigensolvers.

Subpackages:

- ``pauli``   sparse one/two-local Hamiltonians, benchmark families, exact oracles
- ``hgraph``  Hamiltonian-to-feature-graph encoding
- ``diffnet`` minimal reverse-mode autodiff engine, MLPs, optimizers
- ``egate``   edge-featured graph attention autoencoder
- ``qsim``    dense statevector simulator, ansatz, gradients, sampling
- ``nnvqe``   neural ansatz-parameter predictors and evaluation metrics
- ``skqd``    sampled Krylov subspace ground-energy estimation
- ``bpdiag``  gradient-variance (trainability) diagnostics
- ``experiments`` config-driven experiment runner and CLI
"""

__version__ = "0.1.0"

from . import bpdiag, diffnet, egate, hgraph, nnvqe, pauli, qsim, skqd  # noqa: F401
