"""Neural parameter generation for the ladder-wise ansatz.

Three predictor variants share one MLP architecture and differ only in their
input representation: the family's tunable parameter tuple (baseline), that
tuple replicated to a target width (input-expanded control), or the graph
autoencoder's latent vector.  Training minimizes the summed energy expectation
over a Hamiltonian family; the gradient chains the simulator's adjoint
ansatz-parameter gradient into network backpropagation.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from . import diffnet as dn
from . import hgraph, qsim
from .egate import EgateModel
from .hgraph import FeatureScheme
from .pauli import FamilySpec, Hamiltonian, Spectrum, build_family

MRE_FLOOR = 1e-6  # |E0| floor for relative energy errors


# -----------------------------------------------------------------------------
# input variants
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class Baseline:
    """Raw tunable parameter tuple as network input."""


@dataclass(frozen=True)
class InputExpanded:
    """Tunable tuple replicated/tiled to ``target_dim`` entries."""

    target_dim: int


@dataclass(frozen=True)
class EgateConditioned:
    """Latent vector of a trained graph autoencoder as network input."""

    scheme: FeatureScheme


def make_input(variant, spec: FamilySpec, trained_egate: EgateModel | None = None) -> np.ndarray:
    """Network input vector for one Hamiltonian instance."""
    base = spec.tunables()
    if isinstance(variant, Baseline):
        return base
    if isinstance(variant, InputExpanded):
        return np.resize(base, variant.target_dim)
    if isinstance(variant, EgateConditioned):
        if trained_egate is None:
            raise ValueError("latent-conditioned input needs a trained encoder")
        graph = hgraph.encode(build_family(spec), variant.scheme)
        return trained_egate.encode_latent(graph)
    raise TypeError(f"unknown variant {variant!r}")


def input_dim(variant, spec: FamilySpec, trained_egate: EgateModel | None = None) -> int:
    if isinstance(variant, Baseline):
        return spec.tunables().shape[0]
    if isinstance(variant, InputExpanded):
        return variant.target_dim
    if isinstance(variant, EgateConditioned):
        if trained_egate is None:
            raise ValueError("latent-conditioned input needs a trained encoder")
        return trained_egate.latent_dim
    raise TypeError(f"unknown variant {variant!r}")


# -----------------------------------------------------------------------------
# predictor
# -----------------------------------------------------------------------------

HIDDEN_ONE = (20,)
HIDDEN_TWO = (20, 40)


@dataclass(frozen=True)
class PredictorConfig:
    input_dim: int
    output_dim: int  # ansatz parameter count 3n + 5nD
    hidden: tuple = HIDDEN_TWO
    init_std: float = 0.1


class Predictor:
    """MLP mapping an input vector to ansatz angles in [0, 2*pi]."""

    def __init__(self, config: PredictorConfig, rng: np.random.Generator):
        self.config = config
        self.mlp = dn.Mlp(
            (config.input_dim, *config.hidden, config.output_dim),
            rng,
            init_std=config.init_std,
            hidden_activation="relu",
            output_activation="sigmoid_2pi",
        )

    def forward_tensor(self, x: np.ndarray) -> dn.Tensor:
        return self.mlp(dn.constant(np.asarray(x, dtype=float)))

    def predict(self, x: np.ndarray) -> np.ndarray:
        return self.forward_tensor(x).data.copy()

    def parameters(self):
        return self.mlp.parameters()

    def state_dict(self) -> dict:
        return self.mlp.state_dict()

    def load_state_dict(self, state: dict) -> None:
        self.mlp.load_state_dict(state)


# -----------------------------------------------------------------------------
# cost, training, inference
# -----------------------------------------------------------------------------


class _InstanceCache:
    """Precomputed Hamiltonians and network inputs for a fixed spec list."""

    def __init__(self, specs, variant, trained_egate=None):
        self.specs = list(specs)
        if not self.specs:
            raise ValueError("empty instance set")
        self.hams = [build_family(s) for s in self.specs]
        self.inputs = [make_input(variant, s, trained_egate) for s in self.specs]
        self.n = self.specs[0].n
        if any(s.n != self.n for s in self.specs):
            raise ValueError("instance set mixes qubit counts")


def cost_instances(predictor: Predictor, instances, n: int, depth: int) -> float:
    """Summed expectation over explicit (Hamiltonian, input vector) pairs."""
    if not instances:
        raise ValueError("empty instance set")
    total = 0.0
    for h, x in instances:
        theta = predictor.predict(x)
        total += qsim.expectation(h, qsim.hea_prepare(n, depth, theta))
    return total


def cost(
    predictor: Predictor,
    specs,
    depth: int,
    variant=Baseline(),
    trained_egate: EgateModel | None = None,
) -> float:
    """Summed energy expectation over the instance set at current weights."""
    cache = _InstanceCache(specs, variant, trained_egate)
    return cost_instances(predictor, list(zip(cache.hams, cache.inputs)), cache.n, depth)


@dataclass(frozen=True)
class TrainConfig:
    iters: int = 200
    lr: float = 0.003
    seed: int = 0


def train(
    predictor: Predictor,
    specs,
    depth: int,
    config: TrainConfig,
    variant=Baseline(),
    trained_egate: EgateModel | None = None,
) -> list:
    """Full-batch gradient descent on the summed expectation.

    Per instance the simulator's adjoint sweep supplies d<H>/d(theta); seeding
    the tape at the predicted angle vector with that gradient completes the
    chain rule into the network weights.  Returns the cost history (initial
    cost first, one entry per iteration).
    """
    cache = _InstanceCache(specs, variant, trained_egate)
    opt = dn.Adam(predictor.parameters(), config.lr)
    history = []
    for _ in range(config.iters):
        opt.zero_grad()
        total = 0.0
        for h, x in zip(cache.hams, cache.inputs):
            theta_t = predictor.forward_tensor(x)
            energy, grad = qsim.hea_energy_and_grad(h, cache.n, depth, theta_t.data)
            if not np.isfinite(energy):
                raise RuntimeError("non-finite cost during predictor training")
            dn.backward(theta_t, seed=grad)
            total += energy
        history.append(total)
        opt.step()
    return history


def infer(
    predictor: Predictor,
    spec: FamilySpec,
    depth: int,
    variant=Baseline(),
    trained_egate: EgateModel | None = None,
) -> tuple:
    """(theta, psi, energy) for one instance, no per-instance optimization."""
    h = build_family(spec)
    theta = predictor.predict(make_input(variant, spec, trained_egate))
    psi = qsim.hea_prepare(spec.n, depth, theta)
    return theta, psi, qsim.expectation(h, psi)


# -----------------------------------------------------------------------------
# evaluation metrics
# -----------------------------------------------------------------------------


@dataclass
class MetricsReport:
    """Energy-error and fidelity metrics over a test set.

    Scalars are the means of the stored per-instance arrays.
    """

    mse: float
    mre: float
    mf: float
    e_pred: np.ndarray
    e0: np.ndarray
    sq_err: np.ndarray
    rel_err: np.ndarray
    fidelity: np.ndarray
    seed: int = 0

    def summary(self) -> dict:
        return {"mse": self.mse, "mre": self.mre, "mf": self.mf, "seed": self.seed}


def evaluate(
    predictor: Predictor,
    specs,
    spectra,
    depth: int,
    variant=Baseline(),
    trained_egate: EgateModel | None = None,
    seed: int = 0,
) -> MetricsReport:
    """Score predictions against exact spectra.

    ``spectra`` maps ``spec.key()`` to a precomputed :class:`Spectrum`.
    Raises if any predicted energy dips below the variational bound.
    """
    specs = list(specs)
    if not specs:
        raise ValueError("empty test set")
    e_pred = np.zeros(len(specs))
    e0 = np.zeros(len(specs))
    fid = np.zeros(len(specs))
    for k, spec in enumerate(specs):
        spectrum: Spectrum = spectra[spec.key()]
        theta, psi, energy = infer(predictor, spec, depth, variant, trained_egate)
        if energy < spectrum.ground_energy - 1e-8:
            raise AssertionError(
                f"variational bound violated: E={energy} < E0={spectrum.ground_energy}"
            )
        e_pred[k] = energy
        e0[k] = spectrum.ground_energy
        fid[k] = qsim.fidelity(psi, spectrum)
    sq_err = (e_pred - e0) ** 2
    rel_err = np.abs(e_pred - e0) / np.maximum(np.abs(e0), MRE_FLOOR)
    return MetricsReport(
        mse=float(sq_err.mean()),
        mre=float(rel_err.mean()),
        mf=float(fid.mean()),
        e_pred=e_pred,
        e0=e0,
        sq_err=sq_err,
        rel_err=rel_err,
        fidelity=fid,
        seed=seed,
    )


_LOSS_LIKE = ("mse", "mre")


def improvement(a: float, b: float, metric: str) -> float:
    """Relative improvement (%) of method value ``a`` over baseline value ``b``.

    Loss-like metrics (mse, mre) improve downward: (b - a) / b * 100.
    Fidelity improves upward: (a - b) / b * 100.
    """
    metric = metric.lower()
    if metric in _LOSS_LIKE:
        return (b - a) / b * 100.0
    if metric == "mf":
        return (a - b) / b * 100.0
    raise ValueError(f"unknown metric {metric!r}")
