"""Gradient-variance diagnostics under random initialization.

For a fixed Hamiltonian, many independent trials draw a fresh initialization
(uniform ansatz angles for plain VQE; standard-normal network weights for the
predictor-based methods), the energy gradient over all ansatz parameters is
taken at the first optimization step, and the per-parameter variance across
trials is summarized.  Fitted log2 slopes of the mean variance versus system
size quantify how quickly the optimization landscape flattens.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import hgraph, nnvqe, qsim
from .egate import EgateConfig, EgateModel, train_until
from .hgraph import FeatureScheme
from .pauli import FamilySpec, Hamiltonian, build_family

METHODS = ("vqe", "nnvqe", "egate")
LATENT_MODES = ("dim1", "dim5", "dimn", "dimn2")

#: (n, D) ladder used by the size sweep
SIZE_LADDER = tuple((n, n - 2) for n in range(3, 10))


@dataclass(frozen=True)
class BpRun:
    """One gradient-variance measurement configuration."""

    method: str  # "vqe" | "nnvqe" | "egate"
    n: int
    depth: int
    trials: int
    seed_base: int = 0
    latent_mode: str = "dimn"  # for method == "egate"
    hidden: tuple = nnvqe.HIDDEN_ONE

    def __post_init__(self):
        if self.method not in METHODS:
            raise ValueError(f"method must be one of {METHODS}")
        if self.trials < 2:
            raise ValueError("variance needs at least 2 trials")
        if self.method == "egate" and self.latent_mode not in LATENT_MODES:
            raise ValueError(f"latent_mode must be one of {LATENT_MODES}")


@dataclass
class VarianceStats:
    variances: np.ndarray  # per-parameter, unbiased across trials
    mean_var: float
    sd_var: float


def bp_hamiltonian(n: int) -> Hamiltonian:
    """The fixed sweep instance: 1D XXZ ring at unit zz coupling."""
    return build_family(FamilySpec("xxz_1d", n, {"Jzz": 1.0}))


def bp_scheme() -> FeatureScheme:
    return FeatureScheme("one_hot")


def latent_config(n: int, mode: str, graph_m: int) -> EgateConfig:
    """Encoder architecture per latent mode (3 layers, 16-unit decoder)."""
    base = dict(
        layers=3,
        node_dim=n,
        edge_dim=3,
        decoder_hidden=16,
    )
    if mode == "dimn":
        return EgateConfig(merge="mean", pooling="sum", **base)
    if mode == "dim1":
        return EgateConfig(merge="mean", pooling="linear", pooling_dim=1, **base)
    if mode == "dim5":
        return EgateConfig(merge="mean", pooling="linear", pooling_dim=5, **base)
    if mode == "dimn2":
        return EgateConfig(merge="concat", pooling="mlp", pooling_dim=n * n, **base)
    raise ValueError(f"unknown latent mode {mode!r}")


def pretrain_bp_encoder(
    n: int,
    mode: str = "dimn",
    seed: int = 0,
    tol: float = 1e-5,
    max_steps: int = 5000,
    lr: float = 0.1,
    optimizer: str = "sgd",
) -> tuple:
    """Train the encoder on the single sweep instance until loss < tol.

    Pretraining defaults to plain gradient descent: the reconstruction loss is
    flat along a latent/decoder rescaling, and adaptive steps wander along
    that direction, leaving the frozen latent with an arbitrary scale.  SGD
    stays near the initialization, so the latent scale is set by the pooled
    feature magnitudes and is comparable across system sizes.

    Returns (model, graph, steps, final_loss).
    """
    graph = hgraph.encode(bp_hamiltonian(n), bp_scheme())
    model = EgateModel(latent_config(n, mode, graph.m), graph.n, graph.m, np.random.default_rng(seed))
    steps, history = train_until(
        model, [graph], tol=tol, max_steps=max_steps, lr=lr, seed=seed, optimizer=optimizer
    )
    return model, graph, steps, history[-1]


def first_step_gradients(
    run: BpRun,
    h: Hamiltonian,
    latent: np.ndarray | None = None,
) -> np.ndarray:
    """trials x P matrix of ansatz-parameter gradients at fresh initializations.

    VQE rows evaluate the gradient at uniform random angles; predictor rows
    draw standard-normal network weights, map the fixed input through the
    untrained network, and take the gradient at the resulting angles.  No
    update is ever applied.
    """
    p_count = qsim.hea_param_count(run.n, run.depth)
    rows = np.zeros((run.trials, p_count))
    if run.method == "egate":
        if latent is None:
            raise ValueError("latent-conditioned runs need the frozen encoder latent")
        x = np.asarray(latent, dtype=float)
    elif run.method == "nnvqe":
        x = np.array([1.0])  # the sweep instance's tunable coupling
    else:
        x = None
    for t in range(run.trials):
        rng = np.random.default_rng((run.seed_base, run.n, run.depth, t))
        if run.method == "vqe":
            theta = rng.uniform(0.0, 2.0 * np.pi, size=p_count)
        else:
            predictor = nnvqe.Predictor(
                nnvqe.PredictorConfig(
                    input_dim=x.shape[0],
                    output_dim=p_count,
                    hidden=run.hidden,
                    init_std=1.0,
                ),
                rng,
            )
            theta = predictor.predict(x)
        rows[t] = qsim.adjoint_grad(h, run.n, run.depth, theta)
    return rows


def variance_stats(matrix: np.ndarray) -> VarianceStats:
    """Per-parameter unbiased variance across trials with its mean and spread."""
    matrix = np.asarray(matrix, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] < 2:
        raise ValueError("need a trials x P matrix with >= 2 trials")
    variances = matrix.var(axis=0, ddof=1)
    spread = float(variances.std(ddof=1)) if variances.size > 1 else 0.0
    return VarianceStats(variances, float(variances.mean()), spread)


@dataclass(frozen=True)
class LogFit:
    slope: float
    intercept: float
    r2: float


def log2_fit(sizes, mean_vars) -> LogFit:
    """Ordinary least squares of log2(mean variance) against system size.

    Nonpositive variances cannot be logged and are excluded with a warning.
    """
    sizes = np.asarray(sizes, dtype=float)
    mean_vars = np.asarray(mean_vars, dtype=float)
    keep = mean_vars > 0
    if not keep.all():
        import warnings

        warnings.warn(f"excluded {int((~keep).sum())} nonpositive variance points from the fit")
    xs, ys = sizes[keep], np.log2(mean_vars[keep])
    if xs.shape[0] < 3:
        raise ValueError("need at least 3 positive points to fit")
    slope, intercept = np.polyfit(xs, ys, 1)
    resid = ys - (slope * xs + intercept)
    total = ys - ys.mean()
    r2 = 1.0 - float(resid @ resid) / float(total @ total)
    return LogFit(float(slope), float(intercept), r2)


def gradient_sweep(
    method: str,
    sizes=SIZE_LADDER,
    trials: int = 100,
    seed_base: int = 0,
    latent_mode: str = "dimn",
    hidden: tuple = nnvqe.HIDDEN_ONE,
    encoder_seed: int = 0,
) -> list:
    """Variance stats across the (n, D) ladder for one method.

    Returns [(n, depth, param_count, VarianceStats), ...].  Latent-conditioned
    runs pretrain one encoder per size to below the reconstruction tolerance
    and freeze its latent across all trials.
    """
    out = []
    for n, depth in sizes:
        h = bp_hamiltonian(n)
        latent = None
        if method == "egate":
            model, graph, steps, final = pretrain_bp_encoder(n, latent_mode, seed=encoder_seed)
            if final >= 1e-5:
                raise RuntimeError(
                    f"encoder pretraining stalled at loss {final:.2e} for n={n} ({latent_mode})"
                )
            latent = model.encode_latent(graph)
        run = BpRun(
            method=method,
            n=n,
            depth=depth,
            trials=trials,
            seed_base=seed_base,
            latent_mode=latent_mode,
            hidden=hidden,
        )
        stats = variance_stats(first_step_gradients(run, h, latent))
        out.append((n, depth, qsim.hea_param_count(n, depth), stats))
    return out
