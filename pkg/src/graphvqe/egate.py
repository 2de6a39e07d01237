"""Edge-featured graph attention autoencoder.

The encoder stacks attention layers whose node update integrates edge
features into both the attention scores and the messages; the paired edge
update reuses the attention scheme under a node-transit aggregation and
finishes with a small MLP.  Per-layer outputs pass through a merge layer
(feature concatenation or element-wise mean) and a pooling block (separate
node/edge summation, a linear projection of the summed vector, or a trainable
MLP over the flattened features) to yield the graph-level latent vector.  A
deliberately shallow decoder (one hidden layer) reconstructs the node and
edge matrices, trained with node MSE + beta * edge MSE.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace

import numpy as np

from . import diffnet as dn
from .hgraph import HGraph

_MERGES = ("mean", "concat")
_POOLINGS = ("sum", "linear", "mlp")


@dataclass(frozen=True)
class EgateConfig:
    """Architecture hyperparameters; bound to fixed graph dims (n, m) at build."""

    layers: int
    node_dim: int
    edge_dim: int
    contribution: float = 0.5  # node-vs-edge weighting of the projected feature split
    merge: str = "mean"
    pooling: str = "sum"
    pooling_dim: int | None = None
    pooling_hidden: int | None = None
    attention_hidden: tuple = (16, 16)
    edge_update_hidden: tuple = (16, 16)
    decoder_hidden: int = 16
    beta: float = 1.0
    init_std: float = 0.1
    leaky_slope: float = 0.01
    elu_alpha: float = 1.0

    def __post_init__(self):
        if self.layers < 1:
            raise ValueError("need at least one attention layer")
        if not 0.0 < self.contribution < 1.0:
            raise ValueError("contribution ratio must lie in (0, 1)")
        if self.merge not in _MERGES:
            raise ValueError(f"merge must be one of {_MERGES}")
        if self.pooling not in _POOLINGS:
            raise ValueError(f"pooling must be one of {_POOLINGS}")
        if self.pooling in ("linear", "mlp") and not self.pooling_dim:
            raise ValueError(f"{self.pooling} pooling needs pooling_dim")
        if self.node_dim < 1 or self.edge_dim < 1:
            raise ValueError("feature dims must be >= 1")

    @property
    def proj_node_dim(self) -> int:
        return int(np.floor(self.contribution * self.node_dim))

    @property
    def proj_edge_dim(self) -> int:
        return int(np.ceil((1.0 - self.contribution) * self.node_dim))

    @property
    def merged_node_dim(self) -> int:
        return self.node_dim * (self.layers if self.merge == "concat" else 1)

    @property
    def merged_edge_dim(self) -> int:
        return self.edge_dim * (self.layers if self.merge == "concat" else 1)

    @property
    def latent_dim(self) -> int:
        if self.pooling == "sum":
            return self.merged_node_dim + self.merged_edge_dim
        return int(self.pooling_dim)


class _GraphArrays:
    """Directed-edge index arrays of an undirected graph."""

    def __init__(self, graph: HGraph):
        if graph.m == 0 or graph.degrees().min() == 0:
            bad = int(np.argmin(graph.degrees())) if graph.n else 0
            raise ValueError(f"node {bad} has no neighbours; attention is undefined")
        ei = np.array([e[0] for e in graph.edges])
        ej = np.array([e[1] for e in graph.edges])
        self.src = np.concatenate([ei, ej])
        self.dst = np.concatenate([ej, ei])
        self.eid = np.concatenate([np.arange(graph.m), np.arange(graph.m)])
        self.ei = ei
        self.ej = ej
        self.n = graph.n


class EgatLayer:
    """One attention layer: a node module and an edge module with disjoint weights."""

    def __init__(self, config: EgateConfig, rng: np.random.Generator):
        c = config
        p, q = c.proj_node_dim, c.proj_edge_dim
        if p < 1 or q < 1:
            raise ValueError(
                f"projected dims ({p}, {q}) must be >= 1; node_dim={c.node_dim} too small"
            )
        self.config = c
        att_widths = (2 * p + q, *c.attention_hidden, 1)
        self.node_wo = dn.init_normal((p, c.node_dim), c.init_std, rng)
        self.node_we = dn.init_normal((q, c.edge_dim), c.init_std, rng)
        self.node_att = dn.Mlp(att_widths, rng, c.init_std, "leaky_relu", leaky_slope=c.leaky_slope)
        self.edge_wo = dn.init_normal((p, c.node_dim), c.init_std, rng)
        self.edge_we = dn.init_normal((q, c.edge_dim), c.init_std, rng)
        self.edge_att = dn.Mlp(att_widths, rng, c.init_std, "leaky_relu", leaky_slope=c.leaky_slope)
        self.edge_update = dn.Mlp(
            (2 * p + 2 * q + c.edge_dim, *c.edge_update_hidden, c.edge_dim),
            rng,
            c.init_std,
            "leaky_relu",
            leaky_slope=c.leaky_slope,
        )

    def _attention(self, mlp, o_star, e_star, arr):
        o_src = dn.gather_rows(o_star, arr.src)
        o_dst = dn.gather_rows(o_star, arr.dst)
        e_dir = dn.gather_rows(e_star, arr.eid)
        raw = dn.flatten(mlp(dn.concat([o_src, o_dst, e_dir])))
        scores = dn.leaky_relu(raw, self.config.leaky_slope)
        return dn.softmax_over_sets(scores, arr.src, arr.n), o_dst, e_dir

    def node_forward(self, o, e, arr):
        """Attention-weighted aggregation of neighbour [o*_j || e*_ij] messages."""
        o_star = dn.matmul(o, dn.transpose(self.node_wo))
        e_star = dn.matmul(e, dn.transpose(self.node_we))
        alpha, o_dst, e_dir = self._attention(self.node_att, o_star, e_star, arr)
        msg = dn.concat([o_dst, e_dir])
        weighted = dn.mul(msg, dn.reshape(alpha, (alpha.shape[0], 1)))
        return dn.elu(dn.segment_sum(weighted, arr.src, arr.n), self.config.elu_alpha)

    def edge_forward(self, o, e, arr):
        """Node-transit edge update: per-node attention over incident edge features."""
        o_star = dn.matmul(o, dn.transpose(self.edge_wo))
        e_star = dn.matmul(e, dn.transpose(self.edge_we))
        beta, _, e_dir = self._attention(self.edge_att, o_star, e_star, arr)
        transit = dn.segment_sum(
            dn.mul(e_dir, dn.reshape(beta, (beta.shape[0], 1))), arr.src, arr.n
        )
        upd_in = dn.concat(
            [
                dn.gather_rows(o_star, arr.ei),
                dn.gather_rows(o_star, arr.ej),
                dn.gather_rows(transit, arr.ei),
                dn.gather_rows(transit, arr.ej),
                e,
            ]
        )
        return self.edge_update(upd_in)

    def parameters(self):
        params = [self.node_wo, self.node_we, self.edge_wo, self.edge_we]
        params += self.node_att.parameters()
        params += self.edge_att.parameters()
        params += self.edge_update.parameters()
        return params

    def state_dict(self, prefix: str) -> dict:
        state = {
            f"{prefix}.node.wo": self.node_wo.data,
            f"{prefix}.node.we": self.node_we.data,
            f"{prefix}.edge.wo": self.edge_wo.data,
            f"{prefix}.edge.we": self.edge_we.data,
        }
        for name, arr in self.node_att.state_dict().items():
            state[f"{prefix}.node.att.{name}"] = arr
        for name, arr in self.edge_att.state_dict().items():
            state[f"{prefix}.edge.att.{name}"] = arr
        for name, arr in self.edge_update.state_dict().items():
            state[f"{prefix}.edge.update.{name}"] = arr
        return state

    def load_state_dict(self, prefix: str, state: dict) -> None:
        self.node_wo.data = np.asarray(state[f"{prefix}.node.wo"], dtype=float)
        self.node_we.data = np.asarray(state[f"{prefix}.node.we"], dtype=float)
        self.edge_wo.data = np.asarray(state[f"{prefix}.edge.wo"], dtype=float)
        self.edge_we.data = np.asarray(state[f"{prefix}.edge.we"], dtype=float)
        self.node_att.load_state_dict(
            {k.split(".")[-1]: v for k, v in state.items() if k.startswith(f"{prefix}.node.att.")}
        )
        self.edge_att.load_state_dict(
            {k.split(".")[-1]: v for k, v in state.items() if k.startswith(f"{prefix}.edge.att.")}
        )
        self.edge_update.load_state_dict(
            {k.split(".")[-1]: v for k, v in state.items() if k.startswith(f"{prefix}.edge.update.")}
        )


class EgateModel:
    """Autoencoder bound to a fixed graph shape (n nodes, m edges)."""

    def __init__(self, config: EgateConfig, n: int, m: int, rng: np.random.Generator):
        self.config = config
        self.n = n
        self.m = m
        self.layers = [EgatLayer(config, rng) for _ in range(config.layers)]
        self.pool_linear = None
        self.pool_mlp = None
        if config.pooling == "linear":
            sum_dim = config.merged_node_dim + config.merged_edge_dim
            self.pool_linear = dn.init_normal((config.pooling_dim, sum_dim), config.init_std, rng)
        elif config.pooling == "mlp":
            flat = n * config.merged_node_dim + m * config.merged_edge_dim
            hidden = config.pooling_hidden or 2 * config.pooling_dim
            self.pool_mlp = dn.Mlp(
                (flat, hidden, config.pooling_dim), rng, config.init_std, "relu"
            )
        out_dim = n * config.node_dim + m * config.edge_dim
        self.decoder = dn.Mlp(
            (config.latent_dim, config.decoder_hidden, out_dim), rng, config.init_std, "relu"
        )

    @property
    def latent_dim(self) -> int:
        return self.config.latent_dim

    def _check(self, graph: HGraph) -> _GraphArrays:
        if graph.n != self.n or graph.m != self.m:
            raise ValueError(
                f"graph shape ({graph.n}, {graph.m}) != model shape ({self.n}, {self.m})"
            )
        if graph.node_dim != self.config.node_dim or graph.edge_dim != self.config.edge_dim:
            raise ValueError("graph feature dims do not match the model configuration")
        return _GraphArrays(graph)

    def _merged(self, graph: HGraph):
        arr = self._check(graph)
        o = dn.constant(graph.node_features)
        e = dn.constant(graph.edge_features)
        o_layers, e_layers = [], []
        for layer in self.layers:
            o = layer.node_forward(o, e, arr)
            e = layer.edge_forward(o, e, arr)
            o_layers.append(o)
            e_layers.append(e)
        if self.config.merge == "concat":
            return dn.concat(o_layers), dn.concat(e_layers)
        o_fin = o_layers[0]
        e_fin = e_layers[0]
        for t in o_layers[1:]:
            o_fin = dn.add(o_fin, t)
        for t in e_layers[1:]:
            e_fin = dn.add(e_fin, t)
        inv = 1.0 / len(o_layers)
        return dn.mul(o_fin, dn.constant(inv)), dn.mul(e_fin, dn.constant(inv))

    def encode_tensor(self, graph: HGraph):
        """Latent vector as a tape-connected tensor."""
        o_fin, e_fin = self._merged(graph)
        if self.config.pooling == "mlp":
            flat = dn.concat([dn.flatten(o_fin), dn.flatten(e_fin)])
            return self.pool_mlp(flat)
        pooled = dn.concat([dn.row_sum(o_fin), dn.row_sum(e_fin)])
        if self.config.pooling == "linear":
            return dn.matmul(self.pool_linear, pooled)
        return pooled

    def encode_latent(self, graph: HGraph) -> np.ndarray:
        return self.encode_tensor(graph).data.copy()

    def decode_tensor(self, latent):
        raw = self.decoder(latent)
        split = self.n * self.config.node_dim
        o = dn.reshape(dn.slice_1d(raw, 0, split), (self.n, self.config.node_dim))
        e = dn.reshape(
            dn.slice_1d(raw, split, split + self.m * self.config.edge_dim),
            (self.m, self.config.edge_dim),
        )
        return o, e

    def loss_tensor(self, graph: HGraph, beta: float | None = None):
        o_rec, e_rec = self.decode_tensor(self.encode_tensor(graph))
        b = self.config.beta if beta is None else beta
        node_loss = dn.mse(o_rec, dn.constant(graph.node_features))
        edge_loss = dn.mse(e_rec, dn.constant(graph.edge_features))
        return dn.add(node_loss, dn.mul(edge_loss, dn.constant(b)))

    def parameters(self):
        params = []
        for layer in self.layers:
            params += layer.parameters()
        if self.pool_linear is not None:
            params.append(self.pool_linear)
        if self.pool_mlp is not None:
            params += self.pool_mlp.parameters()
        params += self.decoder.parameters()
        return params

    def state_dict(self) -> dict:
        state = {}
        for k, layer in enumerate(self.layers):
            state.update(layer.state_dict(f"layer{k}"))
        if self.pool_linear is not None:
            state["pool.linear"] = self.pool_linear.data
        if self.pool_mlp is not None:
            for name, arr in self.pool_mlp.state_dict().items():
                state[f"pool.mlp.{name}"] = arr
        for name, arr in self.decoder.state_dict().items():
            state[f"decoder.{name}"] = arr
        return state

    def load_state_dict(self, state: dict) -> None:
        for k, layer in enumerate(self.layers):
            layer.load_state_dict(f"layer{k}", state)
        if self.pool_linear is not None:
            self.pool_linear.data = np.asarray(state["pool.linear"], dtype=float)
        if self.pool_mlp is not None:
            self.pool_mlp.load_state_dict(
                {k.split(".")[-1]: v for k, v in state.items() if k.startswith("pool.mlp.")}
            )
        self.decoder.load_state_dict(
            {k.split(".")[-1]: v for k, v in state.items() if k.startswith("decoder.")}
        )

    def checkpoint_json(self) -> str:
        arch = {
            "layers": self.config.layers,
            "node_dim": self.config.node_dim,
            "edge_dim": self.config.edge_dim,
            "contribution": self.config.contribution,
            "merge": self.config.merge,
            "pooling": self.config.pooling,
            "pooling_dim": self.config.pooling_dim,
            "pooling_hidden": self.config.pooling_hidden,
            "attention_hidden": list(self.config.attention_hidden),
            "edge_update_hidden": list(self.config.edge_update_hidden),
            "decoder_hidden": self.config.decoder_hidden,
            "beta": self.config.beta,
            "init_std": self.config.init_std,
            "leaky_slope": self.config.leaky_slope,
            "elu_alpha": self.config.elu_alpha,
            "n": self.n,
            "m": self.m,
        }
        return json.dumps(
            {"architecture": arch, "weights": json.loads(dn.state_to_json(self.state_dict()))},
            sort_keys=True,
        )

    @classmethod
    def from_checkpoint_json(cls, text: str) -> "EgateModel":
        doc = json.loads(text)
        arch = doc["architecture"]
        config = EgateConfig(
            layers=arch["layers"],
            node_dim=arch["node_dim"],
            edge_dim=arch["edge_dim"],
            contribution=arch["contribution"],
            merge=arch["merge"],
            pooling=arch["pooling"],
            pooling_dim=arch["pooling_dim"],
            pooling_hidden=arch["pooling_hidden"],
            attention_hidden=tuple(arch["attention_hidden"]),
            edge_update_hidden=tuple(arch["edge_update_hidden"]),
            decoder_hidden=arch["decoder_hidden"],
            beta=arch["beta"],
            init_std=arch["init_std"],
            leaky_slope=arch["leaky_slope"],
            elu_alpha=arch["elu_alpha"],
        )
        model = cls(config, arch["n"], arch["m"], np.random.default_rng(0))
        model.load_state_dict(dn.state_from_json(json.dumps(doc["weights"])))
        return model


# -----------------------------------------------------------------------------
# op-level conveniences (numpy in, numpy out)
# -----------------------------------------------------------------------------


def node_module(layer: EgatLayer, o: np.ndarray, e: np.ndarray, graph: HGraph) -> np.ndarray:
    """Single node-module pass with explicit feature matrices."""
    arr = _GraphArrays(graph)
    return layer.node_forward(dn.constant(o), dn.constant(e), arr).data


def edge_module(layer: EgatLayer, o: np.ndarray, e: np.ndarray, graph: HGraph) -> np.ndarray:
    """Single edge-module pass with explicit feature matrices."""
    arr = _GraphArrays(graph)
    return layer.edge_forward(dn.constant(o), dn.constant(e), arr).data


def encode_latent(graph: HGraph, model: EgateModel) -> np.ndarray:
    return model.encode_latent(graph)


def reconstruction_loss(model: EgateModel, graph: HGraph, beta: float | None = None) -> float:
    return float(model.loss_tensor(graph, beta).data)


def attention_weights(model: EgateModel, graph: HGraph) -> list:
    """Per-layer (alpha, beta) attention vectors over directed edges, for checks."""
    arr = model._check(graph)
    o = dn.constant(graph.node_features)
    e = dn.constant(graph.edge_features)
    out = []
    for layer in model.layers:
        o_star = dn.matmul(o, dn.transpose(layer.node_wo))
        e_star = dn.matmul(e, dn.transpose(layer.node_we))
        alpha, _, _ = layer._attention(layer.node_att, o_star, e_star, arr)
        o = layer.node_forward(o, e, arr)
        o_star2 = dn.matmul(o, dn.transpose(layer.edge_wo))
        e_star2 = dn.matmul(e, dn.transpose(layer.edge_we))
        beta, _, _ = layer._attention(layer.edge_att, o_star2, e_star2, arr)
        e = layer.edge_forward(o, e, arr)
        out.append((alpha.data.copy(), beta.data.copy(), arr.src.copy()))
    return out


# -----------------------------------------------------------------------------
# training
# -----------------------------------------------------------------------------


@dataclass(frozen=True)
class EgateTrainConfig:
    epochs: int
    lr: float = 1e-3
    batch_size: int | None = None  # None = full batch
    schedule: dn.StepDecay | None = None
    seed: int = 0
    optimizer: str = "adam"


def _batch_loss(model: EgateModel, graphs: list) -> dn.Tensor:
    total = model.loss_tensor(graphs[0])
    for g in graphs[1:]:
        total = dn.add(total, model.loss_tensor(g))
    return dn.mul(total, dn.constant(1.0 / len(graphs)))


def train(model: EgateModel, dataset: list, config: EgateTrainConfig) -> list:
    """Minimize the reconstruction loss; returns the per-step loss history.

    Mini-batches are shuffled with the run seed.  A non-finite loss aborts
    with a diagnostic.
    """
    if not dataset:
        raise ValueError("empty training set")
    rng = np.random.default_rng(config.seed)
    opt_cls = dn.Adam if config.optimizer == "adam" else dn.Sgd
    opt = opt_cls(model.parameters(), config.lr, config.schedule)
    history = []
    for epoch in range(config.epochs):
        if config.batch_size is None:
            batches = [list(dataset)]
        else:
            order = rng.permutation(len(dataset))
            batches = [
                [dataset[k] for k in order[s : s + config.batch_size]]
                for s in range(0, len(dataset), config.batch_size)
            ]
        for batch in batches:
            opt.zero_grad()
            try:
                loss = _batch_loss(model, batch)
                dn.backward(loss)
            except FloatingPointError as err:
                raise RuntimeError(
                    f"non-finite reconstruction loss at epoch {epoch} (lr={opt.current_lr()}): {err}"
                ) from err
            history.append(float(loss.data))
            opt.step()
    return history


def train_until(
    model: EgateModel,
    dataset: list,
    tol: float,
    max_steps: int,
    lr: float = 1e-2,
    seed: int = 0,
    optimizer: str = "adam",
) -> tuple:
    """Full-batch training until the loss drops below ``tol``.

    Returns (steps_taken, history); ``steps_taken`` is ``max_steps`` when the
    tolerance was never reached.
    """
    opt_cls = dn.Adam if optimizer == "adam" else dn.Sgd
    opt = opt_cls(model.parameters(), lr)
    history = []
    for step in range(1, max_steps + 1):
        opt.zero_grad()
        loss = _batch_loss(model, dataset)
        dn.backward(loss)
        history.append(float(loss.data))
        if history[-1] < tol:
            return step, history
        opt.step()
    return max_steps, history
