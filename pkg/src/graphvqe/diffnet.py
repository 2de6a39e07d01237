"""Minimal reverse-mode differentiation engine and MLP toolkit.

Float64 numpy arrays wrapped in :class:`Tensor` nodes form an implicit tape;
``backward`` walks it in reverse topological order.  The op set is exactly
what the graph-attention encoder and the parameter predictor need: matmul,
broadcast arithmetic, concatenation, row reductions, gather/segment ops,
softmax over explicit index groups, the usual activations, and MSE.

External vector-Jacobian products (e.g. an ansatz-parameter gradient computed
by the simulator) can be injected by seeding ``backward`` at a non-scalar
tensor.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

#: validate that every op output is finite (cheap at this package's scales)
CHECK_FINITE = True


class Tensor:
    __slots__ = ("data", "grad", "requires_grad", "_parents", "_vjp", "_done")

    def __init__(self, data, requires_grad=False, parents=(), vjp=None):
        self.data = np.asarray(data, dtype=float)
        self.grad = None
        self.requires_grad = bool(requires_grad)
        self._parents = parents
        self._vjp = vjp
        self._done = False

    def __repr__(self):
        return f"Tensor(shape={self.data.shape}, requires_grad={self.requires_grad})"

    @property
    def shape(self):
        return self.data.shape

    def detach(self) -> "Tensor":
        return Tensor(self.data.copy())

    def zero_grad(self):
        self.grad = None

    # operator sugar
    def __add__(self, other):
        return add(self, _wrap(other))

    def __radd__(self, other):
        return add(_wrap(other), self)

    def __sub__(self, other):
        return sub(self, _wrap(other))

    def __rsub__(self, other):
        return sub(_wrap(other), self)

    def __mul__(self, other):
        return mul(self, _wrap(other))

    def __rmul__(self, other):
        return mul(_wrap(other), self)

    def __neg__(self):
        return mul(self, _wrap(-1.0))

    def __matmul__(self, other):
        return matmul(self, _wrap(other))


def parameter(data) -> Tensor:
    return Tensor(np.array(data, dtype=float), requires_grad=True)


def constant(data) -> Tensor:
    return Tensor(np.asarray(data, dtype=float))


def _wrap(x) -> Tensor:
    return x if isinstance(x, Tensor) else constant(x)


def _make(data, parents, vjp) -> Tensor:
    if CHECK_FINITE and not np.all(np.isfinite(data)):
        raise FloatingPointError("non-finite value produced by a tensor op")
    req = any(p.requires_grad for p in parents)
    if not req:
        return Tensor(data)
    return Tensor(data, requires_grad=True, parents=parents, vjp=vjp)


def backward(out: Tensor, seed: np.ndarray | None = None) -> None:
    """Accumulate gradients of ``out`` into every reachable parameter.

    ``seed`` is the gradient of the final objective with respect to ``out``;
    it defaults to 1 and then requires ``out`` to be scalar.
    """
    if out._done:
        raise RuntimeError("backward already ran on this tensor; rebuild the graph")
    if seed is None:
        if out.data.size != 1:
            raise ValueError("backward without a seed needs a scalar output")
        seed = np.ones_like(out.data)
    else:
        seed = np.asarray(seed, dtype=float)
        if seed.shape != out.data.shape:
            raise ValueError(f"seed shape {seed.shape} != output shape {out.data.shape}")
    out._done = True
    if not out.requires_grad:
        return

    order = []
    visited = set()
    stack = [(out, False)]
    while stack:
        node, expanded = stack.pop()
        if expanded:
            order.append(node)
            continue
        if id(node) in visited:
            continue
        visited.add(id(node))
        stack.append((node, True))
        for p in node._parents:
            if p.requires_grad and id(p) not in visited:
                stack.append((p, False))

    grads = {id(out): seed}
    for node in reversed(order):
        g = grads.pop(id(node), None)
        if g is None:
            continue
        node.grad = g if node.grad is None else node.grad + g
        if node._vjp is None:
            continue
        for p, pg in zip(node._parents, node._vjp(g)):
            if not p.requires_grad or pg is None:
                continue
            if id(p) in grads:
                grads[id(p)] = grads[id(p)] + pg
            else:
                grads[id(p)] = pg


def _unbroadcast(grad: np.ndarray, shape: tuple) -> np.ndarray:
    while grad.ndim > len(shape):
        grad = grad.sum(axis=0)
    for ax, size in enumerate(shape):
        if size == 1 and grad.shape[ax] != 1:
            grad = grad.sum(axis=ax, keepdims=True)
    return grad


# -----------------------------------------------------------------------------
# forward primitives
# -----------------------------------------------------------------------------


def add(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data + b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(g, b.data.shape)),
    )


def sub(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data - b.data,
        (a, b),
        lambda g: (_unbroadcast(g, a.data.shape), _unbroadcast(-g, b.data.shape)),
    )


def mul(a: Tensor, b: Tensor) -> Tensor:
    return _make(
        a.data * b.data,
        (a, b),
        lambda g: (
            _unbroadcast(g * b.data, a.data.shape),
            _unbroadcast(g * a.data, b.data.shape),
        ),
    )


def matmul(a: Tensor, b: Tensor) -> Tensor:
    ad, bd = a.data, b.data

    def vjp(g):
        if ad.ndim == 2 and bd.ndim == 2:
            return g @ bd.T, ad.T @ g
        if ad.ndim == 1 and bd.ndim == 2:
            return bd @ g, np.outer(ad, g)
        if ad.ndim == 2 and bd.ndim == 1:
            return np.outer(g, bd), ad.T @ g
        return g * bd, g * ad  # 1D @ 1D

    return _make(ad @ bd, (a, b), vjp)


def concat(tensors: list, axis: int = -1) -> Tensor:
    datas = [t.data for t in tensors]
    sizes = [d.shape[axis] for d in datas]
    splits = np.cumsum(sizes)[:-1]

    def vjp(g):
        return tuple(np.split(g, splits, axis=axis))

    return _make(np.concatenate(datas, axis=axis), tuple(tensors), vjp)


def reshape(x: Tensor, shape: tuple) -> Tensor:
    old = x.data.shape
    return _make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (-1,))


def slice_1d(x: Tensor, start: int, stop: int) -> Tensor:
    def vjp(g):
        full = np.zeros_like(x.data)
        full[start:stop] = g
        return (full,)

    return _make(x.data[start:stop], (x,), vjp)


def gather_rows(x: Tensor, index: np.ndarray) -> Tensor:
    index = np.asarray(index)

    def vjp(g):
        full = np.zeros_like(x.data)
        np.add.at(full, index, g)
        return (full,)

    return _make(x.data[index], (x,), vjp)


def segment_sum(x: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Sum rows of ``x`` into ``num_segments`` groups given per-row segment ids."""
    segments = np.asarray(segments)
    out = np.zeros((num_segments,) + x.data.shape[1:])
    np.add.at(out, segments, x.data)
    return _make(out, (x,), lambda g: (g[segments],))


def softmax_over_sets(scores: Tensor, segments: np.ndarray, num_segments: int) -> Tensor:
    """Softmax normalized within explicit index groups (e.g. neighbour lists).

    Every group must be non-empty; an empty set has no normalizable weights.
    """
    segments = np.asarray(segments)
    counts = np.bincount(segments, minlength=num_segments)
    if num_segments > 0 and counts.min() == 0:
        raise ValueError("softmax over an empty index set")
    s = scores.data
    high = np.full(num_segments, -np.inf)
    np.maximum.at(high, segments, s)
    e = np.exp(s - high[segments])
    denom = np.zeros(num_segments)
    np.add.at(denom, segments, e)
    y = e / denom[segments]

    def vjp(g):
        dot = np.zeros(num_segments)
        np.add.at(dot, segments, g * y)
        return ((g - dot[segments]) * y,)

    return _make(y, (scores,), vjp)


def row_sum(x: Tensor) -> Tensor:
    """Sum over rows (axis 0), e.g. sum pooling of per-node features."""
    def vjp(g):
        return (np.broadcast_to(g, x.data.shape).copy(),)

    return _make(x.data.sum(axis=0), (x,), vjp)


def row_mean(x: Tensor) -> Tensor:
    rows = x.data.shape[0]

    def vjp(g):
        return (np.broadcast_to(g / rows, x.data.shape).copy(),)

    return _make(x.data.mean(axis=0), (x,), vjp)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return _make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def leaky_relu(x: Tensor, slope: float = 0.01) -> Tensor:
    mask = x.data > 0
    return _make(
        np.where(mask, x.data, slope * x.data),
        (x,),
        lambda g: (g * np.where(mask, 1.0, slope),),
    )


def elu(x: Tensor, alpha: float = 1.0) -> Tensor:
    mask = x.data > 0
    y = np.where(mask, x.data, alpha * np.expm1(x.data))
    return _make(y, (x,), lambda g: (g * np.where(mask, 1.0, y + alpha),))


def sigmoid(x: Tensor) -> Tensor:
    y = 1.0 / (1.0 + np.exp(-x.data))
    return _make(y, (x,), lambda g: (g * y * (1.0 - y),))


def mse(a: Tensor, b: Tensor) -> Tensor:
    """Mean squared error over all entries; defined as 0 for empty inputs."""
    if a.data.shape != b.data.shape:
        raise ValueError(f"mse shape mismatch {a.data.shape} vs {b.data.shape}")
    size = a.data.size
    if size == 0:
        return constant(0.0)
    diff = a.data - b.data

    def vjp(g):
        scaled = (2.0 / size) * g * diff
        return scaled, -scaled

    return _make(np.array((diff**2).mean()), (a, b), vjp)


def mean_all(x: Tensor) -> Tensor:
    size = x.data.size
    return _make(
        np.array(x.data.mean()),
        (x,),
        lambda g: (np.full(x.data.shape, float(g) / size),),
    )


# -----------------------------------------------------------------------------
# initialization, MLP, optimizers
# -----------------------------------------------------------------------------


def init_normal(shape, stddev: float, rng: np.random.Generator) -> Tensor:
    """Trainable tensor with i.i.d. N(0, stddev^2) entries."""
    if stddev <= 0:
        raise ValueError("stddev must be > 0")
    return parameter(rng.normal(0.0, stddev, size=shape))


_HIDDEN_ACTS = ("relu", "leaky_relu", "elu")
_OUTPUT_ACTS = ("identity", "sigmoid_2pi")


class Mlp:
    """Fully connected network over row-stacked inputs.

    ``widths`` lists layer sizes input->...->output.  ``output_activation``
    "sigmoid_2pi" squashes into [0, 2*pi] (ansatz-parameter range).
    """

    def __init__(
        self,
        widths,
        rng: np.random.Generator,
        init_std: float = 0.1,
        hidden_activation: str = "relu",
        output_activation: str = "identity",
        leaky_slope: float = 0.01,
        elu_alpha: float = 1.0,
    ):
        if len(widths) < 2:
            raise ValueError("an MLP needs at least input and output widths")
        if hidden_activation not in _HIDDEN_ACTS:
            raise ValueError(f"hidden activation must be one of {_HIDDEN_ACTS}")
        if output_activation not in _OUTPUT_ACTS:
            raise ValueError(f"output activation must be one of {_OUTPUT_ACTS}")
        self.widths = tuple(int(w) for w in widths)
        self.hidden_activation = hidden_activation
        self.output_activation = output_activation
        self.leaky_slope = leaky_slope
        self.elu_alpha = elu_alpha
        self.weights = []
        self.biases = []
        for d_in, d_out in zip(self.widths[:-1], self.widths[1:]):
            self.weights.append(init_normal((d_out, d_in), init_std, rng))
            self.biases.append(init_normal((d_out,), init_std, rng))

    def _activate(self, x: Tensor) -> Tensor:
        if self.hidden_activation == "relu":
            return relu(x)
        if self.hidden_activation == "leaky_relu":
            return leaky_relu(x, self.leaky_slope)
        return elu(x, self.elu_alpha)

    def __call__(self, x: Tensor) -> Tensor:
        out = x
        last = len(self.weights) - 1
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            out = add(matmul(out, transpose(w)), b)
            if k < last:
                out = self._activate(out)
        if self.output_activation == "sigmoid_2pi":
            out = mul(sigmoid(out), constant(2.0 * np.pi))
        return out

    def parameters(self) -> list:
        params = []
        for w, b in zip(self.weights, self.biases):
            params.append(w)
            params.append(b)
        return params

    def state_dict(self) -> dict:
        state = {}
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            state[f"w{k}"] = w.data
            state[f"b{k}"] = b.data
        return state

    def load_state_dict(self, state: dict) -> None:
        for k, (w, b) in enumerate(zip(self.weights, self.biases)):
            w.data = np.asarray(state[f"w{k}"], dtype=float).reshape(w.data.shape)
            b.data = np.asarray(state[f"b{k}"], dtype=float).reshape(b.data.shape)


def transpose(x: Tensor) -> Tensor:
    return _make(x.data.T, (x,), lambda g: (g.T,))


@dataclass(frozen=True)
class StepDecay:
    """Multiply the learning rate by ``factor`` every ``every`` steps."""

    every: int
    factor: float

    def __post_init__(self):
        if self.every < 1:
            raise ValueError("decay interval must be >= 1")
        if not 0.0 < self.factor <= 1.0:
            raise ValueError("decay factor must be in (0, 1]")


class _Optimizer:
    def __init__(self, params, lr: float, schedule: StepDecay | None = None):
        if lr <= 0:
            raise ValueError("learning rate must be > 0")
        self.params = list(params)
        self.lr = float(lr)
        self.schedule = schedule
        self.steps = 0

    def current_lr(self) -> float:
        if self.schedule is None:
            return self.lr
        return self.lr * self.schedule.factor ** (self.steps // self.schedule.every)

    def zero_grad(self):
        for p in self.params:
            p.grad = None

    def step(self):
        lr = self.current_lr()
        for p in self.params:
            if p.grad is not None:
                self._update(p, lr)
        self.steps += 1

    def _update(self, p: Tensor, lr: float):
        raise NotImplementedError


class Sgd(_Optimizer):
    def _update(self, p: Tensor, lr: float):
        p.data = p.data - lr * p.grad


class Adam(_Optimizer):
    def __init__(self, params, lr: float, schedule: StepDecay | None = None,
                 beta1: float = 0.9, beta2: float = 0.999, eps: float = 1e-8):
        super().__init__(params, lr, schedule)
        self.beta1, self.beta2, self.eps = beta1, beta2, eps
        self._m = [np.zeros_like(p.data) for p in self.params]
        self._v = [np.zeros_like(p.data) for p in self.params]

    def step(self):
        lr = self.current_lr()
        self.steps += 1
        t = self.steps
        for k, p in enumerate(self.params):
            if p.grad is None:
                continue
            self._m[k] = self.beta1 * self._m[k] + (1 - self.beta1) * p.grad
            self._v[k] = self.beta2 * self._v[k] + (1 - self.beta2) * p.grad**2
            m_hat = self._m[k] / (1 - self.beta1**t)
            v_hat = self._v[k] / (1 - self.beta2**t)
            p.data = p.data - lr * m_hat / (np.sqrt(v_hat) + self.eps)


# -----------------------------------------------------------------------------
# checkpoints
# -----------------------------------------------------------------------------


def state_to_json(state: dict) -> str:
    """Serialize {name -> array} to JSON; float repr round-trips bit-exactly."""
    doc = {
        name: {"shape": list(np.asarray(arr).shape), "values": np.asarray(arr).ravel().tolist()}
        for name, arr in state.items()
    }
    return json.dumps(doc, sort_keys=True)


def state_from_json(text: str) -> dict:
    doc = json.loads(text)
    return {
        name: np.array(entry["values"], dtype=float).reshape(entry["shape"])
        for name, entry in doc.items()
    }
