"""Embedding re-parameterization via stacked graph message-passing layers.

One layer maps the table H to rho(H W1 + G H W2 + B) where G is the sparse
row-stochastic equivalence graph; stacking layers moves information over
multiple hops. Forward and backward passes are explicit numpy so gradients
compose with any downstream trainer.
"""

from __future__ import annotations

import pickle
from dataclasses import dataclass, field

import numpy as np

ACTIVATIONS = ("relu", "identity")


@dataclass
class GraphLayerParams:
    w1: np.ndarray  # d x d, projects the node's own embedding
    w2: np.ndarray  # d x d, projects the aggregated neighbor embeddings
    b: np.ndarray   # length d
    activation: str = "relu"

    def __post_init__(self):
        d = self.w1.shape[0]
        if self.w1.shape != (d, d) or self.w2.shape != (d, d) or self.b.shape != (d,):
            raise ValueError("inconsistent layer parameter shapes")
        if self.activation not in ACTIVATIONS:
            raise ValueError("unknown activation %r" % self.activation)
        for arr in (self.w1, self.w2, self.b):
            if not np.all(np.isfinite(arr)):
                raise ValueError("non-finite layer parameter")

    @property
    def dim(self) -> int:
        return self.w1.shape[0]

    @classmethod
    def init(cls, dim: int, rng, activation: str = "relu"):
        # uniform fan-in scaling; bias starts at zero
        bound = 1.0 / np.sqrt(dim)
        return cls(
            w1=rng.uniform(-bound, bound, size=(dim, dim)),
            w2=rng.uniform(-bound, bound, size=(dim, dim)),
            b=np.zeros(dim),
            activation=activation,
        )

    @classmethod
    def identity(cls, dim: int):
        """W1 = I, W2 = 0, b = 0, identity activation: a no-op layer."""
        return cls(np.eye(dim), np.zeros((dim, dim)), np.zeros(dim),
                   activation="identity")


@dataclass
class GraphMergeStack:
    layers: list = field(default_factory=list)

    def __post_init__(self):
        if self.layers:
            d = self.layers[0].dim
            if any(layer.dim != d for layer in self.layers):
                raise ValueError("layers disagree on embedding dimensionality")

    @property
    def hops(self) -> int:
        return len(self.layers)

    @property
    def dim(self) -> int:
        return self.layers[0].dim

    def num_params(self) -> int:
        """Trainable parameter count: hops * (2 d^2 + d)."""
        return sum(2 * l.dim * l.dim + l.dim for l in self.layers)

    @classmethod
    def init(cls, dim: int, hops: int, seed: int, activation: str = "relu"):
        rng = np.random.default_rng(seed)
        return cls([GraphLayerParams.init(dim, rng, activation)
                    for _ in range(hops)])

    @classmethod
    def identity(cls, dim: int, hops: int):
        return cls([GraphLayerParams.identity(dim) for _ in range(hops)])


def _activate(z: np.ndarray, activation: str) -> np.ndarray:
    if activation == "relu":
        return np.maximum(z, 0.0)
    return z


def weighted_sum(g, x: np.ndarray) -> np.ndarray:
    """Parameter-free aggregation X' = G X."""
    if g.size != x.shape[0]:
        raise ValueError("graph size %d does not match table rows %d"
                         % (g.size, x.shape[0]))
    return g.matrix @ x


def layer_forward(g, h: np.ndarray, params: GraphLayerParams) -> np.ndarray:
    """One message-passing layer: rho(H W1 + (G H) W2 + B)."""
    if g.size != h.shape[0] or h.shape[1] != params.dim:
        raise ValueError("dimension mismatch in layer_forward")
    z = h @ params.w1 + (g.matrix @ h) @ params.w2 + params.b
    return _activate(z, params.activation)


def _stack_pass(g, x: np.ndarray, stack: GraphMergeStack):
    """Forward pass keeping per-layer inputs, aggregates, and pre-activations."""
    if stack.hops == 0:
        raise ValueError("empty graph layer stack")
    if g.size != x.shape[0] or x.shape[1] != stack.dim:
        raise ValueError("dimension mismatch in stack_forward")
    h = x
    inputs, aggregates, preacts = [], [], []
    for params in stack.layers:
        gh = g.matrix @ h
        z = h @ params.w1 + gh @ params.w2 + params.b
        inputs.append(h)
        aggregates.append(gh)
        preacts.append(z)
        h = _activate(z, params.activation)
    return h, inputs, aggregates, preacts


def stack_forward(g, x: np.ndarray, stack: GraphMergeStack) -> np.ndarray:
    """Re-parameterized table: fold layer_forward over the stack, starting
    from the original table."""
    h, _, _, _ = _stack_pass(g, x, stack)
    return h


def stack_backward(g, x: np.ndarray, stack: GraphMergeStack,
                   upstream_grad: np.ndarray):
    """Exact gradients through the stack.

    Returns (grad wrt x, [(grad w1, grad w2, grad b) per layer]) for a scalar
    loss whose gradient wrt the output table is ``upstream_grad``.
    """
    if upstream_grad.shape != x.shape:
        raise ValueError("upstream gradient shape %s does not match table %s"
                         % (upstream_grad.shape, x.shape))
    _, inputs, aggregates, preacts = _stack_pass(g, x, stack)
    gt = g.matrix.T.tocsr()

    dh = upstream_grad
    layer_grads = [None] * stack.hops
    for t in range(stack.hops - 1, -1, -1):
        params = stack.layers[t]
        if params.activation == "relu":
            dz = dh * (preacts[t] > 0.0)
        else:
            dz = dh
        layer_grads[t] = (
            inputs[t].T @ dz,
            aggregates[t].T @ dz,
            dz.sum(axis=0),
        )
        dh = dz @ params.w1.T + gt @ (dz @ params.w2.T)
    return dh, layer_grads


def save_stack(stack: GraphMergeStack, path):
    """Checkpoint: per-layer named tensors with shape/dtype headers."""
    payload = {"hops": stack.hops, "dim": stack.dim if stack.hops else 0}
    for t, layer in enumerate(stack.layers):
        payload["layer%d.activation" % t] = layer.activation
        for name in ("w1", "w2", "b"):
            arr = np.ascontiguousarray(getattr(layer, name), dtype=np.float64)
            payload["layer%d.%s.shape" % (t, name)] = arr.shape
            payload["layer%d.%s" % (t, name)] = arr.tobytes()
    with open(path, "wb") as f:
        pickle.dump(payload, f, protocol=4)


def load_stack(path) -> GraphMergeStack:
    with open(path, "rb") as f:
        payload = pickle.load(f)
    layers = []
    for t in range(payload["hops"]):
        arrs = {}
        for name in ("w1", "w2", "b"):
            shape = payload["layer%d.%s.shape" % (t, name)]
            arrs[name] = np.frombuffer(
                payload["layer%d.%s" % (t, name)], dtype=np.float64
            ).reshape(shape).copy()
        layers.append(GraphLayerParams(
            arrs["w1"], arrs["w2"], arrs["b"],
            activation=payload["layer%d.activation" % t]))
    return GraphMergeStack(layers)


def export_table(table: np.ndarray, path):
    """Standalone embedding file for deployment: one row of d floats per line."""
    with open(path, "w", encoding="utf-8") as f:
        for row in table:
            f.write(" ".join("%.17g" % v for v in row) + "\n")


def import_table(path) -> np.ndarray:
    rows = []
    with open(path, encoding="utf-8") as f:
        for line in f:
            if line.strip():
                rows.append([float(v) for v in line.split()])
    return np.array(rows, dtype=np.float64)
