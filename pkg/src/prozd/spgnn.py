"""Positional message passing that recovers hop distances to the critical assets.

Node embeddings are trained so that the smallest L1 distance between a node's
embedding and any critical asset's embedding equals its (truncated) hop count to
the nearest critical asset.  Critical assets sit at distance exactly zero from
themselves, so their prediction is always 0.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field

import numpy as np
import scipy.sparse as sp

from prozd.graph_model import ConnectivityGraph, critical_assets
from prozd.nn import tensor as T
from prozd.nn.layers import Linear
from prozd.nn.losses import mse_loss
from prozd.nn.params import Adam, AdamConfig, Parameters
from prozd.nn.tensor import Tensor
from prozd.oracle import min_hop_distance

DEFAULT_Q = 4
NEIGHBORHOODS = ("both", "out", "in")
N_INPUT = 5


class SpgnnError(ValueError):
    pass


def truncated_distance(d: float, q: int = DEFAULT_Q) -> float:
    if q < 1:
        raise ValueError("q must be >= 1")
    return d if d < q else math.inf


def proximity(d: float, q: int = DEFAULT_Q) -> float:
    """1 / (d + 1) on the truncated distance; 0 beyond the cutoff."""
    t = truncated_distance(d, q)
    return 0.0 if math.isinf(t) else 1.0 / (t + 1.0)


def anchor_distance_vector(h_u: np.ndarray, anchors: np.ndarray) -> np.ndarray:
    """L1 distance between one embedding and each row of ``anchors``."""
    h_u = np.asarray(h_u, dtype=np.float64)
    anchors = np.atleast_2d(np.asarray(anchors, dtype=np.float64))
    if anchors.shape[1] != h_u.shape[-1]:
        raise ValueError(f"embedding dimension mismatch {h_u.shape[-1]} vs {anchors.shape[1]}")
    return np.abs(anchors - h_u).sum(axis=1)


def round_half_up(x: np.ndarray, q: int = DEFAULT_Q) -> np.ndarray:
    """Nearest integer (halves go up), clamped to 0..q where q stands for ">= q"."""
    return np.clip(np.floor(np.asarray(x, dtype=np.float64) + 0.5), 0, q).astype(np.int64)


def clamp_targets(d: np.ndarray, q: int = DEFAULT_Q) -> np.ndarray:
    return np.minimum(np.asarray(d, dtype=np.float64), q)


@dataclass
class SpgnnConfig:
    q: int = DEFAULT_Q
    layers: int | None = None  # defaults to q
    hidden: int = 64
    neighborhood: str = "both"
    epochs: int = 300
    lr: float = 1e-2
    patience: int = 40
    seed: int = 0

    @property
    def n_layers(self) -> int:
        return self.q if self.layers is None else self.layers

    def validate(self) -> None:
        if self.q < 1 or self.n_layers < 1 or self.hidden < 1:
            raise SpgnnError("q, layers and hidden must be positive")
        if self.neighborhood not in NEIGHBORHOODS:
            raise SpgnnError(f"neighborhood must be one of {NEIGHBORHOODS}")


def mean_operator(graph: ConnectivityGraph, direction: str) -> sp.csr_matrix:
    """Row-normalized adjacency: row u averages over u's out- or in-neighbors."""
    src, dst, _ = graph.pairs
    rows, cols = (src, dst) if direction == "out" else (dst, src)
    n = graph.n_nodes
    m = sp.csr_matrix((np.ones(len(rows)), (rows, cols)), shape=(n, n))
    deg = np.asarray(m.sum(axis=1)).ravel()
    inv = np.divide(1.0, deg, out=np.zeros(n), where=deg > 0)
    return sp.diags(inv) @ m


def anchor_inputs(graph: ConnectivityGraph, anchors: np.ndarray) -> np.ndarray:
    """Per-node input read off the adjacency matrix: 1-hop proximity to the anchor set.

    Columns: self proximity (1 for anchors), best and mean proximity over
    out-neighbors, and best and mean over in-neighbors.  Every column is invariant
    to how anchors and nodes are numbered.
    """
    n = graph.n_nodes
    is_anchor = np.zeros(n)
    is_anchor[anchors] = 1.0
    out = np.zeros((n, N_INPUT))
    out[:, 0] = is_anchor
    for col, direction in ((1, "out"), (3, "in")):
        mean = mean_operator(graph, direction)
        # a neighbor that is an anchor sits at distance 1, proximity 1/2
        reach = 0.5 * (mean @ is_anchor)
        touch = (mean.astype(bool).astype(np.float64) @ is_anchor) > 0
        out[:, col] = 0.5 * touch
        out[:, col + 1] = reach
    return out


@dataclass
class SpgnnInputs:
    x: np.ndarray
    operators: list[sp.csr_matrix]
    anchors: np.ndarray

    @classmethod
    def build(cls, graph: ConnectivityGraph, neighborhood: str = "both", anchors=None) -> SpgnnInputs:
        anchors = np.asarray(critical_assets(graph) if anchors is None else anchors, dtype=np.int64)
        if anchors.size == 0:
            raise SpgnnError("anchor set is empty")
        dirs = ("out", "in") if neighborhood == "both" else (neighborhood,)
        return cls(anchor_inputs(graph, anchors), [mean_operator(graph, d) for d in dirs], anchors)


class Spgnn:
    def __init__(self, config: SpgnnConfig | None = None, params: Parameters | None = None):
        self.config = config or SpgnnConfig()
        self.config.validate()
        self.params = params or Parameters(self.config.seed)
        c = self.config
        n_dirs = 2 if c.neighborhood == "both" else 1
        self.layers = []
        width = N_INPUT
        for i in range(c.n_layers):
            self.layers.append(Linear.create(self.params, f"spgnn.{i}", N_INPUT + width * (1 + n_dirs), c.hidden))
            width = c.hidden

    def embed(self, inputs: SpgnnInputs) -> Tensor:
        x = Tensor(inputs.x)
        h = x
        for i, layer in enumerate(self.layers):
            parts = [x, h] + [T.sparse_matmul(op, h) for op in inputs.operators]
            h = layer(T.concat(parts, axis=1))
            if i < len(self.layers) - 1:
                h = T.leaky_relu(h)
        return h

    def min_ad(self, emb: Tensor, inputs: SpgnnInputs, rows: np.ndarray | None = None) -> Tensor:
        """Smallest L1 distance from each selected node's embedding to any anchor's."""
        sel = emb if rows is None else T.gather_rows(emb, rows)
        return T.min_axis1(T.pairwise_l1(sel, T.gather_rows(emb, inputs.anchors)))

    def predict_raw(self, graph: ConnectivityGraph, inputs: SpgnnInputs | None = None) -> np.ndarray:
        inputs = inputs or SpgnnInputs.build(graph, self.config.neighborhood)
        emb = self.embed(inputs)
        return self.min_ad(emb, inputs).data.copy()

    def predict(self, graph: ConnectivityGraph, inputs: SpgnnInputs | None = None) -> np.ndarray:
        """Rounded distances; the value q means "q or more hops"."""
        return round_half_up(self.predict_raw(graph, inputs), self.config.q)


@dataclass
class SpgnnResult:
    model: Spgnn
    losses: list[float] = field(default_factory=list)
    raw: np.ndarray | None = None
    predicted: np.ndarray | None = None

    def config_dict(self) -> dict:
        return asdict(self.model.config)


def train_spgnn(
    graph: ConnectivityGraph,
    train_mask: np.ndarray,
    config: SpgnnConfig | None = None,
    true_distance: np.ndarray | None = None,
) -> SpgnnResult:
    """Fit embeddings against BFS distances on the training nodes; full-batch Adam."""
    config = config or SpgnnConfig()
    model = Spgnn(config)
    inputs = SpgnnInputs.build(graph, config.neighborhood)
    d = min_hop_distance(graph, inputs.anchors) if true_distance is None else np.asarray(true_distance, float)
    rows = np.flatnonzero(np.asarray(train_mask, dtype=bool))
    if not np.any(np.isfinite(d[rows])):
        raise SpgnnError("no training node has a finite distance to a critical asset")
    target = clamp_targets(d[rows], config.q)
    opt = Adam(model.params, AdamConfig(lr=config.lr))
    losses: list[float] = []
    best, best_state, stale = math.inf, model.params.state(), 0
    for _ in range(config.epochs):
        model.params.zero_grad()
        pred = model.min_ad(model.embed(inputs), inputs, rows)
        loss = mse_loss(pred, target)
        loss.backward()
        losses.append(float(loss.data))
        if losses[-1] < best - 1e-9:
            best, best_state, stale = losses[-1], model.params.state(), 0
        else:
            stale += 1
            if stale >= config.patience:
                break
        opt.step()
    model.params.load_state(best_state)
    raw = model.predict_raw(graph, inputs)
    return SpgnnResult(model, losses, raw, round_half_up(raw, config.q))


def within_one(predicted: np.ndarray, true_distance: np.ndarray, q: int = DEFAULT_Q) -> np.ndarray:
    """Per node: rounded prediction within one hop of the clamped BFS distance."""
    return np.abs(np.asarray(predicted) - clamp_targets(true_distance, q)) <= 1


def edge_values(graph: ConnectivityGraph, node_values: np.ndarray) -> np.ndarray:
    """Attribute a per-node value to edges, reading it from each edge's destination."""
    node_values = np.asarray(node_values)
    if node_values.shape[0] != graph.n_nodes:
        raise ValueError("need one value per node")
    return node_values[graph.edge_dst] if graph.n_edges else node_values[:0]
