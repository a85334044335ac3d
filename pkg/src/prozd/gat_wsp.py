"""Edge-weighted graph attention plus a stacked dense classifier for FS1 per node.

Attention logits are multiplied by the compliance weight of the edge before the
neighborhood softmax, so compliant and non-compliant links are attended to
differently.  The classifier sees the attention output next to the raw node
features and the distance predicted by the positional stage.
"""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from prozd.features import bfs_ball, cached_touches_critical
from prozd.graph_model import CRITICAL_LEVEL, ConnectivityGraph
from prozd.nn import tensor as T
from prozd.nn.layers import MLP, LayerShapeError
from prozd.nn.losses import cross_entropy_loss
from prozd.nn.params import Adam, AdamConfig, Parameters
from prozd.nn.tensor import Tensor
from prozd.spgnn import DEFAULT_Q

NEIGHBORHOODS = ("out", "in", "both")
N_NODE_FEATURES = 6


class GraphWspError(ValueError):
    pass


@dataclass(frozen=True)
class AttentionLayerConfig:
    in_dim: int
    out_dim: int
    heads: int = 4
    negative_slope: float = 0.2

    def __post_init__(self) -> None:
        if self.in_dim < 1 or self.out_dim < 1 or self.heads < 1:
            raise ValueError("attention layer dimensions and head count must be positive")


@dataclass
class AttentionContext:
    """Attention edges (i attends to j with weight w) for one graph or subgraph."""

    n: int
    target: np.ndarray  # i
    source: np.ndarray  # j
    weight: np.ndarray  # y_e(ij)

    @property
    def isolated(self) -> np.ndarray:
        has = np.zeros(self.n, dtype=bool)
        has[self.target] = True
        return ~has

    @classmethod
    def build(cls, graph: ConnectivityGraph, neighborhood: str = "out", nodes: Sequence[int] | None = None):
        if neighborhood not in NEIGHBORHOODS:
            raise GraphWspError(f"neighborhood must be one of {NEIGHBORHOODS}")
        src, dst, w = graph.pairs
        if neighborhood == "out":
            tgt, nbr, wt = src, dst, w
        elif neighborhood == "in":
            tgt, nbr, wt = dst, src, w
        else:
            tgt, nbr, wt = np.concatenate([src, dst]), np.concatenate([dst, src]), np.concatenate([w, w])
        if nodes is None:
            return cls(graph.n_nodes, tgt.astype(np.int64), nbr.astype(np.int64), wt.astype(np.float64))
        nodes = np.asarray(nodes, dtype=np.int64)
        local = np.full(graph.n_nodes, -1, dtype=np.int64)
        local[nodes] = np.arange(len(nodes))
        keep = (local[tgt] >= 0) & (local[nbr] >= 0)
        return cls(len(nodes), local[tgt[keep]], local[nbr[keep]], wt[keep].astype(np.float64))


class AttentionLayer:
    def __init__(self, params: Parameters, name: str, cfg: AttentionLayerConfig):
        self.name = name
        self.cfg = cfg
        width = cfg.heads * cfg.out_dim
        self.weight = params.xavier(f"{name}.weight", cfg.in_dim, width)
        # attention vector a = [a_self || a_neighbor], one pair per head, laid out head-major
        self.a_self = params.xavier(f"{name}.a_self", 1, width)
        self.a_nbr = params.xavier(f"{name}.a_nbr", 1, width)

    def project(self, h: Tensor) -> Tensor:
        if h.data.ndim != 2 or h.shape[1] != self.cfg.in_dim:
            raise LayerShapeError(self.name, self.cfg.in_dim, h.shape)
        return T.matmul(h, self.weight)

    def _head_scores(self, hp: Tensor, a: Tensor) -> Tensor:
        c = self.cfg
        return T.sum_axis(T.reshape(T.mul(hp, a), (hp.shape[0], c.heads, c.out_dim)), 2)

    def attention(self, hp: Tensor, ctx: AttentionContext) -> Tensor:
        """(n_attention_edges, heads) coefficients, summing to 1 over each node's neighbors."""
        s_self = self._head_scores(hp, self.a_self)
        s_nbr = self._head_scores(hp, self.a_nbr)
        raw = T.gather_rows(s_self, ctx.target) + T.gather_rows(s_nbr, ctx.source)
        logits = T.mul(T.leaky_relu(raw, self.cfg.negative_slope), Tensor(ctx.weight[:, None]))
        return T.segment_softmax(logits, ctx.target, ctx.n)

    def __call__(self, h: Tensor, ctx: AttentionContext, activation: bool = True) -> Tensor:
        c = self.cfg
        hp = self.project(h)
        alpha = self.attention(hp, ctx)
        msgs = T.mul(
            T.reshape(T.gather_rows(hp, ctx.source), (len(ctx.source), c.heads, c.out_dim)),
            T.reshape(alpha, (len(ctx.source), c.heads, 1)),
        )
        agg = T.segment_sum(msgs, ctx.target, ctx.n)
        iso = ctx.isolated
        if iso.any():
            # no neighbors: fall back to the node's own projected features
            agg = agg + T.mul(T.reshape(hp, (ctx.n, c.heads, c.out_dim)), Tensor(iso[:, None, None].astype(float)))
        out = T.mul(T.sum_axis(agg, 1), 1.0 / c.heads)
        return T.leaky_relu(out, c.negative_slope) if activation else out


def attention_coefficients(layer: AttentionLayer, node: int, h: np.ndarray, ctx: AttentionContext):
    """Neighbors of ``node`` and their (neighbors, heads) attention coefficients."""
    alpha = layer.attention(layer.project(Tensor(h)), ctx).data
    sel = ctx.target == node
    return ctx.source[sel], alpha[sel]


def node_feature_matrix(graph: ConnectivityGraph, sp: np.ndarray, q: int = DEFAULT_Q) -> np.ndarray:
    """Per node: criticality/7, touches-critical, out and in compliance ratios, SP/q, out-degree.

    ``sp`` is the rounded distance from the positional stage; q means "q or more".
    """
    sp = np.asarray(sp, dtype=np.float64)
    if sp.shape != (graph.n_nodes,):
        raise GraphWspError("missing SP feature: need one predicted distance per node")
    n = graph.n_nodes
    src, dst, comp = graph.edge_src, graph.edge_dst, graph.edge_compliant.astype(np.float64)
    out_deg, in_deg = np.bincount(src, minlength=n), np.bincount(dst, minlength=n)
    out_c, in_c = np.bincount(src, comp, minlength=n), np.bincount(dst, comp, minlength=n)
    ratio_out = np.divide(out_c, out_deg, out=np.zeros(n), where=out_deg > 0)
    ratio_in = np.divide(in_c, in_deg, out=np.zeros(n), where=in_deg > 0)
    return np.stack(
        [
            graph.criticality / CRITICAL_LEVEL,
            cached_touches_critical(graph).astype(np.float64),
            ratio_out,
            ratio_in,
            np.minimum(sp, q) / q,
            np.log1p(out_deg) / np.log1p(max(n - 1, 1)),
        ],
        axis=1,
    )


@dataclass
class GraphWspConfig:
    layers: int = 2
    hidden: int = 16
    heads: int = 4
    negative_slope: float = 0.2
    dnn: tuple[int, ...] = (32, 32)
    neighborhood: str = "out"
    epochs: int = 100
    lr: float = 1e-2
    patience: int = 15
    subgraphs_per_epoch: int = 2
    radius: int = 3
    threshold: float = 0.5
    seed: int = 0
    q: int = DEFAULT_Q

    def validate(self) -> None:
        if self.layers < 1 or self.hidden < 1 or self.heads < 1:
            raise GraphWspError("layers, hidden and heads must be positive")
        if not 0 < self.threshold < 1:
            raise GraphWspError("threshold must lie in (0, 1)")
        if self.neighborhood not in NEIGHBORHOODS:
            raise GraphWspError(f"neighborhood must be one of {NEIGHBORHOODS}")


def decide(probs: np.ndarray, threshold: float = 0.5) -> np.ndarray:
    """Positive when P(class 1) reaches the threshold; an exact tie counts as positive."""
    return np.asarray(probs)[:, 1] >= threshold


class GraphWsp:
    def __init__(self, config: GraphWspConfig | None = None, params: Parameters | None = None):
        self.config = config or GraphWspConfig()
        self.config.validate()
        c = self.config
        self.params = params or Parameters(c.seed)
        self.attn = []
        width = N_NODE_FEATURES
        for i in range(c.layers):
            cfg = AttentionLayerConfig(width, c.hidden, c.heads, c.negative_slope)
            self.attn.append(AttentionLayer(self.params, f"gat.{i}", cfg))
            width = c.hidden
        self.head = MLP(self.params, "gat.dnn", (c.hidden + N_NODE_FEATURES, *c.dnn, 2))

    def logits(self, x: np.ndarray, ctx: AttentionContext) -> Tensor:
        xt = Tensor(x)
        h = xt
        for layer in self.attn:
            h = layer(h, ctx)
        return self.head(T.concat([h, xt], axis=1))

    def probabilities(self, x: np.ndarray, ctx: AttentionContext) -> np.ndarray:
        return T.softmax(self.logits(x, ctx)).data

    def predict(self, graph: ConnectivityGraph, sp: np.ndarray, threshold: float | None = None):
        probs = self.probabilities(
            node_feature_matrix(graph, sp, self.config.q), AttentionContext.build(graph, self.config.neighborhood)
        )
        return probs, decide(probs, self.config.threshold if threshold is None else threshold)


@dataclass
class GraphWspResult:
    model: GraphWsp
    losses: list[float] = field(default_factory=list)
    probs: np.ndarray | None = None
    predicted: np.ndarray | None = None

    def config_dict(self) -> dict:
        return asdict(self.model.config)


def _balanced_weights(y: np.ndarray, reference: np.ndarray | None = None) -> np.ndarray:
    """Per-row weights giving both classes equal total mass, using ``reference``'s balance."""
    pos = (y if reference is None else reference).mean()
    return np.where(y, 0.5 / pos, 0.5 / (1 - pos))


def train_graphwsp(
    graph: ConnectivityGraph,
    labels: np.ndarray,
    train_mask: np.ndarray,
    sp: np.ndarray,
    config: GraphWspConfig | None = None,
) -> GraphWspResult:
    """Fit attention and classifier jointly against node labels on the training mask.

    Each epoch accumulates the loss of one full-graph pass and a few passes over
    random radius-R balls around training nodes, in a fixed order, then takes one
    Adam step.  Training stops early once the full-graph loss stops improving.
    """
    config = config or GraphWspConfig()
    model = GraphWsp(config)
    labels = np.asarray(labels, dtype=bool)
    rows = np.flatnonzero(np.asarray(train_mask, dtype=bool))
    y = labels[rows]
    if y.all() or not y.any():
        raise GraphWspError(f"training mask holds a single class ({int(y.sum())} of {len(y)} positive)")
    x = node_feature_matrix(graph, sp, config.q)
    ctx = AttentionContext.build(graph, config.neighborhood)
    weights = _balanced_weights(y)
    in_train = np.zeros(graph.n_nodes, dtype=bool)
    in_train[rows] = True
    rng = np.random.default_rng(config.seed + 7919)
    opt = Adam(model.params, AdamConfig(lr=config.lr))
    losses: list[float] = []
    best, best_state, stale = math.inf, model.params.state(), 0
    for _ in range(config.epochs):
        model.params.zero_grad()
        probs = T.softmax(T.gather_rows(model.logits(x, ctx), rows))
        loss = cross_entropy_loss(probs, y.astype(np.int64), weights)
        loss.backward()
        losses.append(float(loss.data))
        for center in rng.choice(rows, size=min(config.subgraphs_per_epoch, len(rows)), replace=False):
            nodes = np.asarray(bfs_ball(graph, int(center), config.radius))
            local = np.flatnonzero(in_train[nodes])
            sub_y = labels[nodes[local]]
            sub_ctx = AttentionContext.build(graph, config.neighborhood, nodes)
            sub_probs = T.softmax(T.gather_rows(model.logits(x[nodes], sub_ctx), local))
            cross_entropy_loss(sub_probs, sub_y.astype(np.int64), _balanced_weights(sub_y, y)).backward()
        if losses[-1] < best - 1e-6:
            best, best_state, stale = losses[-1], model.params.state(), 0
        else:
            stale += 1
            if stale >= config.patience:
                break
        opt.step()
    model.params.load_state(best_state)
    probs = model.probabilities(x, ctx)
    return GraphWspResult(model, losses, probs, decide(probs, config.threshold))

