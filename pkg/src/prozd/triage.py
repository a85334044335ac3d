"""Edge risk triage: a small dense network labelling each connection critical or safe."""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field
from typing import Iterable, Sequence

import numpy as np

from prozd.features import attach_fs1, edge_feature_matrix
from prozd.graph_model import CRITICAL_LEVEL, ConnectivityGraph
from prozd.nn import tensor as T
from prozd.nn.layers import MLP
from prozd.nn.losses import cross_entropy, cross_entropy_loss
from prozd.nn.params import Adam, AdamConfig, Parameters
from prozd.nn.tensor import Tensor

MAX_PORTS = 65536
TRIAGE_FEATURES = (
    "src_ip_range",
    "dst_ip_range",
    "open_ports",
    "src_criticality",
    "dst_criticality",
    "fs1",
    "touches_critical",
    "compliant",
)
CLASSES = ("safe", "critical")


class TriageError(ValueError):
    pass


@dataclass(frozen=True)
class TriageInput:
    src_ip_range: float
    dst_ip_range: float
    open_ports: float
    src_criticality: float
    dst_criticality: float
    fs1: float
    touches_critical: float
    compliant: float

    def as_array(self) -> np.ndarray:
        return np.array([getattr(self, k) for k in TRIAGE_FEATURES])


@dataclass(frozen=True)
class TriageVerdict:
    edge_id: int
    verdict: str
    probability: float  # P(critical)
    features: dict[str, float]

    @property
    def critical(self) -> bool:
        return self.verdict == "critical"

    def to_json(self) -> str:
        return json.dumps(
            {"edge_id": self.edge_id, "verdict": self.verdict, "probability": self.probability, "features": self.features}
        )


def triage_matrix(graph: ConnectivityGraph, fs1_nodes: Sequence[bool] | np.ndarray | None) -> np.ndarray:
    """Normalized (n_edges, 8) triage inputs in TRIAGE_FEATURES order.

    Criticalities are divided by 7 and port counts log-scaled so one port maps to 0
    and the full range to 1.  FS1 is the destination node's label.
    """
    if fs1_nodes is None:
        raise TriageError("missing FS1: pass model or oracle node labels")
    if graph.n_edges == 0:
        return np.zeros((0, len(TRIAGE_FEATURES)))
    fd = edge_feature_matrix(graph)
    fs1 = attach_fs1(graph, np.asarray(fs1_nodes, dtype=bool)).astype(np.float64)
    return np.stack(
        [
            fd[:, 0],
            fd[:, 1],
            np.log(fd[:, 2]) / np.log(MAX_PORTS),
            fd[:, 3] / CRITICAL_LEVEL,
            fd[:, 4] / CRITICAL_LEVEL,
            fs1,
            fd[:, 6],
            fd[:, 7],
        ],
        axis=1,
    )


def triage_vector(graph: ConnectivityGraph, edge_id: int, fs1_nodes) -> TriageInput:
    row = triage_matrix(graph, fs1_nodes)[edge_id]
    return TriageInput(*(float(v) for v in row))


@dataclass
class TriageConfig:
    hidden: tuple[int, ...] = (32, 16)
    epochs: int = 40
    batch_size: int = 64
    lr: float = 1e-2
    lr_decay: float = 0.8  # per-epoch multiplier; damps mini-batch noise late in training
    threshold: float = 0.5
    seed: int = 0

    def validate(self) -> None:
        if self.epochs < 1 or self.batch_size < 1:
            raise TriageError("epochs and batch_size must be positive")
        if not 0 < self.threshold < 1:
            raise TriageError("threshold must lie in (0, 1)")


class TriageModel:
    def __init__(self, config: TriageConfig | None = None, params: Parameters | None = None):
        self.config = config or TriageConfig()
        self.config.validate()
        self.params = params or Parameters(self.config.seed)
        self.net = MLP(self.params, "triage", (len(TRIAGE_FEATURES), *self.config.hidden, 2))

    def probabilities(self, x: np.ndarray) -> np.ndarray:
        """P(critical) per row."""
        if len(x) == 0:
            return np.zeros(0)
        return T.softmax(self.net(Tensor(x))).data[:, 1]


@dataclass
class TriageResult:
    model: TriageModel
    losses: list[float] = field(default_factory=list)

    def config_dict(self) -> dict:
        return asdict(self.model.config)


def train_triage(x: np.ndarray, labels: np.ndarray, train_mask: np.ndarray, config: TriageConfig | None = None):
    """Mini-batch Adam on the masked rows; ``losses`` holds the full training loss after each epoch."""
    config = config or TriageConfig()
    model = TriageModel(config)
    rows = np.flatnonzero(np.asarray(train_mask, dtype=bool))
    y = np.asarray(labels, dtype=bool)[rows].astype(np.int64)
    if len(np.unique(y)) < 2:
        raise TriageError(f"training labels hold a single class ({int(y.sum())} of {len(y)} critical)")
    xt = x[rows]
    rng = np.random.default_rng(config.seed + 104729)
    opt = Adam(model.params, AdamConfig(lr=config.lr))
    losses = []
    for epoch in range(config.epochs):
        opt.config.lr = config.lr * config.lr_decay**epoch
        order = rng.permutation(len(rows))
        for s in range(0, len(order), config.batch_size):
            b = order[s : s + config.batch_size]
            model.params.zero_grad()
            cross_entropy_loss(T.softmax(model.net(Tensor(xt[b]))), y[b]).backward()
            opt.step()
        p = model.probabilities(xt)
        losses.append(cross_entropy(np.stack([1 - p, p], axis=1), y)[0])
    return TriageResult(model, losses)


def classify_edges(
    graph: ConnectivityGraph, model: TriageModel, fs1_nodes, threshold: float | None = None
) -> list[TriageVerdict]:
    threshold = model.config.threshold if threshold is None else threshold
    if graph.n_edges == 0:
        return []
    x = triage_matrix(graph, fs1_nodes)
    p = model.probabilities(x)
    return [
        TriageVerdict(
            i,
            CLASSES[int(p[i] >= threshold)],
            float(p[i]),
            {k: float(v) for k, v in zip(TRIAGE_FEATURES, x[i])},
        )
        for i in range(graph.n_edges)
    ]


def dump_verdicts(verdicts: Iterable[TriageVerdict]) -> str:
    return "".join(v.to_json() + "\n" for v in verdicts)


def load_verdicts(text: str) -> list[TriageVerdict]:
    out = []
    for lineno, line in enumerate(text.splitlines(), 1):
        if not line.strip():
            continue
        try:
            d = json.loads(line)
            out.append(TriageVerdict(int(d["edge_id"]), d["verdict"], float(d["probability"]), d.get("features", {})))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise TriageError(f"verdict line {lineno}: {exc}") from None
        if out[-1].verdict not in CLASSES or not 0 <= out[-1].probability <= 1 or math.isnan(out[-1].probability):
            raise TriageError(f"verdict line {lineno}: bad verdict or probability")
    return out
