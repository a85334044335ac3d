"""The three trained stages chained together, with saving and loading of the bundle."""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np

from prozd.gat_wsp import GraphWsp, GraphWspConfig, train_graphwsp
from prozd.ingest.dataset import Dataset
from prozd.nn.params import CheckpointError, Parameters, load_checkpoint, save_checkpoint
from prozd.oracle import fs1_labels, min_hop_distance, triage_labels
from prozd.spgnn import Spgnn, SpgnnConfig, train_spgnn
from prozd.triage import TriageConfig, TriageModel, train_triage, triage_matrix

STAGES = ("spgnn", "graphwsp", "triage")
FS1_SOURCES = ("model", "oracle")


class StageError(RuntimeError):
    def __init__(self, stage: str, message: str):
        super().__init__(f"stage {stage}: {message}")
        self.stage = stage


def config_from_dict(cls, data: dict[str, Any] | None):
    """Build a config dataclass, ignoring unknown keys and restoring tuple fields."""
    data = dict(data or {})
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name in data:
            v = data[f.name]
            kwargs[f.name] = tuple(v) if isinstance(v, list) else v
    return cls(**kwargs)


@dataclass
class PipelineConfig:
    spgnn: SpgnnConfig = field(default_factory=SpgnnConfig)
    graphwsp: GraphWspConfig = field(default_factory=GraphWspConfig)
    triage: TriageConfig = field(default_factory=TriageConfig)
    fs1_source: str = "model"

    @classmethod
    def from_dict(cls, data: dict[str, Any] | None, seed: int | None = None) -> PipelineConfig:
        data = data or {}
        cfg = cls(
            config_from_dict(SpgnnConfig, data.get("spgnn")),
            config_from_dict(GraphWspConfig, data.get("graphwsp")),
            config_from_dict(TriageConfig, data.get("triage")),
            data.get("fs1_source", "model"),
        )
        if cfg.fs1_source not in FS1_SOURCES:
            raise ValueError(f"fs1_source must be one of {FS1_SOURCES}")
        if seed is not None:
            cfg = cfg.with_seed(seed)
        return cfg

    def with_seed(self, seed: int) -> PipelineConfig:
        return PipelineConfig(
            dataclasses.replace(self.spgnn, seed=seed),
            dataclasses.replace(self.graphwsp, seed=seed),
            dataclasses.replace(self.triage, seed=seed),
            self.fs1_source,
        )

    def to_dict(self) -> dict[str, Any]:
        return {
            "spgnn": dataclasses.asdict(self.spgnn),
            "graphwsp": dataclasses.asdict(self.graphwsp),
            "triage": dataclasses.asdict(self.triage),
            "fs1_source": self.fs1_source,
        }


@dataclass
class Bundle:
    spgnn: Spgnn | None = None
    graphwsp: GraphWsp | None = None
    triage: TriageModel | None = None
    losses: dict[str, list[float]] = field(default_factory=dict)


@dataclass
class Inference:
    sp: np.ndarray  # rounded distance per node
    fs1_probs: np.ndarray  # (n, 2)
    fs1: np.ndarray  # bool per node
    triage_probs: np.ndarray  # P(critical) per edge


def ensure_labels(dataset: Dataset) -> tuple[np.ndarray, np.ndarray]:
    """The dataset's FS1 and triage labels, computed by the oracle when absent."""
    fs1 = dataset.fs1_labels if dataset.fs1_labels is not None else fs1_labels(dataset.graph)
    tri = dataset.triage_labels if dataset.triage_labels is not None else triage_labels(dataset.graph, fs1)
    return fs1, tri


def train_pipeline(
    dataset: Dataset,
    node_mask: np.ndarray,
    edge_mask: np.ndarray,
    config: PipelineConfig | None = None,
    stages: tuple[str, ...] = STAGES,
    bundle: Bundle | None = None,
) -> Bundle:
    """Train the requested stages in order; earlier stages may come from ``bundle``."""
    config = config or PipelineConfig()
    bundle = bundle or Bundle()
    g = dataset.graph
    fs1, tri = ensure_labels(dataset)
    try:
        stage = "spgnn"
        if stage in stages:
            res = train_spgnn(g, node_mask, config.spgnn, min_hop_distance(g))
            bundle.spgnn, bundle.losses[stage] = res.model, res.losses
        stage = "graphwsp"
        if stage in stages:
            sp = _require(bundle.spgnn, "spgnn").predict(g)
            res = train_graphwsp(g, fs1, node_mask, sp, config.graphwsp)
            bundle.graphwsp, bundle.losses[stage] = res.model, res.losses
        stage = "triage"
        if stage in stages:
            if config.fs1_source == "oracle":
                node_fs1 = fs1
            else:
                sp = _require(bundle.spgnn, "spgnn").predict(g)
                node_fs1 = _require(bundle.graphwsp, "graphwsp").predict(g, sp)[1]
            res = train_triage(triage_matrix(g, node_fs1), tri, edge_mask, config.triage)
            bundle.triage, bundle.losses[stage] = res.model, res.losses
    except (ValueError, FloatingPointError) as exc:
        raise StageError(stage, str(exc)) from exc
    return bundle


def _require(model, name: str):
    if model is None:
        raise ValueError(f"the {name} stage has not been trained or loaded")
    return model


def infer(
    bundle: Bundle, dataset: Dataset, fs1_source: str = "model", fs1_threshold: float | None = None
) -> Inference:
    g = dataset.graph
    sp = _require(bundle.spgnn, "spgnn").predict(g)
    probs, fs1 = _require(bundle.graphwsp, "graphwsp").predict(g, sp, fs1_threshold)
    node_fs1 = ensure_labels(dataset)[0] if fs1_source == "oracle" else fs1
    tri = _require(bundle.triage, "triage").probabilities(triage_matrix(g, node_fs1))
    return Inference(sp, probs, fs1, tri)


_MODEL_TYPES = {
    "spgnn": (Spgnn, SpgnnConfig),
    "graphwsp": (GraphWsp, GraphWspConfig),
    "triage": (TriageModel, TriageConfig),
}


def save_bundle(bundle: Bundle, directory: str | Path) -> list[Path]:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    written = []
    for stage in STAGES:
        model = getattr(bundle, stage)
        if model is None:
            continue
        path = directory / f"{stage}.json"
        save_checkpoint(path, model.params, dataclasses.asdict(model.config))
        written.append(path)
    return written


def load_bundle(directory: str | Path, stages: tuple[str, ...] = STAGES) -> Bundle:
    directory = Path(directory)
    bundle = Bundle()
    for stage in stages:
        path = directory / f"{stage}.json"
        if not path.exists():
            raise CheckpointError(f"missing checkpoint {path}")
        arrays, seed, cfg = load_checkpoint(path)
        model_cls, cfg_cls = _MODEL_TYPES[stage]
        model = model_cls(config_from_dict(cfg_cls, cfg), Parameters(seed))
        model.params.load_state(arrays)
        setattr(bundle, stage, model)
    return bundle


__all__ = [
    "Bundle",
    "Inference",
    "PipelineConfig",
    "STAGES",
    "StageError",
    "ensure_labels",
    "infer",
    "load_bundle",
    "save_bundle",
    "train_pipeline",
]
