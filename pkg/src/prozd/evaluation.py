"""Masks, metrics and the experiment runner that writes CSV and JSON reports."""

from __future__ import annotations

import csv
import dataclasses
import hashlib
import io
import json
import math
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from prozd.ingest.dataset import Dataset, load_dataset
from prozd.ingest.synthetic import STD1, STD2, generate_synthetic
from prozd.oracle import min_hop_distance
from prozd.pipeline import Bundle, PipelineConfig, StageError, ensure_labels, infer, train_pipeline
from prozd.spgnn import clamp_targets, within_one

PRESETS = {"STD1": STD1, "STD2": STD2}
MODES = ("transductive", "transfer")
DEFAULT_THRESHOLDS = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)


class ExperimentError(RuntimeError):
    def __init__(self, stage: str, config_hash: str, message: str):
        super().__init__(f"stage {stage} failed (config {config_hash}): {message}")
        self.stage = stage
        self.config_hash = config_hash


@dataclass(frozen=True)
class Metrics:
    accuracy: float
    f1: float
    roc_auc: float
    tp: int
    fp: int
    fn: int
    tn: int

    @property
    def confusion(self) -> dict[str, int]:
        return {"tp": self.tp, "fp": self.fp, "fn": self.fn, "tn": self.tn}

    def to_dict(self) -> dict[str, Any]:
        return dataclasses.asdict(self)


def split_masks(n: int, train_ratio: float, seed: int) -> tuple[np.ndarray, np.ndarray]:
    """Disjoint covering masks with round(ratio * n) training entries (halves round up).

    The training size is kept within 1..n-1 so both sides are non-empty.
    """
    if n < 2:
        raise ValueError("need at least two items to split")
    if not 0 < train_ratio < 1:
        raise ValueError("train_ratio must lie in (0, 1)")
    k = min(max(int(math.floor(train_ratio * n + 0.5)), 1), n - 1)
    train = np.zeros(n, dtype=bool)
    train[np.random.default_rng(seed).permutation(n)[:k]] = True
    return train, ~train


def confusion(predicted: Sequence[bool], labels: Sequence[bool]) -> tuple[int, int, int, int]:
    p = np.asarray(predicted, dtype=bool)
    y = np.asarray(labels, dtype=bool)
    return int((p & y).sum()), int((p & ~y).sum()), int((~p & y).sum()), int((~p & ~y).sum())


def roc_points(scores: Sequence[float], labels: Sequence[bool]) -> list[tuple[float, float, float]]:
    """(threshold, fpr, tpr) sweeping the threshold down through every distinct score.

    The first point is (inf, 0, 0); tied scores enter together.
    """
    s = np.asarray(scores, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    pos, neg = int(y.sum()), int((~y).sum())
    order = np.argsort(-s, kind="mergesort")
    s, y = s[order], y[order]
    tps = np.cumsum(y)
    fps = np.cumsum(~y)
    last = np.r_[np.flatnonzero(np.diff(s) != 0), len(s) - 1] if len(s) else np.zeros(0, dtype=int)
    pts = [(math.inf, 0.0, 0.0)]
    for i in last:
        pts.append((float(s[i]), fps[i] / neg if neg else 0.0, tps[i] / pos if pos else 0.0))
    return pts


def roc_auc(scores: Sequence[float], labels: Sequence[bool]) -> float:
    """Trapezoidal area under the ROC points; 0 when a class is missing."""
    y = np.asarray(labels, dtype=bool)
    if y.all() or not y.any():
        return 0.0
    pts = roc_points(scores, labels)
    area = 0.0
    for (_, x0, y0), (_, x1, y1) in zip(pts, pts[1:]):
        area += (x1 - x0) * (y0 + y1) / 2
    return float(area)


def compute_metrics(probabilities: Sequence[float], labels: Sequence[bool], threshold: float = 0.5) -> Metrics:
    """Confusion counts at ``threshold`` plus accuracy, F1 and ROC-AUC.

    Undefined ratios (no predicted or no actual positives) are reported as 0.
    """
    p = np.asarray(probabilities, dtype=np.float64)
    y = np.asarray(labels, dtype=bool)
    if p.shape != y.shape:
        raise ValueError(f"length mismatch: {p.shape} predictions vs {y.shape} labels")
    if p.size == 0:
        raise ValueError("no predictions")
    tp, fp, fn, tn = confusion(p >= threshold, y)
    precision = tp / (tp + fp) if tp + fp else 0.0
    recall = tp / (tp + fn) if tp + fn else 0.0
    f1 = 2 * precision * recall / (precision + recall) if precision + recall else 0.0
    return Metrics((tp + tn) / len(y), f1, roc_auc(p, y), tp, fp, fn, tn)


@dataclass
class ExperimentConfig:
    train: Any = "STD1"  # dataset path, preset name, or synthetic spec dict
    test: Any = None  # transfer target; defaults to "STD2" in transfer mode
    mode: str = "transductive"
    train_ratio: float = 0.4
    seed: int = 0
    runs: int = 10
    threshold: float = 0.5
    thresholds: tuple[float, ...] = DEFAULT_THRESHOLDS
    ratio_sweep: tuple[float, ...] = ()
    pipeline: dict[str, Any] = field(default_factory=dict)

    def validate(self) -> None:
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not 0 < self.train_ratio < 1:
            raise ValueError("train_ratio must lie in (0, 1)")
        if self.runs < 1:
            raise ValueError("runs must be >= 1")
        if not 0 < self.threshold < 1:
            raise ValueError("threshold must lie in (0, 1)")
        PipelineConfig.from_dict(self.pipeline)

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> ExperimentConfig:
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown experiment config keys: {unknown}")
        data = {k: (tuple(v) if k in ("thresholds", "ratio_sweep") else v) for k, v in data.items()}
        cfg = cls(**data)
        cfg.validate()
        return cfg

    def to_dict(self) -> dict[str, Any]:
        d = dataclasses.asdict(self)
        d["thresholds"] = list(self.thresholds)
        d["ratio_sweep"] = list(self.ratio_sweep)
        return d

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()[:12]


def resolve_dataset(ref: Any) -> Dataset:
    if isinstance(ref, Dataset):
        return ref
    if isinstance(ref, dict):
        return generate_synthetic(ref)
    if isinstance(ref, str) and ref in PRESETS:
        return generate_synthetic(PRESETS[ref])
    return load_dataset(ref)


@dataclass
class RunResult:
    run: int
    seed: int
    metrics: dict[str, dict[str, Any]]
    losses: dict[str, list[float]]
    roc: dict[str, list[tuple[float, float, float]]]
    sweep: list[dict[str, Any]]
    ratio_f1: list[tuple[float, float]]


def _stage_metrics(
    bundle: Bundle,
    test_ds: Dataset,
    node_eval: np.ndarray,
    edge_eval: np.ndarray,
    cfg: ExperimentConfig,
    pipe: PipelineConfig,
) -> tuple[dict, dict, list]:
    fs1, tri = ensure_labels(test_ds)
    out = infer(bundle, test_ds, pipe.fs1_source)
    d = min_hop_distance(test_ds.graph)
    near = within_one(out.sp, d, pipe.spgnn.q)[node_eval]
    exact = (out.sp == clamp_targets(d, pipe.spgnn.q))[node_eval]
    metrics = {
        "spgnn": {"accuracy": float(exact.mean()), "within_one": float(near.mean()), "n": int(node_eval.sum())},
        "graphwsp": {
            **compute_metrics(out.fs1_probs[node_eval, 1], fs1[node_eval], pipe.graphwsp.threshold).to_dict(),
            "n": int(node_eval.sum()),
        },
        "triage": {
            **compute_metrics(out.triage_probs[edge_eval], tri[edge_eval], cfg.threshold).to_dict(),
            "n": int(edge_eval.sum()),
        },
    }
    roc = {
        "graphwsp": roc_points(out.fs1_probs[node_eval, 1], fs1[node_eval]),
        "triage": roc_points(out.triage_probs[edge_eval], tri[edge_eval]),
    }
    sweep = []
    for t in cfg.thresholds:
        m = compute_metrics(out.triage_probs[edge_eval], tri[edge_eval], t)
        sweep.append({"threshold": t, "accuracy": m.accuracy, "f1": m.f1})
    return metrics, roc, sweep


def run_single(cfg: ExperimentConfig, run: int) -> RunResult:
    seed = cfg.seed + run
    pipe = PipelineConfig.from_dict(cfg.pipeline, seed=seed)
    digest = cfg.digest()
    train_ds = resolve_dataset(cfg.train)
    g = train_ds.graph
    if cfg.mode == "transductive":
        test_ds = train_ds
        node_train, node_eval = split_masks(g.n_nodes, cfg.train_ratio, seed)
        edge_train, edge_eval = split_masks(g.n_edges, cfg.train_ratio, seed + 1_000_003)
    else:
        test_ds = resolve_dataset(cfg.test if cfg.test is not None else "STD2")
        node_train, edge_train = np.ones(g.n_nodes, bool), np.ones(g.n_edges, bool)
        node_eval = np.ones(test_ds.graph.n_nodes, bool)
        edge_eval = np.ones(test_ds.graph.n_edges, bool)
    try:
        bundle = train_pipeline(train_ds, node_train, edge_train, pipe)
    except StageError as exc:
        raise ExperimentError(exc.stage, digest, str(exc)) from exc
    metrics, roc, sweep = _stage_metrics(bundle, test_ds, node_eval, edge_eval, cfg, pipe)
    ratio_f1 = []
    if cfg.mode == "transductive" and run == 0:
        fs1 = ensure_labels(train_ds)[0]
        for ratio in cfg.ratio_sweep:
            tr, ev = split_masks(g.n_nodes, ratio, seed)
            try:
                b = train_pipeline(train_ds, tr, edge_train, pipe, stages=("spgnn", "graphwsp"))
            except StageError as exc:
                raise ExperimentError(exc.stage, digest, str(exc)) from exc
            sp = b.spgnn.predict(g)
            probs, _ = b.graphwsp.predict(g, sp)
            ratio_f1.append((ratio, compute_metrics(probs[ev, 1], fs1[ev], pipe.graphwsp.threshold).f1))
    return RunResult(run, seed, metrics, bundle.losses, roc, sweep, ratio_f1)


def worker_count() -> int:
    try:
        return max(1, int(os.environ.get("PROZD_THREADS", "1")))
    except ValueError:
        return 1


def run_experiment(cfg: ExperimentConfig) -> Report:
    """All runs of an experiment; runs go to worker processes when PROZD_THREADS > 1.

    Results are gathered in run order, so the report does not depend on scheduling.
    """
    cfg.validate()
    workers = min(worker_count(), cfg.runs)
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            results = list(pool.map(run_single, [cfg] * cfg.runs, range(cfg.runs)))
    else:
        results = [run_single(cfg, r) for r in range(cfg.runs)]
    return Report(cfg, results)


def _fmt(x: Any) -> str:
    if isinstance(x, float):
        return "inf" if math.isinf(x) else repr(x)
    return str(x)


def _csv(header: Sequence[str], rows: Sequence[Sequence[Any]]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    for r in rows:
        w.writerow([_fmt(v) for v in r])
    return buf.getvalue()


@dataclass
class Report:
    config: ExperimentConfig
    runs: list[RunResult]

    def summary(self) -> dict[str, dict[str, float]]:
        out: dict[str, dict[str, float]] = {}
        for stage in ("spgnn", "graphwsp", "triage"):
            keys = [k for k, v in self.runs[0].metrics[stage].items() if isinstance(v, float)]
            out[stage] = {k: float(np.mean([r.metrics[stage][k] for r in self.runs])) for k in keys}
        return out

    def tables(self) -> dict[str, str]:
        metric_rows = []
        for r in self.runs:
            for stage, m in r.metrics.items():
                metric_rows.append(
                    [r.run, r.seed, stage, m.get("n"), m.get("accuracy"), m.get("within_one", ""), m.get("f1", ""),
                     m.get("roc_auc", ""), m.get("tp", ""), m.get("fp", ""), m.get("fn", ""), m.get("tn", "")]
                )
        summary_rows = [[stage, *[m.get(k, "") for k in ("accuracy", "within_one", "f1", "roc_auc")]]
                        for stage, m in self.summary().items()]
        loss_rows = [[r.run, stage, i + 1, v] for r in self.runs for stage, ls in r.losses.items() for i, v in enumerate(ls)]
        roc_rows = [[r.run, stage, t, x, y] for r in self.runs for stage, pts in r.roc.items() for t, x, y in pts]
        sweep_rows = [[r.run, s["threshold"], s["accuracy"], s["f1"]] for r in self.runs for s in r.sweep]
        confusion_rows = [[r.run, stage, r.metrics[stage]["tp"], r.metrics[stage]["fp"], r.metrics[stage]["fn"],
                           r.metrics[stage]["tn"]] for r in self.runs for stage in ("graphwsp", "triage")]
        ratio_rows = [[ratio, f1] for r in self.runs for ratio, f1 in r.ratio_f1]
        return {
            "metrics.csv": _csv(["run", "seed", "stage", "n", "accuracy", "within_one", "f1", "roc_auc", "tp", "fp",
                                 "fn", "tn"], metric_rows),
            "summary.csv": _csv(["stage", "accuracy", "within_one", "f1", "roc_auc"], summary_rows),
            "confusion.csv": _csv(["run", "stage", "tp", "fp", "fn", "tn"], confusion_rows),
            "losses.csv": _csv(["run", "stage", "epoch", "loss"], loss_rows),
            "roc.csv": _csv(["run", "stage", "threshold", "fpr", "tpr"], roc_rows),
            "thresholds.csv": _csv(["run", "threshold", "accuracy", "f1"], sweep_rows),
            "ratio_sweep.csv": _csv(["train_ratio", "f1"], ratio_rows),
        }

    def to_dict(self) -> dict[str, Any]:
        return {
            "config": self.config.to_dict(),
            "config_hash": self.config.digest(),
            "summary": self.summary(),
            "runs": [{"run": r.run, "seed": r.seed, "metrics": r.metrics} for r in self.runs],
        }

    def write(self, directory: str | Path) -> list[Path]:
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        written = []
        for name, text in self.tables().items():
            (directory / name).write_text(text, encoding="utf-8")
            written.append(directory / name)
        path = directory / "report.json"
        path.write_text(json.dumps(self.to_dict(), indent=1, sort_keys=True, allow_nan=False) + "\n", encoding="utf-8")
        written.append(path)
        return written
