"""Command-line entry point: ``prozd <command> [options]``.

Exit codes: 0 success, 1 invalid input or configuration, 2 failure while running.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Sequence

import numpy as np

from prozd.evaluation import PRESETS, ExperimentConfig, ExperimentError, compute_metrics, run_experiment, split_masks
from prozd.graph_model import critical_assets
from prozd.ingest.dataset import Dataset, load_dataset, save_dataset
from prozd.ingest.files import ingest_text
from prozd.ingest.policy import format_policies
from prozd.ingest.synthetic import generate_synthetic
from prozd.mitigation import apply_plan, plan_mitigation
from prozd.nn.params import CheckpointError
from prozd.oracle import exploit_witness, fs1_labels, min_hop_distance, triage_labels, weighted_distances
from prozd.pipeline import (
    STAGES,
    PipelineConfig,
    StageError,
    ensure_labels,
    infer,
    load_bundle,
    save_bundle,
    train_pipeline,
)
from prozd.triage import classify_edges, dump_verdicts, load_verdicts

log = logging.getLogger("prozd")

EXIT_OK, EXIT_INVALID, EXIT_RUNTIME = 0, 1, 2


class UsageError(ValueError):
    pass


def _read_json(path: str | None) -> dict[str, Any]:
    if not path:
        return {}
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except json.JSONDecodeError as exc:
        raise UsageError(f"{path}: invalid JSON at line {exc.lineno}: {exc.msg}") from None
    if not isinstance(data, dict):
        raise UsageError(f"{path}: expected a JSON object")
    return data


def _out(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _write(path: Path, text: str) -> None:
    path.write_text(text, encoding="utf-8")
    log.info("wrote %s", path)


def cmd_generate(args) -> int:
    spec = dict(PRESETS[args.preset]) if args.preset else {}
    spec.update(_read_json(args.config))
    if args.seed is not None:
        spec["seed"] = args.seed
    if not spec:
        raise UsageError("give --preset or a --config with a synthetic spec")
    save_dataset(generate_synthetic(spec), _out(args) / "dataset.json")
    return EXIT_OK


def cmd_ingest(args) -> int:
    read = lambda p: Path(p).read_text(encoding="utf-8")  # noqa: E731
    ds = ingest_text(
        read(args.assets),
        read(args.connections),
        read(args.policies),
        read(args.governance),
        read(args.services) if args.services else None,
    )
    save_dataset(ds, _out(args) / "dataset.json")
    return EXIT_OK


def cmd_label(args) -> int:
    ds = load_dataset(args.dataset)
    fs1 = fs1_labels(ds.graph)
    ds.fs1_labels, ds.triage_labels = fs1, triage_labels(ds.graph, fs1)
    save_dataset(ds, _out(args) / "dataset.json")
    return EXIT_OK


def _masks(ds: Dataset, mode: str, ratio: float, seed: int):
    g = ds.graph
    if mode == "transfer":
        return np.ones(g.n_nodes, bool), np.ones(g.n_edges, bool)
    return split_masks(g.n_nodes, ratio, seed)[0], split_masks(g.n_edges, ratio, seed + 1_000_003)[0]


def cmd_train(args) -> int:
    cfg_doc = _read_json(args.config)
    seed = args.seed if args.seed is not None else int(cfg_doc.get("seed", 0))
    pipe = PipelineConfig.from_dict(cfg_doc.get("pipeline", cfg_doc), seed=seed)
    ds = load_dataset(args.dataset)
    ratio = float(cfg_doc.get("train_ratio", 0.4))
    node_mask, edge_mask = _masks(ds, args.mode, ratio, seed)
    stages = STAGES if args.stage == "all" else (args.stage,)
    out = _out(args)
    earlier = tuple(s for s in STAGES[: STAGES.index(stages[0])])
    bundle = load_bundle(args.checkpoint or out, earlier) if earlier else None
    bundle = train_pipeline(ds, node_mask, edge_mask, pipe, stages, bundle)
    save_bundle(bundle, out)
    _write(
        out / "training.json",
        json.dumps(
            {
                "seed": seed,
                "mode": args.mode,
                "train_ratio": ratio,
                "stages": list(stages),
                "losses": bundle.losses,
                "node_train": np.flatnonzero(node_mask).tolist(),
                "edge_train": np.flatnonzero(edge_mask).tolist(),
            },
            sort_keys=True,
        )
        + "\n",
    )
    return EXIT_OK


def cmd_assess(args) -> int:
    ds = load_dataset(args.dataset)
    bundle = load_bundle(args.checkpoint)
    threshold = 0.5 if args.threshold is None else args.threshold
    res = infer(bundle, ds)
    verdicts = classify_edges(ds.graph, bundle.triage, res.fs1, threshold)
    out = _out(args)
    _write(out / "verdicts.jsonl", dump_verdicts(verdicts))
    nodes = {
        str(v): {"sp": int(res.sp[v]), "fs1": bool(res.fs1[v]), "p_exploitable": float(res.fs1_probs[v, 1])}
        for v in range(ds.graph.n_nodes)
    }
    _write(out / "nodes.json", json.dumps(nodes, sort_keys=True) + "\n")
    if ds.triage_labels is not None and ds.graph.n_edges:
        fs1, tri = ensure_labels(ds)
        summary = {
            "triage": compute_metrics(res.triage_probs, tri, threshold).to_dict(),
            "graphwsp": compute_metrics(res.fs1_probs[:, 1], fs1).to_dict(),
        }
        _write(out / "metrics.json", json.dumps(summary, indent=1, sort_keys=True) + "\n")
    return EXIT_OK


def cmd_mitigate(args) -> int:
    ds = load_dataset(args.dataset)
    verdicts = load_verdicts(Path(args.verdicts).read_text(encoding="utf-8"))
    critical = np.zeros(ds.graph.n_edges, dtype=bool)
    seen = set()
    for v in verdicts:
        if not 0 <= v.edge_id < ds.graph.n_edges:
            raise UsageError(f"verdict for unknown edge {v.edge_id}")
        seen.add(v.edge_id)
        critical[v.edge_id] = v.critical
    if len(seen) != ds.graph.n_edges:
        raise UsageError(f"verdicts cover {len(seen)} of {ds.graph.n_edges} edges")
    plan = plan_mitigation(ds.graph, critical, ds.policies)
    updated, diff = apply_plan(ds.policies, plan)
    out = _out(args)
    _write(out / "plan.json", plan.dumps())
    _write(out / "diff.json", json.dumps(diff, indent=1, sort_keys=True) + "\n")
    _write(out / "policies.txt", format_policies(updated))
    return EXIT_OK


def cmd_eval(args) -> int:
    doc = _read_json(args.config)
    if args.seed is not None:
        doc["seed"] = args.seed
    if args.mode is not None:
        doc["mode"] = args.mode
    if args.threshold is not None:
        doc["threshold"] = args.threshold
    if args.runs is not None:
        doc["runs"] = args.runs
    cfg = ExperimentConfig.from_dict(doc)
    report = run_experiment(cfg)
    report.write(_out(args))
    return EXIT_OK


def cmd_oracle(args) -> int:
    ds = load_dataset(args.dataset)
    g = ds.graph
    nodes = args.node if args.node else list(range(g.n_nodes))
    for v in nodes:
        if not 0 <= v < g.n_nodes:
            raise UsageError(f"node {v} is not in the graph")
    anchors = critical_assets(g)
    hops = min_hop_distance(g, anchors)
    weighted = weighted_distances(g, anchors).min(axis=1) if anchors else np.full(g.n_nodes, np.inf)
    out = {}
    for v in nodes:
        w = exploit_witness(g, v)
        out[str(v)] = {
            "hop_distance": None if np.isinf(hops[v]) else int(hops[v]),
            "weighted_distance": None if np.isinf(weighted[v]) else float(weighted[v]),
            "fs1": w is not None,
            "witness": list(w.path) if w else None,
        }
    text = json.dumps(out, indent=1, sort_keys=True) + "\n"
    if args.out:
        _write(_out(args) / "oracle.json", text)
    else:
        sys.stdout.write(text)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="prozd", description="Connection risk triage for micro-segmented networks.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_required=True):
        sp.add_argument("--config", help="JSON configuration file")
        sp.add_argument("--seed", type=int)
        sp.add_argument("--out", required=out_required, help="output directory")
        return sp

    g = common(sub.add_parser("generate", help="write a synthetic dataset"))
    g.add_argument("--preset", choices=sorted(PRESETS))
    g.set_defaults(func=cmd_generate)

    i = common(sub.add_parser("ingest", help="build a dataset from CSV and policy files"))
    i.add_argument("--assets", required=True)
    i.add_argument("--connections", required=True)
    i.add_argument("--policies", required=True)
    i.add_argument("--governance", required=True)
    i.add_argument("--services")
    i.set_defaults(func=cmd_ingest)

    lab = common(sub.add_parser("label", help="attach oracle FS1 and triage labels"))
    lab.add_argument("--dataset", required=True)
    lab.set_defaults(func=cmd_label)

    t = common(sub.add_parser("train", help="train one stage or the whole pipeline"))
    t.add_argument("--dataset", required=True)
    t.add_argument("--stage", choices=(*STAGES, "all"), default="all")
    t.add_argument("--mode", choices=("transductive", "transfer"), default="transductive")
    t.add_argument("--checkpoint", help="directory holding already-trained earlier stages")
    t.set_defaults(func=cmd_train)

    a = common(sub.add_parser("assess", help="triage verdicts for a dataset"))
    a.add_argument("--dataset", required=True)
    a.add_argument("--checkpoint", required=True)
    a.add_argument("--threshold", type=float)
    a.set_defaults(func=cmd_assess)

    m = common(sub.add_parser("mitigate", help="policy edit plan from verdicts"))
    m.add_argument("--dataset", required=True)
    m.add_argument("--verdicts", required=True)
    m.set_defaults(func=cmd_mitigate)

    e = common(sub.add_parser("eval", help="run an experiment and write reports"))
    e.add_argument("--mode", choices=("transductive", "transfer"))
    e.add_argument("--threshold", type=float)
    e.add_argument("--runs", type=int)
    e.set_defaults(func=cmd_eval)

    o = common(sub.add_parser("oracle", help="exact distances and FS1 for inspection"), out_required=False)
    o.add_argument("--dataset", required=True)
    o.add_argument("--node", type=int, action="append")
    o.set_defaults(func=cmd_oracle)
    return p


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return args.func(args)
    except (StageError, ExperimentError, FloatingPointError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    except (ValueError, KeyError, OSError, CheckpointError) as exc:
        print(f"invalid input: {exc}", file=sys.stderr)
        return EXIT_INVALID
    except Exception as exc:  # noqa: BLE001 - last-resort mapping to the runtime exit code
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
