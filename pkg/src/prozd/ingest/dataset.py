"""Dataset container and its JSON file format."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import jsonschema
import numpy as np

from prozd.graph_model import (
    Asset,
    ConnectivityGraph,
    Connection,
    EdgeWeights,
    Service,
    build_graph,
)
from prozd.ingest.policy import GovernanceRule, ZtPolicy

FORMAT_NAME = "prozd-dataset"
FORMAT_VERSION = 1

FS1_CLASSES = ("not_exploitable", "exploitable")
TRIAGE_CLASSES = ("safe", "critical")


class DatasetError(ValueError):
    """Schema or consistency violation; ``location`` is a JSON pointer."""

    def __init__(self, location: str, message: str):
        super().__init__(f"{location or '/'}: {message}")
        self.location = location or "/"


@dataclass
class Dataset:
    graph: ConnectivityGraph
    policies: list[ZtPolicy] = field(default_factory=list)
    gov_rules: list[GovernanceRule] = field(default_factory=list)
    fs1_labels: np.ndarray | None = None  # bool per node, True = exploitable
    triage_labels: np.ndarray | None = None  # bool per edge, True = critical
    provenance: str = "file"
    meta: dict[str, Any] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.fs1_labels is not None:
            self.fs1_labels = np.asarray(self.fs1_labels, dtype=bool)
            if self.fs1_labels.shape != (self.graph.n_nodes,):
                raise DatasetError("/labels/fs1", "labels must cover every node")
        if self.triage_labels is not None:
            self.triage_labels = np.asarray(self.triage_labels, dtype=bool)
            if self.triage_labels.shape != (self.graph.n_edges,):
                raise DatasetError("/labels/triage", "labels must cover every edge")
        if self.provenance not in ("synthetic", "file"):
            raise DatasetError("/meta/provenance", f"unknown provenance {self.provenance!r}")

    @property
    def segment_tags(self) -> dict[str, str]:
        """CIDR -> governance tag, from the assets' micro-segments."""
        return {a.segment_range: a.tag for a in self.graph.assets}

    def to_dict(self) -> dict[str, Any]:
        g = self.graph
        labels: dict[str, Any] = {"fs1": None, "triage": None}
        if self.fs1_labels is not None:
            labels["fs1"] = {str(i): FS1_CLASSES[int(b)] for i, b in enumerate(self.fs1_labels)}
        if self.triage_labels is not None:
            labels["triage"] = {str(i): TRIAGE_CLASSES[int(b)] for i, b in enumerate(self.triage_labels)}
        meta = dict(self.meta)
        meta["provenance"] = self.provenance
        meta["weights"] = {"compliant": g.weights.compliant, "non_compliant": g.weights.non_compliant}
        return {
            "format": FORMAT_NAME,
            "version": FORMAT_VERSION,
            "meta": meta,
            "assets": [
                {
                    "id": a.id,
                    "ip": a.ip,
                    "segment_range": a.segment_range,
                    "tag": a.tag,
                    "criticality": a.criticality,
                    "app_criticality": a.app_criticality.label,
                }
                for a in g.assets
            ],
            "edges": [
                {
                    "id": i,
                    "src": e.src,
                    "dst": e.dst,
                    "compliant": e.compliant,
                    "services": [s.to_list() for s in g.services[i]],
                }
                for i, e in enumerate(g.edges)
            ],
            "policies": [p.to_list() for p in self.policies],
            "governance": [[r.src_tag, r.dst_tag, r.service_tag] for r in self.gov_rules],
            "labels": labels,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True, ensure_ascii=False) + "\n"

    @classmethod
    def from_dict(cls, doc: Any) -> Dataset:
        _validate(doc)
        meta = dict(doc["meta"])
        provenance = meta.pop("provenance", "file")
        w = meta.pop("weights", None) or {}
        weights = EdgeWeights(
            non_compliant=float(w.get("non_compliant", 1.0)), compliant=float(w.get("compliant", 2.0))
        )
        try:
            assets = [
                Asset(a["id"], a["ip"], a["segment_range"], a["tag"], a["criticality"], a["app_criticality"])
                for a in doc["assets"]
            ]
        except (ValueError, KeyError) as exc:
            raise DatasetError("/assets", str(exc)) from None
        conns = []
        for i, e in enumerate(doc["edges"]):
            if e["id"] != i:
                raise DatasetError(f"/edges/{i}/id", f"expected dense edge id {i}, got {e['id']}")
            try:
                svcs = [Service.from_list(s) for s in e["services"]]
            except ValueError as exc:
                raise DatasetError(f"/edges/{i}/services", str(exc)) from None
            conns.extend(Connection(e["src"], e["dst"], s, e["compliant"]) for s in svcs)
        try:
            graph = build_graph(assets, conns, weights)
        except ValueError as exc:
            raise DatasetError("/edges", str(exc)) from None
        if graph.n_edges != len(doc["edges"]):
            raise DatasetError("/edges", "edges are not in deduplicated form")
        try:
            policies = [ZtPolicy.from_list(p) for p in doc["policies"]]
        except ValueError as exc:
            raise DatasetError("/policies", str(exc)) from None
        rules = [GovernanceRule(*r) for r in doc["governance"]]
        fs1 = _label_array(doc["labels"].get("fs1"), graph.n_nodes, FS1_CLASSES, "/labels/fs1")
        tri = _label_array(doc["labels"].get("triage"), graph.n_edges, TRIAGE_CLASSES, "/labels/triage")
        return cls(graph, policies, rules, fs1, tri, provenance, meta)

    @classmethod
    def loads(cls, text: str) -> Dataset:
        try:
            doc = json.loads(text)
        except json.JSONDecodeError as exc:
            raise DatasetError("/", f"invalid JSON at line {exc.lineno} col {exc.colno}: {exc.msg}") from None
        return cls.from_dict(doc)


def _label_array(section: dict | None, n: int, classes: tuple[str, str], where: str) -> np.ndarray | None:
    if section is None:
        return None
    out = np.zeros(n, dtype=bool)
    if set(section) != {str(i) for i in range(n)}:
        raise DatasetError(where, f"labels must cover exactly ids 0..{n - 1}")
    for k, v in section.items():
        out[int(k)] = classes.index(v) == 1
    return out


_SERVICE = {
    "type": "array",
    "prefixItems": [
        {"enum": ["TCP", "UDP", "tcp", "udp"]},
        {"type": "integer", "minimum": 0, "maximum": 65535},
        {"type": "integer", "minimum": 0, "maximum": 65535},
    ],
    "minItems": 3,
    "maxItems": 3,
}

SCHEMA: dict[str, Any] = {
    "$schema": "https://json-schema.org/draft/2020-12/schema",
    "type": "object",
    "required": ["format", "version", "meta", "assets", "edges", "policies", "governance", "labels"],
    "properties": {
        "format": {"const": FORMAT_NAME},
        "version": {"const": FORMAT_VERSION},
        "meta": {"type": "object"},
        "assets": {
            "type": "array",
            "minItems": 1,
            "items": {
                "type": "object",
                "required": ["id", "ip", "segment_range", "tag", "criticality", "app_criticality"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "ip": {"type": "string"},
                    "segment_range": {"type": "string"},
                    "tag": {"type": "string", "minLength": 1},
                    "criticality": {"type": "integer", "minimum": 0, "maximum": 7},
                    "app_criticality": {"enum": ["non_critical", "business_critical", "mission_critical"]},
                },
            },
        },
        "edges": {
            "type": "array",
            "items": {
                "type": "object",
                "required": ["id", "src", "dst", "compliant", "services"],
                "properties": {
                    "id": {"type": "integer", "minimum": 0},
                    "src": {"type": "integer", "minimum": 0},
                    "dst": {"type": "integer", "minimum": 0},
                    "compliant": {"type": "boolean"},
                    "services": {"type": "array", "minItems": 1, "items": _SERVICE},
                },
            },
        },
        "policies": {
            "type": "array",
            "items": {
                "type": "array",
                "prefixItems": [
                    {"type": "string"},
                    {"type": "string"},
                    {"enum": ["TCP", "UDP", "tcp", "udp"]},
                    {"type": "integer", "minimum": 0, "maximum": 65535},
                    {"type": "integer", "minimum": 0, "maximum": 65535},
                ],
                "minItems": 5,
                "maxItems": 5,
            },
        },
        "governance": {
            "type": "array",
            "items": {
                "type": "array",
                "items": {"type": "string", "minLength": 1},
                "minItems": 3,
                "maxItems": 3,
            },
        },
        "labels": {
            "type": "object",
            "properties": {
                "fs1": {
                    "oneOf": [
                        {"type": "null"},
                        {"type": "object", "additionalProperties": {"enum": list(FS1_CLASSES)}},
                    ]
                },
                "triage": {
                    "oneOf": [
                        {"type": "null"},
                        {"type": "object", "additionalProperties": {"enum": list(TRIAGE_CLASSES)}},
                    ]
                },
            },
        },
    },
}

_VALIDATOR = jsonschema.Draft202012Validator(SCHEMA)


def _validate(doc: Any) -> None:
    error = jsonschema.exceptions.best_match(_VALIDATOR.iter_errors(doc))
    if error is not None:
        pointer = "".join(f"/{p}" for p in error.absolute_path)
        raise DatasetError(pointer, error.message)


def save_dataset(dataset: Dataset, path: str | Path) -> None:
    Path(path).write_text(dataset.dumps(), encoding="utf-8")


def load_dataset(path: str | Path) -> Dataset:
    return Dataset.loads(Path(path).read_text(encoding="utf-8"))
