"""Policy edits that block critical connections while keeping every other flow enabled.

A flow is one service of one edge: source host, destination host, protocol and port
interval.  A policy enables a flow when its ranges contain both hosts and its port
interval contains the flow's.  Narrowing a policy subtracts the critical flow's box
from the policy's box; the remainder is split on destination host first, then source
host, then port interval, and stays a disjoint cover of everything else.  Cutting the
port interval last means only the blocked host pair loses ports, so a protected flow
from another source keeps one policy that contains its whole interval.
"""

from __future__ import annotations

import hashlib
import ipaddress
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Sequence

import numpy as np

from prozd.graph_model import ConnectivityGraph, Protocol
from prozd.ingest.policy import ZtPolicy, format_policies

REMOVE = "remove_policy"
NARROW = "narrow_policy"


class PlanError(ValueError):
    pass


@dataclass(frozen=True)
class Flow:
    edge_id: int
    src_ip: str
    dst_ip: str
    protocol: Protocol
    port_lo: int
    port_hi: int

    def overlaps(self, other: Flow) -> bool:
        return (
            self.src_ip == other.src_ip
            and self.dst_ip == other.dst_ip
            and self.protocol == other.protocol
            and self.port_lo <= other.port_hi
            and other.port_lo <= self.port_hi
        )


def graph_flows(graph: ConnectivityGraph) -> list[Flow]:
    out = []
    for i, e in enumerate(graph.edges):
        s, d = graph.assets[e.src].ip, graph.assets[e.dst].ip
        out.extend(Flow(i, s, d, svc.protocol, svc.port_lo, svc.port_hi) for svc in graph.services[i])
    return out


def enables(policy: ZtPolicy, flow: Flow) -> bool:
    return (
        policy.protocol == flow.protocol
        and ipaddress.IPv4Address(flow.src_ip) in policy.src_net
        and ipaddress.IPv4Address(flow.dst_ip) in policy.dst_net
        and policy.port_lo <= flow.port_lo
        and flow.port_hi <= policy.port_hi
    )


class PolicyIndex:
    """Policies as integer arrays for vectorized containment queries."""

    def __init__(self, policies: Sequence[ZtPolicy]):
        self.policies = list(policies)
        cols = np.zeros((len(self.policies), 7), dtype=np.int64)
        for i, p in enumerate(self.policies):
            s, d = p.src_net, p.dst_net
            cols[i] = (
                int(s.network_address),
                int(s.broadcast_address),
                int(d.network_address),
                int(d.broadcast_address),
                p.protocol is Protocol.UDP,
                p.port_lo,
                p.port_hi,
            )
        self._cols = cols

    def enabling(self, flow: Flow) -> np.ndarray:
        """Indices of the policies enabling ``flow``, ascending."""
        c = self._cols
        s, d = int(ipaddress.IPv4Address(flow.src_ip)), int(ipaddress.IPv4Address(flow.dst_ip))
        hit = (
            (c[:, 0] <= s)
            & (s <= c[:, 1])
            & (c[:, 2] <= d)
            & (d <= c[:, 3])
            & (c[:, 4] == (flow.protocol is Protocol.UDP))
            & (c[:, 5] <= flow.port_lo)
            & (flow.port_hi <= c[:, 6])
        )
        return np.flatnonzero(hit)


def enabling_policies(flow: Flow, policies: Sequence[ZtPolicy]) -> list[ZtPolicy]:
    return [p for p in policies if enables(p, flow)]


def enabled_edges(graph: ConnectivityGraph, policies: Sequence[ZtPolicy], flows: list[Flow] | None = None) -> set[int]:
    """Edges with at least one service enabled by some policy."""
    index = PolicyIndex(policies)
    flows = graph_flows(graph) if flows is None else flows
    return {f.edge_id for f in flows if len(index.enabling(f))}


def _host(ip: str) -> ipaddress.IPv4Network:
    return ipaddress.IPv4Network(f"{ip}/32")


def subtract_flow(policy: ZtPolicy, flow: Flow) -> list[ZtPolicy]:
    """Disjoint policies covering exactly ``policy`` minus the flow's box."""
    if not enables(policy, flow):
        # the boxes may still intersect partially; only exact containment is subtracted
        raise PlanError("flow is not enabled by the policy")
    out: list[ZtPolicy] = []
    proto, lo, hi = policy.protocol, policy.port_lo, policy.port_hi
    dst_host, src_host = _host(flow.dst_ip), _host(flow.src_ip)
    # destination host: every other destination keeps the full policy
    if policy.dst_net != dst_host:
        for net in sorted(policy.dst_net.address_exclude(dst_host)):
            out.append(ZtPolicy(policy.src_range, str(net), proto, lo, hi))
    # source host: other sources keep the full port interval to this destination
    if policy.src_net != src_host:
        for net in sorted(policy.src_net.address_exclude(src_host)):
            out.append(ZtPolicy(str(net), str(dst_host), proto, lo, hi))
    # port interval: only the flow's own host pair loses ports
    if lo < flow.port_lo:
        out.append(ZtPolicy(str(src_host), str(dst_host), proto, lo, flow.port_lo - 1))
    if flow.port_hi < hi:
        out.append(ZtPolicy(str(src_host), str(dst_host), proto, flow.port_hi + 1, hi))
    return out


@dataclass(frozen=True)
class Edit:
    action: str
    target_index: int
    target: ZtPolicy
    replacements: tuple[ZtPolicy, ...]
    justification: tuple[int, ...]

    def to_dict(self) -> dict[str, Any]:
        return {
            "action": self.action,
            "target_index": self.target_index,
            "target": self.target.to_list(),
            "replacements": [p.to_list() for p in self.replacements],
            "justification": list(self.justification),
        }


@dataclass
class MitigationPlan:
    fingerprint: str
    edits: list[Edit] = field(default_factory=list)
    residual: list[dict[str, Any]] = field(default_factory=list)  # {"edge_id", "reason"}
    anomalies: list[int] = field(default_factory=list)  # critical edges without any enabling policy

    def to_dict(self) -> dict[str, Any]:
        return {
            "fingerprint": self.fingerprint,
            "edits": [e.to_dict() for e in self.edits],
            "residual": self.residual,
            "anomalies": self.anomalies,
        }

    def dumps(self) -> str:
        return json.dumps(self.to_dict(), indent=1, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, doc: dict[str, Any]) -> MitigationPlan:
        try:
            edits = [
                Edit(
                    e["action"],
                    int(e["target_index"]),
                    ZtPolicy.from_list(e["target"]),
                    tuple(ZtPolicy.from_list(r) for r in e["replacements"]),
                    tuple(int(i) for i in e["justification"]),
                )
                for e in doc["edits"]
            ]
            return cls(doc["fingerprint"], edits, list(doc["residual"]), [int(i) for i in doc["anomalies"]])
        except (KeyError, TypeError, ValueError) as exc:
            raise PlanError(f"malformed plan: {exc}") from None


def fingerprint(policies: Iterable[ZtPolicy]) -> str:
    return hashlib.sha256(format_policies(policies).encode("utf-8")).hexdigest()


def plan_mitigation(
    graph: ConnectivityGraph, critical: Sequence[bool] | np.ndarray, policies: Sequence[ZtPolicy]
) -> MitigationPlan:
    """Greedy plan: one edit per policy that enables a blockable critical flow.

    ``critical`` holds one verdict per edge.  Compliant edges and safe edges are
    protected; a critical flow sharing address and port space with a protected flow,
    or belonging to a compliant edge, cannot be separated and is reported instead.
    """
    critical = np.asarray(critical, dtype=bool)
    if critical.shape != (graph.n_edges,):
        raise PlanError("need one verdict per edge")
    policies = list(policies)
    flows = graph_flows(graph)
    index = PolicyIndex(policies)
    protected_edge = ~critical | graph.edge_compliant
    per_edge: dict[int, list[Flow]] = {}
    for f in flows:
        per_edge.setdefault(f.edge_id, []).append(f)
    protected = [f for f in flows if protected_edge[f.edge_id]]
    by_pair: dict[tuple[str, str], list[Flow]] = {}
    for f in protected:
        by_pair.setdefault((f.src_ip, f.dst_ip), []).append(f)

    residual: dict[int, str] = {}
    anomalies: list[int] = []
    to_block: dict[int, list[Flow]] = {}  # policy index -> critical flows it must stop enabling
    for edge_id in np.flatnonzero(critical):
        edge_id = int(edge_id)
        edge_flows = per_edge.get(edge_id, [])
        enablers = [index.enabling(f) for f in edge_flows]
        if not any(len(e) for e in enablers):
            anomalies.append(edge_id)
            continue
        if graph.edge_compliant[edge_id]:
            residual[edge_id] = "edge is compliant; blocking it would break governed connectivity"
            continue
        for f, pol in zip(edge_flows, enablers):
            clash = next((p for p in by_pair.get((f.src_ip, f.dst_ip), ()) if p.overlaps(f)), None)
            if clash is not None:
                residual[edge_id] = f"shares {f.protocol.value} ports {f.port_lo}-{f.port_hi} with protected edge {clash.edge_id}"
                continue
            for i in pol:
                to_block.setdefault(int(i), []).append(f)

    serves_protected = {int(i) for f in protected for i in index.enabling(f)}
    edits = []
    for i in sorted(to_block):
        blocked = to_block[i]
        policy = policies[i]
        justification = tuple(sorted({f.edge_id for f in blocked}))
        if i not in serves_protected:
            edits.append(Edit(REMOVE, i, policy, (), justification))
            continue
        pieces = [policy]
        for f in blocked:
            pieces = [q for p in pieces for q in (subtract_flow(p, f) if enables(p, f) else [p])]
        edits.append(Edit(NARROW if pieces else REMOVE, i, policy, tuple(pieces), justification))
    return MitigationPlan(
        fingerprint(policies),
        edits,
        [{"edge_id": k, "reason": residual[k]} for k in sorted(residual)],
        sorted(anomalies),
    )


def apply_plan(policies: Sequence[ZtPolicy], plan: MitigationPlan) -> tuple[list[ZtPolicy], dict[str, Any]]:
    """Policy list after the plan, plus a diff that ``apply_diff`` can replay or invert.

    A narrowed policy is replaced in place by its replacements, keeping list order.
    """
    policies = list(policies)
    if fingerprint(policies) != plan.fingerprint:
        raise PlanError("policy list does not match the plan's fingerprint")
    edits = {e.target_index: e for e in plan.edits}
    out: list[ZtPolicy] = []
    removed, added = [], []
    for i, p in enumerate(policies):
        e = edits.get(i)
        if e is None:
            out.append(p)
            continue
        if e.target != p:
            raise PlanError(f"edit targets {e.target.to_line()!r} but index {i} holds {p.to_line()!r}")
        removed.append({"index": i, "policy": p.to_list()})
        for r in e.replacements:
            added.append({"index": len(out), "policy": r.to_list()})
            out.append(r)
    return out, {"removed": removed, "added": added}


def invert_diff(diff: dict[str, Any]) -> dict[str, Any]:
    return {"removed": diff["added"], "added": diff["removed"]}


def apply_diff(policies: Sequence[ZtPolicy], diff: dict[str, Any]) -> list[ZtPolicy]:
    """Drop ``removed`` (indices into the input), then insert ``added`` (indices into the output)."""
    policies = list(policies)
    drop = set()
    for r in diff["removed"]:
        i = r["index"]
        if not 0 <= i < len(policies) or policies[i] != ZtPolicy.from_list(r["policy"]):
            raise PlanError(f"diff removes index {i}, which does not hold the recorded policy")
        drop.add(i)
    out = [p for i, p in enumerate(policies) if i not in drop]
    for a in sorted(diff["added"], key=lambda a: a["index"]):
        out.insert(a["index"], ZtPolicy.from_list(a["policy"]))
    return out
