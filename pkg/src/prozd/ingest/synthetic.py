"""Synthetic enterprise networks with exact node/edge/critical/compliance counts.

Assets are laid out in four tiers by criticality (external/edge 0-3, internal 4-5,
application 6, critical 7). Every non-entry node gets a backbone edge from the
previous tier, so traffic mostly flows inward toward critical data; the remaining
edges follow a tier-pair mix with preferential attachment on in-degree. Backward
and within-tier links give some nodes several routes while others stay more than
three hops from any critical asset.
"""

from __future__ import annotations

import ipaddress
from dataclasses import asdict, dataclass

import numpy as np

from prozd import oracle
from prozd.graph_model import (
    CRITICAL_LEVEL,
    AppCriticality,
    Asset,
    Connection,
    EdgeWeights,
    Protocol,
    Service,
    build_graph,
)
from prozd.ingest.catalog import LEVEL_TAGS, SERVICE_CATALOG
from prozd.ingest.dataset import Dataset
from prozd.ingest.policy import GovernanceRule, ZtPolicy

STD1 = dict(n_nodes=864, n_edges=5018, n_critical=284, n_compliant=2002, seed=1)
STD2 = dict(n_nodes=865, n_edges=5023, n_critical=284, n_compliant=2002, seed=2)

TIER_LEVELS = ((0, 1, 2, 3), (4, 5), (6,), (7,))
TIER_SHARE = (0.35, 0.38, 0.27)  # of the non-critical nodes

# (src tier, dst tier) -> relative frequency of extra (non-backbone) edges
TIER_MIX: dict[tuple[int, int], float] = {
    (0, 1): 0.10,
    (1, 2): 0.08,
    (2, 3): 0.10,
    (0, 0): 0.10,
    (1, 1): 0.08,
    (2, 2): 0.03,
    (3, 3): 0.16,
    (1, 0): 0.14,
    (2, 1): 0.10,
    (3, 2): 0.08,
    (0, 2): 0.01,
    (1, 3): 0.004,
}

# relative odds that a single edge between two tiers is governance-sanctioned;
# flows into the application and data tiers are the ones governance is written for
COMPLIANCE_BIAS: dict[tuple[int, int], float] = {
    (2, 3): 40.0,
    (3, 3): 30.0,
    (1, 2): 3.0,
    (0, 1): 3.0,
    (0, 2): 2.0,
    (1, 3): 2.0,
    (2, 2): 1.0,
    (0, 0): 0.5,
    (1, 1): 0.5,
    (1, 0): 0.2,
    (2, 1): 0.2,
    (3, 2): 0.2,
}
DEFAULT_BIAS = 0.5

# spread of per-node outbound activity; heavy tail leaves some hosts nearly silent
ACTIVITY_SIGMA = 1.2

SEGMENT_PREFIXES = (32, 30, 29, 28, 27, 26, 24)

# untagged services used by non-compliant flows
CUSTOM_SERVICES = (
    Service(Protocol.TCP, 3389, 3389),
    Service(Protocol.TCP, 445, 445),
    Service(Protocol.UDP, 161, 162),
    Service(Protocol.TCP, 1024, 1039),
    Service(Protocol.UDP, 5000, 5099),
    Service(Protocol.TCP, 9000, 9999),
    Service(Protocol.TCP, 135, 139),
    Service(Protocol.UDP, 53, 53),
)


class SyntheticSpecError(ValueError):
    pass


@dataclass(frozen=True)
class SyntheticSpec:
    n_nodes: int
    n_edges: int
    n_critical: int
    n_compliant: int
    seed: int = 0

    def validate(self) -> None:
        n, m = self.n_nodes, self.n_edges
        if n < 1:
            raise SyntheticSpecError("n_nodes must be >= 1")
        if not 0 <= self.n_critical <= n:
            raise SyntheticSpecError("n_critical must lie in [0, n_nodes]")
        if not 0 <= self.n_compliant <= m:
            raise SyntheticSpecError("n_compliant must lie in [0, n_edges]")
        if m > 2 * n * (n - 1):
            raise SyntheticSpecError(f"n_edges={m} exceeds the 2*n*(n-1)={2 * n * (n - 1)} edge slots")
        # every pair carries at most one compliant and one non-compliant edge
        if self.n_compliant > n * (n - 1) or m - self.n_compliant > n * (n - 1):
            raise SyntheticSpecError("compliance split does not fit the available node pairs")


def _tier_sizes(n_non: int) -> list[int]:
    if n_non == 0:
        return [0, 0, 0]
    if n_non < 3:
        return [1, 1, 0] if n_non == 2 else [1, 0, 0]
    raw = np.array(TIER_SHARE) * n_non
    sizes = np.maximum(np.floor(raw).astype(int), 1)
    while sizes.sum() < n_non:
        sizes[int(np.argmax(raw - sizes))] += 1
    while sizes.sum() > n_non:
        sizes[int(np.argmax(sizes))] -= 1
    return sizes.tolist()


def _preferential(rng: np.random.Generator, members: np.ndarray, degree: np.ndarray) -> int:
    w = degree[members] + 1.0
    return int(members[rng.choice(len(members), p=w / w.sum())])


def _build_topology(spec: SyntheticSpec, rng: np.random.Generator, tier_of: np.ndarray):
    """Return ordered edge slots [(src, dst)] and the tier pair of each."""
    n, m = spec.n_nodes, spec.n_edges
    tiers = [np.flatnonzero(tier_of == t) for t in range(4)]
    indeg = np.zeros(n)
    outdeg = np.zeros(n)
    count: dict[tuple[int, int], int] = {}
    slots: list[tuple[int, int]] = []
    kinds: list[tuple[int, int]] = []
    max_doubles = min(spec.n_compliant, m - spec.n_compliant)
    doubles = 0

    def add(s: int, d: int) -> bool:
        nonlocal doubles
        c = count.get((s, d), 0)
        if s == d or c >= 2 or (c == 1 and doubles >= max_doubles):
            return False
        count[(s, d)] = c + 1
        doubles += c
        indeg[d] += 1
        outdeg[s] += 1
        slots.append((s, d))
        kinds.append((int(tier_of[s]), int(tier_of[d])))
        return True

    # backbone: every node in a non-entry tier is reached from the previous tier
    order = [v for t in (1, 2, 3) for v in rng.permutation(tiers[t])]
    for v in order:
        if len(slots) == m:
            break
        prev = tiers[int(tier_of[v]) - 1]
        if len(prev):
            add(_preferential(rng, prev, outdeg), int(v))

    mix = [(k, p) for k, p in TIER_MIX.items() if len(tiers[k[0]]) and len(tiers[k[1]])]
    if mix:
        patterns = [k for k, _ in mix]
        probs = np.array([p for _, p in mix])
        probs /= probs.sum()
    activity = rng.lognormal(0.0, ACTIVITY_SIGMA, size=n)
    failures = 0
    while len(slots) < m and mix and failures < 50 * m + 1000:
        st, dt = patterns[rng.choice(len(patterns), p=probs)]
        act = activity[tiers[st]]
        s = int(tiers[st][rng.choice(len(act), p=act / act.sum())])
        d = _preferential(rng, tiers[dt], indeg)
        if not add(s, d):
            failures += 1

    if len(slots) < m:
        # dense corner cases: fill remaining slots uniformly from whatever is still free
        free = [
            (s, d)
            for s in range(n)
            for d in range(n)
            if s != d
            for _ in range(2 - count.get((s, d), 0))
        ]
        for idx in rng.permutation(len(free)):
            if len(slots) == m:
                break
            add(*free[idx])
        if len(slots) < m:
            raise SyntheticSpecError("could not place the requested number of edges")
    return slots, kinds


def _assign_compliance(spec: SyntheticSpec, rng: np.random.Generator, slots, kinds) -> np.ndarray:
    by_pair: dict[tuple[int, int], list[int]] = {}
    for i, pair in enumerate(slots):
        by_pair.setdefault(pair, []).append(i)
    compliant = np.zeros(len(slots), dtype=bool)
    singles = []
    for idx in by_pair.values():
        if len(idx) == 2:
            # a doubled pair holds exactly one edge of each compliance class
            compliant[idx[0]] = True
        else:
            singles.append(idx[0])
    singles.sort()
    need = spec.n_compliant - int(compliant.sum())
    if need < 0 or need > len(singles):
        raise SyntheticSpecError("compliance split infeasible for generated topology")
    if need:
        w = np.array([COMPLIANCE_BIAS.get(kinds[i], DEFAULT_BIAS) for i in singles])
        chosen = rng.choice(len(singles), size=need, replace=False, p=w / w.sum())
        compliant[np.array(singles)[chosen]] = True
    return compliant


def _layout_segments(rng: np.random.Generator, levels: np.ndarray) -> tuple[list[str], list[str]]:
    """Group same-tag assets into aligned micro-segments inside 10.0.0.0/8."""
    n = len(levels)
    ips = [""] * n
    ranges = [""] * n
    cursor = int(ipaddress.IPv4Address("10.0.0.0"))
    for level in range(8):
        members = rng.permutation(np.flatnonzero(levels == level)).tolist()
        while members:
            prefix = int(rng.choice(SEGMENT_PREFIXES))
            block = 2 ** (32 - prefix)
            capacity = 1 if prefix == 32 else block - 2
            take = min(len(members), int(rng.integers(1, capacity + 1)))
            cursor = -(-cursor // block) * block
            net = ipaddress.IPv4Network((cursor, prefix))
            for k, v in enumerate(members[:take]):
                ips[v] = str(ipaddress.IPv4Address(cursor + (0 if prefix == 32 else k + 1)))
                ranges[v] = str(net)
            members = members[take:]
            cursor += block
    return ips, ranges


def _app_criticality(rng: np.random.Generator, tier: int) -> AppCriticality:
    probs = {0: (0.8, 0.15, 0.05), 1: (0.6, 0.3, 0.1), 2: (0.3, 0.45, 0.25), 3: (0.1, 0.35, 0.55)}[tier]
    return AppCriticality(int(rng.choice(3, p=probs)))


def generate_synthetic(spec: SyntheticSpec | dict, weights: EdgeWeights | None = None) -> Dataset:
    """Deterministic synthetic dataset with oracle FS1 and triage labels attached."""
    if isinstance(spec, dict):
        spec = SyntheticSpec(**spec)
    spec.validate()
    rng = np.random.default_rng(spec.seed)
    n = spec.n_nodes

    sizes = _tier_sizes(n - spec.n_critical) + [spec.n_critical]
    tier_seq = np.repeat(np.arange(4), sizes)
    tier_of = tier_seq[rng.permutation(n)]
    levels = np.array([int(rng.choice(TIER_LEVELS[t])) for t in tier_of])
    assert int((levels == CRITICAL_LEVEL).sum()) == spec.n_critical

    ips, ranges = _layout_segments(rng, levels)
    assets = [
        Asset(v, ips[v], ranges[v], LEVEL_TAGS[int(levels[v])], int(levels[v]), _app_criticality(rng, int(tier_of[v])))
        for v in range(n)
    ]

    slots, kinds = _build_topology(spec, rng, tier_of)
    compliant = _assign_compliance(spec, rng, slots, kinds)

    # compliant flows pick a catalogued service and define the governance rule set;
    # non-compliant flows then avoid any (src tag, dst tag, service) the rules sanction
    catalog = list(SERVICE_CATALOG.items())
    services: list[Service | None] = [None] * len(slots)
    rules: set[tuple[str, str, str]] = set()
    for i in np.flatnonzero(compliant):
        s, d = slots[i]
        name, svc = catalog[int(rng.integers(len(catalog)))]
        services[i] = svc
        rules.add((assets[s].tag, assets[d].tag, name))
    for i in np.flatnonzero(~compliant):
        s, d = slots[i]
        open_names = [k for k, (name, _) in enumerate(catalog) if (assets[s].tag, assets[d].tag, name) not in rules]
        if open_names and rng.random() < 0.5:
            services[i] = catalog[open_names[int(rng.integers(len(open_names)))]][1]
        else:
            services[i] = CUSTOM_SERVICES[int(rng.integers(len(CUSTOM_SERVICES)))]

    conns = [Connection(s, d, services[i], bool(compliant[i])) for i, (s, d) in enumerate(slots)]
    graph = build_graph(assets, conns, weights)

    policies: list[ZtPolicy] = []
    seen: set[ZtPolicy] = set()
    for e in graph.edges:
        p = ZtPolicy(
            assets[e.src].segment_range,
            assets[e.dst].segment_range,
            e.service.protocol,
            e.service.port_lo,
            e.service.port_hi,
        )
        if p not in seen:
            seen.add(p)
            policies.append(p)

    fs1 = oracle.fs1_labels(graph)
    triage = oracle.triage_labels(graph, fs1)
    meta = {
        "generator": asdict(spec),
        "seed": spec.seed,
        "service_tags": {name: svc.to_list() for name, svc in SERVICE_CATALOG.items()},
    }
    return Dataset(
        graph=graph,
        policies=policies,
        gov_rules=[GovernanceRule(*r) for r in sorted(rules)],
        fs1_labels=fs1,
        triage_labels=triage,
        provenance="synthetic",
        meta=meta,
    )
