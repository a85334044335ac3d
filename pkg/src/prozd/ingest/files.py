"""Build a dataset from asset/connection CSV exports plus policy and governance text.

Assets CSV columns: id, ip, segment_range, tag, criticality, app_criticality.
Connections CSV columns: src_ip, dst_ip, protocol, port_lo, port_hi.
A connection is compliant when some policy enabling it matches a governance rule.
"""

from __future__ import annotations

import csv
import io
import ipaddress

from prozd.graph_model import Asset, Connection, Protocol, Service, build_graph
from prozd.ingest.catalog import SERVICE_CATALOG, service_tags
from prozd.ingest.dataset import Dataset, DatasetError
from prozd.ingest.policy import ZtPolicy, check_compliance, parse_governance, parse_policies

ASSET_COLUMNS = ("id", "ip", "segment_range", "tag", "criticality", "app_criticality")
CONNECTION_COLUMNS = ("src_ip", "dst_ip", "protocol", "port_lo", "port_hi")


def _rows(text: str, columns: tuple[str, ...], where: str) -> list[dict[str, str]]:
    reader = csv.DictReader(io.StringIO(text))
    missing = [c for c in columns if c not in (reader.fieldnames or [])]
    if missing:
        raise DatasetError(where, f"missing columns {missing}")
    return [{k: (v or "").strip() for k, v in row.items() if k} for row in reader]


def parse_services(text: str) -> dict[str, Service]:
    """``tag;protocol;port_lo;port_hi`` lines naming the service vocabulary."""
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.strip()
        if not line or line.startswith("#"):
            continue
        parts = [p.strip() for p in line.split(";")]
        if len(parts) != 4:
            raise DatasetError(f"/services/{lineno}", "expected tag;protocol;port_lo;port_hi")
        try:
            out[parts[0]] = Service(Protocol.parse(parts[1]), int(parts[2]), int(parts[3]))
        except ValueError as exc:
            raise DatasetError(f"/services/{lineno}", str(exc)) from None
    return out


def ingest_text(
    assets_csv: str,
    connections_csv: str,
    policies_text: str,
    governance_text: str,
    services_text: str | None = None,
) -> Dataset:
    assets = []
    for i, row in enumerate(_rows(assets_csv, ASSET_COLUMNS, "/assets")):
        try:
            assets.append(
                Asset(int(row["id"]), row["ip"], row["segment_range"], row["tag"], int(row["criticality"]),
                      row["app_criticality"])
            )
        except ValueError as exc:
            raise DatasetError(f"/assets/{i}", str(exc)) from None
    by_ip = {a.ip: a.id for a in assets}
    policies = parse_policies(policies_text)
    rules = parse_governance(governance_text)
    catalog = parse_services(services_text) if services_text else dict(SERVICE_CATALOG)
    svc_tags = service_tags(catalog)
    tag_of = {a.segment_range: a.tag for a in assets}

    conns = []
    unbacked = 0
    for i, row in enumerate(_rows(connections_csv, CONNECTION_COLUMNS, "/connections")):
        try:
            src, dst = by_ip[row["src_ip"]], by_ip[row["dst_ip"]]
        except KeyError as exc:
            raise DatasetError(f"/connections/{i}", f"unknown asset ip {exc.args[0]}") from None
        try:
            svc = Service(Protocol.parse(row["protocol"]), int(row["port_lo"]), int(row["port_hi"]))
        except ValueError as exc:
            raise DatasetError(f"/connections/{i}", str(exc)) from None
        enablers = [p for p in policies if _enables(p, row["src_ip"], row["dst_ip"], svc)]
        unbacked += not enablers
        compliant = any(check_compliance(p, rules, tag_of, svc_tags) for p in enablers)
        conns.append(Connection(src, dst, svc, compliant))
    try:
        graph = build_graph(assets, conns)
    except ValueError as exc:
        raise DatasetError("/connections", str(exc)) from None
    meta = {
        "service_tags": {k: v.to_list() for k, v in catalog.items()},
        "connections_without_policy": unbacked,
    }
    return Dataset(graph, policies, rules, provenance="file", meta=meta)


def _enables(p: ZtPolicy, src_ip: str, dst_ip: str, svc: Service) -> bool:
    return (
        p.protocol == svc.protocol
        and ipaddress.IPv4Address(src_ip) in p.src_net
        and ipaddress.IPv4Address(dst_ip) in p.dst_net
        and p.port_lo <= svc.port_lo
        and svc.port_hi <= p.port_hi
    )


def export_text(dataset: Dataset) -> dict[str, str]:
    """The five text inputs that ``ingest_text`` reads back into this dataset."""
    g = dataset.graph
    a_buf, c_buf = io.StringIO(), io.StringIO()
    aw = csv.writer(a_buf, lineterminator="\n")
    aw.writerow(ASSET_COLUMNS)
    for a in g.assets:
        aw.writerow([a.id, a.ip, a.segment_range, a.tag, a.criticality, a.app_criticality.label])
    cw = csv.writer(c_buf, lineterminator="\n")
    cw.writerow(CONNECTION_COLUMNS)
    for c in g.connections():
        cw.writerow([g.assets[c.src].ip, g.assets[c.dst].ip, c.service.protocol.value, c.service.port_lo,
                     c.service.port_hi])
    catalog = dataset.meta.get("service_tags") or {k: v.to_list() for k, v in SERVICE_CATALOG.items()}
    return {
        "assets.csv": a_buf.getvalue(),
        "connections.csv": c_buf.getvalue(),
        "policies.txt": "".join(p.to_line() + "\n" for p in dataset.policies),
        "governance.txt": "".join(r.to_line() + "\n" for r in dataset.gov_rules),
        "services.txt": "".join(f"{k};{v[0]};{v[1]};{v[2]}\n" for k, v in catalog.items()),
    }
