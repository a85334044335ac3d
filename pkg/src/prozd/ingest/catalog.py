"""Workload tags by criticality level and the named service vocabulary."""

from __future__ import annotations

from prozd.graph_model import Protocol, Service

# one governance tag per criticality level 0..7
LEVEL_TAGS: dict[int, str] = {
    0: "Untagged",
    1: "Internet",
    2: "Vendor",
    3: "Internet Facing",
    4: "User Workstation",
    5: "Web Server",
    6: "Application Server",
    7: "Critical Data",
}

LEVEL_DESCRIPTIONS: dict[int, str] = {
    0: "UnTagged/unknown",
    1: "Untrusted and external/public e.g internet 0.0.0.0/0",
    2: "Trusted external e.g vendor",
    3: "Internet facing",
    4: "Untrusted and internal e.g users",
    5: "Internal & connecting to untrusted internal e.g web servers",
    6: "Internal and connecting to data or non-critical data",
    7: "Critical data",
}

TAG_LEVELS: dict[str, int] = {tag.lower(): level for level, tag in LEVEL_TAGS.items()}
# common aliases seen in governance tag sets
TAG_LEVELS.update({"database": 7, "application server": 6, "web server": 5, "unknown": 0})

SERVICE_CATALOG: dict[str, Service] = {
    "Secure Web": Service(Protocol.TCP, 443, 443),
    "Web": Service(Protocol.TCP, 80, 80),
    "DB": Service(Protocol.TCP, 5432, 5432),
    "SSH": Service(Protocol.TCP, 22, 22),
    "App": Service(Protocol.TCP, 8000, 8099),
}


def level_of_tag(tag: str) -> int | None:
    return TAG_LEVELS.get(tag.strip().lower())


def service_tags(catalog: dict[str, Service] | None = None) -> dict[Service, str]:
    catalog = SERVICE_CATALOG if catalog is None else catalog
    return {svc: tag for tag, svc in catalog.items()}
