"""ZT policy and governance rule text formats, plus compliance evaluation."""

from __future__ import annotations

import ipaddress
from dataclasses import dataclass
from typing import Iterable, Mapping

from prozd.graph_model import Protocol, Service


class PolicyParseError(ValueError):
    def __init__(self, lineno: int, message: str):
        super().__init__(f"line {lineno}: {message}")
        self.lineno = lineno


@dataclass(frozen=True, order=True)
class ZtPolicy:
    src_range: str
    dst_range: str
    protocol: Protocol
    port_lo: int
    port_hi: int

    def __post_init__(self) -> None:
        object.__setattr__(self, "protocol", Protocol.parse(self.protocol))
        # normalise so that equal address blocks compare equal
        object.__setattr__(self, "src_range", str(ipaddress.IPv4Network(self.src_range)))
        object.__setattr__(self, "dst_range", str(ipaddress.IPv4Network(self.dst_range)))
        if not (0 <= self.port_lo <= 65535 and 0 <= self.port_hi <= 65535):
            raise ValueError(f"port out of range: {self.port_lo}-{self.port_hi}")
        if self.port_lo > self.port_hi:
            raise ValueError(f"inverted port range {self.port_lo}-{self.port_hi}")

    @property
    def src_net(self) -> ipaddress.IPv4Network:
        return ipaddress.IPv4Network(self.src_range)

    @property
    def dst_net(self) -> ipaddress.IPv4Network:
        return ipaddress.IPv4Network(self.dst_range)

    @property
    def service(self) -> Service:
        return Service(self.protocol, self.port_lo, self.port_hi)

    def to_line(self) -> str:
        return f"{self.src_range} {self.dst_range} {self.protocol.value} {self.port_lo} {self.port_hi}"

    def to_list(self) -> list:
        return [self.src_range, self.dst_range, self.protocol.value, self.port_lo, self.port_hi]

    @classmethod
    def from_list(cls, data: list) -> ZtPolicy:
        src, dst, proto, lo, hi = data
        return cls(src, dst, Protocol.parse(proto), int(lo), int(hi))


@dataclass(frozen=True, order=True)
class GovernanceRule:
    src_tag: str
    dst_tag: str
    service_tag: str

    def __post_init__(self) -> None:
        for name in ("src_tag", "dst_tag", "service_tag"):
            value = getattr(self, name).strip()
            if not value:
                raise ValueError(f"governance rule has empty {name}")
            object.__setattr__(self, name, value)

    def to_line(self) -> str:
        return f"{self.src_tag};{self.dst_tag};{self.service_tag}"


def parse_policies(text: str) -> list[ZtPolicy]:
    """Parse ``<src CIDR> <dst CIDR> <TCP|UDP> <port_lo> <port_hi>`` lines."""
    policies = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 5:
            raise PolicyParseError(lineno, f"expected 5 fields, got {len(parts)}")
        src, dst, proto, lo, hi = parts
        for cidr in (src, dst):
            try:
                ipaddress.IPv4Network(cidr)
            except ValueError as exc:
                raise PolicyParseError(lineno, f"malformed CIDR {cidr!r}: {exc}") from None
        try:
            protocol = Protocol.parse(proto)
        except ValueError:
            raise PolicyParseError(lineno, f"unknown protocol {proto!r}") from None
        try:
            port_lo, port_hi = int(lo), int(hi)
        except ValueError:
            raise PolicyParseError(lineno, f"non-integer port in {lo!r} {hi!r}") from None
        try:
            policies.append(ZtPolicy(src, dst, protocol, port_lo, port_hi))
        except ValueError as exc:
            raise PolicyParseError(lineno, str(exc)) from None
    return policies


def format_policies(policies: Iterable[ZtPolicy]) -> str:
    return "".join(p.to_line() + "\n" for p in policies)


def parse_governance(text: str) -> list[GovernanceRule]:
    """Parse ``<src_tag>;<dst_tag>;<service_tag>`` lines (tags may contain spaces)."""
    rules = []
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        parts = line.split(";")
        if len(parts) != 3:
            raise PolicyParseError(lineno, f"expected 3 ';'-separated tags, got {len(parts)}")
        try:
            rules.append(GovernanceRule(*parts))
        except ValueError as exc:
            raise PolicyParseError(lineno, str(exc)) from None
    return rules


def format_governance(rules: Iterable[GovernanceRule]) -> str:
    return "".join(r.to_line() + "\n" for r in rules)


def check_compliance(
    policy: ZtPolicy,
    rules: Iterable[GovernanceRule],
    tag_of: Mapping[str, str],
    service_tag_of: Mapping[Service, str],
) -> bool:
    """True iff some governance rule matches the policy's (src, dst, service) tags.

    A range or service without a tag is an unknown identity and never compliant.
    """
    src_tag = tag_of.get(policy.src_range)
    dst_tag = tag_of.get(policy.dst_range)
    svc_tag = service_tag_of.get(policy.service)
    if src_tag is None or dst_tag is None or svc_tag is None:
        return False
    return any(
        r.src_tag == src_tag and r.dst_tag == dst_tag and r.service_tag == svc_tag for r in rules
    )
