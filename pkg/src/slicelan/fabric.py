"""Static model of an enterprise L2/L3 switch fabric.

A :class:`Fabric` is built once from a topology document (see
``docs/config.md``) and never mutated afterwards.  Everything here is a pure
lookup: DSCP classification, rewrite-rule application and next-hop
resolution over the MAC, ARP and IP tables.
"""
from __future__ import annotations

import ipaddress
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, NamedTuple, Sequence

from slicelan.errors import (
    DanglingLink,
    DuplicateSwitchId,
    FabricError,
    MappingGap,
    NoDefaultQueue,
    NoRoute,
    StaleArp,
)

DSCP_MIN, DSCP_MAX = 0, 63
COS_MIN, COS_MAX = 0, 7
QUEUE_MIN, QUEUE_MAX = 1, 8

STRICT = "strict"
ROUND_ROBIN = "round_robin"
EGRESS_POLICIES = (STRICT, ROUND_ROBIN)

DEFAULT_BUFFER_KB = 512.0
DEFAULT_PORT_MBPS = 1000.0


def check_dscp(value: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not DSCP_MIN <= value <= DSCP_MAX:
        raise ValueError(f"DSCP must be an integer in [0, 63], got {value!r}")
    return value


def check_cos(value: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not COS_MIN <= value <= COS_MAX:
        raise ValueError(f"CoS must be an integer in [0, 7], got {value!r}")
    return value


def check_queue(value: int) -> int:
    if isinstance(value, bool) or not isinstance(value, int) or not QUEUE_MIN <= value <= QUEUE_MAX:
        raise ValueError(f"queue id must be an integer in [1, 8], got {value!r}")
    return value


def _check_ranges(ranges: Sequence[tuple[int, int, int]], what: str) -> None:
    covered = [False] * 64
    for lo, hi, _ in ranges:
        if not (DSCP_MIN <= lo <= hi <= DSCP_MAX):
            raise FabricError(f"{what}: bad DSCP range {lo}-{hi}")
        for d in range(lo, hi + 1):
            if covered[d]:
                raise FabricError(f"{what}: DSCP {d} appears in two ranges")
            covered[d] = True
    missing = [d for d in range(64) if not covered[d]]
    if missing:
        raise MappingGap(f"{what}: DSCP values {missing[0]}..{missing[-1]} not covered")


@dataclass(frozen=True)
class L3MappingTable:
    """DSCP range -> egress queue, as configured on a layer 3 switch."""

    entries: tuple[tuple[int, int, int], ...]

    def __post_init__(self) -> None:
        entries = tuple(sorted((int(lo), int(hi), int(q)) for lo, hi, q in self.entries))
        object.__setattr__(self, "entries", entries)
        for _, _, q in entries:
            check_queue(q)
        _check_ranges(entries, "L3 mapping")
        lookup = [0] * 64
        for lo, hi, q in entries:
            for d in range(lo, hi + 1):
                lookup[d] = q
        object.__setattr__(self, "_lookup", tuple(lookup))

    @classmethod
    def default(cls) -> "L3MappingTable":
        """Queue i takes DSCP 8(i-1) .. 8i-1."""
        return cls(tuple((8 * (q - 1), 8 * q - 1, q) for q in range(1, 9)))

    def classify(self, dscp: int) -> int:
        return self._lookup[check_dscp(dscp)]  # type: ignore[attr-defined]


@dataclass(frozen=True)
class L2MappingTable:
    """Two-stage DSCP -> CoS -> queue translation of a layer 2 switch."""

    dscp_to_cos: tuple[tuple[int, int, int], ...]
    cos_to_queue: tuple[tuple[int, int], ...]

    def __post_init__(self) -> None:
        d2c = tuple(sorted((int(lo), int(hi), int(c)) for lo, hi, c in self.dscp_to_cos))
        cos_items = self.cos_to_queue
        if isinstance(cos_items, Mapping):
            cos_items = tuple(cos_items.items())
        c2q = tuple(sorted((int(c), int(q)) for c, q in cos_items))
        object.__setattr__(self, "dscp_to_cos", d2c)
        object.__setattr__(self, "cos_to_queue", c2q)
        for _, _, c in d2c:
            check_cos(c)
        _check_ranges(d2c, "L2 DSCP->CoS mapping")
        queues = {}
        for c, q in c2q:
            check_cos(c)
            check_queue(q)
            if c in queues:
                raise FabricError(f"L2 CoS->queue mapping lists CoS {c} twice")
            queues[c] = q
        missing = [c for c in range(8) if c not in queues]
        if missing:
            raise MappingGap(f"L2 CoS->queue mapping has no queue for CoS {missing}")
        lookup = [0] * 64
        for lo, hi, c in d2c:
            for d in range(lo, hi + 1):
                lookup[d] = queues[c]
        object.__setattr__(self, "_cos", {d: c for lo, hi, c in d2c for d in range(lo, hi + 1)})
        object.__setattr__(self, "_lookup", tuple(lookup))

    @classmethod
    def standard(cls) -> "L2MappingTable":
        """Conventional CoS = floor(DSCP / 8), queue = CoS + 1."""
        return cls(
            tuple((8 * c, 8 * c + 7, c) for c in range(8)),
            tuple((c, c + 1) for c in range(8)),
        )

    @classmethod
    def default(cls) -> "L2MappingTable":
        """DSCP 0-7 goes to CoS 1; every other range uses floor(DSCP / 8)."""
        d2c = [(0, 7, 1)] + [(8 * c, 8 * c + 7, c) for c in range(1, 8)]
        return cls(tuple(d2c), tuple((c, c + 1) for c in range(8)))

    def cos(self, dscp: int) -> int:
        return self._cos[check_dscp(dscp)]  # type: ignore[attr-defined]

    def classify(self, dscp: int) -> int:
        return self._lookup[check_dscp(dscp)]  # type: ignore[attr-defined]


def classify_l3(table: L3MappingTable, dscp: int) -> int:
    return table.classify(dscp)


def classify_l2(table: L2MappingTable, dscp: int) -> int:
    return table.classify(dscp)


@dataclass(frozen=True)
class EgressQueueConfig:
    queue: int
    capacity_mbps: float
    buffer_kb: float = DEFAULT_BUFFER_KB
    is_default: bool = False

    def __post_init__(self) -> None:
        check_queue(self.queue)
        if self.capacity_mbps < 0:
            raise FabricError(f"queue q{self.queue}: negative capacity")
        if self.buffer_kb <= 0:
            raise FabricError(f"queue q{self.queue}: buffer must be positive")


@dataclass(frozen=True)
class RewriteRule:
    switch: str
    egress_port: str
    match_dscp: int
    set_dscp: int

    def __post_init__(self) -> None:
        check_dscp(self.match_dscp)
        check_dscp(self.set_dscp)


def apply_rewrites(rules: Iterable[RewriteRule], switch: str, egress_port: str, dscp: int | None) -> int | None:
    """Return the DSCP a packet leaves ``(switch, egress_port)`` with.

    Unmarked traffic (``None``) is never rewritten.
    """
    if dscp is None:
        return None
    for rule in rules:
        if rule.switch == switch and rule.egress_port == egress_port and rule.match_dscp == dscp:
            return rule.set_dscp
    return dscp


@dataclass(frozen=True)
class Port:
    id: str
    bandwidth_mbps: float = DEFAULT_PORT_MBPS


@dataclass(frozen=True)
class Switch:
    id: str
    layer: str
    ports: tuple[Port, ...]
    queues: Mapping[str, tuple[EgressQueueConfig, ...]]
    mapping: L3MappingTable | L2MappingTable
    ring_bandwidth_mbps: float
    egress_policy: str = STRICT
    mac: str = ""
    ip: str | None = None
    subnets: tuple[str, ...] = ()
    mac_table: Mapping[str, str] = field(default_factory=dict)
    arp_table: Mapping[str, str] = field(default_factory=dict)
    ip_table: Mapping[str, str] = field(default_factory=dict)
    rewrites: tuple[RewriteRule, ...] = ()
    latency_ms: float = 0.1

    def port(self, port_id: str) -> Port:
        for p in self.ports:
            if p.id == port_id:
                return p
        raise FabricError(f"switch {self.id} has no port {port_id!r}")

    def has_port(self, port_id: str) -> bool:
        return any(p.id == port_id for p in self.ports)

    def port_queues(self, port_id: str) -> tuple[EgressQueueConfig, ...]:
        return self.queues[port_id]

    def queue_config(self, port_id: str, queue: int) -> EgressQueueConfig | None:
        for qc in self.queues[port_id]:
            if qc.queue == queue:
                return qc
        return None

    def default_queue(self, port_id: str) -> int:
        return next(qc.queue for qc in self.queues[port_id] if qc.is_default)

    def classify(self, dscp: int | None, port_id: str) -> int:
        """Queue a packet lands in at ``port_id``; unmarked traffic goes to the default queue."""
        if dscp is None:
            return self.default_queue(port_id)
        return self.mapping.classify(dscp)

    def in_subnet(self, ip: str) -> bool:
        addr = ipaddress.ip_address(ip)
        return any(addr in ipaddress.ip_network(s, strict=False) for s in self.subnets)


@dataclass(frozen=True)
class Endpoint:
    id: str
    ip: str
    subnet: str
    attached_switch: str
    attached_port: str
    mac: str = ""

    def __post_init__(self) -> None:
        if not self.mac:
            object.__setattr__(self, "mac", f"mac-{self.ip}")


@dataclass(frozen=True)
class Link:
    a: tuple[str, str]
    b: tuple[str, str]


class Neighbor(NamedTuple):
    """What sits behind a switch port: ``kind`` is "switch" or "endpoint"."""

    kind: str
    id: str
    port: str | None = None


class NextHop(NamedTuple):
    egress_port: str
    neighbor: Neighbor
    target_mac: str


@dataclass(frozen=True)
class Fabric:
    switches: Mapping[str, Switch]
    links: tuple[Link, ...]
    endpoints: Mapping[str, Endpoint]

    def __post_init__(self) -> None:
        adj: dict[tuple[str, str], Neighbor] = {}
        for link in self.links:
            adj[link.a] = Neighbor("switch", link.b[0], link.b[1])
            adj[link.b] = Neighbor("switch", link.a[0], link.a[1])
        for ep in self.endpoints.values():
            adj[(ep.attached_switch, ep.attached_port)] = Neighbor("endpoint", ep.id)
        by_ip = {sw.ip: sw.id for sw in self.switches.values() if sw.ip}
        by_mac = {sw.mac: sw.id for sw in self.switches.values() if sw.mac}
        object.__setattr__(self, "_adj", adj)
        object.__setattr__(self, "_by_ip", by_ip)
        object.__setattr__(self, "_by_mac", by_mac)

    def switch(self, switch_id: str) -> Switch:
        try:
            return self.switches[switch_id]
        except KeyError:
            raise FabricError(f"unknown switch {switch_id!r}") from None

    def endpoint(self, endpoint_id: str) -> Endpoint:
        try:
            return self.endpoints[endpoint_id]
        except KeyError:
            raise FabricError(f"unknown endpoint {endpoint_id!r}") from None

    def neighbor(self, switch_id: str, port_id: str) -> Neighbor | None:
        return self._adj.get((switch_id, port_id))  # type: ignore[attr-defined]

    def switch_by_ip(self, ip: str) -> str | None:
        return self._by_ip.get(ip)  # type: ignore[attr-defined]

    def switch_by_mac(self, mac: str) -> str | None:
        return self._by_mac.get(mac)  # type: ignore[attr-defined]

    def to_document(self) -> dict[str, Any]:
        return fabric_to_document(self)


def _lookup_port(sw: Switch, ip: str) -> tuple[str, str]:
    mac = sw.arp_table.get(ip)
    if mac is None:
        raise StaleArp(f"switch {sw.id}: no ARP entry for {ip}")
    port = sw.mac_table.get(mac)
    if port is None:
        raise StaleArp(f"switch {sw.id}: MAC {mac} ({ip}) not in MAC table")
    return port, mac


def longest_prefix_match(ip_table: Mapping[str, str], ip: str) -> str | None:
    addr = ipaddress.ip_address(ip)
    best, best_len = None, -1
    for prefix, nh in ip_table.items():
        net = ipaddress.ip_network(prefix, strict=False)
        if addr in net and net.prefixlen > best_len:
            best, best_len = nh, net.prefixlen
    return best


def next_hop(fabric: Fabric, switch_id: str, dest: Endpoint, *, same_subnet: bool = False) -> NextHop:
    """Resolve the egress port on ``switch_id`` toward ``dest``.

    Layer 3 switches use ARP + MAC when the destination is local (or the
    caller says source and destination share a subnet) and the IP table
    otherwise.  Layer 2 switches only have their MAC table.
    """
    sw = fabric.switch(switch_id)
    if sw.layer == "L2":
        port = sw.mac_table.get(dest.mac)
        if port is None:
            raise NoRoute(f"L2 switch {sw.id}: MAC {dest.mac} not in MAC table")
        return NextHop(port, _neighbor_or_raise(fabric, sw.id, port), dest.mac)
    if same_subnet or sw.in_subnet(dest.ip):
        port, mac = _lookup_port(sw, dest.ip)
        return NextHop(port, _neighbor_or_raise(fabric, sw.id, port), mac)
    nh_ip = longest_prefix_match(sw.ip_table, dest.ip)
    if nh_ip is None:
        raise NoRoute(f"switch {sw.id}: no route to {dest.ip}")
    port, mac = _lookup_port(sw, nh_ip)
    return NextHop(port, _neighbor_or_raise(fabric, sw.id, port), mac)


def _neighbor_or_raise(fabric: Fabric, switch_id: str, port: str) -> Neighbor:
    nb = fabric.neighbor(switch_id, port)
    if nb is None:
        raise NoRoute(f"switch {switch_id}: port {port} is not connected")
    return nb


# ---------------------------------------------------------------------------
# topology documents

def _parse_mapping(doc: Any, layer: str) -> L3MappingTable | L2MappingTable:
    if doc is None or doc == "default":
        return L3MappingTable.default() if layer == "L3" else L2MappingTable.default()
    if doc == "standard":
        return L2MappingTable.standard()
    kind = doc.get("type", "l3" if layer == "L3" else "l2")
    if kind == "l3":
        return L3MappingTable(tuple(tuple(e) for e in doc["entries"]))
    if kind == "l2":
        c2q = doc["cos_to_queue"]
        if isinstance(c2q, Mapping):
            c2q = [(int(k), v) for k, v in c2q.items()]
        return L2MappingTable(tuple(tuple(e) for e in doc["dscp_to_cos"]), tuple(tuple(e) for e in c2q))
    raise FabricError(f"unknown mapping type {kind!r}")


def _parse_queues(doc: Sequence[Mapping[str, Any]], port: Port, where: str) -> tuple[EgressQueueConfig, ...]:
    out = []
    for q in doc:
        if "capacity_mbps" in q:
            cap = float(q["capacity_mbps"])
        elif "capacity_pct" in q:
            cap = port.bandwidth_mbps * float(q["capacity_pct"]) / 100.0
        else:
            cap = 0.0
        out.append(EgressQueueConfig(
            queue=int(q["queue"]),
            capacity_mbps=cap,
            buffer_kb=float(q.get("buffer_kb", DEFAULT_BUFFER_KB)),
            is_default=bool(q.get("is_default", False)),
        ))
    ids = [q.queue for q in out]
    if len(set(ids)) != len(ids):
        raise FabricError(f"{where}: duplicate queue ids")
    n_default = sum(q.is_default for q in out)
    if n_default != 1:
        raise NoDefaultQueue(f"{where}: expected exactly one default queue, found {n_default}")
    total = sum(q.capacity_mbps for q in out)
    if total > port.bandwidth_mbps * (1 + 1e-9):
        raise FabricError(f"{where}: queue capacities {total} exceed port bandwidth {port.bandwidth_mbps}")
    return tuple(sorted(out, key=lambda q: q.queue))


def default_queue_set() -> list[dict[str, Any]]:
    """Eight queues; q2 is best effort, q1 30%, q6 10%, q8 35% of the port."""
    pct = {1: 30, 2: 5, 3: 5, 4: 5, 5: 5, 6: 10, 7: 5, 8: 35}
    return [{"queue": q, "capacity_pct": p, "is_default": q == 2} for q, p in pct.items()]


def _parse_switch(doc: Mapping[str, Any]) -> Switch:
    sid = str(doc["id"])
    layer = str(doc.get("layer", "L3")).upper()
    if layer not in ("L2", "L3"):
        raise FabricError(f"switch {sid}: layer must be L2 or L3")
    ports = tuple(Port(str(p["id"]), float(p.get("bandwidth_mbps", DEFAULT_PORT_MBPS))) for p in doc["ports"])
    port_ids = [p.id for p in ports]
    if len(set(port_ids)) != len(port_ids):
        raise FabricError(f"switch {sid}: duplicate port ids")
    for p in ports:
        if p.bandwidth_mbps <= 0:
            raise FabricError(f"switch {sid}: port {p.id} bandwidth must be positive")
    qdoc = doc.get("queues", None)
    queues = {}
    for p in ports:
        if qdoc is None:
            spec = default_queue_set()
        elif isinstance(qdoc, Mapping):
            spec = qdoc.get(p.id, qdoc.get("*", None))
            if spec is None:
                spec = default_queue_set()
        else:
            spec = qdoc
        queues[p.id] = _parse_queues(spec, p, f"switch {sid} port {p.id}")
    ring = float(doc.get("ring_bandwidth_mbps", sum(p.bandwidth_mbps for p in ports)))
    if ring <= 0:
        raise FabricError(f"switch {sid}: ring bandwidth must be positive")
    policy = str(doc.get("egress_policy", STRICT))
    if policy not in EGRESS_POLICIES:
        raise FabricError(f"switch {sid}: unknown egress policy {policy!r}")
    mac_table = {str(k): str(v) for k, v in doc.get("mac_table", {}).items()}
    for mac, port in mac_table.items():
        if port not in port_ids:
            raise FabricError(f"switch {sid}: MAC table sends {mac} to missing port {port}")
    if layer == "L2" and (doc.get("arp_table") or doc.get("ip_table")):
        raise FabricError(f"switch {sid}: L2 switches have no ARP or IP table")
    rewrites = []
    seen = set()
    for r in doc.get("rewrites", []):
        rule = RewriteRule(sid, str(r["egress_port"]), int(r["match_dscp"]), int(r["set_dscp"]))
        if rule.egress_port not in port_ids:
            raise FabricError(f"switch {sid}: rewrite on missing port {rule.egress_port}")
        key = (rule.egress_port, rule.match_dscp)
        if key in seen:
            raise FabricError(f"switch {sid}: two rewrite rules for {key}")
        seen.add(key)
        rewrites.append(rule)
    subnets = tuple(str(s) for s in doc.get("subnets", ()))
    for s in subnets:
        ipaddress.ip_network(s, strict=False)
    return Switch(
        id=sid,
        layer=layer,
        ports=ports,
        queues=queues,
        mapping=_parse_mapping(doc.get("mapping"), layer),
        ring_bandwidth_mbps=ring,
        egress_policy=policy,
        mac=str(doc.get("mac", f"mac-{sid}")),
        ip=doc.get("ip"),
        subnets=subnets,
        mac_table=mac_table,
        arp_table={str(k): str(v) for k, v in doc.get("arp_table", {}).items()},
        ip_table={str(k): str(v) for k, v in doc.get("ip_table", {}).items()},
        rewrites=tuple(rewrites),
        latency_ms=float(doc.get("latency_ms", 0.1)),
    )


def build_fabric(config: Mapping[str, Any]) -> Fabric:
    """Validate a topology document and return an immutable :class:`Fabric`."""
    if not isinstance(config, Mapping) or "switches" not in config:
        raise FabricError("topology document needs a 'switches' list")
    switches: dict[str, Switch] = {}
    for sdoc in config["switches"]:
        sw = _parse_switch(sdoc)
        if sw.id in switches:
            raise DuplicateSwitchId(f"switch id {sw.id!r} used twice")
        switches[sw.id] = sw

    used: set[tuple[str, str]] = set()

    def claim(sid: str, port: str, what: str) -> None:
        if sid not in switches or not switches[sid].has_port(port):
            raise DanglingLink(f"{what} references missing {sid}:{port}")
        if (sid, port) in used:
            raise FabricError(f"{what}: port {sid}:{port} already connected")
        used.add((sid, port))

    links = []
    for ldoc in config.get("links", []):
        a = (str(ldoc["a"][0]), str(ldoc["a"][1]))
        b = (str(ldoc["b"][0]), str(ldoc["b"][1]))
        claim(*a, what="link")
        claim(*b, what="link")
        links.append(Link(a, b))

    endpoints: dict[str, Endpoint] = {}
    for edoc in config.get("endpoints", []):
        ep = Endpoint(
            id=str(edoc["id"]),
            ip=str(edoc["ip"]),
            subnet=str(edoc["subnet"]),
            attached_switch=str(edoc["attached_switch"]),
            attached_port=str(edoc["attached_port"]),
            mac=str(edoc.get("mac", "")),
        )
        if ep.id in endpoints:
            raise FabricError(f"endpoint id {ep.id!r} used twice")
        ipaddress.ip_address(ep.ip)
        ipaddress.ip_network(ep.subnet, strict=False)
        claim(ep.attached_switch, ep.attached_port, what=f"endpoint {ep.id}")
        endpoints[ep.id] = ep
    return Fabric(switches=switches, links=tuple(links), endpoints=endpoints)


def fabric_to_document(fabric: Fabric) -> dict[str, Any]:
    """Serialize a fabric so that ``build_fabric`` reproduces it exactly."""
    switches = []
    for sw in fabric.switches.values():
        if isinstance(sw.mapping, L3MappingTable):
            mapping: dict[str, Any] = {"type": "l3", "entries": [list(e) for e in sw.mapping.entries]}
        else:
            mapping = {
                "type": "l2",
                "dscp_to_cos": [list(e) for e in sw.mapping.dscp_to_cos],
                "cos_to_queue": {str(c): q for c, q in sw.mapping.cos_to_queue},
            }
        switches.append({
            "id": sw.id,
            "layer": sw.layer,
            "ip": sw.ip,
            "mac": sw.mac,
            "subnets": list(sw.subnets),
            "ports": [{"id": p.id, "bandwidth_mbps": p.bandwidth_mbps} for p in sw.ports],
            "queues": {
                port: [
                    {"queue": q.queue, "capacity_mbps": q.capacity_mbps,
                     "buffer_kb": q.buffer_kb, "is_default": q.is_default}
                    for q in qs
                ]
                for port, qs in sw.queues.items()
            },
            "mapping": mapping,
            "ring_bandwidth_mbps": sw.ring_bandwidth_mbps,
            "egress_policy": sw.egress_policy,
            "latency_ms": sw.latency_ms,
            "mac_table": dict(sw.mac_table),
            "arp_table": dict(sw.arp_table),
            "ip_table": dict(sw.ip_table),
            "rewrites": [
                {"egress_port": r.egress_port, "match_dscp": r.match_dscp, "set_dscp": r.set_dscp}
                for r in sw.rewrites
            ],
        })
    return {
        "switches": switches,
        "links": [{"a": list(l.a), "b": list(l.b)} for l in fabric.links],
        "endpoints": [
            {"id": e.id, "ip": e.ip, "subnet": e.subnet, "attached_switch": e.attached_switch,
             "attached_port": e.attached_port, "mac": e.mac}
            for e in fabric.endpoints.values()
        ],
    }


@dataclass(frozen=True)
class Hop:
    switch: str
    ingress_port: str
    egress_port: str


@dataclass(frozen=True)
class Path:
    """Ordered hops from the RAN gateway to the destination's access switch."""

    hops: tuple[Hop, ...]
    src: Endpoint
    dst: Endpoint

    def __post_init__(self) -> None:
        if not self.hops:
            raise ValueError("a path needs at least one hop")
        ids = [h.switch for h in self.hops]
        if len(set(ids)) != len(ids):
            raise ValueError(f"path repeats a switch: {ids}")

    @property
    def switches(self) -> tuple[str, ...]:
        return tuple(h.switch for h in self.hops)
