"""Control plane that keeps GBR flows in queues with enough headroom.

Pipeline for one RAN flow: discover the path from the forwarding tables,
estimate per-queue load on every egress port from sampled telemetry, pick
a queue with spare capacity at each hop, try to find one DSCP that works
end to end, otherwise chain rewrite rules, then install ingress policers
and round-robin egress draining along the path.
"""
from __future__ import annotations

import functools
import ipaddress
import json
from dataclasses import dataclass, field
from typing import Any, Iterable, Mapping, Sequence, Union

from slicelan.errors import NoRoute, RoutingError, RoutingLoop
from slicelan.fabric import (
    ROUND_ROBIN,
    Endpoint,
    Fabric,
    Hop,
    L2MappingTable,
    L3MappingTable,
    Path,
    RewriteRule,
    Switch,
    apply_rewrites,
    next_hop,
)
from slicelan.telemetry import QueueStatus, SampleSet, estimate_queue_load
from slicelan.traffic import DEFAULT_BURST_KB, FlowSpec, PolicySet, TrTcmConfig

Snapshot = Mapping[tuple[str, str], SampleSet]

DEFAULT_MONITOR_PERIOD_S = 5.0
DEFAULT_HYSTERESIS = 2


# ---------------------------------------------------------------------------
# path discovery

def discover_path(fabric: Fabric, src: Endpoint, dst: Endpoint) -> Path:
    """Walk the forwarding tables from the source's gateway to ``dst``.

    The forward pass visits layer 3 switches through their ARP, MAC and IP
    tables and expands any layer 2 switches in between through their MAC
    tables.  Ingress ports come from a reverse lookup toward the source on
    each switch, falling back to the physical arrival port when a switch
    has no route back.
    """
    same_subnet = ipaddress.ip_address(dst.ip) in ipaddress.ip_network(src.subnet, strict=False)
    raw: list[tuple[str, str, str]] = []
    visited: set[str] = set()
    current, arrived_on = src.attached_switch, src.attached_port
    fabric.switch(current)

    while True:
        if current in visited:
            raise RoutingLoop(f"switch {current} repeats on the path to {dst.ip}")
        visited.add(current)
        sw = fabric.switch(current)
        if sw.layer == "L2":
            final = True
            nh = next_hop(fabric, current, dst)
        elif same_subnet or sw.in_subnet(dst.ip):
            final = True
            nh = next_hop(fabric, current, dst, same_subnet=True)
        else:
            final = False
            nh = next_hop(fabric, current, dst)
        raw.append((current, arrived_on, nh.egress_port))

        nb = nh.neighbor
        while nb.kind == "switch" and fabric.switch(nb.id).layer == "L2":
            l2 = fabric.switch(nb.id)
            if l2.id in visited:
                raise RoutingLoop(f"switch {l2.id} repeats on the path to {dst.ip}")
            visited.add(l2.id)
            port = l2.mac_table.get(nh.target_mac)
            if port is None:
                raise NoRoute(f"L2 switch {l2.id}: MAC {nh.target_mac} not in MAC table")
            raw.append((l2.id, nb.port, port))
            nxt = fabric.neighbor(l2.id, port)
            if nxt is None:
                raise NoRoute(f"switch {l2.id}: port {port} is not connected")
            nb = nxt

        if final:
            if nb.kind != "endpoint" or nb.id != dst.id:
                raise NoRoute(f"forwarding toward {dst.ip} ends at {nb.kind} {nb.id}")
            break
        if nb.kind != "switch" or fabric.switch_by_mac(nh.target_mac) != nb.id:
            raise NoRoute(f"next hop {nh.target_mac} is not reachable from {current}")
        current, arrived_on = nb.id, nb.port

    return Path(tuple(_reverse_ingress(fabric, raw, src, same_subnet)), src, dst)


def _reverse_ingress(fabric: Fabric, raw: Sequence[tuple[str, str, str]], src: Endpoint,
                     same_subnet: bool) -> list[Hop]:
    hops = []
    upstream_mac = src.mac
    for i, (sid, physical_in, egress) in enumerate(raw):
        sw = fabric.switch(sid)
        ingress = physical_in
        if i > 0:
            try:
                if sw.layer == "L3":
                    ingress = next_hop(fabric, sid, src, same_subnet=same_subnet).egress_port
                else:
                    ingress = sw.mac_table.get(upstream_mac, physical_in)
            except RoutingError:
                ingress = physical_in
        if sw.layer == "L3":
            upstream_mac = sw.mac
        hops.append(Hop(sid, ingress, egress))
    return hops


# ---------------------------------------------------------------------------
# feasibility and compatibility

@dataclass(frozen=True)
class PerSwitchChoice:
    switch: str
    egress_port: str
    queue: int
    dscp_range: tuple[int, int]
    chosen_dscp: int
    candidates: frozenset[int] = frozenset()


@dataclass(frozen=True)
class Infeasible:
    switch: str
    port: str


@dataclass(frozen=True)
class CommonDscp:
    dscp: int


@dataclass(frozen=True)
class NeedsRewrites:
    pass


@functools.lru_cache(maxsize=4096)
def _queue_dscps(mapping: L3MappingTable | L2MappingTable) -> dict[int, frozenset[int]]:
    by_queue: dict[int, set[int]] = {}
    for d in range(64):
        by_queue.setdefault(mapping.classify(d), set()).add(d)
    return {q: frozenset(ds) for q, ds in by_queue.items()}


def candidate_dscps(sw: Switch, queue: int) -> frozenset[int]:
    """Every DSCP that this switch classifies into ``queue``."""
    return _queue_dscps(sw.mapping).get(queue, frozenset())


def _run_containing(values: frozenset[int], d: int) -> tuple[int, int]:
    lo = hi = d
    while lo - 1 in values:
        lo -= 1
    while hi + 1 in values:
        hi += 1
    return lo, hi


def _statuses_by_interface(statuses: Any) -> dict[tuple[str, str], list[QueueStatus]]:
    if isinstance(statuses, Mapping):
        return {k: list(v) for k, v in statuses.items()}
    out: dict[tuple[str, str], list[QueueStatus]] = {}
    for st in statuses:
        out.setdefault((st.switch, st.port), []).append(st)
    return out


def feasibility_check(
    fabric: Fabric,
    path: Path,
    gbr_mbps: float,
    statuses: Mapping[tuple[str, str], Sequence[QueueStatus]] | Iterable[QueueStatus],
    *,
    reserved: Mapping[tuple[str, str, int], float] | None = None,
    used: Mapping[tuple[str, str], Iterable[int]] | None = None,
) -> list[PerSwitchChoice] | Infeasible:
    """Pick, hop by hop, a queue whose spare capacity covers ``gbr_mbps``.

    Among feasible queues the one with the most spare capacity wins, ties
    going to the higher queue number.  ``reserved`` is bandwidth already
    promised to other admitted flows; ``used`` lists DSCPs those flows
    already carry on an interface, which are avoided when possible.
    """
    reserved = reserved or {}
    used = used or {}
    by_iface = _statuses_by_interface(statuses)
    choices = []
    for hop in path.hops:
        key = (hop.switch, hop.egress_port)
        if key not in by_iface:
            raise ValueError(f"no queue status for {hop.switch}:{hop.egress_port}")
        sw = fabric.switch(hop.switch)
        best = None
        for st in by_iface[key]:
            spare = st.spare_mbps - reserved.get((hop.switch, hop.egress_port, st.queue), 0.0)
            if spare < gbr_mbps or not candidate_dscps(sw, st.queue):
                continue
            rank = (spare, st.queue)
            if best is None or rank > best[0]:
                best = (rank, st.queue)
        if best is None:
            return Infeasible(hop.switch, hop.egress_port)
        queue = best[1]
        cands = candidate_dscps(sw, queue)
        free = cands - frozenset(used.get(key, ()))
        pool = free or cands
        chosen = min(pool)
        choices.append(PerSwitchChoice(hop.switch, hop.egress_port, queue,
                                       _run_containing(cands, chosen), chosen, pool))
    return choices


def compatibility_check(choices: Sequence[PerSwitchChoice]) -> CommonDscp | NeedsRewrites:
    """Lowest DSCP acceptable at every hop, if one exists."""
    if not choices:
        raise ValueError("compatibility check needs at least one hop")
    common = frozenset.intersection(*(c.candidates or _range_set(c) for c in choices))
    if common:
        return CommonDscp(min(common))
    return NeedsRewrites()


def _range_set(c: PerSwitchChoice) -> frozenset[int]:
    return frozenset(range(c.dscp_range[0], c.dscp_range[1] + 1))


# ---------------------------------------------------------------------------
# plans and policies

@dataclass(frozen=True)
class DscpPlan:
    initial_dscp: int
    rewrites: tuple[RewriteRule, ...]
    choices: tuple[PerSwitchChoice, ...]


def build_plan(
    path: Path,
    choices: Sequence[PerSwitchChoice],
    compat: CommonDscp | NeedsRewrites,
    fabric: Fabric | None = None,
) -> DscpPlan:
    """Turn per-hop choices into an initial DSCP plus egress rewrite rules.

    With a ``fabric`` the plan also pins the DSCP where a preconfigured
    switch rewrite would otherwise change it.
    """
    if len(choices) != len(path.hops):
        raise ValueError("one choice per hop is required")
    if isinstance(compat, CommonDscp):
        choices = [
            PerSwitchChoice(c.switch, c.egress_port, c.queue,
                            _run_containing(c.candidates or _range_set(c), compat.dscp),
                            compat.dscp, c.candidates)
            for c in choices
        ]
    rules = []
    for here, nxt in zip(choices, choices[1:]):
        existing = fabric.switch(here.switch).rewrites if fabric is not None else ()
        leaves_with = apply_rewrites(existing, here.switch, here.egress_port, here.chosen_dscp)
        if here.chosen_dscp != nxt.chosen_dscp or leaves_with != nxt.chosen_dscp:
            rules.append(RewriteRule(here.switch, here.egress_port, here.chosen_dscp, nxt.chosen_dscp))
    return DscpPlan(choices[0].chosen_dscp, tuple(rules), tuple(choices))


def replay_plan(plan: DscpPlan, path: Path, extra_rules: Sequence[RewriteRule] = ()) -> list[int | None]:
    """DSCP each switch's classifier sees when the source marks ``initial_dscp``."""
    seen: list[int | None] = []
    dscp: int | None = plan.initial_dscp
    rules = list(plan.rewrites) + list(extra_rules)
    for hop in path.hops:
        seen.append(dscp)
        dscp = apply_rewrites(rules, hop.switch, hop.egress_port, dscp)
    return seen


def install_policies(
    paths: Path | Sequence[Path],
    gbrs: Iterable[float],
    *,
    flows: Iterable[str] = (),
    per_flow: bool = True,
    cbs_kb: float = DEFAULT_BURST_KB,
    pbs_kb: float = DEFAULT_BURST_KB,
) -> PolicySet:
    """trTCM at every ingress port (CIR = min GBR, PIR = max GBR) and
    round-robin draining at every egress port on the given paths."""
    gbrs = list(gbrs)
    if not gbrs:
        raise ValueError("at least one GBR is required")
    if isinstance(paths, Path):
        paths = [paths]
    cfg = TrTcmConfig(min(gbrs), max(gbrs), cbs_kb, pbs_kb)
    ingress = {}
    egress = {}
    for path in paths:
        for hop in path.hops:
            ingress[(hop.switch, hop.ingress_port)] = cfg
            egress[(hop.switch, hop.egress_port)] = ROUND_ROBIN
    return PolicySet(ingress=ingress, egress=egress, flows=frozenset(flows), per_flow=per_flow)


# ---------------------------------------------------------------------------
# admission and monitoring

@dataclass(frozen=True)
class Admitted:
    plan: DscpPlan
    policies: PolicySet
    path: Path


@dataclass(frozen=True)
class BestEffort:
    offending_switch: str
    offending_port: str


AdmissionResult = Union[Admitted, BestEffort]


@dataclass(frozen=True)
class PlanUpdate:
    flow_id: str
    result: AdmissionResult


@dataclass
class _Admission:
    flow: FlowSpec
    path: Path
    plan: DscpPlan
    strikes: int = 0


def queue_statuses(fabric: Fabric, path: Path, snapshot: Snapshot) -> dict[tuple[str, str], list[QueueStatus]]:
    """Estimated status of every egress queue on ``path``; interfaces
    missing from the snapshot are treated as idle."""
    out = {}
    for hop in path.hops:
        key = (hop.switch, hop.egress_port)
        samples = snapshot.get(key) or SampleSet(key, 1, 1.0)
        out[key] = estimate_queue_load(samples, fabric)
    return out


class Orchestrator:
    """Stateful admission controller.

    Callers must serialize :meth:`admit` and :meth:`monitor`.  Telemetry
    handed in should exclude the orchestrated flows themselves; their GBR
    is accounted for exactly through the reservations kept here.
    """

    def __init__(
        self,
        fabric: Fabric,
        *,
        per_flow_policing: bool = True,
        hysteresis: int = DEFAULT_HYSTERESIS,
        cbs_kb: float = DEFAULT_BURST_KB,
        pbs_kb: float = DEFAULT_BURST_KB,
    ):
        if hysteresis < 1:
            raise ValueError("hysteresis must be >= 1")
        self.fabric = fabric
        self.per_flow_policing = per_flow_policing
        self.hysteresis = hysteresis
        self.cbs_kb = cbs_kb
        self.pbs_kb = pbs_kb
        self.admitted: dict[str, _Admission] = {}
        self.best_effort: dict[str, BestEffort] = {}

    def _reserved(self, exclude: str | None = None) -> dict[tuple[str, str, int], float]:
        out: dict[tuple[str, str, int], float] = {}
        for fid, adm in self.admitted.items():
            if fid == exclude:
                continue
            for c in adm.plan.choices:
                key = (c.switch, c.egress_port, c.queue)
                out[key] = out.get(key, 0.0) + adm.flow.gbr_mbps
        return out

    def _used(self, exclude: str | None = None) -> dict[tuple[str, str], set[int]]:
        out: dict[tuple[str, str], set[int]] = {}
        for fid, adm in self.admitted.items():
            if fid == exclude:
                continue
            for c in adm.plan.choices:
                out.setdefault((c.switch, c.egress_port), set()).add(c.chosen_dscp)
        return out

    def _conflicts(self, plan: DscpPlan, exclude: str) -> RewriteRule | None:
        taken = {}
        for fid, adm in self.admitted.items():
            if fid != exclude:
                for r in adm.plan.rewrites:
                    taken[(r.switch, r.egress_port, r.match_dscp)] = r.set_dscp
        for r in plan.rewrites:
            if taken.get((r.switch, r.egress_port, r.match_dscp), r.set_dscp) != r.set_dscp:
                return r
        return None

    def _plan(self, flow: FlowSpec, path: Path, snapshot: Snapshot) -> Admitted | BestEffort:
        statuses = queue_statuses(self.fabric, path, snapshot)
        res = feasibility_check(self.fabric, path, flow.gbr_mbps, statuses,
                                reserved=self._reserved(flow.id), used=self._used(flow.id))
        if isinstance(res, Infeasible):
            return BestEffort(res.switch, res.port)
        plan = build_plan(path, res, compatibility_check(res), self.fabric)
        clash = self._conflicts(plan, flow.id)
        if clash is not None:
            return BestEffort(clash.switch, clash.egress_port)
        self.admitted[flow.id] = _Admission(flow, path, plan)
        self.best_effort.pop(flow.id, None)
        return Admitted(plan, self.policies(), path)

    def admit(self, flow: FlowSpec, snapshot: Snapshot) -> AdmissionResult:
        if not flow.is_ran:
            raise ValueError(f"flow {flow.id} has no GBR; only RAN flows are orchestrated")
        path = discover_path(self.fabric, self.fabric.endpoint(flow.src), self.fabric.endpoint(flow.dst))
        self.admitted.pop(flow.id, None)
        result = self._plan(flow, path, snapshot)
        if isinstance(result, BestEffort):
            self.best_effort[flow.id] = result
        return result

    def monitor(self, snapshot: Snapshot) -> list[PlanUpdate]:
        """Re-check every admitted flow against fresh telemetry.

        A flow is re-planned only after ``hysteresis`` consecutive checks in
        which some hop's queue can no longer carry its GBR.
        """
        updates = []
        for fid in sorted(self.admitted):
            adm = self.admitted[fid]
            statuses = queue_statuses(self.fabric, adm.path, snapshot)
            reserved = self._reserved(fid)
            still_fits = True
            for c in adm.plan.choices:
                st = next((s for s in statuses[(c.switch, c.egress_port)] if s.queue == c.queue), None)
                spare = 0.0 if st is None else st.spare_mbps
                if spare - reserved.get((c.switch, c.egress_port, c.queue), 0.0) < adm.flow.gbr_mbps:
                    still_fits = False
                    break
            if still_fits:
                adm.strikes = 0
                continue
            adm.strikes += 1
            if adm.strikes < self.hysteresis:
                continue
            del self.admitted[fid]
            result = self._plan(adm.flow, adm.path, snapshot)
            if isinstance(result, BestEffort):
                self.best_effort[fid] = result
            updates.append(PlanUpdate(fid, result))
        return updates

    def policies(self) -> PolicySet:
        ingress: dict[tuple[str, str], list[float]] = {}
        egress = {}
        for adm in self.admitted.values():
            for hop in adm.path.hops:
                ingress.setdefault((hop.switch, hop.ingress_port), []).append(adm.flow.gbr_mbps)
                egress[(hop.switch, hop.egress_port)] = ROUND_ROBIN
        return PolicySet(
            ingress={k: TrTcmConfig(min(v), max(v), self.cbs_kb, self.pbs_kb) for k, v in sorted(ingress.items())},
            egress=dict(sorted(egress.items())),
            flows=frozenset(self.admitted),
            per_flow=self.per_flow_policing,
        )

    def markings(self) -> dict[str, int | None]:
        out: dict[str, int | None] = {fid: None for fid in self.best_effort}
        out.update({fid: adm.plan.initial_dscp for fid, adm in self.admitted.items()})
        return out

    def rewrites(self) -> tuple[RewriteRule, ...]:
        rules = {r for adm in self.admitted.values() for r in adm.plan.rewrites}
        return tuple(sorted(rules, key=lambda r: (r.switch, r.egress_port, r.match_dscp)))

    def plan_for(self, flow_id: str) -> DscpPlan | None:
        adm = self.admitted.get(flow_id)
        return adm.plan if adm else None


def admit_flow(fabric: Fabric, flow: FlowSpec, snapshot: Snapshot) -> AdmissionResult:
    """One-shot admission against an otherwise empty orchestrator."""
    return Orchestrator(fabric).admit(flow, snapshot)


def plan_document(flow_id: str, result: AdmissionResult) -> dict[str, Any]:
    """The document a deployment would push to an SDN controller."""
    if isinstance(result, BestEffort):
        return {
            "flow_id": flow_id,
            "status": "best_effort",
            "offending_switch": result.offending_switch,
            "offending_port": result.offending_port,
        }
    plan, pol = result.plan, result.policies
    return {
        "flow_id": flow_id,
        "status": "admitted",
        "initial_dscp": plan.initial_dscp,
        "path": [{"switch": h.switch, "ingress_port": h.ingress_port, "egress_port": h.egress_port}
                 for h in result.path.hops],
        "choices": [
            {"switch": c.switch, "egress_port": c.egress_port, "queue": c.queue,
             "dscp_range": list(c.dscp_range), "chosen_dscp": c.chosen_dscp}
            for c in plan.choices
        ],
        "rewrites": [
            {"switch": r.switch, "egress_port": r.egress_port, "match_dscp": r.match_dscp, "set_dscp": r.set_dscp}
            for r in plan.rewrites
        ],
        "policies": {
            "ingress": [
                {"switch": s, "port": p, "cir_mbps": c.cir_mbps, "pir_mbps": c.pir_mbps,
                 "cbs_kb": c.cbs_kb, "pbs_kb": c.pbs_kb}
                for (s, p), c in sorted(pol.ingress.items())
            ],
            "egress": [{"switch": s, "port": p, "policy": v} for (s, p), v in sorted(pol.egress.items())],
            "per_flow": pol.per_flow,
        },
    }


def dumps_plan(flow_id: str, result: AdmissionResult) -> str:
    return json.dumps(plan_document(flow_id, result), indent=2, sort_keys=True)
