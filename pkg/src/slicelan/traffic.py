"""Deterministic fluid simulation of flows crossing the fabric.

Rates are in Mbps, volumes in Mb inside the engine and kB at the
interface (1 Mb = 125 kB).  Each tick every switch, in upstream-first
order, runs: ingress policing -> internal-ring admission -> DSCP
classification -> per-queue contention -> egress scheduling -> buffer
update -> egress DSCP rewrite.
"""
from __future__ import annotations

import graphlib
import math
from collections import defaultdict
from dataclasses import dataclass, field
from typing import Collection, Hashable, Iterable, Mapping, Sequence

from slicelan.errors import UnroutedFlow
from slicelan.fabric import (
    ROUND_ROBIN,
    STRICT,
    Fabric,
    Path,
    RewriteRule,
    apply_rewrites,
    check_dscp,
)

KB_PER_MB = 125.0
DEFAULT_TICK_MS = 100
DEFAULT_BURST_KB = 64.0


@dataclass(frozen=True)
class FlowSpec:
    """A RAN flow (``gbr_mbps`` set) or a LAN flow.

    ``dscp`` is ``None`` for unmarked traffic, which every switch puts in
    its default queue.  ``active_windows`` are ``[start_s, end_s)`` spans;
    an empty tuple means the flow is always on.
    """

    id: str
    src: str
    dst: str
    demand_mbps: float
    dscp: int | None = None
    gbr_mbps: float | None = None
    active_windows: tuple[tuple[float, float], ...] = ()

    def __post_init__(self) -> None:
        if not self.demand_mbps > 0:
            raise ValueError(f"flow {self.id}: demand must be positive")
        if self.dscp is not None:
            check_dscp(self.dscp)
        if self.gbr_mbps is not None and not self.gbr_mbps > 0:
            raise ValueError(f"flow {self.id}: GBR must be positive")
        windows = tuple((float(a), float(b)) for a, b in self.active_windows)
        for a, b in windows:
            if not 0 <= a < b:
                raise ValueError(f"flow {self.id}: bad window [{a}, {b})")
        object.__setattr__(self, "active_windows", windows)
        object.__setattr__(
            self, "_windows_ms", tuple((round(a * 1000), round(b * 1000)) for a, b in windows)
        )

    @property
    def is_ran(self) -> bool:
        return self.gbr_mbps is not None

    def active_at_ms(self, t_ms: int) -> bool:
        spans = self._windows_ms  # type: ignore[attr-defined]
        return not spans or any(a <= t_ms < b for a, b in spans)


# ---------------------------------------------------------------------------
# two-rate three-color policer

@dataclass(frozen=True)
class TrTcmConfig:
    cir_mbps: float
    pir_mbps: float
    cbs_kb: float = DEFAULT_BURST_KB
    pbs_kb: float = DEFAULT_BURST_KB

    def __post_init__(self) -> None:
        if not 0 < self.cir_mbps <= self.pir_mbps:
            raise ValueError("trTCM needs 0 < cir <= pir")
        if self.cbs_kb <= 0 or self.pbs_kb <= 0:
            raise ValueError("trTCM burst sizes must be positive")

    def new_state(self) -> "TrTcmState":
        return TrTcmState(self.cbs_kb / KB_PER_MB, self.pbs_kb / KB_PER_MB)


@dataclass
class TrTcmState:
    """Committed and peak bucket fill, in Mb. Buckets start full."""

    committed_mb: float
    peak_mb: float


def police_trtcm(
    cfg: TrTcmConfig, state: TrTcmState, offered_mbps: float, dt_s: float
) -> tuple[float, float, float]:
    """Color one tick of fluid traffic; returns green, yellow, red rates.

    Color-blind RFC 2698 semantics on a fluid: traffic beyond the peak
    bucket is red, traffic within peak but beyond the committed bucket is
    yellow, the rest is green and drains both buckets.

    A bucket can never hold less than one tick of its token rate, otherwise
    a coarse tick would cap conforming traffic below CIR/PIR.
    """
    if dt_s <= 0:
        raise ValueError("dt_s must be positive")
    cbs = max(cfg.cbs_kb / KB_PER_MB, cfg.cir_mbps * dt_s)
    pbs = max(cfg.pbs_kb / KB_PER_MB, cfg.pir_mbps * dt_s)
    state.committed_mb = min(cbs, state.committed_mb + cfg.cir_mbps * dt_s)
    state.peak_mb = min(pbs, state.peak_mb + cfg.pir_mbps * dt_s)
    volume = max(0.0, offered_mbps) * dt_s
    within_peak = min(volume, state.peak_mb)
    green = min(within_peak, state.committed_mb)
    yellow = within_peak - green
    red = volume - within_peak
    state.peak_mb -= within_peak
    state.committed_mb -= green
    return green / dt_s, yellow / dt_s, red / dt_s


# ---------------------------------------------------------------------------
# internal ring and egress schedulers

def ingress_ring_admit(
    ring_bandwidth_mbps: float,
    offered: Mapping[Hashable, float],
    reserved: Mapping[Hashable, float] | None = None,
) -> dict[Hashable, float]:
    """Share the internal ring among inbound flows.

    Below capacity everything is admitted.  Otherwise reserved rates go
    first and the remaining ring bandwidth is split in proportion to the
    unreserved demand.
    """
    reserved = reserved or {}
    total = sum(offered.values())
    if total <= ring_bandwidth_mbps:
        return dict(offered)
    res = {k: min(max(reserved.get(k, 0.0), 0.0), v) for k, v in offered.items()}
    res_total = sum(res.values())
    if res_total >= ring_bandwidth_mbps:
        scale = ring_bandwidth_mbps / res_total
        return {k: res[k] * scale for k in offered}
    left = ring_bandwidth_mbps - res_total
    residual = {k: v - res[k] for k, v in offered.items()}
    residual_total = sum(residual.values())
    return {
        k: res[k] + (left * residual[k] / residual_total if residual_total > 0 else 0.0)
        for k in offered
    }


def serve_strict(demands: Mapping[int, float], port_bw_mbps: float) -> dict[int, float]:
    """Drain queues highest number first; each takes what is left."""
    if port_bw_mbps <= 0:
        raise ValueError("port bandwidth must be positive")
    left = port_bw_mbps
    served = {}
    for q in sorted(demands, reverse=True):
        s = min(max(demands[q], 0.0), left)
        served[q] = s
        left -= s
    return served


def _water_fill(residual: dict[int, float], weights: Mapping[int, float], budget: float) -> dict[int, float]:
    give = {q: 0.0 for q in residual}
    active = {q for q, r in residual.items() if r > 0}
    while active and budget > 1e-12:
        w = {q: weights.get(q, 0.0) for q in active}
        wsum = sum(w.values())
        if wsum <= 0:
            w = {q: 1.0 for q in active}
            wsum = float(len(active))
        share = {q: budget * (w[q] / wsum) for q in active}
        saturated = {q for q in active if share[q] >= residual[q] - give[q]}
        if not saturated:
            for q in active:
                give[q] += share[q]
            break
        for q in saturated:
            budget -= residual[q] - give[q]
            give[q] = residual[q]
        active -= saturated
    return give


def serve_round_robin(
    demands: Mapping[int, float],
    caps: Mapping[int, float],
    port_bw_mbps: float,
    default_queues: Collection[int] = (),
) -> dict[int, float]:
    """Round-robin draining bounded by each queue's allocated bandwidth.

    Every queue first gets ``min(demand, cap)``.  Spare port bandwidth goes
    to the backlogged default (best-effort) queue, and whatever is still
    unused is redistributed over the other backlogged queues in proportion
    to their caps.
    """
    if port_bw_mbps <= 0:
        raise ValueError("port bandwidth must be positive")
    d = {q: max(v, 0.0) for q, v in demands.items()}
    served = {q: min(d[q], max(caps.get(q, 0.0), 0.0)) for q in d}
    first = sum(served.values())
    if first > port_bw_mbps:
        scale = port_bw_mbps / first
        return {q: s * scale for q, s in served.items()}
    left = port_bw_mbps - first
    residual = {q: d[q] - served[q] for q in d}
    defaults = {q: residual[q] for q in d if q in default_queues}
    extra = _water_fill(defaults, {q: residual[q] for q in defaults}, left)
    for q, v in extra.items():
        served[q] += v
        left -= v
    others = {q: residual[q] for q in d if q not in default_queues}
    extra = _water_fill(others, caps, left)
    for q, v in extra.items():
        served[q] += v
    return served


# ---------------------------------------------------------------------------
# policies and metrics

@dataclass(frozen=True)
class PolicySet:
    """Ingress policers and egress scheduler overrides installed on the fabric.

    ``flows`` lists the flows the ingress policers match; their conforming
    (green and yellow) traffic is reserved on the internal ring.  With
    ``per_flow`` false one policer covers all matched flows on a port.
    """

    ingress: Mapping[tuple[str, str], TrTcmConfig] = field(default_factory=dict)
    egress: Mapping[tuple[str, str], str] = field(default_factory=dict)
    flows: frozenset[str] = frozenset()
    per_flow: bool = True


NO_POLICIES = PolicySet()


@dataclass(frozen=True)
class FlowTick:
    offered_mbps: float
    delivered_mbps: float
    dropped_mbps: float
    delay_ms: float


@dataclass(frozen=True)
class QueueTick:
    arrived_mbps: float
    served_mbps: float
    dropped_mbps: float
    backlog_start_kb: float
    backlog_kb: float


@dataclass(frozen=True)
class TickMetrics:
    time_s: float
    flows: Mapping[str, FlowTick]
    queues: Mapping[tuple[str, str, int], QueueTick]


@dataclass(frozen=True)
class MetricsSeries:
    tick_ms: int
    records: tuple[TickMetrics, ...]


def _switch_order(paths: Mapping[str, Path]) -> list[str]:
    graph: dict[str, set[str]] = {}
    seen: list[str] = []
    for fid in sorted(paths):
        hops = paths[fid].hops
        for i, h in enumerate(hops):
            graph.setdefault(h.switch, set())
            if h.switch not in seen:
                seen.append(h.switch)
            if i:
                graph[h.switch].add(hops[i - 1].switch)
    try:
        ts = graphlib.TopologicalSorter(graph)
        ts.prepare()
        order = []
        while ts.is_active():
            ready = sorted(ts.get_ready())
            order.extend(ready)
            ts.done(*ready)
        return order
    except graphlib.CycleError:
        # Back edges are fed the next tick.
        return seen


class Simulator:
    """Single-threaded fluid engine; one instance per run."""

    def __init__(self, fabric: Fabric, paths: Mapping[str, Path], tick_ms: int = DEFAULT_TICK_MS):
        if tick_ms <= 0:
            raise ValueError("tick_ms must be positive")
        self.fabric = fabric
        self.paths = dict(paths)
        self.tick_ms = int(tick_ms)
        self.dt = self.tick_ms / 1000.0
        self.order = _switch_order(self.paths)
        self.tick = 0
        # switch -> (port, queue) -> flow -> [backlog_mb, dscp, hop_index]
        self._backlog: dict[str, dict[tuple[str, int], dict[str, list]]] = defaultdict(dict)
        self._carry: dict[str, list[tuple[str, int, float, int | None]]] = defaultdict(list)
        self._policers: dict[tuple, TrTcmState] = {}
        self.last_arrivals: dict[tuple[str, str], dict[str, tuple[int | None, float]]] = {}

    def step(
        self,
        flows: Iterable[FlowSpec],
        policies: PolicySet = NO_POLICIES,
        *,
        markings: Mapping[str, int | None] | None = None,
        rewrites: Sequence[RewriteRule] = (),
    ) -> TickMetrics:
        dt = self.dt
        markings = markings or {}
        pending = self._carry
        self._carry = defaultdict(list)
        offered: dict[str, float] = defaultdict(float)
        delivered: dict[str, float] = defaultdict(float)
        dropped: dict[str, float] = defaultdict(float)
        delay: dict[str, float] = {}
        queues: dict[tuple[str, str, int], QueueTick] = {}
        arrivals_seen: dict[tuple[str, str], dict[str, tuple[int | None, float]]] = {}

        for f in flows:
            path = self.paths.get(f.id)
            if path is None:
                raise UnroutedFlow(f"flow {f.id} has no path")
            dscp = markings.get(f.id, f.dscp)
            pending[path.hops[0].switch].append((f.id, 0, f.demand_mbps, dscp))
            offered[f.id] += f.demand_mbps

        processed: set[str] = set()
        for sid in self.order:
            processed.add(sid)
            sw = self.fabric.switches[sid]
            merged: dict[tuple[str, int], list] = {}
            for fid, k, rate, dscp in pending.pop(sid, []):
                if rate <= 0:
                    continue
                if (fid, k) in merged:
                    merged[(fid, k)][2] += rate
                    merged[(fid, k)][3] = dscp
                else:
                    merged[(fid, k)] = [fid, k, rate, dscp]
            inputs = [tuple(v) for v in merged.values()]
            rules = list(rewrites) + list(sw.rewrites)

            # ingress policing of orchestrated flows
            protected: dict[str, float] = {}
            rates: dict[str, float] = {}
            by_port: dict[str, list[tuple[str, float]]] = defaultdict(list)
            for fid, k, rate, _ in inputs:
                in_port = self.paths[fid].hops[k].ingress_port
                if fid in policies.flows and (sid, in_port) in policies.ingress:
                    by_port[in_port].append((fid, rate))
                else:
                    rates[fid] = rates.get(fid, 0.0) + rate
            for in_port, members in by_port.items():
                cfg = policies.ingress[(sid, in_port)]
                if policies.per_flow:
                    for fid, rate in members:
                        st = self._policers.setdefault((sid, in_port, fid), cfg.new_state())
                        g, y, r = police_trtcm(cfg, st, rate, dt)
                        rates[fid] = g + y
                        protected[fid] = g + y
                        dropped[fid] += r
                else:
                    total = sum(r for _, r in members)
                    st = self._policers.setdefault((sid, in_port, "*"), cfg.new_state())
                    g, y, r = police_trtcm(cfg, st, total, dt)
                    for fid, rate in members:
                        share = rate / total if total > 0 else 0.0
                        rates[fid] = (g + y) * share
                        protected[fid] = (g + y) * share
                        dropped[fid] += r * share

            admitted = ingress_ring_admit(sw.ring_bandwidth_mbps, rates, protected)
            for fid, rate in rates.items():
                dropped[fid] += rate - admitted[fid]

            # classification into egress queues
            qin: dict[tuple[str, int], dict[str, list]] = defaultdict(dict)
            for fid, k, _, dscp in inputs:
                if fid not in admitted:
                    continue
                a = admitted.pop(fid)
                port = self.paths[fid].hops[k].egress_port
                q = sw.classify(dscp, port)
                qin[(port, q)][fid] = [a * dt, dscp, k]
                arrivals_seen.setdefault((sid, port), {})[fid] = (dscp, a)

            backlog = self._backlog[sid]
            ports = sorted({p for p, _ in qin} | {p for p, _ in backlog})
            for port in ports:
                keys = sorted({key for key in qin if key[0] == port} | {key for key in backlog if key[0] == port})
                demand = {}
                for key in keys:
                    vol = sum(v[0] for v in qin.get(key, {}).values())
                    vol += sum(v[0] for v in backlog.get(key, {}).values())
                    demand[key[1]] = vol / dt
                bw = sw.port(port).bandwidth_mbps
                policy = policies.egress.get((sid, port), sw.egress_policy)
                if policy == ROUND_ROBIN:
                    caps = {qc.queue: qc.capacity_mbps for qc in sw.port_queues(port)}
                    served = serve_round_robin(demand, caps, bw, (sw.default_queue(port),))
                else:
                    served = serve_strict(demand, bw)
                for key in keys:
                    self._serve_queue(sw, key, qin.get(key, {}), backlog, served[key[1]],
                                      rules, processed, pending, queues, delivered, dropped, delay)

        self.last_arrivals = arrivals_seen
        flow_ticks = {}
        for fid in sorted(self.paths):
            flow_ticks[fid] = FlowTick(
                offered_mbps=offered.get(fid, 0.0),
                delivered_mbps=delivered.get(fid, 0.0),
                dropped_mbps=dropped.get(fid, 0.0),
                delay_ms=delay.get(fid, math.nan),
            )
        rec = TickMetrics(
            time_s=self.tick * self.tick_ms / 1000.0,
            flows=flow_ticks,
            queues=dict(sorted(queues.items())),
        )
        self.tick += 1
        return rec

    def _serve_queue(self, sw, key, arriving, backlog, served_rate, rules, processed, pending,
                     queues, delivered, dropped, delay) -> None:
        dt = self.dt
        port, q = key
        held = backlog.get(key, {})
        start_mb = sum(v[0] for v in held.values())
        members: dict[str, list] = {fid: [v[0], v[1], v[2]] for fid, v in held.items()}
        arrived_mb = 0.0
        for fid, (a, dscp, k) in arriving.items():
            arrived_mb += a
            if fid in members:
                members[fid][0] += a
                members[fid][1] = dscp
            else:
                members[fid] = [a, dscp, k]
        total = sum(v[0] for v in members.values())
        out_mb = min(served_rate * dt, total)
        qc = sw.queue_config(port, q)
        buffer_mb = (qc.buffer_kb if qc else 512.0) / KB_PER_MB
        remaining = {}
        for fid, (vol, dscp, k) in members.items():
            share = out_mb * vol / total if total > 0 else 0.0
            remaining[fid] = vol - share
            if share > 0:
                self._emit(sw.id, port, fid, k, share / dt, dscp, rules, processed, pending, delivered)
        left = sum(remaining.values())
        drop_mb = 0.0
        if left > buffer_mb:
            excess = left - buffer_mb
            for fid in remaining:
                d = remaining[fid] * excess / left
                remaining[fid] -= d
                dropped[fid] += d / dt
                drop_mb += d
        new = {fid: [remaining[fid], members[fid][1], members[fid][2]]
               for fid in sorted(remaining) if remaining[fid] > 1e-12}
        end_mb = sum(v[0] for v in new.values())
        if new:
            backlog[key] = new
        else:
            backlog.pop(key, None)
        queues[(sw.id, port, q)] = QueueTick(
            arrived_mbps=arrived_mb / dt,
            served_mbps=out_mb / dt,
            dropped_mbps=drop_mb / dt,
            backlog_start_kb=start_mb * KB_PER_MB,
            backlog_kb=end_mb * KB_PER_MB,
        )
        if end_mb > 0:
            hop_delay = sw.latency_ms + end_mb / served_rate * 1000.0 if served_rate > 0 else math.inf
        else:
            hop_delay = sw.latency_ms
        for fid in members:
            prev = delay.get(fid, 0.0)
            d = prev + hop_delay
            delay[fid] = math.nan if math.isinf(d) else d

    def _emit(self, sid, port, fid, k, rate, dscp, rules, processed, pending, delivered) -> None:
        hops = self.paths[fid].hops
        out_dscp = apply_rewrites(rules, sid, port, dscp)
        if k + 1 == len(hops):
            delivered[fid] += rate
            return
        nxt = hops[k + 1].switch
        target = self._carry if nxt in processed else pending
        target[nxt].append((fid, k + 1, rate, out_dscp))


def simulate(
    fabric: Fabric,
    flows: Sequence[FlowSpec],
    policies: PolicySet = NO_POLICIES,
    duration_s: float = 120.0,
    tick_ms: int = DEFAULT_TICK_MS,
    seed: int = 0,
    *,
    paths: Mapping[str, Path] | None = None,
    markings: Mapping[str, int | None] | None = None,
    rewrites: Sequence[RewriteRule] = (),
) -> MetricsSeries:
    """Run a static-policy simulation and return one record per tick.

    The fluid engine itself draws no random numbers; ``seed`` is accepted
    so callers can thread one value through every stage.
    """
    del seed
    check_tick_alignment(flows, duration_s, tick_ms)
    if paths is None:
        from slicelan.orchestrator import discover_path

        paths = {
            f.id: discover_path(fabric, fabric.endpoint(f.src), fabric.endpoint(f.dst)) for f in flows
        }
    sim = Simulator(fabric, paths, tick_ms)
    n_ticks = round(duration_s * 1000) // tick_ms
    records = []
    for i in range(n_ticks):
        t_ms = i * tick_ms
        active = [f for f in flows if f.active_at_ms(t_ms)]
        records.append(sim.step(active, policies, markings=markings, rewrites=rewrites))
    return MetricsSeries(tick_ms=tick_ms, records=tuple(records))


def check_tick_alignment(flows: Iterable[FlowSpec], duration_s: float, tick_ms: int) -> None:
    bounds = [duration_s]
    for f in flows:
        for a, b in f.active_windows:
            bounds.extend((a, b))
    for t in bounds:
        ms = t * 1000
        if abs(ms - round(ms)) > 1e-6 or round(ms) % tick_ms:
            raise ValueError(f"tick of {tick_ms} ms does not divide boundary {t} s")
