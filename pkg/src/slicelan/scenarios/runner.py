"""Drive a scenario tick by tick, with the orchestrator in the loop."""
from __future__ import annotations

import math
import time
from collections import deque
from dataclasses import dataclass
from typing import Iterable

import numpy as np

from slicelan.orchestrator import Orchestrator, Snapshot, discover_path
from slicelan.scenarios.config import Scenario
from slicelan.telemetry import SampleSet, sample_flows
from slicelan.traffic import NO_POLICIES, MetricsSeries, Simulator


@dataclass(frozen=True)
class WindowRow:
    window: int
    flow_id: str
    throughput_mbps: float
    loss_fraction: float
    delay_ms: float


@dataclass(frozen=True)
class WindowSummary:
    rows: tuple[WindowRow, ...]

    def get(self, window: int, flow_id: str) -> WindowRow:
        for r in self.rows:
            if r.window == window and r.flow_id == flow_id:
                return r
        raise KeyError((window, flow_id))

    def for_window(self, window: int, flow_ids: Iterable[str] | None = None) -> list[WindowRow]:
        wanted = None if flow_ids is None else set(flow_ids)
        return [r for r in self.rows if r.window == window and (wanted is None or r.flow_id in wanted)]


@dataclass(frozen=True)
class RunResult:
    series: MetricsSeries
    summary: WindowSummary
    orchestrator: Orchestrator | None
    wall_s: float


class _Telemetry:
    """Rolling per-interface arrival history, sampled on demand."""

    def __init__(self, scenario: Scenario, dt_s: float):
        self.s = scenario.telemetry
        self.seed = scenario.seed
        self.history: deque = deque(maxlen=max(1, round(self.s.window_s / dt_s)))

    def record(self, arrivals) -> None:
        self.history.append(arrivals)

    def snapshot(self, tick: int, exclude: set[str]) -> Snapshot:
        span = self.history.maxlen
        totals: dict[tuple[str, str], dict[int | None, float]] = {}
        for arrivals in self.history:
            for iface, per_flow in arrivals.items():
                rates = totals.setdefault(iface, {})
                for fid, (dscp, rate) in per_flow.items():
                    if fid not in exclude:
                        rates[dscp] = rates.get(dscp, 0.0) + rate / span
        out = {}
        for idx, iface in enumerate(sorted(totals)):
            ss = np.random.SeedSequence([self.seed, tick, idx])
            out[iface] = sample_flows(totals[iface], self.s.n, self.s.window_s, self.s.packet_size_b,
                                      seed=ss, interface=iface)
        return out


def _every(period_s: float, tick_ms: int) -> int:
    return max(1, round(period_s * 1000 / tick_ms))


def run_experiment(scenario: Scenario) -> RunResult:
    t0 = time.perf_counter()
    fabric = scenario.fabric
    flows = scenario.flows
    paths = {f.id: discover_path(fabric, fabric.endpoint(f.src), fabric.endpoint(f.dst)) for f in flows}
    sim = Simulator(fabric, paths, scenario.tick_ms)
    orch = None
    if scenario.orchestrator_enabled:
        orch = Orchestrator(fabric, per_flow_policing=scenario.per_flow_policing, hysteresis=scenario.hysteresis)
    telemetry = _Telemetry(scenario, sim.dt)
    monitor_every = _every(scenario.monitor_period_s, scenario.tick_ms)
    refresh_every = _every(scenario.telemetry.refresh_s, scenario.tick_ms)

    seen: set[str] = set()
    policies, markings, rewrites = NO_POLICIES, {}, ()
    snapshot: Snapshot = {}
    records = []
    for tick in range(scenario.n_ticks):
        t_ms = tick * scenario.tick_ms
        active = [f for f in flows if f.active_at_ms(t_ms)]
        if orch is not None:
            changed = False
            if tick and tick % refresh_every == 0:
                snapshot = telemetry.snapshot(tick, set(orch.admitted))
            if tick and tick % monitor_every == 0 and orch.admitted:
                changed |= bool(orch.monitor(snapshot))
            for f in active:
                if f.is_ran and f.id not in seen:
                    seen.add(f.id)
                    fresh = telemetry.snapshot(tick, set(orch.admitted) | {f.id})
                    orch.admit(f, fresh)
                    changed = True
            if changed:
                policies, markings, rewrites = orch.policies(), orch.markings(), orch.rewrites()
        records.append(sim.step(active, policies, markings=markings, rewrites=rewrites))
        telemetry.record(sim.last_arrivals)

    series = MetricsSeries(scenario.tick_ms, tuple(records))
    summary = summarize(series, scenario)
    return RunResult(series, summary, orch, time.perf_counter() - t0)


def summarize(series: MetricsSeries, scenario: Scenario) -> WindowSummary:
    """Per-window throughput (mean over the flow's active ticks), loss and
    mean delay for every flow active in the window."""
    tick_ms = series.tick_ms
    rows = []
    for w, (a, b) in enumerate(scenario.windows, start=1):
        lo, hi = round(a * 1000) // tick_ms, round(b * 1000) // tick_ms
        for f in sorted(scenario.flows, key=lambda f: f.id):
            ticks = [series.records[i].flows[f.id] for i in range(lo, min(hi, len(series.records)))
                     if f.active_at_ms(i * tick_ms)]
            if not ticks:
                continue
            offered = sum(t.offered_mbps for t in ticks)
            dropped = sum(t.dropped_mbps for t in ticks)
            delays = [t.delay_ms for t in ticks if not math.isnan(t.delay_ms)]
            rows.append(WindowRow(
                window=w,
                flow_id=f.id,
                throughput_mbps=sum(t.delivered_mbps for t in ticks) / len(ticks),
                loss_fraction=min(1.0, max(0.0, dropped / offered)) if offered > 0 else 0.0,
                delay_ms=sum(delays) / len(delays) if delays else math.nan,
            ))
    return WindowSummary(tuple(rows))
