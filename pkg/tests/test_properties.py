"""Randomized invariants over the fabric, engine, policer and orchestrator."""
import math

from hypothesis import given
from hypothesis import strategies as st

from slicelan.fabric import L2MappingTable, L3MappingTable, build_fabric
from slicelan.orchestrator import (
    Admitted,
    Orchestrator,
    build_plan,
    compatibility_check,
    discover_path,
    feasibility_check,
    replay_plan,
)
from slicelan.scenarios.presets import motivation_topology
from slicelan.telemetry import QueueStatus, sample_flows
from slicelan.traffic import (
    KB_PER_MB,
    FlowSpec,
    TrTcmConfig,
    police_trtcm,
    serve_round_robin,
    serve_strict,
    simulate,
)
from topogen import chain_document

MOTIVATION = build_fabric(motivation_topology())
EPS = 1e-9

queue_ids = st.integers(1, 8)
demands = st.dictionaries(queue_ids, st.floats(0, 2000, allow_nan=False), min_size=1)
caps = st.fixed_dictionaries({q: st.floats(0, 125) for q in range(1, 9)})


@st.composite
def l3_tables(draw):
    cuts = sorted(set(draw(st.lists(st.integers(1, 63), max_size=9))))
    starts = [0] + cuts
    ends = [s - 1 for s in cuts] + [63]
    return L3MappingTable(tuple((a, b, draw(queue_ids)) for a, b in zip(starts, ends)))


@st.composite
def l2_tables(draw):
    cuts = sorted(set(draw(st.lists(st.integers(1, 63), max_size=9))))
    starts = [0] + cuts
    ends = [s - 1 for s in cuts] + [63]
    d2c = tuple((a, b, draw(st.integers(0, 7))) for a, b in zip(starts, ends))
    c2q = tuple((c, draw(queue_ids)) for c in range(8))
    return L2MappingTable(d2c, c2q)


@given(st.one_of(l3_tables(), l2_tables()))
def test_classification_totality(table):
    for d in range(64):
        q = table.classify(d)
        assert isinstance(q, int) and 1 <= q <= 8


@given(demands, st.floats(1, 2000))
def test_strict_capacity_work_conservation_and_dominance(dem, bw):
    served = serve_strict(dem, bw)
    total = sum(served.values())
    assert total <= bw + EPS
    if sum(dem.values()) >= bw:
        assert math.isclose(total, bw, rel_tol=1e-9)
    for q, s in served.items():
        assert s <= dem[q] + EPS
        if s > EPS:
            assert all(served[h] >= dem[h] - 1e-7 for h in dem if h > q)


@given(demands, caps, st.floats(1, 2000), st.sampled_from([(), (1,), (2,)]))
def test_round_robin_capacity_and_work_conservation(dem, cap, bw, default):
    served = serve_round_robin(dem, cap, bw, default)
    total = sum(served.values())
    assert total <= bw * (1 + 1e-9)
    for q, s in served.items():
        assert -EPS <= s <= dem[q] + 1e-7
    if sum(dem.values()) >= bw:
        assert math.isclose(total, bw, rel_tol=1e-7)
    else:
        assert math.isclose(total, sum(dem.values()), rel_tol=1e-7, abs_tol=1e-7)


@given(st.floats(0.5, 50), st.floats(0, 50), st.lists(st.floats(0, 100), min_size=1, max_size=200),
       st.floats(1, 256), st.floats(1, 256), st.sampled_from([1, 10, 100]))
def test_trtcm_bounds(cir, extra, offered, cbs, pbs, tick_ms):
    cfg = TrTcmConfig(cir, cir + extra, cbs, pbs)
    state = cfg.new_state()
    dt = tick_ms / 1000
    green = yellow = 0.0
    for i, rate in enumerate(offered, start=1):
        g, y, r = police_trtcm(cfg, state, rate, dt)
        assert min(g, y, r) >= -EPS and math.isclose(g + y + r, rate, abs_tol=1e-9)
        green += g * dt
        yellow += y * dt
        window = i * dt
        assert green <= cir * window + cbs / KB_PER_MB + 1e-9
        assert green + yellow <= (cir + extra) * window + pbs / KB_PER_MB + 1e-9


flow_sets = st.lists(
    st.tuples(st.floats(1, 900), st.one_of(st.none(), st.integers(0, 63)), st.integers(0, 9), st.integers(1, 10)),
    min_size=1, max_size=6,
)


def _random_run(flows, n_sw, policy, ring):
    fab = build_fabric(chain_document(n_sw, policy=policy, ring=ring))
    specs = [FlowSpec(f"f{i}", "h00", f"h{n_sw - 1:02d}", rate, dscp=d,
                      active_windows=((start / 10, min(1.0, (start + length) / 10)),))
             for i, (rate, d, start, length) in enumerate(flows)]
    return fab, specs, simulate(fab, specs, duration_s=1.0)


@given(flow_sets, st.integers(2, 3), st.sampled_from(["strict", "round_robin"]), st.floats(200, 5000))
def test_conservation_per_queue_per_tick(flows, n_sw, policy, ring):
    fab, _, series = _random_run(flows, n_sw, policy, ring)
    dt = series.tick_ms / 1000
    for rec in series.records:
        for (sw, port, q), qt in rec.queues.items():
            lhs = qt.arrived_mbps * dt * KB_PER_MB + qt.backlog_start_kb
            rhs = (qt.served_mbps + qt.dropped_mbps) * dt * KB_PER_MB + qt.backlog_kb
            assert math.isclose(lhs, rhs, rel_tol=1e-9, abs_tol=1e-6)
            assert qt.backlog_kb <= fab.switch(sw).queue_config(port, q).buffer_kb + 1e-6


@given(flow_sets, st.integers(2, 3), st.sampled_from(["strict", "round_robin"]))
def test_determinism(flows, n_sw, policy):
    a = _random_run(flows, n_sw, policy, 800.0)[2]
    b = _random_run(flows, n_sw, policy, 800.0)[2]
    assert repr(a) == repr(b)


def _statuses(fabric, path, loads):
    out = {}
    for k, hop in enumerate(path.hops):
        sw = fabric.switch(hop.switch)
        out[(hop.switch, hop.egress_port)] = [
            QueueStatus(hop.switch, hop.egress_port, qc.queue, qc.capacity_mbps,
                        loads[(k * 8 + qc.queue - 1) % len(loads)] * qc.capacity_mbps)
            for qc in sw.port_queues(hop.egress_port)
        ]
    return out


@given(st.lists(st.floats(0, 1.2), min_size=1, max_size=24), st.floats(1, 120))
def test_rewrite_coherence(loads, gbr):
    path = discover_path(MOTIVATION, MOTIVATION.endpoint("ran"), MOTIVATION.endpoint("app"))
    res = feasibility_check(MOTIVATION, path, gbr, _statuses(MOTIVATION, path, loads))
    if not isinstance(res, list):
        return
    plan = build_plan(path, res, compatibility_check(res), MOTIVATION)
    seen = replay_plan(plan, path)
    assert seen == [c.chosen_dscp for c in plan.choices]
    for hop, c, d in zip(path.hops, plan.choices, seen):
        assert MOTIVATION.switch(hop.switch).classify(d, hop.egress_port) == c.queue


@given(st.dictionaries(st.sampled_from([0, 8, 39, 48, 56, None]), st.floats(0, 400), max_size=4),
       st.lists(st.sampled_from([6.0, 11.0, 40.0]), min_size=1, max_size=5))
def test_monitor_idempotent_under_static_load(rates, gbrs):
    snap = {iface: sample_flows(rates, n=1, interface=iface) for iface in (("S1", "p2"), ("S2", "p2"), ("S3", "p2"))}
    orch = Orchestrator(MOTIVATION)
    for i, g in enumerate(gbrs):
        res = orch.admit(FlowSpec(f"r{i}", "ran", "app", g, dscp=39, gbr_mbps=g), snap)
        if isinstance(res, Admitted):
            assert replay_plan(res.plan, res.path, MOTIVATION.switch("S1").rewrites) == \
                [c.chosen_dscp for c in res.plan.choices]
    before = (orch.markings(), orch.rewrites(), orch.policies())
    for _ in range(3):
        assert orch.monitor(snap) == []
    assert (orch.markings(), orch.rewrites(), orch.policies()) == before
