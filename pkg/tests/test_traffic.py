import math

import pytest

from slicelan.errors import UnroutedFlow
from slicelan.fabric import build_fabric
from slicelan.orchestrator import discover_path
from slicelan.traffic import (
    FlowSpec,
    PolicySet,
    Simulator,
    TrTcmConfig,
    check_tick_alignment,
    ingress_ring_admit,
    police_trtcm,
    serve_round_robin,
    serve_strict,
    simulate,
)
from topogen import chain_document

DEFAULT_CAPS = {1: 300.0, 2: 50.0, 3: 50.0, 4: 50.0, 5: 50.0, 6: 100.0, 7: 50.0, 8: 350.0}


def test_flowspec_validation():
    with pytest.raises(ValueError):
        FlowSpec("f", "a", "b", 0.0)
    with pytest.raises(ValueError):
        FlowSpec("f", "a", "b", 1.0, dscp=64)
    f = FlowSpec("f", "a", "b", 1.0, active_windows=((1.0, 2.0),))
    assert not f.active_at_ms(999) and f.active_at_ms(1000) and not f.active_at_ms(2000)


def test_trtcm_first_tick_burst_then_steady():
    cfg = TrTcmConfig(6.0, 11.0)
    st = cfg.new_state()
    out = [police_trtcm(cfg, st, 20.0, 0.1) for _ in range(50)]
    # Oracle: after the bucket transient, green = cir, yellow = pir - cir, red = rest.
    g, y, r = out[-1]
    assert (g, y, r) == pytest.approx((6.0, 5.0, 9.0))
    assert sum(out[0]) == pytest.approx(20.0)


def test_trtcm_conforming_traffic_is_green():
    cfg = TrTcmConfig(6.0, 11.0)
    st = cfg.new_state()
    for _ in range(20):
        g, y, r = police_trtcm(cfg, st, 5.0, 0.1)
    assert (g, y, r) == pytest.approx((5.0, 0.0, 0.0))


def test_trtcm_config_validation():
    with pytest.raises(ValueError):
        TrTcmConfig(11.0, 6.0)
    with pytest.raises(ValueError):
        TrTcmConfig(1.0, 2.0, cbs_kb=0)


def test_ring_admit_cases():
    assert ingress_ring_admit(100, {"a": 30, "b": 40}) == {"a": 30, "b": 40}
    # 1165 offered into a 250 ring with no reservation: proportional share.
    got = ingress_ring_admit(250, {"ran": 40, "lan": 1125})
    assert got["ran"] == pytest.approx(40 * 250 / 1165)
    got = ingress_ring_admit(250, {"ran": 40, "lan": 1125}, {"ran": 40})
    assert got == pytest.approx({"ran": 40, "lan": 210})


def test_strict_scheduler_examples():
    assert serve_strict({8: 200, 6: 900, 2: 100}, 1000) == pytest.approx({8: 200, 6: 800, 2: 0})
    assert serve_strict({1: 10}, 1000) == {1: 10}


def test_round_robin_lan_impact_oracles():
    # q6 capped at its 100 Mbps share, best effort takes the remaining bandwidth.
    got = serve_round_robin({6: 1125, 2: 1500}, DEFAULT_CAPS, 1000, (2,))
    assert got == pytest.approx({6: 100, 2: 900})
    got = serve_round_robin({8: 40, 6: 1125, 2: 1500}, DEFAULT_CAPS, 1000, (2,))
    assert got == pytest.approx({8: 40, 6: 100, 2: 860})


def test_round_robin_redistributes_without_default_backlog():
    got = serve_round_robin({6: 1125, 8: 100}, DEFAULT_CAPS, 1000, (2,))
    assert got == pytest.approx({6: 900, 8: 100})


def _single_switch(policy="strict", ring=5000.0, queues=None):
    return build_fabric(chain_document(2, policy=policy, ring=ring, queues=queues))


def test_simulate_single_flow_delivery_and_delay():
    fab = _single_switch()
    f = FlowSpec("f", "h00", "h01", 100.0, dscp=10, active_windows=((0.0, 1.0),))
    series = simulate(fab, [f], duration_s=1.0)
    assert len(series.records) == 10
    last = series.records[-1].flows["f"]
    assert last.delivered_mbps == pytest.approx(100.0)
    assert last.dropped_mbps == 0.0
    assert last.delay_ms == pytest.approx(0.2)


def test_bottleneck_loss_and_backlog_delay():
    queues = [{"queue": q, "capacity_mbps": 100.0, "is_default": q == 1} for q in range(1, 9)]
    doc = chain_document(2, queues=queues)
    doc["switches"][0]["ports"] = [{"id": p["id"], "bandwidth_mbps": 800.0} for p in doc["switches"][0]["ports"]]
    fab = build_fabric(doc)
    f = FlowSpec("f", "h00", "h01", 1000.0, dscp=0, active_windows=((0.0, 5.0),))
    series = simulate(fab, [f], duration_s=5.0)
    tick = series.records[-1].flows["f"]
    assert tick.delivered_mbps == pytest.approx(800.0)
    assert tick.dropped_mbps == pytest.approx(200.0)
    # Oracle: a full 512 kB buffer drained at 800 Mbps adds 512/125/800 s.
    assert tick.delay_ms == pytest.approx(0.1 + 512 / 125 / 800 * 1000 + 0.1)


def test_unrouted_flow():
    fab = _single_switch()
    sim = Simulator(fab, {})
    with pytest.raises(UnroutedFlow):
        sim.step([FlowSpec("x", "h00", "h01", 1.0)])


def test_policies_protect_reserved_flow_on_ring():
    fab = _single_switch(ring=100.0)
    ran = FlowSpec("ran", "h00", "h01", 10.0, dscp=56, gbr_mbps=10.0)
    lan = FlowSpec("lan", "h00", "h01", 500.0, dscp=0)
    paths = {f.id: discover_path(fab, fab.endpoint("h00"), fab.endpoint("h01")) for f in (ran, lan)}
    base = simulate(fab, [ran, lan], duration_s=1.0, paths=paths)
    assert base.records[-1].flows["ran"].delivered_mbps < 10.0
    pol = PolicySet(ingress={("S00", "h"): TrTcmConfig(10.0, 10.0), ("S01", "to00"): TrTcmConfig(10.0, 10.0)},
                    flows=frozenset({"ran"}))
    prot = simulate(fab, [ran, lan], pol, duration_s=1.0, paths=paths)
    assert prot.records[-1].flows["ran"].delivered_mbps == pytest.approx(10.0)


def test_absent_flow_has_nan_delay():
    fab = _single_switch()
    f = FlowSpec("f", "h00", "h01", 10.0, active_windows=((0.5, 1.0),))
    series = simulate(fab, [f], duration_s=1.0)
    assert math.isnan(series.records[0].flows["f"].delay_ms)


def test_tick_alignment():
    with pytest.raises(ValueError):
        check_tick_alignment([FlowSpec("f", "a", "b", 1.0, active_windows=((0.05, 1.0),))], 1.0, 100)
    check_tick_alignment([FlowSpec("f", "a", "b", 1.0, active_windows=((0.5, 1.0),))], 1.0, 100)
