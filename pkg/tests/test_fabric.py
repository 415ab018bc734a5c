import copy

import pytest
from hypothesis import given
from hypothesis import strategies as st

from slicelan.errors import DanglingLink, DuplicateSwitchId, FabricError, MappingGap, NoDefaultQueue, NoRoute, StaleArp
from slicelan.fabric import (
    L2MappingTable,
    L3MappingTable,
    RewriteRule,
    apply_rewrites,
    build_fabric,
    classify_l2,
    classify_l3,
    fabric_to_document,
    next_hop,
)
from slicelan.scenarios.presets import lanimpact_topology, motivation_topology


def test_default_l3_table_examples():
    t = L3MappingTable.default()
    assert classify_l3(t, 0) == 1
    assert classify_l3(t, 7) == 1
    assert classify_l3(t, 39) == 5
    assert classify_l3(t, 56) == 8
    assert classify_l3(t, 63) == 8


def test_default_l2_table_sends_low_dscp_to_cos1():
    t = L2MappingTable.default()
    assert t.cos(0) == 1 and classify_l2(t, 0) == 2
    assert t.cos(39) == 4 and classify_l2(t, 39) == 5
    assert L2MappingTable.standard().cos(0) == 0


@pytest.mark.parametrize("bad", [-1, 64, 1.5])
def test_classify_rejects_out_of_range(bad):
    with pytest.raises(ValueError):
        L3MappingTable.default().classify(bad)


def test_mapping_gap_and_overlap():
    with pytest.raises(MappingGap):
        L3MappingTable(((0, 62, 1),))
    with pytest.raises(FabricError):
        L3MappingTable(((0, 40, 1), (40, 63, 2)))
    with pytest.raises(MappingGap):
        L2MappingTable(((0, 63, 0),), ((0, 1),))


def test_rewrite_scope_and_unmarked():
    rules = [RewriteRule("S1", "p2", 39, 56), RewriteRule("S2", "p2", 39, 10)]
    assert apply_rewrites(rules, "S1", "p2", 39) == 56
    assert apply_rewrites(rules, "S1", "p1", 39) == 39
    assert apply_rewrites(rules, "S1", "p2", 40) == 40
    assert apply_rewrites(rules, "S1", "p2", None) is None


def test_capacity_pct_resolves_to_mbps():
    f = build_fabric(motivation_topology())
    caps = {qc.queue: qc.capacity_mbps for qc in f.switch("S1").port_queues("p2")}
    assert caps[8] == pytest.approx(350.0)
    assert caps[6] == pytest.approx(100.0)
    assert caps[1] == pytest.approx(300.0)
    assert f.switch("S1").default_queue("p2") == 2


def test_preset_classification_mismatch():
    f = build_fabric(motivation_topology())
    assert f.switch("S1").classify(39, "p2") == 6
    assert f.switch("S2").classify(39, "p2") == 5
    assert f.switch("S3").classify(39, "p2") == 1
    assert f.switch("S3").classify(None, "p2") == 2


def _doc():
    return copy.deepcopy(motivation_topology())


def test_duplicate_switch():
    d = _doc()
    d["switches"].append(copy.deepcopy(d["switches"][0]))
    with pytest.raises(DuplicateSwitchId):
        build_fabric(d)


def test_dangling_link():
    d = _doc()
    d["links"].append({"a": ["S1", "p9"], "b": ["S3", "p3"]})
    with pytest.raises(DanglingLink):
        build_fabric(d)


def test_no_default_queue():
    d = _doc()
    d["switches"][0]["queues"] = [{"queue": 1, "capacity_mbps": 100}]
    with pytest.raises(NoDefaultQueue):
        build_fabric(d)


def test_over_allocated_port():
    d = _doc()
    d["switches"][0]["queues"] = [{"queue": 1, "capacity_mbps": 800, "is_default": True},
                                  {"queue": 2, "capacity_mbps": 300}]
    with pytest.raises(FabricError):
        build_fabric(d)


def test_port_used_twice():
    d = _doc()
    d["links"].append({"a": ["S1", "p2"], "b": ["S3", "p3"]})
    with pytest.raises(FabricError):
        build_fabric(d)


def test_round_trip_presets():
    for doc in (motivation_topology(), lanimpact_topology()):
        f = build_fabric(doc)
        assert build_fabric(fabric_to_document(f)) == f


def test_next_hop_paths():
    f = build_fabric(motivation_topology())
    app = f.endpoint("app")
    nh = next_hop(f, "S1", app)
    assert nh.egress_port == "p2" and nh.neighbor.id == "S2"
    nh = next_hop(f, "S2", app)
    assert nh.egress_port == "p2" and nh.neighbor.id == "S3"


def test_next_hop_errors():
    d = _doc()
    d["switches"][0]["ip_table"] = {}
    f = build_fabric(d)
    with pytest.raises(NoRoute):
        next_hop(f, "S1", f.endpoint("app"))
    d = _doc()
    del d["switches"][0]["arp_table"]["10.0.12.2"]
    f = build_fabric(d)
    with pytest.raises(StaleArp):
        next_hop(f, "S1", f.endpoint("app"))


def _table(draw_bounds, labels):
    cuts = sorted(set(draw_bounds))
    starts = [0] + [c for c in cuts if 0 < c <= 63]
    starts = sorted(set(starts))
    ends = [s - 1 for s in starts[1:]] + [63]
    return tuple((a, b, labels[i % len(labels)]) for i, (a, b) in enumerate(zip(starts, ends)))


@given(st.lists(st.integers(1, 63), max_size=10), st.lists(st.integers(1, 8), min_size=1, max_size=8))
def test_l3_classification_total(cuts, queues):
    t = L3MappingTable(_table(cuts, queues))
    for d in range(64):
        assert t.classify(d) in range(1, 9)


@given(st.lists(st.integers(1, 63), max_size=10), st.lists(st.integers(0, 7), min_size=1, max_size=8),
       st.permutations(range(1, 9)))
def test_l2_classification_total(cuts, cos, perm):
    t = L2MappingTable(_table(cuts, cos), tuple(enumerate(perm)))
    for d in range(64):
        assert t.classify(d) == perm[t.cos(d)]


@given(st.sampled_from(["strict", "round_robin"]), st.floats(100, 4000), st.integers(1, 8),
       st.floats(0.0, 2.0), st.booleans())
def test_round_trip_random_switch(policy, ring, default_q, latency, standard):
    d = _doc()
    sw = d["switches"][2]
    sw["egress_policy"] = policy
    sw["ring_bandwidth_mbps"] = ring
    sw["latency_ms"] = latency
    sw["mapping"] = "standard" if standard else "default"
    sw["queues"] = {"*": [{"queue": q, "capacity_mbps": 50.0, "is_default": q == default_q} for q in range(1, 9)]}
    f = build_fabric(d)
    assert build_fabric(fabric_to_document(f)) == f
