"""Bundled experiment presets: a three-switch enterprise chain and a single gateway.

Topology: the RAN trunk enters gateway S1 (L3), which feeds S2 (L3), which
feeds the access switch S3 (L2) hosting the analytics application.  All
ports are 1 Gbps and carry eight egress queues (q1 30%, q2 best effort,
q6 100 Mbps, q8 35%).

Modelling choices that are not measured values:

* Internal ring capacities (S1 2000, S2 250, S3 1100 Mbps) are picked so
  that ring oversubscription, not port bandwidth, is what cuts the RAN
  flows when LAN traffic arrives.
* S1's DSCP table sends 38-47 to q6, so DSCP 39 lands in the 100 Mbps
  queue.  S3's DSCP->CoS table maps 32-39 (and 8-15) to CoS 0, i.e. q1,
  while unmarked traffic goes to the default queue q2.
* Unmarked LAN flows are 20 Mbps each: 75 of them make up the 1500 Mbps
  best-effort aggregate.  The per-flow rate itself is an inference.
"""
from __future__ import annotations

import copy
from typing import Any

from slicelan.fabric import default_queue_set
from slicelan.scenarios.config import Scenario, parse_scenario

RAN_GBRS = (6.0, 6.0, 11.0, 6.0, 11.0)
RAN_DSCP = 39
LAN_FLOWS_PER_GROUP = 75
MARKED_LAN_MBPS = 15.0
UNMARKED_LAN_MBPS = 20.0
WINDOW_S = 30.0

MAC = {
    "S1": "00:00:5e:00:01:01",
    "S2": "00:00:5e:00:01:02",
    "S3": "00:00:5e:00:01:03",
    "ran": "02:00:00:00:0a:0a",
    "lan_marked": "02:00:00:00:01:0a",
    "lan_unmarked": "02:00:00:00:14:3c",
    "app": "02:00:00:00:14:32",
}
IP = {
    "ran": "10.10.0.10",
    "lan_marked": "10.1.0.10",
    "lan_unmarked": "10.20.0.60",
    "app": "10.20.0.50",
    "S1": "10.0.12.1",
    "S2": "10.0.12.2",
}

S1_TABLE = {"type": "l3", "entries": [
    [0, 7, 1], [8, 15, 2], [16, 23, 3], [24, 31, 4], [32, 37, 5], [38, 47, 6], [48, 55, 7], [56, 63, 8],
]}
S3_TABLE = {
    "type": "l2",
    "dscp_to_cos": [[0, 7, 1], [8, 15, 0], [16, 23, 2], [24, 31, 3], [32, 39, 0],
                    [40, 47, 5], [48, 55, 6], [56, 63, 7]],
    "cos_to_queue": {str(c): c + 1 for c in range(8)},
}


def _ports(*ids: str) -> list[dict[str, Any]]:
    return [{"id": p, "bandwidth_mbps": 1000.0} for p in ids]


def motivation_topology() -> dict[str, Any]:
    """Three-switch chain used by the motivation experiment."""
    return {
        "switches": [
            {
                "id": "S1", "layer": "L3", "ip": IP["S1"], "mac": MAC["S1"],
                "subnets": ["10.10.0.0/24", "10.1.0.0/24", "10.0.12.0/24"],
                "ports": _ports("p1", "p2", "p3"),
                "queues": default_queue_set(),
                "mapping": S1_TABLE,
                "ring_bandwidth_mbps": 2000.0,
                "egress_policy": "strict",
                "mac_table": {MAC["ran"]: "p1", MAC["S2"]: "p2", MAC["lan_marked"]: "p3"},
                "arp_table": {IP["ran"]: MAC["ran"], IP["lan_marked"]: MAC["lan_marked"], IP["S2"]: MAC["S2"]},
                "ip_table": {"10.20.0.0/24": IP["S2"]},
            },
            {
                "id": "S2", "layer": "L3", "ip": IP["S2"], "mac": MAC["S2"],
                "subnets": ["10.0.12.0/24", "10.20.0.0/24"],
                "ports": _ports("p1", "p2"),
                "queues": default_queue_set(),
                "mapping": "default",
                "ring_bandwidth_mbps": 250.0,
                "egress_policy": "strict",
                "mac_table": {MAC["S1"]: "p1", MAC["app"]: "p2", MAC["lan_unmarked"]: "p2"},
                "arp_table": {IP["S1"]: MAC["S1"], IP["app"]: MAC["app"], IP["lan_unmarked"]: MAC["lan_unmarked"]},
                "ip_table": {"10.10.0.0/24": IP["S1"], "10.1.0.0/24": IP["S1"]},
            },
            {
                "id": "S3", "layer": "L2", "mac": MAC["S3"],
                "ports": _ports("p1", "p2", "p3"),
                "queues": default_queue_set(),
                "mapping": S3_TABLE,
                "ring_bandwidth_mbps": 1100.0,
                "egress_policy": "strict",
                "mac_table": {MAC["S2"]: "p1", MAC["app"]: "p2", MAC["lan_unmarked"]: "p3"},
            },
        ],
        "links": [
            {"a": ["S1", "p2"], "b": ["S2", "p1"]},
            {"a": ["S2", "p2"], "b": ["S3", "p1"]},
        ],
        "endpoints": [
            {"id": "ran", "ip": IP["ran"], "subnet": "10.10.0.0/24", "mac": MAC["ran"],
             "attached_switch": "S1", "attached_port": "p1"},
            {"id": "lan-marked-srv", "ip": IP["lan_marked"], "subnet": "10.1.0.0/24", "mac": MAC["lan_marked"],
             "attached_switch": "S1", "attached_port": "p3"},
            {"id": "lan-unmarked-srv", "ip": IP["lan_unmarked"], "subnet": "10.20.0.0/24",
             "mac": MAC["lan_unmarked"], "attached_switch": "S3", "attached_port": "p3"},
            {"id": "app", "ip": IP["app"], "subnet": "10.20.0.0/24", "mac": MAC["app"],
             "attached_switch": "S3", "attached_port": "p2"},
        ],
    }


def ran_flows(windows: list[list[float]]) -> list[dict[str, Any]]:
    return [
        {"id": f"ran-{i}", "kind": "ran", "src": "ran", "dst": "app", "gbr_mbps": g,
         "demand_mbps": g, "dscp": RAN_DSCP, "active_windows": windows}
        for i, g in enumerate(RAN_GBRS, start=1)
    ]


def motivation_document(orchestrator_enabled: bool = True) -> dict[str, Any]:
    """120 s in four 30 s windows: RAN alone, +75 DSCP-39 LAN flows,
    +75 unmarked LAN flows, LAN flows removed."""
    w = WINDOW_S
    flows = ran_flows([[0.0, 4 * w]])
    flows.append({"id": "lan-marked", "count": LAN_FLOWS_PER_GROUP, "kind": "lan",
                  "src": "lan-marked-srv", "dst": "app", "demand_mbps": MARKED_LAN_MBPS,
                  "dscp": RAN_DSCP, "active_windows": [[w, 3 * w]]})
    flows.append({"id": "lan-unmarked", "count": LAN_FLOWS_PER_GROUP, "kind": "lan",
                  "src": "lan-unmarked-srv", "dst": "app", "demand_mbps": UNMARKED_LAN_MBPS,
                  "dscp": None, "active_windows": [[2 * w, 3 * w]]})
    return {
        "name": "motivation",
        "topology": motivation_topology(),
        "duration_s": 4 * w,
        "tick_ms": 100,
        "seed": 0,
        "orchestrator_enabled": orchestrator_enabled,
        "windows": [[i * w, (i + 1) * w] for i in range(4)],
        "flows": flows,
    }


def lanimpact_topology() -> dict[str, Any]:
    """Gateway S1 alone, already draining round-robin, with the application
    behind p2 and both LAN server groups on their own ports."""
    return {
        "switches": [{
            "id": "S1", "layer": "L3", "ip": IP["S1"], "mac": MAC["S1"],
            "subnets": ["10.10.0.0/24", "10.1.0.0/24", "10.20.0.0/24"],
            "ports": _ports("p1", "p2", "p3", "p4"),
            "queues": default_queue_set(),
            "mapping": S1_TABLE,
            "ring_bandwidth_mbps": 4000.0,
            "egress_policy": "round_robin",
            "mac_table": {MAC["ran"]: "p1", MAC["app"]: "p2", MAC["lan_marked"]: "p3", MAC["lan_unmarked"]: "p4"},
            "arp_table": {IP["ran"]: MAC["ran"], IP["app"]: MAC["app"], IP["lan_marked"]: MAC["lan_marked"],
                          IP["lan_unmarked"]: MAC["lan_unmarked"]},
        }],
        "links": [],
        "endpoints": [
            {"id": "ran", "ip": IP["ran"], "subnet": "10.10.0.0/24", "mac": MAC["ran"],
             "attached_switch": "S1", "attached_port": "p1"},
            {"id": "app", "ip": IP["app"], "subnet": "10.20.0.0/24", "mac": MAC["app"],
             "attached_switch": "S1", "attached_port": "p2"},
            {"id": "lan-marked-srv", "ip": IP["lan_marked"], "subnet": "10.1.0.0/24", "mac": MAC["lan_marked"],
             "attached_switch": "S1", "attached_port": "p3"},
            {"id": "lan-unmarked-srv", "ip": IP["lan_unmarked"], "subnet": "10.20.0.0/24",
             "mac": MAC["lan_unmarked"], "attached_switch": "S1", "attached_port": "p4"},
        ],
    }


def lanimpact_document(orchestrator_enabled: bool = True) -> dict[str, Any]:
    """Both LAN groups for 60 s; the five RAN flows join for the second 30 s."""
    w = WINDOW_S
    flows = ran_flows([[w, 2 * w]])
    flows.append({"id": "lan-marked", "count": LAN_FLOWS_PER_GROUP, "kind": "lan",
                  "src": "lan-marked-srv", "dst": "app", "demand_mbps": MARKED_LAN_MBPS,
                  "dscp": RAN_DSCP, "active_windows": [[0.0, 2 * w]]})
    flows.append({"id": "lan-unmarked", "count": LAN_FLOWS_PER_GROUP, "kind": "lan",
                  "src": "lan-unmarked-srv", "dst": "app", "demand_mbps": UNMARKED_LAN_MBPS,
                  "dscp": None, "active_windows": [[0.0, 2 * w]]})
    return {
        "name": "lanimpact",
        "topology": lanimpact_topology(),
        "duration_s": 2 * w,
        "tick_ms": 100,
        "seed": 0,
        "orchestrator_enabled": orchestrator_enabled,
        "windows": [[0.0, w], [w, 2 * w]],
        "flows": flows,
    }


PRESETS = {"motivation": motivation_document, "lanimpact": lanimpact_document}


def preset_document(name: str, orchestrator_enabled: bool = True) -> dict[str, Any]:
    try:
        build = PRESETS[name]
    except KeyError:
        raise KeyError(f"unknown preset {name!r}; choose from {sorted(PRESETS)}") from None
    return copy.deepcopy(build(orchestrator_enabled))


def motivation_preset(orchestrator_enabled: bool = True) -> Scenario:
    return parse_scenario(motivation_document(orchestrator_enabled))


def lanimpact_preset(orchestrator_enabled: bool = True) -> Scenario:
    return parse_scenario(lanimpact_document(orchestrator_enabled))
