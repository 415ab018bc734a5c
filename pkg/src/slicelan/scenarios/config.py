"""Scenario documents: flows, timing, telemetry and orchestrator settings."""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any, Mapping

from slicelan.errors import ParseError, UnknownEndpoint, WindowOutOfRange
from slicelan.fabric import Fabric, build_fabric
from slicelan.orchestrator import DEFAULT_HYSTERESIS, DEFAULT_MONITOR_PERIOD_S
from slicelan.telemetry import DEFAULT_PACKET_SIZE_B, DEFAULT_SAMPLING_N, DEFAULT_WINDOW_S
from slicelan.traffic import DEFAULT_TICK_MS, FlowSpec, check_tick_alignment


@dataclass(frozen=True)
class TelemetrySettings:
    n: int = DEFAULT_SAMPLING_N
    window_s: float = DEFAULT_WINDOW_S
    packet_size_b: int = DEFAULT_PACKET_SIZE_B
    refresh_s: float = DEFAULT_MONITOR_PERIOD_S


@dataclass(frozen=True)
class Scenario:
    fabric: Fabric
    flows: tuple[FlowSpec, ...]
    duration_s: float
    tick_ms: int = DEFAULT_TICK_MS
    seed: int = 0
    orchestrator_enabled: bool = True
    telemetry: TelemetrySettings = field(default_factory=TelemetrySettings)
    monitor_period_s: float = DEFAULT_MONITOR_PERIOD_S
    hysteresis: int = DEFAULT_HYSTERESIS
    per_flow_policing: bool = True
    windows: tuple[tuple[float, float], ...] = ()
    name: str = ""

    @property
    def n_ticks(self) -> int:
        return round(self.duration_s * 1000) // self.tick_ms


def expand_flows(docs: Any) -> list[dict[str, Any]]:
    """Expand ``count`` entries into numbered copies (``id-01`` ...)."""
    out = []
    for doc in docs:
        count = int(doc.get("count", 1))
        if count == 1 and "count" not in doc:
            out.append(dict(doc))
            continue
        width = len(str(count))
        for i in range(1, count + 1):
            copy = {k: v for k, v in doc.items() if k != "count"}
            copy["id"] = f"{doc['id']}-{i:0{width}d}"
            out.append(copy)
    return out


def parse_flow(doc: Mapping[str, Any], duration_s: float | None = None) -> FlowSpec:
    try:
        kind = str(doc.get("kind", "ran" if "gbr_mbps" in doc else "lan")).lower()
        gbr = doc.get("gbr_mbps")
        if kind == "ran" and gbr is None:
            raise ParseError(f"RAN flow {doc.get('id')} needs gbr_mbps")
        windows = doc.get("active_windows")
        if windows is None:
            if duration_s is None:
                raise ParseError(f"flow {doc.get('id')} has no active_windows")
            windows = [[0.0, duration_s]]
        dscp = doc.get("dscp")
        return FlowSpec(
            id=str(doc["id"]),
            src=str(doc["src"]),
            dst=str(doc["dst"]),
            demand_mbps=float(doc.get("demand_mbps", gbr if gbr is not None else 0.0)),
            dscp=None if dscp is None else int(dscp),
            gbr_mbps=float(gbr) if kind == "ran" else None,
            active_windows=tuple((float(a), float(b)) for a, b in windows),
        )
    except ParseError:
        raise
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad flow entry {dict(doc)!r}: {exc}") from exc


def parse_scenario(document: Mapping[str, Any] | str, topology: Mapping[str, Any] | Fabric | None = None) -> Scenario:
    """Validate a scenario document and resolve it against a topology.

    The topology comes from ``topology`` when given, else from the
    document's own ``topology`` key.
    """
    if isinstance(document, str):
        try:
            document = json.loads(document)
        except json.JSONDecodeError as exc:
            raise ParseError(f"scenario is not valid JSON: {exc}") from exc
    if not isinstance(document, Mapping):
        raise ParseError("scenario document must be an object")
    if topology is None:
        topology = document.get("topology")
        if topology is None:
            raise ParseError("no topology given")
    try:
        fabric = topology if isinstance(topology, Fabric) else build_fabric(topology)
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad topology: {exc}") from exc

    try:
        duration = float(document["duration_s"])
        tick_ms = int(document.get("tick_ms", DEFAULT_TICK_MS))
        seed = int(document.get("seed", 0))
        tdoc = document.get("telemetry", {})
        telemetry = TelemetrySettings(
            n=int(tdoc.get("n", DEFAULT_SAMPLING_N)),
            window_s=float(tdoc.get("window_s", DEFAULT_WINDOW_S)),
            packet_size_b=int(tdoc.get("packet_size_b", DEFAULT_PACKET_SIZE_B)),
            refresh_s=float(tdoc.get("refresh_s", document.get("monitor_period_s", DEFAULT_MONITOR_PERIOD_S))),
        )
    except (KeyError, TypeError, ValueError) as exc:
        raise ParseError(f"bad scenario header: {exc}") from exc
    if duration <= 0 or tick_ms <= 0:
        raise ParseError("duration_s and tick_ms must be positive")
    if telemetry.n < 1 or telemetry.window_s <= 0 or telemetry.refresh_s <= 0:
        raise ParseError("bad telemetry settings")

    flows = [parse_flow(f, duration) for f in expand_flows(document.get("flows", []))]
    ids = [f.id for f in flows]
    if len(set(ids)) != len(ids):
        raise ParseError("duplicate flow ids")
    for f in flows:
        for ep in (f.src, f.dst):
            if ep not in fabric.endpoints:
                raise UnknownEndpoint(f"flow {f.id}: unknown endpoint {ep!r}")
        for a, b in f.active_windows:
            if b > duration + 1e-9:
                raise WindowOutOfRange(f"flow {f.id}: window [{a}, {b}) exceeds duration {duration}")

    windows = tuple((float(a), float(b)) for a, b in document.get("windows", [[0.0, duration]]))
    for a, b in windows:
        if not 0 <= a < b <= duration + 1e-9:
            raise WindowOutOfRange(f"summary window [{a}, {b}) outside [0, {duration})")
    try:
        check_tick_alignment(flows, duration, tick_ms)
        check_tick_alignment([FlowSpec("w", "w", "w", 1.0, active_windows=windows)], duration, tick_ms)
    except ValueError as exc:
        raise ParseError(str(exc)) from exc

    monitor = float(document.get("monitor_period_s", DEFAULT_MONITOR_PERIOD_S))
    if monitor <= 0:
        raise ParseError("monitor_period_s must be positive")
    return Scenario(
        fabric=fabric,
        flows=tuple(flows),
        duration_s=duration,
        tick_ms=tick_ms,
        seed=seed,
        orchestrator_enabled=bool(document.get("orchestrator_enabled", True)),
        telemetry=telemetry,
        monitor_period_s=monitor,
        hysteresis=int(document.get("hysteresis", DEFAULT_HYSTERESIS)),
        per_flow_policing=str(document.get("policing", "per_flow")) != "aggregate",
        windows=windows,
        name=str(document.get("name", "")),
    )


def load_json(path: str) -> Any:
    try:
        with open(path, encoding="utf-8") as fh:
            return json.load(fh)
    except json.JSONDecodeError as exc:
        raise ParseError(f"{path}: {exc}") from exc

