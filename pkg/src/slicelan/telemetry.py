"""1-in-N packet sampling at egress interfaces and per-queue load estimates."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Mapping

import numpy as np

from slicelan.errors import UnknownInterface
from slicelan.fabric import Fabric, check_dscp

DEFAULT_SAMPLING_N = 100
DEFAULT_WINDOW_S = 10.0
DEFAULT_PACKET_SIZE_B = 1250


@dataclass(frozen=True)
class SampleSet:
    """Sampled packet counts per DSCP seen on one egress interface.

    Unmarked packets are counted separately in ``unmarked`` because the
    switch steers them to the default queue rather than through the DSCP
    table.
    """

    interface: tuple[str, str]
    n: int
    window_s: float
    counts: Mapping[int, int] = field(default_factory=dict)
    packet_size_b: int = DEFAULT_PACKET_SIZE_B
    unmarked: int = 0

    def __post_init__(self) -> None:
        if self.n < 1:
            raise ValueError("sampling ratio n must be >= 1")
        if self.window_s <= 0:
            raise ValueError("window_s must be positive")
        for d in self.counts:
            check_dscp(d)


@dataclass(frozen=True)
class QueueStatus:
    switch: str
    port: str
    queue: int
    capacity_mbps: float
    estimated_load_mbps: float

    @property
    def spare_mbps(self) -> float:
        return max(0.0, self.capacity_mbps - self.estimated_load_mbps)


def packets_in_window(rate_mbps: float, window_s: float, packet_size_b: int) -> int:
    return int(round(rate_mbps * 1e6 * window_s / (8 * packet_size_b)))


def sample_flows(
    rates: Mapping[int | None, float],
    n: int = DEFAULT_SAMPLING_N,
    window_s: float = DEFAULT_WINDOW_S,
    packet_size_b: int = DEFAULT_PACKET_SIZE_B,
    seed: int | np.random.SeedSequence | None = 0,
    interface: tuple[str, str] = ("", ""),
) -> SampleSet:
    """Sample each packet independently with probability ``1/n``.

    ``rates`` maps DSCP (``None`` for unmarked) to the true rate in Mbps
    over the window.
    """
    if n < 1:
        raise ValueError("sampling ratio n must be >= 1")
    if window_s <= 0:
        raise ValueError("window_s must be positive")
    rng = np.random.default_rng(seed)
    counts: dict[int, int] = {}
    unmarked = 0
    # Sorted draw order keeps results independent of dict insertion order.
    for dscp in sorted(rates, key=lambda d: -1 if d is None else d):
        packets = packets_in_window(rates[dscp], window_s, packet_size_b)
        k = packets if n == 1 else int(rng.binomial(packets, 1.0 / n)) if packets > 0 else 0
        if dscp is None:
            unmarked += k
        elif k:
            counts[check_dscp(dscp)] = k
    return SampleSet(interface, n, window_s, counts, packet_size_b, unmarked)


def estimated_rate_mbps(count: int, samples: SampleSet) -> float:
    return count * samples.n * samples.packet_size_b * 8 / samples.window_s / 1e6


def estimate_queue_load(samples: SampleSet, fabric: Fabric) -> list[QueueStatus]:
    """Scale sampled counts back to rates and attribute them to queues."""
    switch_id, port = samples.interface
    sw = fabric.switches.get(switch_id)
    if sw is None or port not in sw.queues:
        raise UnknownInterface(f"no egress interface {switch_id}:{port}")
    load = {qc.queue: 0.0 for qc in sw.port_queues(port)}
    for dscp, count in samples.counts.items():
        q = sw.classify(dscp, port)
        load[q] = load.get(q, 0.0) + estimated_rate_mbps(count, samples)
    if samples.unmarked:
        q = sw.default_queue(port)
        load[q] += estimated_rate_mbps(samples.unmarked, samples)
    return [
        QueueStatus(switch_id, port, qc.queue, qc.capacity_mbps, load.get(qc.queue, 0.0))
        for qc in sw.port_queues(port)
    ]
