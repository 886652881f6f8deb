"""Quantitative model of the contended receiver host.

Fluid-flow, tick-based: a memory bus with strict CPU-over-NIC priority, an
LLC/DDIO residency model (LRU over 4 KiB line groups) with write-update /
write-allocate accounting, a PCIe outbound-stall counter, an RNIC buffer with
PFC/ECN/CNP signaling, and a small DCQCN-style per-sender rate controller.
"""

from __future__ import annotations

from collections import OrderedDict
from dataclasses import dataclass, field

from .core import KIB, MIB, gbps

LINE_GROUP = 4 * KIB


@dataclass(frozen=True)
class NetworkPreset:
    name: str
    line_rate: int            # bytes/s (dual-port aggregate)
    bus_capacity: int         # bytes/s
    ddio_ways_bytes: int
    pcie_capacity: int        # bytes/s
    lossless: bool


PRESETS = {
    # Dual-port 25 Gbps, PCIe 3.0 x8, 60 GB/s bus, 4 MiB DDIO ways, PFC on.
    "Lossless25G": NetworkPreset("Lossless25G", gbps(50), 60 * 10**9,
                                 4 * MIB, 7_880_000_000, lossless=True),
    # Dual-port 100 Gbps, PCIe 4.0 x16, 250 GB/s bus, 6 MiB DDIO ways, PFC off.
    "Lossy100G": NetworkPreset("Lossy100G", gbps(200), 250 * 10**9,
                               6 * MIB, 31_500_000_000, lossless=False),
    # Dual-port 25 Gbps without PFC.
    "Lossy25G": NetworkPreset("Lossy25G", gbps(50), 60 * 10**9,
                              4 * MIB, 7_880_000_000, lossless=False),
}


class MemoryBus:
    """Bandwidth arbiter with strict CPU priority."""

    def __init__(self, capacity: int):
        self.capacity = capacity
        self.cpu_used_bytes = 0
        self.nic_used_bytes = 0

    def arbitrate(self, cpu_demand_bytes: int, dt_ns: int) -> tuple[int, int]:
        """Grant the CPU first; return (cpu_grant, nic_budget) in bytes."""
        cap_bytes = self.capacity * dt_ns // 1_000_000_000
        cpu_grant = min(cpu_demand_bytes, cap_bytes)
        return cpu_grant, cap_bytes - cpu_grant


class DdioModel:
    """LLC residency for I/O writes: LRU over 4 KiB line groups.

    A write to a resident group is an update (free); a non-resident group
    allocates, evicting the LRU victim once the ways are full.  Every evicted
    group is NIC-written data and costs its size in memory writeback.
    Reserved-region traffic (the receiver service's pool under way
    partitioning) never touches the ways and always updates.
    """

    def __init__(self, ways_bytes: int, reserved_bytes: int = 0):
        self.ways_groups = ways_bytes // LINE_GROUP
        self.reserved_bytes = reserved_bytes
        self._resident: OrderedDict[int, bool] = OrderedDict()
        self.hits = 0
        self.misses = 0
        self.writeback_bytes = 0
        self.pool_writes = 0      # reserved-region group writes
        self.pool_misses = 0      # stays 0 while the reservation holds
        self.escape_writes = 0    # pre-touched replacement buffers (resident)

    def write_reserved(self, groups: int = 1) -> None:
        self.pool_writes += groups

    def write_escape_resident(self, groups: int = 1) -> None:
        """Escape-supplied buffers are memory-backed but pre-touched and
        periodically re-touched, so they stay resident in the shared LLC and
        take updates without memory writeback."""
        self.escape_writes += groups

    def write_group(self, group: int, mem_budget: int) -> tuple[bool, int]:
        """Attempt one 4 KiB group write through the ways.

        Returns (committed, memory_bytes_used).  A miss that needs an eviction
        is refused (False) when the budget cannot cover the writeback; the
        caller retries next tick.
        """
        if group in self._resident:
            self._resident.move_to_end(group)
            self.hits += 1
            return True, 0
        if len(self._resident) < self.ways_groups:
            self._resident[group] = True
            self.misses += 1
            return True, 0
        if mem_budget < LINE_GROUP:
            return False, 0
        self._resident.popitem(last=False)
        self._resident[group] = True
        self.misses += 1
        self.writeback_bytes += LINE_GROUP
        return True, LINE_GROUP

    @property
    def miss_rate(self) -> float:
        total = self.hits + self.misses
        return self.misses / total if total else 0.0

    @property
    def pool_miss_rate(self) -> float:
        return self.pool_misses / self.pool_writes if self.pool_writes else 0.0


@dataclass
class RnicBufferConfig:
    capacity: int = 2 * MIB
    ecn_kmin: int = 256 * KIB
    ecn_kmax: int = 1 * MIB
    ecn_kmin_danger: int = 32 * KIB
    ecn_kmax_danger: int = 128 * KIB
    xoff: int = 1536 * KIB
    xon: int = 1 * MIB


class RnicBuffer:
    """On-NIC packet buffer with ECN marking and PFC pause/drop behavior."""

    def __init__(self, cfg: RnicBufferConfig, lossless: bool):
        self.cfg = cfg
        self.lossless = lossless
        self.occupancy = 0
        self.paused = False
        self.danger = False
        self.drops = 0              # bytes lost to overflow (lossy only)
        self.pfc_paused_ns = 0
        self.cnp_sent = 0

    def ingest(self, arriving: int) -> int:
        """Accept arriving bytes; in lossy mode the overflow is dropped.
        Returns the bytes accepted."""
        room = self.cfg.capacity - self.occupancy
        accepted = min(arriving, room)
        self.occupancy += accepted
        overflow = arriving - accepted
        if overflow > 0:
            if self.lossless:
                # PFC must have paused the link before this can happen.
                raise AssertionError("lossless overflow: PFC gate failed")
            self.drops += overflow
        return accepted

    def drain(self, amount: int) -> None:
        assert amount <= self.occupancy
        self.occupancy -= amount

    def update_pause(self, dt_ns: int) -> None:
        if not self.lossless:
            return
        if not self.paused and self.occupancy >= self.cfg.xoff:
            self.paused = True
        elif self.paused and self.occupancy <= self.cfg.xon:
            self.paused = False
        if self.paused:
            self.pfc_paused_ns += dt_ns

    def mark_probability(self) -> float:
        kmin = self.cfg.ecn_kmin_danger if self.danger else self.cfg.ecn_kmin
        kmax = self.cfg.ecn_kmax_danger if self.danger else self.cfg.ecn_kmax
        if self.occupancy <= kmin:
            return 0.0
        if self.occupancy >= kmax:
            return 1.0
        return (self.occupancy - kmin) / (kmax - kmin)


@dataclass
class DcqcnParams:
    gain: float = 1 / 16           # EWMA gain for the congestion estimate
    recovery_period_ns: int = 50_000
    alpha_update_period_ns: int = 55_000
    fast_recovery_rounds: int = 5
    additive_increase: int = gbps(2)
    min_rate: int = 0              # 0: line_rate // 1000 at construction
    cnp_interval_ns: int = 50_000  # per-sender CNP coalescing


class DcqcnSender:
    """One sender's DCQCN-style rate state: multiplicative decrease on CNP,
    timed fast recovery toward the pre-cut target, then additive increase."""

    def __init__(self, line_rate: int, params: DcqcnParams):
        self.line_rate = line_rate
        self.p = params
        self.min_rate = params.min_rate or max(1, line_rate // 1000)
        self.current_rate = line_rate
        self.target_rate = line_rate
        self.alpha_cc = 1.0
        self.rp_rounds = 0
        self.next_recovery = 0
        self.next_alpha_update = 0
        self.last_cnp = -10**18

    def on_cnp(self, now: int) -> None:
        self.alpha_cc = (1 - self.p.gain) * self.alpha_cc + self.p.gain
        self.target_rate = self.current_rate
        self.current_rate = max(self.min_rate,
                                int(self.current_rate * (1 - self.alpha_cc / 2)))
        self.rp_rounds = 0
        self.next_recovery = now + self.p.recovery_period_ns
        self.next_alpha_update = now + self.p.alpha_update_period_ns
        self.last_cnp = now

    def tick(self, now: int) -> None:
        if now >= self.next_alpha_update:
            self.alpha_cc *= 1 - self.p.gain
            self.next_alpha_update = now + self.p.alpha_update_period_ns
        if now >= self.next_recovery:
            if self.current_rate < self.line_rate:
                self.rp_rounds += 1
                if self.rp_rounds > self.p.fast_recovery_rounds:
                    self.target_rate = min(self.line_rate,
                                           self.target_rate + self.p.additive_increase)
                # round up so the rate reaches the target exactly
                self.current_rate = min(self.line_rate,
                                        (self.target_rate + self.current_rate + 1) // 2)
            self.next_recovery = now + self.p.recovery_period_ns


class PcieModel:
    def __init__(self, link_capacity: int):
        self.link_capacity = link_capacity
        self.stalled_writes = 0

    def budget(self, dt_ns: int) -> int:
        return self.link_capacity * dt_ns // 1_000_000_000


@dataclass
class CompetitorProfile:
    """Deterministic memory-bandwidth generator: reads and writes fixed-size
    chunks at a (possibly time-varying) frequency."""

    chunk_bytes: int = 128 * MIB
    frequency_hz: float = 0.0
    schedule: list[tuple[int, float]] = field(default_factory=list)  # (t_ns, hz)

    def frequency_at(self, now: int) -> float:
        if not self.schedule:
            return self.frequency_hz
        pts = self.schedule
        if now <= pts[0][0]:
            return pts[0][1]
        for (t0, f0), (t1, f1) in zip(pts, pts[1:]):
            if now <= t1:
                return f0 + (f1 - f0) * (now - t0) / (t1 - t0)
        return pts[-1][1]

    def demand_bps(self, now: int, bus_capacity: int) -> int:
        # 1:1 read/write ratio: each operation moves the chunk twice.
        raw = 2 * self.chunk_bytes * self.frequency_at(now)
        return min(round(raw), bus_capacity)

    @classmethod
    def saturating(cls, bus_capacity: int, chunk_bytes: int = 128 * MIB) -> "CompetitorProfile":
        return cls(chunk_bytes=chunk_bytes,
                   frequency_hz=bus_capacity / (2 * chunk_bytes))

    @classmethod
    def fraction(cls, bus_capacity: int, frac: float,
                 chunk_bytes: int = 128 * MIB) -> "CompetitorProfile":
        return cls(chunk_bytes=chunk_bytes,
                   frequency_hz=frac * bus_capacity / (2 * chunk_bytes))


class Host:
    """Bundle of the host-side models for one scenario run."""

    def __init__(self, preset: NetworkPreset, rnic_cfg: RnicBufferConfig,
                 competitor: CompetitorProfile, qp_count: int,
                 dcqcn: DcqcnParams | None = None,
                 reserved_llc_bytes: int = 0,
                 inject_copy_failure: bool = False):
        self.preset = preset
        self.bus = MemoryBus(preset.bus_capacity)
        self.ddio = DdioModel(preset.ddio_ways_bytes, reserved_llc_bytes)
        self.rnic = RnicBuffer(rnic_cfg, preset.lossless)
        self.pcie = PcieModel(preset.pcie_capacity)
        self.competitor = competitor
        self.dcqcn_params = dcqcn or DcqcnParams()
        self.senders = [DcqcnSender(preset.line_rate, self.dcqcn_params)
                        for _ in range(qp_count)]
        self._copy_charge_bytes = 0
        self._inject_copy_failure = inject_copy_failure

    # escape-controller hooks ------------------------------------------------

    def copy_allowed(self) -> bool:
        return not self._inject_copy_failure

    def charge_copy(self, charged_bytes: int, dt_ns: int) -> None:
        self._copy_charge_bytes += charged_bytes

    def take_copy_charge(self) -> int:
        charge, self._copy_charge_bytes = self._copy_charge_bytes, 0
        return charge

    def set_ecn_danger(self, on: bool) -> None:
        self.rnic.danger = on

    # aggregates ---------------------------------------------------------------

    def offered_rate(self) -> int:
        return min(sum(s.current_rate for s in self.senders),
                   self.preset.line_rate)
