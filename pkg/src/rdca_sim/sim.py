"""Deterministic engine binding the pool, flow control, recycle, escape and
host models into runnable scenarios.

The engine is a fluid-flow tick loop (default 1 us) with a discrete event
queue for workload arrivals and delayed releases.  Randomness is confined to
arrival jitter and ECN marking and is fully seeded: identical scenarios yield
byte-identical metric streams.
"""

from __future__ import annotations

import heapq
import random
from dataclasses import dataclass, field, replace
from enum import Enum

from .core import (KIB, ConfigError, IdFactory, MsgKind, NoWqe, make_message)
from .cache_pool import Pool, PoolConfig, Region
from . import flow_control as fc
from .flow_control import AdmissionQueues, FlowWindows, Qos
from .recycle import Pipeline, ProcessingModel, Registries, NotifyRing, Slice
from .escape import (ActionKind, EscapeConfig, EscapeState, escape_step,
                     pump_copies)
from .hostnet import (CompetitorProfile, DcqcnParams, Host, LINE_GROUP,
                      PRESETS, RnicBufferConfig)


class Mode(Enum):
    BASELINE_DDIO = "BaselineDdio"
    JET = "Jet"


@dataclass(frozen=True)
class SlowAppConfig:
    """Inject a slowly-releasing application: a fraction of its buffers are
    held well past the straggler threshold before release."""
    app: int = 0
    fraction: float = 0.8
    hold_ns: int = 5_000_000


@dataclass(frozen=True)
class Scenario:
    mode: Mode = Mode.JET
    network: str = "Lossy100G"
    qp_count: int = 32
    msg_size: int = 256 * KIB
    io_depth: int = 1
    duration_ns: int = 20_000_000
    seed: int = 0
    tick_ns: int = 1_000
    sample_interval_ns: int = 100_000
    competitor_intensity: float = 0.0
    competitor: CompetitorProfile | None = None
    qos_low_fraction: float = 0.0
    small_msg_rate: float = 0.0          # extra small SEND arrivals per second
    small_msg_size: int = 4 * KIB
    slow_app: SlowAppConfig | None = None
    inject_copy_failure: bool = False
    warmup_fraction: float = 0.05
    pool: PoolConfig = field(default_factory=PoolConfig)
    concurrency_limit: int = fc.DEFAULT_CONCURRENCY_LIMIT
    inflight_limit: int = fc.DEFAULT_INFLIGHT_LIMIT
    fragment_max: int = fc.FRAGMENT_MAX
    processing: ProcessingModel = field(default_factory=ProcessingModel)
    escape: EscapeConfig = field(default_factory=EscapeConfig)
    rnic: RnicBufferConfig = field(default_factory=RnicBufferConfig)
    dcqcn: DcqcnParams = field(default_factory=DcqcnParams)

    def validate(self) -> None:
        if self.network not in PRESETS:
            raise ConfigError(f"unknown network preset {self.network!r}")
        if self.qp_count <= 0 or self.io_depth <= 0:
            raise ConfigError("qp_count and io_depth must be positive")
        if self.msg_size <= 0:
            raise ConfigError("msg_size must be positive")
        if self.tick_ns <= 0 or self.duration_ns < 0:
            raise ConfigError("bad time parameters")
        if self.sample_interval_ns % self.tick_ns != 0:
            raise ConfigError("sample_interval_ns must be a multiple of tick_ns")
        if not 0.0 <= self.competitor_intensity <= 1.0:
            raise ConfigError("competitor_intensity must be in [0, 1]")
        if not 0.0 <= self.warmup_fraction < 1.0:
            raise ConfigError("warmup_fraction must be in [0, 1)")
        self.pool.validate()
        self.escape.validate()


# CSV schema: fixed column set and order; golden-tested.
COLUMNS = [
    "time_ns",
    "free_srq_bytes", "free_read_bytes", "live_bytes", "replacement_bytes",
    "queued_high", "queued_low", "concurrency_in_use", "inflight_used_bytes",
    "admit_count", "blocked_count",
    "avg_post_rnic_us", "p99_post_rnic_us", "stragglers_total", "releases_per_tick",
    "escape_actions", "replace_mem_bytes", "copy_bytes", "ecn_lowered_flag",
    "net_throughput_gbps", "goodput_gbps", "avg_lat_us", "p99_lat_us",
    "pfc_paused_us", "cnp_count", "drops", "ddio_miss_rate", "pcie_stalls",
    "mem_bw_cpu", "mem_bw_nic",
]

_INT_COLS = {
    "time_ns", "free_srq_bytes", "free_read_bytes", "live_bytes",
    "replacement_bytes", "queued_high", "queued_low", "concurrency_in_use",
    "inflight_used_bytes", "admit_count", "blocked_count", "stragglers_total",
    "releases_per_tick", "escape_actions", "replace_mem_bytes", "copy_bytes",
    "ecn_lowered_flag", "cnp_count", "drops", "pcie_stalls",
    "mem_bw_cpu", "mem_bw_nic",
}
_US_COLS = {"avg_post_rnic_us", "p99_post_rnic_us", "avg_lat_us", "p99_lat_us",
            "pfc_paused_us"}


def format_row(row: dict) -> str:
    out = []
    for col in COLUMNS:
        v = row[col]
        if col in _INT_COLS:
            out.append(str(int(v)))
        elif col in _US_COLS:
            out.append(f"{v:.3f}")
        else:
            out.append(f"{v:.6f}")
    return ",".join(out)


def metrics_csv_text(rows: list[dict]) -> str:
    lines = [",".join(COLUMNS)]
    lines.extend(format_row(r) for r in rows)
    return "\n".join(lines) + "\n"


def _p99(sorted_vals: list) -> float:
    if not sorted_vals:
        return 0.0
    idx = max(0, -(-99 * len(sorted_vals) // 100) - 1)
    return sorted_vals[idx]


@dataclass
class Summary:
    mode: str
    network: str
    duration_ns: int
    released_bytes: int = 0
    goodput_bytes_per_sec: int = 0
    goodput_gbps: float = 0.0
    net_bytes: int = 0
    net_throughput_gbps: float = 0.0
    completed_messages: int = 0
    failed_messages: int = 0
    mean_lat_us: float = 0.0
    p99_lat_us: float = 0.0
    avg_post_rnic_us: float = 0.0
    p99_post_rnic_us: float = 0.0
    cnp_count: int = 0
    drops: int = 0
    pfc_paused_ns: int = 0
    pcie_stalls: int = 0
    ddio_miss_rate: float = 0.0
    pool_miss_rate: float = 0.0
    pool_writes: int = 0
    ddio_hits: int = 0
    ddio_misses: int = 0
    writeback_bytes: int = 0
    escape_actions: int = 0
    copied_bytes: int = 0
    copy_failures: int = 0
    max_replacement_bytes: int = 0
    replacement_bytes_final: int = 0
    ecn_lowered_final: bool = False

    def as_dict(self) -> dict:
        return {k: getattr(self, k) for k in self.__dataclass_fields__}


@dataclass
class _MsgRec:
    msg_id: int
    qp: int
    app: int
    size: int
    submitted_at: int
    resubmit: bool = True
    fetched_bytes: int = 0      # wire transfer done; frees the sender slot
    released_bytes: int = 0     # buffers recycled; ends the latency clock
    completed: bool = False


@dataclass
class _WireEntry:
    kind: str                   # "frag" | "small"
    size: int
    rec: _MsgRec
    fragment: object = None     # fc.Fragment on the READ path
    handle: object = None       # bound at drain time for small messages
    app: int = 0
    delivered: int = 0
    drained: int = 0
    sliced: int = 0             # bytes already handed to the pipeline


@dataclass
class _StreamRec:
    """Baseline per-message accounting over the open-loop byte stream."""
    sent_at: int
    size: int
    offered: int = 0
    dropped: int = 0
    drained: int = 0


class Engine:
    """Single-run simulator; construct fresh per scenario."""

    def __init__(self, scenario: Scenario):
        scenario.validate()
        self.sc = scenario
        self.preset = PRESETS[scenario.network]
        self.rng = random.Random(scenario.seed)
        self.ids = IdFactory()
        self.now = 0
        competitor = scenario.competitor or CompetitorProfile.fraction(
            self.preset.bus_capacity, scenario.competitor_intensity)
        jet = scenario.mode is Mode.JET
        self.host = Host(self.preset, scenario.rnic, competitor,
                         scenario.qp_count, scenario.dcqcn,
                         reserved_llc_bytes=scenario.pool.reserved_llc_bytes if jet else 0,
                         inject_copy_failure=scenario.inject_copy_failure)
        self.events: list = []
        self._event_seq = 0
        self.event_log: list[str] = []

        # per-sample-interval accumulators
        self._iv = dict(net=0, good=0, releases=0, cpu=0, nic=0)
        self._iv_lat: list[float] = []
        self._all_lat: list[tuple[int, int]] = []   # (completion time, latency ns)
        self._all_timespans: list[int] = []
        self.completed_messages = 0
        self.failed_messages = 0
        self.released_bytes = 0
        self.net_bytes = 0

        if jet:
            self.pool = Pool(scenario.pool)
            self.queues = AdmissionQueues()
            self.windows = FlowWindows(scenario.concurrency_limit,
                                       scenario.inflight_limit)
            self.registries = Registries(scenario.escape.time_th)
            self.pipeline = Pipeline(scenario.processing, self.pool,
                                     sink=self._slice_sink)
            self.ring = NotifyRing()
            self.escape_cfg = scenario.escape
            self.escape_state = EscapeState()
            self.wire: list[_WireEntry] = []
            self._drain_head = 0
            self._deliver_head = 0
            self._undelivered = 0
            self.pending_issue: list = []
            self.slow_holds: dict[int, dict] = {}   # handle id -> hold record
            self._rec_of_handle: dict[int, _MsgRec] = {}
            self._escape_due = False
        else:
            self.footprint_groups = max(1, scenario.qp_count * scenario.msg_size
                                        * scenario.io_depth // LINE_GROUP)
            self.stream: list[_StreamRec] = []
            self._stream_head = 0
            self._accepted_total = 0

        if jet:
            # closed-loop workload: io_depth slots per QP, refilled on release
            for qp in range(scenario.qp_count):
                for _ in range(scenario.io_depth):
                    self._schedule(self._jitter(), "submit", qp)
            if scenario.small_msg_rate > 0:
                self._schedule(self._next_small_gap(), "small", None)

    # -- events -----------------------------------------------------------------

    def _jitter(self) -> int:
        return self.now + self.rng.randrange(0, self.sc.tick_ns)

    def _next_small_gap(self) -> int:
        mean_ns = 1e9 / self.sc.small_msg_rate
        return self.now + max(1, int(self.rng.expovariate(1.0) * mean_ns))

    def _schedule(self, when: int, kind: str, payload) -> None:
        assert when >= self.now     # never schedule into the past
        heapq.heappush(self.events, (when, self._event_seq, kind, payload))
        self._event_seq += 1

    def _process_events(self) -> None:
        while self.events and self.events[0][0] <= self.now:
            when, _, kind, payload = heapq.heappop(self.events)
            assert when <= self.now
            if kind == "submit":
                self._on_submit(payload)
            elif kind == "small":
                self._on_small_arrival()
            elif kind == "hold_release":
                self._on_hold_release(payload)

    def _append_wire(self, entry: _WireEntry) -> None:
        self.wire.append(entry)
        self._undelivered += entry.size

    def _on_submit(self, qp: int) -> None:
        sc = self.sc
        msg = make_message(self.ids, app=qp, qp=qp, size=sc.msg_size, now=self.now)
        rec = _MsgRec(msg.id, qp, qp, msg.size, self.now)
        if msg.kind is MsgKind.LARGE:
            qos = Qos.LOW if (sc.qos_low_fraction > 0
                              and self.rng.random() < sc.qos_low_fraction) else Qos.HIGH
            est = (self.registries.recent_avg_timespan_ns()
                   or fc.DEFAULT_TIMESPAN_ESTIMATE)
            req = fc.ReadRequest(msg=msg, qos=qos, enqueued_at=self.now,
                                 expected_timespan=est)
            req.rec = rec
            self.queues.submit(req)
        else:
            self._append_wire(_WireEntry("small", msg.size, rec, app=qp))

    def _on_small_arrival(self) -> None:
        msg = make_message(self.ids, app=0, qp=0, size=self.sc.small_msg_size,
                           now=self.now)
        rec = _MsgRec(msg.id, 0, 0, msg.size, self.now, resubmit=False)
        self._append_wire(_WireEntry("small", msg.size, rec, app=0))
        self._schedule(self._next_small_gap(), "small", None)

    def _on_hold_release(self, payload) -> None:
        handle, rec = payload
        hold = self.slow_holds.pop(handle.id, None)
        if handle.id in self.pool.live:
            registered = handle.id in self.registries.registry(handle.app)._entries
            self.pool.free(handle)
            if registered:
                self.registries.on_release(handle.app, handle, self.now)
        self._rec_of_handle.pop(handle.id, None)
        self.ring.complete(handle)
        if hold is not None:
            self._credit_release(rec, hold["bytes"])

    # -- jet datapath --------------------------------------------------------------

    def _slice_sink(self, s: Slice, now: int) -> None:
        hold = self.slow_holds.get(s.handle.id)
        if hold is not None:
            hold["processed"] += 1
            hold["bytes"] += s.size
            if hold["processed"] == hold["total"]:
                self._schedule(now + self.sc.slow_app.hold_ns, "hold_release",
                               (s.handle, hold["rec"]))
            return
        rec = self._rec_of_handle[s.handle.id]
        self.pool.free_objects(s.handle, 1)
        if s.handle.released:
            self.registries.on_release(s.handle.app, s.handle, now)
            self.ring.complete(s.handle)
            del self._rec_of_handle[s.handle.id]
        self._credit_release(rec, s.size)

    def _credit_fetch(self, rec: _MsgRec, nbytes: int) -> None:
        """Wire transfer progress; a fully fetched message frees its sender
        slot (the buffers may still be held on the receiver)."""
        rec.fetched_bytes += nbytes
        if rec.fetched_bytes >= rec.size and rec.resubmit:
            self._schedule(self._jitter(), "submit", rec.qp)

    def _credit_release(self, rec: _MsgRec, nbytes: int) -> None:
        rec.released_bytes += nbytes
        self._iv["releases"] += 1
        if rec.released_bytes >= rec.size and not rec.completed:
            rec.completed = True
            self.completed_messages += 1
            self.released_bytes += rec.size
            self._iv["good"] += rec.size
            lat = self.now - rec.submitted_at
            self._all_lat.append((self.now, lat))
            self._iv_lat.append(lat / 1000.0)

    def _try_issue(self, req) -> bool:
        frag = fc.issue_fragment(req, self.windows, self.pool, self.now,
                                 self.sc.fragment_max)
        if frag is None:
            need = req.next_fragment_size(self.sc.fragment_max)
            window_ok = (self.windows.inflight_used + need
                         <= self.windows.inflight_limit)
            if window_ok and self.pool.free_bytes(Region.READ) < need:
                # pool-blocked: grow the READ region toward the window size
                # plus safety-line headroom, then escalate to escape
                demand_srq = (self.sc.pool.srq_initial
                              if self.sc.small_msg_rate > 0
                              else self.sc.pool.srq_min)
                moved = self.pool.rebalance(
                    demand_srq,
                    self.windows.inflight_limit + self.escape_cfg.cache_safe)
                if moved:
                    frag = fc.issue_fragment(req, self.windows, self.pool,
                                             self.now, self.sc.fragment_max)
                if frag is None:
                    self._escape_due = True
                    return False
            else:
                return False
        handle = frag.handle
        self.registries.on_alloc(handle.app, handle)
        self._rec_of_handle[handle.id] = req.rec
        self._append_wire(_WireEntry("frag", frag.size, req.rec, fragment=frag,
                                     handle=handle, app=handle.app))
        slow = self.sc.slow_app
        if (slow is not None and handle.app == slow.app
                and self.rng.random() < slow.fraction):
            self.slow_holds[handle.id] = {
                "total": -(-frag.size // LINE_GROUP), "processed": 0,
                "bytes": 0, "rec": req.rec,
            }
        return True

    def _pump_flow(self) -> None:
        """Retry blocked fragments, then admit and issue queued requests."""
        still = []
        for req in self.pending_issue:
            if not self._try_issue(req):
                still.append(req)
        self.pending_issue = still

        for req in fc.admit(self.queues, self.windows, self.pool, self.now,
                            self.preset.line_rate, self.sc.fragment_max):
            if not self._try_issue(req):
                self.pending_issue.append(req)

    def _periodic_rebalance(self) -> None:
        """Size the READ region toward the in-flight window plus safety-line
        headroom; the SRQ keeps what the small-message load needs."""
        demand_srq = (self.sc.pool.srq_initial if self.sc.small_msg_rate > 0
                      else self.sc.pool.srq_min)
        self.pool.rebalance(demand_srq,
                            self.windows.inflight_limit + self.escape_cfg.cache_safe)

    def _run_escape(self) -> None:
        actions = escape_step(self.pool, self.registries, self.escape_cfg,
                              self.escape_state, self.host, self.now)
        for act in actions:
            if act.bytes or act.kind not in (ActionKind.BUFFER_REPLACE,):
                self.event_log.append(
                    f"{self.now} escape {act.kind.value}"
                    + (f" app={act.app}" if act.app is not None else "")
                    + (f" bytes={act.bytes}" if act.bytes else ""))

    def _deliver_jet(self, offered: int) -> int:
        to_send = min(offered, self._undelivered)
        accepted = self.host.rnic.ingest(to_send)
        left = accepted
        dh = self._deliver_head
        while left > 0:
            e = self.wire[dh]
            room = e.size - e.delivered
            if room == 0:
                dh += 1
                continue
            take = min(left, room)
            e.delivered += take
            left -= take
            if e.delivered == e.size:
                dh += 1
        self._deliver_head = dh
        self._undelivered -= accepted
        return accepted

    def _drain_jet(self, pcie_budget: int) -> tuple[int, int, bool]:
        """Write buffered bytes into pool buffers, feeding drained slices to
        the recycle pipeline.  Pool traffic is cache-resident, so the drain
        consumes no memory bandwidth; a missing WQE backpressures the buffer
        but is not a PCIe memory stall.  Returns (drained, 0, False)."""
        drained = 0
        while pcie_budget > 0 and self._drain_head < len(self.wire):
            e = self.wire[self._drain_head]
            if e.drained >= e.size:
                self._drain_head += 1
                continue
            avail = e.delivered - e.drained
            if avail <= 0:
                break
            if e.kind == "small" and e.handle is None:
                try:
                    e.handle = self.pool.consume_wqe(e.app, self.now)
                except NoWqe:
                    break               # receiver not ready: backpressure
                self.registries.on_alloc(e.app, e.handle)
                self._rec_of_handle[e.handle.id] = e.rec
            handle = e.handle
            if e.drained % LINE_GROUP == 0:
                if handle.memory_backed:
                    self.host.ddio.write_escape_resident()
                else:
                    self.host.ddio.write_reserved()
            group_end = (e.drained // LINE_GROUP + 1) * LINE_GROUP
            unit = min(avail, group_end - e.drained, pcie_budget,
                       e.size - e.drained)
            e.drained += unit
            pcie_budget -= unit
            drained += unit
            while e.sliced < e.drained:
                size = min(LINE_GROUP, e.size - e.sliced)
                if e.sliced + size > e.drained:
                    break
                self.pipeline.feed(
                    [Slice(parent=e.rec.msg_id, index=e.sliced // LINE_GROUP,
                           size=size, handle=handle)], self.now)
                e.sliced += size
            if e.drained >= e.size:
                self.ring.notify(handle, e.app)
                self._credit_fetch(e.rec, e.size)
                if e.kind == "frag":
                    fc.complete_fragment(e.fragment, self.windows)
                    req = e.fragment.request
                    if req.remaining > 0 and not self._try_issue(req):
                        self.pending_issue.append(req)
                self._drain_head += 1
        if self._drain_head > 8192:
            del self.wire[:self._drain_head]
            self._deliver_head -= self._drain_head
            self._drain_head = 0
        return drained, 0, False

    # -- baseline datapath ------------------------------------------------------

    def _baseline_offer(self, nbytes: int) -> None:
        """Open-loop senders: the stream extends as bytes hit the wire."""
        while nbytes > 0:
            if not self.stream or self.stream[-1].offered >= self.stream[-1].size:
                self.stream.append(_StreamRec(self.now, self.sc.msg_size))
            rec = self.stream[-1]
            take = min(nbytes, rec.size - rec.offered)
            rec.offered += take
            nbytes -= take

    def _baseline_drop(self, nbytes: int) -> None:
        # tail drop lands on the most recently offered bytes
        i = len(self.stream) - 1
        while nbytes > 0 and i >= self._stream_head:
            rec = self.stream[i]
            markable = rec.offered - rec.dropped - rec.drained
            take = min(nbytes, markable)
            rec.dropped += take
            nbytes -= take
            i -= 1

    def _drain_baseline(self, pcie_budget: int, nic_budget: int) -> tuple[int, int, bool]:
        drained = 0
        nic_used = 0
        stalled = False
        avail = self.host.rnic.occupancy
        drained_before = self._accepted_total - avail
        while pcie_budget > 0 and avail > 0:
            pos = drained_before + drained
            if pos % LINE_GROUP == 0:
                gid = (pos // LINE_GROUP) % self.footprint_groups
                ok, used = self.host.ddio.write_group(gid, nic_budget)
                if not ok:
                    stalled = True
                    break
                nic_budget -= used
                nic_used += used
            group_end = (pos // LINE_GROUP + 1) * LINE_GROUP
            unit = min(avail, group_end - pos, pcie_budget)
            drained += unit
            avail -= unit
            pcie_budget -= unit
        if drained:
            self._credit_baseline(drained)
        return drained, nic_used, stalled

    def _credit_baseline(self, nbytes: int) -> None:
        while nbytes > 0 and self._stream_head < len(self.stream):
            rec = self.stream[self._stream_head]
            deliverable = rec.offered - rec.dropped
            take = min(nbytes, deliverable - rec.drained)
            rec.drained += take
            nbytes -= take
            if rec.offered >= rec.size and rec.drained >= rec.offered - rec.dropped:
                if rec.dropped == 0:
                    self.completed_messages += 1
                    self.released_bytes += rec.size
                    self._iv["good"] += rec.size
                    self._iv["releases"] += 1
                    lat = self.now - rec.sent_at
                    self._all_lat.append((self.now, lat))
                    self._iv_lat.append(lat / 1000.0)
                else:
                    self.failed_messages += 1
                self._stream_head += 1
            elif take == 0:
                break
        if self._stream_head > 8192:
            del self.stream[:self._stream_head]
            self._stream_head = 0

    # -- main loop ------------------------------------------------------------------

    def run(self) -> tuple[list[dict], Summary]:
        sc = self.sc
        dt = sc.tick_ns
        jet = sc.mode is Mode.JET
        next_sample = sc.sample_interval_ns
        rows: list[dict] = []
        rnic = self.host.rnic
        params = self.host.dcqcn_params

        while self.now < sc.duration_ns:
            self._process_events()
            if jet:
                pump_copies(self.pool, self.registries, self.escape_cfg,
                            self.escape_state, self.host, self.now, dt,
                            self.preset.line_rate)
                self._pump_flow()

            # wire delivery into the RNIC buffer
            offered = self.host.offered_rate() * dt // 1_000_000_000
            if rnic.lossless and rnic.paused:
                offered = 0
            if jet:
                accepted = self._deliver_jet(offered)
            else:
                accepted = rnic.ingest(offered)
                self._baseline_offer(offered)
                self._accepted_total += accepted
                if offered > accepted:
                    self._baseline_drop(offered - accepted)
            self.net_bytes += accepted
            self._iv["net"] += accepted

            # memory bus arbitration and drain toward the host
            cpu_demand = (self.host.competitor.demand_bps(self.now, self.host.bus.capacity)
                          * dt // 1_000_000_000)
            cpu_demand += self.host.take_copy_charge()
            cpu_grant, nic_budget = self.host.bus.arbitrate(cpu_demand, dt)
            pcie_budget = self.host.pcie.budget(dt)
            if jet:
                drained, nic_used, stalled = self._drain_jet(pcie_budget)
            else:
                drained, nic_used, stalled = self._drain_baseline(pcie_budget, nic_budget)
            rnic.drain(drained)
            if stalled:
                self.host.pcie.stalled_writes += 1
            self._iv["cpu"] += cpu_grant
            self._iv["nic"] += nic_used

            if jet:
                self.pipeline.step(self.now, dt)
                if self._escape_due:
                    self._run_escape()
                    self._escape_due = False

            # congestion signaling
            rnic.update_pause(dt)
            p = rnic.mark_probability()
            if p > 0.0:
                for s in self.host.senders:
                    if (self.now - s.last_cnp >= params.cnp_interval_ns
                            and self.rng.random() < p):
                        s.on_cnp(self.now)
                        rnic.cnp_sent += 1
            for s in self.host.senders:
                s.tick(self.now)

            self.now += dt
            if self.now >= next_sample:
                if jet:
                    self._periodic_rebalance()
                    self._run_escape()
                rows.append(self._sample_row())
                next_sample += sc.sample_interval_ns

        return rows, self._summary()

    # -- metrics -------------------------------------------------------------------

    def _sample_row(self) -> dict:
        sc = self.sc
        jet = sc.mode is Mode.JET
        iv = self._iv
        interval = sc.sample_interval_ns
        span = self.registries.drain_window() if jet else []
        self._all_timespans.extend(span)
        span_us = sorted(s / 1000.0 for s in span)
        lat = sorted(self._iv_lat)
        row = {
            "time_ns": self.now,
            "free_srq_bytes": self.pool.free_bytes(Region.SRQ) if jet else 0,
            "free_read_bytes": self.pool.free_bytes(Region.READ) if jet else 0,
            "live_bytes": self.pool.live_bytes() if jet else 0,
            "replacement_bytes": self.pool.replacement_bytes() if jet else 0,
            "queued_high": len(self.queues.high) if jet else 0,
            "queued_low": len(self.queues.low) if jet else 0,
            "concurrency_in_use": self.windows.concurrency_in_use if jet else 0,
            "inflight_used_bytes": self.windows.inflight_used if jet else 0,
            "admit_count": self.windows.admit_count if jet else 0,
            "blocked_count": self.windows.blocked_count if jet else 0,
            "avg_post_rnic_us": (sum(span_us) / len(span_us)) if span_us else 0.0,
            "p99_post_rnic_us": _p99(span_us),
            "stragglers_total": self.registries.scan_all(self.now) if jet else 0,
            "releases_per_tick": iv["releases"],
            "escape_actions": self.escape_state.actions_taken if jet else 0,
            "replace_mem_bytes": self.pool.replacement_bytes() if jet else 0,
            "copy_bytes": (2 * self.escape_state.copied_bytes_total) if jet else 0,
            "ecn_lowered_flag": int(self.escape_state.ecn_lowered) if jet else 0,
            "net_throughput_gbps": iv["net"] * 8 / interval,
            "goodput_gbps": iv["good"] * 8 / interval,
            "avg_lat_us": (sum(lat) / len(lat)) if lat else 0.0,
            "p99_lat_us": _p99(lat),
            "pfc_paused_us": self.host.rnic.pfc_paused_ns / 1000.0,
            "cnp_count": self.host.rnic.cnp_sent,
            "drops": self.host.rnic.drops,
            "ddio_miss_rate": self.host.ddio.miss_rate,
            "pcie_stalls": self.host.pcie.stalled_writes,
            "mem_bw_cpu": iv["cpu"] * 1_000_000_000 // interval,
            "mem_bw_nic": iv["nic"] * 1_000_000_000 // interval,
        }
        self._iv = dict(net=0, good=0, releases=0, cpu=0, nic=0)
        self._iv_lat = []
        return row

    def _summary(self) -> Summary:
        sc = self.sc
        jet = sc.mode is Mode.JET
        dur = sc.duration_ns
        warmup = int(dur * sc.warmup_fraction)
        lat_us = sorted(l / 1000.0 for (t, l) in self._all_lat if t >= warmup)
        if jet:
            self._all_timespans.extend(self.registries.drain_window())
        spans_us = sorted(t / 1000.0 for t in self._all_timespans)
        ddio = self.host.ddio
        s = Summary(mode=sc.mode.value, network=sc.network, duration_ns=dur)
        s.released_bytes = self.released_bytes
        if dur > 0:
            s.goodput_bytes_per_sec = self.released_bytes * 1_000_000_000 // dur
            s.net_throughput_gbps = self.net_bytes * 8 / dur
        s.goodput_gbps = s.goodput_bytes_per_sec * 8 / 1e9
        s.net_bytes = self.net_bytes
        s.completed_messages = self.completed_messages
        s.failed_messages = self.failed_messages
        if lat_us:
            s.mean_lat_us = sum(lat_us) / len(lat_us)
            s.p99_lat_us = _p99(lat_us)
        if jet and self.registries.timespan_count:
            s.avg_post_rnic_us = self.registries.avg_timespan_ns() / 1000.0
            s.p99_post_rnic_us = _p99(spans_us)
        s.cnp_count = self.host.rnic.cnp_sent
        s.drops = self.host.rnic.drops
        s.pfc_paused_ns = self.host.rnic.pfc_paused_ns
        s.pcie_stalls = self.host.pcie.stalled_writes
        s.ddio_miss_rate = ddio.miss_rate
        s.pool_miss_rate = ddio.pool_miss_rate
        s.pool_writes = ddio.pool_writes
        s.ddio_hits = ddio.hits
        s.ddio_misses = ddio.misses
        s.writeback_bytes = ddio.writeback_bytes
        if jet:
            s.escape_actions = self.escape_state.actions_taken
            s.copied_bytes = self.escape_state.copied_bytes_total
            s.copy_failures = self.escape_state.copy_failures
            s.max_replacement_bytes = self.escape_state.max_replacement_bytes
            s.replacement_bytes_final = self.pool.replacement_bytes()
            s.ecn_lowered_final = self.escape_state.ecn_lowered
        return s


def run(scenario: Scenario) -> tuple[list[dict], Summary]:
    """Run one scenario to completion."""
    return Engine(scenario).run()


def sweep(base: Scenario, msg_sizes: list[int]) -> list[tuple[int, Summary]]:
    """One independent run per message size, keyed by size."""
    out = []
    for size in msg_sizes:
        _, summary = run(replace(base, msg_size=size))
        out.append((size, summary))
    return out


def compare(base: Scenario) -> tuple[Summary, Summary, list[dict], list[dict]]:
    """Run the scenario under both modes with the identical seed."""
    rows_b, sum_b = run(replace(base, mode=Mode.BASELINE_DDIO))
    rows_j, sum_j = run(replace(base, mode=Mode.JET))
    return sum_b, sum_j, rows_b, rows_j
