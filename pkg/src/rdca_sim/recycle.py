"""Swift cache recycle: 4 KiB slice pipeline, per-app buffer registries with
O(1) straggler counting, and the notification ring between the receiver
service and applications.

Processing cost is an explicit parameterized model (multi-thread parallelism
as a service-rate multiplier, CRC offload and lightweight (de)serialization as
removable cost components), not real codec work.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass
from enum import Enum

from .core import KIB, UnknownHandle
from .cache_pool import BufferHandle, Pool
from .flow_control import Fragment

SLICE_MAX = 4 * KIB
DEFAULT_TIME_TH = 1_000_000  # ns; occupancy beyond this makes a buffer a straggler


class Stage(Enum):
    GET = "get"
    PROCESS = "process"
    RELEASE = "release"


@dataclass
class Slice:
    parent: int                 # fragment's message id
    index: int
    size: int
    handle: BufferHandle
    stage: Stage = Stage.GET
    stage_entered: int = 0


@dataclass(frozen=True)
class ProcessingModel:
    base_cost_ns: int = 200          # per 4 KiB slice
    crc_cost_ns: int = 300
    copy_cost_ns: int = 300
    crc_offloaded: bool = True
    serde_lightweight: bool = True
    worker_count: int = 8
    get_cost_ns: int = 0
    release_cost_ns: int = 0

    def effective_cost_ns(self) -> int:
        cost = self.base_cost_ns
        if not self.crc_offloaded:
            cost += self.crc_cost_ns
        if not self.serde_lightweight:
            cost += self.copy_cost_ns
        return cost

    def service_rate_bytes_per_s(self, slice_size: int = SLICE_MAX) -> int:
        return self.worker_count * slice_size * 1_000_000_000 // self.effective_cost_ns()


def slice_fragment(frag: Fragment, slice_max: int = SLICE_MAX) -> list[Slice]:
    """Partition a fragment into pipeline slices, all but the last full-sized."""
    assert not frag.handle.released
    sizes = []
    left = frag.size
    while left > 0:
        take = min(left, slice_max)
        sizes.append(take)
        left -= take
    return [Slice(parent=frag.parent, index=i, size=s, handle=frag.handle)
            for i, s in enumerate(sizes)]


class Pipeline:
    """Deterministic worker-pool scheduler for the get/process/release stages.

    Workers are simulated as a per-tick service budget; slices of one fragment
    keep FIFO order.  A completed slice releases its pool object immediately,
    without waiting for the rest of its message.
    """

    def __init__(self, model: ProcessingModel, pool: Pool, sink=None):
        self.model = model
        self.pool = pool
        self.queue: deque[Slice] = deque()       # PROCESS stage, FIFO
        self._work_credit_ns = 0                 # unused worker time carried over
        self.processed_slices = 0
        # The release sink frees the slice's object; callers may substitute
        # one that defers the free (e.g. an application holding its buffer).
        self.sink = sink or self._default_sink

    def _default_sink(self, s: Slice, now: int) -> None:
        self.pool.free_objects(s.handle, 1)

    def feed(self, slices: list[Slice], now: int) -> None:
        for s in slices:
            s.stage = Stage.PROCESS
            s.stage_entered = now
        self.queue.extend(slices)

    def step(self, now: int, dt_ns: int) -> int:
        """Advance the pipeline by one tick; returns bytes processed."""
        budget = self._work_credit_ns + self.model.worker_count * dt_ns
        cost = self.model.effective_cost_ns() + self.model.release_cost_ns
        done = 0
        while self.queue and budget >= cost:
            s = self.queue.popleft()
            budget -= cost
            s.stage = Stage.RELEASE
            s.stage_entered = now
            self.processed_slices += 1
            done += s.size
            self.sink(s, now)
        # Idle workers don't bank time; carry credit only while work is queued.
        self._work_credit_ns = budget if self.queue else 0
        return done

    def backlog_slices(self) -> int:
        return len(self.queue)


class AppRegistry:
    """Per-app record of live pool buffers ordered by allocation time.

    Allocation times are monotone, so buffers that crossed the straggler
    threshold always form a prefix of the order; scanning only ever inspects
    the head, giving amortized O(1) updates.
    """

    def __init__(self) -> None:
        self._entries: dict[int, int] = {}       # handle id -> alloc_time
        self._straggler: set[int] = set()
        self._order: deque[tuple[int, int]] = deque()   # (handle id, alloc_time)

    @property
    def held_buf_num(self) -> int:
        return len(self._entries)

    @property
    def straggler_buf_num(self) -> int:
        return len(self._straggler)

    def add(self, handle_id: int, alloc_time: int) -> None:
        self._entries[handle_id] = alloc_time
        self._order.append((handle_id, alloc_time))

    def remove(self, handle_id: int) -> None:
        if handle_id not in self._entries:
            raise UnknownHandle(f"handle {handle_id} not registered")
        del self._entries[handle_id]
        self._straggler.discard(handle_id)

    def scan(self, now: int, time_th: int = DEFAULT_TIME_TH) -> int:
        """Advance the straggler frontier and return the straggler count."""
        while self._order:
            hid, t = self._order[0]
            if hid not in self._entries:
                self._order.popleft()           # released before crossing
                continue
            if now - t > time_th:
                self._straggler.add(hid)
                self._order.popleft()
            else:
                break
        return len(self._straggler)

    def recount(self, now: int, time_th: int = DEFAULT_TIME_TH) -> int:
        """Full O(n) recount; the oracle the incremental counters must match."""
        return sum(1 for t in self._entries.values() if now - t > time_th)

    def straggler_ratio(self) -> float:
        if not self._entries:
            return 0.0
        return len(self._straggler) / len(self._entries)

    def iter_stragglers(self):
        """Straggler handle ids in allocation order (oldest first)."""
        return iter(sorted(self._straggler, key=self._entries.__getitem__))


class Registries:
    """All per-app registries plus the post-RNIC residence-time monitor."""

    def __init__(self, time_th: int = DEFAULT_TIME_TH):
        self.time_th = time_th
        self.apps: dict[int, AppRegistry] = {}
        self.timespan_sum_ns = 0
        self.timespan_count = 0
        self.window_samples: list[int] = []
        self._recent: deque[int] = deque(maxlen=256)

    def registry(self, app: int) -> AppRegistry:
        if app not in self.apps:
            self.apps[app] = AppRegistry()
        return self.apps[app]

    def on_alloc(self, app: int, handle: BufferHandle) -> None:
        self.registry(app).add(handle.id, handle.alloc_time)

    def on_release(self, app: int, handle: BufferHandle, now: int) -> None:
        self.registry(app).remove(handle.id)
        self.record_timespan(now - handle.alloc_time)

    def record_timespan(self, span_ns: int) -> None:
        self.timespan_sum_ns += span_ns
        self.timespan_count += 1
        self.window_samples.append(span_ns)
        self._recent.append(span_ns)

    def avg_timespan_ns(self) -> int:
        if self.timespan_count == 0:
            return 0
        return self.timespan_sum_ns // self.timespan_count

    def recent_avg_timespan_ns(self) -> int:
        """Admission-facing estimate: a trailing-window mean recovers after a
        burst of pathological holds where the all-time mean would not."""
        if not self._recent:
            return 0
        return sum(self._recent) // len(self._recent)

    def drain_window(self) -> list[int]:
        out = self.window_samples
        self.window_samples = []
        return out

    def scan_all(self, now: int) -> int:
        return sum(reg.scan(now, self.time_th) for reg in self.apps.values())

    def total_stragglers(self) -> int:
        return sum(reg.straggler_buf_num for reg in self.apps.values())


class NotifyEvent(Enum):
    DATA_READY = "data_ready"
    RELEASE_REQUEST = "release_request"


@dataclass
class Notification:
    handle: BufferHandle
    app: int
    event: NotifyEvent


class NotifyRing:
    """Bounded queue standing in for the shared-mapping notification channel."""

    def __init__(self, capacity: int = 4096):
        self.capacity = capacity
        self.ring: deque[Notification] = deque()
        self.pending: dict[int, BufferHandle] = {}   # DataReady sent, not yet released

    def notify(self, handle: BufferHandle, app: int) -> None:
        if len(self.ring) >= self.capacity:
            self.ring.popleft()
        self.ring.append(Notification(handle, app, NotifyEvent.DATA_READY))
        self.pending[handle.id] = handle

    def on_release(self, handle: BufferHandle, pool: Pool,
                   registries: Registries, now: int) -> None:
        if handle.id not in self.pending:
            raise UnknownHandle(f"release for handle {handle.id} without DataReady")
        del self.pending[handle.id]
        if len(self.ring) >= self.capacity:
            self.ring.popleft()
        self.ring.append(Notification(handle, handle.app, NotifyEvent.RELEASE_REQUEST))
        if not handle.released and handle.remaining_objects:
            pool.free(handle)
        registries.on_release(handle.app, handle, now)

    def complete(self, handle: BufferHandle) -> None:
        """Record that a notified buffer has been fully released through some
        other path (slice recycle or an escape action)."""
        if self.pending.pop(handle.id, None) is not None:
            if len(self.ring) >= self.capacity:
                self.ring.popleft()
            self.ring.append(Notification(handle, handle.app,
                                          NotifyEvent.RELEASE_REQUEST))
