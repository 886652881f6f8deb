"""Receiver-side admission and rate control for large messages.

Large messages are fetched with READ in fragments of at most 256 KiB; a
count-limited concurrency window bounds admitted requests and a byte-limited
window bounds in-flight fragment data.  Admission is FIFO within each QoS
class, high class first.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .core import KIB, MIB, MsgKind, Message, PoolExhausted, UnknownFragment, WrongPath
from .cache_pool import BufferHandle, Pool, Region

FRAGMENT_MAX = 256 * KIB
DEFAULT_CONCURRENCY_LIMIT = 32
DEFAULT_INFLIGHT_LIMIT = 8 * MIB
DEFAULT_TIMESPAN_ESTIMATE = 200_000  # ns; typical post-RNIC residence


class Qos(Enum):
    HIGH = "high"
    LOW = "low"


def fragment_sizes(size: int, fragment_max: int = FRAGMENT_MAX) -> list[int]:
    """Partition ``size`` bytes into fragments, all but the last full-sized."""
    assert size > 0 and fragment_max > 0
    full, rest = divmod(size, fragment_max)
    out = [fragment_max] * full
    if rest:
        out.append(rest)
    return out


@dataclass
class ReadRequest:
    msg: Message
    qos: Qos
    enqueued_at: int
    expected_timespan: int = DEFAULT_TIMESPAN_ESTIMATE
    remaining: int = field(init=False)
    fragments_issued: int = 0
    admitted: bool = False

    def __post_init__(self) -> None:
        self.remaining = self.msg.size

    def next_fragment_size(self, fragment_max: int = FRAGMENT_MAX) -> int:
        return min(self.remaining, fragment_max)


@dataclass
class Fragment:
    parent: int               # MsgId
    index: int
    size: int
    handle: BufferHandle
    request: ReadRequest
    issued_at: int


@dataclass
class FlowWindows:
    concurrency_limit: int = DEFAULT_CONCURRENCY_LIMIT
    inflight_limit: int = DEFAULT_INFLIGHT_LIMIT
    concurrency_in_use: int = 0
    inflight_used: int = 0
    admit_count: int = 0
    blocked_count: int = 0
    _issued: set[int] = field(default_factory=set, repr=False)
    _frag_seq: int = 0

    def check(self) -> None:
        assert 0 <= self.concurrency_in_use <= self.concurrency_limit
        assert 0 <= self.inflight_used <= self.inflight_limit


class AdmissionQueues:
    """Two-priority FIFO of pending READ requests."""

    def __init__(self) -> None:
        self.high: deque[ReadRequest] = deque()
        self.low: deque[ReadRequest] = deque()

    def submit(self, req: ReadRequest) -> None:
        if req.msg.kind is not MsgKind.LARGE:
            raise WrongPath(f"message {req.msg.id} is small; SRQ path only")
        (self.high if req.qos is Qos.HIGH else self.low).append(req)

    def __len__(self) -> int:
        return len(self.high) + len(self.low)

    def _peek(self) -> ReadRequest | None:
        if self.high:
            return self.high[0]
        if self.low:
            return self.low[0]
        return None

    def _pop(self) -> ReadRequest:
        return self.high.popleft() if self.high else self.low.popleft()


def fair_share_throughput(line_rate: int, windows: FlowWindows) -> int:
    """Expected per-request throughput once admitted: an even split of the
    line among it and the already-admitted requests."""
    return line_rate // (windows.concurrency_in_use + 1)


def admit(queues: AdmissionQueues, windows: FlowWindows, pool: Pool,
          now: int, line_rate: int,
          fragment_max: int = FRAGMENT_MAX) -> list[ReadRequest]:
    """Pop requests (high before low, FIFO within class) while all three
    admission conditions hold: a concurrency slot is free, the next fragment
    fits the in-flight window, and the expected cache footprint
    (fair-share throughput x expected residence time) fits the free READ
    region."""
    admitted = []
    while True:
        req = queues._peek()
        if req is None:
            break
        if windows.concurrency_in_use >= windows.concurrency_limit:
            break
        frag = req.next_fragment_size(fragment_max)
        if windows.inflight_used + frag > windows.inflight_limit:
            break
        footprint = fair_share_throughput(line_rate, windows) * req.expected_timespan // 1_000_000_000
        if footprint > pool.free_bytes(Region.READ):
            break
        queues._pop()
        req.admitted = True
        windows.concurrency_in_use += 1
        windows.admit_count += 1
        admitted.append(req)
    return admitted


def issue_fragment(req: ReadRequest, windows: FlowWindows, pool: Pool,
                   now: int, fragment_max: int = FRAGMENT_MAX) -> Fragment | None:
    """Allocate a READ-region buffer for the request's next fragment and
    charge the in-flight window.  Returns None (no state change) when the
    window is full or the pool has no room; callers retry on the next
    completion or release."""
    assert req.admitted and req.remaining > 0
    size = req.next_fragment_size(fragment_max)
    if windows.inflight_used + size > windows.inflight_limit:
        windows.blocked_count += 1
        return None
    try:
        handle = pool.alloc(Region.READ, size, req.msg.app, now)
    except PoolExhausted:
        windows.blocked_count += 1
        return None
    frag = Fragment(parent=req.msg.id, index=req.fragments_issued, size=size,
                    handle=handle, request=req, issued_at=now)
    req.fragments_issued += 1
    windows.inflight_used += size
    windows._issued.add(id(frag))
    windows.check()
    return frag


def complete_fragment(frag: Fragment, windows: FlowWindows) -> None:
    """Wire delivery finished: release the in-flight bytes; the last fragment
    of a message frees its concurrency slot."""
    if id(frag) not in windows._issued:
        raise UnknownFragment(f"fragment {frag.parent}/{frag.index} was never issued")
    windows._issued.remove(id(frag))
    windows.inflight_used -= frag.size
    req = frag.request
    req.remaining -= frag.size
    if req.remaining == 0:
        windows.concurrency_in_use -= 1
    windows.check()


def recv_small(pool: Pool, msg: Message, now: int) -> BufferHandle:
    """Bind an arriving small message to a posted WQE (raises NoWqe when the
    SRQ has none posted, which surfaces as RNIC backpressure)."""
    if msg.kind is not MsgKind.SMALL:
        raise WrongPath(f"message {msg.id} is large; READ path only")
    return pool.consume_wqe(msg.app, now)
