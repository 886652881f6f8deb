"""Shared domain types, units and identifiers for the receiver-datapath simulator.

All times are integer nanoseconds, all sizes integer bytes and all rates
integer bytes per second, so that event ordering is exact and runs are
bit-reproducible.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from itertools import count

# Time units (nanoseconds).
NS = 1
US = 1_000
MS = 1_000_000
SEC = 1_000_000_000

# Sizes are binary internally (buffer/cache geometry); decimal MB appears
# only in human-facing sizing reports.
KIB = 1024
MIB = 1024 * 1024

def gbps(value: float) -> int:
    """Convert a Gbit/s figure to integer bytes per second."""
    return int(value * 1e9) // 8


SMALL_MSG_THRESHOLD = 4 * KIB


class SimError(Exception):
    """Base class for simulator errors."""


class ConfigError(SimError):
    """Malformed configuration or scenario."""


class ZeroSizeMessage(SimError):
    """A message must carry at least one byte."""


class PoolExhausted(SimError):
    """Not enough free objects in the requested pool region."""


class DoubleFree(SimError):
    """Buffer handle released more than once."""


class UnknownHandle(SimError):
    """Operation on a handle the pool has never issued."""


class WrongPath(SimError):
    """Message routed to the wrong receive path (SRQ vs READ)."""


class UnknownFragment(SimError):
    """Completion for a fragment that was never issued."""


class NoWqe(SimError):
    """No posted receive WQE available; surfaces as RNIC backpressure."""


class CopyFailed(SimError):
    """Cache-to-memory copy aborted by an injected host fault."""


class MsgKind(Enum):
    SMALL = "small"
    LARGE = "large"


def classify(size: int, threshold: int = SMALL_MSG_THRESHOLD) -> MsgKind:
    """Partition positive message sizes into SMALL (<= threshold) and LARGE.

    The boundary is inclusive on the small side: a message of exactly the
    threshold size still fits one SRQ receive buffer, so it takes the
    SEND/SRQ path.
    """
    if size <= 0:
        raise ZeroSizeMessage(f"message size must be positive, got {size}")
    return MsgKind.SMALL if size <= threshold else MsgKind.LARGE


@dataclass(frozen=True)
class Message:
    """An application message as seen by the receiver service."""

    id: int
    app: int
    qp: int
    size: int
    created_at: int
    kind: MsgKind


class IdFactory:
    """Dense, strictly increasing identifiers; one factory per run."""

    def __init__(self) -> None:
        self._next = count()

    def next(self) -> int:
        return next(self._next)


def make_message(ids: IdFactory, app: int, qp: int, size: int, now: int,
                 threshold: int = SMALL_MSG_THRESHOLD) -> Message:
    return Message(id=ids.next(), app=app, qp=qp, size=size,
                   created_at=now, kind=classify(size, threshold))
