"""Cache-resident buffer pool: a fixed reserved-LLC region split into an SRQ
part (posted receive buffers for small messages) and a READ part (large-message
fragments), slab-allocated in 4 KiB objects.

Object identity is explicit: every 4 KiB object has an integer id, so tests can
check that no two live handles ever share an object.  Memory-backed objects
added by the escape controller get ids above ``ESCAPE_ID_BASE`` and are counted
separately so that cache-residency accounting can exclude them.
"""

from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from .core import (
    KIB, MIB,
    ConfigError, DoubleFree, NoWqe, PoolExhausted, UnknownHandle,
)

OBJECT_SIZE = 4 * KIB
ESCAPE_ID_BASE = 1 << 32


class Region(Enum):
    SRQ = "srq"
    READ = "read"


@dataclass(frozen=True)
class PoolConfig:
    total_capacity: int = 12 * MIB
    srq_initial: int = 4 * MIB
    read_initial: int = 8 * MIB
    srq_min: int = 1 * MIB
    object_size: int = OBJECT_SIZE
    slack_factor: float = 1.25  # reserved-LLC footprint = total * slack

    def validate(self) -> None:
        if self.object_size <= 0:
            raise ConfigError("object_size must be positive")
        if self.srq_initial + self.read_initial != self.total_capacity:
            raise ConfigError(
                f"srq_initial + read_initial ({self.srq_initial + self.read_initial}) "
                f"!= total_capacity ({self.total_capacity})")
        if self.srq_min > self.srq_initial:
            raise ConfigError("srq_min exceeds srq_initial")
        for name in ("total_capacity", "srq_initial", "read_initial", "srq_min"):
            if getattr(self, name) % self.object_size != 0:
                raise ConfigError(f"{name} is not a multiple of object_size")
        if self.slack_factor < 1.0:
            raise ConfigError("slack_factor must be >= 1")

    @property
    def reserved_llc_bytes(self) -> int:
        return int(self.total_capacity * self.slack_factor)


@dataclass
class BufferHandle:
    """Ownership record for a run of pool objects.

    ``object_ids`` shrinks as slices release objects early; the handle is
    finalized (``released``) when the last object goes back.
    """

    id: int
    region: Region
    app: int
    size: int                       # rounded up to whole objects
    alloc_time: int
    object_ids: list[int] = field(default_factory=list)
    released: bool = False
    memory_backed: bool = False     # escape-supplied or copied to memory
    srq_wqe: bool = False           # consumed from a posted WQE
    retire_owed: int = 0            # replacement objects to retire on release

    @property
    def remaining_objects(self) -> int:
        return len(self.object_ids)


class _RegionState:
    __slots__ = ("free_cache", "free_escape", "capacity_objects",
                 "replacement_objects", "pending_retire", "live_objects")

    def __init__(self) -> None:
        self.free_cache: deque[int] = deque()
        self.free_escape: deque[int] = deque()
        self.capacity_objects = 0
        self.replacement_objects = 0
        self.pending_retire = 0
        self.live_objects = 0


class Pool:
    """Slab state for the whole reserved region.

    Owned by the simulator event loop; no internal locking.
    """

    def __init__(self, cfg: PoolConfig | None = None, *, post_initial_wqes: bool = True):
        cfg = cfg or PoolConfig()
        cfg.validate()
        self.cfg = cfg
        self.object_size = cfg.object_size
        self._next_handle_id = 0
        self._next_escape_id = ESCAPE_ID_BASE
        self.live: dict[int, BufferHandle] = {}
        self._released_ids: set[int] = set()
        self.regions = {Region.SRQ: _RegionState(), Region.READ: _RegionState()}

        srq_objs = cfg.srq_initial // cfg.object_size
        read_objs = cfg.read_initial // cfg.object_size
        srq = self.regions[Region.SRQ]
        read = self.regions[Region.READ]
        srq.free_cache.extend(range(srq_objs))
        srq.capacity_objects = srq_objs
        read.free_cache.extend(range(srq_objs, srq_objs + read_objs))
        read.capacity_objects = read_objs

        self.posted_wqes: deque[int] = deque()
        self.wqe_target = 0
        if post_initial_wqes:
            self.post_wqes(srq_objs)

    # -- allocation ---------------------------------------------------------

    def objects_for(self, size: int) -> int:
        return -(-size // self.object_size)

    def alloc(self, region: Region, size: int, app: int, now: int) -> BufferHandle:
        """Allocate the minimal whole-object run covering ``size`` bytes.

        Cache-resident objects are preferred; escape-supplied memory-backed
        objects are used only when the cache free list runs dry.  Raises
        :class:`PoolExhausted` with no partial effects.
        """
        if size <= 0:
            raise ConfigError("allocation size must be positive")
        st = self.regions[region]
        nobj = self.objects_for(size)
        if len(st.free_cache) + len(st.free_escape) < nobj:
            raise PoolExhausted(
                f"{region.value}: need {nobj} objects, "
                f"free {len(st.free_cache)}+{len(st.free_escape)}")
        ids = []
        from_cache = min(nobj, len(st.free_cache))
        for _ in range(from_cache):
            ids.append(st.free_cache.popleft())
        for _ in range(nobj - from_cache):
            ids.append(st.free_escape.popleft())
        st.live_objects += nobj
        handle = BufferHandle(
            id=self._next_handle_id, region=region, app=app,
            size=nobj * self.object_size, alloc_time=now, object_ids=ids,
            memory_backed=any(i >= ESCAPE_ID_BASE for i in ids))
        self._next_handle_id += 1
        self.live[handle.id] = handle
        return handle

    # -- release ------------------------------------------------------------

    def _return_object(self, region: Region, obj_id: int) -> None:
        st = self.regions[region]
        st.live_objects -= 1
        if obj_id >= ESCAPE_ID_BASE:
            if st.pending_retire > 0:
                st.pending_retire -= 1
                st.replacement_objects -= 1
            else:
                st.free_escape.append(obj_id)
        else:
            st.free_cache.append(obj_id)

    def _check_live(self, handle: BufferHandle) -> None:
        if handle.id in self._released_ids or handle.released:
            raise DoubleFree(f"handle {handle.id} already released")
        if handle.id not in self.live:
            raise UnknownHandle(f"handle {handle.id} not issued by this pool")

    def free_objects(self, handle: BufferHandle, count: int) -> None:
        """Release ``count`` objects early (slice-granularity recycle)."""
        self._check_live(handle)
        if count > handle.remaining_objects:
            raise DoubleFree(
                f"handle {handle.id}: freeing {count} of {handle.remaining_objects}")
        for _ in range(count):
            self._return_object(handle.region, handle.object_ids.pop())
        if not handle.object_ids:
            self._finalize(handle)

    def free(self, handle: BufferHandle) -> None:
        """Release every remaining object of the handle."""
        self._check_live(handle)
        for obj_id in handle.object_ids:
            self._return_object(handle.region, obj_id)
        handle.object_ids.clear()
        self._finalize(handle)

    def _finalize(self, handle: BufferHandle) -> None:
        handle.released = True
        del self.live[handle.id]
        self._released_ids.add(handle.id)
        if handle.retire_owed:
            self._retire_replacements(handle.region, handle.retire_owed)
            handle.retire_owed = 0
        if handle.srq_wqe and len(self.posted_wqes) < self.wqe_target:
            st = self.regions[Region.SRQ]
            if st.free_cache:
                self.posted_wqes.append(st.free_cache.popleft())

    def _retire_replacements(self, region: Region, count: int) -> None:
        st = self.regions[region]
        from_free = min(count, len(st.free_escape))
        for _ in range(from_free):
            st.free_escape.pop()
            st.replacement_objects -= 1
        st.pending_retire += count - from_free

    # -- SRQ / WQE management -----------------------------------------------

    def post_wqes(self, count: int) -> None:
        """Bind ``count`` free SRQ objects as receive buffers."""
        if count == 0:
            return
        st = self.regions[Region.SRQ]
        if (len(self.posted_wqes) + count) * self.object_size > st.capacity_objects * self.object_size:
            raise PoolExhausted(
                f"posting {count} WQEs exceeds SRQ capacity "
                f"({st.capacity_objects} objects)")
        if count > len(st.free_cache):
            raise PoolExhausted(
                f"posting {count} WQEs but only {len(st.free_cache)} SRQ objects free")
        for _ in range(count):
            self.posted_wqes.append(st.free_cache.popleft())
        self.wqe_target += count

    def consume_wqe(self, app: int, now: int) -> BufferHandle:
        """Bind an arriving small message to a posted WQE's buffer."""
        if not self.posted_wqes:
            raise NoWqe("no posted WQE available")
        obj_id = self.posted_wqes.popleft()
        st = self.regions[Region.SRQ]
        st.live_objects += 1
        handle = BufferHandle(
            id=self._next_handle_id, region=Region.SRQ, app=app,
            size=self.object_size, alloc_time=now, object_ids=[obj_id],
            srq_wqe=True)
        self._next_handle_id += 1
        self.live[handle.id] = handle
        return handle

    # -- rebalancing ---------------------------------------------------------

    def rebalance(self, demand_srq: int, demand_read: int) -> int:
        """Migrate capacity toward the demanded split.

        Only free objects and idle posted WQEs move (a WQE is unbound before
        migrating); live handles never move and the SRQ region never drops
        below ``srq_min``.  Returns the number of objects migrated (signed:
        positive toward READ).
        """
        obj = self.object_size
        srq, read = self.regions[Region.SRQ], self.regions[Region.READ]
        srq_cap_b = srq.capacity_objects * obj
        read_cap_b = read.capacity_objects * obj

        read_need = max(0, demand_read - read_cap_b) // obj
        if read_need:
            floor_objs = max(self.cfg.srq_min, demand_srq) // obj
            shrinkable = max(0, srq.capacity_objects - floor_objs)
            give = min(read_need, shrinkable,
                       len(srq.free_cache) + len(self.posted_wqes))
            from_free = min(give, len(srq.free_cache))
            for _ in range(from_free):
                read.free_cache.append(srq.free_cache.popleft())
            for _ in range(give - from_free):
                read.free_cache.append(self.posted_wqes.pop())
                self.wqe_target -= 1
            srq.capacity_objects -= give
            read.capacity_objects += give
            return give

        srq_need = max(0, demand_srq - srq_cap_b) // obj
        if srq_need:
            movable = min(srq_need, len(read.free_cache))
            for _ in range(movable):
                srq.free_cache.append(read.free_cache.popleft())
            read.capacity_objects -= movable
            srq.capacity_objects += movable
            return -movable
        return 0

    # -- escape support -------------------------------------------------------

    def add_replacement_objects(self, region: Region, count: int) -> None:
        """Memory-backed objects join the region's recyclable free list."""
        st = self.regions[region]
        for _ in range(count):
            st.free_escape.append(self._next_escape_id)
            self._next_escape_id += 1
        st.replacement_objects += count

    def convert_to_memory(self, handle: BufferHandle) -> int:
        """Copy-out support: the handle's cache objects return to the free
        list immediately; the handle stays live to its app but owns nothing.
        Returns the number of bytes whose backing moved to memory."""
        self._check_live(handle)
        freed = handle.remaining_objects
        for obj_id in handle.object_ids:
            self._return_object(handle.region, obj_id)
        handle.object_ids.clear()
        handle.memory_backed = True
        if handle.retire_owed:
            self._retire_replacements(handle.region, handle.retire_owed)
            handle.retire_owed = 0
        return freed * self.object_size

    def mark_replaced(self, handle: BufferHandle) -> int:
        """Straggler replacement: equal-sized memory-backed objects join the
        pool so recyclable capacity is unchanged; the straggler stays live."""
        self._check_live(handle)
        if handle.retire_owed or handle.memory_backed:
            return 0
        count = handle.remaining_objects
        self.add_replacement_objects(handle.region, count)
        handle.retire_owed = count
        return count * self.object_size

    # -- accounting -----------------------------------------------------------

    def free_bytes(self, region: Region) -> int:
        st = self.regions[region]
        return (len(st.free_cache) + len(st.free_escape)) * self.object_size

    def live_bytes(self) -> int:
        return sum(st.live_objects for st in self.regions.values()) * self.object_size

    def replacement_bytes(self) -> int:
        return sum(st.replacement_objects for st in self.regions.values()) * self.object_size

    def available_bytes(self) -> int:
        """Slab capacity ready for new allocations (posted WQEs excluded:
        they are bound to the small-message path until a message lands)."""
        free = sum(len(st.free_cache) + len(st.free_escape)
                   for st in self.regions.values())
        return free * self.object_size

    def region_capacity_bytes(self, region: Region) -> int:
        return self.regions[region].capacity_objects * self.object_size

    def stats(self) -> dict[str, int]:
        return {
            "free_srq_bytes": self.free_bytes(Region.SRQ),
            "free_read_bytes": self.free_bytes(Region.READ),
            "live_bytes": self.live_bytes(),
            "replacement_bytes": self.replacement_bytes(),
        }
