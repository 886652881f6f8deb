"""Cache-pressure-aware escape controller.

When the available pool shrinks below the safety threshold the controller
escalates through three actions: replace straggler buffers with pre-touched
memory-backed ones, copy the data of slowly-releasing applications out to
memory, and as a last resort lower the RNIC ECN threshold so senders back off.
Copies are throttled so their memory-bandwidth cost stays within a small
fraction (alpha) of the network line rate.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

from .core import MIB, ConfigError, CopyFailed
from .cache_pool import Pool
from .recycle import Registries

DEFAULT_TIME_TH = 1_000_000  # ns


@dataclass(frozen=True)
class EscapeConfig:
    cache_safe: int = 3 * MIB            # quarter of the default 12 MiB pool
    cache_danger: int = 12 * MIB // 10   # tenth of the default pool
    mem_esc: int = 4 * MIB
    credit: float = 0.5
    time_th: int = DEFAULT_TIME_TH
    alpha: float = 0.04

    def validate(self) -> None:
        if not self.cache_danger < self.cache_safe:
            raise ConfigError("cache_danger must be below cache_safe")
        if not 0 < self.credit <= 1:
            raise ConfigError("credit must be in (0, 1]")
        if not 0 < self.alpha <= 1:
            raise ConfigError("alpha must be in (0, 1]")


class ActionKind(Enum):
    BUFFER_REPLACE = "buffer_replace"
    DATA_COPY = "data_copy"
    MARK_ECN = "mark_ecn"
    RESTORE_ECN = "restore_ecn"


@dataclass(frozen=True)
class Action:
    kind: ActionKind
    app: int | None = None
    bytes: int = 0


@dataclass
class EscapeState:
    ecn_lowered: bool = False
    copy_queue: list = field(default_factory=list)     # handles pending copy-out
    copy_progress: dict = field(default_factory=dict)  # handle id -> bytes copied
    copy_log: list = field(default_factory=list)       # (time_ns, charged_bytes)
    copied_bytes_total: int = 0
    copy_failures: int = 0
    actions_taken: int = 0
    max_replacement_bytes: int = 0


def buffer_replace(pool: Pool, registries: Registries, cfg: EscapeConfig,
                   now: int) -> int:
    """Replace straggler buffers, oldest first, within the escape-memory
    budget.  Each replaced buffer contributes equal-sized memory-backed
    objects to the pool, so recyclable capacity is unchanged.  Returns bytes
    replaced (0 when there is no straggler or no budget)."""
    budget = cfg.mem_esc - pool.replacement_bytes()
    if budget <= 0:
        return 0
    candidates = []
    for app, reg in registries.apps.items():
        reg.scan(now, cfg.time_th)
        for hid in reg.iter_stragglers():
            handle = pool.live.get(hid)
            if handle is not None and not handle.retire_owed and not handle.memory_backed:
                candidates.append((handle.alloc_time, hid, handle))
    replaced = 0
    for _, _, handle in sorted(candidates, key=lambda c: c[:2]):
        need = handle.remaining_objects * pool.object_size
        if need > budget:
            continue
        replaced += pool.mark_replaced(handle)
        budget -= need
        if budget <= 0:
            break
    return replaced


def request_data_copy(app: int, pool: Pool, registries: Registries,
                      state: EscapeState, hostmodel, now: int) -> int:
    """Queue every cache-backed buffer of a slowly-releasing app for copy-out.

    The copy itself happens over later ticks under the alpha rate bound (see
    :func:`pump_copies`).  Raises :class:`CopyFailed` without touching any
    state when the host reports a machine-check-style fault."""
    if hostmodel is not None and not hostmodel.copy_allowed():
        state.copy_failures += 1
        raise CopyFailed("host fault: cache-to-memory copy aborted")
    reg = registries.apps.get(app)
    if reg is None:
        return 0
    queued = 0
    pending_ids = {h.id for h in state.copy_queue}
    for hid in list(reg._entries):
        handle = pool.live.get(hid)
        if handle is None or handle.memory_backed or hid in pending_ids:
            continue
        state.copy_queue.append(handle)
        queued += handle.remaining_objects * pool.object_size
    return queued


def pump_copies(pool: Pool, registries: Registries, cfg: EscapeConfig,
                state: EscapeState, hostmodel, now: int, dt_ns: int,
                line_rate: int) -> int:
    """Advance queued copy-outs within the token budget.

    Tokens refill at alpha x line_rate bytes of payload per second and never
    accumulate across ticks, so the copy bandwidth over any window is strictly
    bounded.  Large buffers copy over several ticks; their cache objects are
    freed only once the whole buffer has moved.  Each copied byte is charged
    twice on the memory bus (the write to memory plus the app's later read)."""
    budget = int(cfg.alpha * line_rate) * dt_ns // 1_000_000_000
    copied = 0
    while state.copy_queue and budget > 0:
        handle = state.copy_queue[0]
        if handle.released or handle.memory_backed:
            state.copy_queue.pop(0)
            state.copy_progress.pop(handle.id, None)
            continue
        size = handle.remaining_objects * pool.object_size
        done = state.copy_progress.get(handle.id, 0)
        take = min(budget, size - done)
        done += take
        budget -= take
        copied += take
        if done >= size:
            state.copy_queue.pop(0)
            state.copy_progress.pop(handle.id, None)
            pool.convert_to_memory(handle)
            reg = registries.apps.get(handle.app)
            if reg is not None and handle.id in reg._entries:
                # the buffer's cache residence ends here
                registries.on_release(handle.app, handle, now)
        else:
            state.copy_progress[handle.id] = done
    if copied:
        charged = 2 * copied
        state.copy_log.append((now, charged))
        state.copied_bytes_total += copied
        if hostmodel is not None:
            hostmodel.charge_copy(charged, dt_ns)
    return copied


def mark_ecn(hostmodel, state: EscapeState, on: bool) -> bool:
    """Switch the RNIC ECN threshold between normal and danger values.

    Idempotent per direction; returns True when a transition happened."""
    if on == state.ecn_lowered:
        return False
    state.ecn_lowered = on
    if hostmodel is not None:
        hostmodel.set_ecn_danger(on)
    return True


def escape_step(pool: Pool, registries: Registries, cfg: EscapeConfig,
                state: EscapeState, hostmodel, now: int) -> list[Action]:
    """One evaluation of the escape decision tree.

    With enough available pool this is a no-op (plus restoring a previously
    lowered ECN threshold once the pool is back above the safety line).
    Under pressure it replaces stragglers while escape memory is below its
    budget, otherwise copies out every app whose straggler share exceeds the
    credit, and finally lowers the ECN threshold if the pool is still below
    the danger line."""
    actions: list[Action] = []
    avl = pool.available_bytes()
    if avl < cfg.cache_safe:
        if pool.replacement_bytes() < cfg.mem_esc:
            replaced = buffer_replace(pool, registries, cfg, now)
            actions.append(Action(ActionKind.BUFFER_REPLACE, bytes=replaced))
        else:
            for app in sorted(registries.apps):
                reg = registries.apps[app]
                reg.scan(now, cfg.time_th)
                if reg.held_buf_num and reg.straggler_buf_num / reg.held_buf_num > cfg.credit:
                    try:
                        queued = request_data_copy(app, pool, registries, state,
                                                   hostmodel, now)
                    except CopyFailed:
                        continue
                    actions.append(Action(ActionKind.DATA_COPY, app=app, bytes=queued))
        if pool.available_bytes() < cfg.cache_danger:
            if mark_ecn(hostmodel, state, True):
                actions.append(Action(ActionKind.MARK_ECN))
    else:
        if state.ecn_lowered and avl >= cfg.cache_safe:
            mark_ecn(hostmodel, state, False)
            actions.append(Action(ActionKind.RESTORE_ECN))
    state.actions_taken += len(actions)
    state.max_replacement_bytes = max(state.max_replacement_bytes,
                                      pool.replacement_bytes())
    return actions
