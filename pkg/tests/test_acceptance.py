"""Acceptance suite: one test per criterion, each printing a PASS line with
the measured values (run with ``pytest tests/test_acceptance.py -v -s``).

The expensive scenario runs are shared through module-scoped fixtures; every
tolerance is pinned here, not computed from the results.
"""

import dataclasses
import hashlib
import random

import pytest

from rdca_sim.core import KIB, MIB, PoolExhausted, gbps, IdFactory, make_message
from rdca_sim.cache_pool import Pool, PoolConfig, Region
from rdca_sim import flow_control as fc
from rdca_sim.flow_control import AdmissionQueues, FlowWindows, Qos, ReadRequest
from rdca_sim.recycle import AppRegistry, Registries
from rdca_sim.escape import EscapeConfig, EscapeState, escape_step
from rdca_sim import sim
from rdca_sim.sim import Mode, Scenario, SlowAppConfig, metrics_csv_text
from rdca_sim.cli import compute_sizing, format_mb

from test_escape import (as_tuples, random_escape_case, snapshot_for_oracle,
                         transliterated_escape)

SWEEP_SIZES = [64 * KIB, 128 * KIB, 256 * KIB, 512 * KIB, 1 * MIB]
LINE_RATE = gbps(200)


def acceptance_scenario(**kw) -> Scenario:
    kw.setdefault("mode", Mode.BASELINE_DDIO)
    kw.setdefault("network", "Lossy100G")
    kw.setdefault("qp_count", 32)
    kw.setdefault("competitor_intensity", 1.0)
    kw.setdefault("duration_ns", 20_000_000)
    kw.setdefault("seed", 1)
    return Scenario(**kw)


@pytest.fixture(scope="module")
def baseline_sweep():
    base = acceptance_scenario()
    return {size: sim.run(dataclasses.replace(base, msg_size=size))[1]
            for size in SWEEP_SIZES}


@pytest.fixture(scope="module")
def jet_256k():
    sc = acceptance_scenario(mode=Mode.JET, msg_size=256 * KIB)
    rows, summary = sim.run(sc)
    return rows, summary


def test_a1_sizing_exactness(capsys):
    report = compute_sizing(200 * 10 ** 9 // 8, 200)
    assert report["required_buffer_bytes"] == 5_000_000      # exact integer
    assert format_mb(report["required_buffer_bytes"]) == "5 MB"
    print(f"\n[A1] PASS sizing(200 Gbps, 200 us) = "
          f"{format_mb(report['required_buffer_bytes'])} "
          f"({report['required_buffer_bytes']} bytes)")


def test_a2_baseline_degradation_trend(baseline_sweep):
    tput = {s: baseline_sweep[s].goodput_gbps for s in SWEEP_SIZES}
    miss = [baseline_sweep[s].ddio_miss_rate for s in SWEEP_SIZES]
    assert tput[1 * MIB] <= 0.70 * tput[64 * KIB]
    assert baseline_sweep[1 * MIB].ddio_miss_rate >= 0.95
    assert miss == sorted(miss)          # monotone non-decreasing
    print(f"\n[A2] PASS baseline: tput 64K={tput[64 * KIB]:.1f} Gbps -> "
          f"1M={tput[1 * MIB]:.1f} Gbps "
          f"(ratio {tput[1 * MIB] / tput[64 * KIB]:.3f} <= 0.70), "
          f"miss={['%.3f' % m for m in miss]}")


def test_a3_jet_recovery(baseline_sweep, jet_256k):
    base = baseline_sweep[256 * KIB]
    _, jet = jet_256k
    assert jet.pool_writes > 0
    assert jet.pool_miss_rate == 0.0
    assert jet.pfc_paused_ns <= 0.01 * base.pfc_paused_ns
    assert jet.cnp_count <= 0.01 * base.cnp_count
    ratio = jet.goodput_bytes_per_sec / base.goodput_bytes_per_sec
    assert ratio >= 1.5
    print(f"\n[A3] PASS jet: pool miss rate {jet.pool_miss_rate}, "
          f"pfc {jet.pfc_paused_ns} vs {base.pfc_paused_ns} ns, "
          f"cnp {jet.cnp_count} vs {base.cnp_count}, "
          f"throughput ratio {ratio:.2f} >= 1.5")


def test_a4_window_safety_100k_events():
    ids = IdFactory()
    pool = Pool(PoolConfig(), post_initial_wqes=False)
    windows = FlowWindows()
    queues = AdmissionQueues()
    rng = random.Random(4242)
    inflight = []
    events = 0
    violations = 0
    while events < 100_000:
        r = rng.random()
        if r < 0.35:
            msg = make_message(ids, 0, 0, rng.choice([64, 256, 512, 1024]) * KIB, 0)
            queues.submit(ReadRequest(msg=msg,
                                      qos=rng.choice([Qos.HIGH, Qos.LOW]),
                                      enqueued_at=events))
        elif r < 0.65:
            for req in fc.admit(queues, windows, pool, now=events,
                                line_rate=LINE_RATE):
                frag = fc.issue_fragment(req, windows, pool, now=events)
                if frag is not None:
                    inflight.append(frag)
        elif inflight:
            frag = inflight.pop(rng.randrange(len(inflight)))
            fc.complete_fragment(frag, windows)
            pool.free(frag.handle)
            req = frag.request
            if req.remaining > 0:
                nxt = fc.issue_fragment(req, windows, pool, now=events)
                if nxt is not None:
                    inflight.append(nxt)
        events += 1
        if not (0 <= windows.concurrency_in_use <= 32
                and 0 <= windows.inflight_used <= 8 * MIB):
            violations += 1
    assert violations == 0
    print(f"\n[A4] PASS window safety: {events} events, "
          f"0 violations (concurrency <= 32, in-flight <= 8 MiB)")


def test_a5_pool_conservation_100k_steps():
    pool = Pool(PoolConfig())
    regs = Registries()
    cfg = EscapeConfig()
    rng = random.Random(55)
    live = []
    live_objects: set[int] = set()
    steps = 0
    now = 0
    while steps < 100_000:
        now += rng.randrange(1, 2000)
        r = rng.random()
        if r < 0.42:
            region = Region.READ if rng.random() < 0.8 else Region.SRQ
            try:
                h = pool.alloc(region, rng.randrange(1, 64 * KIB),
                               app=rng.randrange(4), now=now)
            except PoolExhausted:
                h = None
            if h is not None:
                for obj in h.object_ids:
                    assert obj not in live_objects      # overlap check
                    live_objects.add(obj)
                regs.on_alloc(h.app, h)
                live.append(h)
        elif r < 0.8 and live:
            h = live.pop(rng.randrange(len(live)))
            freed = list(h.object_ids)
            if rng.random() < 0.3 and h.remaining_objects > 1:
                pool.free_objects(h, 1)
                live_objects.discard(freed[-1])
                if not h.released:
                    live.append(h)
                else:
                    regs.on_release(h.app, h, now)
            else:
                pool.free(h)
                live_objects.difference_update(freed)
                regs.on_release(h.app, h, now)
        elif r < 0.9:
            pool.rebalance(rng.randrange(0, 6 * MIB), rng.randrange(0, 12 * MIB))
        else:
            escape_step(pool, regs, cfg, EscapeState(), None, now)
        # conservation: per region, free + posted + live == capacity + replacement
        for region, st in pool.regions.items():
            posted = len(pool.posted_wqes) if region is Region.SRQ else 0
            lhs = len(st.free_cache) + len(st.free_escape) + posted + st.live_objects
            assert lhs == st.capacity_objects + st.replacement_objects
        steps += 1
    assert sum(st.live_objects for st in pool.regions.values()) == \
        sum(h.remaining_objects for h in pool.live.values())
    print(f"\n[A5] PASS pool conservation: {steps} steps, "
          f"0 violations, 0 overlaps, 0 double frees")


def test_a6_escape_decision_fidelity_10k():
    rng = random.Random(6001)
    mismatches = 0
    cases = 10_000
    branch_seen = set()
    for _ in range(cases):
        pool, regs, cfg, state, now = random_escape_case(rng)
        avl, repl, stragglers, ratios = snapshot_for_oracle(pool, regs, cfg, now)
        expected = transliterated_escape(avl, repl, stragglers, ratios, cfg,
                                         state.ecn_lowered)
        got = as_tuples(escape_step(pool, regs, cfg, state, None, now))
        if got != expected:
            mismatches += 1
        for kind, _, _ in got or [("none", None, None)]:
            branch_seen.add(kind)
    assert mismatches == 0
    assert {"none", "buffer_replace", "data_copy",
            "mark_ecn"} <= branch_seen
    print(f"\n[A6] PASS escape fidelity: {cases} randomized states, "
          f"0 mismatches, branches seen: {sorted(branch_seen)}")


def test_a7_escape_cost_bound(jet_256k):
    alpha = 0.04
    sc = acceptance_scenario(
        mode=Mode.JET, msg_size=256 * KIB, duration_ns=50_000_000,
        slow_app=SlowAppConfig(app=0, fraction=0.8, hold_ns=20_000_000))
    engine = sim.Engine(sc)
    rows, summary = engine.run()
    state = engine.escape_state
    assert summary.copied_bytes > 0            # the copy path actually ran

    # every 1 s window of the copy log stays within alpha * line * 2
    bound_per_s = alpha * LINE_RATE * 2
    log = state.copy_log
    for i, (t0, _) in enumerate(log):
        in_window = sum(b for t, b in log if t0 <= t < t0 + 10 ** 9)
        assert in_window <= bound_per_s
    # and per tick, the token bucket grants at most the pro-rated budget
    per_tick = int(alpha * LINE_RATE) * sc.tick_ns * 2 // 10 ** 9
    assert all(b <= per_tick for _, b in log)

    assert summary.max_replacement_bytes <= sc.escape.mem_esc
    assert all(r["replace_mem_bytes"] <= sc.escape.mem_esc for r in rows)

    _, nominal = jet_256k
    assert nominal.max_replacement_bytes <= 1 * MIB
    print(f"\n[A7] PASS escape cost: copied {summary.copied_bytes} bytes, "
          f"max 1s-window copy bw {max((b for _, b in log), default=0) * 10 ** 9 / sc.tick_ns / 1e9:.3f} GB/s "
          f"<= {bound_per_s / 1e9:.1f} GB/s, "
          f"replacement max {summary.max_replacement_bytes} <= {sc.escape.mem_esc}, "
          f"nominal escape cache {nominal.max_replacement_bytes} <= 1 MiB")


def test_a8_straggler_scan_oracle_1m_events():
    rng = random.Random(88)
    regs = {app: AppRegistry() for app in range(8)}
    alive = {app: {} for app in range(8)}
    now = 0
    next_id = 0
    time_th = 1_000_000
    mismatches = 0
    checks = 0
    for event in range(1_000_000):
        now += rng.randrange(0, 2000)
        app = rng.randrange(8)
        if alive[app] and rng.random() < 0.5:
            hid = next(iter(alive[app]))
            del alive[app][hid]
            regs[app].remove(hid)
        else:
            alive[app][next_id] = now
            regs[app].add(next_id, now)
            next_id += 1
        if event % 1000 == 999:        # sampling tick
            for a in range(8):
                got = regs[a].scan(now, time_th)
                want = sum(1 for t in alive[a].values() if now - t > time_th)
                if got != want or got != regs[a].recount(now, time_th):
                    mismatches += 1
                checks += 1
    assert mismatches == 0
    print(f"\n[A8] PASS straggler scan: 1000000 events, {checks} recount "
          f"comparisons, 0 mismatches")


def test_a9_lossless_scenarios_never_drop():
    cases = [
        acceptance_scenario(network="Lossless25G", msg_size=64 * KIB,
                            duration_ns=10_000_000),
        acceptance_scenario(network="Lossless25G", msg_size=1 * MIB,
                            duration_ns=10_000_000),
        acceptance_scenario(network="Lossless25G", mode=Mode.JET,
                            msg_size=256 * KIB, duration_ns=10_000_000),
        acceptance_scenario(network="Lossless25G", mode=Mode.JET,
                            msg_size=256 * KIB, duration_ns=10_000_000,
                            slow_app=SlowAppConfig(app=0, fraction=0.8,
                                                   hold_ns=10_000_000)),
    ]
    drops = []
    for sc in cases:
        _, summary = sim.run(sc)
        drops.append(summary.drops)
    assert drops == [0] * len(cases)
    print(f"\n[A9] PASS lossless guarantee: {len(cases)} scenarios, "
          f"drops = {drops}")


def test_a10_determinism_hash_equality():
    sc = acceptance_scenario(msg_size=256 * KIB, seed=97,
                             duration_ns=10_000_000)
    h = []
    for _ in range(2):
        rows, _ = sim.run(sc)
        text = metrics_csv_text(rows)
        h.append(hashlib.sha256(text.encode()).hexdigest())
    assert h[0] == h[1]
    print(f"\n[A10] PASS determinism: sha256 {h[0][:16]}... identical "
          f"across two runs")
