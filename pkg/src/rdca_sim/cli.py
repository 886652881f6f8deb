"""Command-line entry point: scenario files, run/sweep/compare/sizing
subcommands, artifact output and exit codes.

Exit codes: 0 success, 1 I/O error, 2 configuration error, 3 internal
invariant violation.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from dataclasses import fields as dc_fields, replace

from .core import KIB, ConfigError, SimError
from .cache_pool import PoolConfig
from .escape import EscapeConfig
from .hostnet import CompetitorProfile, DcqcnParams, RnicBufferConfig
from .recycle import ProcessingModel
from . import sim
from .sim import Mode, Scenario, SlowAppConfig, Summary

EXIT_OK = 0
EXIT_IO = 1
EXIT_CONFIG = 2
EXIT_INTERNAL = 3


# -- scenario files -------------------------------------------------------------

def _line_of_key(raw: str, key: str) -> int | None:
    needle = f'"{key}"'
    for i, line in enumerate(raw.splitlines(), start=1):
        if needle in line:
            return i
    return None


def _build(cls, data: dict, raw: str, path: str, where: str):
    allowed = {f.name for f in dc_fields(cls)}
    for key in data:
        if key not in allowed:
            line = _line_of_key(raw, key)
            anchor = f"{path}:{line}" if line else path
            raise ConfigError(f"{anchor}: unknown key \"{key}\" in {where}")
    return cls(**data)


_NESTED = {
    "pool": PoolConfig,
    "processing": ProcessingModel,
    "escape": EscapeConfig,
    "rnic": RnicBufferConfig,
    "dcqcn": DcqcnParams,
    "slow_app": SlowAppConfig,
}


def load_scenario(path: str) -> Scenario:
    """Parse a scenario JSON file; unknown keys are rejected with the line of
    the offending key."""
    with open(path, "r", encoding="utf-8") as fh:
        raw = fh.read()
    try:
        data = json.loads(raw)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}:{exc.lineno}: invalid JSON: {exc.msg}") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: scenario must be a JSON object")

    kwargs = {}
    allowed = {f.name for f in dc_fields(Scenario)}
    for key, value in data.items():
        if key not in allowed:
            line = _line_of_key(raw, key)
            anchor = f"{path}:{line}" if line else path
            raise ConfigError(f"{anchor}: unknown key \"{key}\"")
        if key == "mode":
            try:
                kwargs[key] = Mode(value)
            except ValueError:
                raise ConfigError(f"{path}: unknown mode {value!r}") from None
        elif key == "competitor":
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: competitor must be an object")
            value = dict(value)
            if "schedule" in value:
                value["schedule"] = [tuple(p) for p in value["schedule"]]
            kwargs[key] = _build(CompetitorProfile, value, raw, path, "competitor")
        elif key in _NESTED:
            if not isinstance(value, dict):
                raise ConfigError(f"{path}: {key} must be an object")
            kwargs[key] = _build(_NESTED[key], value, raw, path, key)
        else:
            kwargs[key] = value
    try:
        scenario = Scenario(**kwargs)
        scenario.validate()
    except TypeError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    return scenario


def scenario_config_lines(sc: Scenario) -> list[str]:
    """Fully resolved configuration (defaults expanded) for reproducibility."""
    out = []
    for f in dc_fields(Scenario):
        v = getattr(sc, f.name)
        if v is None:
            out.append(f"{f.name} = none")
        elif hasattr(v, "__dataclass_fields__"):
            for g in dc_fields(v):
                out.append(f"{f.name}.{g.name} = {getattr(v, g.name)}")
        elif isinstance(v, Mode):
            out.append(f"{f.name} = {v.value}")
        else:
            out.append(f"{f.name} = {v}")
    return out


def write_summary(path: str, sc: Scenario, summary: Summary) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write("# resolved configuration\n")
        for line in scenario_config_lines(sc):
            fh.write(line + "\n")
        fh.write("\n# summary\n")
        for key, value in summary.as_dict().items():
            fh.write(f"{key} = {value}\n")


def _write_metrics(path: str, rows: list[dict]) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(sim.metrics_csv_text(rows))


# -- subcommands ---------------------------------------------------------------

def _out_dir(args) -> str:
    out = args.out or os.environ.get("RDCA_SIM_OUT") or "."
    os.makedirs(out, exist_ok=True)
    return out


def cmd_run(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    out = _out_dir(args)
    engine = sim.Engine(scenario)
    rows, summary = engine.run()
    _write_metrics(os.path.join(out, "metrics.csv"), rows)
    write_summary(os.path.join(out, "summary.txt"), scenario, summary)
    with open(os.path.join(out, "events.log"), "w", encoding="utf-8") as fh:
        for line in engine.event_log:
            fh.write(line + "\n")
    if not args.quiet:
        print(f"mode={summary.mode} goodput={summary.goodput_gbps:.3f} Gbps "
              f"cnp={summary.cnp_count} drops={summary.drops} "
              f"miss_rate={summary.ddio_miss_rate:.3f}")
        print(f"artifacts written to {out}")
    return EXIT_OK


_COMPARE_METRICS = [
    "goodput_gbps", "net_throughput_gbps", "mean_lat_us", "p99_lat_us",
    "pfc_paused_ns", "cnp_count", "drops", "ddio_miss_rate", "pool_miss_rate",
    "pcie_stalls",
]


def cmd_compare(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    out = _out_dir(args)
    sum_b, sum_j, rows_b, rows_j = sim.compare(scenario)
    _write_metrics(os.path.join(out, "baseline_metrics.csv"), rows_b)
    _write_metrics(os.path.join(out, "jet_metrics.csv"), rows_j)
    ratio = (sum_j.goodput_bytes_per_sec / sum_b.goodput_bytes_per_sec
             if sum_b.goodput_bytes_per_sec else float("inf"))
    lines = ["metric,baseline,jet"]
    for m in _COMPARE_METRICS:
        lines.append(f"{m},{getattr(sum_b, m)},{getattr(sum_j, m)}")
    lines.append(f"throughput_ratio,1.0,{ratio:.6f}")
    csv_text = "\n".join(lines) + "\n"
    with open(os.path.join(out, "compare.csv"), "w", encoding="utf-8") as fh:
        fh.write(csv_text)
    with open(os.path.join(out, "compare.txt"), "w", encoding="utf-8") as fh:
        fh.write(f"{'metric':<24}{'baseline':>18}{'jet':>18}\n")
        for m in _COMPARE_METRICS:
            fh.write(f"{m:<24}{getattr(sum_b, m):>18.6g}{getattr(sum_j, m):>18.6g}\n")
        fh.write(f"{'throughput_ratio':<24}{1.0:>18.6g}{ratio:>18.6g}\n")
    if not args.quiet:
        print(f"baseline goodput={sum_b.goodput_gbps:.3f} Gbps, "
              f"jet goodput={sum_j.goodput_gbps:.3f} Gbps, ratio={ratio:.2f}")
        print(f"artifacts written to {out}")
    return EXIT_OK


SWEEP_COLUMNS = [
    "msg_size_bytes", "goodput_gbps", "net_throughput_gbps", "mean_lat_us",
    "p99_lat_us", "pfc_paused_ns", "cnp_count", "drops", "ddio_miss_rate",
    "pool_miss_rate", "pcie_stalls",
]


def _sweep_one(payload) -> tuple[int, dict]:
    scenario, size = payload
    _, summary = sim.run(replace(scenario, msg_size=size))
    return size, summary.as_dict()


def sweep_csv_text(results: list[tuple[int, dict]]) -> str:
    lines = [",".join(SWEEP_COLUMNS)]
    for size, s in sorted(results):
        vals = [str(size)]
        for col in SWEEP_COLUMNS[1:]:
            v = s[col]
            vals.append(f"{v:.6f}" if isinstance(v, float) else str(v))
        lines.append(",".join(vals))
    return "\n".join(lines) + "\n"


def cmd_sweep(args) -> int:
    scenario = load_scenario(args.scenario)
    if args.seed is not None:
        scenario = replace(scenario, seed=args.seed)
    try:
        sizes = [int(s) for s in args.sizes.split(",") if s]
    except ValueError:
        raise ConfigError(f"bad --sizes list: {args.sizes!r}") from None
    if not sizes or any(s <= 0 for s in sizes):
        raise ConfigError(f"bad --sizes list: {args.sizes!r}")
    out = _out_dir(args)
    payloads = [(scenario, size) for size in sizes]
    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            results = list(pool.map(_sweep_one, payloads))
    else:
        results = [_sweep_one(p) for p in payloads]
    # merged deterministically by size regardless of completion order
    text = sweep_csv_text(results)
    with open(os.path.join(out, "sweep.csv"), "w", encoding="utf-8") as fh:
        fh.write(text)
    if not args.quiet:
        for size, s in sorted(results):
            print(f"msg_size={size}: goodput={s['goodput_gbps']:.3f} Gbps "
                  f"miss_rate={s['ddio_miss_rate']:.3f}")
        print(f"artifacts written to {out}")
    return EXIT_OK


def compute_sizing(rate_bytes_per_sec: int, timespan_us: int,
                   wqe_count: int = 1024, wqe_size: int = 4 * KIB,
                   concurrency: int = 32, fragment_max: int = 256 * KIB) -> dict:
    """Queue-length arithmetic: buffer needed = arrival rate x residence time,
    plus the standing SRQ + READ pool recommendation."""
    if rate_bytes_per_sec <= 0 or timespan_us <= 0:
        raise ConfigError("rate and timespan must be positive")
    required = rate_bytes_per_sec * timespan_us // 1_000_000
    srq = wqe_count * wqe_size
    read = concurrency * fragment_max
    return {
        "required_buffer_bytes": required,
        "line_rate_bytes_per_sec": rate_bytes_per_sec,
        "post_rnic_timespan_us": timespan_us,
        "recommended_srq_bytes": srq,
        "recommended_read_bytes": read,
        "recommended_pool_bytes": srq + read,
    }


def format_mb(nbytes: int) -> str:
    if nbytes % 1_000_000 == 0:
        return f"{nbytes // 1_000_000} MB"
    return f"{nbytes / 1_000_000:.3f} MB"


def cmd_sizing(args) -> int:
    rate = int(args.gbps * 1e9) // 8
    report = compute_sizing(rate, args.timespan_us)
    print(f"required_buffer = {format_mb(report['required_buffer_bytes'])}")
    for key, value in report.items():
        print(f"{key} = {value}")
    return EXIT_OK


# -- entry point ------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rdca-sim",
        description="Receiver-datapath simulator: cache-resident buffer pool "
                    "vs. default DDIO processing under memory-bandwidth contention")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp):
        sp.add_argument("--scenario", required=True, help="scenario JSON file")
        sp.add_argument("--out", default=None,
                        help="output directory (default: $RDCA_SIM_OUT or .)")
        sp.add_argument("--seed", type=int, default=None,
                        help="override the scenario seed")
        sp.add_argument("--quiet", action="store_true")

    sp = sub.add_parser("run", help="run one scenario")
    common(sp)
    sp.set_defaults(func=cmd_run)

    sp = sub.add_parser("compare", help="run baseline and cache-pool modes side by side")
    common(sp)
    sp.set_defaults(func=cmd_compare)

    sp = sub.add_parser("sweep", help="run a message-size sweep")
    common(sp)
    sp.add_argument("--sizes", required=True,
                    help="comma-separated message sizes in bytes")
    sp.add_argument("--jobs", type=int, default=1, help="parallel workers")
    sp.set_defaults(func=cmd_sweep)

    sp = sub.add_parser("sizing", help="required-buffer arithmetic for a line rate")
    sp.add_argument("--gbps", type=float, required=True, help="line rate in Gbit/s")
    sp.add_argument("--timespan-us", type=int, required=True,
                    help="average post-RNIC residence time in microseconds")
    sp.set_defaults(func=cmd_sizing)
    return p


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_IO
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SimError as exc:
        print(f"internal error: {exc}", file=sys.stderr)
        return EXIT_INTERNAL
    except AssertionError as exc:
        print(f"internal invariant violated: {exc}", file=sys.stderr)
        return EXIT_INTERNAL


if __name__ == "__main__":
    sys.exit(main())
