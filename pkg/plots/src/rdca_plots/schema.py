"""Published CSV contracts of the simulator CLI.

These column lists are the external interface this package consumes; they are
replicated here (not imported) so the plot tool depends only on the artifact
files themselves.
"""

METRICS_COLUMNS = [
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

SWEEP_COLUMNS = [
    "msg_size_bytes", "goodput_gbps", "net_throughput_gbps", "mean_lat_us",
    "p99_lat_us", "pfc_paused_ns", "cnp_count", "drops", "ddio_miss_rate",
    "pool_miss_rate", "pcie_stalls",
]

COMPARE_COLUMNS = ["metric", "baseline", "jet"]

PANEL_SCHEMAS = {
    "SweepBars": SWEEP_COLUMNS,
    "TimeSeries": METRICS_COLUMNS,
    "CompareBars": COMPARE_COLUMNS,
}
