import warnings

import pytest

from rdca_plots.render import FigureSpec, SchemaError, read_csv, render
from rdca_plots.schema import (COMPARE_COLUMNS, METRICS_COLUMNS,
                               SWEEP_COLUMNS)
from rdca_plots.cli import main


def write_sweep_csv(path, rows=3):
    lines = [",".join(SWEEP_COLUMNS)]
    for i in range(rows):
        size = 65536 * (i + 1)
        lines.append(f"{size},{200 - 60 * i}.5,200.0,12.{i},80.0,0,"
                     f"{100 * i},0,0.{i},0.0,{i}")
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def write_compare_csv(path):
    lines = [",".join(COMPARE_COLUMNS),
             "goodput_gbps,2.5,199.9",
             "net_throughput_gbps,6.7,199.9",
             "cnp_count,6240,0",
             "ddio_miss_rate,1.0,0.0",
             "pcie_stalls,9749,0",
             "throughput_ratio,1.0,79.4"]
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def write_metrics_csv(path, rows=5):
    lines = [",".join(METRICS_COLUMNS)]
    for i in range(rows):
        vals = [str(100000 * (i + 1))] + ["0"] * (len(METRICS_COLUMNS) - 1)
        vals[METRICS_COLUMNS.index("goodput_gbps")] = f"{50 + i}.25"
        vals[METRICS_COLUMNS.index("net_throughput_gbps")] = f"{60 + i}.5"
        lines.append(",".join(vals))
    path.write_text("\n".join(lines) + "\n")
    return str(path)


def test_sweep_bars_renders(tmp_path):
    csv = write_sweep_csv(tmp_path / "sweep.csv")
    out = render(FigureSpec(inputs=[csv], panel="SweepBars",
                            output=str(tmp_path / "sweep.png")))
    assert (tmp_path / "sweep.png").stat().st_size > 0


def test_compare_bars_renders(tmp_path):
    csv = write_compare_csv(tmp_path / "compare.csv")
    render(FigureSpec(inputs=[csv], panel="CompareBars",
                      output=str(tmp_path / "cmp.svg")))
    assert (tmp_path / "cmp.svg").stat().st_size > 0


def test_time_series_renders_selected_columns(tmp_path):
    csv = write_metrics_csv(tmp_path / "metrics.csv")
    render(FigureSpec(inputs=[csv], panel="TimeSeries",
                      output=str(tmp_path / "ts.png"),
                      columns=["goodput_gbps", "net_throughput_gbps"]))
    assert (tmp_path / "ts.png").stat().st_size > 0


def test_schema_mismatch_names_missing_columns(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("msg_size_bytes,goodput_gbps\n65536,100.0\n")
    with pytest.raises(SchemaError) as exc:
        read_csv(str(p), "SweepBars")
    assert "ddio_miss_rate" in str(exc.value)


def test_unknown_metric_column_rejected(tmp_path):
    csv = write_metrics_csv(tmp_path / "metrics.csv")
    with pytest.raises(SchemaError) as exc:
        render(FigureSpec(inputs=[csv], panel="TimeSeries",
                          output=str(tmp_path / "x.png"),
                          columns=["not_a_metric"]))
    assert "not_a_metric" in str(exc.value)


def test_empty_body_renders_empty_axes(tmp_path):
    p = tmp_path / "empty.csv"
    p.write_text(",".join(SWEEP_COLUMNS) + "\n")
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        render(FigureSpec(inputs=[str(p)], panel="SweepBars",
                          output=str(tmp_path / "empty.png")))
    assert any("empty" in str(w.message) for w in caught)
    assert (tmp_path / "empty.png").stat().st_size > 0


def test_rendering_is_deterministic(tmp_path):
    csv = write_sweep_csv(tmp_path / "sweep.csv")
    out_a = str(tmp_path / "a.png")
    out_b = str(tmp_path / "b.png")
    render(FigureSpec(inputs=[csv], panel="SweepBars", output=out_a))
    render(FigureSpec(inputs=[csv], panel="SweepBars", output=out_b))
    assert (tmp_path / "a.png").read_bytes() == (tmp_path / "b.png").read_bytes()
    svg_a = str(tmp_path / "a.svg")
    svg_b = str(tmp_path / "b.svg")
    render(FigureSpec(inputs=[csv], panel="SweepBars", output=svg_a))
    render(FigureSpec(inputs=[csv], panel="SweepBars", output=svg_b))
    assert (tmp_path / "a.svg").read_bytes() == (tmp_path / "b.svg").read_bytes()


# -- CLI surface -----------------------------------------------------------------

def test_cli_positional_inputs(tmp_path, capsys):
    csv = write_compare_csv(tmp_path / "compare.csv")
    out = str(tmp_path / "cmp.png")
    assert main([csv, "--panel", "CompareBars", "--out", out]) == 0
    assert out in capsys.readouterr().out


def test_cli_spec_file(tmp_path):
    csv = write_sweep_csv(tmp_path / "sweep.csv")
    spec = tmp_path / "fig.json"
    spec.write_text(f'{{"inputs": ["{csv}"], "panel": "SweepBars", '
                    f'"output": "{tmp_path / "fig.png"}", "title": "sweep"}}')
    assert main(["--spec", str(spec)]) == 0
    assert (tmp_path / "fig.png").exists()


def test_cli_schema_error_exit_code(tmp_path, capsys):
    p = tmp_path / "bad.csv"
    p.write_text("wrong,header\n1,2\n")
    assert main([str(p), "--panel", "SweepBars",
                 "--out", str(tmp_path / "x.png")]) == 2
    assert "missing columns" in capsys.readouterr().err


def test_cli_missing_file_exit_code(tmp_path, capsys):
    assert main([str(tmp_path / "absent.csv"), "--panel", "SweepBars",
                 "--out", str(tmp_path / "x.png")]) == 1


def test_cli_unknown_spec_key(tmp_path, capsys):
    spec = tmp_path / "fig.json"
    spec.write_text('{"inputs": [], "panel": "SweepBars", '
                    '"output": "x.png", "color": "red"}')
    assert main(["--spec", str(spec)]) == 2
    assert "color" in capsys.readouterr().err


def test_cli_incomplete_args(capsys):
    assert main([]) == 2
