"""Plot tool entry point: either a JSON figure spec or positional CSVs with
panel flags."""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields as dc_fields

from .render import FigureSpec, SchemaError, render


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(
        prog="rdca-plot",
        description="Render simulator CSV artifacts into static PNG/SVG figures")
    p.add_argument("csv", nargs="*", help="input CSV artifact(s)")
    p.add_argument("--spec", help="JSON figure spec (overrides other flags)")
    p.add_argument("--panel", choices=["SweepBars", "TimeSeries", "CompareBars"],
                   help="panel type for positional CSV inputs")
    p.add_argument("--out", help="output image path (.png or .svg)")
    p.add_argument("--title", default="")
    p.add_argument("--xlabel", default="")
    p.add_argument("--ylabel", default="")
    p.add_argument("--columns", default="",
                   help="comma-separated metric columns (TimeSeries only)")
    return p


def spec_from_args(args) -> FigureSpec:
    if args.spec:
        with open(args.spec, "r", encoding="utf-8") as fh:
            data = json.load(fh)
        allowed = {f.name for f in dc_fields(FigureSpec)}
        unknown = set(data) - allowed
        if unknown:
            raise SchemaError(f"{args.spec}: unknown spec keys: "
                              f"{', '.join(sorted(unknown))}")
        return FigureSpec(**data)
    if not args.csv or not args.panel or not args.out:
        raise SchemaError("need --spec FILE, or CSV inputs with --panel and --out")
    return FigureSpec(
        inputs=args.csv, panel=args.panel, output=args.out, title=args.title,
        xlabel=args.xlabel, ylabel=args.ylabel,
        columns=[c for c in args.columns.split(",") if c])


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        out = render(spec_from_args(args))
    except SchemaError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except FileNotFoundError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    print(out)
    return 0


if __name__ == "__main__":
    sys.exit(main())
