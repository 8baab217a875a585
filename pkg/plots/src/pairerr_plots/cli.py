"""Command-line rendering of pairerr artifacts.

Subcommands mirror the figure operations:
  scalability  --in scalability.csv --out fig
  fit          --in curves.csv [--in more_curves.csv] --in surface.csv --out fig
  bt           --in bt_histogram.csv [--in bt_spreads.csv] --out fig

Inputs are classified by their header row, so the order of --in flags does
not matter. Exit codes: 0 ok, 2 usage, 3 unreadable or mis-shaped input.
"""

from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .figures import plot_bt, plot_fit, plot_scalability
from .readers import SchemaError

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_INPUT = 3

_HEADERS = {
    ("n", "mean_delta_s", "std_delta_s", "runs", "source_label"): "curves",
    ("eps", "misfit"): "surface",
    ("eps_plus", "eps_minus", "misfit"): "surface",
    ("m", "n", "probability", "kind", "eps", "eps_plus", "eps_minus", "k_plus", "k_minus"): "scalability",
    ("bin_lo", "bin_hi", "count"): "histogram",
    ("seed", "eps", "spread"): "spreads",
}


def _classify(path: Path) -> str:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            for row in csv.reader(fh):
                if row and not row[0].startswith("#"):
                    break
            else:
                row = []
    except OSError as exc:
        raise SchemaError(f"cannot read {path}: {exc}") from exc
    kind = _HEADERS.get(tuple(row))
    if kind is None:
        raise SchemaError(f"{path}: header does not match any known artifact CSV")
    return kind


def _group_inputs(paths: list[str]) -> dict[str, list[Path]]:
    grouped: dict[str, list[Path]] = {}
    for p in paths:
        path = Path(p)
        grouped.setdefault(_classify(path), []).append(path)
    return grouped


def cmd_scalability(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    grouped = _group_inputs(args.inputs)
    tables = grouped.pop("scalability", [])
    if len(tables) != 1 or grouped:
        parser.error("scalability takes exactly one scalability CSV as --in")
    out = plot_scalability(tables[0], args.out, args.format)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_fit(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    grouped = _group_inputs(args.inputs)
    curves = grouped.pop("curves", [])
    surfaces = grouped.pop("surface", [])
    if not curves or len(surfaces) != 1 or grouped:
        parser.error("fit needs one or more curves CSVs and exactly one surface CSV as --in")
    out = plot_fit(curves, surfaces[0], args.out, args.format)
    print(f"wrote {out}")
    return EXIT_OK


def cmd_bt(args: argparse.Namespace, parser: argparse.ArgumentParser) -> int:
    grouped = _group_inputs(args.inputs)
    histograms = grouped.pop("histogram", [])
    spreads = grouped.pop("spreads", [])
    if len(histograms) != 1 or len(spreads) > 1 or grouped:
        parser.error("bt needs one histogram CSV and at most one spreads CSV as --in")
    out = plot_bt(histograms[0], spreads[0] if spreads else None, args.out, args.format)
    print(f"wrote {out}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="pairerr-plots", description="Render pairerr artifacts as figures."
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, handler, help_text in (
        ("scalability", cmd_scalability, "perfect-score probability curves"),
        ("fit", cmd_fit, "deviation curves and the misfit surface"),
        ("bt", cmd_bt, "strength-search spread curves and eps_opt histogram"),
    ):
        p = sub.add_parser(name, help=help_text)
        p.add_argument(
            "--in",
            dest="inputs",
            action="append",
            required=True,
            metavar="CSV",
            help="input artifact CSV (repeatable; classified by header)",
        )
        p.add_argument("--out", required=True, help="output image path")
        p.add_argument("--format", choices=("png", "svg"), default=None, help="image format (default: from suffix, else png)")
        p.set_defaults(func=handler)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args, parser)
    except SchemaError as exc:
        print(f"input error: {exc}", file=sys.stderr)
        return EXIT_INPUT


if __name__ == "__main__":
    sys.exit(main())
