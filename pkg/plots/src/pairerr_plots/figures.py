"""Figure builders and the file-to-file plot operations.

The build_* functions turn already-read arrays into matplotlib figures and
are what the tests inspect; the plot_* functions wrap them with reading
and saving. Rendering is headless (Agg) and writes PNG or SVG, chosen by
the output suffix unless a format is forced.
"""

from __future__ import annotations

from pathlib import Path
from typing import Sequence

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt
import numpy as np

from .readers import (
    Curve,
    Histogram,
    ScalabilitySeries,
    SpreadCurves,
    Surface1D,
    Surface2D,
    read_curves,
    read_histogram,
    read_scalability,
    read_spreads,
    read_surface,
)

_FORMATS = ("png", "svg")


def _save(fig, out_image: str | Path, image_format: str | None) -> Path:
    out = Path(out_image)
    fmt = image_format or (out.suffix.lstrip(".").lower() or "png")
    if fmt not in _FORMATS:
        raise ValueError(f"unsupported image format {fmt!r}; use one of {', '.join(_FORMATS)}")
    if not out.suffix:
        out = out.with_suffix(f".{fmt}")
    out.parent.mkdir(parents=True, exist_ok=True)
    fig.savefig(out, format=fmt, dpi=150, bbox_inches="tight")
    plt.close(fig)
    return out


def build_scalability_figure(series: Sequence[ScalabilitySeries]):
    """Probability of a perfect score vs ensemble size, one line per series."""
    fig, ax = plt.subplots(figsize=(7, 4.5))
    for s in series:
        ax.plot(s.ns, s.probabilities, marker=".", markersize=4, label=s.label)
    ax.set_yscale("log")
    ax.set_xlabel("ensemble size N")
    ax.set_ylabel("P(exact Copeland score)")
    ax.set_title("Perfect-score probability shrinks with the ensemble")
    ax.legend(fontsize=8)
    ax.grid(True, which="both", alpha=0.3)
    return fig


def plot_scalability(csv_path: str | Path, out_image: str | Path, image_format: str | None = None) -> Path:
    """Render a scalability CSV to an image file."""
    return _save(build_scalability_figure(read_scalability(csv_path)), out_image, image_format)


def build_fit_figure(curves: Sequence[Curve], surface: Surface1D | Surface2D):
    """Deviation curves next to their misfit surface.

    The left panel shows every labeled curve with a +-1 std band. The right
    panel is the misfit line with its minimum marked (1-D fits), or the
    misfit heatmap with the minimum marked and an inset tracing the
    equal-rates diagonal (2-D fits).
    """
    fig, (ax_curves, ax_surface) = plt.subplots(1, 2, figsize=(11, 4.5))
    for curve in curves:
        style = "-" if curve.label.startswith("empirical") else "--"
        (line,) = ax_curves.plot(curve.ns, curve.means, style, label=curve.label)
        ax_curves.fill_between(
            curve.ns,
            curve.means - curve.stds,
            curve.means + curve.stds,
            color=line.get_color(),
            alpha=0.15,
            linewidth=0,
        )
    ax_curves.set_xlabel("subset size n")
    ax_curves.set_ylabel("mean deviation from the perfect sequence")
    ax_curves.set_title("Observed vs best-fit synthetic deviation")
    if curves:
        ax_curves.legend(fontsize=8)
    ax_curves.grid(True, alpha=0.3)

    if isinstance(surface, Surface1D):
        ax_surface.plot(surface.eps, surface.misfit, marker=".", markersize=4)
        best = int(np.argmin(surface.misfit))
        ax_surface.plot([surface.eps[best]], [surface.misfit[best]], "r*", markersize=12)
        ax_surface.annotate(
            f"best eps = {surface.eps[best]:g}",
            (surface.eps[best], surface.misfit[best]),
            textcoords="offset points",
            xytext=(8, 8),
            fontsize=9,
        )
        ax_surface.set_xlabel("candidate eps")
        ax_surface.set_ylabel("misfit")
        ax_surface.set_title("Misfit over the rate grid")
        ax_surface.grid(True, alpha=0.3)
    else:
        mesh = ax_surface.pcolormesh(
            surface.eps_minus, surface.eps_plus, surface.misfit, shading="nearest"
        )
        fig.colorbar(mesh, ax=ax_surface, label="misfit")
        bi, bj = np.unravel_index(int(np.argmin(surface.misfit)), surface.misfit.shape)
        ax_surface.plot([surface.eps_minus[bj]], [surface.eps_plus[bi]], "r*", markersize=12)
        ax_surface.set_xlabel("candidate eps_minus")
        ax_surface.set_ylabel("candidate eps_plus")
        ax_surface.set_title(
            f"Misfit surface, best ({surface.eps_plus[bi]:g}, {surface.eps_minus[bj]:g})"
        )
        if surface.eps_plus.shape == surface.eps_minus.shape and np.array_equal(
            surface.eps_plus, surface.eps_minus
        ):
            inset = ax_surface.inset_axes([0.58, 0.58, 0.4, 0.4])
            inset.plot(surface.eps_plus, np.diagonal(surface.misfit), color="white", linewidth=1.2)
            inset.set_title("equal-rates diagonal", fontsize=7, color="white")
            inset.tick_params(labelsize=6, colors="white")
            inset.patch.set_alpha(0.0)
            for spine in inset.spines.values():
                spine.set_color("white")
    return fig


def plot_fit(
    curve_csvs: Sequence[str | Path] | str | Path,
    surface_csv: str | Path,
    out_image: str | Path,
    image_format: str | None = None,
) -> Path:
    """Render fit artifacts (curves CSVs plus a surface CSV) to an image file."""
    if isinstance(curve_csvs, (str, Path)):
        curve_csvs = [curve_csvs]
    curves: list[Curve] = []
    for p in curve_csvs:
        curves.extend(read_curves(p))
    return _save(build_fit_figure(curves, read_surface(surface_csv)), out_image, image_format)


def build_bt_figure(histogram: Histogram, spreads: SpreadCurves | None):
    """Spread-vs-eps curves (when given) next to the eps_opt histogram."""
    if spreads is None:
        fig, ax_hist = plt.subplots(figsize=(6, 4.5))
        ax_spread = None
    else:
        fig, (ax_spread, ax_hist) = plt.subplots(1, 2, figsize=(11, 4.5))
    if ax_spread is not None:
        alpha = max(0.05, min(1.0, 10.0 / max(1, spreads.seeds.shape[0])))
        for row in spreads.spreads:
            ax_spread.plot(spreads.eps, row, color="tab:blue", alpha=alpha, linewidth=0.8)
        ax_spread.set_xlabel("eps")
        ax_spread.set_ylabel("score spread")
        ax_spread.set_title(f"Spread curves across {spreads.seeds.shape[0]} seeds")
        ax_spread.grid(True, alpha=0.3)
    widths = histogram.bin_hi - histogram.bin_lo
    ax_hist.bar(histogram.bin_lo, histogram.counts, width=widths, align="edge", edgecolor="black")
    ax_hist.set_xlabel("optimal eps")
    ax_hist.set_ylabel("seed count")
    ax_hist.set_title(f"eps_opt over {int(histogram.counts.sum())} seeds")
    ax_hist.grid(True, axis="y", alpha=0.3)
    return fig


def plot_bt(
    histogram_csv: str | Path,
    spread_csv: str | Path | None,
    out_image: str | Path,
    image_format: str | None = None,
) -> Path:
    """Render strength-search artifacts to an image file."""
    histogram = read_histogram(histogram_csv)
    spreads = read_spreads(spread_csv) if spread_csv is not None else None
    return _save(build_bt_figure(histogram, spreads), out_image, image_format)
