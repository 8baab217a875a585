"""Readers for the pairerr CSV artifacts.

Every artifact starts with a "# schema_version=..." comment and a header
row; readers skip comment lines, verify the header, and return plain
numpy arrays. A wrong or truncated file raises SchemaError naming what
was expected, so a renamed column fails loudly instead of plotting
garbage.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np


class SchemaError(ValueError):
    """The file is not the artifact the reader was asked for."""


def _read_rows(path: str | Path, expected: tuple[str, ...], kind: str) -> list[list[str]]:
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    except OSError as exc:
        raise SchemaError(f"cannot read {kind} CSV {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: empty file, expected a {kind} CSV")
    header = tuple(rows[0])
    if header != expected:
        raise SchemaError(
            f"{path}: expected {kind} columns {', '.join(expected)}; found {', '.join(header)}"
        )
    if len(rows) == 1:
        raise SchemaError(f"{path}: {kind} CSV has a header but no data rows")
    return rows[1:]


def _floats(cells: list[str], path, kind: str) -> list[float]:
    try:
        return [float(c) for c in cells]
    except ValueError as exc:
        raise SchemaError(f"{path}: non-numeric value in {kind} CSV: {exc}") from exc


@dataclass(frozen=True)
class Curve:
    """One labeled deviation curve: mean and std of delta_s per subset size."""

    label: str
    ns: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    runs: int


def read_curves(path: str | Path) -> list[Curve]:
    """Read every labeled curve from a curves CSV, in file order."""
    expected = ("n", "mean_delta_s", "std_delta_s", "runs", "source_label")
    grouped: dict[str, list[tuple[int, float, float, int]]] = {}
    for row in _read_rows(path, expected, "curve"):
        if len(row) != 5:
            raise SchemaError(f"{path}: curve row has {len(row)} cells, expected 5")
        n_s, mean_s, std_s, runs_s, label = row
        n, mean, std, runs = _floats([n_s, mean_s, std_s, runs_s], path, "curve")
        grouped.setdefault(label, []).append((int(n), mean, std, int(runs)))
    curves = []
    for label, pts in grouped.items():
        curves.append(
            Curve(
                label=label,
                ns=np.array([p[0] for p in pts], dtype=np.int64),
                means=np.array([p[1] for p in pts], dtype=np.float64),
                stds=np.array([p[2] for p in pts], dtype=np.float64),
                runs=pts[0][3],
            )
        )
    return curves


@dataclass(frozen=True)
class Surface1D:
    """Uniform-fit misfit per candidate rate."""

    eps: np.ndarray
    misfit: np.ndarray


@dataclass(frozen=True)
class Surface2D:
    """Positional-fit misfit grid, rows indexed by eps_plus, columns by eps_minus."""

    eps_plus: np.ndarray
    eps_minus: np.ndarray
    misfit: np.ndarray


def read_surface(path: str | Path) -> Surface1D | Surface2D:
    """Read a misfit surface CSV, detecting the 1-D or 2-D layout from its header."""
    try:
        with open(path, "r", encoding="utf-8", newline="") as fh:
            rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    except OSError as exc:
        raise SchemaError(f"cannot read surface CSV {path}: {exc}") from exc
    if not rows:
        raise SchemaError(f"{path}: empty file, expected a misfit surface CSV")
    header = tuple(rows[0])
    if header == ("eps", "misfit"):
        if len(rows) == 1:
            raise SchemaError(f"{path}: surface CSV has a header but no data rows")
        eps, misfit = [], []
        for row in rows[1:]:
            e, m = _floats(row, path, "surface")
            eps.append(e)
            misfit.append(m)
        return Surface1D(eps=np.array(eps), misfit=np.array(misfit))
    if header == ("eps_plus", "eps_minus", "misfit"):
        if len(rows) == 1:
            raise SchemaError(f"{path}: surface CSV has a header but no data rows")
        cells: dict[tuple[float, float], float] = {}
        for row in rows[1:]:
            ep, em, m = _floats(row, path, "surface")
            cells[(ep, em)] = m
        plus = np.array(sorted({k[0] for k in cells}))
        minus = np.array(sorted({k[1] for k in cells}))
        grid = np.full((plus.shape[0], minus.shape[0]), np.nan)
        for (ep, em), m in cells.items():
            grid[np.searchsorted(plus, ep), np.searchsorted(minus, em)] = m
        if np.isnan(grid).any():
            raise SchemaError(f"{path}: 2-D surface is missing grid cells")
        return Surface2D(eps_plus=plus, eps_minus=minus, misfit=grid)
    raise SchemaError(
        f"{path}: expected surface columns (eps, misfit) or (eps_plus, eps_minus, misfit); "
        f"found {', '.join(header)}"
    )


@dataclass(frozen=True)
class ScalabilitySeries:
    """Probability-vs-N curve for one (rank, rate spec) combination."""

    label: str
    m: int
    ns: np.ndarray
    probabilities: np.ndarray


def read_scalability(path: str | Path) -> list[ScalabilitySeries]:
    """Read a scalability CSV into one series per (m, rate spec)."""
    expected = ("m", "n", "probability", "kind", "eps", "eps_plus", "eps_minus", "k_plus", "k_minus")
    grouped: dict[tuple, list[tuple[int, float]]] = {}
    for row in _read_rows(path, expected, "scalability"):
        if len(row) != 9:
            raise SchemaError(f"{path}: scalability row has {len(row)} cells, expected 9")
        m_s, n_s, p_s, kind, eps_s, ep_s, em_s, kp_s, km_s = row
        m, n, p = _floats([m_s, n_s, p_s], path, "scalability")
        if kind == "uniform":
            spec = f"eps={float(eps_s):g}"
        else:
            spec = f"eps+={float(ep_s):g}, eps-={float(em_s):g}"
        if (kp_s, km_s) != ("1", "1"):
            spec += f", k={kp_s}/{km_s}"
        grouped.setdefault((int(m), spec), []).append((int(n), p))
    series = []
    for (m, spec), pts in sorted(grouped.items()):
        pts.sort()
        series.append(
            ScalabilitySeries(
                label=f"m={m}, {spec}",
                m=m,
                ns=np.array([p[0] for p in pts], dtype=np.int64),
                probabilities=np.array([p[1] for p in pts], dtype=np.float64),
            )
        )
    return series


@dataclass(frozen=True)
class Histogram:
    """Binned eps_opt counts."""

    bin_lo: np.ndarray
    bin_hi: np.ndarray
    counts: np.ndarray


def read_histogram(path: str | Path) -> Histogram:
    """Read a bt_histogram CSV."""
    lo, hi, counts = [], [], []
    for row in _read_rows(path, ("bin_lo", "bin_hi", "count"), "histogram"):
        a, b, c = _floats(row, path, "histogram")
        lo.append(a)
        hi.append(b)
        counts.append(int(c))
    return Histogram(bin_lo=np.array(lo), bin_hi=np.array(hi), counts=np.array(counts, dtype=np.int64))


@dataclass(frozen=True)
class SpreadCurves:
    """Per-seed spread over the eps grid; NaN marks a failed fit."""

    seeds: np.ndarray
    eps: np.ndarray
    spreads: np.ndarray


def read_spreads(path: str | Path) -> SpreadCurves:
    """Read a bt_spreads CSV into a (seeds, grid) array."""
    cells: dict[tuple[int, float], float] = {}
    for row in _read_rows(path, ("seed", "eps", "spread"), "spread"):
        if len(row) != 3:
            raise SchemaError(f"{path}: spread row has {len(row)} cells, expected 3")
        seed_s, eps_s, spread_s = row
        seed, eps = _floats([seed_s, eps_s], path, "spread")
        value = np.nan if spread_s == "" else _floats([spread_s], path, "spread")[0]
        cells[(int(seed), eps)] = value
    seeds = np.array(sorted({k[0] for k in cells}), dtype=np.int64)
    eps = np.array(sorted({k[1] for k in cells}))
    grid = np.full((seeds.shape[0], eps.shape[0]), np.nan)
    for (s, e), v in cells.items():
        grid[np.searchsorted(seeds, s), np.searchsorted(eps, e)] = v
    return SpreadCurves(seeds=seeds, eps=eps, spreads=grid)
