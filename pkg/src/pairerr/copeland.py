"""Copeland scores, the deviation statistic, and its curve over subset size.

The Copeland score of a text is its row sum in an antisymmetric preference
matrix. delta_s measures how far a matrix's sorted score sequence is (in L1)
from the strictly transitive ideal N-1, N-3, ..., 1-N; delta_curve traces
that deviation over random n-subsets of the texts, which is the statistic
the error-rate estimator matches against synthetic matrices.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .errors import LengthMismatch, SupportMismatch
from .prefcore import ConsensusMatrixZ, RepeatedMatrixW

_TAG_SUBSET = 0x5355


def _matrix_values(m: "ConsensusMatrixZ | RepeatedMatrixW | np.ndarray") -> np.ndarray:
    if isinstance(m, np.ndarray):
        arr = np.asarray(m, dtype=np.float64)
        if arr.ndim != 2 or arr.shape[0] != arr.shape[1]:
            raise ValueError("expected a square matrix")
        return arr
    return m.values()


@dataclass(frozen=True, eq=False)
class CopelandScores:
    """Row sums of a preference matrix; exact integers kept alongside.

    `values` are the scores as floats. `numerators` holds the same scores
    scaled by `denominator` (the trial count for W matrices, 1 for Z), so
    sum-to-zero and sorting can be checked in exact integer arithmetic.
    """

    values: np.ndarray
    numerators: np.ndarray
    denominator: int

    def __post_init__(self) -> None:
        v = np.asarray(self.values, dtype=np.float64).copy()
        a = np.asarray(self.numerators, dtype=np.int64).copy()
        v.setflags(write=False)
        a.setflags(write=False)
        object.__setattr__(self, "values", v)
        object.__setattr__(self, "numerators", a)

    @property
    def n(self) -> int:
        return int(self.values.shape[0])


def copeland_scores(m: "ConsensusMatrixZ | RepeatedMatrixW | np.ndarray") -> CopelandScores:
    """Score each text by its row sum over all opponents."""
    if isinstance(m, RepeatedMatrixW):
        numer = m.numerators.astype(np.int64).sum(axis=1)
        denom = m.denominator
        return CopelandScores(values=numer / denom, numerators=numer, denominator=denom)
    if isinstance(m, ConsensusMatrixZ):
        numer = m.entries.astype(np.int64).sum(axis=1)
        return CopelandScores(values=numer.astype(np.float64), numerators=numer, denominator=1)
    arr = _matrix_values(m)
    vals = arr.sum(axis=1)
    return CopelandScores(values=vals, numerators=np.rint(vals).astype(np.int64), denominator=1)


def perfect_sequence(n: int) -> np.ndarray:
    """Scores of a strictly transitive matrix, best first: n-1, n-3, ..., 1-n."""
    if n < 1:
        raise ValueError("n must be at least 1")
    return np.arange(n - 1, -n, -2, dtype=np.int64)


def delta_s(scores: "CopelandScores | Sequence[float] | np.ndarray") -> float:
    """L1 distance between the sorted observed scores and the transitive ideal.

    Scores are sorted descending and compared elementwise against
    perfect_sequence(n); the comparison is order-free, so any relabeling of
    the texts gives the same deviation.
    """
    vals = scores.values if isinstance(scores, CopelandScores) else np.asarray(scores, dtype=np.float64)
    n = vals.shape[0]
    ideal = perfect_sequence(n)[::-1]
    return float(np.abs(np.sort(vals) - ideal).sum())


@dataclass(frozen=True, eq=False)
class DeltaCurve:
    """Mean and spread of delta_s over random n-subsets, for each n.

    `source` labels where the matrix came from (e.g. "empirical" or
    "synthetic(eps=0.13)") so several curves can share one CSV.
    """

    ns: np.ndarray
    means: np.ndarray
    stds: np.ndarray
    runs: int
    source: str = "empirical"

    def __post_init__(self) -> None:
        ns = np.asarray(self.ns, dtype=np.int64).copy()
        means = np.asarray(self.means, dtype=np.float64).copy()
        stds = np.asarray(self.stds, dtype=np.float64).copy()
        if not (ns.shape == means.shape == stds.shape):
            raise LengthMismatch("ns, means, and stds must have equal lengths")
        for name, arr in (("ns", ns), ("means", means), ("stds", stds)):
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)

    def points(self) -> dict[int, tuple[float, float]]:
        """Mapping n -> (mean delta_s, std delta_s)."""
        return {int(n): (float(m), float(s)) for n, m, s in zip(self.ns, self.means, self.stds)}


def delta_curve(
    m: "ConsensusMatrixZ | RepeatedMatrixW | np.ndarray",
    runs: int = 200,
    rng_seed: int = 0,
    *,
    n_stride: int = 1,
    source: str = "empirical",
) -> DeltaCurve:
    """Trace mean and std of delta_s over random n-subsets for n = 2..N.

    For every n, `runs` subsets of size n are drawn uniformly without
    replacement; each draw is keyed by (rng_seed, n, run) through the
    counter generator, so results are independent of evaluation order and
    safe to parallelize. At n = N there is only one possible subset, so the
    std is exactly zero. `n_stride` thins the support (n = 2, 2+stride, ...)
    for faster fitting.
    """
    if runs < 1:
        raise ValueError("runs must be at least 1")
    if n_stride < 1:
        raise ValueError("n_stride must be at least 1")
    vals = _matrix_values(m)
    n_total = vals.shape[0]
    if n_total < 2:
        raise ValueError("need at least two texts for a deviation curve")
    ns = np.arange(2, n_total + 1, n_stride, dtype=np.int64)
    means = np.empty(ns.shape[0], dtype=np.float64)
    stds = np.empty(ns.shape[0], dtype=np.float64)
    counters = np.arange(runs * n_total, dtype=np.uint64).reshape(runs, n_total)
    for pos, n_sub in enumerate(ns):
        key = rng.mix_key(rng_seed, _TAG_SUBSET, int(n_sub))
        keys = rng.uniforms(key, counters)
        idx = np.argsort(keys, axis=1)[:, :n_sub]
        sub = vals[idx[:, :, None], idx[:, None, :]]
        scores = np.sort(sub.sum(axis=2), axis=1)
        ideal = perfect_sequence(int(n_sub))[::-1]
        deltas = np.abs(scores - ideal).sum(axis=1)
        means[pos] = deltas.mean()
        stds[pos] = deltas.std(ddof=1) if runs > 1 else 0.0
    return DeltaCurve(ns=ns, means=means, stds=stds, runs=runs, source=source)


# --- curve CSV -----------------------------------------------------------------

CURVE_COLUMNS = ("n", "mean_delta_s", "std_delta_s", "runs", "source_label")


def write_curves_csv(path: str | Path, curves: Sequence[DeltaCurve], schema_version: int = 1) -> None:
    """Write one or more curves to a CSV, rows labeled by their source."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version={schema_version}\n")
        writer = csv.writer(fh)
        writer.writerow(CURVE_COLUMNS)
        for curve in curves:
            for n, mean, std in zip(curve.ns, curve.means, curve.stds):
                writer.writerow([int(n), repr(float(mean)), repr(float(std)), curve.runs, curve.source])


def read_curves_csv(path: str | Path) -> list[DeltaCurve]:
    """Read back every labeled curve from a curve CSV, in file order."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows or tuple(rows[0]) != CURVE_COLUMNS:
        raise ValueError(f"{path} is not a delta-curve CSV")
    grouped: dict[str, list[tuple[int, float, float, int]]] = {}
    for row in rows[1:]:
        n, mean, std, runs, label = row
        grouped.setdefault(label, []).append((int(n), float(mean), float(std), int(runs)))
    curves = []
    for label, pts in grouped.items():
        curves.append(
            DeltaCurve(
                ns=np.array([p[0] for p in pts]),
                means=np.array([p[1] for p in pts]),
                stds=np.array([p[2] for p in pts]),
                runs=pts[0][3],
                source=label,
            )
        )
    return curves


def spearman_rho(ranking_a: Sequence[int], ranking_b: Sequence[int]) -> float:
    """Rank correlation between two strict rankings of the same items.

    Both arguments list item identifiers best-first. Uses the
    rank-difference form 1 - 6*sum(d^2)/(L*(L^2-1)); identical rankings
    give +1, exactly reversed rankings give -1.
    """
    a = list(ranking_a)
    b = list(ranking_b)
    if len(a) != len(b):
        raise LengthMismatch(f"rankings have lengths {len(a)} and {len(b)}")
    if set(a) != set(b) or len(set(a)) != len(a):
        raise ValueError("rankings must be permutations of the same item set")
    length = len(a)
    if length < 2:
        return 1.0
    pos_b = {item: pos for pos, item in enumerate(b)}
    d2 = sum((pos - pos_b[item]) ** 2 for pos, item in enumerate(a))
    return 1.0 - 6.0 * d2 / (length * (length**2 - 1))
