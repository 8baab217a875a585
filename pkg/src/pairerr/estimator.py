"""Error-rate estimation by matching deviation curves against synthetic ones.

The estimator computes the empirical delta_s-over-n curve of the observed
matrix, generates the same curve from synthetic matrices at every candidate
error rate, and keeps the grid point whose averaged synthetic curve is
closest in summed absolute difference. The uniform variant scans a 1-D eps
grid on the consensus matrix; the positional variant scans a 2-D
(eps_plus, eps_minus) grid and cross-validates over every sub-count design
(k_plus_s, k_minus_s) the records support, averaging the per-cell misfit
surfaces into the headline estimate.
"""

from __future__ import annotations

import csv
import threading
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .copeland import DeltaCurve, delta_curve
from .errors import SupportMismatch
from .prefcore import (
    ConsensusMatrixZ,
    PreferenceRecord,
    RepeatedMatrixW,
    build_w,
    subselect_trials,
)
from .probmodel import ErrorSpec, RepeatSpec
from .synth import synth_w, synth_z

_TAG_EMP = 0xE3
_TAG_SYN_MAT = 0x51
_TAG_SYN_CRV = 0x52

UNIFORM = "uniform"
POSITIONAL = "positional"


@dataclass(frozen=True)
class FitConfig:
    """Grid and sampling settings for a curve-matching fit.

    Defaults reproduce the full-accuracy settings (grid step 0.005, 10
    synthetic replicates per grid point, 200 subset runs per n, every n).
    `desk_scale()` trades accuracy for speed on the quadratically larger
    2-D positional scan.
    """

    grid_lo: float = 0.0
    grid_hi: float = 0.5
    grid_step: float = 0.005
    synth_replicates: int = 10
    curve_runs: int = 200
    n_stride: int = 1
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if not 0.0 <= self.grid_lo <= self.grid_hi <= 0.5:
            raise ValueError("grid bounds must satisfy 0 <= lo <= hi <= 0.5")
        if self.grid_step <= 0:
            raise ValueError("grid_step must be positive")
        if self.synth_replicates < 1 or self.curve_runs < 1 or self.n_stride < 1:
            raise ValueError("replicates, runs, and stride must be at least 1")

    @classmethod
    def desk_scale(cls, rng_seed: int = 0, **overrides) -> "FitConfig":
        """Coarser settings for interactive 2-D fits: step 0.01, 3 replicates,
        50 runs, n stride 5."""
        base = dict(
            grid_step=0.01, synth_replicates=3, curve_runs=50, n_stride=5, rng_seed=rng_seed
        )
        base.update(overrides)
        return cls(**base)

    def grid(self) -> tuple[float, ...]:
        """Candidate rates lo, lo+step, ..., up to hi inclusive."""
        count = int(np.floor((self.grid_hi - self.grid_lo) / self.grid_step + 1e-9)) + 1
        return tuple(round(self.grid_lo + i * self.grid_step, 9) for i in range(count))


@dataclass(frozen=True)
class SubCellEstimate:
    """Best fit of one sub-count design's own misfit surface."""

    k_plus_s: int
    k_minus_s: int
    best_eps_plus: float
    best_eps_minus: float
    misfit_at_best: float


@dataclass(frozen=True, eq=False)
class ErrorEstimate:
    """Grid-search result: best rate(s), the misfit surface, and its config.

    For a uniform fit, `eps_grid` and the 1-D `misfits` are set and
    `best_eps` holds the estimate. For a positional fit, `plus_grid` and
    `minus_grid` index the 2-D `misfits` surface (averaged over sub-count
    cells), the best pair sits at its minimum, and `sub_cells` carries each
    cell's own argmin. Grid ties resolve toward smaller rates (eps_plus
    before eps_minus).
    """

    kind: str
    misfit_at_best: float
    config: FitConfig
    best_eps: float | None = None
    best_eps_plus: float | None = None
    best_eps_minus: float | None = None
    eps_grid: tuple[float, ...] | None = None
    plus_grid: tuple[float, ...] | None = None
    minus_grid: tuple[float, ...] | None = None
    misfits: np.ndarray | None = None
    sub_cells: tuple[SubCellEstimate, ...] = ()

    def to_dict(self) -> dict:
        out: dict = {"schema_version": 1, "kind": self.kind, "misfit_at_best": self.misfit_at_best}
        out["config"] = asdict(self.config)
        if self.kind == UNIFORM:
            out["best_eps"] = self.best_eps
            out["surface"] = {
                "eps": list(self.eps_grid),
                "misfit": [float(v) for v in self.misfits],
            }
        else:
            out["best_eps_plus"] = self.best_eps_plus
            out["best_eps_minus"] = self.best_eps_minus
            out["surface"] = {
                "eps_plus": list(self.plus_grid),
                "eps_minus": list(self.minus_grid),
                "misfit": [[float(v) for v in row] for row in self.misfits],
            }
        out["sub_count_estimates"] = [asdict(c) for c in self.sub_cells]
        return out

    @classmethod
    def from_dict(cls, payload: dict) -> "ErrorEstimate":
        cfg = FitConfig(**payload["config"])
        cells = tuple(SubCellEstimate(**c) for c in payload.get("sub_count_estimates", ()))
        surface = payload["surface"]
        if payload["kind"] == UNIFORM:
            return cls(
                kind=UNIFORM,
                misfit_at_best=payload["misfit_at_best"],
                config=cfg,
                best_eps=payload["best_eps"],
                eps_grid=tuple(surface["eps"]),
                misfits=np.asarray(surface["misfit"], dtype=np.float64),
                sub_cells=cells,
            )
        return cls(
            kind=POSITIONAL,
            misfit_at_best=payload["misfit_at_best"],
            config=cfg,
            best_eps_plus=payload["best_eps_plus"],
            best_eps_minus=payload["best_eps_minus"],
            plus_grid=tuple(surface["eps_plus"]),
            minus_grid=tuple(surface["eps_minus"]),
            misfits=np.asarray(surface["misfit"], dtype=np.float64),
            sub_cells=cells,
        )


def misfit(curve_emp: DeltaCurve, curve_syn: DeltaCurve) -> float:
    """Summed absolute gap between two curves' means over their shared support."""
    if not np.array_equal(curve_emp.ns, curve_syn.ns):
        raise SupportMismatch("curves are sampled at different n values")
    return float(np.abs(curve_emp.means - curve_syn.means).sum())


# Synthetic curves depend only on (matrix size, grid point, design, sampling
# settings, master seed) -- never on the observed data -- so they are cached
# process-wide and shared across estimates and sub-count cells.
_CACHE: dict[tuple, np.ndarray] = {}
_CACHE_LOCK = threading.Lock()


def clear_synthetic_cache() -> None:
    with _CACHE_LOCK:
        _CACHE.clear()


def _eps_key(eps: float) -> int:
    return int(round(eps * 1_000_000))


def _synth_z_means(n: int, eps: float, replicate: int, cfg: FitConfig) -> np.ndarray:
    key = ("z", n, _eps_key(eps), replicate, cfg.curve_runs, cfg.n_stride, cfg.rng_seed)
    with _CACHE_LOCK:
        cached = _CACHE.get(key)
    if cached is not None:
        return cached
    ek = _eps_key(eps)
    mat = synth_z(n, ErrorSpec.uniform(eps), rng.mix_key(cfg.rng_seed, _TAG_SYN_MAT, ek, replicate))
    curve = delta_curve(
        mat,
        cfg.curve_runs,
        rng.mix_key(cfg.rng_seed, _TAG_SYN_CRV, ek, replicate),
        n_stride=cfg.n_stride,
        source=f"synthetic(eps={eps:g})",
    )
    with _CACHE_LOCK:
        _CACHE[key] = curve.means
    return curve.means


def _synth_w_means(
    n: int, eps_plus: float, eps_minus: float, rep: RepeatSpec, replicate: int, cfg: FitConfig
) -> np.ndarray:
    epk, emk = _eps_key(eps_plus), _eps_key(eps_minus)
    key = (
        "w",
        n,
        epk,
        emk,
        rep.k_plus,
        rep.k_minus,
        replicate,
        cfg.curve_runs,
        cfg.n_stride,
        cfg.rng_seed,
    )
    with _CACHE_LOCK:
        cached = _CACHE.get(key)
    if cached is not None:
        return cached
    spec = ErrorSpec.positional(eps_plus, eps_minus)
    mat = synth_w(
        n,
        spec,
        rep,
        rng.mix_key(cfg.rng_seed, _TAG_SYN_MAT, epk, emk, rep.k_plus, rep.k_minus, replicate),
    )
    curve = delta_curve(
        mat,
        cfg.curve_runs,
        rng.mix_key(cfg.rng_seed, _TAG_SYN_CRV, epk, emk, rep.k_plus, rep.k_minus, replicate),
        n_stride=cfg.n_stride,
        source=f"synthetic(eps_plus={eps_plus:g},eps_minus={eps_minus:g},k={rep.k_plus}/{rep.k_minus})",
    )
    with _CACHE_LOCK:
        _CACHE[key] = curve.means
    return curve.means


def _map_cells(fn, count: int, threads: int) -> list:
    if threads <= 1:
        return [fn(i) for i in range(count)]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, range(count)))


def estimate_uniform(z: ConsensusMatrixZ, cfg: FitConfig | None = None, *, threads: int = 1) -> ErrorEstimate:
    """Fit a single error rate to a consensus matrix by curve matching.

    Every grid eps gets `synth_replicates` synthetic consensus matrices;
    their curves are averaged pointwise before the comparison, and ties on
    the resulting misfit resolve toward the smaller eps.
    """
    cfg = cfg or FitConfig()
    grid = cfg.grid()
    emp = delta_curve(
        z,
        cfg.curve_runs,
        rng.mix_key(cfg.rng_seed, _TAG_EMP),
        n_stride=cfg.n_stride,
        source="empirical",
    )

    def cell(gi: int) -> float:
        stack = [_synth_z_means(z.n, grid[gi], r, cfg) for r in range(cfg.synth_replicates)]
        avg = np.mean(stack, axis=0)
        return float(np.abs(emp.means - avg).sum())

    misfits = np.array(_map_cells(cell, len(grid), threads), dtype=np.float64)
    best = 0
    for gi in range(1, len(grid)):
        if misfits[gi] < misfits[best]:
            best = gi
    return ErrorEstimate(
        kind=UNIFORM,
        misfit_at_best=float(misfits[best]),
        config=cfg,
        best_eps=grid[best],
        eps_grid=grid,
        misfits=misfits,
    )


def _positional_cell_surface(
    w: RepeatedMatrixW, rep: RepeatSpec, cfg: FitConfig, threads: int
) -> np.ndarray:
    grid = cfg.grid()
    emp = delta_curve(
        w,
        cfg.curve_runs,
        rng.mix_key(cfg.rng_seed, _TAG_EMP, rep.k_plus, rep.k_minus),
        n_stride=cfg.n_stride,
        source=f"empirical(k={rep.k_plus}/{rep.k_minus})",
    )
    g = len(grid)

    def cell(flat: int) -> float:
        gi, gj = divmod(flat, g)
        stack = [
            _synth_w_means(w.n, grid[gi], grid[gj], rep, r, cfg)
            for r in range(cfg.synth_replicates)
        ]
        avg = np.mean(stack, axis=0)
        return float(np.abs(emp.means - avg).sum())

    flat = _map_cells(cell, g * g, threads)
    return np.array(flat, dtype=np.float64).reshape(g, g)


def _argmin_lex(surface: np.ndarray) -> tuple[int, int]:
    """Row-major argmin with strict comparison: ties keep the smaller
    (eps_plus, eps_minus) in lexicographic order."""
    flat = surface.ravel()
    best = 0
    for idx in range(1, flat.shape[0]):
        if flat[idx] < flat[best]:
            best = idx
    return divmod(best, surface.shape[1])


def estimate_positional(
    records: Sequence[PreferenceRecord],
    n: int,
    rep: RepeatSpec,
    cfg: FitConfig | None = None,
    *,
    threads: int = 1,
) -> ErrorEstimate:
    """Fit (eps_plus, eps_minus) to repeated-trial records by curve matching.

    For every sub-count design (k_plus_s <= k_plus, k_minus_s <= k_minus)
    the records are prefix-subselected, aggregated into their own W matrix,
    and scanned over the full 2-D grid against matching synthetic matrices.
    The per-cell surfaces are averaged pointwise; the averaged surface's
    minimum is the headline estimate, and each cell's own minimum is
    reported alongside. Designs with k_plus_s = k_minus_s cannot tell the
    two rates apart on their own, which is why the asymmetric cells enter
    the average.
    """
    cfg = cfg or FitConfig.desk_scale()
    grid = cfg.grid()
    surfaces = []
    cells = []
    for ka in range(1, rep.k_plus + 1):
        for kb in range(1, rep.k_minus + 1):
            sub_rep = RepeatSpec(ka, kb)
            sub = subselect_trials(records, ka, kb)
            w = build_w(sub, n, ka, kb)
            surface = _positional_cell_surface(w, sub_rep, cfg, threads)
            bi, bj = _argmin_lex(surface)
            surfaces.append(surface)
            cells.append(
                SubCellEstimate(
                    k_plus_s=ka,
                    k_minus_s=kb,
                    best_eps_plus=grid[bi],
                    best_eps_minus=grid[bj],
                    misfit_at_best=float(surface[bi, bj]),
                )
            )
    averaged = np.mean(surfaces, axis=0)
    bi, bj = _argmin_lex(averaged)
    return ErrorEstimate(
        kind=POSITIONAL,
        misfit_at_best=float(averaged[bi, bj]),
        config=cfg,
        best_eps_plus=grid[bi],
        best_eps_minus=grid[bj],
        plus_grid=grid,
        minus_grid=grid,
        misfits=averaged,
        sub_cells=tuple(cells),
    )


def empirical_curve(
    matrix: ConsensusMatrixZ | RepeatedMatrixW,
    cfg: FitConfig,
    rep: RepeatSpec | None = None,
) -> DeltaCurve:
    """The observed matrix's deviation curve, seeded exactly as a fit seeds it.

    Pass `rep` for a positional fit's full-design matrix so the stream
    matches the one estimate_positional used for that cell.
    """
    if rep is None:
        key = rng.mix_key(cfg.rng_seed, _TAG_EMP)
        label = "empirical"
    else:
        key = rng.mix_key(cfg.rng_seed, _TAG_EMP, rep.k_plus, rep.k_minus)
        label = f"empirical(k={rep.k_plus}/{rep.k_minus})"
    return delta_curve(matrix, cfg.curve_runs, key, n_stride=cfg.n_stride, source=label)


def synthetic_curve(n: int, estimate: ErrorEstimate, replicate: int = 0) -> DeltaCurve:
    """One synthetic replicate's curve at the estimate's best grid point.

    Regenerates the matrix and curve from the fit's own seed scheme, so the
    result is the replicate the fit actually compared against (means match
    the cached values; this also carries the per-n standard deviations).
    """
    cfg = estimate.config
    if estimate.kind == UNIFORM:
        ek = _eps_key(estimate.best_eps)
        mat = synth_z(
            n, ErrorSpec.uniform(estimate.best_eps), rng.mix_key(cfg.rng_seed, _TAG_SYN_MAT, ek, replicate)
        )
        return delta_curve(
            mat,
            cfg.curve_runs,
            rng.mix_key(cfg.rng_seed, _TAG_SYN_CRV, ek, replicate),
            n_stride=cfg.n_stride,
            source=f"synthetic(eps={estimate.best_eps:g})",
        )
    rep = RepeatSpec(max(c.k_plus_s for c in estimate.sub_cells), max(c.k_minus_s for c in estimate.sub_cells))
    epk, emk = _eps_key(estimate.best_eps_plus), _eps_key(estimate.best_eps_minus)
    spec = ErrorSpec.positional(estimate.best_eps_plus, estimate.best_eps_minus)
    mat = synth_w(
        n, spec, rep, rng.mix_key(cfg.rng_seed, _TAG_SYN_MAT, epk, emk, rep.k_plus, rep.k_minus, replicate)
    )
    return delta_curve(
        mat,
        cfg.curve_runs,
        rng.mix_key(cfg.rng_seed, _TAG_SYN_CRV, epk, emk, rep.k_plus, rep.k_minus, replicate),
        n_stride=cfg.n_stride,
        source=(
            f"synthetic(eps_plus={estimate.best_eps_plus:g},"
            f"eps_minus={estimate.best_eps_minus:g},k={rep.k_plus}/{rep.k_minus})"
        ),
    )


def write_surface_csv(path: str | Path, estimate: ErrorEstimate, schema_version: int = 1) -> None:
    """Write the misfit surface as CSV: (eps, misfit) or (eps_plus, eps_minus, misfit)."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version={schema_version}\n")
        writer = csv.writer(fh)
        if estimate.kind == UNIFORM:
            writer.writerow(["eps", "misfit"])
            for eps, val in zip(estimate.eps_grid, estimate.misfits):
                writer.writerow([repr(float(eps)), repr(float(val))])
        else:
            writer.writerow(["eps_plus", "eps_minus", "misfit"])
            for gi, ep in enumerate(estimate.plus_grid):
                for gj, em in enumerate(estimate.minus_grid):
                    writer.writerow([repr(float(ep)), repr(float(em)), repr(float(estimate.misfits[gi, gj]))])
