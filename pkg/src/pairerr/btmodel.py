"""Bradley-Terry strengths with an additive order bias, and the eps search.

The win model is P(i beats j) = pi_i / (pi_i + e^eps * pi_j): the opponent's
strength is inflated by e^eps, encoding a judge that errs at rate-like
intensity eps. Strengths are updated synchronously from the win counts;
the iteration's scores drift rather than converge for eps > 0, but the
induced ranking freezes after a few sweeps, so ranking stability is the
stopping rule. Searching eps for an extremal score spread, over many random
initializations, yields a histogram of optimal eps values.
"""

from __future__ import annotations

import csv
import logging
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np

from . import rng
from .errors import DegenerateStrengths, InvalidRate, NonPositiveInit
from .prefcore import StrengthMatrixX

logger = logging.getLogger(__name__)

_TAG_BT_INIT = 0xB7

MIN_SPREAD = "min_spread"
MAX_SPREAD = "max_spread"


@dataclass(frozen=True, eq=False)
class BTFit:
    """Fitted strengths (geometric mean 1), their logs, and the ranking.

    `ranking` lists text indices best-first; equal scores order by index.
    `converged_ranking` is False only when max_iters ran out before the
    ranking repeated across a sweep. `excluded` lists objects the update
    could not fit (undefeated or winless), placed at the ranking extremes.
    """

    strengths: np.ndarray
    scores: np.ndarray
    ranking: tuple[int, ...]
    iterations_used: int
    eps: float
    converged_ranking: bool
    excluded: tuple[int, ...] = ()

    def __post_init__(self) -> None:
        s = np.asarray(self.strengths, dtype=np.float64).copy()
        sc = np.asarray(self.scores, dtype=np.float64).copy()
        s.setflags(write=False)
        sc.setflags(write=False)
        object.__setattr__(self, "strengths", s)
        object.__setattr__(self, "scores", sc)


def _ranking_of(scores: np.ndarray) -> tuple[int, ...]:
    """Indices by descending score; exact ties resolve to the lower index."""
    order = np.lexsort((np.arange(scores.shape[0]), -scores))
    return tuple(int(i) for i in order)


def bt_sweep(x: np.ndarray, eps: float, pi: np.ndarray) -> np.ndarray:
    """One synchronous strength update from win counts x at bias eps.

    pi_i <- [sum_j x_ij e^eps pi_j / (pi_i + e^eps pi_j)]
            / [sum_j x_ji / (pi_i + e^eps pi_j)]

    Callers guarantee every object has at least one win and one loss in x,
    otherwise the quotient degenerates to 0 or infinity.
    """
    eeps = float(np.exp(eps))
    denom = pi[:, None] + eeps * pi[None, :]
    num = (x * (eeps * pi[None, :]) / denom).sum(axis=1)
    den = (x.T / denom).sum(axis=1)
    return num / den


def _normalize(pi: np.ndarray) -> np.ndarray:
    """Rescale to geometric mean 1 (a log-space shift; ranking-invariant)."""
    return pi / np.exp(np.mean(np.log(pi)))


def _peel(counts: np.ndarray) -> tuple[list[list[int]], list[list[int]], list[int]]:
    """Strip undefeated and winless objects layer by layer.

    Returns (top_layers, bottom_layers, core): top_layers[0] was undefeated
    against the full field, later layers against what remained; bottom
    layers mirror that for winless objects. The core has wins and losses
    everywhere within itself, so the update quotient is well defined on it.
    Objects with no comparisons at all cannot be placed and raise
    DegenerateStrengths.
    """
    n = counts.shape[0]
    wins_all = counts.sum(axis=1)
    losses_all = counts.sum(axis=0)
    isolated = np.flatnonzero((wins_all == 0) & (losses_all == 0))
    if isolated.size:
        raise DegenerateStrengths(
            f"objects {isolated.tolist()} have no comparisons; strengths are undefined"
        )
    remaining = np.ones(n, dtype=bool)
    top_layers: list[list[int]] = []
    bottom_layers: list[list[int]] = []
    while True:
        idx = np.flatnonzero(remaining)
        if idx.size == 0:
            break
        sub = counts[np.ix_(idx, idx)]
        wins = sub.sum(axis=1)
        losses = sub.sum(axis=0)
        none_left = np.flatnonzero((wins == 0) & (losses == 0))
        if none_left.size and idx.size > 1:
            raise DegenerateStrengths(
                f"objects {idx[none_left].tolist()} are compared only against "
                "already-excluded objects; strengths are undefined"
            )
        top = idx[(losses == 0) & (wins > 0)]
        bottom = idx[(wins == 0) & (losses > 0)]
        if top.size == 0 and bottom.size == 0:
            break
        if top.size:
            top_layers.append([int(i) for i in top])
            remaining[top] = False
        if bottom.size:
            bottom_layers.append([int(i) for i in bottom])
            remaining[bottom] = False
    return top_layers, bottom_layers, [int(i) for i in np.flatnonzero(remaining)]


def bt_iterate(
    x: StrengthMatrixX | np.ndarray,
    eps: float,
    init: np.ndarray | None = None,
    max_iters: int = 500,
    *,
    strength_tol: float | None = None,
    settle_tol: float | None = 1e-9,
    damping: float = 0.5,
    warn_excluded: bool = True,
) -> BTFit:
    """Iterate the biased update until the ranking stops moving.

    Stops once a sweep leaves the induced ranking unchanged AND the relative
    strength movement of that sweep is below `settle_tol`, or at max_iters.
    The movement guard matters: near-tied strengths cross each other slowly,
    so the bare first ranking repeat often lands mid-crossing and the order
    would still flip a few sweeps later; the guard waits until the point is
    stationary enough that further sweeps cannot reorder it. Pass
    settle_tol=None for the bare repeat rule, or `strength_tol` to ignore
    rankings and require relative strength convergence alone (useful at
    eps = 0, the standard maximum-likelihood fixed point). Strengths are
    renormalized to geometric mean 1 each sweep.

    Each sweep relaxes toward the raw update in log space:
    log pi <- (1 - damping) * log pi_raw + damping * log pi_old. The raw
    synchronous map shares its fixed points with the damped one but can
    enter exact two-cycles (with two objects it reflects log-strengths
    around the fixed point, so it never settles); damping = 0.5 removes
    the cycles, damping = 0.0 recovers the raw map.

    Undefeated and winless objects are excluded from the fit layer by layer
    and appended at the ranking's extremes (a warning notes how many);
    objects with no usable comparisons raise DegenerateStrengths.
    """
    if not 0.0 <= eps <= 0.5:
        raise InvalidRate(f"eps must lie in [0, 0.5], got {eps}")
    if not 0.0 <= damping < 1.0:
        raise ValueError(f"damping must lie in [0, 1), got {damping}")
    counts = x.counts if isinstance(x, StrengthMatrixX) else np.asarray(x, dtype=np.float64)
    counts = counts.astype(np.float64)
    n = counts.shape[0]
    if init is None:
        init = np.ones(n, dtype=np.float64)
    init = np.asarray(init, dtype=np.float64)
    if init.shape != (n,):
        raise NonPositiveInit(f"init must have shape ({n},)")
    if not (np.isfinite(init).all() and (init > 0).all()):
        raise NonPositiveInit("initial strengths must be finite and strictly positive")

    top_layers, bottom_layers, core = _peel(counts)
    excluded = tuple(
        sorted(i for layer in top_layers for i in layer)
        + sorted(i for layer in bottom_layers for i in layer)
    )
    if excluded and warn_excluded:
        logger.warning(
            "excluded %d undefeated/winless objects from the strength fit; "
            "they are ranked at the extremes",
            len(excluded),
        )

    iterations = 0
    converged = True
    core_scores = np.array([], dtype=np.float64)
    if len(core) >= 2:
        sub = counts[np.ix_(core, core)]
        pi = _normalize(init[core])
        prev_ranking = _ranking_of(np.log(pi))
        converged = False
        for iterations in range(1, max_iters + 1):
            raw = bt_sweep(sub, eps, pi)
            if damping > 0.0:
                raw = np.exp((1.0 - damping) * np.log(raw) + damping * np.log(pi))
            new_pi = _normalize(raw)
            ranking = _ranking_of(np.log(new_pi))
            move = float(np.max(np.abs(new_pi - pi) / pi))
            if strength_tol is not None:
                if move < strength_tol:
                    pi = new_pi
                    converged = True
                    break
            elif ranking == prev_ranking and (settle_tol is None or move < settle_tol):
                pi = new_pi
                converged = True
                break
            prev_ranking = ranking
            pi = new_pi
        core_scores = np.log(pi)
    elif len(core) == 1:
        core_scores = np.array([0.0])

    scores = np.empty(n, dtype=np.float64)
    if len(core):
        scores[core] = core_scores
        hi, lo = float(core_scores.max()), float(core_scores.min())
    else:
        hi = lo = 0.0
    for depth, layer in enumerate(top_layers):
        scores[layer] = hi + (len(top_layers) - depth)
    for depth, layer in enumerate(bottom_layers):
        scores[layer] = lo - (len(bottom_layers) - depth)
    scores = scores - scores.mean()
    strengths = np.exp(scores)
    return BTFit(
        strengths=strengths,
        scores=scores,
        ranking=_ranking_of(scores),
        iterations_used=iterations,
        eps=float(eps),
        converged_ranking=converged,
        excluded=excluded,
    )


def score_spread(fit: BTFit | np.ndarray | Sequence[float]) -> float:
    """Range of the log strengths: log of the max/min strength ratio.

    Accepts a fit or a raw strength vector; rescaling every strength by the
    same factor leaves the value unchanged.
    """
    strengths = fit.strengths if isinstance(fit, BTFit) else np.asarray(fit, dtype=np.float64)
    return float(np.log(strengths.max() / strengths.min()))


def stationarity_residual(x: StrengthMatrixX | np.ndarray, eps: float, strengths: np.ndarray) -> float:
    """Max relative displacement of one update sweep at the given strengths.

    Zero exactly at a fixed point of the biased update; small values certify
    the iteration converged in strengths, not just in ranking.
    """
    counts = x.counts if isinstance(x, StrengthMatrixX) else np.asarray(x, dtype=np.float64)
    pi = np.asarray(strengths, dtype=np.float64)
    updated = _normalize(bt_sweep(counts.astype(np.float64), eps, pi))
    base = _normalize(pi)
    return float(np.max(np.abs(updated - base) / base))


HIST_BINS = 25
HIST_LO, HIST_HI = 0.0, 0.5


@dataclass(frozen=True, eq=False)
class BTSearchResult:
    """Per-seed optimal eps values with their histogram over [0, 0.5].

    `spreads[s, g]` is the score spread for seed s at grid point g (NaN
    where the fit failed); `eps_opt[s]` is the seed's arg-extremum with
    ties resolved toward the smaller eps.
    """

    objective: str
    grid: tuple[float, ...]
    eps_opt: np.ndarray
    spread_at_opt: np.ndarray
    spreads: np.ndarray
    bin_edges: np.ndarray
    bin_counts: np.ndarray

    @property
    def seeds(self) -> int:
        return int(self.eps_opt.shape[0])

    def modal_bin(self) -> tuple[float, float]:
        b = int(np.argmax(self.bin_counts))
        return (float(self.bin_edges[b]), float(self.bin_edges[b + 1]))


def _search_grid(grid_step: float) -> tuple[float, ...]:
    count = int(np.floor((HIST_HI - HIST_LO) / grid_step + 1e-9)) + 1
    return tuple(round(HIST_LO + i * grid_step, 9) for i in range(count))


def bt_eps_search(
    x: StrengthMatrixX | np.ndarray,
    objective: str = MIN_SPREAD,
    seeds: int = 200,
    grid_step: float = 0.005,
    max_iters: int = 500,
    rng_seed: int = 0,
) -> BTSearchResult:
    """Locate the eps extremizing the score spread, per random initialization.

    Each seed draws initial scores uniformly in [0, 1) (strengths e^score),
    fits every grid eps with that same init, and records the eps of minimal
    or maximal spread. The histogram uses 25 fixed-width bins over [0, 0.5]
    regardless of grid step. Failed fits mark their cell NaN and drop out of
    the extremum.
    """
    if objective not in (MIN_SPREAD, MAX_SPREAD):
        raise ValueError(f"objective must be '{MIN_SPREAD}' or '{MAX_SPREAD}'")
    if seeds < 1:
        raise ValueError("seeds must be at least 1")
    counts = x.counts if isinstance(x, StrengthMatrixX) else np.asarray(x, dtype=np.float64)
    n = counts.shape[0]
    grid = _search_grid(grid_step)
    spreads = np.full((seeds, len(grid)), np.nan, dtype=np.float64)
    eps_opt = np.full(seeds, np.nan, dtype=np.float64)
    spread_at_opt = np.full(seeds, np.nan, dtype=np.float64)
    warned = False
    for s in range(seeds):
        init_scores = rng.uniforms(rng.mix_key(rng_seed, _TAG_BT_INIT, s), np.arange(n, dtype=np.uint64))
        init = np.exp(init_scores)
        for g, eps in enumerate(grid):
            try:
                fit = bt_iterate(counts, eps, init=init, max_iters=max_iters, warn_excluded=False)
            except DegenerateStrengths:
                continue
            if fit.excluded and not warned:
                logger.warning(
                    "excluded %d undefeated/winless objects from every fit in this search",
                    len(fit.excluded),
                )
                warned = True
            spreads[s, g] = score_spread(fit)
        row = spreads[s]
        if np.isnan(row).all():
            continue
        best = None
        for g in range(len(grid)):
            if np.isnan(row[g]):
                continue
            if best is None:
                best = g
            elif objective == MIN_SPREAD and row[g] < row[best]:
                best = g
            elif objective == MAX_SPREAD and row[g] > row[best]:
                best = g
        eps_opt[s] = grid[best]
        spread_at_opt[s] = row[best]
    edges = np.linspace(HIST_LO, HIST_HI, HIST_BINS + 1)
    counts_hist = np.zeros(HIST_BINS, dtype=np.int64)
    for value in eps_opt:
        if np.isnan(value):
            continue
        b = min(int((value - HIST_LO) / ((HIST_HI - HIST_LO) / HIST_BINS)), HIST_BINS - 1)
        counts_hist[b] += 1
    return BTSearchResult(
        objective=objective,
        grid=grid,
        eps_opt=eps_opt,
        spread_at_opt=spread_at_opt,
        spreads=spreads,
        bin_edges=edges,
        bin_counts=counts_hist,
    )


@dataclass(frozen=True, eq=False)
class BTRanking:
    """Modal ranking over seeds with per-position agreement fractions."""

    eps: float
    seeds: int
    ranking: tuple[int, ...]
    modal_count: int
    position_agreement: np.ndarray

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "eps": self.eps,
            "seeds": self.seeds,
            "ranking": list(self.ranking),
            "modal_count": self.modal_count,
            "position_agreement": [float(v) for v in self.position_agreement],
        }


def bt_rank_with_eps(
    x: StrengthMatrixX | np.ndarray,
    eps: float,
    seeds: int = 200,
    max_iters: int = 500,
    rng_seed: int = 0,
) -> BTRanking:
    """Rank with a fixed eps across many inits and report ranking stability.

    The modal ranking (most frequent exact ranking tuple, earliest seed on
    ties) is the headline; position_agreement[p] is the fraction of seeds
    whose rank-p text matches the modal ranking's.
    """
    if seeds < 1:
        raise ValueError("seeds must be at least 1")
    counts = x.counts if isinstance(x, StrengthMatrixX) else np.asarray(x, dtype=np.float64)
    n = counts.shape[0]
    rankings: list[tuple[int, ...]] = []
    warned = False
    for s in range(seeds):
        init_scores = rng.uniforms(rng.mix_key(rng_seed, _TAG_BT_INIT, s), np.arange(n, dtype=np.uint64))
        fit = bt_iterate(counts, eps, init=np.exp(init_scores), max_iters=max_iters, warn_excluded=False)
        if fit.excluded and not warned:
            logger.warning(
                "excluded %d undefeated/winless objects from every fit in this ranking",
                len(fit.excluded),
            )
            warned = True
        rankings.append(fit.ranking)
    tally = Counter(rankings)
    modal, modal_count = max(tally.items(), key=lambda kv: (kv[1], -rankings.index(kv[0])))
    agreement = np.zeros(n, dtype=np.float64)
    for ranking in rankings:
        for pos in range(n):
            if ranking[pos] == modal[pos]:
                agreement[pos] += 1
    agreement /= seeds
    return BTRanking(
        eps=float(eps),
        seeds=seeds,
        ranking=modal,
        modal_count=int(modal_count),
        position_agreement=agreement,
    )


def write_histogram_csv(path: str | Path, result: BTSearchResult, schema_version: int = 1) -> None:
    """Write the eps_opt histogram as CSV with columns bin_lo, bin_hi, count."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version={schema_version}\n")
        writer = csv.writer(fh)
        writer.writerow(["bin_lo", "bin_hi", "count"])
        for b in range(HIST_BINS):
            writer.writerow(
                [repr(float(result.bin_edges[b])), repr(float(result.bin_edges[b + 1])), int(result.bin_counts[b])]
            )


def write_seed_table_csv(path: str | Path, result: BTSearchResult, schema_version: int = 1) -> None:
    """Write the per-seed optima as CSV with columns seed, eps_opt, spread_at_opt."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version={schema_version}\n")
        writer = csv.writer(fh)
        writer.writerow(["seed", "eps_opt", "spread_at_opt"])
        for s in range(result.seeds):
            eps_val = result.eps_opt[s]
            spread_val = result.spread_at_opt[s]
            writer.writerow(
                [
                    s,
                    "" if np.isnan(eps_val) else repr(float(eps_val)),
                    "" if np.isnan(spread_val) else repr(float(spread_val)),
                ]
            )


def write_spreads_csv(path: str | Path, result: BTSearchResult, schema_version: int = 1) -> None:
    """Write every seed's spread curve as CSV with columns seed, eps, spread."""
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version={schema_version}\n")
        writer = csv.writer(fh)
        writer.writerow(["seed", "eps", "spread"])
        for s in range(result.seeds):
            for g, eps in enumerate(result.grid):
                val = result.spreads[s, g]
                writer.writerow([s, repr(float(eps)), "" if np.isnan(val) else repr(float(val))])
