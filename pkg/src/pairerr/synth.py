"""Synthetic matrices under a known error model, and the Monte-Carlo oracle.

Ground truth is the identity order: text i truly beats text j whenever
i < j. Every random decision is drawn from the counter generator keyed by
(seed, pair index, trial index), so matrices are reproducible entry by
entry regardless of generation order.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import rng
from .errors import RankOutOfRange
from .prefcore import ConsensusMatrixZ, RepeatedMatrixW
from .probmodel import ErrorSpec, RepeatSpec, z_value_probs

_TAG_Z = 0x5A
_TAG_W = 0x57
_TAG_MC = 0x4D


def synth_z(n: int, spec: ErrorSpec, rng_seed: int = 0) -> ConsensusMatrixZ:
    """Draw a consensus matrix with iid both-order errors at the given rates.

    Each upper-triangle pair lands at +1 / 0 / -1 relative to the true
    order with the z_value_probs weights, then is mirrored antisymmetrically.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    probs = z_value_probs(spec)
    p_to, p_zero = probs[1.0], probs[0.0]
    iu, ju = np.triu_indices(n, k=1)
    u = rng.uniforms(rng.mix_key(rng_seed, _TAG_Z), np.arange(iu.shape[0], dtype=np.uint64))
    vals = np.where(u < p_to, 1, np.where(u < p_to + p_zero, 0, -1)).astype(np.int8)
    entries = np.zeros((n, n), dtype=np.int8)
    entries[iu, ju] = vals
    entries[ju, iu] = -vals
    return ConsensusMatrixZ(n=n, entries=entries)


def synth_w(n: int, spec: ErrorSpec, rep: RepeatSpec, rng_seed: int = 0) -> RepeatedMatrixW:
    """Draw a repeated-trial matrix by simulating every individual judgment.

    For each pair {i < j}, k_plus trials present the truly better text
    first (error rate eps_plus) and k_minus present it second (eps_minus);
    the aggregate lands on the exact (k_plus + k_minus)-denominator grid.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    ep, em = spec.rates
    kp, km = rep.k_plus, rep.k_minus
    k = kp + km
    iu, ju = np.triu_indices(n, k=1)
    n_pairs = iu.shape[0]
    counters = np.arange(n_pairs * k, dtype=np.uint64).reshape(n_pairs, k)
    u = rng.uniforms(rng.mix_key(rng_seed, _TAG_W), counters)
    wrong = (u[:, :kp] < ep).sum(axis=1) + (u[:, kp:] < em).sum(axis=1)
    numer_vals = (k - 2 * wrong).astype(np.int32)
    numer = np.zeros((n, n), dtype=np.int32)
    numer[iu, ju] = numer_vals
    numer[ju, iu] = -numer_vals
    return RepeatedMatrixW(n=n, k_plus=kp, k_minus=km, numerators=numer)


@dataclass(frozen=True)
class MCEstimate:
    """Monte-Carlo frequency with its binomial standard error."""

    p_hat: float
    std_error: float
    trials: int


def mc_p_correct(
    m: int,
    n: int,
    spec: ErrorSpec,
    rep: RepeatSpec | None = None,
    trials: int = 100_000,
    rng_seed: int = 0,
) -> MCEstimate:
    """Estimate p_correct_copeland by simulating the rank-m text's row.

    Each trial draws the row of a synthetic matrix trial-by-trial (the same
    flip model as synth_w) and counts realizations where every aggregate is
    decisive (all of a pair's judgments agree) and the induced Copeland
    score equals the transitive value n + 1 - 2m. Aggregates that pass
    through ties are not counted: the closed form enumerates decisive
    configurations only, and this oracle measures that same event. The
    standard error is the binomial sqrt(p(1-p)/trials).
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 1 <= m <= n:
        raise RankOutOfRange(f"rank m must lie in 1..{n}, got {m}")
    if trials < 1:
        raise ValueError("trials must be at least 1")
    rep = rep or RepeatSpec()
    ep, em = spec.rates
    kp, km = rep.k_plus, rep.k_minus
    k = kp + km
    n_opp = n - 1
    # Signs of the true pairwise outcomes for the rank-m text: it truly
    # loses to the m-1 stronger texts and beats the n-m weaker ones.
    signs = np.concatenate([-np.ones(m - 1, dtype=np.int64), np.ones(n - m, dtype=np.int64)])
    target = (n + 1 - 2 * m) * k
    key = rng.mix_key(rng_seed, _TAG_MC)
    hits = 0
    chunk = max(1, int(4_000_000 / (n_opp * k)))
    done = 0
    while done < trials:
        size = min(chunk, trials - done)
        counters = (
            np.arange(done * n_opp * k, (done + size) * n_opp * k, dtype=np.uint64)
            .reshape(size, n_opp, k)
        )
        u = rng.uniforms(key, counters)
        wrong = (u[:, :, :kp] < ep).sum(axis=2) + (u[:, :, kp:] < em).sum(axis=2)
        decisive = ((wrong == 0) | (wrong == k)).all(axis=1)
        score = (signs[None, :] * (k - 2 * wrong)).sum(axis=1)
        hits += int((decisive & (score == target)).sum())
        done += size
    p_hat = hits / trials
    se = float(np.sqrt(p_hat * (1.0 - p_hat) / trials))
    return MCEstimate(p_hat=p_hat, std_error=se, trials=trials)
