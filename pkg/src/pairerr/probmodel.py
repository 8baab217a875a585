"""Closed-form probabilities of the pairwise error models.

Judgment errors are modeled as independent flips: a uniform model flips any
judgment with rate eps, a positional model flips with rate eps_plus when the
truly better text is presented first and eps_minus when it is second. These
compose into the value distributions of the consensus matrix Z and the
repeated-trial matrix W, and into the probability that a text of true rank m
realizes exactly its transitive Copeland score through decisive aggregates,
which shrinks as the comparison set grows.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

from .errors import InvalidRate, RankOutOfRange

UNIFORM = "uniform"
POSITIONAL = "positional"


@dataclass(frozen=True)
class ErrorSpec:
    """Error rates of a judge: one shared rate, or one per presentation slot."""

    kind: str
    eps: float | None = None
    eps_plus: float | None = None
    eps_minus: float | None = None

    def __post_init__(self) -> None:
        if self.kind == UNIFORM:
            if self.eps is None or self.eps_plus is not None or self.eps_minus is not None:
                raise ValueError("uniform spec takes exactly the shared rate eps")
            _check_rate(self.eps, "eps")
        elif self.kind == POSITIONAL:
            if self.eps is not None or self.eps_plus is None or self.eps_minus is None:
                raise ValueError("positional spec takes exactly eps_plus and eps_minus")
            _check_rate(self.eps_plus, "eps_plus")
            _check_rate(self.eps_minus, "eps_minus")
        else:
            raise ValueError(f"unknown error model kind: {self.kind!r}")

    @classmethod
    def uniform(cls, eps: float) -> "ErrorSpec":
        return cls(kind=UNIFORM, eps=eps)

    @classmethod
    def positional(cls, eps_plus: float, eps_minus: float) -> "ErrorSpec":
        return cls(kind=POSITIONAL, eps_plus=eps_plus, eps_minus=eps_minus)

    @property
    def rates(self) -> tuple[float, float]:
        """(rate when better text is first, rate when it is second)."""
        if self.kind == UNIFORM:
            return (float(self.eps), float(self.eps))
        return (float(self.eps_plus), float(self.eps_minus))

    def label(self) -> str:
        if self.kind == UNIFORM:
            return f"eps={self.eps:g}"
        return f"eps_plus={self.eps_plus:g},eps_minus={self.eps_minus:g}"


@dataclass(frozen=True)
class RepeatSpec:
    """Trials per unordered pair: k_plus with the better-ranked index first."""

    k_plus: int = 1
    k_minus: int = 1

    def __post_init__(self) -> None:
        if self.k_plus < 1 or self.k_minus < 1:
            raise ValueError("both trial counts must be at least 1")

    @property
    def total(self) -> int:
        return self.k_plus + self.k_minus


def _check_rate(rate: float, name: str) -> None:
    if not (0.0 <= float(rate) <= 0.5):
        raise InvalidRate(f"{name} must lie in [0, 0.5], got {rate}")


def z_value_probs(spec: ErrorSpec) -> dict[float, float]:
    """Distribution of a consensus entry relative to the true order.

    Keys are +1 (both orders right), 0 (the orders disagree), and -1 (both
    wrong); values sum to 1 for any admissible rates.
    """
    ep, em = spec.rates
    return {
        1.0: (1.0 - ep) * (1.0 - em),
        0.0: ep * (1.0 - em) + em * (1.0 - ep),
        -1.0: ep * em,
    }


def w_value_probs(spec: ErrorSpec, rep: RepeatSpec) -> dict[float, float]:
    """Distribution of a trial-averaged entry relative to the true order.

    The aggregate takes value (k - 2m)/k when m of the k = k_plus + k_minus
    trials err; m splits into binomial wrong counts per presentation slot.
    Keys run from +1 down to -1 on the exact grid of 1 + k values.
    """
    ep, em = spec.rates
    kp, km = rep.k_plus, rep.k_minus
    k = kp + km
    out: dict[float, float] = {}
    for m in range(k + 1):
        prob = 0.0
        for mp in range(max(0, m - km), min(kp, m) + 1):
            mm = m - mp
            prob += (
                math.comb(kp, mp)
                * math.comb(km, mm)
                * ep**mp
                * (1.0 - ep) ** (kp - mp)
                * em**mm
                * (1.0 - em) ** (km - mm)
            )
        out[(k - 2 * m) / k] = prob
    return out


def pair_true_order_prob(spec: ErrorSpec, rep: RepeatSpec | None = None) -> float:
    """Probability a pair aggregates to exactly the true order (+1)."""
    rep = rep or RepeatSpec()
    ep, em = spec.rates
    return (1.0 - ep) ** rep.k_plus * (1.0 - em) ** rep.k_minus


def pair_inverse_order_prob(spec: ErrorSpec, rep: RepeatSpec | None = None) -> float:
    """Probability a pair aggregates to exactly the inverse order (-1)."""
    rep = rep or RepeatSpec()
    ep, em = spec.rates
    return ep**rep.k_plus * em**rep.k_minus


def p_correct_copeland(
    m: int, n: int, spec: ErrorSpec, rep: RepeatSpec | None = None
) -> float:
    """Probability the rank-m text of n realizes exactly its transitive score.

    Counts realizations whose aggregates are all decisive (every opponent
    pair at +1 or -1): the true score survives exactly when c of the m-1
    stronger opponents and c of the n-m weaker ones flip, for some c.
    Decisive is automatic for single both-order trials; with repeats it
    means all k trials of a pair agree. Terms are assembled in log space
    from exact binomial integers, so large n neither overflows nor loses
    the combinatorial weights.
    """
    if n < 2:
        raise ValueError("n must be at least 2")
    if not 1 <= m <= n:
        raise RankOutOfRange(f"rank m must lie in 1..{n}, got {m}")
    rep = rep or RepeatSpec()
    p_to = pair_true_order_prob(spec, rep)
    p_io = pair_inverse_order_prob(spec, rep)
    if p_io == 0.0:
        return p_to ** (n - 1)
    log_to = math.log(p_to)
    log_io = math.log(p_io)
    total = 0.0
    for c in range(min(m - 1, n - m) + 1):
        log_term = (
            (n - 1 - 2 * c) * log_to
            + math.log(math.comb(m - 1, c))
            + math.log(math.comb(n - m, c))
            + 2 * c * log_io
        )
        total += math.exp(log_term)
    return total


@dataclass(frozen=True)
class ScalabilityTable:
    """P(correct score) over ranks and set sizes, with per-rank decrease flags."""

    spec: ErrorSpec
    rep: RepeatSpec
    rows: tuple[tuple[int, int, float], ...]
    strict_decrease: dict[int, bool]


def scalability_table(
    spec: ErrorSpec,
    rep: RepeatSpec | None = None,
    m_values: Sequence[int] = tuple(range(1, 9)),
    n_values: Sequence[int] | None = None,
) -> ScalabilityTable:
    """Tabulate p_correct_copeland on a (m, n) grid and check monotonicity.

    `strict_decrease[m]` is True when the probability strictly drops at
    every step along the given n values (only those with n > m enter the
    row set). Defaults cover m = 1..8.
    """
    rep = rep or RepeatSpec()
    rows: list[tuple[int, int, float]] = []
    strict: dict[int, bool] = {}
    for m in m_values:
        ns = [n for n in (n_values if n_values is not None else range(m + 1, 61)) if n >= max(2, m)]
        probs = [p_correct_copeland(m, n, spec, rep) for n in ns]
        rows.extend((m, n, p) for n, p in zip(ns, probs))
        strict[m] = all(b < a for a, b in zip(probs, probs[1:]))
    return ScalabilityTable(spec=spec, rep=rep, rows=tuple(rows), strict_decrease=strict)


SCALABILITY_COLUMNS = (
    "m",
    "n",
    "probability",
    "kind",
    "eps",
    "eps_plus",
    "eps_minus",
    "k_plus",
    "k_minus",
)


def write_scalability_csv(
    path: str | Path, tables: Sequence[ScalabilityTable], schema_version: int = 1
) -> None:
    """Write scalability tables into a single CSV, rows ordered by (m, n)."""
    merged: list[tuple[int, int, float, ErrorSpec, RepeatSpec]] = []
    for table in tables:
        merged.extend((m, n, p, table.spec, table.rep) for m, n, p in table.rows)
    merged.sort(key=lambda row: (row[0], row[1]))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(f"# schema_version={schema_version}\n")
        writer = csv.writer(fh)
        writer.writerow(SCALABILITY_COLUMNS)
        for m, n, p, spec, rep in merged:
            writer.writerow(
                [
                    m,
                    n,
                    repr(float(p)),
                    spec.kind,
                    "" if spec.eps is None else repr(float(spec.eps)),
                    "" if spec.eps_plus is None else repr(float(spec.eps_plus)),
                    "" if spec.eps_minus is None else repr(float(spec.eps_minus)),
                    rep.k_plus,
                    rep.k_minus,
                ]
            )
