"""Judgment records and the preference matrices built from them.

A collection run produces one PreferenceRecord per (ordered pair, trial).
From those this module assembles the derived matrices: the raw both-order
matrix Y, the consensus matrix Z (one trial per order), the repeated-trial
matrix W (k trials per order, aggregated on an exact rational grid), and
the win-count matrix X used by the strength model. The commutativity score
measures how often the two presentation orders of a pair agree verbatim,
which a self-consistent judge would never do.
"""

from __future__ import annotations

import csv
import json
from collections.abc import Callable, Iterable, Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .errors import (
    DuplicatePair,
    IncompleteMatrix,
    InconsistentCounts,
    InsufficientTrials,
    MissingPair,
    MissingTrials,
)

PROMPT_VARIANTS = ("baseline", "V1", "V2", "V3")
CHOICES = ("first", "second")


@dataclass(frozen=True)
class PreferenceRecord:
    """One parsed judgment for an ordered presentation of a text pair.

    `first_index` and `second_index` are positions in the run's text list,
    in presentation order. `trial_index` counts repetitions of this exact
    orientation, starting at 0. `tie_randomized` marks judgments that were
    assigned by coin flip after an unparseable response (V3 protocol only).
    """

    run_id: str
    model_id: str
    prompt_variant: str
    first_index: int
    second_index: int
    trial_index: int
    parsed_choice: str
    tie_randomized: bool
    raw_response: str
    temperature: float
    timestamp: str

    def __post_init__(self) -> None:
        if self.prompt_variant not in PROMPT_VARIANTS:
            raise ValueError(f"unknown prompt variant: {self.prompt_variant!r}")
        if self.parsed_choice not in CHOICES:
            raise ValueError(f"parsed_choice must be 'first' or 'second', got {self.parsed_choice!r}")
        if self.first_index == self.second_index:
            raise ValueError("a pair must consist of two distinct texts")
        if self.first_index < 0 or self.second_index < 0 or self.trial_index < 0:
            raise ValueError("indices must be non-negative")

    @property
    def preferred_index(self) -> int:
        """Text index the judge preferred in this presentation."""
        return self.first_index if self.parsed_choice == "first" else self.second_index

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, payload: dict) -> "PreferenceRecord":
        return cls(
            run_id=str(payload["run_id"]),
            model_id=str(payload["model_id"]),
            prompt_variant=str(payload["prompt_variant"]),
            first_index=int(payload["first_index"]),
            second_index=int(payload["second_index"]),
            trial_index=int(payload["trial_index"]),
            parsed_choice=str(payload["parsed_choice"]),
            tie_randomized=bool(payload["tie_randomized"]),
            raw_response=str(payload["raw_response"]),
            temperature=float(payload["temperature"]),
            timestamp=str(payload["timestamp"]),
        )


def _frozen_array(obj: object, name: str, arr: np.ndarray) -> None:
    arr.setflags(write=False)
    object.__setattr__(obj, name, arr)


@dataclass(frozen=True, eq=False)
class PreferenceMatrixY:
    """Raw ordered-pair judgments: +1 keeps the row text, -1 the column text.

    Entry (i, j) is the judgment for the presentation "i first, j second".
    Off-diagonal zeros mean "not judged yet"; builders that need a complete
    matrix raise IncompleteMatrix on them.
    """

    n: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries, dtype=np.int8).copy()
        if arr.shape != (self.n, self.n):
            raise ValueError(f"expected a {self.n}x{self.n} matrix, got {arr.shape}")
        if not np.isin(arr, (-1, 0, 1)).all():
            raise ValueError("Y entries must be -1, +1, or 0 for unset")
        if np.diagonal(arr).any():
            raise ValueError("diagonal entries must be zero")
        _frozen_array(self, "entries", arr)

    @property
    def is_complete(self) -> bool:
        off = ~np.eye(self.n, dtype=bool)
        return bool((self.entries[off] != 0).all())


@dataclass(frozen=True, eq=False)
class ConsensusMatrixZ:
    """Both-order consensus: +1 row wins, -1 row loses, 0 the orders disagree."""

    n: int
    entries: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.entries, dtype=np.int8).copy()
        if arr.shape != (self.n, self.n):
            raise ValueError(f"expected a {self.n}x{self.n} matrix, got {arr.shape}")
        if not np.isin(arr, (-1, 0, 1)).all():
            raise ValueError("Z entries must lie in {-1, 0, 1}")
        if (arr != -arr.T).any():
            raise ValueError("Z must be antisymmetric")
        _frozen_array(self, "entries", arr)

    def values(self) -> np.ndarray:
        """Entries as float64, for score and curve computations."""
        return self.entries.astype(np.float64)


@dataclass(frozen=True, eq=False)
class RepeatedMatrixW:
    """Trial-averaged preferences on the exact grid of (k+ + k-) denominators.

    Entries are stored as integer numerators over `denominator = k_plus +
    k_minus`, so antisymmetry and the value grid are exact; `entries`
    renders them as float64 on demand.
    """

    n: int
    k_plus: int
    k_minus: int
    numerators: np.ndarray

    def __post_init__(self) -> None:
        if self.k_plus < 1 or self.k_minus < 1:
            raise ValueError("k_plus and k_minus must be at least 1")
        arr = np.asarray(self.numerators, dtype=np.int32).copy()
        if arr.shape != (self.n, self.n):
            raise ValueError(f"expected a {self.n}x{self.n} matrix, got {arr.shape}")
        d = self.denominator
        if (np.abs(arr) > d).any():
            raise ValueError("numerators must lie in [-(k+ + k-), k+ + k-]")
        off = ~np.eye(self.n, dtype=bool)
        if ((arr[off] - d) % 2 != 0).any():
            raise ValueError("numerators must share the parity of k+ + k-")
        if (arr != -arr.T).any():
            raise ValueError("W must be antisymmetric")
        if np.diagonal(arr).any():
            raise ValueError("diagonal entries must be zero")
        _frozen_array(self, "numerators", arr)

    @property
    def denominator(self) -> int:
        return self.k_plus + self.k_minus

    @property
    def entries(self) -> np.ndarray:
        return self.numerators.astype(np.float64) / self.denominator

    def values(self) -> np.ndarray:
        return self.entries


@dataclass(frozen=True, eq=False)
class StrengthMatrixX:
    """Win counts pooled over both orders: entry (i, j) is wins of i over j."""

    n: int
    counts: np.ndarray

    def __post_init__(self) -> None:
        arr = np.asarray(self.counts, dtype=np.int64).copy()
        if arr.shape != (self.n, self.n):
            raise ValueError(f"expected a {self.n}x{self.n} matrix, got {arr.shape}")
        if (arr < 0).any():
            raise ValueError("win counts must be non-negative")
        if np.diagonal(arr).any():
            raise ValueError("diagonal entries must be zero")
        _frozen_array(self, "counts", arr)


# --- builders ---------------------------------------------------------------


def _check_indices(records: Iterable[PreferenceRecord], n: int) -> None:
    for rec in records:
        if rec.first_index >= n or rec.second_index >= n:
            raise ValueError(
                f"record indexes text {max(rec.first_index, rec.second_index)} "
                f"but the run has only {n} texts"
            )


TrialFilter = "int | Callable[[PreferenceRecord], bool] | None"


def build_y(
    records: Sequence[PreferenceRecord],
    n: int,
    trial_filter: int | Callable[[PreferenceRecord], bool] | None = 0,
) -> PreferenceMatrixY:
    """Assemble the ordered-pair matrix Y from one judgment per ordered pair.

    `trial_filter` selects which records participate: an int matches
    `trial_index`, a callable keeps records it returns True for, and None
    keeps everything. After filtering, every ordered pair must be covered
    exactly once (MissingPair / DuplicatePair otherwise).
    """
    _check_indices(records, n)
    if callable(trial_filter):
        selected = [r for r in records if trial_filter(r)]
    elif trial_filter is None:
        selected = list(records)
    else:
        selected = [r for r in records if r.trial_index == int(trial_filter)]

    entries = np.zeros((n, n), dtype=np.int8)
    seen: set[tuple[int, int]] = set()
    for rec in selected:
        slot = (rec.first_index, rec.second_index)
        if slot in seen:
            raise DuplicatePair(f"two records for ordered pair {slot} under the given trial filter")
        seen.add(slot)
        entries[slot] = 1 if rec.parsed_choice == "first" else -1
    if len(seen) != n * (n - 1):
        missing = n * (n - 1) - len(seen)
        raise MissingPair(f"{missing} ordered pairs have no record under the given trial filter")
    return PreferenceMatrixY(n=n, entries=entries)


def build_z(y: PreferenceMatrixY) -> ConsensusMatrixZ:
    """Consensus of the two presentation orders: z_ij = (y_ij - y_ji) / 2."""
    if not y.is_complete:
        raise IncompleteMatrix("Y has unjudged ordered pairs; cannot form the consensus matrix")
    raw = y.entries.astype(np.int16)
    z = (raw - raw.T) // 2
    return ConsensusMatrixZ(n=y.n, entries=z.astype(np.int8))


def _group_by_pair(
    records: Sequence[PreferenceRecord],
) -> dict[tuple[int, int], tuple[list[PreferenceRecord], list[PreferenceRecord]]]:
    """Group records by canonical pair {i<j} into (i-first, j-first) lists."""
    groups: dict[tuple[int, int], tuple[list, list]] = {}
    for rec in records:
        i, j = rec.first_index, rec.second_index
        key = (min(i, j), max(i, j))
        fwd, rev = groups.setdefault(key, ([], []))
        (fwd if i < j else rev).append(rec)
    for fwd, rev in groups.values():
        fwd.sort(key=lambda r: r.trial_index)
        rev.sort(key=lambda r: r.trial_index)
    return groups


def _expect_trials(
    side: list[PreferenceRecord], want: int, pair: tuple[int, int], label: str
) -> None:
    if len(side) < want:
        raise MissingTrials(f"pair {pair} has {len(side)} {label} trials, expected {want}")
    if len(side) > want:
        raise InconsistentCounts(f"pair {pair} has {len(side)} {label} trials, expected {want}")
    indices = [r.trial_index for r in side]
    if len(set(indices)) != len(indices):
        raise InconsistentCounts(f"pair {pair} repeats a trial index in its {label} trials")


def build_w(
    records: Sequence[PreferenceRecord], n: int, k_plus: int, k_minus: int
) -> RepeatedMatrixW:
    """Aggregate k_plus + k_minus trials per pair into the rational grid matrix.

    For the canonical pair {i < j}, the k_plus "i first" judgments enter with
    their sign for i and the k_minus "j first" judgments with their sign
    flipped, so a pair judged consistently for i lands at +1 exactly.
    """
    if k_plus < 1 or k_minus < 1:
        raise ValueError("k_plus and k_minus must be at least 1")
    _check_indices(records, n)
    groups = _group_by_pair(records)
    numer = np.zeros((n, n), dtype=np.int32)
    for i in range(n):
        for j in range(i + 1, n):
            if (i, j) not in groups:
                raise MissingTrials(f"pair ({i}, {j}) has no trials")
            fwd, rev = groups[(i, j)]
            _expect_trials(fwd, k_plus, (i, j), "i-first")
            _expect_trials(rev, k_minus, (i, j), "j-first")
            total = 0
            for rec in fwd:
                total += 1 if rec.parsed_choice == "first" else -1
            for rec in rev:
                total -= 1 if rec.parsed_choice == "first" else -1
            numer[i, j] = total
            numer[j, i] = -total
    return RepeatedMatrixW(n=n, k_plus=k_plus, k_minus=k_minus, numerators=numer)


def build_x(records: Sequence[PreferenceRecord], n: int) -> StrengthMatrixX:
    """Count wins per directed pair, pooling both presentation orders."""
    _check_indices(records, n)
    counts = np.zeros((n, n), dtype=np.int64)
    for rec in records:
        winner = rec.preferred_index
        loser = rec.second_index if winner == rec.first_index else rec.first_index
        counts[winner, loser] += 1
    return StrengthMatrixX(n=n, counts=counts)


def subselect_trials(
    records: Sequence[PreferenceRecord], k_plus_s: int, k_minus_s: int
) -> list[PreferenceRecord]:
    """Keep the first k_plus_s i-first and k_minus_s j-first trials per pair.

    "First" follows trial_index order, so nested sub-designs share their
    prefix trials. Raises InsufficientTrials if any pair is short.
    """
    if k_plus_s < 1 or k_minus_s < 1:
        raise ValueError("subselection counts must be at least 1")
    groups = _group_by_pair(records)
    out: list[PreferenceRecord] = []
    for pair in sorted(groups):
        fwd, rev = groups[pair]
        if len(fwd) < k_plus_s or len(rev) < k_minus_s:
            raise InsufficientTrials(
                f"pair {pair} has {len(fwd)}/{len(rev)} trials per order, "
                f"need {k_plus_s}/{k_minus_s}"
            )
        out.extend(fwd[:k_plus_s])
        out.extend(rev[:k_minus_s])
    return out


def commutativity_score(y: PreferenceMatrixY) -> float:
    """Fraction of unordered pairs judged identically in both orders.

    Identical raw values across orders mean the two presentations named
    *different* winners (the sign convention flips with the order), which is
    the judge contradicting itself; an error-free judge scores 0.
    """
    if not y.is_complete:
        raise IncompleteMatrix("commutativity needs every ordered pair judged")
    n = y.n
    upper = np.triu_indices(n, k=1)
    agree = (y.entries[upper] == y.entries.T[upper]).sum()
    return float(2.0 * agree / (n * (n - 1)))


# --- file formats -------------------------------------------------------------


def write_records(path: str | Path, records: Iterable[PreferenceRecord]) -> None:
    """Write records as NDJSON, one JSON object per line."""
    with open(path, "w", encoding="utf-8") as fh:
        for rec in records:
            fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")


def read_records(path: str | Path) -> list[PreferenceRecord]:
    """Read an NDJSON judgment log, skipping blank lines."""
    out = []
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                out.append(PreferenceRecord.from_dict(json.loads(line)))
    return out


def default_ids(n: int) -> list[str]:
    return [f"text_{i}" for i in range(n)]


def export_matrix_csv(
    matrix: ConsensusMatrixZ | RepeatedMatrixW | StrengthMatrixX,
    path: str | Path,
    ids: Sequence[str] | None = None,
) -> None:
    """Write a matrix as CSV: a header row of text identifiers, then N rows.

    Z and X entries are integers; W entries are the exact rationals rendered
    with six fractional digits.
    """
    ids = list(ids) if ids is not None else default_ids(matrix.n)
    if len(ids) != matrix.n:
        raise ValueError(f"got {len(ids)} identifiers for a {matrix.n}-text matrix")
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ids)
        if isinstance(matrix, RepeatedMatrixW):
            d = matrix.denominator
            for row in matrix.numerators:
                writer.writerow([f"{v / d:.6f}" for v in row])
        elif isinstance(matrix, StrengthMatrixX):
            for row in matrix.counts:
                writer.writerow([str(int(v)) for v in row])
        else:
            for row in matrix.entries:
                writer.writerow([str(int(v)) for v in row])


def read_matrix_csv(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a matrix CSV back as (identifiers, float64 array)."""
    with open(path, "r", encoding="utf-8", newline="") as fh:
        rows = [row for row in csv.reader(fh) if row and not row[0].startswith("#")]
    if not rows:
        raise ValueError(f"{path} contains no rows")
    ids = rows[0]
    n = len(ids)
    if len(rows) - 1 != n:
        raise ValueError(f"{path}: header names {n} texts but file has {len(rows) - 1} rows")
    arr = np.array([[float(v) for v in row] for row in rows[1:]], dtype=np.float64)
    if arr.shape != (n, n):
        raise ValueError(f"{path}: expected a {n}x{n} matrix, got {arr.shape}")
    return ids, arr


def z_from_array(arr: np.ndarray) -> ConsensusMatrixZ:
    """Validate a float array as a consensus matrix (exact -1/0/1 entries)."""
    rounded = np.rint(arr)
    if not np.allclose(arr, rounded, atol=1e-9):
        raise ValueError("Z entries must be integers -1, 0, or 1")
    return ConsensusMatrixZ(n=arr.shape[0], entries=rounded.astype(np.int8))


def w_from_array(arr: np.ndarray, k_plus: int, k_minus: int) -> RepeatedMatrixW:
    """Snap a float array onto the W grid for the given trial counts."""
    d = k_plus + k_minus
    numer = np.rint(arr * d)
    if not np.allclose(arr * d, numer, atol=d * 1e-5):
        raise ValueError(f"entries do not lie on the 1/{d} grid")
    return RepeatedMatrixW(
        n=arr.shape[0], k_plus=k_plus, k_minus=k_minus, numerators=numer.astype(np.int32)
    )
