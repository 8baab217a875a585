"""Exception hierarchy shared across the package."""

from __future__ import annotations


class PairerrError(Exception):
    """Base class for all package-specific errors."""


# --- record / matrix construction ---------------------------------------


class MissingPair(PairerrError):
    """An ordered pair has no judgment record under the selected trial."""


class DuplicatePair(PairerrError):
    """Two records share the same (ordered pair, trial) slot."""


class IncompleteMatrix(PairerrError):
    """An operation needs a fully populated preference matrix."""


class MissingTrials(PairerrError):
    """A pair has fewer trials in some orientation than the declared count."""


class InconsistentCounts(PairerrError):
    """A pair has more trials, or duplicated trial indices, in an orientation."""


class InsufficientTrials(PairerrError):
    """A trial subselection asks for more trials than the records contain."""


# --- numerics -------------------------------------------------------------


class InvalidRate(PairerrError):
    """An error rate lies outside its admissible interval."""


class RankOutOfRange(PairerrError):
    """A rank index m is outside 1..N."""


class LengthMismatch(PairerrError):
    """Two sequences that must align have different lengths."""


class SupportMismatch(PairerrError):
    """Two curves do not share the same n support."""


class DegenerateStrengths(PairerrError):
    """A strength fit is undefined for an object with no comparisons."""


class NonPositiveInit(PairerrError):
    """Initial strengths must be strictly positive."""


# --- collection harness ---------------------------------------------------


class AuthError(PairerrError):
    """The provider rejected the request credentials."""


class RateLimited(PairerrError):
    """The provider throttled the request."""


class NetworkError(PairerrError):
    """The request failed to reach the provider or timed out."""


class ParseFailure(PairerrError):
    """A provider response could not be parsed as a choice."""


class EmptyText(PairerrError):
    """A corpus entry or generated text is empty."""


class MissingLexicon(PairerrError):
    """Pseudo-paragraph generation needs a word list."""
