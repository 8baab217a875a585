"""Judgment collection: prompts, providers, scheduling, and the record log.

A run plan names the texts, the presentation-order pattern, the prompt
variant, and the provider. run_comparisons walks every unordered pair
through the pattern, asks the provider which text is better, parses the
strict "1"/"2" reply, and appends one record per judgment to an NDJSON
log. Reruns are cheap: judgments already in the log are skipped, so an
interrupted collection resumes from where it stopped.

The mock provider (endpoint "mock:...") answers from a programmed error
rate with no network, which makes the full pipeline testable offline.
"""

from __future__ import annotations

import datetime as _dt
import json
import threading
import time
from collections.abc import Callable, Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from urllib.parse import parse_qsl

import requests

from . import rng
from .errors import AuthError, EmptyText, MissingLexicon, NetworkError, ParseFailure, RateLimited
from .prefcore import PreferenceRecord, read_records

_TAG_MOCK = 0x4D4B
_TAG_GARBAGE = 0x47
_TAG_TIE = 0x54
_TAG_CORPUS = 0xC0

SYSTEM_TEMPLATE = (
    "You are a senior {text_type} evaluation expert with rich experience in "
    "literary appreciation and judgment. Please conduct comprehensive text "
    "evaluations based on quality, creativity, expression effectiveness, and "
    "other dimensions. Only respond with 1 or 2; no explanation needed."
)

BASELINE_USER_TEMPLATE = (
    "Compare the following two {text_type} and indicate which one is better. "
    "Output only the number: 1 if Text 1 is better, 2 if Text 2 is better. "
    "Text 1: {text1}. Text 2: {text2}."
)

V1_USER_TEMPLATE = (
    "Compare the following two texts and indicate the better one. "
    "Output only the number: 1 if Text 1 is better, 2 if Text 2 is better. "
    "Text 1: {text1}. Text 2: {text2}."
)

V2_USER_TEMPLATE = (
    "比较以下两篇文本材料/广告语/短诗/文献摘要，指出哪一篇更优。"
    "仅输出数字：输出1如果文本1更好，输出2如果文本2更好。"
    "文本1: {text1}. 文本2: {text2}."
)


@dataclass(frozen=True)
class PromptTemplate:
    """System and user message patterns for one prompt variant.

    `system_template` is None when the variant sends no system message.
    `generic_type` replaces the text-type slot for variants that must not
    name the material being compared.
    """

    variant: str
    system_template: str | None
    user_template: str
    generic_type: str | None = None


TEMPLATES = {
    "baseline": PromptTemplate("baseline", SYSTEM_TEMPLATE, BASELINE_USER_TEMPLATE),
    "V1": PromptTemplate("V1", SYSTEM_TEMPLATE, V1_USER_TEMPLATE, generic_type="text"),
    "V2": PromptTemplate("V2", SYSTEM_TEMPLATE, V2_USER_TEMPLATE),
    "V3": PromptTemplate("V3", None, BASELINE_USER_TEMPLATE),
}


def render_prompt(
    template: PromptTemplate, text_type: str, text_a: str, text_b: str
) -> tuple[str | None, str]:
    """Fill a template with the text type and the two texts, in order.

    Returns (system, user); system is None for variants without one. The
    first text takes the "Text 1" slot. Raises EmptyText on blank inputs.
    """
    if not text_a.strip() or not text_b.strip():
        raise EmptyText("both texts must be nonempty")
    slot_type = template.generic_type if template.generic_type is not None else text_type
    if not slot_type.strip():
        raise EmptyText("text_type must be nonempty")
    system = None
    if template.system_template is not None:
        system = template.system_template.format(text_type=slot_type)
    user = template.user_template.format(text_type=slot_type, text1=text_a, text2=text_b)
    return system, user


@dataclass(frozen=True)
class ProviderConfig:
    """Where judgments come from and how fast we may ask for them.

    `endpoint` starting with "mock:" selects the offline provider; anything
    else is POSTed to as a chat-completions URL. `rate_limit` is requests
    per minute, 0 for unlimited. The API key is read from the environment
    variable named by `credential_env_key` (default derived from
    provider_id).
    """

    provider_id: str
    endpoint: str
    model_name: str
    temperature: float = 0.1
    max_retries: int = 3
    rate_limit: float = 0.0
    credential_env_key: str = ""

    def env_key(self) -> str:
        if self.credential_env_key:
            return self.credential_env_key
        return "PAIRERR_API_KEY_" + self.provider_id.upper().replace("-", "_")


@dataclass(frozen=True)
class RunPlan:
    """Everything one collection run needs.

    `sequence` is the ordered presentation pattern over {'+', '-'}: '+'
    presents the lower-indexed text first, '-' the higher-indexed one. A
    judgment's trial_index counts earlier occurrences of the same symbol,
    so "+-+-" yields trials 0 and 1 in each orientation.
    """

    run_id: str
    texts: tuple[str, ...]
    text_type: str
    sequence: tuple[str, ...]
    variant: str
    provider: ProviderConfig
    rng_seed: int = 0

    def __post_init__(self) -> None:
        if len(self.texts) < 2:
            raise ValueError("a run needs at least two texts")
        if not self.sequence:
            raise ValueError("sequence must be nonempty")
        if any(s not in ("+", "-") for s in self.sequence):
            raise ValueError("sequence entries must be '+' or '-'")
        if self.variant not in TEMPLATES:
            raise ValueError(f"unknown prompt variant: {self.variant!r}")

    @property
    def n(self) -> int:
        return len(self.texts)

    def requests_total(self) -> int:
        n = self.n
        return len(self.sequence) * (n * (n - 1) // 2)


DEFAULT_SEQUENCE = ("+", "-", "+", "-", "+", "-")


def load_plan(path: str | Path) -> RunPlan:
    """Read a plan from JSON; texts may be inline or named by texts_file.

    A texts_file holds one text per line (blank lines skipped), resolved
    relative to the plan file. `sequence` may be a string like "+-+-" or a
    list of single characters.
    """
    path = Path(path)
    payload = json.loads(path.read_text(encoding="utf-8"))
    if "texts" in payload:
        texts = tuple(str(t) for t in payload["texts"])
    elif "texts_file" in payload:
        tf = Path(payload["texts_file"])
        if not tf.is_absolute():
            tf = path.parent / tf
        texts = tuple(line for line in tf.read_text(encoding="utf-8").splitlines() if line.strip())
    else:
        raise ValueError("plan must supply 'texts' or 'texts_file'")
    seq = payload.get("sequence", "".join(DEFAULT_SEQUENCE))
    sequence = tuple(seq) if isinstance(seq, str) else tuple(str(s) for s in seq)
    prov = payload["provider"]
    provider = ProviderConfig(
        provider_id=str(prov["provider_id"]),
        endpoint=str(prov["endpoint"]),
        model_name=str(prov.get("model_name", prov["provider_id"])),
        temperature=float(prov.get("temperature", 0.1)),
        max_retries=int(prov.get("max_retries", 3)),
        rate_limit=float(prov.get("rate_limit", 0.0)),
        credential_env_key=str(prov.get("credential_env_key", "")),
    )
    return RunPlan(
        run_id=str(payload["run_id"]),
        texts=texts,
        text_type=str(payload.get("text_type", "texts")),
        sequence=sequence,
        variant=str(payload.get("variant", "baseline")),
        provider=provider,
        rng_seed=int(payload.get("rng_seed", 0)),
    )


@dataclass(frozen=True)
class RequestMeta:
    """Identity of one judgment request, stable across retries.

    `attempt` counts retries of this same judgment, starting at 0; the mock
    provider folds it into its randomness so a garbled reply is not
    repeated verbatim on retry.
    """

    first_index: int
    second_index: int
    trial_index: int
    attempt: int = 0


class MockJudge:
    """Offline provider with a programmed error rate.

    Configured by the endpoint query string, e.g.
    "mock:eps=0.1&seed=3" or "mock:eps_plus=0.2&eps_minus=0.1".
    Ground truth is the text order: a lower index is the better text. With
    the better text presented first the reply is wrong with probability
    eps_plus, otherwise eps_minus (eps sets both). garbage_rate injects
    unparseable replies to exercise the retry path. Deterministic in
    (seed, pair, trial, attempt).
    """

    def __init__(self, endpoint: str) -> None:
        if not endpoint.startswith("mock:"):
            raise ValueError("MockJudge endpoint must start with 'mock:'")
        params = dict(parse_qsl(endpoint[len("mock:"):], keep_blank_values=True))
        if "eps" in params:
            self.eps_plus = self.eps_minus = float(params["eps"])
        else:
            self.eps_plus = float(params.get("eps_plus", 0.0))
            self.eps_minus = float(params.get("eps_minus", 0.0))
        self.seed = int(params.get("seed", 0))
        self.garbage_rate = float(params.get("garbage_rate", 0.0))

    def complete(self, system: str | None, user: str, meta: RequestMeta) -> str:
        i, j, t = meta.first_index, meta.second_index, meta.trial_index
        if self.garbage_rate > 0.0:
            g = rng.uniform(rng.mix_key(self.seed, _TAG_GARBAGE, i, j, t), meta.attempt)
            if g < self.garbage_rate:
                return "Text 1 reads better to me overall."
        better_first = i < j
        eps = self.eps_plus if better_first else self.eps_minus
        u = rng.uniform(rng.mix_key(self.seed, _TAG_MOCK, i, j), t)
        correct = "1" if better_first else "2"
        wrong = "2" if better_first else "1"
        return wrong if u < eps else correct


class HttpJudge:
    """Chat-completions client for any OpenAI-compatible endpoint.

    Sends system+user messages at the configured temperature and returns
    the first choice's content. 401/403 raise AuthError, 429 RateLimited,
    other failures NetworkError; the caller owns retries and backoff.
    """

    def __init__(self, config: ProviderConfig, api_key: str, timeout: float = 60.0) -> None:
        self.config = config
        self.api_key = api_key
        self.timeout = timeout
        self.session = requests.Session()

    def complete(self, system: str | None, user: str, meta: RequestMeta) -> str:
        messages = []
        if system is not None:
            messages.append({"role": "system", "content": system})
        messages.append({"role": "user", "content": user})
        payload = {
            "model": self.config.model_name,
            "messages": messages,
            "temperature": self.config.temperature,
        }
        try:
            resp = self.session.post(
                self.config.endpoint,
                json=payload,
                headers={"Authorization": f"Bearer {self.api_key}"},
                timeout=self.timeout,
            )
        except requests.RequestException as exc:
            raise NetworkError(str(exc)) from exc
        if resp.status_code in (401, 403):
            raise AuthError(f"provider returned {resp.status_code}")
        if resp.status_code == 429:
            raise RateLimited("provider returned 429")
        if resp.status_code != 200:
            raise NetworkError(f"provider returned {resp.status_code}: {resp.text[:200]}")
        try:
            return str(resp.json()["choices"][0]["message"]["content"])
        except (ValueError, KeyError, IndexError, TypeError) as exc:
            raise NetworkError(f"malformed provider response: {exc}") from exc


def judge_for(config: ProviderConfig, *, api_key: str | None = None, timeout: float = 60.0):
    """Build the judge for a provider config; mock endpoints need no key."""
    if config.endpoint.startswith("mock:"):
        return MockJudge(config.endpoint)
    import os

    key = api_key if api_key is not None else os.environ.get(config.env_key(), "")
    if not key:
        raise AuthError(f"no API key in environment variable {config.env_key()}")
    return HttpJudge(config, key, timeout=timeout)


class RecordLog:
    """Append-only NDJSON sink that skips judgments it already holds.

    Keys are (run_id, first_index, second_index, trial_index). Existing
    records are indexed at open, so reopening a partial log resumes the
    run. Appends are serialized and flushed per record.
    """

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._lock = threading.Lock()
        self._keys: set[tuple[str, int, int, int]] = set()
        self.records: list[PreferenceRecord] = []
        if self.path.exists():
            self.records = list(read_records(self.path))
            for rec in self.records:
                self._keys.add(self._key(rec))
        self._fh = open(self.path, "a", encoding="utf-8")

    @staticmethod
    def _key(rec: PreferenceRecord) -> tuple[str, int, int, int]:
        return (rec.run_id, rec.first_index, rec.second_index, rec.trial_index)

    def has(self, run_id: str, first: int, second: int, trial: int) -> bool:
        with self._lock:
            return (run_id, first, second, trial) in self._keys

    def append(self, rec: PreferenceRecord) -> bool:
        """Write one record; returns False if its key was already present."""
        with self._lock:
            key = self._key(rec)
            if key in self._keys:
                return False
            self._fh.write(json.dumps(rec.to_dict(), ensure_ascii=False) + "\n")
            self._fh.flush()
            self._keys.add(key)
            self.records.append(rec)
            return True

    def close(self) -> None:
        self._fh.close()

    def __enter__(self) -> "RecordLog":
        return self

    def __exit__(self, *exc) -> None:
        self.close()


class _RateLimiter:
    """Spaces request starts to respect a requests-per-minute budget."""

    def __init__(self, per_minute: float, sleeper: Callable[[float], None]) -> None:
        self.interval = 60.0 / per_minute if per_minute > 0 else 0.0
        self.sleeper = sleeper
        self._lock = threading.Lock()
        self._next_start = 0.0

    def acquire(self) -> None:
        if self.interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            start = max(now, self._next_start)
            self._next_start = start + self.interval
            wait = start - now
        if wait > 0:
            self.sleeper(wait)


@dataclass
class RunSummary:
    """What a collection run did: counts, failures, and timing."""

    run_id: str
    requests_planned: int
    records_written: int
    skipped_existing: int
    parse_failures: list[tuple[int, int, int]] = field(default_factory=list)
    tie_randomized_count: int = 0
    retries: int = 0
    elapsed_seconds: float = 0.0

    def to_dict(self) -> dict:
        return {
            "schema_version": 1,
            "run_id": self.run_id,
            "requests_planned": self.requests_planned,
            "records_written": self.records_written,
            "skipped_existing": self.skipped_existing,
            "parse_failures": [list(k) for k in self.parse_failures],
            "tie_randomized_count": self.tie_randomized_count,
            "retries": self.retries,
            "elapsed_seconds": self.elapsed_seconds,
        }


def _parse_choice(raw: str) -> str | None:
    text = raw.strip()
    if text == "1":
        return "first"
    if text == "2":
        return "second"
    return None


def _backoff_delay(transport_failures: int, base: float = 2.0, cap: float = 60.0) -> float:
    return min(cap, base * (2.0 ** max(0, transport_failures - 1)))


def run_comparisons(
    plan: RunPlan,
    sink: RecordLog,
    *,
    judge=None,
    concurrency: int = 4,
    sleeper: Callable[[float], None] = time.sleep,
    timeout: float = 60.0,
) -> RunSummary:
    """Collect every pair's judgments per the plan, appending to the sink.

    For each unordered pair and each entry in the plan's sequence, one
    request presents the pair in the indicated order; the judgment's
    trial_index counts earlier occurrences of the same orientation symbol.
    Replies must parse to a bare "1" or "2"; anything else is retried up to
    max_retries with fresh attempt numbers. When retries are exhausted,
    V3 assigns the choice by a seeded coin flip (tie_randomized=true);
    other variants record nothing for that judgment and the run continues,
    listing the failure in the summary. Transport errors back off
    exponentially (base 2 s, cap 60 s). AuthError aborts the run.

    Judgments already present in the sink are skipped, so rerunning a
    finished plan issues no requests.
    """
    if judge is None:
        judge = judge_for(plan.provider, timeout=timeout)
    limiter = _RateLimiter(plan.provider.rate_limit, sleeper)
    template = TEMPLATES[plan.variant]
    timestamp = _dt.datetime.now(_dt.timezone.utc).isoformat()

    seq_trials: list[tuple[str, int]] = []
    plus_seen = minus_seen = 0
    for orient in plan.sequence:
        if orient == "+":
            seq_trials.append((orient, plus_seen))
            plus_seen += 1
        else:
            seq_trials.append((orient, minus_seen))
            minus_seen += 1

    work: list[tuple[int, int, int]] = []
    skipped = 0
    n = plan.n
    for i in range(n):
        for j in range(i + 1, n):
            for orient, t in seq_trials:
                first, second = (i, j) if orient == "+" else (j, i)
                if sink.has(plan.run_id, first, second, t):
                    skipped += 1
                else:
                    work.append((first, second, t))

    summary = RunSummary(
        run_id=plan.run_id,
        requests_planned=plan.requests_total(),
        records_written=0,
        skipped_existing=skipped,
    )
    state_lock = threading.Lock()
    pending: dict[int, PreferenceRecord | None] = {}
    cursor = 0
    started = time.monotonic()

    def judge_one(idx: int, first: int, second: int, trial: int) -> None:
        nonlocal cursor
        system, user = render_prompt(template, plan.text_type, plan.texts[first], plan.texts[second])
        record: PreferenceRecord | None = None
        choice: str | None = None
        tie_randomized = False
        raw = ""
        parse_attempts = 0
        transport_failures = 0
        while True:
            limiter.acquire()
            meta = RequestMeta(first, second, trial, attempt=parse_attempts + transport_failures)
            try:
                raw = judge.complete(system, user, meta)
            except RateLimited:
                transport_failures += 1
                if transport_failures > plan.provider.max_retries:
                    raise
                with state_lock:
                    summary.retries += 1
                sleeper(_backoff_delay(transport_failures))
                continue
            except NetworkError:
                transport_failures += 1
                if transport_failures > plan.provider.max_retries:
                    raise
                with state_lock:
                    summary.retries += 1
                sleeper(_backoff_delay(transport_failures))
                continue
            choice = _parse_choice(raw)
            if choice is not None:
                break
            parse_attempts += 1
            if parse_attempts > plan.provider.max_retries:
                break
            with state_lock:
                summary.retries += 1
        if choice is None:
            if plan.variant == "V3":
                u = rng.uniform(rng.mix_key(plan.rng_seed, _TAG_TIE, first, second), trial)
                choice = "first" if u < 0.5 else "second"
                tie_randomized = True
            else:
                with state_lock:
                    summary.parse_failures.append((first, second, trial))
        if choice is not None:
            record = PreferenceRecord(
                run_id=plan.run_id,
                model_id=plan.provider.model_name,
                prompt_variant=plan.variant,
                first_index=first,
                second_index=second,
                trial_index=trial,
                parsed_choice=choice,
                tie_randomized=tie_randomized,
                raw_response=raw,
                temperature=plan.provider.temperature,
                timestamp=timestamp,
            )
        with state_lock:
            pending[idx] = record
            while cursor in pending:
                rec = pending.pop(cursor)
                cursor += 1
                if rec is not None and sink.append(rec):
                    summary.records_written += 1
                    if rec.tie_randomized:
                        summary.tie_randomized_count += 1

    if concurrency <= 1:
        for idx, (first, second, trial) in enumerate(work):
            judge_one(idx, first, second, trial)
    else:
        with ThreadPoolExecutor(max_workers=concurrency) as pool:
            futures = [
                pool.submit(judge_one, idx, first, second, trial)
                for idx, (first, second, trial) in enumerate(work)
            ]
            for fut in futures:
                fut.result()
    summary.elapsed_seconds = time.monotonic() - started
    return summary


_LETTERS = "abcdefghijklmnopqrstuvwxyz"


class _Stream:
    """Sequential uniform draws from one counter-RNG stream."""

    def __init__(self, key: int) -> None:
        self.key = key
        self.counter = 0

    def u(self) -> float:
        value = rng.uniform(self.key, self.counter)
        self.counter += 1
        return value

    def randint(self, lo: int, hi: int) -> int:
        """Uniform integer in [lo, hi]."""
        return lo + int(self.u() * (hi - lo + 1))

    def pick(self, seq: Sequence[str]) -> str:
        return seq[self.randint(0, len(seq) - 1)]


def _pseudo_token(stream: _Stream, lexicon_lower: frozenset[str] | None) -> str:
    while True:
        length = stream.randint(2, 8)
        token = "".join(stream.pick(_LETTERS) for _ in range(length))
        if lexicon_lower is None or len(token) <= 3 or token not in lexicon_lower:
            return token


def _assemble_sentences(words: list[str], stream: _Stream) -> str:
    """Group words into sentence-like units with punctuation attached.

    Keeps exactly one whitespace-delimited token per word: commas and
    terminators glue onto the preceding word.
    """
    out: list[str] = []
    remaining = len(words)
    pos = 0
    while remaining > 0:
        length = min(remaining, stream.randint(6, 16))
        sentence = words[pos : pos + length]
        pos += length
        remaining -= length
        sentence[0] = sentence[0].capitalize()
        for k in range(len(sentence) - 1):
            if stream.u() < 0.12:
                sentence[k] += ","
        roll = stream.u()
        if roll < 0.85:
            terminator = "."
        elif roll < 0.93:
            terminator = "?"
        else:
            terminator = ";"
        sentence[-1] += terminator
        out.extend(sentence)
    return " ".join(out)


def generate_pseudo_corpus(
    kind: str,
    n_texts: int,
    words_per_text: int = 100,
    wordlist: Sequence[str] | None = None,
    rng_seed: int = 0,
) -> list[str]:
    """Generate meaningless texts: gibberish tokens or shuffled real words.

    pseudo_word texts draw from a small per-text pool of random letter
    strings (tokens longer than 3 letters avoid the wordlist when one is
    given), so tokens repeat within a text the way words repeat in prose.
    pseudo_paragraph texts draw uniformly from the wordlist, which is
    required for that kind. Both are grouped into capitalized, punctuated
    sentence-like units and contain exactly words_per_text
    whitespace-delimited tokens. Deterministic in rng_seed.
    """
    if kind not in ("pseudo_word", "pseudo_paragraph"):
        raise ValueError(f"kind must be 'pseudo_word' or 'pseudo_paragraph', got {kind!r}")
    if n_texts < 1 or words_per_text < 1:
        raise ValueError("n_texts and words_per_text must be positive")
    lexicon = None
    if wordlist is not None:
        lexicon = [w.strip().lower() for w in wordlist if w.strip()]
        if not lexicon:
            raise MissingLexicon("wordlist is empty")
    if kind == "pseudo_paragraph" and lexicon is None:
        raise MissingLexicon("pseudo_paragraph requires a wordlist")
    lexicon_set = frozenset(lexicon) if lexicon is not None else None

    texts: list[str] = []
    for text_index in range(n_texts):
        stream = _Stream(rng.mix_key(rng_seed, _TAG_CORPUS, kind == "pseudo_paragraph", text_index))
        if kind == "pseudo_word":
            pool_size = max(8, words_per_text * 2 // 5)
            pool = [_pseudo_token(stream, lexicon_set) for _ in range(pool_size)]
            words = [stream.pick(pool) for _ in range(words_per_text)]
        else:
            words = [stream.pick(lexicon) for _ in range(words_per_text)]
        texts.append(_assemble_sentences(words, stream))
    return texts
