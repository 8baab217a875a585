import json

import pytest

from pairerr import harness, prefcore, rng
from pairerr.errors import AuthError, EmptyText, MissingLexicon, NetworkError, RateLimited
from pairerr.harness import (
    DEFAULT_SEQUENCE,
    TEMPLATES,
    HttpJudge,
    MockJudge,
    ProviderConfig,
    RecordLog,
    RequestMeta,
    RunPlan,
    generate_pseudo_corpus,
    judge_for,
    load_plan,
    render_prompt,
    run_comparisons,
)


def provider(endpoint="mock:eps=0.0", **kw):
    return ProviderConfig(provider_id="mock", endpoint=endpoint, model_name="mock-model", **kw)


def plan_for(n=4, endpoint="mock:eps=0.0", sequence=("+", "-"), variant="baseline", seed=0, **kw):
    return RunPlan(
        run_id="run-1",
        texts=tuple(f"sample text number {i}" for i in range(n)),
        text_type="short poems",
        sequence=tuple(sequence),
        variant=variant,
        provider=provider(endpoint, **kw),
        rng_seed=seed,
    )


# --- prompts ---------------------------------------------------------------


def test_baseline_prompt_verbatim():
    system, user = render_prompt(TEMPLATES["baseline"], "short poems", "AAA", "BBB")
    assert system == (
        "You are a senior short poems evaluation expert with rich experience in "
        "literary appreciation and judgment. Please conduct comprehensive text "
        "evaluations based on quality, creativity, expression effectiveness, and "
        "other dimensions. Only respond with 1 or 2; no explanation needed."
    )
    assert user == (
        "Compare the following two short poems and indicate which one is better. "
        "Output only the number: 1 if Text 1 is better, 2 if Text 2 is better. "
        "Text 1: AAA. Text 2: BBB."
    )


def test_v1_prompt_hides_text_type():
    system, user = render_prompt(TEMPLATES["V1"], "advertising slogans", "AAA", "BBB")
    assert "advertising" not in user
    assert "advertising" not in system
    assert "senior text evaluation expert" in system
    assert user.startswith("Compare the following two texts and indicate the better one.")


def test_v2_prompt_chinese():
    _system, user = render_prompt(TEMPLATES["V2"], "short poems", "AAA", "BBB")
    assert user.startswith("比较以下两篇文本材料/广告语/短诗/文献摘要，指出哪一篇更优。")
    assert "文本1: AAA. 文本2: BBB." in user


def test_v3_prompt_has_no_system():
    system, user = render_prompt(TEMPLATES["V3"], "short poems", "AAA", "BBB")
    assert system is None
    assert "short poems" in user


def test_render_prompt_rejects_blank():
    with pytest.raises(EmptyText):
        render_prompt(TEMPLATES["baseline"], "poems", "  ", "BBB")
    with pytest.raises(EmptyText):
        render_prompt(TEMPLATES["baseline"], "poems", "AAA", "")


def test_text_order_follows_presentation():
    _system, user = render_prompt(TEMPLATES["baseline"], "poems", "FIRST", "SECOND")
    assert user.index("FIRST") < user.index("SECOND")


# --- plan ------------------------------------------------------------------


def test_run_plan_validation():
    with pytest.raises(ValueError):
        plan_for(n=1)
    with pytest.raises(ValueError):
        plan_for(sequence=())
    with pytest.raises(ValueError):
        plan_for(sequence=("+", "x"))
    with pytest.raises(ValueError):
        plan_for(variant="V9")


def test_requests_total():
    assert plan_for(n=5, sequence=DEFAULT_SEQUENCE).requests_total() == 10 * 6


def test_load_plan_inline_and_file(tmp_path):
    texts = ["alpha text", "beta text", "gamma text"]
    inline = tmp_path / "plan.json"
    inline.write_text(
        json.dumps(
            {
                "run_id": "r1",
                "texts": texts,
                "text_type": "slogans",
                "sequence": ["+", "-"],
                "variant": "V1",
                "provider": {
                    "provider_id": "mock",
                    "endpoint": "mock:eps=0.1",
                    "model_name": "m",
                },
                "rng_seed": 7,
            }
        )
    )
    plan = load_plan(inline)
    assert plan.texts == tuple(texts)
    assert plan.variant == "V1"
    assert plan.rng_seed == 7

    corpus = tmp_path / "texts.txt"
    corpus.write_text("\n".join(texts) + "\n")
    by_file = tmp_path / "plan2.json"
    by_file.write_text(
        json.dumps(
            {
                "run_id": "r2",
                "texts_file": "texts.txt",
                "provider": {
                    "provider_id": "mock",
                    "endpoint": "mock:eps=0",
                    "model_name": "m",
                },
            }
        )
    )
    plan2 = load_plan(by_file)
    assert plan2.texts == tuple(texts)
    assert plan2.sequence == DEFAULT_SEQUENCE


def test_provider_env_key():
    cfg = ProviderConfig(provider_id="some-provider", endpoint="http://x", model_name="m")
    assert cfg.env_key() == "PAIRERR_API_KEY_SOME_PROVIDER"


# --- mock judge ------------------------------------------------------------


def test_mock_judge_error_free():
    judge = MockJudge("mock:eps=0.0")
    assert judge.complete(None, "u", RequestMeta(0, 1, 0)) == "1"
    assert judge.complete(None, "u", RequestMeta(1, 0, 0)) == "2"


def test_mock_judge_deterministic():
    a = MockJudge("mock:eps=0.3&seed=5")
    b = MockJudge("mock:eps=0.3&seed=5")
    replies_a = [a.complete(None, "u", RequestMeta(0, 1, t)) for t in range(20)]
    replies_b = [b.complete(None, "u", RequestMeta(0, 1, t)) for t in range(20)]
    assert replies_a == replies_b
    assert set(replies_a) == {"1", "2"}


def test_mock_judge_positional_rates():
    judge = MockJudge("mock:eps_plus=0.5&eps_minus=0.0&seed=1")
    wrong = sum(
        judge.complete(None, "u", RequestMeta(i, j, t)) == "2"
        for i in range(20)
        for j in range(i + 1, 40)
        for t in range(1)
    )
    total = sum(1 for i in range(20) for j in range(i + 1, 40))
    assert 0.4 < wrong / total < 0.6
    # reversed presentation is error-free
    assert all(
        judge.complete(None, "u", RequestMeta(j, i, 0)) == "2"
        for i in range(5)
        for j in range(i + 1, 10)
    )


def test_mock_judge_garbage_then_retry_differs():
    judge = MockJudge("mock:eps=0.0&garbage_rate=1.0")
    first = judge.complete(None, "u", RequestMeta(0, 1, 0, attempt=0))
    assert first not in ("1", "2")


def test_judge_for_mock_needs_no_key():
    assert isinstance(judge_for(provider()), MockJudge)


def test_judge_for_http_requires_key(monkeypatch):
    cfg = ProviderConfig(provider_id="real", endpoint="https://api.example/v1", model_name="m")
    monkeypatch.delenv("PAIRERR_API_KEY_REAL", raising=False)
    with pytest.raises(AuthError):
        judge_for(cfg)
    monkeypatch.setenv("PAIRERR_API_KEY_REAL", "k")
    assert isinstance(judge_for(cfg), HttpJudge)


# --- http judge with a stubbed session --------------------------------------


class FakeResponse:
    def __init__(self, status_code=200, payload=None, text=""):
        self.status_code = status_code
        self._payload = payload
        self.text = text

    def json(self):
        if self._payload is None:
            raise ValueError("no json")
        return self._payload


class FakeSession:
    def __init__(self, response):
        self.response = response
        self.calls = []

    def post(self, url, json=None, headers=None, timeout=None):
        self.calls.append({"url": url, "json": json, "headers": headers})
        return self.response


def http_judge(response):
    judge = HttpJudge(provider(endpoint="https://api.example/v1/chat"), api_key="secret")
    judge.session = FakeSession(response)
    return judge


def test_http_judge_happy_path():
    payload = {"choices": [{"message": {"content": "1"}}]}
    judge = http_judge(FakeResponse(payload=payload))
    assert judge.complete("sys", "user", RequestMeta(0, 1, 0)) == "1"
    call = judge.session.calls[0]
    assert call["headers"]["Authorization"] == "Bearer secret"
    assert call["json"]["temperature"] == 0.1
    assert [m["role"] for m in call["json"]["messages"]] == ["system", "user"]


def test_http_judge_no_system_message():
    payload = {"choices": [{"message": {"content": "2"}}]}
    judge = http_judge(FakeResponse(payload=payload))
    judge.complete(None, "user", RequestMeta(0, 1, 0))
    assert [m["role"] for m in judge.session.calls[0]["json"]["messages"]] == ["user"]


def test_http_judge_error_mapping():
    for code, exc in [(401, AuthError), (403, AuthError), (429, RateLimited), (500, NetworkError)]:
        judge = http_judge(FakeResponse(status_code=code))
        with pytest.raises(exc):
            judge.complete(None, "u", RequestMeta(0, 1, 0))


def test_http_judge_malformed_body():
    judge = http_judge(FakeResponse(payload={"choices": []}))
    with pytest.raises(NetworkError):
        judge.complete(None, "u", RequestMeta(0, 1, 0))


# --- record log and resume ---------------------------------------------------


def test_run_comparisons_writes_complete_log(tmp_path):
    plan = plan_for(n=4, sequence=("+", "-"))
    log_path = tmp_path / "log.ndjson"
    with RecordLog(log_path) as sink:
        summary = run_comparisons(plan, sink, concurrency=2)
    assert summary.records_written == 12
    assert summary.skipped_existing == 0
    records = prefcore.read_records(log_path)
    assert len(records) == 12
    y = prefcore.build_y(records, 4, trial_filter=0)
    z = prefcore.build_z(y)
    assert (z.entries[0, 1:] == 1).all()


def test_trial_index_counts_within_orientation(tmp_path):
    plan = plan_for(n=3, sequence=("+", "-", "+", "-"))
    with RecordLog(tmp_path / "log.ndjson") as sink:
        run_comparisons(plan, sink, concurrency=1)
        trials = {
            (r.first_index, r.second_index): sorted(
                rec.trial_index
                for rec in sink.records
                if (rec.first_index, rec.second_index) == (r.first_index, r.second_index)
            )
            for r in sink.records
        }
    for (_first, _second), ts in trials.items():
        assert ts == [0, 1]


def test_resume_skips_existing(tmp_path):
    plan = plan_for(n=4)
    log_path = tmp_path / "log.ndjson"
    with RecordLog(log_path) as sink:
        run_comparisons(plan, sink, concurrency=1)
        first_bytes = log_path.read_bytes()
    with RecordLog(log_path) as sink:
        summary = run_comparisons(plan, sink, concurrency=1)
    assert summary.records_written == 0
    assert summary.skipped_existing == 12
    assert log_path.read_bytes() == first_bytes


def test_log_bytes_independent_of_concurrency(tmp_path):
    plan = plan_for(n=5, endpoint="mock:eps=0.2&seed=9", sequence=("+", "-", "+"))

    def collect(concurrency):
        path = tmp_path / f"log{concurrency}.ndjson"
        with RecordLog(path) as sink:
            run_comparisons(plan, sink, concurrency=concurrency)
        lines = path.read_text().splitlines()
        # the timestamp is per-run wall clock; normalize it away
        return [json.dumps({**json.loads(l), "timestamp": ""}) for l in lines]

    assert collect(1) == collect(4)


def test_v3_falls_back_to_coin_flip(tmp_path):
    plan = plan_for(
        n=3,
        endpoint="mock:eps=0.0&garbage_rate=1.0",
        variant="V3",
        max_retries=2,
    )
    with RecordLog(tmp_path / "log.ndjson") as sink:
        summary = run_comparisons(plan, sink, concurrency=1)
    assert summary.records_written == 6
    assert summary.tie_randomized_count == 6
    assert all(rec.tie_randomized for rec in sink.records)
    # the flips replay from the run seed
    for rec in sink.records:
        u = rng.uniform(rng.mix_key(0, 0x54, rec.first_index, rec.second_index), rec.trial_index)
        assert rec.parsed_choice == ("first" if u < 0.5 else "second")


def test_baseline_reports_parse_failures(tmp_path):
    plan = plan_for(n=3, endpoint="mock:eps=0.0&garbage_rate=1.0", max_retries=1)
    with RecordLog(tmp_path / "log.ndjson") as sink:
        summary = run_comparisons(plan, sink, concurrency=1)
    assert summary.records_written == 0
    assert len(summary.parse_failures) == 6
    assert summary.retries == 6


def test_garbage_retry_recovers(tmp_path):
    # garbage_rate=0.5: some first attempts garble, retries eventually parse
    plan = plan_for(n=4, endpoint="mock:eps=0.0&garbage_rate=0.5&seed=7", max_retries=3)
    with RecordLog(tmp_path / "log.ndjson") as sink:
        summary = run_comparisons(plan, sink, concurrency=1)
    assert summary.records_written == 12
    assert summary.retries > 0


def test_summary_to_dict_schema(tmp_path):
    plan = plan_for(n=3)
    with RecordLog(tmp_path / "log.ndjson") as sink:
        summary = run_comparisons(plan, sink, concurrency=1)
    payload = summary.to_dict()
    assert payload["schema_version"] == 1
    assert payload["records_written"] == 6
    assert payload["run_id"] == "run-1"


# --- rate limiter and backoff ------------------------------------------------


def test_rate_limiter_spaces_requests():
    sleeps = []
    limiter = harness._RateLimiter(60.0, sleeps.append)
    for _ in range(3):
        limiter.acquire()
    # first request free, the next two wait out the 1 s spacing
    assert len(sleeps) == 2
    assert sleeps[0] == pytest.approx(1.0, abs=0.05)
    assert sleeps[1] == pytest.approx(2.0, abs=0.05)


def test_rate_limiter_disabled_at_zero():
    sleeps = []
    limiter = harness._RateLimiter(0.0, sleeps.append)
    for _ in range(5):
        limiter.acquire()
    assert sleeps == []


def test_backoff_doubles_and_caps():
    assert harness._backoff_delay(1) == 2.0
    assert harness._backoff_delay(2) == 4.0
    assert harness._backoff_delay(3) == 8.0
    assert harness._backoff_delay(10) == 60.0


class FlakyJudge:
    """Fails transport n times, then delegates to the mock."""

    def __init__(self, failures):
        self.failures = failures
        self.inner = MockJudge("mock:eps=0.0")

    def complete(self, system, user, meta):
        if self.failures > 0:
            self.failures -= 1
            raise NetworkError("transient")
        return self.inner.complete(system, user, meta)


def test_transport_retry_with_backoff(tmp_path):
    sleeps = []
    plan = plan_for(n=2, max_retries=3)
    with RecordLog(tmp_path / "log.ndjson") as sink:
        summary = run_comparisons(
            plan, sink, judge=FlakyJudge(2), concurrency=1, sleeper=sleeps.append
        )
    assert summary.records_written == 2
    assert sleeps == [2.0, 4.0]


def test_transport_retries_exhausted(tmp_path):
    plan = plan_for(n=2, max_retries=1)
    with RecordLog(tmp_path / "log.ndjson") as sink:
        with pytest.raises(NetworkError):
            run_comparisons(plan, sink, judge=FlakyJudge(99), concurrency=1, sleeper=lambda s: None)


# --- pseudo corpus -----------------------------------------------------------


def test_pseudo_word_corpus_shape():
    texts = generate_pseudo_corpus("pseudo_word", 5, words_per_text=60, rng_seed=1)
    assert len(texts) == 5
    for text in texts:
        assert len(text.split()) == 60
        assert text[0].isupper()
        assert text.rstrip()[-1] in ".?;"


def test_pseudo_word_tokens_repeat():
    text = generate_pseudo_corpus("pseudo_word", 1, words_per_text=100, rng_seed=2)[0]
    tokens = [t.strip(".,?;").lower() for t in text.split()]
    assert len(set(tokens)) < len(tokens)


def test_pseudo_word_avoids_lexicon():
    wordlist = ["poem", "verse", "stanza", "meter", "rhyme"]
    texts = generate_pseudo_corpus("pseudo_word", 3, wordlist=wordlist, rng_seed=3)
    for text in texts:
        tokens = {t.strip(".,?;").lower() for t in text.split()}
        assert not (tokens & set(wordlist))


def test_pseudo_paragraph_uses_wordlist():
    wordlist = ["alpha", "beta", "gamma", "delta"]
    texts = generate_pseudo_corpus("pseudo_paragraph", 4, words_per_text=50, wordlist=wordlist, rng_seed=4)
    for text in texts:
        tokens = {t.strip(".,?;").lower() for t in text.split()}
        assert tokens <= set(wordlist)


def test_pseudo_paragraph_requires_wordlist():
    with pytest.raises(MissingLexicon):
        generate_pseudo_corpus("pseudo_paragraph", 2)
    with pytest.raises(MissingLexicon):
        generate_pseudo_corpus("pseudo_paragraph", 2, wordlist=["  "])


def test_pseudo_corpus_deterministic():
    a = generate_pseudo_corpus("pseudo_word", 3, rng_seed=9)
    b = generate_pseudo_corpus("pseudo_word", 3, rng_seed=9)
    c = generate_pseudo_corpus("pseudo_word", 3, rng_seed=10)
    assert a == b
    assert a != c


def test_pseudo_corpus_rejects_bad_kind():
    with pytest.raises(ValueError):
        generate_pseudo_corpus("prose", 2)
