"""Model backends: HTTP chat endpoints plus deterministic synthetic stand-ins.

Every backend implements ``complete(CompletionRequest) -> CompletionResponse``.
The synthetic backends (scripted playback, answer oracles, seeded random-valid
responders) let the whole evaluation pipeline run, and be tested, without any
network access; the HTTP backend speaks the chat-completions JSON shape with
an injectable transport so its plumbing is testable offline too.
"""

from __future__ import annotations

import hashlib
import json
import os
import time
import uuid
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Mapping, Protocol

import requests

from .distribution import TokenDistribution
from .funcspace import DEFAULT_CONVENTION, FunctionSpace, IndexConvention
from .mining import (
    SequenceRecord,
    continuations_of,
    format_int,
    matching_generators,
    valid_continuations,
    valid_explanations,
)
from .prompting import (
    MAX_VERBALIZED_ALTERNATIVES,
    RenderedPrompt,
    Task,
    VERBALIZE_SEPARATOR,
)
from .funcspace import parse as parse_function

#: Answer text produced by synthetic backends when no valid answer exists.
NO_VALID_ANSWER = "no valid answer"


class BackendError(Exception):
    """Base class for backend failures."""


class AuthenticationError(BackendError):
    """Credentials missing or rejected; retrying will not help."""


class TransportError(BackendError):
    """The endpoint stayed unreachable after retries."""


class MalformedResponseError(BackendError):
    """The endpoint answered with JSON we cannot interpret."""


class LogprobsUnsupportedError(BackendError):
    """Top logprobs were requested but the backend cannot supply them."""


@dataclass(frozen=True)
class CompletionRequest:
    prompt: RenderedPrompt
    temperature: float = 0.0
    max_tokens: int = 64
    want_top_logprobs: int = 0

    def __post_init__(self) -> None:
        if not 0 <= self.want_top_logprobs <= 5:
            raise ValueError(
                f"want_top_logprobs must be 0..5, got {self.want_top_logprobs}"
            )
        if self.max_tokens < 1:
            raise ValueError(f"max_tokens must be >= 1, got {self.max_tokens}")


@dataclass(frozen=True)
class CompletionResponse:
    text: str
    backend_id: str
    first_token_top_logprobs: TokenDistribution | None = None
    cached: bool = False


class Backend(Protocol):
    backend_id: str

    def complete(self, request: CompletionRequest) -> CompletionResponse: ...


def request_digest(request: CompletionRequest, backend_id: str) -> str:
    """Stable content hash of everything that determines a response."""
    payload = {
        "backend": backend_id,
        "prompt": request.prompt.full_text(),
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
        "want_top_logprobs": request.want_top_logprobs,
    }
    blob = json.dumps(payload, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode("utf-8")).hexdigest()


# ---------------------------------------------------------------------------
# Scripted playback
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ScriptedResponse:
    text: str
    top_logprobs: tuple[tuple[str, float], ...] | None = None


class ScriptedBackend:
    """Plays back canned responses, keyed by test query or full prompt text.

    Lookup order: exact full text, exact test query, first fixture whose key
    is a substring of the full text, then the default. Useful for replaying
    recorded transcripts and for failure-mode fixtures in tests.
    """

    def __init__(
        self,
        fixtures: Mapping[str, str | ScriptedResponse],
        default: str | ScriptedResponse | None = None,
        backend_id: str = "scripted",
    ):
        self.fixtures = dict(fixtures)
        self.default = default
        self.backend_id = backend_id

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        full = request.prompt.full_text()
        fixture = self.fixtures.get(full)
        if fixture is None:
            fixture = self.fixtures.get(request.prompt.test_query)
        if fixture is None:
            for key, value in self.fixtures.items():
                if key in full:
                    fixture = value
                    break
        if fixture is None:
            fixture = self.default
        if fixture is None:
            raise BackendError(
                f"no fixture for prompt starting {request.prompt.test_query[:60]!r}"
            )
        if isinstance(fixture, str):
            fixture = ScriptedResponse(fixture)
        dist = None
        if fixture.top_logprobs is not None:
            dist = TokenDistribution.from_pairs(fixture.top_logprobs)
        elif request.want_top_logprobs:
            raise LogprobsUnsupportedError(
                "fixture has no top_logprobs but the request wants them"
            )
        return CompletionResponse(fixture.text, self.backend_id, dist)


# ---------------------------------------------------------------------------
# Oracle answers
# ---------------------------------------------------------------------------

def _ranked_generators(
    sequence: SequenceRecord,
    space: FunctionSpace,
    convention: IndexConvention,
    tie_break: str,
):
    gens = matching_generators(sequence.values, space, convention)
    if not gens:
        return ()
    if tie_break == "min_value":
        return tuple(sorted(gens, key=lambda g: (g.continuation, g.sort_key())))
    if tie_break == "enumeration_order":
        return gens  # already in enumeration order
    raise ValueError(f"unknown tie_break: {tie_break!r}")


def oracle_answer(
    sequence: SequenceRecord,
    task: Task,
    space: FunctionSpace,
    convention: IndexConvention = DEFAULT_CONVENTION,
    tie_break: str = "min_value",
) -> str:
    """The deterministic correct answer for a task, if one exists.

    ``tie_break`` picks among generators of an ambiguous sequence:
    ``min_value`` prefers the smallest continuation value,
    ``enumeration_order`` the first generator in template order.
    """
    gens = _ranked_generators(sequence, space, convention, tie_break)
    if not gens:
        return NO_VALID_ANSWER
    chosen = gens[0]
    if task is Task.COMPLETION:
        return format_int(chosen.continuation, sequence.base)
    if task is Task.EXPLANATION:
        from .funcspace import render_function

        return f"Explanation: {render_function(chosen.function, sequence.base)}"
    if task is Task.VERBALIZE_ALTERNATIVES:
        conts = sorted(valid_continuations(sequence.values, space, convention))
        conts = conts[:MAX_VERBALIZED_ALTERNATIVES]
        body = VERBALIZE_SEPARATOR.join(format_int(v, sequence.base) for v in conts)
        return body + " \\n"
    raise ValueError(f"oracle_answer does not cover task {task!r}")


class OracleBackend:
    """Answers every prompt from the function space itself.

    ``consistent`` mode commits to one generator per sequence (chosen by
    ``tie_break``) and answers completion and explanation prompts from that
    same generator, so its cross-context consistency is 100% by construction.
    ``adversarial`` mode answers the two tasks from deliberately mismatched
    generators whenever the sequence is ambiguous, driving consistency to 0%
    on ambiguous data. Judgment prompts are always answered truthfully, and
    synthetic top-logprob lists mirror the same behavior.
    """

    def __init__(
        self,
        space: FunctionSpace,
        convention: IndexConvention = DEFAULT_CONVENTION,
        mode: str = "consistent",
        tie_break: str = "min_value",
        backend_id: str | None = None,
    ):
        if mode not in ("consistent", "adversarial"):
            raise ValueError(f"unknown oracle mode: {mode!r}")
        self.space = space
        self.convention = convention
        self.mode = mode
        self.tie_break = tie_break
        self.backend_id = backend_id or f"oracle-{mode}"

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        prompt = request.prompt
        seq = prompt.target
        if prompt.task is Task.CONSISTENCY_JUDGMENT:
            text = self._judge(prompt)
        elif self.mode == "adversarial" and prompt.task in (
            Task.COMPLETION,
            Task.EXPLANATION,
        ):
            text = self._adversarial_answer(seq, prompt.task)
        else:
            text = oracle_answer(
                seq, prompt.task, self.space, self.convention, self.tie_break
            )
        dist = None
        if request.want_top_logprobs:
            dist = self._synthetic_logprobs(seq, request.want_top_logprobs)
        return CompletionResponse(text, self.backend_id, dist)

    def _judge(self, prompt: RenderedPrompt) -> str:
        if prompt.judged_explanation is None or prompt.judged_completion is None:
            return NO_VALID_ANSWER
        try:
            fn = parse_function(prompt.judged_explanation)
        except Exception:
            return "inconsistent"
        conts = continuations_of(fn, prompt.target.values, self.convention)
        return "consistent" if prompt.judged_completion in conts else "inconsistent"

    def _adversarial_pair(self, seq: SequenceRecord):
        """(explanation generator, completion value) that disagree.

        Prefers a completion that is itself valid (produced by some other
        generator); when every generating function covers every continuation
        (a self-ambiguous sequence), falls back to an out-of-set value so the
        pair still fails an execution-based consistency check.
        """
        gens = _ranked_generators(seq, self.space, self.convention, self.tie_break)
        if not gens:
            return None, None
        explainer = gens[0]
        own = continuations_of(explainer.function, seq.values, self.convention)
        for g in gens[1:]:
            if g.continuation not in own:
                return explainer, g.continuation
        return explainer, max(g.continuation for g in gens) + 1

    def _adversarial_answer(self, seq: SequenceRecord, task: Task) -> str:
        explainer, completion = self._adversarial_pair(seq)
        if explainer is None:
            return NO_VALID_ANSWER
        if task is Task.EXPLANATION:
            from .funcspace import render_function

            return f"Explanation: {render_function(explainer.function, seq.base)}"
        return format_int(completion, seq.base)

    def _synthetic_logprobs(self, seq: SequenceRecord, k: int) -> TokenDistribution:
        conts = sorted(valid_continuations(seq.values, self.space, self.convention))
        ordered: list[int] = []
        if self.mode == "consistent" and conts:
            # the token the oracle would actually answer ranks first
            gens = _ranked_generators(seq, self.space, self.convention, self.tie_break)
            ordered.append(gens[0].continuation)
        ordered.extend(v for v in conts if v not in ordered)
        pairs: list[tuple[str, float]] = []
        if self.mode == "adversarial":
            wrong = (max(conts) if conts else 0) + 1
            pairs.append((format_int(wrong, seq.base), -0.05))
        pairs.extend(
            (format_int(v, seq.base), -0.1 * (i + 1) - 0.1)
            for i, v in enumerate(ordered)
        )
        if not pairs:
            pairs = [(NO_VALID_ANSWER, -0.1)]
        return TokenDistribution.from_pairs(pairs[:k])


# ---------------------------------------------------------------------------
# Seeded random-valid answers
# ---------------------------------------------------------------------------

def _derive_seed(*parts: object) -> int:
    blob = json.dumps([str(p) for p in parts], separators=(",", ":"))
    return int.from_bytes(hashlib.sha256(blob.encode()).digest()[:8], "big")


def random_valid_answer(
    sequence: SequenceRecord,
    task: Task,
    space: FunctionSpace,
    convention: IndexConvention = DEFAULT_CONVENTION,
    rng_seed: int = 0,
) -> str:
    """A uniformly random valid answer; the same seed always returns the same one."""
    import random as _random

    rng = _random.Random(_derive_seed("random_valid", rng_seed, task.value,
                                      sequence.values, sequence.base))
    if task is Task.COMPLETION:
        options = sorted(valid_continuations(sequence.values, space, convention))
        if not options:
            return NO_VALID_ANSWER
        return format_int(rng.choice(options), sequence.base)
    if task is Task.EXPLANATION:
        from .funcspace import render_function

        fns = valid_explanations(sequence.values, space, convention)
        if not fns:
            return NO_VALID_ANSWER
        return f"Explanation: {render_function(rng.choice(list(fns)), sequence.base)}"
    raise ValueError(f"random_valid_answer does not cover task {task!r}")


class RandomValidBackend:
    """Uniform over the valid answer set, independently per request.

    Seeding is derived from (backend seed, task, target, prompt seed), so a
    given prompt always gets the same answer while different few-shot seeds
    (different runs) re-roll the choice.
    """

    def __init__(
        self,
        space: FunctionSpace,
        convention: IndexConvention = DEFAULT_CONVENTION,
        seed: int = 0,
        backend_id: str = "random-valid",
    ):
        self.space = space
        self.convention = convention
        self.seed = seed
        self.backend_id = backend_id

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        prompt = request.prompt
        if prompt.task not in (Task.COMPLETION, Task.EXPLANATION):
            raise BackendError(
                f"random-valid backend does not answer {prompt.task.value} prompts"
            )
        per_request = _derive_seed(self.seed, prompt.rng_seed)
        text = random_valid_answer(
            prompt.target, prompt.task, self.space, self.convention, per_request
        )
        return CompletionResponse(text, self.backend_id)


# ---------------------------------------------------------------------------
# HTTP chat endpoint
# ---------------------------------------------------------------------------

def build_chat_payload(request: CompletionRequest, model: str) -> dict:
    payload: dict = {
        "model": model,
        "messages": [
            {"role": "system", "content": request.prompt.system},
            {"role": "user", "content": request.prompt.user_text()},
        ],
        "temperature": request.temperature,
        "max_tokens": request.max_tokens,
    }
    if request.want_top_logprobs:
        payload["logprobs"] = True
        payload["top_logprobs"] = request.want_top_logprobs
    return payload


def parse_chat_response(data: dict, want_top_logprobs: int) -> tuple[str, TokenDistribution | None]:
    try:
        choice = data["choices"][0]
        text = choice["message"]["content"]
    except (KeyError, IndexError, TypeError) as err:
        raise MalformedResponseError(f"unexpected response shape: {err}") from err
    if text is None:
        raise MalformedResponseError("response content is null")
    if not want_top_logprobs:
        return text, None
    try:
        raw = choice["logprobs"]["content"][0]["top_logprobs"]
    except (KeyError, IndexError, TypeError):
        raise LogprobsUnsupportedError(
            "top logprobs were requested but the response carries none"
        )
    pairs: list[tuple[str, float]] = []
    seen: set[str] = set()
    for item in raw:
        token, lp = item["token"], float(item["logprob"])
        if token in seen:
            continue  # some endpoints repeat tokens; keep the first (highest)
        seen.add(token)
        pairs.append((token, min(lp, 0.0)))
    pairs.sort(key=lambda p: -p[1])
    if not pairs:
        raise LogprobsUnsupportedError("empty top_logprobs list")
    return text, TokenDistribution.from_pairs(pairs[:want_top_logprobs])


class HttpBackend:
    """Chat-completions endpoint client with retry and injectable transport.

    ``transport`` takes (url, headers, payload, timeout) and returns
    (status_code, parsed_json); the default posts with ``requests``. Retries
    connection failures, 429 and 5xx with exponential backoff; fails fast on
    authentication errors.
    """

    def __init__(
        self,
        base_url: str,
        model: str,
        api_key_env: str = "AMBIGSEQ_API_KEY",
        timeout: float = 60.0,
        max_retries: int = 3,
        backoff_base: float = 1.0,
        transport: Callable[..., tuple[int, dict]] | None = None,
        sleep: Callable[[float], None] = time.sleep,
    ):
        self.base_url = base_url.rstrip("/")
        self.model = model
        self.api_key_env = api_key_env
        self.timeout = timeout
        self.max_retries = max_retries
        self.backoff_base = backoff_base
        self.transport = transport or self._post
        self.sleep = sleep
        self.backend_id = f"http:{model}"

    def _post(self, url: str, headers: dict, payload: dict, timeout: float):
        resp = requests.post(url, headers=headers, json=payload, timeout=timeout)
        try:
            body = resp.json()
        except ValueError:
            body = {}
        return resp.status_code, body

    def _headers(self) -> dict:
        key = os.environ.get(self.api_key_env)
        if not key:
            raise AuthenticationError(
                f"API key environment variable {self.api_key_env} is not set"
            )
        return {"Authorization": f"Bearer {key}", "Content-Type": "application/json"}

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        url = f"{self.base_url}/chat/completions"
        headers = self._headers()
        payload = build_chat_payload(request, self.model)
        last_error: Exception | None = None
        for attempt in range(self.max_retries + 1):
            if attempt:
                self.sleep(self.backoff_base * 2 ** (attempt - 1))
            try:
                status, body = self.transport(url, headers, payload, self.timeout)
            except requests.RequestException as err:
                last_error = err
                continue
            if status in (401, 403):
                raise AuthenticationError(f"endpoint rejected credentials ({status})")
            if status == 429 or status >= 500:
                last_error = TransportError(f"status {status}: {body}")
                continue
            if status != 200:
                raise BackendError(f"unexpected status {status}: {body}")
            text, dist = parse_chat_response(body, request.want_top_logprobs)
            return CompletionResponse(text, self.backend_id, dist)
        raise TransportError(
            f"gave up after {self.max_retries + 1} attempts: {last_error}"
        )


# ---------------------------------------------------------------------------
# On-disk response cache
# ---------------------------------------------------------------------------

class CachingBackend:
    """Wraps another backend with a content-addressed response cache.

    Cache keys hash the full prompt text and decoding parameters. Writes go
    through a temp file and an atomic rename, so concurrent workers can share
    a cache directory; a hit is returned with ``cached=True`` but is otherwise
    indistinguishable from a fresh response.
    """

    def __init__(self, inner: Backend, cache_dir: str | Path):
        self.inner = inner
        self.cache_dir = Path(cache_dir)
        self.cache_dir.mkdir(parents=True, exist_ok=True)
        self.backend_id = inner.backend_id

    def _path(self, digest: str) -> Path:
        return self.cache_dir / f"{digest}.json"

    def complete(self, request: CompletionRequest) -> CompletionResponse:
        digest = request_digest(request, self.inner.backend_id)
        path = self._path(digest)
        if path.exists():
            try:
                stored = json.loads(path.read_text())
                return _response_from_json(stored, cached=True)
            except (ValueError, KeyError):
                pass  # corrupt entry: fall through and refresh it
        response = self.inner.complete(request)
        blob = json.dumps(_response_to_json(response), sort_keys=True)
        # unique tmp name per writer so concurrent completions of the same
        # request don't clobber each other's half-written entry
        tmp = path.with_suffix(f".tmp.{os.getpid()}.{uuid.uuid4().hex}")
        tmp.write_text(blob)
        os.replace(tmp, path)
        return response


def _response_to_json(response: CompletionResponse) -> dict:
    dist = None
    if response.first_token_top_logprobs is not None:
        dist = [
            [e.token, e.logprob] for e in response.first_token_top_logprobs.entries
        ]
    return {
        "text": response.text,
        "backend_id": response.backend_id,
        "top_logprobs": dist,
    }


def _response_from_json(data: dict, cached: bool = False) -> CompletionResponse:
    dist = None
    if data.get("top_logprobs") is not None:
        dist = TokenDistribution.from_pairs(
            [(t, lp) for t, lp in data["top_logprobs"]]
        )
    return CompletionResponse(data["text"], data["backend_id"], dist, cached=cached)
