"""Model clients behind a single inference interface.

The miners only ever see ``client.infer(retained_sources, context) -> text``.
Deterministic clients (scripted tables, validity assignments, transcript
replay) make the whole stack testable offline; RemoteLLMClient speaks the
OpenAI-compatible chat-completions JSON protocol for live runs. Judge-style
predicates additionally use ``client.complete(prompt) -> text``.

Transcript fixtures are JSON lines, one object per recorded call:
``{"request_hash": ..., "request": ..., "response_text": ...}``. The hash is
a SHA-256 over the canonical request JSON, so a replay client serves exactly
the requests a live client would have sent.
"""

from __future__ import annotations

import hashlib
import json
import os
import threading
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Any, Iterable, Mapping, Sequence

import httpx

from .lattice import mask_to_indices

DEFAULT_INSTRUCTIONS = (
    "Answer the question using only the information in the numbered sources "
    "below. If the sources do not contain the answer, say that the sources "
    "are insufficient. Reply with the answer only."
)

EMPTY_SOURCES_MARKER = "(no sources provided)"


class ModelError(Exception):
    """Base for client-side failures. Miners abort on any of these."""


class ScriptedInputError(ModelError):
    """A scripted client was asked for an input outside its table; the
    fixture does not cover the run that used it."""


class InferenceError(ModelError):
    """A live or replay inference could not produce output text."""


@dataclass(frozen=True)
class QueryContext:
    """The fixed, non-mined remainder of the input: question plus instructions."""

    question: str
    instructions: str = DEFAULT_INSTRUCTIONS


@dataclass(frozen=True)
class RagPrompt:
    """An assembled retrieval prompt: instructions, ordered sources, question."""

    instructions: str
    sources: tuple[str, ...]
    question: str

    def user_text(self) -> str:
        if self.sources:
            lines = [f"Source {i + 1}: {text}" for i, text in enumerate(self.sources)]
        else:
            lines = [EMPTY_SOURCES_MARKER]
        return "\n".join(lines) + f"\n\nQuestion: {self.question}"

    def messages(self) -> list[dict[str, str]]:
        return [
            {"role": "system", "content": self.instructions},
            {"role": "user", "content": self.user_text()},
        ]


def assemble_prompt(retained_sources: Sequence[str], context: QueryContext) -> RagPrompt:
    """Lay out the retained sources, in the order given, ahead of the question.

    Sources are labeled by their position in this prompt; an empty retained
    list produces an explicit no-sources section so the model is never shown
    a silently truncated prompt.
    """
    return RagPrompt(
        instructions=context.instructions,
        sources=tuple(retained_sources),
        question=context.question,
    )


def build_chat_request(model: str, messages: list[dict[str, str]],
                       temperature: float = 0.0, seed: int | None = None) -> dict:
    request: dict[str, Any] = {
        "model": model,
        "messages": messages,
        "temperature": temperature,
    }
    if seed is not None:
        request["seed"] = seed
    return request


def request_hash(request: Mapping) -> str:
    canonical = json.dumps(request, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()


class ModelClient:
    """Black-box map from (ordered retained sources, fixed context) to output text."""

    def infer(self, retained_sources: Sequence[str], context: Any) -> str:
        raise NotImplementedError

    def complete(self, prompt: str) -> str:
        """Plain single-prompt completion, used by judge predicates."""
        raise NotImplementedError(f"{type(self).__name__} cannot serve judge prompts")


def infer(client: ModelClient, retained_sources: Sequence[str], context: Any) -> str:
    """Invoke the model on a concrete retained-source list."""
    return client.infer(retained_sources, context)


class _SourceIndexer:
    """Maps retained source texts back to their canonical mask."""

    def __init__(self, sources: Sequence[str]) -> None:
        self._bits = {}
        for i, text in enumerate(sources):
            if text in self._bits:
                raise ValueError("scripted clients require distinct source texts")
            self._bits[text] = i

    def mask_of(self, retained: Sequence[str]) -> int:
        mask = 0
        for text in retained:
            bit = self._bits.get(text)
            if bit is None:
                raise ScriptedInputError(f"source text not in this session: {text[:60]!r}")
            mask |= 1 << bit
        return mask


class ScriptedClient(ModelClient):
    """Deterministic client backed by a total retained-mask -> output table.

    Immutable after construction apart from the call log, which records the
    canonical mask of every inference that reached the client (handy for
    asserting what a miner actually evaluated).
    """

    def __init__(self, sources: Sequence[str], outputs: Mapping[int, str]) -> None:
        self._indexer = _SourceIndexer(sources)
        self._outputs = dict(outputs)
        self._lock = threading.Lock()
        self.calls: list[int] = []

    def infer(self, retained_sources: Sequence[str], context: Any) -> str:
        mask = self._indexer.mask_of(retained_sources)
        with self._lock:
            self.calls.append(mask)
        try:
            return self._outputs[mask]
        except KeyError:
            raise ScriptedInputError(
                f"no scripted output for retained mask {mask:#b} "
                f"(sources {mask_to_indices(mask)})"
            ) from None


@dataclass(frozen=True)
class ValidityAssignment:
    """Which retained-source masks count as satisfied, over a width-n lattice."""

    width: int
    satisfied: frozenset[int]

    def __post_init__(self) -> None:
        for mask in self.satisfied:
            if mask < 0 or mask >> self.width:
                raise ValueError(f"mask {mask:#x} does not fit width {self.width}")

    @classmethod
    def from_satisfaction(cls, width: int, table: Mapping) -> "ValidityAssignment":
        """Build from a mask -> 0/1 map, e.g. an oracle satisfaction dump."""
        satisfied = frozenset(int(k) for k, v in table.items() if int(v) == 1)
        return cls(width, satisfied)


class ValidityAssignmentClient(ModelClient):
    """Emits the token 1 when the queried mask is satisfied, else 0."""

    def __init__(self, assignment: ValidityAssignment, sources: Sequence[str]) -> None:
        if len(sources) != assignment.width:
            raise ValueError("assignment width must match the source count")
        self.assignment = assignment
        self._indexer = _SourceIndexer(sources)
        self._lock = threading.Lock()
        self.calls: list[int] = []

    def infer(self, retained_sources: Sequence[str], context: Any) -> str:
        mask = self._indexer.mask_of(retained_sources)
        with self._lock:
            self.calls.append(mask)
        return "1" if mask in self.assignment.satisfied else "0"


class ScriptedJudge(ModelClient):
    """Test judge: first substring rule that matches the prompt wins."""

    def __init__(self, rules: Iterable[tuple[str, str]], default: str | None = None) -> None:
        self._rules = list(rules)
        self._default = default

    def complete(self, prompt: str) -> str:
        for needle, verdict in self._rules:
            if needle in prompt:
                return verdict
        if self._default is not None:
            return self._default
        raise ScriptedInputError("no judge rule matches the prompt")


RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class RemoteLLMClient(ModelClient):
    """OpenAI-compatible chat-completions client.

    Everything operational is explicit: endpoint, model name, temperature,
    seed, timeout, retry budget, and the in-flight request ceiling. The API
    key is read from the environment (never from config files). Retryable
    statuses back off exponentially; exhausting the budget raises
    InferenceError with the endpoint and last status.
    """

    def __init__(self, endpoint: str, model: str, api_key_env: str = "OPENAI_API_KEY",
                 temperature: float = 0.0, seed: int | None = None,
                 timeout: float = 60.0, max_retries: int = 3, backoff: float = 0.5,
                 max_in_flight: int = 4, transport: httpx.BaseTransport | None = None) -> None:
        self.endpoint = endpoint.rstrip("/")
        self.model = model
        self.temperature = temperature
        self.seed = seed
        self.max_retries = max_retries
        self.backoff = backoff
        self._api_key = os.environ.get(api_key_env, "")
        self._slots = threading.BoundedSemaphore(max_in_flight)
        self._http = httpx.Client(timeout=timeout, transport=transport)

    def close(self) -> None:
        self._http.close()

    def infer(self, retained_sources: Sequence[str], context: Any) -> str:
        prompt = assemble_prompt(retained_sources, context)
        return chat_completion(self, prompt)

    def complete(self, prompt: str) -> str:
        messages = [{"role": "user", "content": prompt}]
        return self._send(build_chat_request(self.model, messages, self.temperature, self.seed))

    def _send(self, request: dict) -> str:
        url = f"{self.endpoint}/chat/completions"
        headers = {"Content-Type": "application/json"}
        if self._api_key:
            headers["Authorization"] = f"Bearer {self._api_key}"
        last_status: Any = None
        for attempt in range(self.max_retries + 1):
            if attempt and self.backoff:
                time.sleep(self.backoff * 2 ** (attempt - 1))
            try:
                with self._slots:
                    response = self._http.post(url, headers=headers, json=request)
            except httpx.HTTPError as exc:
                last_status = f"transport error: {exc}"
                continue
            if response.status_code in RETRYABLE_STATUS:
                last_status = response.status_code
                continue
            if response.status_code != 200:
                raise InferenceError(
                    f"{url} returned HTTP {response.status_code}: {response.text[:200]}"
                )
            try:
                return response.json()["choices"][0]["message"]["content"]
            except (KeyError, IndexError, TypeError, ValueError) as exc:
                raise InferenceError(f"malformed completion body from {url}: {exc}") from exc
        raise InferenceError(
            f"{url} still failing after {self.max_retries + 1} attempts (last: {last_status})"
        )


def chat_completion(client: RemoteLLMClient, prompt: RagPrompt) -> str:
    """Send one assembled prompt through a remote client."""
    request = build_chat_request(client.model, prompt.messages(),
                                 client.temperature, client.seed)
    return client._send(request)


class RecordingClient(ModelClient):
    """Wraps another client and appends request/response pairs to a JSONL file.

    Requests are shaped exactly as RemoteLLMClient would send them, so a
    transcript recorded against any deterministic stand-in replays cleanly
    through TranscriptReplayClient.
    """

    def __init__(self, inner: ModelClient, path: str | Path, model: str,
                 temperature: float = 0.0, seed: int | None = None) -> None:
        self.inner = inner
        self.path = Path(path)
        self.model = model
        self.temperature = temperature
        self.seed = seed
        self._lock = threading.Lock()
        self._seen: set[str] = set()

    def _record(self, request: dict, response_text: str) -> None:
        digest = request_hash(request)
        with self._lock:
            if digest in self._seen:
                return
            self._seen.add(digest)
            entry = {"request_hash": digest, "request": request,
                     "response_text": response_text}
            with self.path.open("a", encoding="utf-8") as fh:
                fh.write(json.dumps(entry, sort_keys=True) + "\n")

    def infer(self, retained_sources: Sequence[str], context: Any) -> str:
        prompt = assemble_prompt(retained_sources, context)
        request = build_chat_request(self.model, prompt.messages(),
                                     self.temperature, self.seed)
        response = self.inner.infer(retained_sources, context)
        self._record(request, response)
        return response

    def complete(self, prompt: str) -> str:
        messages = [{"role": "user", "content": prompt}]
        request = build_chat_request(self.model, messages, self.temperature, self.seed)
        response = self.inner.complete(prompt)
        self._record(request, response)
        return response


class TranscriptReplayClient(ModelClient):
    """Serves recorded responses by request hash; any unrecorded request fails."""

    def __init__(self, path: str | Path, model: str, temperature: float = 0.0,
                 seed: int | None = None) -> None:
        self.path = Path(path)
        self.model = model
        self.temperature = temperature
        self.seed = seed
        self._responses: dict[str, str] = {}
        with self.path.open(encoding="utf-8") as fh:
            for line in fh:
                line = line.strip()
                if not line:
                    continue
                entry = json.loads(line)
                self._responses[entry["request_hash"]] = entry["response_text"]

    def _lookup(self, request: dict) -> str:
        digest = request_hash(request)
        try:
            return self._responses[digest]
        except KeyError:
            raise InferenceError(
                f"no recorded response for request {digest[:12]} in {self.path}"
            ) from None

    def infer(self, retained_sources: Sequence[str], context: Any) -> str:
        prompt = assemble_prompt(retained_sources, context)
        return self._lookup(build_chat_request(self.model, prompt.messages(),
                                               self.temperature, self.seed))

    def complete(self, prompt: str) -> str:
        messages = [{"role": "user", "content": prompt}]
        return self._lookup(build_chat_request(self.model, messages,
                                               self.temperature, self.seed))


def model_from_config(block: Mapping, sources: Sequence[str] | None = None) -> ModelClient:
    """Build a client from a run-config model block.

    Kinds: scripted (outputs keyed by retained mask), validity_assignment
    (satisfied mask list or a mask -> 0/1 satisfaction map), remote
    (endpoint/model/...), replay (transcript path + model name).
    """
    kind = block.get("kind")
    if kind == "scripted":
        if sources is None:
            raise ValueError("scripted model requires the input sources")
        outputs = {int(k): v for k, v in block["outputs"].items()}
        return ScriptedClient(sources, outputs)
    if kind == "validity_assignment":
        if sources is None:
            raise ValueError("validity_assignment model requires the input sources")
        width = int(block.get("width", len(sources)))
        if "satisfaction" in block:
            assignment = ValidityAssignment.from_satisfaction(width, block["satisfaction"])
        else:
            assignment = ValidityAssignment(width, frozenset(int(m) for m in block["satisfied"]))
        return ValidityAssignmentClient(assignment, sources)
    if kind == "remote":
        return RemoteLLMClient(
            endpoint=block["endpoint"],
            model=block["model"],
            api_key_env=block.get("api_key_env", "OPENAI_API_KEY"),
            temperature=float(block.get("temperature", 0.0)),
            seed=block.get("seed"),
            timeout=float(block.get("timeout", 60.0)),
            max_retries=int(block.get("max_retries", 3)),
            backoff=float(block.get("backoff", 0.5)),
            max_in_flight=int(block.get("max_in_flight", 4)),
        )
    if kind == "replay":
        return TranscriptReplayClient(
            block["path"], model=block["model"],
            temperature=float(block.get("temperature", 0.0)),
            seed=block.get("seed"),
        )
    raise ValueError(f"unknown model kind {kind!r}")
