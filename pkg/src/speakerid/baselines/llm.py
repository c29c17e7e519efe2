"""Zero-shot instruction-model baseline with an on-disk response cache.

Responses are scored with `evaluation.lenient_match`.  The prompt below is
this package's own default and is configuration, not a reproduction of any
published prompt.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path
from typing import Callable, Iterable, Protocol

from ..corpus import CharacterRoster, NovelCorpus, QuotationInstance

logger = logging.getLogger(__name__)

API_KEY_ENV = "SPEAKERID_LLM_API_KEY"
DEFAULT_MODEL = "gpt-3.5-turbo-0613"

PROMPT = """Identify the speaker of the quotation in the passage from a novel.

Passage:
{left_context}
>>> {quotation} <<<
{right_context}

Candidate speakers:
{candidates}

{instruction}"""

INSTRUCTIONS = {
    "plain": "Answer with the name of the speaker only.",
    "chain_of_thought": "Let's think step by step, then give the name of the speaker on the last line.",
}


class TransportError(RuntimeError):
    """Temporary failure talking to the model; safe to retry."""


class LLMClient(Protocol):
    def complete(self, prompt: str, *, quote_id: str | None = None) -> str: ...


def build_prompt(instance: QuotationInstance, roster: CharacterRoster, style: str = "plain") -> str:
    if style not in INSTRUCTIONS:
        raise ValueError(f"unknown prompt style {style!r}")
    candidates = "\n".join(
        f"{i}. {e.canonical_name}" + (f" (also: {', '.join(e.aliases)})" if e.aliases else "")
        for i, e in enumerate(roster, 1)
    )
    return PROMPT.format(left_context=instance.left_context, quotation=instance.text,
                         right_context=instance.right_context, candidates=candidates,
                         instruction=INSTRUCTIONS[style])


def prompt_hash(prompt: str) -> str:
    return hashlib.sha256(prompt.encode("utf-8")).hexdigest()


class ResponseCache:
    """One JSON file per (quote_id, prompt hash), named by the hash of both."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def _path(self, quote_id: str, phash: str) -> Path:
        return self.directory / (hashlib.sha256(f"{quote_id}\n{phash}".encode()).hexdigest() + ".json")

    def get(self, quote_id: str, phash: str) -> str | None:
        path = self._path(quote_id, phash)
        if not path.exists():
            return None
        return json.loads(path.read_text(encoding="utf-8"))["response"]

    def put(self, quote_id: str, phash: str, response: str) -> None:
        path = self._path(quote_id, phash)
        tmp = path.with_suffix(".tmp")
        tmp.write_text(json.dumps({"quote_id": quote_id, "prompt_hash": phash, "response": response},
                                  ensure_ascii=False), encoding="utf-8")
        tmp.replace(path)


class StubClient:
    """Offline client answering from canned responses keyed by quote id."""

    def __init__(self, responses: dict[str, str], default: str = ""):
        self.responses = dict(responses)
        self.default = default
        self.calls = 0

    @classmethod
    def from_file(cls, path: str | Path) -> "StubClient":
        data = json.loads(Path(path).read_text(encoding="utf-8"))
        return cls(data.get("responses", data), data.get("default", "") if "responses" in data else "")

    def complete(self, prompt: str, *, quote_id: str | None = None) -> str:
        self.calls += 1
        return self.responses.get(quote_id or "", self.default)


class ChatCompletionsClient:
    """Client for an OpenAI-compatible ``/chat/completions`` endpoint.

    The credential is read from the ``SPEAKERID_LLM_API_KEY`` environment
    variable and never logged.
    """

    def __init__(self, model: str = DEFAULT_MODEL, base_url: str = "https://api.openai.com/v1",
                 timeout: float = 60.0, api_key: str | None = None, transport=None):
        import httpx

        key = api_key or os.environ.get(API_KEY_ENV)
        if not key:
            raise RuntimeError(f"set {API_KEY_ENV} to use the remote model")
        self.model = model
        self._http = httpx.Client(base_url=base_url, timeout=timeout,
                                  headers={"Authorization": f"Bearer {key}"}, transport=transport)

    def complete(self, prompt: str, *, quote_id: str | None = None) -> str:
        import httpx

        try:
            r = self._http.post("/chat/completions", json={
                "model": self.model, "temperature": 0,
                "messages": [{"role": "user", "content": prompt}],
            })
        except httpx.TransportError as e:
            raise TransportError(str(e)) from e
        if r.status_code == 429 or r.status_code >= 500:
            raise TransportError(f"HTTP {r.status_code}")
        r.raise_for_status()
        return r.json()["choices"][0]["message"]["content"]


def llm_zero_shot(instance: QuotationInstance, roster: CharacterRoster, client: LLMClient,
                  prompt_style: str = "plain", cache: ResponseCache | None = None, *, retries: int = 3,
                  backoff: float = 2.0, sleep: Callable[[float], None] = time.sleep) -> str:
    """Ask `client` once for the speaker; cached responses are returned without a call."""
    prompt = build_prompt(instance, roster, prompt_style)
    phash = prompt_hash(prompt)
    if cache is not None:
        hit = cache.get(instance.quote_id, phash)
        if hit is not None:
            return hit
    for attempt in range(retries + 1):
        try:
            response = client.complete(prompt, quote_id=instance.quote_id)
            break
        except TransportError:
            if attempt == retries:
                raise
            delay = backoff * 2 ** attempt
            logger.warning("quotation %s: transport failure, retrying in %.1fs", instance.quote_id, delay)
            sleep(delay)
    if cache is not None:
        cache.put(instance.quote_id, phash, response)
    return response


class _RateLimiter:
    def __init__(self, min_interval: float):
        self.min_interval = min_interval
        self._lock = threading.Lock()
        self._next = 0.0

    def wait(self) -> None:
        if self.min_interval <= 0:
            return
        with self._lock:
            now = time.monotonic()
            delay = max(0.0, self._next - now)
            self._next = max(now, self._next) + self.min_interval
        if delay:
            time.sleep(delay)


def run_llm_baseline(corpus: NovelCorpus, instances: Iterable[QuotationInstance], client: LLMClient,
                     prompt_style: str = "plain", cache: ResponseCache | None = None, *,
                     max_workers: int = 4, min_interval: float = 0.0) -> dict[tuple[str, str], str]:
    """Responses for every instance, with at most `max_workers` requests in flight."""
    limiter = _RateLimiter(min_interval)
    instances = list(instances)

    def one(q: QuotationInstance) -> str:
        limiter.wait()
        return llm_zero_shot(q, corpus.roster(q.novel_id), client, prompt_style, cache)

    with ThreadPoolExecutor(max_workers=max_workers) as pool:
        responses = list(pool.map(one, instances))
    return {q.key: r for q, r in zip(instances, responses)}
