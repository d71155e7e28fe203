"""Chat-model teacher: prompt construction and cached querying.

A prompt has three parts: a fixed general preamble shared by every dataset,
the dataset-specific description, and the molecule itself (SMILES string,
optional bond-list text, optional diagram image). Modality toggles recreate
the ablation arms: image on/off, graph text on/off.

Every query is content-addressed by a SHA-256 digest over (model name,
prompt text, image bytes) and persisted to ``cache/{digest}.json``, so a
warm cache answers without any network traffic and changing the preamble
invalidates old entries by construction. Cache writes are atomic
(write-temp-then-rename).
"""

from __future__ import annotations

import base64
import hashlib
import json
import logging
import os
import tempfile
import threading
import time
from dataclasses import dataclass
from pathlib import Path

import requests

from .data import TaskSpec
from .depict import render_png
from .errors import NetworkError
from .smiles import MolGraph, edge_text

logger = logging.getLogger(__name__)

# Fixed preamble, versioned with the repository. The response cache keys on
# its exact bytes, so edits here deliberately invalidate cached responses.
GENERAL_PREAMBLE = (
    "You are an expert chemist with deep knowledge of molecular structures, "
    "functional groups, and structure-property relationships. You will be "
    "given a molecule described in several forms, which may include its "
    "SMILES string, a drawing of its 2D structure, and a text listing of its "
    "bonds. Use every provided form of the molecule when reasoning, and "
    "answer with a careful, chemically grounded analysis."
)

PROMPT_SECTION_SEPARATOR = "\n\n"
MAX_TRIES = 5
RETRY_BASE_DELAY = 1.0


@dataclass(frozen=True)
class PromptFlags:
    """Modality toggles for the prompt ablation arms."""

    use_image: bool = True
    use_graph_text: bool = True


@dataclass
class Prompt:
    general_text: str
    dataset_text: str
    smiles: str
    edge_text: str | None
    image: bytes | None
    flags: PromptFlags

    @property
    def text(self) -> str:
        parts = [self.general_text, self.dataset_text, f"SMILES: {self.smiles}"]
        if self.edge_text is not None:
            parts.append("Graph structure (one line per bond):\n" + self.edge_text)
        if self.image is not None:
            parts.append("A drawing of the molecule is attached as an image.")
        return PROMPT_SECTION_SEPARATOR.join(parts)

    def digest(self, model_name: str) -> str:
        h = hashlib.sha256()
        h.update(model_name.encode())
        h.update(b"\x00")
        h.update(self.text.encode())
        h.update(b"\x00")
        if self.image is not None:
            h.update(self.image)
        return h.hexdigest()


def build_prompt(mol: MolGraph, task: TaskSpec,
                 flags: PromptFlags = PromptFlags()) -> Prompt:
    """Assemble the three-part prompt for one molecule; byte-deterministic."""
    return Prompt(
        general_text=GENERAL_PREAMBLE,
        dataset_text=task.prompt_description,
        smiles=mol.smiles,
        edge_text=edge_text(mol) if flags.use_graph_text else None,
        image=render_png(mol) if flags.use_image else None,
        flags=flags,
    )


@dataclass
class LlmResponse:
    text: str
    model_name: str
    token_usage: dict
    cache_hit: bool
    prompt_digest: str


@dataclass
class ClientConfig:
    endpoint: str = "https://api.openai.com/v1/chat/completions"
    model: str = "gpt-4-vision-preview"
    api_key_env: str = "MOLDISTILL_API_KEY"
    offline: bool = False
    max_tries: int = MAX_TRIES
    max_in_flight: int = 4
    requests_per_minute: int = 60
    max_tokens: int = 1024
    timeout_s: float = 120.0


class ResponseCache:
    """Content-addressed directory of responses: ``<dir>/<digest>.json``."""

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)
        self.directory.mkdir(parents=True, exist_ok=True)

    def path(self, digest: str) -> Path:
        return self.directory / f"{digest}.json"

    def get(self, digest: str) -> dict | None:
        p = self.path(digest)
        if not p.exists():
            return None
        return json.loads(p.read_text())

    def put(self, digest: str, record: dict) -> None:
        p = self.path(digest)
        fd, tmp = tempfile.mkstemp(dir=self.directory, suffix=".tmp")
        try:
            with os.fdopen(fd, "w") as fh:
                json.dump(record, fh, indent=2, sort_keys=True)
            os.replace(tmp, p)
        finally:
            if os.path.exists(tmp):
                os.unlink(tmp)

    def __len__(self) -> int:
        return len(list(self.directory.glob("*.json")))


class _RateLimiter:
    def __init__(self, per_minute: int):
        self.interval = 60.0 / max(1, per_minute)
        self.lock = threading.Lock()
        self.next_at = 0.0

    def wait(self):
        with self.lock:
            now = time.monotonic()
            delay = max(0.0, self.next_at - now)
            self.next_at = max(now, self.next_at) + self.interval
        if delay > 0:
            time.sleep(delay)


def _chat_body(prompt: Prompt, config: ClientConfig) -> dict:
    content: list[dict] = [{"type": "text", "text": prompt.text}]
    if prompt.image is not None:
        b64 = base64.b64encode(prompt.image).decode()
        content.append(
            {
                "type": "image_url",
                "image_url": {"url": f"data:image/png;base64,{b64}"},
            }
        )
    return {
        "model": config.model,
        "max_tokens": config.max_tokens,
        "messages": [{"role": "user", "content": content}],
    }


def query_llm(prompt: Prompt, config: ClientConfig, cache: ResponseCache,
              _limiter: _RateLimiter | None = None,
              _session: requests.Session | None = None) -> LlmResponse:
    """Answer from cache when possible, otherwise call the chat endpoint.

    Retries with exponential backoff on HTTP 429 and 5xx (``max_tries``
    attempts), persists the response before returning, and refuses to touch
    the network in offline mode.
    """
    digest = prompt.digest(config.model)
    record = cache.get(digest)
    if record is not None:
        return LlmResponse(
            text=record["response"],
            model_name=record["model"],
            token_usage=record.get("token_usage", {}),
            cache_hit=True,
            prompt_digest=digest,
        )
    if config.offline:
        raise NetworkError(f"cache miss (offline) for digest {digest}")

    headers = {"Content-Type": "application/json"}
    key = os.environ.get(config.api_key_env, "")
    if key:
        headers["Authorization"] = f"Bearer {key}"
    body = _chat_body(prompt, config)
    session = _session or requests

    last_error = None
    for attempt in range(config.max_tries):
        if _limiter is not None:
            _limiter.wait()
        try:
            resp = session.post(
                config.endpoint, json=body, headers=headers,
                timeout=config.timeout_s,
            )
        except requests.RequestException as exc:
            last_error = str(exc)
            logger.warning("chat call failed (attempt %d): %s", attempt + 1, exc)
        else:
            if resp.status_code == 200:
                payload = resp.json()
                try:
                    text = payload["choices"][0]["message"]["content"]
                except (KeyError, IndexError, TypeError) as exc:
                    raise NetworkError(f"malformed completion payload: {exc}")
                if isinstance(text, list):  # content-parts style reply
                    text = "".join(
                        part.get("text", "") for part in text
                        if isinstance(part, dict)
                    )
                if not text:
                    raise NetworkError("empty completion text")
                record = {
                    "prompt": prompt.text,
                    "response": text,
                    "model": config.model,
                    "token_usage": payload.get("usage", {}),
                    "timestamp": time.strftime("%Y-%m-%dT%H:%M:%SZ", time.gmtime()),
                }
                cache.put(digest, record)
                return LlmResponse(
                    text=text,
                    model_name=config.model,
                    token_usage=record["token_usage"],
                    cache_hit=False,
                    prompt_digest=digest,
                )
            last_error = f"HTTP {resp.status_code}"
            if resp.status_code not in (429,) and resp.status_code < 500:
                raise NetworkError(
                    f"chat endpoint rejected request: {last_error}"
                )
            logger.warning("retryable chat error (attempt %d): %s",
                           attempt + 1, last_error)
        if attempt + 1 < config.max_tries:
            time.sleep(RETRY_BASE_DELAY * (2 ** attempt))
    raise NetworkError(
        f"chat call failed after {config.max_tries} tries: {last_error}"
    )


def query_many(prompts: list[Prompt], config: ClientConfig,
               cache: ResponseCache) -> list[LlmResponse]:
    """Query a batch with bounded parallelism and shared rate limiting."""
    from concurrent.futures import ThreadPoolExecutor

    limiter = _RateLimiter(config.requests_per_minute)
    session = requests.Session() if not config.offline else None
    workers = max(1, config.max_in_flight)

    def one(prompt: Prompt) -> LlmResponse:
        return query_llm(prompt, config, cache, limiter, session)

    if workers == 1 or len(prompts) <= 1:
        return [one(p) for p in prompts]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(one, prompts))
