"""LLM baseline replay against a chat-completion endpoint.

Ships the two built-in prompt sets for the four generation tasks and replays
them over a generic OpenAI-style wire shape (system + user message,
temperature 0). Transient failures retry with exponential backoff; progress
is journaled per example so an interrupted run resumes without re-requesting
completed ids.
"""

from __future__ import annotations

import json
import logging
import os
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import requests

from .tasks import TaskExample

log = logging.getLogger(__name__)

GENERATION_TASKS = ("headline", "positive_comment", "negative_comment", "description")
FLAVORS = ("base", "only_return")


class BaselineError(RuntimeError):
    pass


class AuthError(BaselineError):
    pass


@dataclass(frozen=True)
class PromptTemplate:
    task: str
    instruction: str
    user_template: str = "{input}"

    def __post_init__(self) -> None:
        if self.user_template.count("{input}") != 1:
            raise BaselineError("user_template must contain exactly one {input} placeholder")

    def fill(self, input_text: str) -> str:
        return self.user_template.replace("{input}", input_text)


_BASE_PROMPTS = {
    "headline": (
        "You are an editorial assistant for a Luxembourgish news outlet. Your task is "
        "to generate a news headline for a news article, based on the content of the article."
    ),
    "positive_comment": (
        "You are a Luxembourgish social media user. Your task is to generate a positive "
        "user comment in response to a news article. The comment should be closest to a "
        "comment that is most likely to get the most upvotes or thumbs up from other users."
    ),
    "negative_comment": (
        "You are a Luxembourgish social media user. Your task is to generate a user "
        "comment in response to a news article. The comment should be closest to a comment "
        "that is most likely to get the most downvotes or thumbs down from other users."
    ),
    "description": (
        "Based on a Luxembourgish Wikipedia article as input, your task is to generate a "
        "short description in Luxembourgish of the thing that is being described. The "
        "description can be as short as a word, and no longer than a short sentence."
    ),
}

_ONLY_RETURN_PROMPTS = {
    "headline": (
        "You are an editorial assistant for a Luxembourgish news outlet. Your task is "
        "to generate a news headline for the following news article, based on the content "
        "of the article. Only return the title."
    ),
    "positive_comment": (
        "You are a Luxembourgish social media user. Your task is to generate a user "
        "comment in response to a news article. The comment should be closest to a comment "
        "that is most likely to get the most upvotes or thumbs up from other users. "
        "Only return the comment."
    ),
    "negative_comment": (
        "You are a Luxembourgish social media user. Your task is to generate a user "
        "comment in response to a news article. The comment should be closest to a comment "
        "that is most likely to get the most downvotes or thumbs down from other users. "
        "Only return the comment."
    ),
    "description": (
        "Based on a Luxembourgish Wikipedia article as input, your task is to generate "
        "the corresponding short Wikipedia description in Luxembourgish of the thing that "
        "is being described. The general description should not be longer than a couple "
        "of words. Only return the description."
    ),
}


def prompt_for(task: str, flavor: str = "base") -> PromptTemplate:
    """Built-in template for a generation task; flavors: base, only_return."""
    if task not in GENERATION_TASKS:
        raise BaselineError(f"no prompt template for task {task!r}")
    if flavor not in FLAVORS:
        raise BaselineError(f"unknown prompt flavor {flavor!r}")
    table = _BASE_PROMPTS if flavor == "base" else _ONLY_RETURN_PROMPTS
    return PromptTemplate(task=task, instruction=table[task])


@dataclass(frozen=True)
class EndpointConfig:
    url: str
    model: str
    api_key_env: str | None = None
    timeout: float = 30.0


@dataclass(frozen=True)
class RunLimits:
    attempts: int = 3
    backoff_base: float = 0.5
    backoff_cap: float = 8.0
    rate_per_sec: float = 1.0
    max_in_flight: int = 4
    max_examples: int | None = None


class _TokenBucket:
    def __init__(self, rate_per_sec: float, capacity: float = 1.0):
        self.rate = rate_per_sec
        self.capacity = capacity
        self.tokens = capacity
        self.updated = time.monotonic()
        self.lock = threading.Lock()

    def acquire(self) -> None:
        while True:
            with self.lock:
                now = time.monotonic()
                self.tokens = min(self.capacity, self.tokens + (now - self.updated) * self.rate)
                self.updated = now
                if self.tokens >= 1.0:
                    self.tokens -= 1.0
                    return
                wait = (1.0 - self.tokens) / self.rate
            time.sleep(wait)


def request_body(template: PromptTemplate, example: TaskExample, cfg: EndpointConfig) -> bytes:
    """Canonical request payload: a pure function of (template, example, cfg)."""
    payload = {
        "model": cfg.model,
        "messages": [
            {"role": "system", "content": template.instruction},
            {"role": "user", "content": template.fill(example.input_text)},
        ],
        "temperature": 0,
    }
    return json.dumps(payload, ensure_ascii=False, sort_keys=True, separators=(",", ":")).encode(
        "utf-8"
    )


def _headers(cfg: EndpointConfig) -> dict[str, str]:
    headers = {"Content-Type": "application/json"}
    if cfg.api_key_env:
        key = os.environ.get(cfg.api_key_env)
        if not key:
            raise AuthError(f"credential environment variable {cfg.api_key_env} is not set")
        headers["Authorization"] = f"Bearer {key}"
    return headers


@dataclass
class JournalEntry:
    task: str
    example_id: str
    prediction: str
    status: str  # "ok" or "failed"
    attempts: int


class Journal:
    """Append-only, single-writer record of per-example outcomes."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.lock = threading.Lock()
        self._tail_repaired = False

    def _repair_tail(self) -> None:
        # A kill mid-write can leave a line without its newline; terminate it
        # so the next append starts on a fresh line. The partial record stays
        # malformed and is skipped on read, which is the correct outcome.
        if self.path.exists() and self.path.stat().st_size > 0:
            with self.path.open("rb+") as fh:
                fh.seek(-1, os.SEEK_END)
                if fh.read(1) != b"\n":
                    fh.write(b"\n")
        self._tail_repaired = True

    def completed_ids(self) -> set[str]:
        done = set()
        for entry in self.entries():
            if entry.status == "ok":
                done.add(entry.example_id)
        return done

    def entries(self) -> list[JournalEntry]:
        if not self.path.exists():
            return []
        out = []
        for line in self.path.read_text(encoding="utf-8").splitlines():
            if not line:
                continue
            try:
                obj = json.loads(line)
                out.append(
                    JournalEntry(
                        task=obj["task"],
                        example_id=obj["id"],
                        prediction=obj["prediction"],
                        status=obj["status"],
                        attempts=obj["attempts"],
                    )
                )
            except (json.JSONDecodeError, KeyError):
                # A truncated trailing line from an interrupted run is
                # expected; that example simply reruns.
                log.warning("%s: skipping malformed journal line", self.path)
        return out

    def append(self, entry: JournalEntry) -> None:
        record = json.dumps(
            {
                "task": entry.task,
                "id": entry.example_id,
                "prediction": entry.prediction,
                "status": entry.status,
                "attempts": entry.attempts,
            },
            ensure_ascii=False,
            sort_keys=True,
            separators=(",", ":"),
        )
        with self.lock:
            if not self._tail_repaired:
                self._repair_tail()
            with self.path.open("a", encoding="utf-8", newline="\n") as fh:
                fh.write(record + "\n")
                fh.flush()
                os.fsync(fh.fileno())


_TRANSIENT_STATUS = {429, 500, 502, 503, 504}


def _call_once(cfg: EndpointConfig, body: bytes, headers: dict[str, str]) -> str:
    response = requests.post(cfg.url, data=body, headers=headers, timeout=cfg.timeout)
    if response.status_code in (401, 403):
        raise AuthError(f"endpoint rejected credentials (HTTP {response.status_code})")
    if response.status_code in _TRANSIENT_STATUS:
        raise requests.ConnectionError(f"transient HTTP {response.status_code}")
    response.raise_for_status()
    data = response.json()
    return data["choices"][0]["message"]["content"]


def _process_example(
    example: TaskExample,
    template: PromptTemplate,
    cfg: EndpointConfig,
    limits: RunLimits,
    bucket: _TokenBucket,
    headers: dict[str, str],
) -> JournalEntry:
    body = request_body(template, example, cfg)
    last_error: Exception | None = None
    for attempt in range(1, limits.attempts + 1):
        bucket.acquire()
        try:
            prediction = _call_once(cfg, body, headers)
            return JournalEntry(
                task=example.task,
                example_id=example.example_id,
                prediction=prediction,
                status="ok",
                attempts=attempt,
            )
        except AuthError:
            raise
        except (requests.ConnectionError, requests.Timeout) as exc:
            last_error = exc
            if attempt < limits.attempts:
                delay = min(limits.backoff_cap, limits.backoff_base * (2 ** (attempt - 1)))
                log.warning(
                    "example %s attempt %d failed (%s); retrying in %.2fs",
                    example.example_id, attempt, exc, delay,
                )
                time.sleep(delay)
    log.error("example %s failed after %d attempts: %s", example.example_id, limits.attempts, last_error)
    return JournalEntry(
        task=example.task,
        example_id=example.example_id,
        prediction="",
        status="failed",
        attempts=limits.attempts,
    )


def run_baseline(
    cfg: EndpointConfig,
    examples: list[TaskExample],
    template: PromptTemplate,
    limits: RunLimits,
    journal_path: str | Path,
) -> list[JournalEntry]:
    """Replay the template over the examples, journaling each outcome.

    Already-completed ids (from an earlier interrupted run) are skipped.
    Exhausted retries mark the example failed and the run continues; an
    authentication failure halts immediately.
    """
    journal = Journal(journal_path)
    done = journal.completed_ids()
    pending = [ex for ex in examples if ex.example_id not in done]
    if limits.max_examples is not None:
        pending = pending[: limits.max_examples]
    if not pending:
        return journal.entries()
    headers = _headers(cfg)
    bucket = _TokenBucket(limits.rate_per_sec)
    halt = threading.Event()

    def worker(example: TaskExample) -> None:
        if halt.is_set():
            return
        try:
            entry = _process_example(example, template, cfg, limits, bucket, headers)
        except AuthError:
            halt.set()
            raise
        journal.append(entry)

    with ThreadPoolExecutor(max_workers=limits.max_in_flight) as pool:
        futures = [pool.submit(worker, ex) for ex in pending]
        auth_failure: AuthError | None = None
        for future in futures:
            try:
                future.result()
            except AuthError as exc:
                auth_failure = exc
        if auth_failure is not None:
            raise auth_failure
    return journal.entries()


def latest_predictions(entries: list[JournalEntry]) -> dict[str, JournalEntry]:
    """Last journal entry per example id (later runs supersede earlier failures)."""
    latest: dict[str, JournalEntry] = {}
    for entry in entries:
        latest[entry.example_id] = entry
    return latest
