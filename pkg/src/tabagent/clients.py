"""LLM and sandbox backends.

Both wire contracts are plain JSON:

    LLM      {messages, temperature, max_tokens, seed, want_logprobs}
             -> {text, tokens: [{text, logprob, byte_start, byte_end}]}
    sandbox  {code, timeout_ms} -> {stdout, stderr, status}

Scripted and stub backends replay canned responses keyed by a fingerprint of
the request, so replays stay correct when tasks run concurrently.
"""

from __future__ import annotations

import hashlib
import json
import logging
import os
import re
import subprocess
import sys
import threading
import time
import urllib.error
import urllib.request
from dataclasses import dataclass
from typing import Callable, Protocol, Sequence

from .confidence import TokenRecord

log = logging.getLogger(__name__)

OUTPUT_CAP_BYTES = 2048
TRUNCATION_MARKER = "\n...[truncated]"
API_KEY_ENV = "TABAGENT_API_KEY"

Message = dict  # {"role": str, "content": str}


class LLMError(RuntimeError):
    pass


@dataclass(frozen=True)
class Generation:
    text: str
    tokens: tuple[TokenRecord, ...]

    def to_wire(self) -> dict:
        return {
            "text": self.text,
            "tokens": [
                {"text": t.text, "logprob": t.logprob, "byte_start": t.start, "byte_end": t.end}
                for t in self.tokens
            ],
        }

    @classmethod
    def from_wire(cls, payload: dict) -> "Generation":
        text = payload["text"]
        if "tokens" in payload and payload["tokens"] is not None:
            toks = tuple(TokenRecord(t["text"], float(t["logprob"]), int(t["byte_start"]), int(t["byte_end"]))
                         for t in payload["tokens"])
        else:
            toks = tokenize(text)
        return cls(text, toks)


@dataclass(frozen=True)
class ExecResult:
    stdout: str
    stderr: str = ""
    status: str = "ok"  # "ok" | "error" | "timeout"

    def to_wire(self) -> dict:
        return {"stdout": self.stdout, "stderr": self.stderr, "status": self.status}


class LLMClient(Protocol):
    def generate(self, messages: Sequence[Message], temperature: float, max_tokens: int,
                 seed: int) -> Generation: ...


class SandboxClient(Protocol):
    def execute(self, code: str, timeout: float) -> ExecResult: ...


_PIECE = re.compile(r"\w+|\s+|[^\w\s]", re.UNICODE)


def tokenize(text: str, logprob: float | Callable[[str], float] = 0.0) -> tuple[TokenRecord, ...]:
    """Crude word/punctuation tokenization with byte spans, for canned responses."""
    out = []
    pos = 0
    for m in _PIECE.finditer(text):
        piece = m.group()
        width = len(piece.encode("utf-8"))
        lp = logprob(piece) if callable(logprob) else logprob
        out.append(TokenRecord(piece, lp, pos, pos + width))
        pos += width
    return tuple(out)


def truncate_output(text: str, cap: int = OUTPUT_CAP_BYTES) -> str:
    raw = text.encode("utf-8")
    if len(raw) <= cap:
        return text
    return raw[:cap].decode("utf-8", "ignore") + TRUNCATION_MARKER


def request_payload(messages, temperature, max_tokens, seed) -> dict:
    return {
        "messages": [{"role": m["role"], "content": m["content"]} for m in messages],
        "temperature": temperature,
        "max_tokens": max_tokens,
        "seed": seed,
        "want_logprobs": True,
    }


def request_fingerprint(messages, seed) -> str:
    # temperature and token limits are left out so one transcript serves several configs
    body = json.dumps({"messages": [[m["role"], m["content"]] for m in messages], "seed": seed},
                      ensure_ascii=False, sort_keys=True)
    return hashlib.sha256(body.encode("utf-8")).hexdigest()[:24]


def code_fingerprint(code: str) -> str:
    return hashlib.sha256(code.strip().encode("utf-8")).hexdigest()[:24]


# --- LLM backends --------------------------------------------------------

class ScriptedLLM:
    """Replays a transcript fixture: ``{"responses": {fingerprint: generation}}``."""

    def __init__(self, responses: dict[str, dict]):
        self.responses = responses

    @classmethod
    def load(cls, path) -> "ScriptedLLM":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh)["responses"])

    def generate(self, messages, temperature, max_tokens, seed) -> Generation:
        key = request_fingerprint(messages, seed)
        try:
            return Generation.from_wire(self.responses[key])
        except KeyError:
            raise LLMError(f"no scripted response for request {key}") from None


class PolicyLLM:
    """Wraps a Python callable ``policy(messages, seed) -> Generation`` and records every reply."""

    def __init__(self, policy: Callable[[Sequence[Message], int], Generation]):
        self.policy = policy
        self.recorded: dict[str, dict] = {}
        self._lock = threading.Lock()

    def generate(self, messages, temperature, max_tokens, seed) -> Generation:
        gen = self.policy(messages, seed)
        with self._lock:
            self.recorded[request_fingerprint(messages, seed)] = gen.to_wire()
        return gen

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"responses": dict(sorted(self.recorded.items()))}, fh, indent=1, ensure_ascii=False)
            fh.write("\n")


class HTTPLLM:
    """POSTs the wire request as JSON to ``url``; expects the wire response back."""

    def __init__(self, url: str, timeout: float = 120.0, retries: int = 2, api_key: str | None = None):
        self.url = url
        self.timeout = timeout
        self.retries = retries
        self.api_key = api_key if api_key is not None else os.environ.get(API_KEY_ENV)

    def generate(self, messages, temperature, max_tokens, seed) -> Generation:
        body = json.dumps(request_payload(messages, temperature, max_tokens, seed)).encode("utf-8")
        headers = {"Content-Type": "application/json"}
        if self.api_key:
            headers["Authorization"] = f"Bearer {self.api_key}"
        last: Exception | None = None
        for attempt in range(self.retries + 1):
            req = urllib.request.Request(self.url, data=body, headers=headers, method="POST")
            try:
                with urllib.request.urlopen(req, timeout=self.timeout) as resp:
                    return Generation.from_wire(json.loads(resp.read().decode("utf-8")))
            except (urllib.error.URLError, TimeoutError, json.JSONDecodeError, KeyError) as exc:
                last = exc
                log.warning("LLM request failed (attempt %d/%d): %s", attempt + 1, self.retries + 1, exc)
                time.sleep(min(2 ** attempt, 8) * 0.5)
        raise LLMError(f"LLM endpoint {self.url} failed: {last}")


# --- sandbox backends ----------------------------------------------------

class StubSandbox:
    """Canned outputs keyed by code fingerprint: ``{"outputs": {fingerprint: result}}``."""

    def __init__(self, outputs: dict[str, dict]):
        self.outputs = outputs

    @classmethod
    def load(cls, path) -> "StubSandbox":
        with open(path, encoding="utf-8") as fh:
            return cls(json.load(fh)["outputs"])

    def execute(self, code, timeout) -> ExecResult:
        hit = self.outputs.get(code_fingerprint(code))
        if hit is None:
            return ExecResult("", "stub sandbox: no canned output for this code", "error")
        return ExecResult(truncate_output(hit.get("stdout", "")), truncate_output(hit.get("stderr", "")),
                          hit.get("status", "ok"))


class ProcessSandbox:
    """Runs Python code in a fresh isolated interpreter process."""

    def __init__(self, python: str = sys.executable):
        self.python = python

    def execute(self, code, timeout) -> ExecResult:
        try:
            proc = subprocess.run([self.python, "-I", "-c", code], capture_output=True, text=True,
                                  timeout=timeout, env={"PYTHONIOENCODING": "utf-8"})
        except subprocess.TimeoutExpired:
            return ExecResult("", f"timed out after {timeout}s", "timeout")
        except OSError as exc:
            return ExecResult("", f"sandbox failed to start: {exc}", "error")
        status = "ok" if proc.returncode == 0 else "error"
        return ExecResult(truncate_output(proc.stdout), truncate_output(proc.stderr), status)


class RecordingSandbox:
    def __init__(self, inner: SandboxClient):
        self.inner = inner
        self.recorded: dict[str, dict] = {}
        self._lock = threading.Lock()

    def execute(self, code, timeout) -> ExecResult:
        res = self.inner.execute(code, timeout)
        with self._lock:
            self.recorded[code_fingerprint(code)] = res.to_wire()
        return res

    def dump(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            json.dump({"outputs": dict(sorted(self.recorded.items()))}, fh, indent=1, ensure_ascii=False)
            fh.write("\n")


# --- call accounting -----------------------------------------------------

class CountingLLM:
    def __init__(self, inner: LLMClient):
        self.inner = inner
        self.calls = 0

    def generate(self, messages, temperature, max_tokens, seed) -> Generation:
        self.calls += 1
        return self.inner.generate(messages, temperature, max_tokens, seed)


class CountingSandbox:
    def __init__(self, inner: SandboxClient):
        self.inner = inner
        self.calls = 0
        self.ok = 0
        self.codes: list[str] = []

    def execute(self, code, timeout) -> ExecResult:
        self.calls += 1
        self.codes.append(code)
        try:
            res = self.inner.execute(code, timeout)
        except Exception as exc:  # backends must not raise; contain the ones that do
            res = ExecResult("", f"sandbox error: {exc}", "error")
        if res.status == "ok":
            self.ok += 1
        return res
