import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest
from hypothesis import given, strategies as st

from tabagent.clients import (API_KEY_ENV, TRUNCATION_MARKER, CountingSandbox, Generation, HTTPLLM,
                              LLMError, PolicyLLM, ProcessSandbox, RecordingSandbox, ScriptedLLM, StubSandbox,
                              code_fingerprint, request_fingerprint, tokenize, truncate_output)

MSGS = [{"role": "user", "content": "hi"}]


@given(st.text(st.characters(blacklist_categories=("Cs",)), max_size=50))
def test_tokens_tile_the_text(text):
    toks = tokenize(text)
    raw = text.encode("utf-8")
    assert b"".join(raw[t.start:t.end] for t in toks) == raw
    assert all(a.end == b.start for a, b in zip(toks, toks[1:]))


def test_truncation():
    assert truncate_output("short") == "short"
    out = truncate_output("é" * 5000, cap=2048)
    assert out.endswith(TRUNCATION_MARKER)
    assert len(out[: -len(TRUNCATION_MARKER)].encode("utf-8")) <= 2048


def test_wire_round_trip():
    g = Generation("a b", tokenize("a b", -0.5))
    assert Generation.from_wire(json.loads(json.dumps(g.to_wire()))) == g


def test_fingerprint_ignores_sampling_knobs_but_not_seed():
    assert request_fingerprint(MSGS, 1) == request_fingerprint(list(MSGS), 1)
    assert request_fingerprint(MSGS, 1) != request_fingerprint(MSGS, 2)


def test_scripted_replay(tmp_path):
    rec = PolicyLLM(lambda m, s: Generation(f"seed {s}", tokenize(f"seed {s}")))
    rec.generate(MSGS, 1.0, 10, 3)
    rec.dump(tmp_path / "t.json")
    replay = ScriptedLLM.load(tmp_path / "t.json")
    assert replay.generate(MSGS, 0.0, 99, 3).text == "seed 3"
    with pytest.raises(LLMError, match="no scripted response"):
        replay.generate(MSGS, 1.0, 10, 4)


def test_stub_sandbox(tmp_path):
    rec = RecordingSandbox(StubSandbox({code_fingerprint("x"): {"stdout": "1\n", "stderr": "", "status": "ok"}}))
    assert rec.execute("  x\n", 1.0).stdout == "1\n"
    rec.dump(tmp_path / "s.json")
    stub = StubSandbox.load(tmp_path / "s.json")
    assert stub.execute("x", 1.0).status == "ok"
    assert stub.execute("y", 1.0).status == "error"


def test_process_sandbox():
    sb = ProcessSandbox()
    assert sb.execute("print(6 * 7)", 10).stdout.strip() == "42"
    bad = sb.execute("1 / 0", 10)
    assert bad.status == "error" and "ZeroDivisionError" in bad.stderr
    assert sb.execute("while True: pass", 0.5).status == "timeout"


def test_counting_sandbox_contains_exceptions():
    class Boom:
        def execute(self, code, timeout):
            raise RuntimeError("down")

    sb = CountingSandbox(Boom())
    assert sb.execute("x", 1).status == "error"
    assert (sb.calls, sb.ok, sb.codes) == (1, 0, ["x"])


class _Handler(BaseHTTPRequestHandler):
    fail_first = 0
    seen = []

    def do_POST(self):
        body = json.loads(self.rfile.read(int(self.headers["Content-Length"])))
        type(self).seen.append((body, self.headers.get("Authorization")))
        if type(self).fail_first > 0:
            type(self).fail_first -= 1
            self.send_response(503)
            self.end_headers()
            return
        reply = Generation("ok", tokenize("ok", -0.25)).to_wire()
        data = json.dumps(reply).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    _Handler.seen = []
    srv = HTTPServer(("127.0.0.1", 0), _Handler)
    thread = threading.Thread(target=srv.serve_forever, daemon=True)
    thread.start()
    yield f"http://127.0.0.1:{srv.server_port}/generate"
    srv.shutdown()


def test_http_client_retries_and_sends_key(server, monkeypatch):
    monkeypatch.setenv(API_KEY_ENV, "sekrit")
    _Handler.fail_first = 1
    g = HTTPLLM(server, retries=2).generate(MSGS, 0.7, 64, 5)
    assert g.text == "ok" and g.tokens[0].logprob == -0.25
    body, auth = _Handler.seen[-1]
    assert auth == "Bearer sekrit"
    assert body == {"messages": MSGS, "temperature": 0.7, "max_tokens": 64, "seed": 5, "want_logprobs": True}
    assert len(_Handler.seen) == 2


def test_http_client_gives_up(server):
    _Handler.fail_first = 5
    with pytest.raises(LLMError, match="failed"):
        HTTPLLM(server, retries=0, api_key="").generate(MSGS, 0.7, 64, 5)
