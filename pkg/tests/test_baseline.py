import json
import threading
from collections import Counter
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer

import pytest

from luxgen.baseline import (
    AuthError,
    BaselineError,
    EndpointConfig,
    Journal,
    RunLimits,
    latest_predictions,
    prompt_for,
    request_body,
    run_baseline,
)
from luxgen.tasks import TaskExample

FAST = dict(backoff_base=0.001, backoff_cap=0.002, rate_per_sec=100000.0)


class MockState:
    def __init__(self):
        self.lock = threading.Lock()
        self.requests = Counter()  # user-content -> times seen
        self.fail_first = {}  # user-content -> failures to serve before success
        self.mode = "echo"  # or "unauthorized"


class MockHandler(BaseHTTPRequestHandler):
    state: MockState = None

    def do_POST(self):
        length = int(self.headers["Content-Length"])
        payload = json.loads(self.rfile.read(length))
        user = payload["messages"][1]["content"]
        state = self.state
        with state.lock:
            state.requests[user] += 1
            seen = state.requests[user]
            remaining_failures = state.fail_first.get(user, 0)
            mode = state.mode
        if mode == "unauthorized":
            self.send_response(401)
            self.end_headers()
            return
        if seen <= remaining_failures:
            self.send_response(503)
            self.end_headers()
            return
        body = json.dumps({"choices": [{"message": {"content": f"echo: {user}"}}]}).encode()
        self.send_response(200)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def mock_server():
    state = MockState()
    handler = type("Handler", (MockHandler,), {"state": state})
    server = ThreadingHTTPServer(("127.0.0.1", 0), handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    url = f"http://127.0.0.1:{server.server_address[1]}/v1/chat/completions"
    yield EndpointConfig(url=url, model="mock-model", timeout=5.0), state
    server.shutdown()


def examples(n, task="headline"):
    return [
        TaskExample(task=task, input_text=f"article {i}", target_text=f"title {i}",
                    source_ids=(f"a{i}",))
        for i in range(n)
    ]


class TestPrompts:
    def test_only_return_flavor_ends_with_title_instruction(self):
        template = prompt_for("headline", "only_return")
        assert template.instruction.endswith("Only return the title.")

    def test_base_flavor_differs(self):
        assert prompt_for("headline", "base").instruction != prompt_for("headline", "only_return").instruction

    def test_eight_distinct_templates(self):
        texts = {
            prompt_for(task, flavor).instruction
            for task in ("headline", "positive_comment", "negative_comment", "description")
            for flavor in ("base", "only_return")
        }
        assert len(texts) == 8

    def test_unknown_task_rejected(self):
        with pytest.raises(BaselineError, match="task"):
            prompt_for("moderation", "base")

    def test_exactly_one_placeholder(self):
        template = prompt_for("description", "base")
        assert template.user_template.count("{input}") == 1
        assert template.fill("XYZ") == "XYZ"


class TestRequestBody:
    def test_pure_function_byte_identical(self, mock_server):
        cfg, _ = mock_server
        template = prompt_for("headline", "base")
        ex = examples(1)[0]
        assert request_body(template, ex, cfg) == request_body(template, ex, cfg)

    def test_wire_shape(self, mock_server):
        cfg, _ = mock_server
        payload = json.loads(request_body(prompt_for("headline", "base"), examples(1)[0], cfg))
        assert payload["temperature"] == 0
        assert [m["role"] for m in payload["messages"]] == ["system", "user"]
        assert payload["model"] == "mock-model"


class TestRunBaseline:
    def test_echo_predictions(self, mock_server, tmp_path):
        cfg, state = mock_server
        entries = run_baseline(
            cfg, examples(5), prompt_for("headline", "base"),
            RunLimits(attempts=2, **FAST), tmp_path / "journal.jsonl",
        )
        latest = latest_predictions(entries)
        assert len(latest) == 5
        assert all(e.status == "ok" for e in latest.values())
        assert latest["a3"].prediction == "echo: article 3"

    def test_retry_after_transient_failures(self, mock_server, tmp_path):
        cfg, state = mock_server
        state.fail_first["article 0"] = 2
        entries = run_baseline(
            cfg, examples(1), prompt_for("headline", "base"),
            RunLimits(attempts=4, **FAST), tmp_path / "journal.jsonl",
        )
        [entry] = entries
        assert entry.status == "ok"
        assert entry.attempts == 3
        assert state.requests["article 0"] == 3

    def test_exhausted_retries_marked_failed_run_continues(self, mock_server, tmp_path):
        cfg, state = mock_server
        state.fail_first["article 1"] = 99
        entries = run_baseline(
            cfg, examples(3), prompt_for("headline", "base"),
            RunLimits(attempts=2, **FAST), tmp_path / "journal.jsonl",
        )
        latest = latest_predictions(entries)
        assert latest["a1"].status == "failed"
        assert sorted(e.example_id for e in latest.values() if e.status == "ok") == ["a0", "a2"]

    def test_resume_skips_completed_ids(self, mock_server, tmp_path):
        cfg, state = mock_server
        journal = tmp_path / "journal.jsonl"
        run_baseline(
            cfg, examples(6), prompt_for("headline", "base"),
            RunLimits(attempts=2, max_examples=3, **FAST), journal,
        )
        assert len(Journal(journal).completed_ids()) == 3
        entries = run_baseline(
            cfg, examples(6), prompt_for("headline", "base"),
            RunLimits(attempts=2, **FAST), journal,
        )
        assert len(latest_predictions(entries)) == 6
        assert all(count == 1 for count in state.requests.values())

    def test_truncated_journal_line_tolerated(self, mock_server, tmp_path):
        cfg, state = mock_server
        journal = tmp_path / "journal.jsonl"
        run_baseline(cfg, examples(2), prompt_for("headline", "base"), RunLimits(attempts=2, **FAST), journal)
        with journal.open("a", encoding="utf-8") as fh:
            fh.write('{"task": "headline", "id": "a5", "predicti')  # interrupted write
        entries = run_baseline(
            cfg, examples(3), prompt_for("headline", "base"),
            RunLimits(attempts=2, **FAST), journal,
        )
        assert "a2" in latest_predictions(entries)

    def test_auth_failure_halts(self, mock_server, tmp_path):
        cfg, state = mock_server
        state.mode = "unauthorized"
        with pytest.raises(AuthError):
            run_baseline(
                cfg, examples(4), prompt_for("headline", "base"),
                RunLimits(attempts=3, max_in_flight=1, **FAST), tmp_path / "journal.jsonl",
            )

    def test_missing_credential_env_rejected(self, tmp_path, monkeypatch):
        monkeypatch.delenv("ABSENT_KEY_VAR", raising=False)
        cfg = EndpointConfig(url="http://127.0.0.1:9/x", model="m", api_key_env="ABSENT_KEY_VAR")
        with pytest.raises(AuthError, match="ABSENT_KEY_VAR"):
            run_baseline(
                cfg, examples(1), prompt_for("headline", "base"),
                RunLimits(attempts=1, **FAST), tmp_path / "journal.jsonl",
            )

    def test_task_inputs_never_mutated(self, mock_server, tmp_path):
        from luxgen.tasks import load_examples, save_examples

        cfg, _ = mock_server
        task_file = tmp_path / "task.jsonl"
        exs = examples(3)
        save_examples(exs, task_file)
        before = task_file.read_bytes()
        run_baseline(cfg, load_examples(task_file), prompt_for("headline", "base"),
                     RunLimits(attempts=2, **FAST), tmp_path / "journal.jsonl")
        assert task_file.read_bytes() == before
