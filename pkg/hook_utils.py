"""
External classifier hooks.

A hook replaces the builtin threshold classifier. Both transports exchange
the same JSON bodies:

    request  {"t": int, "j": int, "s": number, "N": number, "h": number}
    reply    {"decision": "wanted" | "other"}

Exec hooks are spawned once per run and speak one JSON line per query over
stdin/stdout. Http hooks receive each request as a POST. Any transport or
protocol failure raises ``ForgeError('E-HOOK-FAILURE')`` carrying the step.
"""

import json
import queue
import shlex
import subprocess
import threading
from typing import Any, Dict, Optional, Union

import requests
import structlog
from jsonschema import ValidationError, validate
from retrying import retry

from config import Config
from diagnostics import ForgeError
from metrics import hook_calls_counter, hook_failures_counter
from simkernel import Classification, Decision, SimParams, TargetSpec, make_classification, noise_at

logger = structlog.get_logger(__name__)

HOOK_REQUEST_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["t", "j", "s", "N", "h"],
    "properties": {
        "t": {"type": "integer", "minimum": 0},
        "j": {"type": "integer", "minimum": 0},
        "s": {"type": "number"},
        "N": {"type": "number"},
        "h": {"type": "number"}
    }
}

HOOK_REPLY_SCHEMA = {
    "type": "object",
    "additionalProperties": False,
    "required": ["decision"],
    "properties": {"decision": {"enum": [d.value for d in Decision]}}
}


def build_request(params: SimParams, t: int, target: TargetSpec) -> Dict[str, Any]:
    return {"t": t, "j": target.j, "s": target.s, "N": noise_at(params, t), "h": params.h}


def parse_reply(payload: Any) -> Decision:
    """Validate a decoded reply body; raises ValueError when malformed"""
    try:
        validate(instance=payload, schema=HOOK_REPLY_SCHEMA)
    except ValidationError as e:
        raise ValueError(f"malformed hook reply: {e.message}")
    return Decision(payload['decision'])


class _Hook:
    kind = 'hook'

    def __init__(self, target: str):
        self.target = target
        self.queries = 0

    def _fail(self, message: str, t: Optional[int]) -> ForgeError:
        hook_failures_counter.labels(kind=self.kind).inc()
        logger.error("Classifier hook failed", kind=self.kind, target=self.target, step=t, error=message)
        return ForgeError('E-HOOK-FAILURE', message, subject=self.target, step=t)

    def decide(self, request: Dict[str, Any]) -> Decision:
        raise NotImplementedError

    def __call__(self, params: SimParams, t: int, target: TargetSpec) -> Classification:
        request = build_request(params, t, target)
        hook_calls_counter.labels(kind=self.kind).inc()
        self.queries += 1
        decision = self.decide(request)
        return make_classification(t, target, request['N'], decision)

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        return False


class ExecClassifierHook(_Hook):
    """Line-oriented JSON hook process, spawned once per run"""

    kind = 'exec'

    def __init__(self, command: str, timeout: Optional[float] = None):
        super().__init__(command)
        self.timeout = Config.HOOK_EXEC_TIMEOUT if timeout is None else timeout
        self.process: Optional[subprocess.Popen] = None
        self._lines: "queue.Queue[Union[str, UnicodeDecodeError, None]]" = queue.Queue()
        self._last_t: Optional[int] = None

    def _pump(self) -> None:
        try:
            for line in self.process.stdout:
                self._lines.put(line)
        except UnicodeDecodeError as e:
            self._lines.put(e)
            return
        self._lines.put(None)

    def __enter__(self):
        try:
            self.process = subprocess.Popen(
                shlex.split(self.target),
                stdin=subprocess.PIPE,
                stdout=subprocess.PIPE,
                text=True,
                encoding='utf-8',
                bufsize=1,
            )
        except OSError as e:
            raise self._fail(f"cannot start hook: {e}", None)
        threading.Thread(target=self._pump, daemon=True).start()
        logger.info("Exec hook started", command=self.target, pid=self.process.pid)
        return self

    def decide(self, request: Dict[str, Any]) -> Decision:
        t = request['t']
        self._last_t = t
        try:
            self.process.stdin.write(json.dumps(request) + '\n')
            self.process.stdin.flush()
        except (BrokenPipeError, OSError) as e:
            raise self._fail(f"hook stdin closed: {e}", t)
        try:
            line = self._lines.get(timeout=self.timeout)
        except queue.Empty:
            raise self._fail(f"no reply within {self.timeout}s", t)
        if line is None:
            raise self._fail(f"hook exited early with status {self.process.poll()}", t)
        if isinstance(line, UnicodeDecodeError):
            raise self._fail(f"malformed reply: not UTF-8 ({line.reason})", t)
        try:
            return parse_reply(json.loads(line))
        except (json.JSONDecodeError, ValueError) as e:
            raise self._fail(f"malformed reply {line.strip()!r}: {e}", t)

    def __exit__(self, exc_type, exc, tb):
        if self.process is None:
            return False
        try:
            self.process.stdin.close()
        except OSError:
            pass
        try:
            status = self.process.wait(timeout=self.timeout)
        except subprocess.TimeoutExpired:
            self.process.kill()
            status = self.process.wait()
            if exc_type is None:
                raise self._fail("hook did not exit after end of input", self._last_t)
        logger.info("Exec hook finished", command=self.target, status=status, queries=self.queries)
        if status != 0 and exc_type is None:
            raise self._fail(f"hook exited with status {status}", self._last_t)
        return False


def _is_connection_error(exception: Exception) -> bool:
    return isinstance(exception, requests.exceptions.ConnectionError)


class HttpClassifierHook(_Hook):
    """POSTs each query to a REST endpoint"""

    kind = 'http'

    def __init__(self, url: str, timeout: Optional[float] = None):
        super().__init__(url)
        self.timeout = Config.HOOK_HTTP_TIMEOUT if timeout is None else timeout
        self.session: Optional[requests.Session] = None

    def __enter__(self):
        self.session = requests.Session()
        return self

    def __exit__(self, exc_type, exc, tb):
        if self.session is not None:
            self.session.close()
            self.session = None
        return False

    @retry(retry_on_exception=_is_connection_error, **Config.get_hook_retry_config())
    def _post(self, request: Dict[str, Any]) -> requests.Response:
        poster = self.session or requests
        return poster.post(self.target, json=request, timeout=self.timeout)

    def decide(self, request: Dict[str, Any]) -> Decision:
        t = request['t']
        try:
            response = self._post(request)
        except requests.exceptions.RequestException as e:
            raise self._fail(f"request failed: {e}", t)
        if response.status_code != 200:
            raise self._fail(f"HTTP {response.status_code}", t)
        try:
            return parse_reply(response.json())
        except ValueError as e:
            raise self._fail(str(e), t)
