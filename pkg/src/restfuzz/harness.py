"""Render templated requests, execute sequences over HTTP, check responses.

The HTTP client and the response checker together mediate between the fuzzer
and the target. Execution is strictly serial: one sequence at a time, one
request at a time, bindings from earlier responses feeding later requests.
Uses http.client directly to keep per-request overhead low on hot campaigns.
"""

from __future__ import annotations

import http.client
import json
import logging
import socket
import time
from dataclasses import dataclass, field
from enum import Enum
from urllib.parse import quote_from_bytes, urlsplit

from .corpus import Literal, Reference, RequestSequence, iter_body_leaves, get_body_leaf
from .openapi import ApiSpec, expected_statuses, example_value

logger = logging.getLogger(__name__)


class Verdict(Enum):
    EXPECTED_STATUS = "ExpectedStatus"
    UNEXPECTED_STATUS = "UnexpectedStatus"
    SERVER_ERROR = "ServerError"
    TRANSPORT_FAILURE = "TransportFailure"


@dataclass
class ClientConfig:
    base_url: str
    timeout_ms: int = 2000
    auth_header_name: str | None = None
    auth_header_value: str | None = None


@dataclass
class ConcreteRequest:
    method: str
    url: str  # absolute, with substituted path and query
    target: str  # the request target (path plus query) actually sent
    headers: list[tuple[str, str]] = field(default_factory=list)
    body: bytes | None = None


@dataclass
class ResponseRecord:
    request_index: int
    path: str  # template path of the executed operation
    method: str
    status: int | None
    body: bytes
    latency_ms: float
    transport: str  # ok | timeout | connection_closed

    @property
    def ok(self) -> bool:
        return self.transport == "ok"


def flatten_json(value, prefix: str = "", out: dict[str, str] | None = None) -> dict[str, str]:
    """Dotted-path view of a JSON value with stringified scalar leaves."""
    if out is None:
        out = {}
    if isinstance(value, dict):
        for key, sub in value.items():
            flatten_json(sub, f"{prefix}.{key}" if prefix else str(key), out)
    elif isinstance(value, list):
        for i, sub in enumerate(value):
            flatten_json(sub, f"{prefix}.{i}" if prefix else str(i), out)
    else:
        if isinstance(value, bool):
            rendered = "true" if value else "false"
        elif value is None:
            rendered = "null"
        else:
            rendered = str(value)
        out[prefix] = rendered
    return out


def _strip_header_controls(value: str) -> str:
    return "".join(ch for ch in value if ch >= " " and ch != "\x7f")


def _resolve(value, env: dict[int, dict[str, str]], schema, rng) -> bytes:
    if isinstance(value, Literal):
        return value.value
    bindings = env.get(value.source_index, {})
    resolved = bindings.get(value.field_path)
    if resolved is None:
        logger.warning(
            "unresolvable reference to request %d field %r; using schema default",
            value.source_index,
            value.field_path,
        )
        if schema is not None:
            return example_value(schema, rng)
        return b"a"
    return resolved.encode("utf-8", "surrogateescape")


def _body_to_json(node, env, op, rng, prefix: str = ""):
    if isinstance(node, dict):
        return {
            name: _body_to_json(sub, env, op, rng, f"{prefix}.{name}" if prefix else name)
            for name, sub in node.items()
        }
    if isinstance(node, list):
        return [
            _body_to_json(sub, env, op, rng, f"{prefix}.{i}" if prefix else str(i))
            for i, sub in enumerate(node)
        ]
    schema = None
    if op is not None:
        descriptor = next(
            (p for p in op.parameters if p.location == "body" and p.name == prefix), None
        )
        schema = descriptor.schema if descriptor else None
    raw = _resolve(node, env, schema, rng)
    return raw.decode("utf-8", "surrogateescape")


def render_request(
    req,
    env: dict[int, dict[str, str]],
    spec: ApiSpec | None,
    config: ClientConfig,
    rng,
) -> ConcreteRequest:
    """Substitute literals and resolved references into a concrete request.

    Unresolvable references fall back to the schema default and log a warning.
    Parameters the spec does not know are sent as query parameters.
    """
    op = None
    if spec is not None:
        try:
            op = spec.find(req.path, req.method)
        except Exception:
            op = None

    path = req.path
    query_parts: list[str] = []
    headers: list[tuple[str, str]] = []
    for name, value in req.params.items():
        descriptor = op.parameter(name) if op is not None else None
        schema = descriptor.schema if descriptor else None
        raw = _resolve(value, env, schema, rng)
        location = descriptor.location if descriptor else "query"
        if location == "path":
            path = path.replace("{" + name + "}", quote_from_bytes(raw, safe=b""))
        elif location == "header":
            headers.append((name, _strip_header_controls(raw.decode("utf-8", "surrogateescape"))))
        else:
            query_parts.append(
                quote_from_bytes(name.encode(), safe=b"") + "=" + quote_from_bytes(raw, safe=b"")
            )

    # any {param} left without a parameter value gets the default filler
    while "{" in path and "}" in path:
        start = path.index("{")
        end = path.index("}", start)
        path = path[:start] + "a" + path[end + 1 :]

    body = None
    if req.body is not None:
        body = json.dumps(_body_to_json(req.body, env, op, rng), ensure_ascii=True).encode()
        headers.append(("Content-Type", "application/json"))
    if config.auth_header_name and config.auth_header_value:
        headers.append((config.auth_header_name, config.auth_header_value))

    target = path
    if query_parts:
        target += "?" + "&".join(query_parts)
    url = config.base_url.rstrip("/") + target
    return ConcreteRequest(method=req.method, url=url, target=target, headers=headers, body=body)


class _NoDelayConnection(http.client.HTTPConnection):
    def connect(self):
        super().connect()
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)


class _NoDelayHTTPSConnection(http.client.HTTPSConnection):
    def connect(self):
        super().connect()
        self.sock.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)


class HttpClient:
    """Single-flight HTTP/1.1 client with a persistent connection."""

    def __init__(self, config: ClientConfig):
        self.config = config
        parts = urlsplit(config.base_url)
        self._https = parts.scheme == "https"
        self._host = parts.hostname or "127.0.0.1"
        self._port = parts.port or (443 if self._https else 80)
        self._conn: http.client.HTTPConnection | None = None

    def _connection(self) -> http.client.HTTPConnection:
        if self._conn is None:
            timeout = self.config.timeout_ms / 1000.0
            cls = _NoDelayHTTPSConnection if self._https else _NoDelayConnection
            self._conn = cls(self._host, self._port, timeout=timeout)
        return self._conn

    def close(self):
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def _send_once(self, concrete: ConcreteRequest) -> tuple[int, bytes]:
        conn = self._connection()
        conn.putrequest(concrete.method, concrete.target or "/", skip_accept_encoding=True)
        has_body = concrete.body is not None
        for name, value in concrete.headers:
            conn.putheader(name, value)
        if has_body:
            conn.putheader("Content-Length", str(len(concrete.body)))
        conn.endheaders(concrete.body if has_body else None)
        response = conn.getresponse()
        data = response.read()
        return response.status, data

    def send(self, concrete: ConcreteRequest) -> tuple[int, bytes]:
        """Returns (status, body); raises socket/HTTP errors on transport failure."""
        try:
            return self._send_once(concrete)
        except (http.client.RemoteDisconnected, BrokenPipeError, ConnectionResetError):
            # a stale keep-alive connection gets one fresh retry
            self.close()
            return self._send_once(concrete)


def execute_sequence(
    seq: RequestSequence,
    client: HttpClient,
    spec: ApiSpec | None,
    rng,
) -> list[ResponseRecord]:
    """Send all requests in order; abort the remainder on transport failure."""
    records: list[ResponseRecord] = []
    env: dict[int, dict[str, str]] = {}
    for i, req in enumerate(seq.requests):
        concrete = render_request(req, env, spec, client.config, rng)
        start = time.perf_counter()
        try:
            status, body = client.send(concrete)
        except (socket.timeout, TimeoutError):
            client.close()
            records.append(
                ResponseRecord(i, req.path, req.method, None, b"", _ms_since(start), "timeout")
            )
            break
        except (OSError, http.client.HTTPException):
            client.close()
            records.append(
                ResponseRecord(
                    i, req.path, req.method, None, b"", _ms_since(start), "connection_closed"
                )
            )
            break
        latency = _ms_since(start)
        records.append(ResponseRecord(i, req.path, req.method, status, body, latency, "ok"))
        if body:
            try:
                parsed = json.loads(body.decode("utf-8", "surrogateescape"))
            except (json.JSONDecodeError, UnicodeDecodeError):
                parsed = None
            if isinstance(parsed, (dict, list)):
                env[i] = flatten_json(parsed)
    return records


def _ms_since(start: float) -> float:
    return (time.perf_counter() - start) * 1000.0


def check_response(spec: ApiSpec, record: ResponseRecord, mode: str = "strict") -> Verdict:
    """Classify one response against the spec.

    ``strict`` flags any status not listed for the operation; ``server-error``
    flags 5xx only.
    """
    if not record.ok:
        return Verdict.TRANSPORT_FAILURE
    if 500 <= record.status <= 599:
        return Verdict.SERVER_ERROR
    if mode == "server-error":
        return Verdict.EXPECTED_STATUS
    listed, wildcard = expected_statuses(spec, record.path, record.method)
    if wildcard or record.status in listed:
        return Verdict.EXPECTED_STATUS
    return Verdict.UNEXPECTED_STATUS
