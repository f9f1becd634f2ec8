"""Endpoint- and line-coverage maps, the agent wire protocol, and novelty.

Endpoint coverage is a growable bit vector over (path, method, status)
triples: pre-seeded with every status listed in the spec, extended on the fly
when unlisted statuses show up. Line coverage is a fixed-size bitmap fetched
from a coverage agent over HTTP (`wuppie-cov-1`), reset after every sequence
so each fetch is a per-sequence delta.
"""

from __future__ import annotations

import base64
import binascii
import http.client
import json
import socket
from dataclasses import dataclass, field
from urllib.parse import urlsplit

from .errors import AgentUnreachable, ProtocolError, TotalBitsChanged
from .harness import ResponseRecord
from .openapi import ApiSpec

COVERAGE_FORMAT = "wuppie-cov-1"

Triple = tuple[str, str, int]


class EndpointCoverageMap:
    def __init__(self, spec: ApiSpec | None = None):
        self.registry: list[Triple] = []
        self.bits: list[bool] = []
        self._index: dict[Triple, int] = {}
        self.listed_count = 0
        if spec is not None:
            for op in spec.operations:
                for resp in op.responses:
                    if resp.status is None:
                        continue  # the wildcard is not a concrete triple
                    self.endpoint_bit(op.path, op.method, resp.status)
            self.listed_count = len(self.registry)

    def endpoint_bit(self, path: str, method: str, status: int) -> int:
        """Index for a triple, appending a new zero bit the first time."""
        triple = (path, method.upper(), status)
        idx = self._index.get(triple)
        if idx is None:
            idx = len(self.registry)
            self.registry.append(triple)
            self.bits.append(False)
            self._index[triple] = idx
        return idx

    def record_responses(self, records: list[ResponseRecord]) -> set[int]:
        """Set bits for each delivered response; return all indices touched."""
        touched: set[int] = set()
        for record in records:
            if not record.ok:
                continue
            idx = self.endpoint_bit(record.path, record.method, record.status)
            self.bits[idx] = True
            touched.add(idx)
        return touched

    def response_coverage(self) -> tuple[int, int]:
        """(set bits over listed plus appended triples, count of listed triples)."""
        return sum(self.bits), self.listed_count

    def set_indices(self) -> set[int]:
        return {i for i, bit in enumerate(self.bits) if bit}


@dataclass
class LineCoverageMap:
    total_bits: int
    bits: bytes

    def set_indices(self) -> set[int]:
        out = set()
        for i in range(self.total_bits):
            if self.bits[i // 8] & (1 << (i % 8)):
                out.add(i)
        return out

    def popcount(self) -> int:
        return sum(bin(b).count("1") for b in self.bits)


@dataclass
class Novelty:
    endpoint: set[int] = field(default_factory=set)
    line: set[int] = field(default_factory=set)

    @property
    def total(self) -> int:
        return len(self.endpoint) + len(self.line)


@dataclass
class CoverageSnapshot:
    endpoint: set[int] = field(default_factory=set)
    line: LineCoverageMap | None = None
    novelty: Novelty | None = None

    def bit_index_set(self) -> list[tuple[str, int]]:
        """Canonical tagged view of every bit this snapshot touched."""
        tagged = [("e", i) for i in self.endpoint]
        if self.line is not None:
            tagged.extend(("l", i) for i in self.line.set_indices())
        return sorted(tagged)


def novelty(global_endpoint: set[int], global_line: set[int], snapshot: CoverageSnapshot) -> Novelty:
    """Indices in the snapshot that the campaign has not seen; updates globals."""
    new_endpoint = snapshot.endpoint - global_endpoint
    new_line: set[int] = set()
    if snapshot.line is not None:
        new_line = snapshot.line.set_indices() - global_line
    global_endpoint |= new_endpoint
    global_line |= new_line
    result = Novelty(endpoint=new_endpoint, line=new_line)
    snapshot.novelty = result
    return result


class CoverageAgentClient:
    """Fetch/reset client for the ``wuppie-cov-1`` protocol."""

    def __init__(self, agent_url: str, timeout_ms: int = 2000):
        self.agent_url = agent_url
        parts = urlsplit(agent_url)
        self._host = parts.hostname or "127.0.0.1"
        self._port = parts.port or 80
        self._timeout = timeout_ms / 1000.0
        self._conn: http.client.HTTPConnection | None = None
        self.expected_total_bits: int | None = None

    def close(self):
        if self._conn is not None:
            self._conn.close()
            self._conn = None

    def _request(self, reset: bool) -> bytes:
        from .harness import _NoDelayConnection

        target = f"/coverage?reset={'true' if reset else 'false'}"
        for attempt in (0, 1):
            if self._conn is None:
                self._conn = _NoDelayConnection(self._host, self._port, timeout=self._timeout)
            try:
                self._conn.request("GET", target)
                response = self._conn.getresponse()
                body = response.read()
                if response.status != 200:
                    raise ProtocolError(f"agent returned HTTP {response.status}")
                return body
            except ProtocolError:
                raise
            except (socket.timeout, TimeoutError, OSError, http.client.HTTPException) as exc:
                self.close()
                if attempt == 1:
                    raise AgentUnreachable(f"{self.agent_url}: {exc}") from exc
        raise AgentUnreachable(self.agent_url)

    def fetch(self, reset: bool = True) -> LineCoverageMap:
        body = self._request(reset)
        try:
            payload = json.loads(body)
        except json.JSONDecodeError as exc:
            raise ProtocolError(f"agent payload is not JSON: {exc}") from exc
        if not isinstance(payload, dict) or payload.get("format") != COVERAGE_FORMAT:
            raise ProtocolError(f"unexpected payload format: {payload!r:.120}")
        total_bits = payload.get("total_bits")
        if not isinstance(total_bits, int) or total_bits <= 0:
            raise ProtocolError(f"bad total_bits: {total_bits!r}")
        try:
            bitmap = base64.b64decode(payload.get("bitmap", ""), validate=True)
        except (binascii.Error, TypeError) as exc:
            raise ProtocolError(f"bitmap is not valid base64: {exc}") from exc
        expected_len = (total_bits + 7) // 8
        if len(bitmap) != expected_len:
            raise ProtocolError(
                f"bitmap length {len(bitmap)} != ceil(total_bits/8) = {expected_len}"
            )
        if self.expected_total_bits is None:
            self.expected_total_bits = total_bits
        elif total_bits != self.expected_total_bits:
            raise TotalBitsChanged(
                f"total_bits changed from {self.expected_total_bits} to {total_bits}"
            )
        return LineCoverageMap(total_bits=total_bits, bits=bitmap)


def fetch_line_coverage(agent_url: str, reset: bool = True, timeout_ms: int = 2000) -> LineCoverageMap:
    client = CoverageAgentClient(agent_url, timeout_ms)
    try:
        return client.fetch(reset)
    finally:
        client.close()
