"""Hermetic, deterministic stateful HTTP target used by the test suite.

Serves the bundled minipet spec's eight operations on one port and a
simulated line-coverage agent speaking ``wuppie-cov-1`` on a second port.
Three bugs are injected on purpose (see fixtures/minipet_coverage_layout.md):
B1 oversized pet name on update, B2 dangling pets, B3 a magic voucher token
guarded by nested prefix checks that light up distinct coverage bits.

The HTTP layer is a hand-rolled keep-alive loop rather than http.server:
campaigns hammer this target with thousands of requests per second and the
stdlib handler's header parsing dominates the latency budget.
"""

from __future__ import annotations

import base64
import errno
import json
import re
import socket
import threading
from urllib.parse import parse_qs, unquote, urlsplit

from .errors import PortInUse

TOTAL_BITS = 64

BIT_STORE_POST_ENTRY = 0
BIT_STORE_POST_CREATED = 1
BIT_STORE_GET_ENTRY = 2
BIT_STORE_GET_FOUND = 3
BIT_STORE_GET_MISSING = 4
BIT_VOUCHER_P1 = 5
BIT_VOUCHER_P2 = 6
BIT_VOUCHER_P3 = 7
BIT_VOUCHER_P5 = 8
BIT_VOUCHER_MAGIC = 9
BIT_STORE_PUT_ENTRY = 10
BIT_STORE_PUT_RENAMED = 11
BIT_STORE_PUT_MISSING = 12
BIT_STORE_DELETE_ENTRY = 13
BIT_STORE_DELETE_DONE = 14
BIT_STORE_DELETE_MISSING = 15
BIT_PET_POST_ENTRY = 16
BIT_PET_POST_CREATED = 17
BIT_PET_POST_INVALID = 18
BIT_PET_GET_ENTRY = 19
BIT_PET_GET_FOUND = 20
BIT_PET_GET_MISSING = 21
BIT_PET_GET_DANGLING = 22
BIT_PET_PUT_ENTRY = 23
BIT_PET_PUT_RENAMED = 24
BIT_PET_PUT_LONGNAME = 25
BIT_PET_PUT_MISSING = 26
BIT_PET_DELETE_ENTRY = 27
BIT_PET_DELETE_DONE = 28
BIT_PET_DELETE_MISSING = 29
BIT_UNROUTED = 30
BIT_VOUCHER_LEN = 31

_MAGIC_VOUCHER = "WUPPIE"
_VOUCHER_PREFIXES = (
    ("W", BIT_VOUCHER_P1),
    ("WU", BIT_VOUCHER_P2),
    ("WUP", BIT_VOUCHER_P3),
    ("WUPPI", BIT_VOUCHER_P5),
)

_ID_RE = re.compile(r"^/(store|pet)/([^/]+)$")

_REASONS = {
    200: "OK",
    201: "Created",
    400: "Bad Request",
    404: "Not Found",
    405: "Method Not Allowed",
    422: "Unprocessable Entity",
    500: "Internal Server Error",
}


class MiniPetState:
    """Stores, pets, a shared monotonically increasing id counter, coverage bits."""

    def __init__(self):
        self.lock = threading.Lock()
        self._clear()

    def _clear(self):
        self.stores: dict[str, dict] = {}
        self.pets: dict[str, dict] = {}
        self.next_id = 1
        self.coverage = bytearray(TOTAL_BITS // 8)

    def reset(self):
        with self.lock:
            self._clear()

    def issue_id(self) -> str:
        value = self.next_id
        self.next_id += 1
        return str(value)

    def hit(self, bit: int):
        self.coverage[bit // 8] |= 1 << (bit % 8)

    def snapshot_coverage(self, reset: bool) -> bytes:
        with self.lock:
            snap = bytes(self.coverage)
            if reset:
                self.coverage = bytearray(TOTAL_BITS // 8)
            return snap


def _parse_json(raw: bytes) -> dict:
    if not raw:
        return {}
    try:
        doc = json.loads(raw.decode("utf-8", "surrogateescape"))
    except (json.JSONDecodeError, UnicodeDecodeError):
        return {}
    return doc if isinstance(doc, dict) else {}


def _route_api(state: MiniPetState, method: str, target: str, raw_body: bytes):
    parts = urlsplit(target)
    path = unquote(parts.path)
    query = parse_qs(parts.query)
    body = _parse_json(raw_body)
    with state.lock:
        if path == "/store" and method == "POST":
            state.hit(BIT_STORE_POST_ENTRY)
            new_id = state.issue_id()
            state.stores[new_id] = {"id": new_id, "name": ""}
            state.hit(BIT_STORE_POST_CREATED)
            return 201, {"id": new_id}
        if path == "/pet" and method == "POST":
            state.hit(BIT_PET_POST_ENTRY)
            store_id = body.get("store_id")
            if not isinstance(store_id, str) or not store_id:
                state.hit(BIT_PET_POST_INVALID)
                return 422, {"error": "store_id required"}
            # bug B2 (half 1): the store is never checked, pets can dangle
            new_id = state.issue_id()
            name = body.get("name")
            state.pets[new_id] = {
                "id": new_id,
                "store_id": store_id,
                "name": name if isinstance(name, str) else "",
            }
            state.hit(BIT_PET_POST_CREATED)
            return 201, {"id": new_id}

        match = _ID_RE.match(path)
        if match:
            if match.group(1) == "store":
                return _route_store(state, method, match.group(2), query, body)
            return _route_pet(state, method, match.group(2), body)

        state.hit(BIT_UNROUTED)
        if path in ("/store", "/pet"):
            return 405, {"error": "method not allowed"}
        return 404, {"error": "no such path"}


def _route_store(state: MiniPetState, method: str, store_id: str, query: dict, body: dict):
    if method == "GET":
        state.hit(BIT_STORE_GET_ENTRY)
        voucher = query.get("voucher", [""])[0]
        matched = 0
        for prefix, bit in _VOUCHER_PREFIXES:
            if not voucher.startswith(prefix):
                break
            state.hit(bit)
            matched += 1
        if matched == len(_VOUCHER_PREFIXES):
            # the equality check short-circuits on length, like a strcmp
            if len(voucher) == len(_MAGIC_VOUCHER):
                state.hit(BIT_VOUCHER_LEN)
                if voucher == _MAGIC_VOUCHER:  # bug B3
                    state.hit(BIT_VOUCHER_MAGIC)
                    return 500, {"error": "voucher handling crashed"}
        store = state.stores.get(store_id)
        if store is None:
            state.hit(BIT_STORE_GET_MISSING)
            return 404, {"error": "no such store"}
        state.hit(BIT_STORE_GET_FOUND)
        return 200, {"id": store["id"], "name": store["name"]}
    if method == "PUT":
        state.hit(BIT_STORE_PUT_ENTRY)
        store = state.stores.get(store_id)
        if store is None:
            state.hit(BIT_STORE_PUT_MISSING)
            return 404, {"error": "no such store"}
        name = body.get("name")
        if isinstance(name, str):
            store["name"] = name
        state.hit(BIT_STORE_PUT_RENAMED)
        return 200, {"id": store["id"]}
    if method == "DELETE":
        state.hit(BIT_STORE_DELETE_ENTRY)
        if store_id not in state.stores:
            state.hit(BIT_STORE_DELETE_MISSING)
            return 404, {"error": "no such store"}
        # bug B2 (half 2): pets of the store are left dangling
        del state.stores[store_id]
        state.hit(BIT_STORE_DELETE_DONE)
        return 200, {}
    state.hit(BIT_UNROUTED)
    return 405, {"error": "method not allowed"}


def _route_pet(state: MiniPetState, method: str, pet_id: str, body: dict):
    if method == "GET":
        state.hit(BIT_PET_GET_ENTRY)
        pet = state.pets.get(pet_id)
        if pet is None:
            state.hit(BIT_PET_GET_MISSING)
            return 404, {"error": "no such pet"}
        if pet["store_id"] not in state.stores:  # bug B2: dangling pet
            state.hit(BIT_PET_GET_DANGLING)
            return 500, {"error": "pet store lookup crashed"}
        state.hit(BIT_PET_GET_FOUND)
        return 200, {"id": pet["id"], "store_id": pet["store_id"], "name": pet["name"]}
    if method == "PUT":
        state.hit(BIT_PET_PUT_ENTRY)
        pet = state.pets.get(pet_id)
        if pet is None:
            state.hit(BIT_PET_PUT_MISSING)
            return 404, {"error": "no such pet"}
        name = body.get("name")
        if isinstance(name, str):
            if len(name.encode("utf-8", "surrogateescape")) > 100:  # bug B1
                state.hit(BIT_PET_PUT_LONGNAME)
                return 500, {"error": "name buffer overflow"}
            pet["name"] = name
        state.hit(BIT_PET_PUT_RENAMED)
        return 200, {"id": pet["id"]}
    if method == "DELETE":
        state.hit(BIT_PET_DELETE_ENTRY)
        if pet_id not in state.pets:
            state.hit(BIT_PET_DELETE_MISSING)
            return 404, {"error": "no such pet"}
        del state.pets[pet_id]
        state.hit(BIT_PET_DELETE_DONE)
        return 200, {}
    state.hit(BIT_UNROUTED)
    return 405, {"error": "method not allowed"}


def _route_agent(state: MiniPetState, method: str, target: str, raw_body: bytes):
    parts = urlsplit(target)
    if parts.path != "/coverage" or method != "GET":
        return 404, {"error": "no such path"}
    reset = parse_qs(parts.query).get("reset", ["false"])[0].lower() == "true"
    bitmap = state.snapshot_coverage(reset)
    return 200, {
        "format": "wuppie-cov-1",
        "total_bits": TOTAL_BITS,
        "bitmap": base64.b64encode(bitmap).decode(),
    }


class _RawHTTPServer:
    """Minimal HTTP/1.1 keep-alive server: request line, headers, fixed body."""

    def __init__(self, port: int, route):
        self._route = route
        try:
            self._listener = socket.create_server(("127.0.0.1", port), backlog=16)
        except OSError as exc:
            if exc.errno == errno.EADDRINUSE:
                raise PortInUse(f"port {port} in use") from exc
            raise
        self.port = self._listener.getsockname()[1]
        self._running = True
        self._conns: set[socket.socket] = set()
        self._lock = threading.Lock()
        self._accept_thread = threading.Thread(target=self._accept_loop, daemon=True)
        self._accept_thread.start()

    def _accept_loop(self):
        while self._running:
            try:
                conn, _addr = self._listener.accept()
            except OSError:
                return
            conn.setsockopt(socket.IPPROTO_TCP, socket.TCP_NODELAY, 1)
            with self._lock:
                self._conns.add(conn)
            threading.Thread(target=self._serve_connection, args=(conn,), daemon=True).start()

    def _serve_connection(self, conn: socket.socket):
        rfile = conn.makefile("rb", buffering=65536)
        try:
            while self._running:
                line = rfile.readline(65536)
                if not line or line in (b"\r\n", b"\n"):
                    if not line:
                        return
                    continue
                try:
                    method, target, _version = line.decode("latin-1").split(None, 2)
                except ValueError:
                    return
                content_length = 0
                close_requested = False
                while True:
                    header = rfile.readline(65536)
                    if header in (b"\r\n", b"\n", b""):
                        break
                    name, _, value = header.decode("latin-1").partition(":")
                    lowered = name.lower()
                    if lowered == "content-length":
                        try:
                            content_length = int(value.strip())
                        except ValueError:
                            content_length = 0
                    elif lowered == "connection" and value.strip().lower() == "close":
                        close_requested = True
                body = rfile.read(content_length) if content_length > 0 else b""
                status, payload = self._route(method.upper(), target, body)
                data = json.dumps(payload).encode() if payload is not None else b""
                reason = _REASONS.get(status, "OK")
                head = (
                    f"HTTP/1.1 {status} {reason}\r\n"
                    f"Content-Type: application/json\r\n"
                    f"Content-Length: {len(data)}\r\n\r\n"
                ).encode("latin-1")
                conn.sendall(head + data)
                if close_requested:
                    return
        except OSError:
            return
        finally:
            rfile.close()
            try:
                conn.close()
            except OSError:
                pass
            with self._lock:
                self._conns.discard(conn)

    def stop(self):
        self._running = False
        try:
            self._listener.close()
        except OSError:
            pass
        with self._lock:
            conns = list(self._conns)
        for conn in conns:
            try:
                conn.shutdown(socket.SHUT_RDWR)
            except OSError:
                pass
            try:
                conn.close()
            except OSError:
                pass
        self._accept_thread.join(timeout=5)


class MockHandle:
    """A running minipet instance: API server and coverage agent, one state."""

    def __init__(self, api_server: _RawHTTPServer, agent_server: _RawHTTPServer, state: MiniPetState):
        self._api_server = api_server
        self._agent_server = agent_server
        self.state = state
        self.api_port = api_server.port
        self.agent_port = agent_server.port
        self.base_url = f"http://127.0.0.1:{self.api_port}"
        self.agent_url = f"http://127.0.0.1:{self.agent_port}"

    def reset(self):
        self.state.reset()

    def stop(self):
        self._api_server.stop()
        self._agent_server.stop()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def start_mock(api_port: int = 0, agent_port: int = 0, rng_seed: int = 0) -> MockHandle:
    """Start the mock target; port 0 picks a free ephemeral port."""
    del rng_seed  # behaviour is fully deterministic, kept for interface parity
    state = MiniPetState()
    api_server = _RawHTTPServer(api_port, lambda m, t, b: _route_api(state, m, t, b))
    try:
        agent_server = _RawHTTPServer(agent_port, lambda m, t, b: _route_agent(state, m, t, b))
    except PortInUse:
        api_server.stop()
        raise
    return MockHandle(api_server, agent_server, state)


def reset_state(handle: MockHandle):
    handle.reset()


class MockProcess:
    """Out-of-process minipet; heavy campaigns should prefer this over the
    in-process handle so target CPU time does not serialise with the fuzzer."""

    def __init__(self, proc, base_url: str, agent_url: str):
        self._proc = proc
        self.base_url = base_url
        self.agent_url = agent_url

    def stop(self):
        self._proc.terminate()
        try:
            self._proc.wait(timeout=5)
        except Exception:
            self._proc.kill()
            self._proc.wait(timeout=5)

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.stop()


def spawn_mock(api_port: int = 0, agent_port: int = 0) -> MockProcess:
    import re as _re
    import subprocess
    import sys

    proc = subprocess.Popen(
        [sys.executable, "-m", "restfuzz.minipet", "--api-port", str(api_port), "--agent-port", str(agent_port)],
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
    )
    line = proc.stdout.readline()
    match = _re.search(r"api on (\S+) agent on (\S+)", line)
    if not match:
        proc.kill()
        raise RuntimeError(f"mock process failed to start: {line!r}")
    return MockProcess(proc, match.group(1), match.group(2))


def main(argv=None) -> int:
    import argparse

    parser = argparse.ArgumentParser(description="Serve the minipet mock target")
    parser.add_argument("--api-port", type=int, default=8080)
    parser.add_argument("--agent-port", type=int, default=8081)
    args = parser.parse_args(argv)
    handle = start_mock(args.api_port, args.agent_port)
    print(f"minipet api on {handle.base_url} agent on {handle.agent_url}", flush=True)
    try:
        threading.Event().wait()
    except KeyboardInterrupt:
        pass
    finally:
        handle.stop()
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
