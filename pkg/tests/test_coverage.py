import base64
import json

import pytest

from restfuzz.coverage import (
    CoverageAgentClient,
    CoverageSnapshot,
    EndpointCoverageMap,
    LineCoverageMap,
    fetch_line_coverage,
    novelty,
)
from restfuzz.errors import AgentUnreachable, ProtocolError, TotalBitsChanged
from restfuzz.harness import ResponseRecord


def _rec(path, method, status, transport="ok"):
    return ResponseRecord(0, path, method, status, b"", 1.0, transport)


def test_registry_preseeded_in_document_order(spec):
    cmap = EndpointCoverageMap(spec)
    assert cmap.listed_count == 16
    assert cmap.registry[0] == ("/store", "POST", 201)
    assert cmap.registry[1] == ("/store", "POST", 400)
    assert cmap.registry[2] == ("/store/{id}", "GET", 200)
    assert cmap.endpoint_bit("/store/{id}", "GET", 200) == 2


def test_unlisted_triple_appends_idempotently(spec):
    cmap = EndpointCoverageMap(spec)
    first = cmap.endpoint_bit("/store/{id}", "GET", 418)
    assert first == 16
    assert cmap.endpoint_bit("/store/{id}", "GET", 418) == first
    assert len(cmap.registry) == 17


def test_record_responses_sets_bits_and_reports_touched(spec):
    cmap = EndpointCoverageMap(spec)
    records = [
        _rec("/store", "POST", 201),
        _rec("/pet", "POST", 201),
        _rec("/pet/{id}", "GET", 200),
    ]
    touched = cmap.record_responses(records)
    assert len(touched) == 3
    assert touched == cmap.set_indices()
    again = cmap.record_responses(records)
    assert again == touched
    assert cmap.set_indices() == touched


def test_transport_failures_set_no_bits(spec):
    cmap = EndpointCoverageMap(spec)
    records = [_rec("/store", "POST", None, transport="timeout")]
    assert cmap.record_responses(records) == set()
    assert cmap.set_indices() == set()


def test_response_coverage_fresh_is_0_of_16(spec):
    cmap = EndpointCoverageMap(spec)
    assert cmap.response_coverage() == (0, 16)


def test_response_coverage_counts_appended_bits(spec):
    cmap = EndpointCoverageMap(spec)
    cmap.record_responses([_rec("/store", "POST", 201), _rec("/store/{id}", "GET", 418)])
    covered, denominator = cmap.response_coverage()
    assert covered == 2
    assert denominator == 16


def test_novelty_first_sequence_is_all_bits(spec):
    seen_e, seen_l = set(), set()
    snapshot = CoverageSnapshot(endpoint={1, 2, 3})
    result = novelty(seen_e, seen_l, snapshot)
    assert result.endpoint == {1, 2, 3}
    assert snapshot.novelty is result
    replay = novelty(seen_e, seen_l, CoverageSnapshot(endpoint={1, 2, 3}))
    assert replay.total == 0


def test_novelty_singleton(spec):
    seen_e, seen_l = {0, 1}, set()
    result = novelty(seen_e, seen_l, CoverageSnapshot(endpoint={1, 9}))
    assert result.endpoint == {9}
    assert seen_e == {0, 1, 9}


def test_novelty_line_bits():
    bitmap = LineCoverageMap(total_bits=16, bits=bytes([0b00000101, 0]))
    result = novelty(set(), {0}, CoverageSnapshot(endpoint=set(), line=bitmap))
    assert result.line == {2}


def test_line_map_set_indices_lsb_first():
    bitmap = LineCoverageMap(total_bits=10, bits=bytes([0b00000001, 0b00000010]))
    assert bitmap.set_indices() == {0, 9}


# --- agent protocol against the live mock -----------------------------------


def test_fetch_reset_cycle(mock_target):
    import http.client

    conn = http.client.HTTPConnection("127.0.0.1", mock_target.api_port)
    conn.request("POST", "/store")
    conn.getresponse().read()
    conn.close()

    cov = fetch_line_coverage(mock_target.agent_url, reset=True)
    assert cov.total_bits == 64
    assert cov.set_indices() == {0, 1}
    empty = fetch_line_coverage(mock_target.agent_url, reset=False)
    assert empty.popcount() == 0


def test_agent_unreachable():
    with pytest.raises(AgentUnreachable):
        fetch_line_coverage("http://127.0.0.1:9", timeout_ms=200)


def test_total_bits_change_detected(mock_target):
    client = CoverageAgentClient(mock_target.agent_url)
    client.fetch()
    client.expected_total_bits = 128
    with pytest.raises(TotalBitsChanged):
        client.fetch()
    client.close()


@pytest.mark.parametrize(
    "payload",
    [
        "not json",
        json.dumps({"format": "other", "total_bits": 8, "bitmap": "AA=="}),
        json.dumps({"format": "wuppie-cov-1", "total_bits": 0, "bitmap": ""}),
        json.dumps({"format": "wuppie-cov-1", "total_bits": 64, "bitmap": "AA=="}),
        json.dumps({"format": "wuppie-cov-1", "total_bits": 8, "bitmap": "@@"}),
    ],
)
def test_protocol_errors(payload, tmp_path):
    import threading
    from http.server import BaseHTTPRequestHandler, HTTPServer

    body = payload.encode()

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def do_GET(self):
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    server = HTTPServer(("127.0.0.1", 0), Handler)
    thread = threading.Thread(target=server.serve_forever, daemon=True)
    thread.start()
    try:
        with pytest.raises(ProtocolError):
            fetch_line_coverage(f"http://127.0.0.1:{server.server_address[1]}")
    finally:
        server.shutdown()
        server.server_close()


def test_bitmap_short_by_one_byte_is_protocol_error():
    # 64 bits require exactly 8 bytes
    payload = {"format": "wuppie-cov-1", "total_bits": 64, "bitmap": base64.b64encode(b"\x00" * 7).decode()}
    import threading
    from http.server import BaseHTTPRequestHandler, HTTPServer

    body = json.dumps(payload).encode()

    class Handler(BaseHTTPRequestHandler):
        def log_message(self, *args):
            pass

        def do_GET(self):
            self.send_response(200)
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)

    server = HTTPServer(("127.0.0.1", 0), Handler)
    threading.Thread(target=server.serve_forever, daemon=True).start()
    try:
        with pytest.raises(ProtocolError):
            fetch_line_coverage(f"http://127.0.0.1:{server.server_address[1]}")
    finally:
        server.shutdown()
        server.server_close()
