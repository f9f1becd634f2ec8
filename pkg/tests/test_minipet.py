import base64
import http.client
import json

import pytest

from restfuzz.coverage import fetch_line_coverage
from restfuzz.errors import PortInUse
from restfuzz.minipet import (
    BIT_VOUCHER_P1,
    BIT_VOUCHER_P2,
    start_mock,
    reset_state,
)


class Client:
    """Tiny raw client so the tests do not depend on the harness under test."""

    def __init__(self, port):
        self.conn = http.client.HTTPConnection("127.0.0.1", port, timeout=5)

    def call(self, method, target, body=None):
        headers = {}
        data = None
        if body is not None:
            data = json.dumps(body)
            headers["Content-Type"] = "application/json"
        self.conn.request(method, target, data, headers)
        response = self.conn.getresponse()
        raw = response.read()
        return response.status, json.loads(raw) if raw else {}

    def close(self):
        self.conn.close()


@pytest.fixture()
def client(mock_target):
    c = Client(mock_target.api_port)
    yield c
    c.close()


def test_first_store_gets_id_1(client):
    status, body = client.call("POST", "/store")
    assert status == 201
    assert body == {"id": "1"}


def test_ids_monotonically_increase(client):
    ids = [client.call("POST", "/store")[1]["id"] for _ in range(3)]
    assert ids == ["1", "2", "3"]
    status, pet = client.call("POST", "/pet", {"store_id": "1"})
    assert status == 201
    assert pet["id"] == "4"


def test_store_crud_roundtrip(client):
    _, store = client.call("POST", "/store")
    sid = store["id"]
    assert client.call("GET", f"/store/{sid}")[0] == 200
    status, _ = client.call("PUT", f"/store/{sid}", {"name": "corner"})
    assert status == 200
    assert client.call("GET", f"/store/{sid}")[1]["name"] == "corner"
    assert client.call("DELETE", f"/store/{sid}")[0] == 200
    assert client.call("GET", f"/store/{sid}")[0] == 404


def test_pet_requires_store_id_shape(client):
    assert client.call("POST", "/pet", {})[0] == 422
    assert client.call("POST", "/pet", {"store_id": ""})[0] == 422
    assert client.call("POST", "/pet", {"store_id": 7})[0] == 422


def test_unknown_path_404_and_wrong_method_405(client):
    assert client.call("GET", "/nope")[0] == 404
    assert client.call("GET", "/store")[0] == 405


def test_bug_b1_long_name_500(client):
    client.call("POST", "/store")
    _, pet = client.call("POST", "/pet", {"store_id": "1"})
    status, _ = client.call("PUT", f"/pet/{pet['id']}", {"name": "x" * 101})
    assert status == 500
    status, _ = client.call("PUT", f"/pet/{pet['id']}", {"name": "x" * 100})
    assert status == 200


def test_bug_b2_delete_route(client):
    client.call("POST", "/store")
    _, pet = client.call("POST", "/pet", {"store_id": "1"})
    assert client.call("GET", f"/pet/{pet['id']}")[0] == 200
    assert client.call("DELETE", "/store/1")[0] == 200
    assert client.call("GET", f"/pet/{pet['id']}")[0] == 500


def test_bug_b2_dangling_at_birth(client):
    _, pet = client.call("POST", "/pet", {"store_id": "ghost"})
    assert client.call("GET", f"/pet/{pet['id']}")[0] == 500


def test_bug_b3_magic_voucher(client):
    client.call("POST", "/store")
    assert client.call("GET", "/store/1?voucher=WUPPIE")[0] == 500
    assert client.call("GET", "/store/1?voucher=WUPPIX")[0] == 200


def test_b3_guard_bits(mock_target, client):
    client.call("POST", "/store")
    fetch_line_coverage(mock_target.agent_url, reset=True)
    status, _ = client.call("GET", "/store/1?voucher=WU")
    assert status == 200
    bits = fetch_line_coverage(mock_target.agent_url, reset=False).set_indices()
    guard_bits = {b for b in bits if 5 <= b <= 9}
    assert guard_bits == {BIT_VOUCHER_P1, BIT_VOUCHER_P2}


def test_every_500_is_an_injected_bug(client):
    # exercise a broad set of edge inputs; only B1/B2/B3 may produce 500s
    probes = [
        ("GET", "/store/999", None),
        ("PUT", "/store/zz", {"name": 3}),
        ("DELETE", "/pet/abc", None),
        ("POST", "/pet", {"store_id": ["x"]}),
        ("GET", "/pet/0", None),
        ("GET", "/store/1?voucher=WUPP", None),
        ("PUT", "/pet/1", None),
    ]
    for method, target, body in probes:
        status, _ = client.call(method, target, body)
        assert status != 500, (method, target)


def test_coverage_endpoint_protocol(mock_target):
    cov = fetch_line_coverage(mock_target.agent_url, reset=False)
    assert cov.total_bits == 64
    assert len(cov.bits) == 8


def test_reset_state(mock_target, client):
    client.call("POST", "/store")
    reset_state(mock_target)
    status, body = client.call("POST", "/store")
    assert body == {"id": "1"}
    reset_state(mock_target)
    reset_state(mock_target)  # idempotent
    assert fetch_line_coverage(mock_target.agent_url, reset=False).popcount() == 0


def test_determinism_from_fresh_state():
    def run():
        handle = start_mock()
        try:
            c = Client(handle.api_port)
            out = [
                c.call("POST", "/store"),
                c.call("POST", "/pet", {"store_id": "1", "name": "rex"}),
                c.call("GET", "/pet/2"),
                c.call("DELETE", "/store/1"),
                c.call("GET", "/pet/2"),
            ]
            bitmap = fetch_line_coverage(handle.agent_url, reset=False).bits
            c.close()
            return out, bitmap
        finally:
            handle.stop()

    assert run() == run()


def test_port_in_use(mock_target):
    with pytest.raises(PortInUse):
        start_mock(api_port=mock_target.api_port)
