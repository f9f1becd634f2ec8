import json
import random

import pytest

from restfuzz.corpus import Literal, Reference, RequestSequence, TemplatedRequest, generate_corpus
from restfuzz.harness import (
    ClientConfig,
    HttpClient,
    Verdict,
    check_response,
    execute_sequence,
    flatten_json,
    render_request,
    ResponseRecord,
)


def _client(mock_target, **kwargs):
    return HttpClient(ClientConfig(base_url=mock_target.base_url, **kwargs))


def test_render_substitutes_path_literal(spec, rng):
    req = TemplatedRequest(path="/store/{id}", method="GET", params={"id": Literal(b"9")})
    concrete = render_request(req, {}, spec, ClientConfig(base_url="http://t"), rng)
    assert concrete.url == "http://t/store/9"
    assert "{" not in concrete.url


def test_render_resolves_reference_into_body(spec, rng):
    req = TemplatedRequest(
        path="/pet",
        method="POST",
        body={"store_id": Reference(0, "id"), "name": Literal(b"rex")},
    )
    env = {0: {"id": "7"}}
    concrete = render_request(req, env, spec, ClientConfig(base_url="http://t"), rng)
    assert json.loads(concrete.body) == {"store_id": "7", "name": "rex"}
    assert ("Content-Type", "application/json") in concrete.headers


def test_render_unresolvable_reference_falls_back(spec, rng, caplog):
    req = TemplatedRequest(
        path="/store/{id}", method="GET", params={"id": Reference(0, "missing")}
    )
    with caplog.at_level("WARNING", logger="restfuzz.harness"):
        concrete = render_request(req, {0: {"id": "3"}}, spec, ClientConfig(base_url="http://t"), rng)
    assert concrete.url.endswith("/store/a")  # string schema default
    assert any("unresolvable" in r.message for r in caplog.records)


def test_render_percent_encodes(spec, rng):
    req = TemplatedRequest(
        path="/store/{id}",
        method="GET",
        params={"id": Literal(b"a/b c"), "voucher": Literal(b"x&y=z")},
    )
    concrete = render_request(req, {}, spec, ClientConfig(base_url="http://t"), rng)
    assert concrete.url == "http://t/store/a%2Fb%20c?voucher=x%26y%3Dz"


def test_render_attaches_auth_header(spec, rng):
    config = ClientConfig(base_url="http://t", auth_header_name="X-Api-Key", auth_header_value="s3cret")
    req = TemplatedRequest(path="/store", method="POST")
    concrete = render_request(req, {}, spec, config, rng)
    assert ("X-Api-Key", "s3cret") in concrete.headers


def test_flatten_json_nested():
    flat = flatten_json({"id": "1", "owner": {"name": "ann"}, "tags": ["a", 2], "ok": True})
    assert flat == {"id": "1", "owner.name": "ann", "tags.0": "a", "tags.1": "2", "ok": "true"}


def test_execute_happy_path_seed(spec, graph, mock_target, rng):
    corpus = generate_corpus(spec, graph, random.Random(1))
    seq = next(
        s for s in corpus if (s.requests[-1].path, s.requests[-1].method) == ("/pet/{id}", "GET")
    )
    client = _client(mock_target)
    records = execute_sequence(seq, client, spec, rng)
    client.close()
    assert len(records) == 3
    assert all(r.transport == "ok" for r in records)
    assert [r.status for r in records] == [201, 201, 200]


def test_execute_unreachable_port_truncates(spec, rng):
    seq = RequestSequence(
        [
            TemplatedRequest(path="/store", method="POST"),
            TemplatedRequest(path="/pet", method="POST"),
        ]
    )
    client = HttpClient(ClientConfig(base_url="http://127.0.0.1:9", timeout_ms=300))
    records = execute_sequence(seq, client, spec, rng)
    client.close()
    assert len(records) == 1
    assert records[0].transport in ("connection_closed", "timeout")
    assert records[0].status is None


def test_execute_unknown_path_gets_404(spec, mock_target, rng):
    seq = RequestSequence([TemplatedRequest(path="/nope", method="GET")])
    client = _client(mock_target)
    records = execute_sequence(seq, client, None, rng)
    client.close()
    assert len(records) == 1
    assert records[0].status == 404


def test_execute_continues_after_4xx_and_5xx(spec, mock_target, rng):
    seq = RequestSequence(
        [
            TemplatedRequest(path="/store/{id}", method="GET", params={"id": Literal(b"zz")}),
            TemplatedRequest(path="/store", method="POST"),
        ]
    )
    client = _client(mock_target)
    records = execute_sequence(seq, client, spec, rng)
    client.close()
    assert [r.status for r in records] == [404, 201]


def test_env_binds_later_reference(spec, mock_target, rng):
    seq = RequestSequence(
        [
            TemplatedRequest(path="/store", method="POST"),
            TemplatedRequest(
                path="/store/{id}", method="GET", params={"id": Reference(0, "id")}
            ),
        ]
    )
    client = _client(mock_target)
    records = execute_sequence(seq, client, spec, rng)
    client.close()
    assert records[1].status == 200


def _record(status, transport="ok", path="/store/{id}", method="GET"):
    return ResponseRecord(0, path, method, status, b"", 1.0, transport)


def test_check_expected_status(spec):
    assert check_response(spec, _record(200)) is Verdict.EXPECTED_STATUS


def test_check_unexpected_status_strict(spec):
    assert check_response(spec, _record(418)) is Verdict.UNEXPECTED_STATUS


def test_check_server_error_both_modes(spec):
    assert check_response(spec, _record(500), "strict") is Verdict.SERVER_ERROR
    assert check_response(spec, _record(500), "server-error") is Verdict.SERVER_ERROR


def test_check_server_error_only_mode_accepts_4xx(spec):
    assert check_response(spec, _record(418), "server-error") is Verdict.EXPECTED_STATUS


def test_check_transport_failure(spec):
    assert check_response(spec, _record(None, transport="timeout")) is Verdict.TRANSPORT_FAILURE


def test_check_wildcard_accepts_any_status():
    from restfuzz.openapi import parse_spec

    wild = parse_spec('{"paths": {"/x": {"get": {"responses": {"default": {}}}}}}')
    record = ResponseRecord(0, "/x", "GET", 499, b"", 1.0, "ok")
    assert check_response(wild, record) is Verdict.EXPECTED_STATUS
