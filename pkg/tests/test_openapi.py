import json
import random
import re

import pytest

from restfuzz.errors import MalformedDocument, MissingPaths, UnknownOperation, UnresolvableRef
from restfuzz.openapi import example_value, expected_statuses, parse_spec, SchemaNode


def test_minipet_has_eight_operations(spec):
    assert len(spec.operations) == 8
    keys = [op.key for op in spec.operations]
    assert len(set(keys)) == 8
    assert ("/store", "POST") in keys
    assert ("/pet/{id}", "DELETE") in keys


def test_operation_order_is_document_order(spec):
    assert [op.key for op in spec.operations[:4]] == [
        ("/store", "POST"),
        ("/store/{id}", "GET"),
        ("/store/{id}", "PUT"),
        ("/store/{id}", "DELETE"),
    ]


def test_empty_paths_yields_no_operations():
    assert parse_spec('{"openapi": "3.0.0", "paths": {}}').operations == []


def test_default_response_becomes_wildcard():
    doc = {
        "paths": {
            "/x": {"get": {"responses": {"default": {"description": "any"}, "200": {"description": "ok"}}}}
        }
    }
    spec = parse_spec(json.dumps(doc))
    statuses, wildcard = expected_statuses(spec, "/x", "GET")
    assert statuses == {200}
    assert wildcard


def test_malformed_document_raises():
    with pytest.raises(MalformedDocument):
        parse_spec("{: not valid")


def test_missing_paths_raises():
    with pytest.raises(MissingPaths):
        parse_spec('{"openapi": "3.0.0"}')


def test_duplicate_status_rejected_at_parse_time():
    doc = '{"paths": {"/x": {"get": {"responses": {"200": {}, "0200": {}}}}}}'
    with pytest.raises(MalformedDocument):
        parse_spec(doc)


def test_dangling_ref_raises():
    doc = {"paths": {"/x": {"get": {"responses": {"200": {"content": {
        "application/json": {"schema": {"$ref": "#/components/schemas/Nope"}}}}}}}}}
    with pytest.raises(UnresolvableRef):
        parse_spec(json.dumps(doc))


def test_external_ref_rejected():
    doc = {"paths": {"/x": {"get": {"responses": {"200": {"content": {
        "application/json": {"schema": {"$ref": "other.yaml#/Pet"}}}}}}}}}
    with pytest.raises(UnresolvableRef):
        parse_spec(json.dumps(doc))


def test_intra_document_ref_resolves():
    doc = {
        "components": {"schemas": {"Pet": {"type": "object", "properties": {"id": {"type": "string"}}}}},
        "paths": {"/pet": {"post": {"responses": {"201": {"content": {
            "application/json": {"schema": {"$ref": "#/components/schemas/Pet"}}}}}}}},
    }
    spec = parse_spec(json.dumps(doc))
    fields = spec.find("/pet", "POST").response_fields()
    assert [name for name, _ in fields] == ["id"]


def test_unsupported_methods_are_ignored(caplog):
    doc = {"paths": {"/x": {"get": {"responses": {"200": {}}}, "options": {"responses": {"200": {}}}}}}
    spec = parse_spec(json.dumps(doc))
    assert [op.method for op in spec.operations] == ["GET"]


def test_expected_statuses_minipet(spec):
    statuses, wildcard = expected_statuses(spec, "/store/{id}", "GET")
    assert statuses == {200, 404}
    assert not wildcard


def test_expected_statuses_unknown_operation(spec):
    with pytest.raises(UnknownOperation):
        expected_statuses(spec, "/nope", "GET")


def test_parse_is_pure(minipet_text):
    assert parse_spec(minipet_text) == parse_spec(minipet_text)


def test_path_template_params_all_declared(spec):
    for op in spec.operations:
        declared = {p.name for p in op.parameters if p.location == "path"}
        for match in re.finditer(r"\{([^}]+)\}", op.path):
            assert match.group(1) in declared


# --- example_value ----------------------------------------------------------


def test_example_precedence():
    schema = SchemaNode(kind="integer", example=42)
    assert example_value(schema, random.Random(0)) == b"42"


def test_string_default():
    assert example_value(SchemaNode(kind="string"), random.Random(0)) == b"a"


@pytest.mark.parametrize(
    "kind,expected",
    [("integer", b"1"), ("number", b"1.0"), ("boolean", b"true")],
)
def test_type_defaults(kind, expected):
    assert example_value(SchemaNode(kind=kind), random.Random(0)) == expected


def test_pattern_generation_matches_and_is_deterministic():
    schema = SchemaNode(kind="string", pattern="[A-C]{2}")
    value = example_value(schema, random.Random(7))
    assert re.fullmatch(rb"[A-C]{2}", value)
    assert value == example_value(SchemaNode(kind="string", pattern="[A-C]{2}"), random.Random(7))


def test_unsatisfiable_pattern_falls_back_to_default(caplog):
    schema = SchemaNode(kind="string", pattern="a{400}")
    with caplog.at_level("WARNING", logger="restfuzz.openapi"):
        value = example_value(schema, random.Random(0))
    assert value == b"a"
    assert any("fallback" in r.message for r in caplog.records)


def test_array_and_object_defaults():
    array = SchemaNode(kind="array", element=SchemaNode(kind="integer"))
    assert example_value(array, random.Random(0)) == b"[1]"
    obj = SchemaNode(kind="object", children={"n": SchemaNode(kind="integer")})
    assert example_value(obj, random.Random(0)) == b'{"n":1}'


def test_example_value_deterministic_bytes():
    schema = SchemaNode(kind="string", pattern="[a-z]{3,8}")
    a = example_value(schema, random.Random(99))
    b = example_value(schema, random.Random(99))
    assert a == b
