"""Parse OpenAPI 3.x documents into a validated internal model.

The model keeps exactly what the fuzzer needs: operations in document order,
their parameters (path/query/header plus flattened JSON body fields), response
statuses, and enough schema information to produce example values.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field

import yaml

from .errors import MalformedDocument, MissingPaths, UnknownOperation, UnresolvableRef, UnsatisfiablePattern
from .patterns import generate_match

logger = logging.getLogger(__name__)

METHODS = ("post", "get", "put", "patch", "delete")

SCHEMA_KINDS = ("string", "integer", "number", "boolean", "array", "object")


@dataclass
class SchemaNode:
    kind: str = "string"
    example: object | None = None
    pattern: str | None = None
    children: dict[str, "SchemaNode"] = field(default_factory=dict)
    element: "SchemaNode | None" = None


@dataclass
class ParameterDescriptor:
    name: str  # for body fields this is the dotted path into the body
    location: str  # path | query | header | body
    schema: SchemaNode
    required: bool = True


@dataclass
class ResponseDescriptor:
    status: int | None  # None encodes the ``default`` wildcard
    schema: SchemaNode | None = None


@dataclass
class OperationDescriptor:
    path: str
    method: str  # upper-case
    parameters: list[ParameterDescriptor] = field(default_factory=list)
    request_body: SchemaNode | None = None
    responses: list[ResponseDescriptor] = field(default_factory=list)

    @property
    def key(self) -> tuple[str, str]:
        return (self.path, self.method)

    def parameter(self, name: str) -> ParameterDescriptor | None:
        for p in self.parameters:
            if p.name == name:
                return p
        return None

    def response_fields(self) -> list[tuple[str, SchemaNode]]:
        """Dotted paths of all fields declared in response body schemas."""
        fields: list[tuple[str, SchemaNode]] = []
        seen = set()
        for resp in self.responses:
            if resp.schema is None:
                continue
            for path, node in flatten_schema(resp.schema):
                if path and path not in seen:
                    seen.add(path)
                    fields.append((path, node))
        return fields


@dataclass
class ApiSpec:
    base_url: str
    operations: list[OperationDescriptor]
    _index: dict[tuple[str, str], OperationDescriptor] = field(default=None, repr=False, compare=False)

    def find(self, path: str, method: str) -> OperationDescriptor:
        if self._index is None:
            self._index = {op.key: op for op in self.operations}
        try:
            return self._index[(path, method.upper())]
        except KeyError:
            raise UnknownOperation(f"{method.upper()} {path}") from None

    def has(self, path: str, method: str) -> bool:
        try:
            self.find(path, method)
            return True
        except UnknownOperation:
            return False

    def methods_for_path(self, path: str) -> list[str]:
        return [op.method for op in self.operations if op.path == path]


def _resolve_ref(document: dict, ref: str) -> object:
    if not ref.startswith("#/"):
        raise UnresolvableRef(f"external $ref not supported: {ref}")
    node: object = document
    for part in ref[2:].split("/"):
        part = part.replace("~1", "/").replace("~0", "~")
        if not isinstance(node, dict) or part not in node:
            raise UnresolvableRef(f"dangling $ref: {ref}")
        node = node[part]
    return node


def _deref(document: dict, node: object, depth: int = 0) -> object:
    if depth > 32:
        raise UnresolvableRef("$ref chain too deep (cycle?)")
    if isinstance(node, dict) and "$ref" in node:
        target = _resolve_ref(document, str(node["$ref"]))
        return _deref(document, target, depth + 1)
    return node


def _parse_schema(document: dict, raw: object, depth: int = 0) -> SchemaNode:
    if depth > 32:
        raise UnresolvableRef("schema nesting too deep (cycle?)")
    raw = _deref(document, raw)
    if not isinstance(raw, dict):
        return SchemaNode(kind="string")
    # composition keywords: take the first alternative
    for combinator in ("allOf", "oneOf", "anyOf"):
        alts = raw.get(combinator)
        if isinstance(alts, list) and alts:
            return _parse_schema(document, alts[0], depth + 1)
    kind = raw.get("type")
    if kind not in SCHEMA_KINDS:
        kind = "object" if "properties" in raw else "string"
    node = SchemaNode(kind=kind)
    if "example" in raw:
        node.example = raw["example"]
    elif "default" in raw:
        node.example = raw["default"]
    pattern = raw.get("pattern")
    if pattern is not None:
        if kind == "string":
            node.pattern = str(pattern)
        else:
            logger.warning("ignoring pattern on non-string schema (type=%s)", kind)
    if kind == "object":
        props = raw.get("properties")
        if isinstance(props, dict):
            for name, sub in props.items():
                node.children[str(name)] = _parse_schema(document, sub, depth + 1)
    elif kind == "array":
        node.element = _parse_schema(document, raw.get("items", {}), depth + 1)
    return node


def flatten_schema(schema: SchemaNode, prefix: str = "") -> list[tuple[str, SchemaNode]]:
    """Leaf fields of an object tree as (dotted path, schema) pairs.

    A non-object schema is itself a leaf (empty path at the root).
    """
    if schema.kind == "object" and schema.children:
        out: list[tuple[str, SchemaNode]] = []
        for name, child in schema.children.items():
            sub_prefix = f"{prefix}.{name}" if prefix else name
            out.extend(flatten_schema(child, sub_prefix))
        return out
    return [(prefix, schema)]


def _parse_parameters(document: dict, raw_params: object) -> list[ParameterDescriptor]:
    out: list[ParameterDescriptor] = []
    if not isinstance(raw_params, list):
        return out
    for raw in raw_params:
        raw = _deref(document, raw)
        if not isinstance(raw, dict):
            continue
        name = str(raw.get("name", "")).strip()
        location = str(raw.get("in", "query"))
        if not name:
            raise MalformedDocument("parameter without a name")
        if location not in ("path", "query", "header"):
            logger.warning("ignoring parameter %r in unsupported location %r", name, location)
            continue
        schema = _parse_schema(document, raw.get("schema", {}))
        required = bool(raw.get("required", location == "path"))
        out.append(ParameterDescriptor(name=name, location=location, schema=schema, required=required))
    return out


def _parse_request_body(document: dict, raw: object) -> SchemaNode | None:
    raw = _deref(document, raw)
    if not isinstance(raw, dict):
        return None
    content = _deref(document, raw.get("content"))
    if not isinstance(content, dict) or not content:
        return None
    if "application/json" in content:
        media = _deref(document, content["application/json"])
        if isinstance(media, dict):
            return _parse_schema(document, media.get("schema", {}))
        return SchemaNode(kind="object")
    # non-JSON bodies are opaque byte strings
    return SchemaNode(kind="string")


def _parse_responses(document: dict, raw: object, where: str) -> list[ResponseDescriptor]:
    out: list[ResponseDescriptor] = []
    seen: set[int | None] = set()
    if not isinstance(raw, dict):
        return out
    for key, body in raw.items():
        key_str = str(key)
        if key_str == "default":
            status: int | None = None
        else:
            try:
                status = int(key_str)
            except ValueError:
                logger.warning("ignoring unsupported response key %r at %s", key_str, where)
                continue
            if not 100 <= status <= 599:
                raise MalformedDocument(f"response status {status} out of range at {where}")
        if status in seen:
            raise MalformedDocument(f"duplicate response status {key_str} at {where}")
        seen.add(status)
        schema = None
        body = _deref(document, body)
        if isinstance(body, dict):
            content = _deref(document, body.get("content"))
            if isinstance(content, dict) and "application/json" in content:
                media = _deref(document, content["application/json"])
                if isinstance(media, dict) and "schema" in media:
                    schema = _parse_schema(document, media["schema"])
        out.append(ResponseDescriptor(status=status, schema=schema))
    return out


def _template_params(path: str) -> list[str]:
    names = []
    start = None
    for i, ch in enumerate(path):
        if ch == "{":
            start = i + 1
        elif ch == "}" and start is not None:
            names.append(path[start:i])
            start = None
    return names


def parse_spec(document_text: str) -> ApiSpec:
    """Parse a JSON or YAML OpenAPI document into an ApiSpec.

    Intra-document ``$ref``s are resolved; unknown keys are ignored.
    """
    try:
        document = yaml.safe_load(document_text)
    except yaml.YAMLError as exc:
        raise MalformedDocument(f"not valid JSON or YAML: {exc}") from exc
    if not isinstance(document, dict):
        raise MalformedDocument("document root is not a mapping")
    if "paths" not in document or not isinstance(document["paths"], dict):
        raise MissingPaths("document has no paths object")

    base_url = ""
    servers = document.get("servers")
    if isinstance(servers, list) and servers and isinstance(servers[0], dict):
        base_url = str(servers[0].get("url", ""))

    operations: list[OperationDescriptor] = []
    seen_keys: set[tuple[str, str]] = set()
    for path, item in document["paths"].items():
        path = str(path)
        item = _deref(document, item)
        if not isinstance(item, dict):
            continue
        shared_params = _parse_parameters(document, item.get("parameters"))
        for method, raw_op in item.items():
            if method in ("parameters", "summary", "description"):
                continue
            if method not in METHODS:
                if isinstance(raw_op, dict):
                    logger.warning("ignoring unsupported method %s %s", str(method).upper(), path)
                continue
            raw_op = _deref(document, raw_op)
            if not isinstance(raw_op, dict):
                continue
            where = f"{method.upper()} {path}"
            params = list(shared_params)
            own = _parse_parameters(document, raw_op.get("parameters"))
            own_keys = {(p.name, p.location) for p in own}
            params = [p for p in params if (p.name, p.location) not in own_keys] + own

            body_schema = _parse_request_body(document, raw_op.get("requestBody"))
            if body_schema is not None:
                if body_schema.kind == "object" and body_schema.children:
                    for dotted, leaf in flatten_schema(body_schema):
                        params.append(
                            ParameterDescriptor(name=dotted, location="body", schema=leaf)
                        )
                else:
                    params.append(ParameterDescriptor(name="", location="body", schema=body_schema))

            # every {param} segment must resolve to a path parameter
            declared = {p.name for p in params if p.location == "path"}
            for tmpl in _template_params(path):
                if tmpl not in declared:
                    logger.warning("synthesising undeclared path parameter %r for %s", tmpl, where)
                    params.append(
                        ParameterDescriptor(name=tmpl, location="path", schema=SchemaNode(kind="string"))
                    )

            op = OperationDescriptor(
                path=path,
                method=method.upper(),
                parameters=params,
                request_body=body_schema,
                responses=_parse_responses(document, raw_op.get("responses"), where),
            )
            if op.key in seen_keys:
                raise MalformedDocument(f"duplicate operation {where}")
            seen_keys.add(op.key)
            operations.append(op)

    return ApiSpec(base_url=base_url, operations=operations)


def load_spec(path: str) -> ApiSpec:
    with open(path, "r", encoding="utf-8") as fh:
        return parse_spec(fh.read())


def expected_statuses(spec: ApiSpec, path: str, method: str) -> tuple[set[int], bool]:
    """Status codes listed for an operation, plus the ``default`` wildcard flag."""
    op = spec.find(path, method)
    statuses = {r.status for r in op.responses if r.status is not None}
    wildcard = any(r.status is None for r in op.responses)
    return statuses, wildcard


def _render_literal(value: object) -> bytes:
    if isinstance(value, bytes):
        return value
    if isinstance(value, bool):
        return b"true" if value else b"false"
    if isinstance(value, (dict, list)):
        return json.dumps(value, separators=(",", ":")).encode()
    return str(value).encode()


_TYPE_DEFAULTS = {
    "string": b"a",
    "integer": b"1",
    "number": b"1.0",
    "boolean": b"true",
}


def example_value(schema: SchemaNode, rng: random.Random) -> bytes:
    """Literal bytes for a schema: example > generated pattern match > type default."""
    if schema.example is not None:
        return _render_literal(schema.example)
    if schema.pattern is not None and schema.kind == "string":
        try:
            return generate_match(schema.pattern, rng).encode()
        except UnsatisfiablePattern as exc:
            logger.warning("pattern fallback to type default: %s", exc)
            return _TYPE_DEFAULTS["string"]
    if schema.kind == "array":
        element = schema.element or SchemaNode(kind="string")
        inner = example_value(element, rng)
        return b"[" + _as_json_fragment(element, inner) + b"]"
    if schema.kind == "object":
        parts = []
        for name, child in schema.children.items():
            inner = example_value(child, rng)
            parts.append(json.dumps(name).encode() + b":" + _as_json_fragment(child, inner))
        return b"{" + b",".join(parts) + b"}"
    return _TYPE_DEFAULTS.get(schema.kind, b"a")


def _as_json_fragment(schema: SchemaNode, rendered: bytes) -> bytes:
    if schema.kind in ("integer", "number", "boolean", "array", "object"):
        return rendered
    return json.dumps(rendered.decode("utf-8", "surrogateescape")).encode()
