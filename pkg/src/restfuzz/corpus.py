"""Request sequences: the unit of corpus, mutation, and execution.

Seed generation walks each operation's producer chain through the dependency
graph: every consumed parameter is preceded by the request that produces it,
in CRUD order, with values wired as back-references. The on-disk corpus
format is one JSON document per sequence:

    {"version": 1, "requests": [
        {"method": "POST", "path": "/store", "params": {}, "body": null},
        {"method": "GET", "path": "/store/{id}",
         "params": {"id": {"ref": {"req": 0, "field": "id"}},
                    "voucher": {"lit": "IIIIII"}},
         "body": null}]}

Literal bytes are stored as UTF-8 text with surrogate escapes, so any byte
string round-trips exactly. A body object field literally named ``lit`` or
``ref`` holding a matching shape would be ambiguous; field names are assumed
not to collide with the value encoding.
"""

from __future__ import annotations

import json
import logging
import random
from dataclasses import dataclass, field

from .errors import MalformedCorpusFile
from .graph import DependencyGraph, pick_producer
from .openapi import ApiSpec, OperationDescriptor, SchemaNode, example_value, flatten_schema

logger = logging.getLogger(__name__)

METHOD_SET = {"POST", "GET", "PUT", "PATCH", "DELETE"}


@dataclass
class Literal:
    value: bytes

    def clone(self) -> "Literal":
        return Literal(self.value)


@dataclass
class Reference:
    source_index: int  # 0-based index of the producing request in the sequence
    field_path: str  # dotted path into the producer's response body

    def clone(self) -> "Reference":
        return Reference(self.source_index, self.field_path)


ParameterValue = Literal | Reference

# body trees: dict -> object node, list -> array node, ParameterValue -> leaf
BodyNode = object


def _clone_body(node: BodyNode) -> BodyNode:
    if isinstance(node, dict):
        return {k: _clone_body(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_clone_body(v) for v in node]
    if isinstance(node, (Literal, Reference)):
        return node.clone()
    return node


@dataclass
class TemplatedRequest:
    path: str
    method: str
    params: dict[str, ParameterValue] = field(default_factory=dict)
    body: BodyNode | None = None

    def clone(self) -> "TemplatedRequest":
        return TemplatedRequest(
            path=self.path,
            method=self.method,
            params={k: v.clone() for k, v in self.params.items()},
            body=_clone_body(self.body) if self.body is not None else None,
        )


@dataclass
class RequestSequence:
    requests: list[TemplatedRequest] = field(default_factory=list)

    def clone(self) -> "RequestSequence":
        return RequestSequence([r.clone() for r in self.requests])

    def __len__(self) -> int:
        return len(self.requests)


def iter_body_leaves(node: BodyNode, prefix: str = ""):
    """Yield (dotted path, container, key) for every leaf in a body tree."""
    if isinstance(node, dict):
        for name, child in node.items():
            sub = f"{prefix}.{name}" if prefix else name
            if isinstance(child, (Literal, Reference)):
                yield sub, node, name
            else:
                yield from iter_body_leaves(child, sub)
    elif isinstance(node, list):
        for i, child in enumerate(node):
            sub = f"{prefix}.{i}" if prefix else str(i)
            if isinstance(child, (Literal, Reference)):
                yield sub, node, i
            else:
                yield from iter_body_leaves(child, sub)


def get_body_leaf(body: BodyNode, dotted: str) -> ParameterValue | None:
    node = body
    for part in dotted.split("."):
        if isinstance(node, dict) and part in node:
            node = node[part]
        elif isinstance(node, list) and part.isdigit() and int(part) < len(node):
            node = node[int(part)]
        else:
            return None
    return node if isinstance(node, (Literal, Reference)) else None


def set_body_leaf(body: BodyNode, dotted: str, value: ParameterValue) -> bool:
    parts = dotted.split(".")
    node = body
    for part in parts[:-1]:
        if isinstance(node, dict) and part in node:
            node = node[part]
        elif isinstance(node, list) and part.isdigit() and int(part) < len(node):
            node = node[int(part)]
        else:
            return False
    last = parts[-1]
    if isinstance(node, dict) and last in node:
        node[last] = value
        return True
    if isinstance(node, list) and last.isdigit() and int(last) < len(node):
        node[int(last)] = value
        return True
    return False


def build_body_tree(schema: SchemaNode, rng: random.Random) -> BodyNode:
    if schema.kind == "object" and schema.children:
        return {name: build_body_tree(child, rng) for name, child in schema.children.items()}
    if schema.kind == "array":
        element = schema.element or SchemaNode(kind="string")
        return [build_body_tree(element, rng)]
    return Literal(example_value(schema, rng))


def request_for_operation(op: OperationDescriptor, rng: random.Random) -> TemplatedRequest:
    """A request for one operation with every parameter at its default value."""
    req = TemplatedRequest(path=op.path, method=op.method)
    for p in op.parameters:
        if p.location == "body":
            continue
        req.params[p.name] = Literal(example_value(p.schema, rng))
    if op.request_body is not None:
        req.body = build_body_tree(op.request_body, rng)
    return req


def _chain(
    spec: ApiSpec,
    graph: DependencyGraph,
    op: OperationDescriptor,
    rng: random.Random,
    seq: list[TemplatedRequest],
    placed: dict[tuple[str, str], int],
    in_progress: set[tuple[str, str]],
) -> int:
    """Emit ``op`` preceded by its producer chain; return its index in seq."""
    if op.key in placed:
        return placed[op.key]
    in_progress.add(op.key)
    wiring: list[tuple[str, str, int, str]] = []  # (param, location, producer idx, field)
    for param in op.parameters:
        edge = pick_producer(graph, op, param.name)
        if edge is None:
            continue
        producer_op = spec.find(*edge.producer)
        if producer_op.key in in_progress:
            logger.warning(
                "dependency cycle: dropping edge %s -> %s (%s)", edge.producer, op.key, param.name
            )
            continue
        idx = _chain(spec, graph, producer_op, rng, seq, placed, in_progress)
        wiring.append((param.name, param.location, idx, edge.field))
    req = request_for_operation(op, rng)
    for name, location, idx, field_path in wiring:
        ref = Reference(idx, field_path)
        if location == "body":
            set_body_leaf(req.body, name, ref)
        else:
            req.params[name] = ref
    seq.append(req)
    placed[op.key] = len(seq) - 1
    in_progress.discard(op.key)
    return placed[op.key]


def generate_corpus(spec: ApiSpec, graph: DependencyGraph, rng: random.Random) -> list[RequestSequence]:
    """One seed sequence per operation, covering every operation in the spec."""
    corpus = []
    for op in spec.operations:
        seq: list[TemplatedRequest] = []
        _chain(spec, graph, op, rng, seq, {}, set())
        corpus.append(RequestSequence(seq))
    return corpus


# --- serialisation ---------------------------------------------------------


def _encode_value(value: ParameterValue) -> dict:
    if isinstance(value, Literal):
        return {"lit": value.value.decode("utf-8", "surrogateescape")}
    return {"ref": {"req": value.source_index, "field": value.field_path}}


def _encode_body(node: BodyNode):
    if isinstance(node, dict):
        return {k: _encode_body(v) for k, v in node.items()}
    if isinstance(node, list):
        return [_encode_body(v) for v in node]
    return _encode_value(node)


def sequence_to_dict(seq: RequestSequence) -> dict:
    return {
        "version": 1,
        "requests": [
            {
                "method": r.method,
                "path": r.path,
                "params": {name: _encode_value(v) for name, v in r.params.items()},
                "body": _encode_body(r.body) if r.body is not None else None,
            }
            for r in seq.requests
        ],
    }


def serialize_sequence(seq: RequestSequence) -> bytes:
    return (json.dumps(sequence_to_dict(seq), indent=2, ensure_ascii=True) + "\n").encode()


def _is_value_dict(raw: dict) -> bool:
    if set(raw.keys()) == {"lit"}:
        return isinstance(raw["lit"], str)
    if set(raw.keys()) == {"ref"}:
        ref = raw["ref"]
        return isinstance(ref, dict) and set(ref.keys()) == {"req", "field"}
    return False


def _decode_value(raw: object, own_index: int, where: str) -> ParameterValue:
    if not isinstance(raw, dict) or not _is_value_dict(raw):
        raise MalformedCorpusFile(f"bad parameter value at {where}")
    if "lit" in raw:
        return Literal(raw["lit"].encode("utf-8", "surrogateescape"))
    ref = raw["ref"]
    req = ref["req"]
    fieldname = ref["field"]
    if not isinstance(req, int) or isinstance(req, bool) or not isinstance(fieldname, str):
        raise MalformedCorpusFile(f"bad reference at {where}")
    if not 0 <= req < own_index:
        raise MalformedCorpusFile(
            f"reference at {where} points to request {req}, not strictly before {own_index}"
        )
    return Reference(req, fieldname)


def _decode_body(raw: object, own_index: int, where: str) -> BodyNode:
    if isinstance(raw, dict):
        if _is_value_dict(raw):
            return _decode_value(raw, own_index, where)
        return {str(k): _decode_body(v, own_index, f"{where}.{k}") for k, v in raw.items()}
    if isinstance(raw, list):
        return [_decode_body(v, own_index, f"{where}[{i}]") for i, v in enumerate(raw)]
    raise MalformedCorpusFile(f"bad body node at {where}")


def parse_sequence(data: bytes | str) -> RequestSequence:
    if isinstance(data, bytes):
        data = data.decode("utf-8", "surrogateescape")
    try:
        doc = json.loads(data)
    except json.JSONDecodeError as exc:
        raise MalformedCorpusFile(exc.msg, line=exc.lineno, column=exc.colno) from exc
    return sequence_from_dict(doc)


def sequence_from_dict(doc: object) -> RequestSequence:
    if not isinstance(doc, dict) or doc.get("version") != 1:
        raise MalformedCorpusFile("missing or unsupported version (expected 1)")
    raw_requests = doc.get("requests")
    if not isinstance(raw_requests, list) or not raw_requests:
        raise MalformedCorpusFile("requests must be a non-empty array")
    requests = []
    for i, raw in enumerate(raw_requests):
        where = f"requests[{i}]"
        if not isinstance(raw, dict):
            raise MalformedCorpusFile(f"bad request at {where}")
        method = raw.get("method")
        path = raw.get("path")
        if method not in METHOD_SET:
            raise MalformedCorpusFile(f"bad method at {where}")
        if not isinstance(path, str) or not path:
            raise MalformedCorpusFile(f"bad path at {where}")
        raw_params = raw.get("params", {})
        if not isinstance(raw_params, dict):
            raise MalformedCorpusFile(f"params must be an object at {where}")
        params = {
            str(name): _decode_value(v, i, f"{where}.params.{name}")
            for name, v in raw_params.items()
        }
        raw_body = raw.get("body")
        body = _decode_body(raw_body, i, f"{where}.body") if raw_body is not None else None
        requests.append(TemplatedRequest(path=path, method=method, params=params, body=body))
    return RequestSequence(requests)


def write_corpus(corpus: list[RequestSequence], directory) -> list[str]:
    """Write ``corpus/<k>.json`` files, zero-padded, LF line endings."""
    from pathlib import Path

    out = Path(directory)
    out.mkdir(parents=True, exist_ok=True)
    width = max(4, len(str(len(corpus))))
    names = []
    for i, seq in enumerate(corpus):
        name = f"{i:0{width}d}.json"
        (out / name).write_bytes(serialize_sequence(seq))
        names.append(name)
    return names


def load_corpus(directory) -> list[RequestSequence]:
    from pathlib import Path

    files = sorted(Path(directory).glob("*.json"))
    return [parse_sequence(f.read_bytes()) for f in files]
