"""Infer resource relations between operations and build the dependency graph.

Producer response fields are matched to consumer parameters by normalising
both names (splitting, lowercasing, plural stemming) and allowing the
producer's path context as a prefix or suffix, so ``id`` returned by
``POST /store`` relates to a ``store_id`` parameter elsewhere.
"""

from __future__ import annotations

from dataclasses import dataclass, field

from .errors import UnknownMethod
from .openapi import ApiSpec, OperationDescriptor

_CRUD_RANK = {"POST": 0, "GET": 1, "PUT": 2, "PATCH": 2, "DELETE": 3}


def crud_rank(method: str) -> int:
    try:
        return _CRUD_RANK[method.upper()]
    except KeyError:
        raise UnknownMethod(method) from None


def _split_tokens(raw: str) -> list[str]:
    tokens: list[str] = []
    current = ""
    prev = ""
    for ch in raw:
        if ch in "_-":
            if current:
                tokens.append(current)
            current = ""
        elif ch.isupper() and prev and prev.islower():
            tokens.append(current)
            current = ch
        else:
            current += ch
        prev = ch
    if current:
        tokens.append(current)
    return tokens


def _stem(token: str) -> str:
    if len(token) > 3 and token.endswith("ies"):
        return token[:-3] + "y"
    if len(token) > 4 and token.endswith(("sses", "shes", "ches", "xes", "zes")):
        return token[:-2]
    if len(token) > 1 and token.endswith("s") and not token.endswith("ss"):
        return token[:-1]
    return token


def normalize_name(raw: str) -> list[str]:
    """Lowercase stem tokens of an identifier; worst case one token."""
    tokens = [_stem(t.lower()) for t in _split_tokens(raw) if t]
    return tokens or [raw.lower()]


def path_context(path: str) -> list[str]:
    """Normalised tokens of the last non-parameter path segment."""
    for segment in reversed(path.split("/")):
        if segment and not segment.startswith("{"):
            return normalize_name(segment)
    return []


def names_related(producer_field: str, producer_path: str, consumer_param: str) -> bool:
    field_tokens = normalize_name(producer_field.split(".")[-1])
    param_tokens = normalize_name(consumer_param.split(".")[-1])
    if param_tokens == field_tokens:
        return True
    ctx = path_context(producer_path)
    if ctx:
        if param_tokens == ctx + field_tokens:
            return True
        if param_tokens == field_tokens + ctx:
            return True
    return False


@dataclass(frozen=True)
class Edge:
    producer: tuple[str, str]  # (path, METHOD)
    consumer: tuple[str, str]
    field: str  # dotted response field path on the producer
    param: str  # consumer parameter name (dotted for body fields)


@dataclass
class DependencyGraph:
    nodes: list[tuple[str, str]] = field(default_factory=list)
    edges: list[Edge] = field(default_factory=list)

    def edges_into(self, consumer: tuple[str, str], param: str | None = None) -> list[Edge]:
        return [
            e
            for e in self.edges
            if e.consumer == consumer and (param is None or e.param == param)
        ]

    def node_rank(self, node: tuple[str, str]) -> int:
        return crud_rank(node[1])


def build_dependency_graph(spec: ApiSpec) -> DependencyGraph:
    nodes = [op.key for op in spec.operations]
    edges: set[Edge] = set()
    for producer in spec.operations:
        fields = producer.response_fields()
        if not fields:
            continue
        for consumer in spec.operations:
            if consumer.key == producer.key:
                continue
            for param in consumer.parameters:
                if not param.name:
                    continue
                for field_path, _schema in fields:
                    if names_related(field_path, producer.path, param.name):
                        edges.add(Edge(producer.key, consumer.key, field_path, param.name))
    ordered = sorted(
        edges,
        key=lambda e: (e.producer[0], e.consumer[0], e.field, e.param, e.producer[1], e.consumer[1]),
    )
    return DependencyGraph(nodes=nodes, edges=ordered)


def pick_producer(
    graph: DependencyGraph,
    consumer: OperationDescriptor,
    param_name: str,
) -> Edge | None:
    """Deterministically choose the best producer edge for one parameter.

    Preference: producer whose path context matches the consumer's (same
    resource), then lowest CRUD rank (creators first), then lexicographic.
    """
    candidates = graph.edges_into(consumer.key, param_name)
    if not candidates:
        return None
    consumer_ctx = path_context(consumer.path)

    def score(edge: Edge):
        ctx_match = 0 if path_context(edge.producer[0]) == consumer_ctx else 1
        return (ctx_match, crud_rank(edge.producer[1]), edge.producer[0], edge.producer[1], edge.field)

    return min(candidates, key=score)
