"""The 31 mutators: 22 AFL-style byte mutators and 9 sequence mutators.

Byte mutators operate on a single literal parameter value; values bound from
earlier responses (references) are never mutated directly, only re-wired or
broken by the sequence mutators. Every mutator degrades to a no-op on
inapplicable input, so the top-level ``mutate`` always returns a sequence
satisfying the corpus invariants.
"""

from __future__ import annotations

import random

from .corpus import (
    Literal,
    Reference,
    RequestSequence,
    TemplatedRequest,
    get_body_leaf,
    iter_body_leaves,
    request_for_operation,
    set_body_leaf,
)
from .graph import DependencyGraph, path_context, crud_rank
from .openapi import ApiSpec, SchemaNode, example_value

MAX_VALUE_LENGTH = 4096

BYTE_MUTATORS = (
    "BitFlipMutator",
    "ByteAddMutator",
    "ByteDecMutator",
    "ByteFlipMutator",
    "ByteIncMutator",
    "ByteInterestingMutator",
    "ByteNegMutator",
    "ByteRandMutator",
    "BytesCopyMutator",
    "BytesDeleteMutator",
    "BytesExpandMutator",
    "BytesInsertCopyMutator",
    "BytesInsertMutator",
    "BytesRandInsertMutator",
    "BytesRandSetMutator",
    "BytesSetMutator",
    "BytesSwapMutator",
    "DwordAddMutator",
    "DwordInterestingMutator",
    "QwordAddMutator",
    "WordAddMutator",
    "WordInterestingMutator",
)

SEQUENCE_MUTATORS = (
    "AddRequest",
    "BreakLink",
    "DifferentMethod",
    "DifferentPath",
    "DuplicateRequest",
    "EstablishLink",
    "RemoveRequest",
    "StringInteresting",
    "SwapRequests",
)

ALL_MUTATORS = BYTE_MUTATORS + SEQUENCE_MUTATORS

# Selection weights for the mutation stack. Surgical single-byte mutators
# carry more weight than the block mutators: REST parameter values are short
# tokens where one-byte edits preserve enough structure to keep a request
# routable, which is what lets coverage feedback climb value guards at all.
# Structure-level mutators keep a modest boost for the same reason. The
# distribution is deliberately concentrated here so it can be tuned in one
# place.
MUTATOR_WEIGHTS = {
    "BitFlipMutator": 6,
    "ByteAddMutator": 8,
    "ByteRandMutator": 4,
    "ByteIncMutator": 2,
    "ByteDecMutator": 2,
}
MUTATOR_WEIGHTS.update(
    {kind: MUTATOR_WEIGHTS.get(kind, 1) for kind in BYTE_MUTATORS}
)
MUTATOR_WEIGHTS.update({kind: 2 for kind in SEQUENCE_MUTATORS})

_WEIGHT_TOTAL = sum(MUTATOR_WEIGHTS[k] for k in ALL_MUTATORS)
_CUMULATIVE = []
_acc = 0
for _kind in ALL_MUTATORS:
    _acc += MUTATOR_WEIGHTS[_kind]
    _CUMULATIVE.append(_acc)


def pick_mutator(rng: random.Random) -> str:
    """Choose one of the 31 mutators according to MUTATOR_WEIGHTS."""
    import bisect

    roll = rng.randrange(_WEIGHT_TOTAL)
    return ALL_MUTATORS[bisect.bisect_right(_CUMULATIVE, roll)]

INTERESTING_8 = (-128, -1, 0, 1, 16, 32, 64, 100, 127)
INTERESTING_16 = INTERESTING_8 + (-32768, -129, 128, 255, 256, 512, 1000, 1024, 4096, 32767)
INTERESTING_32 = INTERESTING_16 + (
    -2147483648,
    -100663046,
    -32769,
    32768,
    65535,
    65536,
    100663045,
    2147483647,
)

INTERESTING_STRINGS = (
    "",
    "'",
    '"',
    "%s%s%s",
    "../../etc/passwd",
    "<script>alert(1)</script>",
    "0",
    "-1",
    "999999999999999999",
    "\x00",
    "☃",
    "A" * 1024,
)

ARITH_MAX = 35


def _rand_offset(rng: random.Random, length: int, width: int = 1) -> int:
    return rng.randrange(0, length - width + 1)


def _rand_range(rng: random.Random, length: int) -> tuple[int, int]:
    """(offset, size) with size >= 1, fully inside the value."""
    offset = rng.randrange(0, length)
    size = rng.randint(1, length - offset)
    return offset, size


def _arith(rng: random.Random, data: bytearray, width: int) -> bytes:
    if len(data) < width:
        return bytes(data)
    offset = _rand_offset(rng, len(data), width)
    delta = rng.randint(1, ARITH_MAX)
    if rng.random() < 0.5:
        delta = -delta
    value = int.from_bytes(data[offset : offset + width], "little")
    value = (value + delta) % (1 << (8 * width))
    data[offset : offset + width] = value.to_bytes(width, "little")
    return bytes(data)


def _interesting(rng: random.Random, data: bytearray, width: int, pool) -> bytes:
    if len(data) < width:
        return bytes(data)
    offset = _rand_offset(rng, len(data), width)
    value = rng.choice(pool) % (1 << (8 * width))
    data[offset : offset + width] = value.to_bytes(width, "little")
    return bytes(data)


def apply_byte_mutator(kind: str, value: bytes, rng: random.Random) -> bytes:
    """AFL-style semantics per mutator name; output clamped to 4096 bytes."""
    data = bytearray(value)
    n = len(data)

    if kind == "BitFlipMutator":
        if n:
            bit = rng.randrange(0, n * 8)
            data[bit // 8] ^= 1 << (bit % 8)
    elif kind == "ByteFlipMutator":
        if n:
            data[rng.randrange(n)] ^= 0xFF
    elif kind == "ByteIncMutator":
        if n:
            i = rng.randrange(n)
            data[i] = (data[i] + 1) % 256
    elif kind == "ByteDecMutator":
        if n:
            i = rng.randrange(n)
            data[i] = (data[i] - 1) % 256
    elif kind == "ByteNegMutator":
        if n:
            i = rng.randrange(n)
            data[i] = (-data[i]) % 256
    elif kind == "ByteRandMutator":
        if n:
            data[rng.randrange(n)] = rng.randrange(256)
    elif kind == "ByteAddMutator":
        return _clamp(_arith(rng, data, 1))
    elif kind == "WordAddMutator":
        return _clamp(_arith(rng, data, 2))
    elif kind == "DwordAddMutator":
        return _clamp(_arith(rng, data, 4))
    elif kind == "QwordAddMutator":
        return _clamp(_arith(rng, data, 8))
    elif kind == "ByteInterestingMutator":
        return _clamp(_interesting(rng, data, 1, INTERESTING_8))
    elif kind == "WordInterestingMutator":
        return _clamp(_interesting(rng, data, 2, INTERESTING_16))
    elif kind == "DwordInterestingMutator":
        return _clamp(_interesting(rng, data, 4, INTERESTING_32))
    elif kind == "BytesCopyMutator":
        if n:
            offset, size = _rand_range(rng, n)
            dest = rng.randrange(0, n)
            chunk = data[offset : offset + size]
            data[dest : dest + size] = chunk
            data = data[:n]  # overwrite, never grow
    elif kind == "BytesDeleteMutator":
        if n:
            offset, size = _rand_range(rng, n)
            del data[offset : offset + size]
    elif kind == "BytesExpandMutator":
        if n:
            offset, size = _rand_range(rng, n)
            data[offset + size : offset + size] = data[offset : offset + size]
    elif kind == "BytesInsertCopyMutator":
        if n:
            offset, size = _rand_range(rng, n)
            dest = rng.randrange(0, n + 1)
            data[dest:dest] = data[offset : offset + size]
    elif kind == "BytesInsertMutator":
        if n:
            byte = data[rng.randrange(n)]
            count = rng.randint(1, 16)
            dest = rng.randrange(0, n + 1)
            data[dest:dest] = bytes([byte]) * count
    elif kind == "BytesRandInsertMutator":
        count = rng.randint(1, 16)
        dest = rng.randrange(0, n + 1)
        data[dest:dest] = bytes(rng.randrange(256) for _ in range(count))
    elif kind == "BytesRandSetMutator":
        if n:
            offset, size = _rand_range(rng, n)
            byte = rng.randrange(256)
            data[offset : offset + size] = bytes([byte]) * size
    elif kind == "BytesSetMutator":
        if n:
            byte = data[rng.randrange(n)]
            offset, size = _rand_range(rng, n)
            data[offset : offset + size] = bytes([byte]) * size
    elif kind == "BytesSwapMutator":
        if n >= 2:
            size = rng.randint(1, n // 2)
            first = rng.randrange(0, n - 2 * size + 1)
            second = rng.randrange(first + size, n - size + 1)
            a = data[first : first + size]
            b = data[second : second + size]
            data[second : second + size] = a
            data[first : first + size] = b
    else:
        raise ValueError(f"unknown byte mutator {kind}")
    return _clamp(bytes(data))


def _clamp(data: bytes) -> bytes:
    return data[:MAX_VALUE_LENGTH]


# --- slot helpers -----------------------------------------------------------


def _literal_slots(seq: RequestSequence) -> list[tuple[int, str, str]]:
    """Ordered (request index, kind, key) triples for every Literal value."""
    slots = []
    for i, req in enumerate(seq.requests):
        for name, value in req.params.items():
            if isinstance(value, Literal):
                slots.append((i, "param", name))
        if req.body is not None:
            for dotted, _container, _key in iter_body_leaves(req.body):
                if isinstance(get_body_leaf(req.body, dotted), Literal):
                    slots.append((i, "body", dotted))
    return slots


def _reference_slots(seq: RequestSequence) -> list[tuple[int, str, str]]:
    slots = []
    for i, req in enumerate(seq.requests):
        for name, value in req.params.items():
            if isinstance(value, Reference):
                slots.append((i, "param", name))
        if req.body is not None:
            for dotted, _container, _key in iter_body_leaves(req.body):
                if isinstance(get_body_leaf(req.body, dotted), Reference):
                    slots.append((i, "body", dotted))
    return slots


def _get_slot(seq: RequestSequence, slot: tuple[int, str, str]):
    i, kind, key = slot
    req = seq.requests[i]
    if kind == "param":
        return req.params[key]
    return get_body_leaf(req.body, key)


def _set_slot(seq: RequestSequence, slot: tuple[int, str, str], value):
    i, kind, key = slot
    req = seq.requests[i]
    if kind == "param":
        req.params[key] = value
    else:
        set_body_leaf(req.body, key, value)


def _slot_schema(spec: ApiSpec, seq: RequestSequence, slot: tuple[int, str, str]) -> SchemaNode | None:
    i, kind, key = slot
    req = seq.requests[i]
    try:
        op = spec.find(req.path, req.method)
    except Exception:
        return None
    if kind == "param":
        descriptor = op.parameter(key)
    else:
        descriptor = next(
            (p for p in op.parameters if p.location == "body" and p.name == key), None
        )
    return descriptor.schema if descriptor else None


def _default_for_slot(spec: ApiSpec, seq: RequestSequence, slot, rng: random.Random) -> Literal:
    schema = _slot_schema(spec, seq, slot)
    if schema is None:
        return Literal(b"a")
    return Literal(example_value(schema, rng))


def _random_bytes(rng: random.Random) -> bytes:
    return bytes(rng.randrange(256) for _ in range(rng.randint(1, 8)))


def _shift_references(seq: RequestSequence, position: int, delta: int):
    """Re-point references at sources >= position by delta."""
    for req in seq.requests:
        for name, value in list(req.params.items()):
            if isinstance(value, Reference) and value.source_index >= position:
                value.source_index += delta
        if req.body is not None:
            for dotted, _c, _k in iter_body_leaves(req.body):
                value = get_body_leaf(req.body, dotted)
                if isinstance(value, Reference) and value.source_index >= position:
                    value.source_index += delta


def _literalize_forward_references(spec: ApiSpec, seq: RequestSequence, rng: random.Random):
    for i, req in enumerate(seq.requests):
        for name, value in list(req.params.items()):
            if isinstance(value, Reference) and value.source_index >= i:
                req.params[name] = _default_for_slot(spec, seq, (i, "param", name), rng)
        if req.body is not None:
            for dotted, _c, _k in list(iter_body_leaves(req.body)):
                value = get_body_leaf(req.body, dotted)
                if isinstance(value, Reference) and value.source_index >= i:
                    set_body_leaf(req.body, dotted, _default_for_slot(spec, seq, (i, "body", dotted), rng))


# --- sequence mutators ------------------------------------------------------


def _mutate_add_request(seq, spec, graph, rng):
    op = rng.choice(spec.operations)
    req = TemplatedRequest(path=op.path, method=op.method)
    for p in op.parameters:
        if p.location != "body":
            req.params[p.name] = Literal(_random_bytes(rng))
    if op.request_body is not None:
        from .corpus import build_body_tree

        req.body = build_body_tree(op.request_body, rng)
        for dotted, _c, _k in list(iter_body_leaves(req.body)):
            set_body_leaf(req.body, dotted, Literal(_random_bytes(rng)))
    seq.requests.append(req)
    return seq


def _mutate_break_link(seq, spec, graph, rng):
    refs = _reference_slots(seq)
    if not refs:
        return seq
    slot = rng.choice(refs)
    _set_slot(seq, slot, Literal(_random_bytes(rng)))
    return seq


def _rebuild_request_for(
    op, old: TemplatedRequest, rng
) -> TemplatedRequest:
    """Request for ``op`` keeping values whose name/location survive the move."""
    fresh = request_for_operation(op, rng)
    for name, value in old.params.items():
        if name in fresh.params:
            fresh.params[name] = value.clone()
    if fresh.body is not None and old.body is not None:
        for dotted, _c, _k in list(iter_body_leaves(fresh.body)):
            old_value = get_body_leaf(old.body, dotted)
            if old_value is not None:
                set_body_leaf(fresh.body, dotted, old_value.clone())
    return fresh


def _mutate_different_method(seq, spec, graph, rng):
    idx = rng.randrange(len(seq.requests))
    req = seq.requests[idx]
    alternatives = [m for m in spec.methods_for_path(req.path) if m != req.method]
    if not alternatives:
        return seq
    new_method = rng.choice(alternatives)
    seq.requests[idx] = _rebuild_request_for(spec.find(req.path, new_method), req, rng)
    _literalize_forward_references(spec, seq, rng)
    return seq


def _mutate_different_path(seq, spec, graph, rng):
    idx = rng.randrange(len(seq.requests))
    req = seq.requests[idx]
    others = [op for op in spec.operations if op.key != (req.path, req.method)]
    if not others:
        return seq
    op = rng.choice(others)
    seq.requests[idx] = request_for_operation(op, rng)
    _literalize_forward_references(spec, seq, rng)
    return seq


def _mutate_duplicate_request(seq, spec, graph, rng):
    idx = rng.randrange(len(seq.requests))
    dup = seq.requests[idx].clone()
    # sources past the insertion point move one step down
    for i, req in enumerate(seq.requests):
        if i <= idx:
            continue
        for name, value in req.params.items():
            if isinstance(value, Reference) and value.source_index > idx:
                value.source_index += 1
        if req.body is not None:
            for dotted, _c, _k in iter_body_leaves(req.body):
                value = get_body_leaf(req.body, dotted)
                if isinstance(value, Reference) and value.source_index > idx:
                    value.source_index += 1
    seq.requests.insert(idx + 1, dup)
    return seq


def _link_candidates(spec, graph, seq):
    """(slot, source index, field) for every literal that an earlier request produces."""
    out = []
    for j, req in enumerate(seq.requests):
        if j == 0:
            continue
        try:
            consumer_op = spec.find(req.path, req.method)
        except Exception:
            continue
        consumer_ctx = path_context(consumer_op.path)
        for slot in _literal_slots(RequestSequence([req])):
            _i, kind, key = slot
            real_slot = (j, kind, key)
            best = None
            for i in range(j):
                producer = seq.requests[i]
                try:
                    producer_op = spec.find(producer.path, producer.method)
                except Exception:
                    continue
                for field_path, _schema in producer_op.response_fields():
                    from .graph import names_related

                    if not names_related(field_path, producer_op.path, key):
                        continue
                    ctx_match = 0 if path_context(producer_op.path) == consumer_ctx else 1
                    score = (ctx_match, crud_rank(producer_op.method), i, field_path)
                    if best is None or score < best[0]:
                        best = (score, i, field_path)
            if best is not None:
                out.append((real_slot, best[1], best[2]))
    return out


def _mutate_establish_link(seq, spec, graph, rng):
    candidates = _link_candidates(spec, graph, seq)
    if not candidates:
        return seq
    for slot, source, field_path in candidates:
        _set_slot(seq, slot, Reference(source, field_path))
    return seq


def _mutate_remove_request(seq, spec, graph, rng):
    if len(seq.requests) <= 1:
        return seq
    idx = rng.randrange(len(seq.requests))
    del seq.requests[idx]
    for i, req in enumerate(seq.requests):
        for name, value in list(req.params.items()):
            if isinstance(value, Reference):
                if value.source_index == idx:
                    req.params[name] = _default_for_slot(spec, seq, (i, "param", name), rng)
                elif value.source_index > idx:
                    value.source_index -= 1
        if req.body is not None:
            for dotted, _c, _k in list(iter_body_leaves(req.body)):
                value = get_body_leaf(req.body, dotted)
                if isinstance(value, Reference):
                    if value.source_index == idx:
                        set_body_leaf(
                            req.body, dotted, _default_for_slot(spec, seq, (i, "body", dotted), rng)
                        )
                    elif value.source_index > idx:
                        value.source_index -= 1
    _literalize_forward_references(spec, seq, rng)
    return seq


def _mutate_string_interesting(seq, spec, graph, rng):
    slots = [
        slot
        for slot in _literal_slots(seq)
        if (schema := _slot_schema(spec, seq, slot)) is not None and schema.kind == "string"
    ]
    if not slots:
        return seq
    slot = rng.choice(slots)
    _set_slot(seq, slot, Literal(rng.choice(INTERESTING_STRINGS).encode()))
    return seq


def _mutate_swap_requests(seq, spec, graph, rng):
    if len(seq.requests) < 2:
        return seq
    i, j = sorted(rng.sample(range(len(seq.requests)), 2))
    seq.requests[i], seq.requests[j] = seq.requests[j], seq.requests[i]

    def remap(value: Reference):
        if value.source_index == i:
            value.source_index = j
        elif value.source_index == j:
            value.source_index = i

    for req in seq.requests:
        for value in req.params.values():
            if isinstance(value, Reference):
                remap(value)
        if req.body is not None:
            for dotted, _c, _k in iter_body_leaves(req.body):
                value = get_body_leaf(req.body, dotted)
                if isinstance(value, Reference):
                    remap(value)
    _literalize_forward_references(spec, seq, rng)
    return seq


_SEQUENCE_DISPATCH = {
    "AddRequest": _mutate_add_request,
    "BreakLink": _mutate_break_link,
    "DifferentMethod": _mutate_different_method,
    "DifferentPath": _mutate_different_path,
    "DuplicateRequest": _mutate_duplicate_request,
    "EstablishLink": _mutate_establish_link,
    "RemoveRequest": _mutate_remove_request,
    "StringInteresting": _mutate_string_interesting,
    "SwapRequests": _mutate_swap_requests,
}


def apply_sequence_mutator(
    kind: str,
    seq: RequestSequence,
    spec: ApiSpec,
    graph: DependencyGraph,
    rng: random.Random,
) -> RequestSequence:
    try:
        fn = _SEQUENCE_DISPATCH[kind]
    except KeyError:
        raise ValueError(f"unknown sequence mutator {kind}") from None
    return fn(seq.clone(), spec, graph, rng)


def mutate(
    seq: RequestSequence,
    spec: ApiSpec,
    graph: DependencyGraph,
    rng: random.Random,
) -> RequestSequence:
    """Apply a stack of 1-4 weighted-random mutations to a copy of ``seq``."""
    out = seq.clone()
    slots = None  # literal slot list is stable under byte-level edits
    for _ in range(rng.randint(1, 4)):
        kind = pick_mutator(rng)
        if kind in _SEQUENCE_DISPATCH:
            out = _SEQUENCE_DISPATCH[kind](out, spec, graph, rng)
            slots = None
        else:
            if slots is None:
                slots = _literal_slots(out)
            if not slots:
                continue  # never mutate reference values directly
            slot = rng.choice(slots)
            value = _get_slot(out, slot)
            _set_slot(out, slot, Literal(apply_byte_mutator(kind, value.value, rng)))
    return out
