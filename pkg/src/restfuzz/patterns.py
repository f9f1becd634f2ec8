"""Generate strings matching a regular expression, deterministically under a seed.

Walks the parse tree produced by the stdlib regex parser and emits a random
matching string. Supports the constructs that show up in OpenAPI ``pattern``
fields (literals, classes, repetition, alternation, groups, backrefs).
Anything the walker cannot satisfy within the length budget raises
:class:`UnsatisfiablePattern`.
"""

from __future__ import annotations

import random
import re

try:  # stdlib parser; renamed in newer interpreters
    from re import _parser as sre_parse  # type: ignore[attr-defined]
except ImportError:  # pragma: no cover
    import sre_parse  # type: ignore[no-redef]

from .errors import UnsatisfiablePattern

MAX_GENERATED_LENGTH = 256

# Bounded expansion for unbounded quantifiers like ``*`` and ``+``.
_REPEAT_CAP = 8

_WORD_CHARS = "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789_"
_DIGITS = "0123456789"
_SPACES = " \t"
_PRINTABLE = (
    "abcdefghijklmnopqrstuvwxyzABCDEFGHIJKLMNOPQRSTUVWXYZ0123456789"
    " !#$%&()*+,-./:;<=>?@[]^_{|}~"
)


def _category_chars(category) -> str:
    name = str(category)
    if "CATEGORY_DIGIT" in name:
        return _DIGITS
    if "CATEGORY_NOT_DIGIT" in name:
        return "".join(c for c in _PRINTABLE if c not in _DIGITS)
    if "CATEGORY_SPACE" in name:
        return _SPACES
    if "CATEGORY_NOT_SPACE" in name:
        return "".join(c for c in _PRINTABLE if c not in _SPACES)
    if "CATEGORY_WORD" in name:
        return _WORD_CHARS
    if "CATEGORY_NOT_WORD" in name:
        return "".join(c for c in _PRINTABLE if c not in _WORD_CHARS)
    raise UnsatisfiablePattern(f"unsupported character category {name}")


def _in_chars(items) -> str:
    """Character pool for an IN (character class) node."""
    negate = False
    chars: list[str] = []
    for op, value in items:
        name = str(op)
        if "NEGATE" in name:
            negate = True
        elif "LITERAL" in name:
            chars.append(chr(value))
        elif "RANGE" in name:
            lo, hi = value
            chars.extend(chr(c) for c in range(lo, min(hi, 0x10FFFF) + 1))
        elif "CATEGORY" in name:
            chars.extend(_category_chars(value))
        else:
            raise UnsatisfiablePattern(f"unsupported class item {name}")
    if negate:
        excluded = set(chars)
        pool = [c for c in _PRINTABLE if c not in excluded]
    else:
        pool = chars
    if not pool:
        raise UnsatisfiablePattern("empty character class")
    return "".join(pool)


def _walk(tree, rng: random.Random, groups: dict[int, str], budget: list[int]) -> str:
    out: list[str] = []
    for op, value in tree:
        if budget[0] <= 0:
            raise UnsatisfiablePattern("length budget exhausted")
        name = str(op)
        if "LITERAL" in name and "NOT" not in name:
            out.append(chr(value))
            budget[0] -= 1
        elif "NOT_LITERAL" in name:
            pool = [c for c in _PRINTABLE if ord(c) != value]
            out.append(rng.choice(pool))
            budget[0] -= 1
        elif name.endswith("ANY"):
            out.append(rng.choice(_PRINTABLE))
            budget[0] -= 1
        elif name.endswith("IN"):
            out.append(rng.choice(_in_chars(value)))
            budget[0] -= 1
        elif "CATEGORY" in name:
            out.append(rng.choice(_category_chars(value)))
            budget[0] -= 1
        elif "MAX_REPEAT" in name or "MIN_REPEAT" in name:
            lo, hi, sub = value
            if hi == sre_parse.MAXREPEAT:
                hi = lo + _REPEAT_CAP
            count = rng.randint(lo, hi)
            for _ in range(count):
                out.append(_walk(sub, rng, groups, budget))
        elif "SUBPATTERN" in name:
            group_no = value[0]
            text = _walk(value[-1], rng, groups, budget)
            if group_no:
                groups[group_no] = text
            out.append(text)
        elif "BRANCH" in name:
            out.append(_walk(rng.choice(value[1]), rng, groups, budget))
        elif "GROUPREF" in name and "EXISTS" not in name:
            text = groups.get(value, "")
            budget[0] -= len(text)
            out.append(text)
        elif name.endswith("AT"):
            pass  # anchors contribute nothing
        elif "ASSERT" in name:
            pass  # look-arounds are not synthesised, only ignored
        else:
            raise UnsatisfiablePattern(f"unsupported regex construct {name}")
    return "".join(out)


def generate_match(pattern: str, rng: random.Random, attempts: int = 8) -> str:
    """Return a string matching ``pattern`` with length <= 256.

    Deterministic for a given rng state. Raises UnsatisfiablePattern when no
    attempt produces a verified match within the budget.
    """
    try:
        compiled = re.compile(pattern)
        tree = sre_parse.parse(pattern)
    except re.error as exc:
        raise UnsatisfiablePattern(f"invalid pattern {pattern!r}: {exc}") from exc
    last_error = None
    for _ in range(attempts):
        budget = [MAX_GENERATED_LENGTH]
        try:
            candidate = _walk(tree, rng, {}, budget)
        except UnsatisfiablePattern as exc:
            last_error = exc
            continue
        if len(candidate) <= MAX_GENERATED_LENGTH and compiled.fullmatch(candidate):
            return candidate
    raise UnsatisfiablePattern(
        f"no match of length <= {MAX_GENERATED_LENGTH} found for {pattern!r}"
        + (f": {last_error}" if last_error else "")
    )
