"""Reports: dependency graph, initial corpus, endpoint coverage, event log.

The first three render Markdown with embedded Mermaid; the event log is
line-delimited JSON, one self-contained object per executed sequence or
warning, and is sufficient to regenerate the endpoint-coverage report
byte-identically (the ``report`` subcommand does exactly that).
"""

from __future__ import annotations

import json
import logging
import re
from datetime import datetime, timezone

from .corpus import Reference, RequestSequence, sequence_from_dict, sequence_to_dict
from .coverage import EndpointCoverageMap, Novelty
from .graph import DependencyGraph
from .harness import ResponseRecord, Verdict
from .openapi import ApiSpec

EVENT_VERSION = 1

_SANITIZE_RE = re.compile(r"[^A-Za-z0-9]+")


def _node_id(path: str, method: str) -> str:
    return _SANITIZE_RE.sub("_", f"{method} {path}").strip("_")


def render_dependency_graph_markdown(graph: DependencyGraph) -> str:
    """Mermaid digraph of operations with one labelled edge per linked value."""
    lines = [
        "# API dependency graph",
        "",
        "Nodes are endpoint/method combinations; an edge `field → param` means",
        "the producer's response field feeds the consumer's parameter.",
        "",
        "```mermaid",
        "graph TD",
    ]
    for path, method in graph.nodes:
        lines.append(f'    {_node_id(path, method)}["{method} {path}"]')
    for edge in graph.edges:
        src = _node_id(*edge.producer)
        dst = _node_id(*edge.consumer)
        lines.append(f"    {src} -->|{edge.field} → {edge.param}| {dst}")
    lines.append("```")
    lines.append("")
    return "\n".join(lines)


def render_corpus_report(corpus: list[RequestSequence]) -> str:
    """One Mermaid flowchart per seed: the request chain plus reference edges."""
    lines = ["# Initial corpus", ""]
    for k, seq in enumerate(corpus):
        lines.append(f"## Seed {k}")
        lines.append("")
        lines.append("```mermaid")
        lines.append("graph TD")
        for i, req in enumerate(seq.requests):
            lines.append(f'    s{k}r{i}["{i}: {req.method} {req.path}"]')
        for i in range(1, len(seq.requests)):
            lines.append(f"    s{k}r{i - 1} --> s{k}r{i}")
        for i, req in enumerate(seq.requests):
            for name, value in req.params.items():
                if isinstance(value, Reference):
                    lines.append(
                        f"    s{k}r{value.source_index} -.->|{value.field_path} → {name}| s{k}r{i}"
                    )
            if req.body is not None:
                from .corpus import iter_body_leaves, get_body_leaf

                for dotted, _c, _k in iter_body_leaves(req.body):
                    value = get_body_leaf(req.body, dotted)
                    if isinstance(value, Reference):
                        lines.append(
                            f"    s{k}r{value.source_index} -.->|{value.field_path} → {dotted}| s{k}r{i}"
                        )
        lines.append("```")
        lines.append("")
    return "\n".join(lines)


def _anchor(path: str, method: str, status: int) -> str:
    return f"ex-{_node_id(path, method)}-{status}"


def render_endpoint_coverage_report(
    coverage_map: EndpointCoverageMap,
    example_index: dict[tuple[str, str, int], dict],
) -> str:
    """Check/cross/warning table per operation, with example-request anchors.

    A checkmark marks a listed status that was triggered, a cross a listed
    status that was not, a warning sign an unlisted status that was.
    """
    listed = coverage_map.registry[: coverage_map.listed_count]
    appended = coverage_map.registry[coverage_map.listed_count :]
    by_op: dict[tuple[str, str], list[tuple[int, bool, bool]]] = {}
    for idx, triple in enumerate(listed):
        by_op.setdefault((triple[0], triple[1]), []).append(
            (triple[2], coverage_map.bits[idx], False)
        )
    for offset, triple in enumerate(appended):
        idx = coverage_map.listed_count + offset
        if coverage_map.bits[idx]:
            by_op.setdefault((triple[0], triple[1]), []).append((triple[2], True, True))

    lines = ["# Endpoint coverage", ""]
    covered, total = coverage_map.response_coverage()
    lines.append(f"Response coverage: **{covered}/{total}**")
    lines.append("")
    lines.append("| Endpoint | Status | Result |")
    lines.append("|---|---|---|")
    examples: list[tuple[str, dict]] = []
    for (path, method), rows in by_op.items():
        for status, hit, unlisted in rows:
            if unlisted:
                mark = "⚠"
            elif hit:
                mark = "✓"
            else:
                mark = "✗"
            if hit:
                anchor = _anchor(path, method, status)
                cell = f"[{status}](#{anchor}) {mark}"
                example = example_index.get((path, method, status))
                if example is not None:
                    examples.append((anchor, example))
            else:
                cell = f"{status} {mark}"
            lines.append(f"| `{method} {path}` | {cell} | {'hit' if hit else 'not hit'} |")
    if examples:
        lines.append("")
        lines.append("## Example requests")
        for anchor, example in examples:
            lines.append("")
            lines.append(f'<a id="{anchor}"></a>')
            lines.append(f"### {anchor}")
            lines.append("")
            lines.append("```json")
            lines.append(json.dumps(example, indent=2, ensure_ascii=True))
            lines.append("```")
    lines.append("")
    return "\n".join(lines)


class EventLog:
    """Append-only line-delimited JSON event stream with a monotone tick."""

    def __init__(self, path):
        self._fh = open(path, "w", encoding="utf-8")
        self.tick = 0

    def close(self):
        if not self._fh.closed:
            self._fh.close()

    def __enter__(self):
        return self

    def __exit__(self, *exc):
        self.close()

    def append_execution(
        self,
        kind: str,
        seq: RequestSequence,
        records: list[ResponseRecord],
        verdicts: list[Verdict],
        novelty: Novelty,
    ) -> int:
        event = {
            "v": EVENT_VERSION,
            "tick": self.tick,
            "ts": _now_iso(),
            "kind": kind,
            "seq": sequence_to_dict(seq),
            "records": [
                {
                    "status": record.status,
                    "transport": record.transport,
                    "latency_ms": int(record.latency_ms),
                    "verdict": verdict.value,
                }
                for record, verdict in zip(records, verdicts)
            ],
            "novelty": {"endpoint": len(novelty.endpoint), "line": len(novelty.line)},
        }
        return self._write(event)

    def append_warning(self, message: str) -> int:
        return self._write(
            {
                "v": EVENT_VERSION,
                "tick": self.tick,
                "ts": _now_iso(),
                "kind": "warning",
                "message": message,
            }
        )

    def _write(self, event: dict) -> int:
        line = json.dumps(event, ensure_ascii=True, separators=(",", ":"))
        self._fh.write(line + "\n")
        self._fh.flush()
        tick = self.tick
        self.tick += 1
        return tick


class EventLogHandler(logging.Handler):
    """Bridges package warnings into the campaign's event log."""

    # mutated children can trip the same fallback paths thousands of times
    MAX_WARNINGS = 1000

    def __init__(self, log: EventLog):
        super().__init__(level=logging.WARNING)
        self._log = log
        self._emitted = 0

    def emit(self, record: logging.LogRecord):
        if self._emitted > self.MAX_WARNINGS:
            return
        try:
            self._emitted += 1
            if self._emitted > self.MAX_WARNINGS:
                self._log.append_warning("further warnings suppressed")
                return
            self._log.append_warning(record.getMessage())
        except Exception:  # the log may already be closed during teardown
            pass


def _now_iso() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")


def iter_events(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            line = line.strip()
            if line:
                yield json.loads(line)


def replay_coverage_from_events(
    spec: ApiSpec, events
) -> tuple[EndpointCoverageMap, dict[tuple[str, str, int], dict]]:
    """Rebuild the endpoint-coverage state a finished campaign had.

    Consumes event dicts in log order; execution events contribute their
    per-request statuses, warnings are skipped. Returns the map plus the
    first-hitting example request per covered triple.
    """
    coverage_map = EndpointCoverageMap(spec)
    example_index: dict[tuple[str, str, int], dict] = {}
    for event in events:
        if event.get("kind") not in ("seed_exec", "child_exec", "finding"):
            continue
        seq = sequence_from_dict(event["seq"])
        for i, record in enumerate(event.get("records", [])):
            if record.get("transport") != "ok":
                continue
            status = record.get("status")
            if not isinstance(status, int) or i >= len(seq.requests):
                continue
            req = seq.requests[i]
            coverage_map.bits[coverage_map.endpoint_bit(req.path, req.method, status)] = True
            key = (req.path, req.method, status)
            if key not in example_index:
                example_index[key] = sequence_to_dict(RequestSequence([req]))["requests"][0]
    return coverage_map, example_index
