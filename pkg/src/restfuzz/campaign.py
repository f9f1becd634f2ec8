"""Campaign orchestration: generate/load seeds, then select-mutate-execute-check.

One loop owns everything: the corpus, the coverage maps, the HTTP client and
the coverage-agent client, the event log. Execution is strictly sequential
per child because line coverage is fetched and reset after every sequence.
"""

from __future__ import annotations

import dataclasses
import logging
import random
import time
from dataclasses import dataclass, field
from pathlib import Path

from . import corpus as corpus_mod
from .coverage import CoverageAgentClient, CoverageSnapshot, EndpointCoverageMap, novelty
from .errors import AgentUnreachable, ConfigError, UnknownOperation
from .graph import build_dependency_graph
from .harness import ClientConfig, HttpClient, Verdict, check_response, execute_sequence
from .openapi import load_spec
from .reporting import (
    EventLog,
    EventLogHandler,
    render_corpus_report,
    render_dependency_graph_markdown,
    render_endpoint_coverage_report,
)
from .scheduler import SCHEDULES, Corpus, assign_energy

logger = logging.getLogger(__name__)


@dataclass
class CampaignConfig:
    spec_path: str
    base_url: str = ""
    timeout_ms: int = 2000
    auth_header_name: str | None = None
    auth_header_value: str | None = None
    agent_url: str | None = None
    fetch_timeout_ms: int = 2000
    scheduler_kind: str = "fast"
    checker_mode: str = "strict"
    time_budget_s: float = 60.0
    rng_seed: int = 0
    corpus_dir: str | None = None
    report_dir: str = "report"
    max_energy: int = 64
    max_sequences: int = 0  # 0 = unlimited; a cap makes replays comparable

    def validate(self):
        if self.time_budget_s <= 0:
            raise ConfigError("time_budget must be > 0")
        if not self.base_url:
            raise ConfigError("target.base_url is required")
        if self.scheduler_kind not in SCHEDULES:
            raise ConfigError(f"unknown scheduler.kind {self.scheduler_kind!r}")
        if self.checker_mode not in ("strict", "server-error"):
            raise ConfigError(f"unknown checker.mode {self.checker_mode!r}")
        if self.max_energy < 1:
            raise ConfigError("max_energy must be >= 1")


def config_from_dict(data: dict, spec_path: str | None = None) -> CampaignConfig:
    """Build a config from TOML-shaped sections mirroring the per-module keys."""
    target = data.get("target", {})
    coverage = data.get("coverage", {})
    checker = data.get("checker", {})
    scheduler = data.get("scheduler", {})
    campaign = data.get("campaign", {})
    return CampaignConfig(
        spec_path=spec_path or str(campaign.get("spec_path", "")),
        base_url=str(target.get("base_url", "")),
        timeout_ms=int(target.get("timeout_ms", 2000)),
        auth_header_name=target.get("auth_header_name"),
        auth_header_value=target.get("auth_header_value"),
        agent_url=coverage.get("agent_url"),
        fetch_timeout_ms=int(coverage.get("fetch_timeout_ms", 2000)),
        scheduler_kind=str(scheduler.get("kind", "fast")),
        checker_mode=str(checker.get("mode", "strict")),
        time_budget_s=float(campaign.get("time_budget_s", 60)),
        rng_seed=int(campaign.get("rng_seed", 0)),
        corpus_dir=campaign.get("corpus_dir"),
        report_dir=str(campaign.get("report_dir", "report")),
        max_energy=int(campaign.get("max_energy", 64)),
        max_sequences=int(campaign.get("max_sequences", 0)),
    )


@dataclass
class CampaignStats:
    sequences_executed: int = 0
    requests_sent: int = 0
    verdicts: dict[str, int] = field(default_factory=dict)
    findings: int = 0
    endpoint_bits_new: int = 0
    line_bits_new: int = 0
    corpus_size: int = 0
    response_covered: int = 0
    response_denominator: int = 0
    started_at: str = ""
    finished_at: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def tick_stats(stats: CampaignStats, event: dict) -> CampaignStats:
    """Pure fold of one event-log record into the counters."""
    new = dataclasses.replace(stats, verdicts=dict(stats.verdicts))
    if event.get("kind") not in ("seed_exec", "child_exec", "finding"):
        return new
    records = event.get("records", [])
    new.sequences_executed += 1
    new.requests_sent += len(records)
    for record in records:
        verdict = record.get("verdict", "")
        new.verdicts[verdict] = new.verdicts.get(verdict, 0) + 1
    if event.get("kind") == "finding":
        new.findings += 1
    nov = event.get("novelty", {})
    new.endpoint_bits_new += int(nov.get("endpoint", 0))
    new.line_bits_new += int(nov.get("line", 0))
    return new


class _Campaign:
    def __init__(self, config: CampaignConfig):
        config.validate()
        self.config = config
        self.spec = load_spec(config.spec_path)
        if not self.spec.operations:
            raise ConfigError("spec declares no operations")
        self.graph = build_dependency_graph(self.spec)
        seed = config.rng_seed
        self.derived_seed = None
        if seed == 0:
            seed = time.time_ns() & 0xFFFFFFFFFFFFFFFF
            self.derived_seed = seed
        self.rng = random.Random(seed)
        self.client = HttpClient(
            ClientConfig(
                base_url=config.base_url,
                timeout_ms=config.timeout_ms,
                auth_header_name=config.auth_header_name,
                auth_header_value=config.auth_header_value,
            )
        )
        self.agent: CoverageAgentClient | None = None
        if config.agent_url:
            self.agent = CoverageAgentClient(config.agent_url, config.fetch_timeout_ms)
        self.endpoint_map = EndpointCoverageMap(self.spec)
        self.seen_endpoint: set[int] = set()
        self.seen_line: set[int] = set()
        self.corpus = Corpus()
        self.example_index: dict[tuple[str, str, int], dict] = {}
        self.stats = CampaignStats()

    def _fetch_line_delta(self, events: EventLog):
        if self.agent is None:
            return None
        try:
            return self.agent.fetch(reset=True)
        except AgentUnreachable as exc:
            # mid-campaign agent loss: downgrade to black-box and keep going
            events.append_warning(f"coverage agent lost, continuing black-box: {exc}")
            self.agent = None
            return None

    def _execute_one(self, seq, kind: str, events: EventLog):
        records = execute_sequence(seq, self.client, self.spec, self.rng)
        verdicts = []
        for record in records:
            try:
                verdicts.append(check_response(self.spec, record, self.config.checker_mode))
            except UnknownOperation:
                if record.ok and 500 <= (record.status or 0) <= 599:
                    verdicts.append(Verdict.SERVER_ERROR)
                elif record.ok:
                    verdicts.append(Verdict.EXPECTED_STATUS)
                else:
                    verdicts.append(Verdict.TRANSPORT_FAILURE)
        touched = self.endpoint_map.record_responses(records)
        for i, record in enumerate(records):
            if record.ok:
                key = (record.path, record.method, record.status)
                if key not in self.example_index:
                    self.example_index[key] = corpus_mod.sequence_to_dict(
                        corpus_mod.RequestSequence([seq.requests[i]])
                    )["requests"][0]
        snapshot = CoverageSnapshot(endpoint=touched, line=self._fetch_line_delta(events))
        nov = novelty(self.seen_endpoint, self.seen_line, snapshot)
        exec_time = sum(r.latency_ms for r in records)
        self.corpus.add_if_interesting(seq, snapshot, exec_time, tick=events.tick)
        final_kind = "finding" if Verdict.SERVER_ERROR in verdicts else kind
        event = {
            "kind": final_kind,
            "records": [
                {"status": r.status, "transport": r.transport, "verdict": v.value}
                for r, v in zip(records, verdicts)
            ],
            "novelty": {"endpoint": len(nov.endpoint), "line": len(nov.line)},
        }
        events.append_execution(final_kind, seq, records, verdicts, nov)
        self.stats = tick_stats(self.stats, event)

    def run(self) -> CampaignStats:
        config = self.config
        report_dir = Path(config.report_dir)
        report_dir.mkdir(parents=True, exist_ok=True)

        if self.agent is not None:
            # fail fast on an unreachable agent, and clear stale coverage
            self.agent.fetch(reset=True)

        seeds = None
        if config.corpus_dir:
            corpus_path = Path(config.corpus_dir)
            if corpus_path.is_dir() and any(corpus_path.glob("*.json")):
                seeds = corpus_mod.load_corpus(corpus_path)
        if seeds is None:
            seeds = corpus_mod.generate_corpus(self.spec, self.graph, self.rng)

        self.stats.started_at = _iso_now()
        events = EventLog(report_dir / "events.jsonl")
        handler = EventLogHandler(events)
        package_logger = logging.getLogger(__name__.rsplit(".", 1)[0])
        package_logger.addHandler(handler)
        if self.derived_seed is not None:
            events.append_warning(f"rng_seed 0: derived seed {self.derived_seed} from clock")
        deadline = time.monotonic() + config.time_budget_s

        def budget_left() -> bool:
            if time.monotonic() >= deadline:
                return False
            if config.max_sequences and self.stats.sequences_executed >= config.max_sequences:
                return False
            return True

        try:
            for seq in seeds:
                if not budget_left():
                    break
                self._execute_one(seq, "seed_exec", events)
            from .mutators import mutate

            while budget_left() and len(self.corpus):
                entry = self.corpus.select_next()
                energy = min(
                    assign_energy(entry, config.scheduler_kind, self.corpus), config.max_energy
                )
                self.corpus.mark_fuzzed(entry)
                for _ in range(energy):
                    if not budget_left():
                        break
                    child = mutate(entry.sequence, self.spec, self.graph, self.rng)
                    self._execute_one(child, "child_exec", events)
        finally:
            package_logger.removeHandler(handler)
            events.close()
            self.client.close()
            if self.agent is not None:
                self.agent.close()

        self.stats.finished_at = _iso_now()
        covered, denominator = self.endpoint_map.response_coverage()
        self.stats.response_covered = covered
        self.stats.response_denominator = denominator
        self.stats.corpus_size = len(self.corpus)

        (report_dir / "dependency_graph.md").write_text(
            render_dependency_graph_markdown(self.graph), encoding="utf-8"
        )
        (report_dir / "corpus.md").write_text(render_corpus_report(seeds), encoding="utf-8")
        (report_dir / "endpoint_coverage.md").write_text(
            render_endpoint_coverage_report(self.endpoint_map, self.example_index),
            encoding="utf-8",
        )
        import json as _json

        (report_dir / "stats.json").write_text(
            _json.dumps(self.stats.to_dict(), indent=2) + "\n", encoding="utf-8"
        )
        return self.stats


def run_campaign(config: CampaignConfig) -> CampaignStats:
    return _Campaign(config).run()


def _iso_now() -> str:
    from datetime import datetime, timezone

    return datetime.now(timezone.utc).isoformat(timespec="milliseconds")
