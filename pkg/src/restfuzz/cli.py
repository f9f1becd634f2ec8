"""Command line interface: fuzz, gen-corpus, report, mock.

Exit codes: 0 for a campaign that ran to its budget, 2 for configuration or
spec errors.
"""

from __future__ import annotations

import argparse
import random
import sys
from pathlib import Path

try:
    import tomllib
except ImportError:  # Python 3.10
    import tomli as tomllib

from .campaign import CampaignConfig, config_from_dict, run_campaign
from .errors import ConfigError, RestFuzzError, SpecError
from .graph import build_dependency_graph
from .openapi import load_spec
from .reporting import (
    iter_events,
    render_corpus_report,
    render_dependency_graph_markdown,
    render_endpoint_coverage_report,
    replay_coverage_from_events,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="restfuzz", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    fuzz = sub.add_parser("fuzz", help="run a fuzzing campaign")
    fuzz.add_argument("--spec", required=True, help="OpenAPI document (JSON or YAML)")
    fuzz.add_argument("--config", help="TOML configuration file")
    fuzz.add_argument("--seed", type=int, help="rng seed (0 derives one from the clock)")
    fuzz.add_argument("--budget", type=float, help="time budget in seconds")
    fuzz.add_argument("--corpus", help="corpus directory (loaded when non-empty)")
    fuzz.add_argument("--report", help="report output directory")
    fuzz.add_argument(
        "--schedule", choices=["fast", "explore", "lin", "exploit", "quad", "coe"]
    )
    fuzz.add_argument("--agent", help="coverage agent URL (white-box mode)")
    fuzz.add_argument("--checker", choices=["strict", "server-error"])
    fuzz.add_argument("--base-url", help="target base URL (overrides config/spec)")
    fuzz.add_argument("--max-seqs", type=int, help="stop after this many executed sequences")

    gen = sub.add_parser("gen-corpus", help="write the initial corpus and stop")
    gen.add_argument("--spec", required=True)
    gen.add_argument("--corpus", required=True, help="output directory")
    gen.add_argument("--seed", type=int, default=1)
    gen.add_argument("--report", help="also write dependency_graph.md and corpus.md here")

    rep = sub.add_parser("report", help="regenerate reports from an event log")
    rep.add_argument("--spec", required=True)
    rep.add_argument("--events", required=True, help="events.jsonl from a campaign")
    rep.add_argument("--report", required=True, help="output directory")
    rep.add_argument("--corpus", help="corpus directory for the corpus report")

    mock = sub.add_parser("mock", help="serve the bundled minipet mock target")
    mock.add_argument("--api-port", type=int, default=8080)
    mock.add_argument("--agent-port", type=int, default=8081)
    return parser


def _load_toml(path: str | None) -> dict:
    if not path:
        return {}
    try:
        with open(path, "rb") as fh:
            return tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config file: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"bad config file: {exc}") from exc


def _fuzz_config(args) -> CampaignConfig:
    config = config_from_dict(_load_toml(args.config), spec_path=args.spec)
    if args.base_url is not None:
        config.base_url = args.base_url
    if not config.base_url:
        # fall back to the servers entry in the spec
        config.base_url = load_spec(args.spec).base_url
    if args.seed is not None:
        config.rng_seed = args.seed
    if args.budget is not None:
        config.time_budget_s = args.budget
    if args.corpus is not None:
        config.corpus_dir = args.corpus
    if args.report is not None:
        config.report_dir = args.report
    if args.schedule is not None:
        config.scheduler_kind = args.schedule
    if args.agent is not None:
        config.agent_url = args.agent
    if args.checker is not None:
        config.checker_mode = args.checker
    if args.max_seqs is not None:
        config.max_sequences = args.max_seqs
    return config


def _cmd_fuzz(args) -> int:
    config = _fuzz_config(args)
    stats = run_campaign(config)
    print(
        f"executed {stats.sequences_executed} sequences, {stats.requests_sent} requests; "
        f"findings: {stats.findings}; response coverage "
        f"{stats.response_covered}/{stats.response_denominator}; corpus {stats.corpus_size}"
    )
    return 0


def _cmd_gen_corpus(args) -> int:
    from .corpus import generate_corpus, write_corpus

    spec = load_spec(args.spec)
    graph = build_dependency_graph(spec)
    corpus = generate_corpus(spec, graph, random.Random(args.seed))
    names = write_corpus(corpus, args.corpus)
    print(f"wrote {len(names)} seed sequences to {args.corpus}")
    if args.report:
        report_dir = Path(args.report)
        report_dir.mkdir(parents=True, exist_ok=True)
        (report_dir / "dependency_graph.md").write_text(
            render_dependency_graph_markdown(graph), encoding="utf-8"
        )
        (report_dir / "corpus.md").write_text(render_corpus_report(corpus), encoding="utf-8")
    return 0


def _cmd_report(args) -> int:
    spec = load_spec(args.spec)
    report_dir = Path(args.report)
    report_dir.mkdir(parents=True, exist_ok=True)
    coverage_map, example_index = replay_coverage_from_events(spec, iter_events(args.events))
    (report_dir / "endpoint_coverage.md").write_text(
        render_endpoint_coverage_report(coverage_map, example_index), encoding="utf-8"
    )
    graph = build_dependency_graph(spec)
    (report_dir / "dependency_graph.md").write_text(
        render_dependency_graph_markdown(graph), encoding="utf-8"
    )
    if args.corpus:
        from .corpus import load_corpus

        (report_dir / "corpus.md").write_text(
            render_corpus_report(load_corpus(args.corpus)), encoding="utf-8"
        )
    print(f"reports written to {args.report}")
    return 0


def _cmd_mock(args) -> int:
    from .minipet import main as minipet_main

    return minipet_main(["--api-port", str(args.api_port), "--agent-port", str(args.agent_port)])


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "fuzz":
            return _cmd_fuzz(args)
        if args.command == "gen-corpus":
            return _cmd_gen_corpus(args)
        if args.command == "report":
            return _cmd_report(args)
        if args.command == "mock":
            return _cmd_mock(args)
    except (ConfigError, SpecError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except RestFuzzError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    return 0


if __name__ == "__main__":
    raise SystemExit(main())
