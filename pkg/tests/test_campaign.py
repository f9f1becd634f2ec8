import json
from pathlib import Path

import pytest

from restfuzz.campaign import CampaignConfig, CampaignStats, config_from_dict, run_campaign, tick_stats
from restfuzz.cli import main as cli_main
from restfuzz.errors import AgentUnreachable, ConfigError


def _config(mock_target, minipet_path, tmp_path, **kwargs):
    defaults = dict(
        spec_path=minipet_path,
        base_url=mock_target.base_url,
        time_budget_s=10.0,
        rng_seed=1,
        report_dir=str(tmp_path / "report"),
        max_sequences=120,
    )
    defaults.update(kwargs)
    return CampaignConfig(**defaults)


def test_zero_budget_rejected(minipet_path, tmp_path):
    config = CampaignConfig(spec_path=minipet_path, base_url="http://x", time_budget_s=0)
    with pytest.raises(ConfigError):
        run_campaign(config)


def test_unknown_schedule_rejected(minipet_path):
    config = CampaignConfig(
        spec_path=minipet_path, base_url="http://x", scheduler_kind="speedy"
    )
    with pytest.raises(ConfigError):
        config.validate()


def test_unreachable_agent_is_fatal_at_startup(mock_target, minipet_path, tmp_path):
    config = _config(mock_target, minipet_path, tmp_path, agent_url="http://127.0.0.1:9")
    with pytest.raises(AgentUnreachable):
        run_campaign(config)


def test_short_campaign_produces_reports_and_stats(mock_target, minipet_path, tmp_path):
    stats = run_campaign(_config(mock_target, minipet_path, tmp_path))
    report = tmp_path / "report"
    assert stats.sequences_executed == 120
    assert stats.requests_sent >= stats.sequences_executed
    assert stats.response_denominator == 16
    for name in ("events.jsonl", "dependency_graph.md", "corpus.md", "endpoint_coverage.md", "stats.json"):
        assert (report / name).exists()
    saved = json.loads((report / "stats.json").read_text())
    assert saved["sequences_executed"] == 120


def test_seeds_executed_before_children(mock_target, minipet_path, tmp_path):
    run_campaign(_config(mock_target, minipet_path, tmp_path, max_sequences=20))
    events = [json.loads(l) for l in (tmp_path / "report" / "events.jsonl").open()]
    kinds = [e["kind"] for e in events if e["kind"] != "warning"]
    assert kinds[:8] == ["seed_exec"] * 8
    assert "child_exec" in kinds[8:]


def test_preloaded_corpus_is_used(mock_target, minipet_path, tmp_path):
    corpus_dir = tmp_path / "corpus"
    corpus_dir.mkdir()
    (corpus_dir / "0000.json").write_text(
        json.dumps(
            {
                "version": 1,
                "requests": [{"method": "POST", "path": "/store", "params": {}, "body": None}],
            }
        )
    )
    run_campaign(
        _config(mock_target, minipet_path, tmp_path, corpus_dir=str(corpus_dir), max_sequences=5)
    )
    events = [json.loads(l) for l in (tmp_path / "report" / "events.jsonl").open()]
    seeds = [e for e in events if e["kind"] == "seed_exec"]
    assert len(seeds) == 1
    assert seeds[0]["seq"]["requests"][0]["path"] == "/store"


def test_white_box_campaign_collects_line_bits(mock_target, minipet_path, tmp_path):
    stats = run_campaign(
        _config(mock_target, minipet_path, tmp_path, agent_url=mock_target.agent_url)
    )
    assert stats.line_bits_new > 0


def test_derived_seed_logged_for_seed_zero(mock_target, minipet_path, tmp_path):
    run_campaign(_config(mock_target, minipet_path, tmp_path, rng_seed=0, max_sequences=10))
    events = [json.loads(l) for l in (tmp_path / "report" / "events.jsonl").open()]
    assert any("derived seed" in e.get("message", "") for e in events if e["kind"] == "warning")


# --- tick_stats --------------------------------------------------------------


def _exec_event(kind="child_exec", verdicts=("ExpectedStatus",), novelty=(0, 0)):
    return {
        "kind": kind,
        "records": [{"status": 200, "transport": "ok", "verdict": v} for v in verdicts],
        "novelty": {"endpoint": novelty[0], "line": novelty[1]},
    }


def test_tick_stats_counts_verdicts():
    stats = tick_stats(CampaignStats(), _exec_event(verdicts=("ServerError", "ExpectedStatus")))
    assert stats.sequences_executed == 1
    assert stats.requests_sent == 2
    assert stats.verdicts == {"ServerError": 1, "ExpectedStatus": 1}


def test_tick_stats_is_pure():
    base = CampaignStats()
    tick_stats(base, _exec_event())
    assert base.sequences_executed == 0


def test_tick_stats_commutative():
    a = _exec_event(verdicts=("ServerError",), novelty=(1, 0))
    b = _exec_event(kind="finding", verdicts=("ExpectedStatus",), novelty=(0, 2))
    left = tick_stats(tick_stats(CampaignStats(), a), b)
    right = tick_stats(tick_stats(CampaignStats(), b), a)
    assert left == right


def test_tick_stats_empty_stream_is_zero():
    stats = CampaignStats()
    assert stats.sequences_executed == 0 and stats.requests_sent == 0


def test_tick_stats_ignores_warnings():
    stats = tick_stats(CampaignStats(), {"kind": "warning", "message": "x"})
    assert stats.sequences_executed == 0


# --- config loading -----------------------------------------------------------


def test_config_from_dict_mirrors_module_keys():
    config = config_from_dict(
        {
            "target": {"base_url": "http://t", "timeout_ms": 500, "auth_header_name": "X-K", "auth_header_value": "v"},
            "coverage": {"agent_url": "http://a", "fetch_timeout_ms": 900},
            "scheduler": {"kind": "coe"},
            "checker": {"mode": "server-error"},
            "campaign": {"time_budget_s": 5, "rng_seed": 9, "report_dir": "out", "max_sequences": 3},
        },
        spec_path="spec.yaml",
    )
    assert config.base_url == "http://t"
    assert config.timeout_ms == 500
    assert config.agent_url == "http://a"
    assert config.scheduler_kind == "coe"
    assert config.checker_mode == "server-error"
    assert config.time_budget_s == 5
    assert config.rng_seed == 9
    assert config.max_sequences == 3
    assert config.auth_header_name == "X-K"


# --- CLI ----------------------------------------------------------------------


def test_cli_gen_corpus_and_report_roundtrip(mock_target, minipet_path, tmp_path, capsys):
    corpus_dir = tmp_path / "corpus"
    code = cli_main(["gen-corpus", "--spec", minipet_path, "--corpus", str(corpus_dir), "--seed", "1"])
    assert code == 0
    assert len(list(corpus_dir.glob("*.json"))) == 8

    report_dir = tmp_path / "report"
    code = cli_main(
        [
            "fuzz",
            "--spec",
            minipet_path,
            "--base-url",
            mock_target.base_url,
            "--seed",
            "1",
            "--budget",
            "5",
            "--max-seqs",
            "40",
            "--report",
            str(report_dir),
            "--corpus",
            str(corpus_dir),
        ]
    )
    assert code == 0
    replay_dir = tmp_path / "replay"
    code = cli_main(
        [
            "report",
            "--spec",
            minipet_path,
            "--events",
            str(report_dir / "events.jsonl"),
            "--report",
            str(replay_dir),
        ]
    )
    assert code == 0
    assert (replay_dir / "endpoint_coverage.md").read_text() == (
        report_dir / "endpoint_coverage.md"
    ).read_text()


def test_cli_bad_spec_exits_2(tmp_path):
    bad = tmp_path / "bad.yaml"
    bad.write_text("{: nope")
    assert cli_main(["gen-corpus", "--spec", str(bad), "--corpus", str(tmp_path / "c")]) == 2


def test_cli_zero_budget_exits_2(minipet_path, tmp_path):
    code = cli_main(
        ["fuzz", "--spec", minipet_path, "--base-url", "http://127.0.0.1:1", "--budget", "0"]
    )
    assert code == 2
