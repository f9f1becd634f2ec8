"""Interop against the out-of-process TypeScript reimplementation (A9).

The reference target lives in reference-target/ and speaks the same API and
coverage protocol, but its line bits come from genuine V8 instrumentation.
Requires node and the compiled dist/ (npm run build); both ship with the
repository.
"""

import base64
import json
import re
import shutil
import subprocess
import time
import urllib.request
from pathlib import Path

import pytest

from restfuzz.campaign import CampaignConfig, run_campaign
from restfuzz.coverage import fetch_line_coverage

TARGET_DIR = Path(__file__).resolve().parent.parent / "reference-target"


@pytest.fixture(scope="module")
def reference_target():
    if shutil.which("node") is None:
        pytest.skip("node is not installed")
    entry = TARGET_DIR / "dist" / "main.js"
    if not entry.exists():
        pytest.skip("reference target not built (run: cd reference-target && npm install && npm run build)")
    proc = subprocess.Popen(
        ["node", str(entry), "--api-port", "0", "--agent-port", "0"],
        stdout=subprocess.PIPE,
        stderr=subprocess.DEVNULL,
        text=True,
    )
    line = proc.stdout.readline()
    match = re.search(r"api on (\S+) agent on (\S+)", line)
    if not match:
        proc.kill()
        raise RuntimeError(f"reference target failed to start: {line!r}")
    yield {"base_url": match.group(1), "agent_url": match.group(2)}
    proc.terminate()
    proc.wait(timeout=5)


def test_a9_interop(reference_target, minipet_path, tmp_path):
    started = time.perf_counter()

    # raw protocol conformance of /coverage
    with urllib.request.urlopen(reference_target["agent_url"] + "/coverage?reset=true") as resp:
        payload = json.loads(resp.read())
    assert payload["format"] == "wuppie-cov-1"
    assert isinstance(payload["total_bits"], int) and payload["total_bits"] > 0
    bitmap = base64.b64decode(payload["bitmap"], validate=True)
    assert len(bitmap) == (payload["total_bits"] + 7) // 8

    # the protocol client accepts it and the reset law holds before traffic
    cov = fetch_line_coverage(reference_target["agent_url"], reset=True)
    assert cov.total_bits == payload["total_bits"]
    assert fetch_line_coverage(reference_target["agent_url"], reset=False).popcount() == 0

    stats = run_campaign(
        CampaignConfig(
            spec_path=minipet_path,
            base_url=reference_target["base_url"],
            agent_url=reference_target["agent_url"],
            scheduler_kind="fast",
            time_budget_s=30,
            rng_seed=1,
            report_dir=str(tmp_path / "report"),
        )
    )
    assert stats.line_bits_new > 0, "no line bit ever registered novelty"

    b1 = False
    with open(tmp_path / "report" / "events.jsonl") as fh:
        for raw in fh:
            event = json.loads(raw)
            if event.get("kind") != "finding":
                continue
            requests = event["seq"]["requests"]
            for i, record in enumerate(event.get("records", [])):
                if (
                    record.get("status") == 500
                    and i < len(requests)
                    and requests[i]["path"] == "/pet/{id}"
                    and requests[i]["method"] == "PUT"
                ):
                    b1 = True
    assert b1, "B1 not found against the reference target"

    elapsed = time.perf_counter() - started
    assert elapsed <= 60, f"interop run took {elapsed:.0f}s"
    print(f"\nA9 PASS line bits {stats.line_bits_new}, B1 found, {elapsed:.0f}s")
