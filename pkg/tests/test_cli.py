import json

import pytest
from click.testing import CliRunner

from vet.cli import main


@pytest.fixture(scope="module")
def proved(tmp_path_factory):
    out = tmp_path_factory.mktemp("cli") / "demo-out"
    runner = CliRunner()
    result = runner.invoke(main, ["prove", "--seed", "0", "--out", str(out)])
    assert result.exit_code == 0, result.output
    return out


def _claim(proved):
    bundle = json.loads((proved / "bundle.json").read_text())
    return bundle["trace"]["steps"][-1]["core_output"]


def test_prove_writes_artifacts(proved):
    assert (proved / "aid.json").exists()
    assert (proved / "bundle.json").exists()
    assert list((proved / "templates").glob("*.json"))


def test_aid_hash_and_validate(proved):
    runner = CliRunner()
    result = runner.invoke(main, ["aid", "hash", str(proved / "aid.json")])
    assert result.exit_code == 0
    aid_id = result.output.strip()
    assert aid_id == json.loads((proved / "aid.json").read_text())["agent_hash"]
    result = runner.invoke(
        main,
        ["aid", "validate", str(proved / "aid.json"), "--templates", str(proved / "templates")],
    )
    assert result.exit_code == 0
    assert "ok" in result.output


def test_aid_validate_failure(proved, tmp_path):
    doc = json.loads((proved / "aid.json").read_text())
    doc["core"]["endpoint"] = "not-a-url"
    bad = tmp_path / "bad.json"
    bad.write_text(json.dumps(doc))
    result = CliRunner().invoke(main, ["aid", "validate", str(bad)])
    assert result.exit_code == 1


def test_verify_accept_and_reject(proved):
    runner = CliRunner()
    args = [
        "verify",
        "--aid", str(proved / "aid.json"),
        "--bundle", str(proved / "bundle.json"),
        "--templates", str(proved / "templates"),
    ]
    accept = runner.invoke(main, args + ["--claim", _claim(proved)])
    assert accept.exit_code == 0
    assert "accept" in accept.output

    reject = runner.invoke(main, args + ["--claim", "forged claim", "--json"])
    assert reject.exit_code == 1
    report = json.loads(reject.output)
    assert report["result"] == "reject"
    assert report["reason"] == "output-not-found"


def test_verify_claim_from_file(proved, tmp_path):
    claim_file = tmp_path / "claim.txt"
    claim_file.write_text(_claim(proved))
    result = CliRunner().invoke(
        main,
        [
            "verify",
            "--aid", str(proved / "aid.json"),
            "--bundle", str(proved / "bundle.json"),
            "--templates", str(proved / "templates"),
            "--claim", f"@{claim_file}",
        ],
    )
    assert result.exit_code == 0


def test_verify_missing_file_is_usage_error(proved):
    result = CliRunner().invoke(
        main,
        [
            "verify",
            "--aid", "/nonexistent/aid.json",
            "--bundle", str(proved / "bundle.json"),
            "--templates", str(proved / "templates"),
            "--claim", "x",
        ],
    )
    assert result.exit_code == 2


def test_inspect(proved):
    runner = CliRunner()
    args = [
        "inspect",
        "--aid", str(proved / "aid.json"),
        "--bundle", str(proved / "bundle.json"),
        "--templates", str(proved / "templates"),
    ]
    result = runner.invoke(main, args)
    assert result.exit_code == 0
    assert "trace consistency: ok" in result.output
    as_json = runner.invoke(main, args + ["--json"])
    assert json.loads(as_json.output)["ok"] is True


def test_bench_channels(tmp_path):
    csv = tmp_path / "bench.csv"
    result = CliRunner().invoke(
        main, ["bench", "channels", "--rounds", "6", "--csv", str(csv)]
    )
    assert result.exit_code == 0
    assert "naive:" in result.output and "optimized:" in result.output
    lines = csv.read_text().splitlines()
    assert lines[0] == "strategy,round,latency_s,cumulative_s"
    assert len(lines) == 1 + 12  # both strategies, six rounds each


def test_bench_infeasible_strategy_reported():
    result = CliRunner().invoke(
        main, ["bench", "channels", "--strategy", "naive", "--rounds", "7"]
    )
    assert result.exit_code == 0
    assert "infeasible at round 7" in result.output


def test_demo_veritrade_json():
    result = CliRunner().invoke(main, ["demo", "veritrade", "--seed", "0", "--json"])
    assert result.exit_code == 0, result.output
    report = json.loads(result.output)
    assert report["decision"]["action"] == "hold"
    assert report["verified"] is True
    assert report["latency"]["direct_s"] < report["latency"]["notarized_core_s"]
