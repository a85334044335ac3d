from __future__ import annotations

import json

import pytest

from prozd.cli import EXIT_INVALID, EXIT_OK, EXIT_RUNTIME, main
from prozd.ingest.dataset import load_dataset

SMALL = {"n_nodes": 60, "n_edges": 260, "n_critical": 10, "n_compliant": 100, "seed": 4}


@pytest.fixture(scope="module")
def workdir(tmp_path_factory):
    d = tmp_path_factory.mktemp("cli")
    (d / "spec.json").write_text(json.dumps(SMALL))
    assert main(["generate", "--config", str(d / "spec.json"), "--out", str(d / "gen")]) == EXIT_OK
    return d


def test_pipeline_commands_chain(workdir):
    ds = str(workdir / "gen" / "dataset.json")
    assert main(["label", "--dataset", ds, "--out", str(workdir / "lab")]) == EXIT_OK
    labelled = str(workdir / "lab" / "dataset.json")
    assert main(["train", "--dataset", labelled, "--out", str(workdir / "model"), "--seed", "1"]) == EXIT_OK
    training = json.loads((workdir / "model" / "training.json").read_text())
    assert training["stages"] == ["spgnn", "graphwsp", "triage"] and len(training["losses"]["triage"]) <= 40

    assert main(["assess", "--dataset", labelled, "--checkpoint", str(workdir / "model"),
                 "--out", str(workdir / "assess")]) == EXIT_OK
    verdicts = (workdir / "assess" / "verdicts.jsonl").read_text().splitlines()
    assert len(verdicts) == load_dataset(labelled).graph.n_edges
    assert (workdir / "assess" / "metrics.json").exists()

    assert main(["mitigate", "--dataset", labelled, "--verdicts", str(workdir / "assess" / "verdicts.jsonl"),
                 "--out", str(workdir / "plan")]) == EXIT_OK
    plan = json.loads((workdir / "plan" / "plan.json").read_text())
    assert {"edits", "residual", "anomalies"} <= set(plan)


def test_stagewise_training_reuses_checkpoint(workdir):
    ds = str(workdir / "gen" / "dataset.json")
    out = str(workdir / "staged")
    for stage in ("spgnn", "graphwsp", "triage"):
        assert main(["train", "--dataset", ds, "--stage", stage, "--out", out]) == EXIT_OK
    # triage alone without earlier stages available
    assert main(["train", "--dataset", ds, "--stage", "triage", "--out", str(workdir / "empty")]) != EXIT_OK


def test_oracle_command(workdir, capsys):
    ds = str(workdir / "gen" / "dataset.json")
    assert main(["oracle", "--dataset", ds, "--node", "0"]) == EXIT_OK
    out = json.loads(capsys.readouterr().out)
    assert set(out["0"]) == {"hop_distance", "weighted_distance", "fs1", "witness"}
    assert main(["oracle", "--dataset", ds, "--node", "9999"]) == EXIT_INVALID


def test_invalid_inputs_exit_one(tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    assert main(["eval", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    bad.write_text('{"runs": 0}')
    assert main(["eval", "--config", str(bad), "--out", str(tmp_path / "o")]) == EXIT_INVALID
    assert main(["oracle", "--dataset", str(tmp_path / "missing.json")]) == EXIT_INVALID
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_stage_failure_exits_two(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"train": dict(SMALL, n_critical=0), "runs": 1}))
    assert main(["eval", "--config", str(cfg), "--out", str(tmp_path / "o")]) == EXIT_RUNTIME
