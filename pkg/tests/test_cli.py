"""Command line interface: exit codes, artifacts and the full pipeline.

Commands run in-process through ``main(argv)`` so exit codes and streams
are observable without subprocesses.
"""

import json

import pytest

from graphpine.cli import LOCKFILE, main
from graphpine.dataset import load_bundle

from conftest import FIXTURES


@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    """One synth bundle plus a trained checkpoint shared by the read-only tests."""
    base = tmp_path_factory.mktemp("pipeline")
    data = base / "data"
    run = base / "run"
    config = base / "config.json"
    config.write_text(
        json.dumps(
            {
                "model": {"layers": 1, "hidden": 4, "dropout": 0.0},
                "train": {"epochs": 2, "batch_size": 8, "lr": 0.01},
            }
        )
    )
    assert main(["synth", "--nodes", "12", "--samples", "24", "--seed", "3", "--out", str(data)]) == 0
    assert main(["train", "--data", str(data), "--out", str(run), "--config", str(config)]) == 0
    return base, data, run, config


# --- usage errors ------------------------------------------------------------------


def test_no_arguments_is_usage_error(capsys):
    assert main([]) == 1
    assert "error" in capsys.readouterr().err


def test_unknown_flag_is_usage_error(capsys):
    assert main(["synth", "--wat", "7", "--out", "x"]) == 1
    err = capsys.readouterr().err
    assert "graphpine: error" in err


def test_bad_split_choice_is_usage_error(pipeline):
    base, data, run, _ = pipeline
    code = main(
        ["eval", "--data", str(data), "--checkpoint", str(run / "checkpoint.gpine"),
         "--out", str(base / "x"), "--split", "holdout"]
    )
    assert code == 1


def test_unknown_config_section_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"wat": {}}')
    code = main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "o"), "--config", str(cfg)])
    assert code == 1
    assert "unknown section" in capsys.readouterr().err


def test_unknown_config_key_is_config_error(tmp_path, capsys):
    cfg = tmp_path / "c.json"
    cfg.write_text('{"train": {"epochz": 3}}')
    code = main(["train", "--data", str(tmp_path), "--out", str(tmp_path / "o"), "--config", str(cfg)])
    assert code == 1
    assert "epochz" in capsys.readouterr().err


def test_missing_bundle_is_runtime_error(tmp_path, capsys):
    code = main(["train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "o")])
    assert code == 2


# --- pipeline -----------------------------------------------------------------------


def test_synth_writes_bundle(pipeline):
    _, data, _, _ = pipeline
    assert (data / "manifest.json").exists()
    manifest = json.loads((data / "manifest.json").read_text())
    assert manifest["counts"]["genes"] == 12
    bundle = load_bundle(data)
    assert len(bundle.samples) == manifest["counts"]["samples"]
    assert not (data / LOCKFILE).exists()  # released after success


def test_train_writes_checkpoint_and_log(pipeline, capsys):
    _, _, run, _ = pipeline
    assert (run / "checkpoint.gpine").exists()
    lines = (run / "trainlog.jsonl").read_text().strip().split("\n")
    assert len(lines) == 3  # 2 epochs + summary
    assert json.loads(lines[0])["epoch"] == 1
    assert "stop_reason" in json.loads(lines[-1])


def test_eval_writes_metrics(pipeline, tmp_path, capsys):
    _, data, run, _ = pipeline
    out = tmp_path / "eval"
    code = main(
        ["eval", "--data", str(data), "--checkpoint", str(run / "checkpoint.gpine"),
         "--out", str(out), "--split", "test"]
    )
    assert code == 0
    metrics = json.loads((out / "metrics.json").read_text())
    assert metrics["split"] == "test"
    assert metrics["samples"] > 0
    for key in ("loss", "accuracy", "roc_auc", "pr_auc", "precision", "specificity", "npv"):
        assert key in metrics
    assert "roc_auc" in capsys.readouterr().out


def test_explain_writes_json_and_dot(pipeline, tmp_path):
    _, data, run, _ = pipeline
    bundle = load_bundle(data)
    s = bundle.samples[0]
    out = tmp_path / "explain"
    code = main(
        ["explain", "--data", str(data), "--checkpoint", str(run / "checkpoint.gpine"),
         "--out", str(out), "--pair", s.drug_id, s.cell_id, "--top-k", "5"]
    )
    assert code == 0
    doc = json.loads((out / "explain" / f"{s.drug_id}_{s.cell_id}.json").read_text())
    assert doc["drug_id"] == s.drug_id and len(doc["genes"]) == 5
    dot = (out / "explain" / f"{s.drug_id}_{s.cell_id}.dot").read_text()
    assert dot.startswith("digraph")


def test_explain_unknown_pair_is_runtime_error(pipeline, tmp_path, capsys):
    _, data, run, _ = pipeline
    code = main(
        ["explain", "--data", str(data), "--checkpoint", str(run / "checkpoint.gpine"),
         "--out", str(tmp_path / "x"), "--pair", "NOPE", "NADA"]
    )
    assert code == 2
    assert "NOPE" in capsys.readouterr().err


def test_analyze_writes_stats(pipeline, tmp_path, capsys):
    _, data, run, _ = pipeline
    out = tmp_path / "stats"
    code = main(
        ["analyze", "--data", str(data), "--checkpoint", str(run / "checkpoint.gpine"),
         "--out", str(out), "--split", "all"]
    )
    assert code == 0
    stats = json.loads((out / "stats.json").read_text())
    assert stats["split"] == "all"
    assert "cosine" in stats and "density_after" in stats
    assert "cosine" in capsys.readouterr().out


def test_eval_rejects_mismatched_graph(pipeline, tmp_path, capsys):
    base, data, run, _ = pipeline
    other = tmp_path / "other"
    assert main(["synth", "--nodes", "10", "--samples", "24", "--seed", "4", "--out", str(other)]) == 0
    code = main(
        ["eval", "--data", str(other), "--checkpoint", str(run / "checkpoint.gpine"),
         "--out", str(tmp_path / "x")]
    )
    assert code == 2
    err = capsys.readouterr().err
    assert "12" in err and "10" in err  # names both node counts


def test_lockfile_blocks_concurrent_writes(tmp_path, capsys):
    out = tmp_path / "busy"
    out.mkdir()
    (out / LOCKFILE).touch()
    code = main(["synth", "--nodes", "8", "--samples", "24", "--out", str(out)])
    assert code == 2
    assert "locked" in capsys.readouterr().err
    (out / LOCKFILE).unlink()
    assert main(["synth", "--nodes", "8", "--samples", "24", "--out", str(out)]) == 0
    assert not (out / LOCKFILE).exists()


# --- prep on the TSV fixtures ---------------------------------------------------------


def prep_argv(out, config=None, responses=None):
    argv = [
        "prep",
        "--nodes-file", str(FIXTURES / "nodes.txt"),
        "--edges-file", str(FIXTURES / "edges.tsv"),
        "--exp", str(FIXTURES / "exp.tsv"),
        "--met", str(FIXTURES / "met.tsv"),
        "--mut", str(FIXTURES / "mut.tsv"),
        "--cnv", str(FIXTURES / "cnv.tsv"),
        "--dti", str(FIXTURES / "dti.tsv"),
        "--responses", str(responses or FIXTURES / "responses.tsv"),
        "--out", str(out),
    ]
    if config is not None:
        argv += ["--config", str(config)]
    return argv


def test_prep_fixture_hand_counts(tmp_path):
    out = tmp_path / "bundle"
    assert main(prep_argv(out, config=FIXTURES / "config.json")) == 0
    manifest = json.loads((out / "manifest.json").read_text())
    # 2x3 complete grid, half the drugs and half the cells selected:
    # pool 1x2 -> val floor(0.1 * 2) = 0, train 2, test 1x1 = 1
    assert manifest["counts"] == {
        "genes": 5,
        "edges": 6,
        "samples": 3,
        "train": 2,
        "val": 0,
        "test": 1,
        "drugs": 2,
        "cells": 3,
    }
    assert manifest["meta"]["skipped_drugs"] == []
    assert manifest["meta"]["responses_total"] == 6
    assert manifest["meta"]["responses_discarded"] == 3
    bundle = load_bundle(out)
    assert bundle.graph.node_ids == ("TP53", "MDM2", "EGFR", "BRCA1", "KRAS")


def test_prep_skips_drugs_without_targets(tmp_path, capsys):
    responses = tmp_path / "responses.tsv"
    responses.write_text(
        (FIXTURES / "responses.tsv").read_text() + "DRUGC\tCL1\t-6.0\n"
    )
    out = tmp_path / "bundle"
    assert main(prep_argv(out, config=FIXTURES / "config.json", responses=responses)) == 0
    assert "DRUGC" in capsys.readouterr().err
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["meta"]["skipped_drugs"] == ["DRUGC"]
    assert manifest["counts"]["samples"] == 3  # unchanged: the drug never enters
    assert manifest["meta"]["responses_total"] == 7


def test_prep_seed_changes_split(tmp_path):
    manifests = []
    for seed in (0, 1):
        out = tmp_path / f"bundle{seed}"
        assert main(prep_argv(out, config=FIXTURES / "config.json") + ["--seed", str(seed)]) == 0
        manifests.append(json.loads((out / "manifest.json").read_text()))
    assert all(m["counts"]["samples"] == 3 for m in manifests)
    assert manifests[0]["seed"] != manifests[1]["seed"]
