"""End-to-end drive of the command-line tool."""

import os
import subprocess

import pytest

SELFRW_BIN = os.environ.get("SELFRW_BIN")

pytestmark = pytest.mark.skipif(SELFRW_BIN is None, reason="SELFRW_BIN not set")


def run_cli(*args):
    result = subprocess.run(
        [SELFRW_BIN, *args], capture_output=True, text=True, timeout=120
    )
    assert result.returncode == 0, result.stderr
    return result.stdout


def test_train_evaluate_analyze_report(tmp_path):
    config = tmp_path / "run.cfg"
    run_dir = tmp_path / "run_a"
    config.write_text(
        f"""
run.seed = 42
run.output_dir = {run_dir}
task.source = synthetic
task.seed = 7
task.count = 8
backend.kind = toy
backend.context_order = 3
backend.policy_init = echo
backend.rewriter = dedup
gate.kind = selective
train.steps = 6
train.checkpoint_every = 3
train.batch_size = 2
train.group_size = 4
sampling.max_new_tokens = 48
rewrite.max_new_tokens = 48
continue.max_new_tokens = 16
eval.max_new_tokens = 128
"""
    )
    out = run_cli("train", "--config", str(config))
    assert "trained 6 steps" in out
    assert (run_dir / "steps.jsonl").exists()
    assert (run_dir / "checkpoints" / "step_000006.ckpt").exists()

    out = run_cli(
        "evaluate",
        "--checkpoint",
        str(run_dir / "checkpoints" / "step_000006.ckpt"),
        "--tasks",
        "synthetic:seed=99,count=8,difficulty=0",
        "--runs",
        "2",
        "--out",
        str(run_dir / "eval"),
    )
    assert "accuracy" in out
    assert (run_dir / "eval" / "summary.csv").exists()

    run_cli("analyze", "--run", str(run_dir))
    assert (run_dir / "analysis" / "summary.csv").exists()

    run_cli("report", "--run", str(run_dir), "--reference", str(run_dir))
    main_csv = (run_dir / "report" / "main.csv").read_text()
    assert "accuracy" in main_csv
    assert "+0.0" in main_csv  # self-comparison has null deltas


def test_judge_subcommand(tmp_path):
    passages = tmp_path / "passages.jsonl"
    passages.write_text(
        '{"passage_id": "p1", "passage": "I think I think this through."}\n'
        '{"passage_id": "p2", "passage": "A second passage."}\n'
    )
    out_path = tmp_path / "cards.jsonl"
    out = run_cli("judge", "--input", str(passages), "--out", str(out_path))
    assert "judged 2 passages" in out
    lines = out_path.read_text().strip().splitlines()
    assert len(lines) == 2
    assert "raw_response_digest" in lines[0]
