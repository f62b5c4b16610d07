from __future__ import annotations

import json
from pathlib import Path

import pytest

from reordermon.cli import main
from reordermon.traceio import TRACE_HEADER


def run_cli(*argv: str) -> int:
    return main(list(argv))


@pytest.fixture(scope="module")
def trace_path(tmp_path_factory: pytest.TempPathFactory) -> Path:
    path = tmp_path_factory.mktemp("traces") / "trace.csv"
    code = run_cli(
        "generate",
        "--out", str(path),
        "--prefixes", "96",
        "--bad-fraction", "0.2",
        "--bad-prob", "0.08",
        "--duration", "1.5",
        "--seed", "17",
    )
    assert code == 0
    return path


def test_generate_writes_trace_and_sidecar(tmp_path: Path) -> None:
    trace = tmp_path / "t.csv"
    sidecar = tmp_path / "s.csv"
    assert run_cli(
        "generate", "--out", str(trace), "--sidecar", str(sidecar),
        "--prefixes", "16", "--duration", "0.5", "--seed", "3",
    ) == 0
    lines = trace.read_text().splitlines()
    assert lines[0] == TRACE_HEADER
    assert len(lines) > 100
    assert sidecar.read_text().splitlines()[0] == "flow_key,injected_displacements"


def test_generate_is_byte_identical_across_runs(tmp_path: Path) -> None:
    a, b = tmp_path / "a.csv", tmp_path / "b.csv"
    for out in (a, b):
        assert run_cli(
            "generate", "--out", str(out), "--prefixes", "24", "--duration", "0.5",
            "--seed", "9",
        ) == 0
    assert a.read_bytes() == b.read_bytes()


def test_run_produces_results_csv(trace_path: Path, tmp_path: Path) -> None:
    out = tmp_path / "results"
    code = run_cli(
        "run", "--trace", str(trace_path), "--out", str(out),
        "--algo", "array", "--def", "1", "--buckets", "16", "--seeds", "0,1",
    )
    assert code == 0
    lines = (out / "results.csv").read_text().splitlines()
    assert lines[0].startswith("algorithm,def,buckets")
    assert len(lines) == 3  # header + 2 seeds


def test_sweep_over_buckets(trace_path: Path, tmp_path: Path) -> None:
    out = tmp_path / "sweep"
    code = run_cli(
        "sweep", "--trace", str(trace_path), "--out", str(out),
        "--algo", "array", "--buckets", "8,32", "--seeds", "0",
    )
    assert code == 0
    assert len((out / "results.csv").read_text().splitlines()) == 3


def test_grid_hybrid_writes_best_x(trace_path: Path, tmp_path: Path) -> None:
    out = tmp_path / "grid"
    code = run_cli(
        "grid-hybrid", "--trace", str(trace_path), "--out", str(out),
        "--buckets", "32", "--hh-fraction", "0.3,0.7", "--seeds", "0",
    )
    assert code == 0
    best = (out / "best_x.csv").read_text().splitlines()
    assert best[0] == "buckets,best_hh_fraction,mean_accuracy"
    assert len(best) == 2


def test_analyze_writes_artifacts(trace_path: Path, tmp_path: Path) -> None:
    out = tmp_path / "analysis"
    code = run_cli(
        "analyze", "--trace", str(trace_path), "--out", str(out), "--pcc-reps", "5"
    )
    assert code == 0
    meta = json.loads((out / "meta.json").read_text())
    assert meta["packet_count"] > 0
    assert (out / "pcc.csv").exists()


def test_validate_lemma_preset(tmp_path: Path, capsys: pytest.CaptureFixture) -> None:
    out = tmp_path / "lemma"
    code = run_cli(
        "validate-lemma", "--preset", "two-equal-flows", "--trials", "50",
        "--seed", "1", "--out", str(out),
    )
    assert code == 0
    captured = capsys.readouterr()
    assert "two-equal-flows" in captured.out
    rows = (out / "check_guarantee.csv").read_text().splitlines()
    assert len(rows) == 2


def test_validate_lemma_model_file(tmp_path: Path) -> None:
    model = {
        "flow_probs": [1.0],
        "flow_prefix": [0],
        "prefix_bucket": [0],
        "bucket": 0,
        "target_prefix": 0,
        "p_min": 0.0,
        "packets_per_check": 4,
        "stream_length": 200,
        "epsilon": 0.5,
        "delta": 0.5,
    }
    path = tmp_path / "model.json"
    path.write_text(json.dumps(model))
    assert run_cli("validate-lemma", "--model", str(path), "--trials", "20") == 0


def test_usage_error_exit_code() -> None:
    with pytest.raises(SystemExit) as excinfo:
        run_cli("run", "--trace", "x.csv")  # missing --out
    assert excinfo.value.code == 1
    with pytest.raises(SystemExit) as excinfo:
        run_cli("no-such-command")
    assert excinfo.value.code == 1


def test_bad_flag_value_is_usage_error(trace_path: Path, tmp_path: Path) -> None:
    code = run_cli(
        "run", "--trace", str(trace_path), "--out", str(tmp_path / "o"),
        "--def", "7",
    )
    assert code == 1


def test_data_error_exit_code(tmp_path: Path) -> None:
    bad = tmp_path / "bad.csv"
    bad.write_text("not,a,trace\n")
    code = run_cli("run", "--trace", str(bad), "--out", str(tmp_path / "o"))
    assert code == 2
    assert run_cli("run", "--trace", str(tmp_path / "missing.csv"), "--out", str(tmp_path / "o")) == 2


def test_config_file_supplies_defaults_and_flags_override(
    trace_path: Path, tmp_path: Path
) -> None:
    config = tmp_path / "exp.conf"
    config.write_text("buckets = 8\nseeds = 0\nalgo = array\n# comment\n")
    out1 = tmp_path / "from-config"
    assert run_cli(
        "run", "--trace", str(trace_path), "--out", str(out1), "--config", str(config)
    ) == 0
    rows = (out1 / "results.csv").read_text().splitlines()
    assert len(rows) == 2
    assert rows[1].split(",")[2] == "8"

    out2 = tmp_path / "flag-wins"
    assert run_cli(
        "run", "--trace", str(trace_path), "--out", str(out2),
        "--config", str(config), "--buckets", "4",
    ) == 0
    assert (out2 / "results.csv").read_text().splitlines()[1].split(",")[2] == "4"


def test_unknown_config_key_is_usage_error(trace_path: Path, tmp_path: Path) -> None:
    config = tmp_path / "bad.conf"
    config.write_text("bogus-key = 1\n")
    code = run_cli(
        "run", "--trace", str(trace_path), "--out", str(tmp_path / "o"),
        "--config", str(config),
    )
    assert code == 1


def test_validate_lemma_vacuous_bound_is_skipped_with_notice(
    tmp_path: Path, capsys: pytest.CaptureFixture
) -> None:
    model = {
        "flow_probs": [1.0],
        "flow_prefix": [0],
        "prefix_bucket": [0],
        "bucket": 0,
        "target_prefix": 0,
        "p_min": 0.0,  # first failure term degenerates to 1: vacuous bound
        "packets_per_check": 4,
        "stream_length": 100,
        "epsilon": 0.5,
        "delta": 0.5,
    }
    path = tmp_path / "vacuous.json"
    path.write_text(json.dumps(model))
    assert run_cli("validate-lemma", "--model", str(path), "--trials", "10") == 0
    assert "SKIPPED" in capsys.readouterr().out


def test_run_def2_end_to_end(trace_path: Path, tmp_path: Path) -> None:
    out = tmp_path / "def2"
    assert run_cli(
        "run", "--trace", str(trace_path), "--out", str(out),
        "--algo", "array", "--def", "2", "--buckets", "16", "--seeds", "0",
    ) == 0
    row = (out / "results.csv").read_text().splitlines()[1]
    assert row.split(",")[1] == "2"
