import json
import subprocess
import sys

import numpy as np
import pytest

from pairerr import cli, prefcore, synth
from pairerr.estimator import ErrorEstimate
from pairerr.probmodel import ErrorSpec


def run_cli(args, cwd):
    return subprocess.run(
        [sys.executable, "-m", "pairerr", *args],
        cwd=cwd,
        capture_output=True,
        text=True,
    )


def write_plan(tmp_path, n=8, endpoint="mock:eps=0.0", sequence="+-", variant="baseline"):
    plan = {
        "run_id": "cli-run",
        "texts": [f"plain sample text number {i}" for i in range(n)],
        "text_type": "short poems",
        "sequence": sequence,
        "variant": variant,
        "provider": {"provider_id": "mock", "endpoint": endpoint, "model_name": "mock-model"},
        "rng_seed": 0,
    }
    path = tmp_path / "plan.json"
    path.write_text(json.dumps(plan))
    return path


def collect(tmp_path, **kw):
    plan = write_plan(tmp_path, **kw)
    log = tmp_path / "log.ndjson"
    proc = run_cli(["collect", str(plan), "--log", str(log)], tmp_path)
    assert proc.returncode == 0, proc.stderr
    return log


def test_usage_error_exit_code(tmp_path):
    proc = run_cli(["estimate"], tmp_path)
    assert proc.returncode == 2
    proc = run_cli(["no-such-command"], tmp_path)
    assert proc.returncode == 2


def test_missing_input_exit_code(tmp_path):
    proc = run_cli(["estimate", "does-not-exist.ndjson"], tmp_path)
    assert proc.returncode == 3
    assert proc.stderr.strip()


def test_auth_error_exit_code(tmp_path):
    plan = write_plan(tmp_path, endpoint="https://api.example/v1/chat")
    log = tmp_path / "log.ndjson"
    proc = run_cli(["collect", str(plan), "--log", str(log)], tmp_path)
    assert proc.returncode == 4


def test_collect_writes_log_and_summary(tmp_path):
    log = collect(tmp_path, n=6)
    records = prefcore.read_records(log)
    assert len(records) == 15 * 2
    z = prefcore.build_z(prefcore.build_y(records, 6, trial_filter=0))
    assert (z.entries[np.triu_indices(6, 1)] == 1).all()


def test_collect_resume_is_idempotent(tmp_path):
    plan = write_plan(tmp_path, n=5)
    log = tmp_path / "log.ndjson"
    first = run_cli(["collect", str(plan), "--log", str(log)], tmp_path)
    assert first.returncode == 0
    content = log.read_bytes()
    second = run_cli(["collect", str(plan), "--log", str(log)], tmp_path)
    assert second.returncode == 0
    assert log.read_bytes() == content
    summary = json.loads(second.stdout)
    assert summary["records_written"] == 0
    assert summary["skipped_existing"] == 20


def test_collect_provider_override(tmp_path):
    plan = write_plan(tmp_path, n=4, endpoint="https://api.example/v1/chat")
    log = tmp_path / "log.ndjson"
    proc = run_cli(
        ["collect", str(plan), "--log", str(log), "--provider", "mock:eps=0.0"], tmp_path
    )
    assert proc.returncode == 0
    assert len(prefcore.read_records(log)) == 12


def test_estimate_uniform_from_log(tmp_path):
    log = collect(tmp_path, n=10)
    out = tmp_path / "out"
    proc = run_cli(
        [
            "estimate",
            str(log),
            "--out-dir",
            str(out),
            "--grid-step",
            "0.1",
            "--replicates",
            "1",
            "--runs",
            "10",
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    est = ErrorEstimate.from_dict(json.loads((out / "estimate.json").read_text()))
    assert est.best_eps == 0.0
    surface = (out / "surface.csv").read_text().splitlines()
    assert surface[0] == "# schema_version=1"
    curves = (out / "curves.csv").read_text()
    assert "empirical" in curves and "synthetic" in curves
    meta = json.loads((out / "estimate.json.meta.json").read_text())
    assert meta["command"].startswith("estimate")
    assert "created_utc" in meta


def test_estimate_uniform_from_matrix_csv(tmp_path):
    mat = synth.synth_z(12, ErrorSpec.uniform(0.0), rng_seed=0)
    csv_path = tmp_path / "z.csv"
    prefcore.export_matrix_csv(mat, csv_path)
    out = tmp_path / "out"
    proc = run_cli(
        [
            "estimate",
            str(csv_path),
            "--out-dir",
            str(out),
            "--grid-step",
            "0.25",
            "--replicates",
            "1",
            "--runs",
            "5",
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    est = json.loads((out / "estimate.json").read_text())
    assert est["best_eps"] == 0.0


def test_estimate_byte_determinism(tmp_path):
    log = collect(tmp_path, n=8, endpoint="mock:eps=0.15&seed=4")
    outs = []
    for name in ("a", "b"):
        out = tmp_path / name
        proc = run_cli(
            [
                "estimate",
                str(log),
                "--out-dir",
                str(out),
                "--seed",
                "5",
                "--grid-step",
                "0.1",
                "--replicates",
                "2",
                "--runs",
                "20",
            ],
            tmp_path,
        )
        assert proc.returncode == 0, proc.stderr
        outs.append(out)
    for name in ("estimate.json", "surface.csv", "curves.csv"):
        assert (outs[0] / name).read_bytes() == (outs[1] / name).read_bytes(), name


def test_estimate_paper_exact_config_echo(tmp_path):
    mat = synth.synth_z(6, ErrorSpec.uniform(0.0), rng_seed=0)
    csv_path = tmp_path / "z.csv"
    prefcore.export_matrix_csv(mat, csv_path)
    out = tmp_path / "out"
    proc = run_cli(
        ["estimate", str(csv_path), "--out-dir", str(out), "--paper-exact"], tmp_path
    )
    assert proc.returncode == 0, proc.stderr
    cfg = json.loads((out / "estimate.json").read_text())["config"]
    assert cfg["grid_step"] == 0.005
    assert cfg["synth_replicates"] == 10
    assert cfg["curve_runs"] == 200
    assert cfg["n_stride"] == 1


def test_estimate_desk_scale_defaults_for_positional(tmp_path):
    log = collect(tmp_path, n=8, sequence="+-", endpoint="mock:eps=0.0")
    out = tmp_path / "out"
    proc = run_cli(
        [
            "estimate",
            str(log),
            "--mode",
            "positional",
            "--k-plus",
            "1",
            "--k-minus",
            "1",
            "--out-dir",
            str(out),
            "--grid-step",
            "0.25",
            "--replicates",
            "1",
            "--runs",
            "5",
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    payload = json.loads((out / "estimate.json").read_text())
    assert payload["kind"] == "positional"
    assert payload["best_eps_plus"] == 0.0
    assert payload["best_eps_minus"] == 0.0
    # desk-scale stride fills the unset knobs in positional mode
    assert payload["config"]["n_stride"] == 5


def test_estimate_positional_requires_counts(tmp_path):
    log = collect(tmp_path, n=5)
    proc = run_cli(["estimate", str(log), "--mode", "positional"], tmp_path)
    assert proc.returncode == 3
    assert "--k-plus" in proc.stderr


def test_scalability_csv_and_decrease_note(tmp_path):
    out = tmp_path / "out"
    proc = run_cli(
        [
            "scalability",
            "--eps",
            "0.1",
            "--m-list",
            "1,2",
            "--n-min",
            "2",
            "--n-max",
            "6",
            "--out-dir",
            str(out),
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    lines = (out / "scalability.csv").read_text().splitlines()
    assert lines[0] == "# schema_version=1"
    rows = [l.split(",") for l in lines[2:]]
    first = rows[0]
    assert first[0] == "1" and first[1] == "2"
    assert float(first[2]) == pytest.approx(0.81)
    assert "strictly decreasing" in proc.stdout


def test_scalability_json_rows_sorted(tmp_path):
    out = tmp_path / "out"
    proc = run_cli(
        [
            "scalability",
            "--eps",
            "0.2",
            "--eps-pair",
            "0.2,0.1",
            "--k-plus",
            "2",
            "--k-minus",
            "1",
            "--m-list",
            "2,1",
            "--n-max",
            "5",
            "--format",
            "json",
            "--out-dir",
            str(out),
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    payload = json.loads((out / "scalability.json").read_text())
    assert payload["schema_version"] == 1
    keys = [(row["m"], row["n"]) for row in payload["rows"]]
    assert keys == sorted(keys)
    kinds = {row["kind"] for row in payload["rows"]}
    assert kinds == {"uniform", "positional"}


def test_bt_fixed_eps_transitive_identity(tmp_path):
    x = np.zeros((5, 5), dtype=int)
    for i in range(5):
        for j in range(i + 1, 5):
            x[i, j] = 6
    ids = [f"text_{i}" for i in range(5)]
    csv_path = tmp_path / "x.csv"
    csv_path.write_text(",".join(ids) + "\n" + "\n".join(",".join(str(v) for v in row) for row in x) + "\n")
    out = tmp_path / "out"
    proc = run_cli(
        ["bt", str(csv_path), "--eps", "0.1", "--seeds", "5", "--out-dir", str(out)], tmp_path
    )
    assert proc.returncode == 0, proc.stderr
    ranking = json.loads((out / "bt_ranking.json").read_text())
    assert ranking["ranking"] == [0, 1, 2, 3, 4]
    assert ranking["position_agreement"] == [1.0] * 5


def test_bt_search_artifacts(tmp_path):
    log = collect(tmp_path, n=6, endpoint="mock:eps=0.2&seed=2", sequence="+-+-")
    out = tmp_path / "out"
    proc = run_cli(
        [
            "bt",
            str(log),
            "--seeds",
            "4",
            "--grid-step",
            "0.25",
            "--out-dir",
            str(out),
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    hist = (out / "bt_histogram.csv").read_text().splitlines()
    assert hist[1] == "bin_lo,bin_hi,count"
    assert len(hist) == 2 + 25
    search = json.loads((out / "bt_search.json").read_text())
    assert search["schema_version"] == 1
    assert "modal_bin" in search
    seeds_csv = (out / "bt_seeds.csv").read_text().splitlines()
    assert len(seeds_csv) == 2 + 4
    assert (out / "bt_spreads.csv").exists()


def test_bt_search_deterministic(tmp_path):
    log = collect(tmp_path, n=5, endpoint="mock:eps=0.25&seed=6", sequence="+-")
    blobs = []
    for name in ("a", "b"):
        out = tmp_path / name
        proc = run_cli(
            [
                "bt",
                str(log),
                "--seeds",
                "3",
                "--grid-step",
                "0.25",
                "--seed",
                "9",
                "--out-dir",
                str(out),
            ],
            tmp_path,
        )
        assert proc.returncode == 0, proc.stderr
        blobs.append(
            tuple((out / f).read_bytes() for f in ("bt_histogram.csv", "bt_seeds.csv", "bt_spreads.csv"))
        )
    assert blobs[0] == blobs[1]


def test_report_table_and_ratio(tmp_path):
    log = collect(tmp_path, n=8, endpoint="mock:eps=0.2&seed=3")
    est_dir = tmp_path / "est"
    proc = run_cli(
        [
            "estimate",
            str(log),
            "--out-dir",
            str(est_dir),
            "--grid-step",
            "0.1",
            "--replicates",
            "1",
            "--runs",
            "10",
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    out = tmp_path / "out"
    proc = run_cli(
        [
            "report",
            "--estimate",
            str(est_dir / "estimate.json"),
            "--log",
            str(log),
            "--label",
            "mock-run",
            "--out-dir",
            str(out),
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    lines = (out / "summary.csv").read_text().splitlines()
    assert lines[0] == "# schema_version=1"
    header = lines[1].split(",")
    row = dict(zip(header, lines[2].split(",")))
    assert row["label"] == "mock-run"
    assert float(row["s_com"]) > 0
    payload = json.loads((out / "summary.json").read_text())
    assert payload["schema_version"] == 1


def test_report_ratio_empty_at_zero_eps(tmp_path):
    log = collect(tmp_path, n=6, endpoint="mock:eps=0.0")
    est_dir = tmp_path / "est"
    proc = run_cli(
        [
            "estimate",
            str(log),
            "--out-dir",
            str(est_dir),
            "--grid-step",
            "0.25",
            "--replicates",
            "1",
            "--runs",
            "5",
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    out = tmp_path / "out"
    proc = run_cli(
        [
            "report",
            "--estimate",
            str(est_dir / "estimate.json"),
            "--log",
            str(log),
            "--out-dir",
            str(out),
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    lines = (out / "summary.csv").read_text().splitlines()
    header = lines[1].split(",")
    row = dict(zip(header, lines[2].split(",")))
    # s_com = 0 and eps = 0: the consistency ratio has no defined value
    assert row["s_com"] == "0.0"
    assert row["s_com_over_eps"] == ""


def test_report_spearman_matrix_for_two_logs(tmp_path):
    log_a = collect(tmp_path, n=6, endpoint="mock:eps=0.0")
    plan_b = write_plan(tmp_path, n=6, endpoint="mock:eps=0.4&seed=12")
    log_b = tmp_path / "log_b.ndjson"
    proc = run_cli(["collect", str(plan_b), "--log", str(log_b)], tmp_path)
    assert proc.returncode == 0
    out = tmp_path / "out"
    proc = run_cli(
        [
            "report",
            "--log",
            str(log_a),
            "--label",
            "clean",
            "--log",
            str(log_b),
            "--label",
            "noisy",
            "--out-dir",
            str(out),
        ],
        tmp_path,
    )
    assert proc.returncode == 0, proc.stderr
    spearman = (out / "spearman.csv").read_text().splitlines()
    assert spearman[1].split(",")[0] == "label"
    rows = [l.split(",") for l in spearman[2:]]
    assert rows[0][0] == "clean"
    assert float(rows[0][1]) == 1.0
    assert float(rows[1][2]) == 1.0


def test_main_callable_directly(tmp_path, capsys, monkeypatch):
    monkeypatch.chdir(tmp_path)
    code = cli.main(
        [
            "scalability",
            "--eps",
            "0.1",
            "--m-list",
            "1",
            "--n-max",
            "4",
            "--out-dir",
            str(tmp_path),
        ]
    )
    assert code == 0
    assert (tmp_path / "scalability.csv").exists()
