import json
import subprocess
import sys
from pathlib import Path

import pytest

from athena.cli import _parse_configs, _parse_seeds, load_config_file, main


def run_cli(*argv):
    return main(list(argv))


# --- helpers -----------------------------------------------------------------

def test_parse_seeds_range_and_list():
    assert _parse_seeds("1..4") == [1, 2, 3, 4]
    assert _parse_seeds("3,7,9") == [3, 7, 9]


def test_parse_configs():
    configs = _parse_configs("hybrid:0.5,cf,cbf")
    assert [c.name for c in configs] == ["hybrid:0.5", "cf", "cbf"]
    assert [c.alpha for c in configs] == [0.5, 1.0, 0.0]
    assert _parse_configs("hybrid")[0].alpha == 0.5
    with pytest.raises(ValueError):
        _parse_configs("nearest-neighbor")


def test_config_file_parsing(tmp_path):
    cfg = tmp_path / "athena.conf"
    cfg.write_text(
        "# defaults\n"
        "train.k = 6\n"
        "n = 7\n"
        'out = "model.bundle"  # quoted\n'
    )
    parsed = load_config_file(cfg)
    assert parsed == {"train.k": "6", "n": "7", "out": "model.bundle"}


# --- end-to-end pipeline ------------------------------------------------------

@pytest.fixture(scope="module")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    data = root / "data"
    bundle = root / "model.bundle"
    assert run_cli("gen-data", "--users", "8", "--items", "30", "--events", "150",
                   "--seed", "5", "--out", str(data)) == 0
    assert run_cli("train", "--data", str(data), "--k", "4", "--out", str(bundle)) == 0
    return data, bundle


def test_gen_data_writes_three_files(pipeline):
    data, _ = pipeline
    for name in ("items.jsonl", "users.jsonl", "events.jsonl"):
        assert (data / name).exists()


def test_gen_data_reproducible(tmp_path):
    for sub in ("a", "b"):
        assert run_cli("gen-data", "--users", "5", "--items", "15", "--events", "40",
                       "--seed", "9", "--out", str(tmp_path / sub)) == 0
    for name in ("items.jsonl", "users.jsonl", "events.jsonl"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes()


def test_train_prints_k_and_density(pipeline, capsys):
    data, bundle = pipeline
    run_cli("train", "--data", str(data), "--k", "4", "--out", str(bundle))
    out = capsys.readouterr().out
    assert "k: 4" in out
    assert "matrix density:" in out
    assert "train seconds:" in out


def test_recommend_prints_table(pipeline, capsys):
    data, bundle = pipeline
    rc = run_cli("recommend", "--model", str(bundle), "--data", str(data),
                 "--user", "user-0001", "--n", "5", "--alpha", "0.5")
    assert rc == 0
    out = capsys.readouterr().out
    lines = [l for l in out.splitlines() if l.strip()]
    assert lines[0].startswith("item")
    assert len(lines) >= 2


def test_recommend_unknown_user_exits_2(pipeline, capsys):
    data, bundle = pipeline
    rc = run_cli("recommend", "--model", str(bundle), "--data", str(data), "--user", "ghost")
    assert rc == 2
    assert "error" in capsys.readouterr().err


def test_evaluate_rows_and_reports(pipeline, capsys, tmp_path):
    data, _ = pipeline
    json_path = tmp_path / "report.json"
    csv_path = tmp_path / "report.csv"
    rc = run_cli("evaluate", "--data", str(data), "--configs", "hybrid:0.5,cf,cbf",
                 "--n", "5", "--test-frac", "0.2", "--seeds", "1..3",
                 "--json", str(json_path), "--csv", str(csv_path))
    assert rc == 0
    out = capsys.readouterr().out
    body_rows = [l for l in out.splitlines() if l and not l.startswith(("config", "-", "json", "csv"))]
    assert len(body_rows) == 9  # 3 seeds x 3 configs
    report = json.loads(json_path.read_text())
    assert len(report["rows"]) == 9
    assert len(csv_path.read_text().strip().splitlines()) == 10


def test_notify_run_writes_outbox(pipeline, tmp_path, capsys):
    data, bundle = pipeline
    outbox = tmp_path / "outbox"
    # 2021-11-15 Monday 09:00 UTC: weekly-monday and daily 08:00 users are due
    rc = run_cli("notify", "run", "--now", "1636966800", "--data", str(data),
                 "--model", str(bundle), "--outbox", str(outbox))
    assert rc == 0
    out = capsys.readouterr().out
    assert "deliveries attempted" in out
    emls = list(outbox.glob("*.eml"))
    attempted = int(out.strip().splitlines()[-1].split(":")[1].split()[0])
    delivered = out.count("delivered")
    assert len(emls) == delivered
    if attempted:
        assert (data / "deliveries.jsonl").exists()
    # second run at the same instant: idempotent
    rc = run_cli("notify", "run", "--now", "1636966800", "--data", str(data),
                 "--model", str(bundle), "--outbox", str(outbox))
    assert rc == 0
    out2 = capsys.readouterr().out
    assert "0 deliveries attempted" in out2


def test_bench_prints_two_durations(pipeline, capsys):
    data, _ = pipeline
    assert run_cli("bench", "--data", str(data), "--k", "4") == 0
    out = capsys.readouterr().out
    assert "train seconds:" in out
    assert "full-recommend seconds:" in out


def test_config_file_sets_defaults(pipeline, tmp_path, capsys):
    data, bundle = pipeline
    cfg = tmp_path / "athena.conf"
    cfg.write_text(f"recommend.n = 3\nrecommend.data = {data}\nrecommend.model = {bundle}\n")
    rc = run_cli("--config", str(cfg), "recommend", "--user", "user-0002")
    assert rc == 0
    out = capsys.readouterr().out
    assert len([l for l in out.splitlines() if l.startswith("item-")]) <= 3


def test_usage_error_exits_1():
    proc = subprocess.run(
        [sys.executable, "-m", "athena", "frobnicate"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 1


def test_missing_data_exits_2(tmp_path, capsys):
    rc = run_cli("train", "--data", str(tmp_path / "nope"), "--out", str(tmp_path / "m.bundle"))
    assert rc == 2


def test_console_entrypoint():
    proc = subprocess.run(
        [sys.executable, "-m", "athena", "gen-data", "--help"],
        capture_output=True, text=True,
    )
    assert proc.returncode == 0
    assert "--cold-frac" in proc.stdout
