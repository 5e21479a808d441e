import csv

import pytest
import yaml

from mtcrowd.cli import main, tiny_instance
from mtcrowd.diffusion import exact_f


@pytest.fixture
def small_config(tmp_path):
    cfg = {
        "synthetic": {"nodes": 200},
        "budgets": [3, 6],
        "algorithms": ["modified_opimc", "max_degree", "random"],
        "mc_sims": 100,
        "greedy_sims": 20,
        "property_triples": 5,
    }
    path = tmp_path / "cfg.yaml"
    path.write_text(yaml.safe_dump(cfg))
    return path


def test_synth_then_ingest_roundtrip(tmp_path, capsys):
    assert main(["synth", "--nodes", "50", "--out", str(tmp_path / "g"), "--seed", "4"]) == 0
    assert main(["ingest", str(tmp_path / "g" / "graph.txt"), "--out", str(tmp_path / "h")]) == 0
    a = (tmp_path / "g" / "graph.txt").read_text()
    b = (tmp_path / "h" / "graph.txt").read_text()
    assert a == b
    assert "nodes 50" in capsys.readouterr().out


def test_ingest_remap(tmp_path):
    src = tmp_path / "raw.txt"
    src.write_text("# retweets\nalice bob\nbob carol\ncarol alice\n")
    assert main(["ingest", str(src), "--remap", "--out", str(tmp_path / "o")]) == 0
    lines = (tmp_path / "o" / "id_map.tsv").read_text().split("\n")
    assert any(line.startswith("alice") for line in lines)
    edges = [line for line in (tmp_path / "o" / "graph.txt").read_text().splitlines() if not line.startswith("#")]
    assert edges == ["0 1", "1 2", "2 0"]


def test_ingest_bad_line_reports(tmp_path, capsys):
    src = tmp_path / "bad.txt"
    src.write_text("0 1\n1 x\n")
    assert main(["ingest", str(src), "--out", str(tmp_path / "o")]) == 2
    assert "line 2" in capsys.readouterr().err


def test_run_and_report(tmp_path, small_config, capsys):
    out = tmp_path / "run"
    assert main(["run", "--config", str(small_config), "--out", str(out), "--seed", "3"]) == 0
    for name in ("run_records.csv", "auction_outcomes.csv", "opimc_rounds.csv", "properties_report.csv"):
        assert (out / name).exists()
    with open(out / "properties_report.csv") as fh:
        assert all(r["status"] == "pass" for r in csv.DictReader(fh))
    capsys.readouterr()
    assert main(["report", "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "modified_opimc" in text and "max_degree" in text
    assert (out / "summary.csv").exists()


def test_run_missing_dataset(tmp_path, capsys):
    cfg = tmp_path / "c.yaml"
    cfg.write_text(yaml.safe_dump({"dataset": str(tmp_path / "absent.txt")}))
    assert main(["run", "--config", str(cfg), "--out", str(tmp_path / "o")]) == 2
    assert "absent.txt" in capsys.readouterr().err


def test_report_without_records(tmp_path, capsys):
    assert main(["report", "--out", str(tmp_path)]) == 2
    assert "run_records.csv" in capsys.readouterr().err


def test_auction_command(tmp_path, small_config, capsys):
    assert main(["auction", "--config", str(small_config), "--budget", "6", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "winners" in out and "OR" in out
    with open(tmp_path / "auction_outcomes.csv") as fh:
        rows = list(csv.DictReader(fh))
    winners = [r for r in rows if r["won"] == "1"]
    assert winners
    assert all(float(r["payment"]) >= float(r["bid"]) for r in winners)
    assert all(float(r["payment"]) == 0 and float(r["utility"]) == 0 for r in rows if r["won"] == "0")


def test_verify_command(tmp_path, capsys):
    assert main(["verify", "--instances", "3", "--out", str(tmp_path)]) == 0
    assert "payment_criticality" in capsys.readouterr().out


def test_tiny_instance_is_enumerable():
    graph, claims, bids = tiny_instance(0)
    assert graph.node_count == 7 and graph.task_count == 2
    assert all(claims[v] for v in claims)
    assert exact_f(graph, [0, 1], claims) >= 0
