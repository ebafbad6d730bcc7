import csv
import json

import pytest

from lnprobe import cli
from lnprobe.ingestion import save_snapshot

from helpers import add_channel, network


def write(path, obj):
    path.write_text(json.dumps(obj))
    return str(path)


def four_nodes(tmp_path):
    net = network(["n1", "n2", "n3", "n4"])
    add_channel(net, "c1", "n1", "n2", 200_000, 120_000)
    add_channel(net, "c2", "n2", "n3", 200_000, 80_000)
    add_channel(net, "c3", "n3", "n4", 150_000, 30_000)
    add_channel(net, "c4", "n2", "n4", 90_000, 45_000)
    snap = tmp_path / "four.json"
    save_snapshot(net, snap)
    return write(tmp_path / "cfg.json", {"snapshot": "four.json",
                                         "attacker": {"entry_capacities_sat": [16_777_215]}})


def test_generate_is_byte_stable(tmp_path, capsys):
    cfg = write(tmp_path / "g.json", {"topology": {"node_count": 50, "channel_count": 100}, "seed": 1})
    assert cli.main(["generate", "--config", cfg, "--out", str(tmp_path / "a.json")]) == 0
    assert cli.main(["generate", "--config", cfg, "--out", str(tmp_path / "b.json")]) == 0
    assert (tmp_path / "a.json").read_bytes() == (tmp_path / "b.json").read_bytes()
    assert "nodes=50 channels=100" in capsys.readouterr().out


def test_bad_fraction_exit_2(tmp_path, capsys):
    cfg = write(tmp_path / "g.json", {"topology": {"dead_node_fraction": 1.5}})
    assert cli.main(["generate", "--config", cfg, "--out", str(tmp_path / "x.json")]) == 2
    assert "dead_node_fraction" in capsys.readouterr().err


def test_preset_node_count(tmp_path):
    out = tmp_path / "p.json"
    assert cli.main(["generate", "--preset", "testnet-scale", "--out", str(out)]) == 0
    doc = json.loads(out.read_text())
    assert len(doc["nodes"]) == 1974 and len(doc["channels"]) == 5884


def test_tiny_fixture_all_usable(tmp_path):
    cfg = four_nodes(tmp_path)
    out = tmp_path / "rep"
    assert cli.main(["probe", "--config", cfg, "--out", str(out)]) == 0
    summary = json.loads((out / "summary.json").read_text())
    assert set(summary) >= {"onions_total", "onions_usable_fraction", "channels_probed",
                            "mean_info_coefficient", "simulated_ms"}
    assert summary["onions_total"] > 0
    assert summary["onions_usable_fraction"] == 1.0
    for name in ("timings.csv", "channel_times.csv", "info_coeffs.csv", "balance_coeffs.csv",
                 "usage.csv", "cost.csv"):
        assert (out / name).is_file()


def test_probe_twice_identical(tmp_path):
    cfg = write(tmp_path / "c.json", {"topology": {"node_count": 80, "channel_count": 160}, "seed": 7})
    for d in ("r1", "r2"):
        assert cli.main(["probe", "--config", cfg, "--out", str(tmp_path / d)]) == 0
    for f in sorted((tmp_path / "r1").iterdir()):
        assert f.read_bytes() == (tmp_path / "r2" / f.name).read_bytes()


def test_seed_flag_overrides(tmp_path):
    cfg = write(tmp_path / "c.json", {"topology": {"node_count": 40, "channel_count": 80}, "seed": 7})
    cli.main(["generate", "--config", cfg, "--out", str(tmp_path / "a.json")])
    cli.main(["generate", "--config", cfg, "--seed", "8", "--out", str(tmp_path / "b.json")])
    assert (tmp_path / "a.json").read_bytes() != (tmp_path / "b.json").read_bytes()


def test_missing_snapshot_exit_2(tmp_path):
    cfg = write(tmp_path / "c.json", {"snapshot": "nowhere.json"})
    assert cli.main(["probe", "--config", cfg, "--out", str(tmp_path / "r")]) == 2


@pytest.mark.parametrize("doc", [
    {},
    {"topology": {}, "snapshot": "x.json"},
    {"topology": {"node_count": "many"}},
    {"topology": {}, "prober": {"max_hops": 40}},
    {"topology": {}, "forwarding": {"flood_detection": {"threshold": 0}}},
    {"topology": {}, "colour": "blue"},
])
def test_config_errors_exit_2(tmp_path, doc):
    cfg = write(tmp_path / "c.json", doc)
    assert cli.main(["probe", "--config", cfg, "--out", str(tmp_path / "r")]) == 2


def test_runtime_error_exit_3(tmp_path, monkeypatch):
    def boom(*a, **k):
        raise RuntimeError("simulated crash")
    monkeypatch.setattr(cli, "run_probe", boom)
    cfg = write(tmp_path / "c.json", {"topology": {"node_count": 20, "channel_count": 40}})
    assert cli.main(["probe", "--config", cfg, "--out", str(tmp_path / "r")]) == 3


def test_experiment_outputs(tmp_path):
    cfg = write(tmp_path / "e.json", {
        "topology": {"node_count": 50, "channel_count": 100},
        "experiment": {"countermeasures": ["none", "merge_errors"], "workload": {"pairs": 5}},
        "seed": 2,
    })
    out = tmp_path / "ex"
    assert cli.main(["experiment", "--config", cfg, "--out", str(out), "--runs", "2"]) == 0
    with open(out / "attack_matrix.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert [(r["seed"], r["countermeasure"]) for r in rows] == [
        ("2", "none"), ("2", "merge_errors"), ("3", "none"), ("3", "merge_errors")]
    with open(out / "efficiency.csv") as fh:
        eff = list(csv.DictReader(fh))
    assert [(r["seed"], r["disclosure"]) for r in eff] == [("2", "off"), ("2", "on"), ("3", "off"), ("3", "on")]


def test_empty_workload_exit_2(tmp_path):
    cfg = write(tmp_path / "e.json", {"topology": {"node_count": 20, "channel_count": 40},
                                      "experiment": {"workload": {"pairs": 0}}})
    assert cli.main(["experiment", "--config", cfg, "--out", str(tmp_path / "ex")]) == 2


def test_parallel_runs(tmp_path):
    cfg = write(tmp_path / "c.json", {"topology": {"node_count": 30, "channel_count": 60}, "seed": 1})
    assert cli.main(["probe", "--config", cfg, "--out", str(tmp_path / "m"), "--runs", "2", "--jobs", "2"]) == 0
    a = json.loads((tmp_path / "m" / "seed_1" / "summary.json").read_text())
    assert a["seed"] == 1
    assert cli.main(["probe", "--config", cfg, "--seed", "2", "--out", str(tmp_path / "s")]) == 0
    assert (tmp_path / "m" / "seed_2" / "timings.csv").read_bytes() == (tmp_path / "s" / "timings.csv").read_bytes()
