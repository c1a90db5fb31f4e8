import json
import math
from dataclasses import replace

import pytest

from amsupply import cli
from amsupply.locdesign import brute_force_design, build_design_model
from amsupply.model import load_instance
from amsupply.pmedian import cluster_from_dict
from conftest import tiny_instance_dict


def run(*argv):
    return cli.main([str(a) for a in argv])


@pytest.fixture
def tiny(tmp_path):
    path = tmp_path / "tiny.json"
    path.write_text(json.dumps(tiny_instance_dict()))
    return path


@pytest.fixture
def tiny_clusters(tiny, tmp_path):
    out = tmp_path / "clusters.json"
    assert run("cluster", "--instance", tiny, "--p", 1, "--out", out) == cli.EXIT_OK
    return out


def test_cluster_three_cities_p1(tiny_clusters, capsys):
    data = json.loads(tiny_clusters.read_text())
    # demands 2, 3, 4 on a line: the middle city is the 1-median
    assert data["open_ifs"] == ["L1"]
    assert set(data["assignment"].values()) == {"L1"}


def test_cluster_p_too_large(tiny, tmp_path):
    assert run("cluster", "--instance", tiny, "--p", 4, "--out", tmp_path / "c.json") == cli.EXIT_CONFIG


def test_cluster_bad_weights(tiny, tmp_path):
    code = run("cluster", "--instance", tiny, "--time-weight", 0.6, "--distance-weight", 0.6, "--out", tmp_path / "c.json")
    assert code == cli.EXIT_CONFIG


def test_cluster_all_open(tmp_path):
    inst = tmp_path / "s1.json"
    assert run("generate", "--synthetic-cities", 32, "--count", 87, "--seed", 1, "--out", inst) == cli.EXIT_OK
    out = tmp_path / "c.json"
    assert run("cluster", "--instance", inst, "--p", 32, "--time-weight", 0.7, "--distance-weight", 0.3, "--out", out) == 0
    data = json.loads(out.read_text())
    assert len(data["open_ifs"]) == 32
    assert all(k == v for k, v in data["assignment"].items())


def test_unknown_flag_is_config_error(tmp_path):
    assert run("cluster", "--bogus") == cli.EXIT_CONFIG
    assert run() == cli.EXIT_CONFIG


def test_design_forced_pc_matches_oracle(tiny, tiny_clusters, tmp_path, capsys):
    out = tmp_path / "d.json"
    # suppliers need 72 h and deliveries 24 h, so only a local PC meets 10 h
    assert run("design", "--instance", tiny, "--clusters", tiny_clusters, "--max-lead-hours", 10, "--out", out) == 0
    data = json.loads(out.read_text())
    assert data["open_pcs"] == ["L1"]
    assert data["printers"] == {"L1": 1}
    n = math.ceil(9 * 3.0 / (2112.0 / 2))
    assert data["total_cost"] == pytest.approx(20000 + n * 11500 + 22.0 * 9 + 5.0 * 3)
    model = build_design_model(cluster_from_dict(json.loads(tiny_clusters.read_text())), load_instance(tiny), 10)
    capped = replace(model, econ=replace(model.econ, max_printers=3))  # one printer is needed; keep the oracle in its caps
    assert data["total_cost"] == pytest.approx(brute_force_design(capped).total_cost, rel=1e-9)
    assert "solve time" in capsys.readouterr().out


def test_design_infeasible(tiny, tiny_clusters, tmp_path, capsys):
    out = tmp_path / "d.json"
    code = run("design", "--instance", tiny, "--clusters", tiny_clusters, "--max-lead-hours", 2, "--out", out)
    assert code == cli.EXIT_INFEASIBLE
    assert "L1 P1" in capsys.readouterr().err
    assert json.loads(out.read_text())["status"] == "infeasible"


def test_design_zero_demand(tmp_path):
    data = tiny_instance_dict()
    data["orders"] = []
    inst = tmp_path / "empty.json"
    inst.write_text(json.dumps(data))
    clusters, out = tmp_path / "c.json", tmp_path / "d.json"
    assert run("cluster", "--instance", inst, "--p", 1, "--out", clusters) == 0
    assert run("design", "--instance", inst, "--clusters", clusters, "--max-lead-hours", 10, "--out", out) == 0
    result = json.loads(out.read_text())
    assert result["total_cost"] == 0
    assert result["open_pcs"] == [] and result["internal_routes"] == [] and result["external_routes"] == []


def test_design_missing_clusters_file(tiny, tmp_path):
    code = run("design", "--instance", tiny, "--clusters", tmp_path / "nope.json", "--max-lead-hours", 10, "--out", tmp_path / "d.json")
    assert code == cli.EXIT_IO


def test_design_garbage_clusters_file(tiny, tmp_path):
    bad = tmp_path / "bad.json"
    bad.write_text("{}")
    code = run("design", "--instance", tiny, "--clusters", bad, "--max-lead-hours", 10, "--out", tmp_path / "d.json")
    assert code == cli.EXIT_IO


def test_sweep_single_row(tiny, tiny_clusters, tmp_path, capsys):
    out = tmp_path / "curve.csv"
    assert run("sweep", "--instance", tiny, "--clusters", tiny_clusters, "--from", 30, "--to", 30, "--out", out) == 0
    assert len(out.read_text().splitlines()) == 2


def test_sweep_full_default_grid(tiny, tiny_clusters, tmp_path, capsys):
    out, svg = tmp_path / "curve.csv", tmp_path / "curve.svg"
    code = run("sweep", "--instance", tiny, "--clusters", tiny_clusters, "--from", 4, "--to", 55, "--step", 1, "--jobs", 1, "--out", out, "--svg", svg)
    assert code == 0
    lines = out.read_text().splitlines()
    assert len([line for line in lines if not line.startswith("#")]) == 53
    assert lines[-1].startswith("# selected ")
    assert "cost-benefit point" in capsys.readouterr().out
    assert svg.read_text().startswith("<svg")


def test_sweep_all_infeasible(tiny, tiny_clusters, tmp_path):
    out = tmp_path / "curve.csv"
    code = run("sweep", "--instance", tiny, "--clusters", tiny_clusters, "--from", 1, "--to", 3, "--out", out)
    assert code == cli.EXIT_INFEASIBLE


def test_sweep_unwritable(tiny, tiny_clusters, tmp_path):
    code = run("sweep", "--instance", tiny, "--clusters", tiny_clusters, "--out", tmp_path / "no" / "dir" / "c.csv")
    assert code == cli.EXIT_IO


@pytest.mark.parametrize("grid", [("5", "4", "1"), ("4", "5", "0")])
def test_sweep_bad_grid(tiny, tiny_clusters, tmp_path, grid):
    lo, hi, step = grid
    code = run("sweep", "--instance", tiny, "--clusters", tiny_clusters, "--from", lo, "--to", hi, "--step", step, "--out", tmp_path / "c.csv")
    assert code == cli.EXIT_CONFIG


def test_validate_ok_and_report(tiny, tmp_path, capsys):
    report = tmp_path / "r.json"
    assert run("validate", "--instance", tiny, "--out", report) == 0
    assert json.loads(report.read_text()) == {"instance": "tiny.json", "valid": True, "violations": []}


def test_validate_failure(tmp_path, capsys):
    data = tiny_instance_dict()
    data["locations"][0]["latitude"] = 95.0
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(data))
    assert run("validate", "--instance", path) == cli.EXIT_VALIDATION
    assert "latitude_range" in capsys.readouterr().out
    # the pipeline commands refuse the same file
    assert run("cluster", "--instance", path, "--out", tmp_path / "c.json") == cli.EXIT_VALIDATION


def test_malformed_instance(tmp_path):
    path = tmp_path / "bad.json"
    path.write_text("{not json")
    assert run("validate", "--instance", path) == cli.EXIT_VALIDATION


def test_missing_instance_file(tmp_path):
    assert run("validate", "--instance", tmp_path / "missing.json") == cli.EXIT_IO


def test_provider_error_names_pair(tiny, tmp_path, capsys):
    csv_path = tmp_path / "m.csv"
    csv_path.write_text("origin,destination,distance_m,travel_time_s\nL0,L1,1000,60\n")
    code = run("cluster", "--instance", tiny, "--matrix-csv", csv_path, "--out", tmp_path / "c.json")
    assert code == cli.EXIT_PROVIDER
    assert "L0" in capsys.readouterr().err


def test_no_matrix_source_is_config_error(tmp_path):
    data = tiny_instance_dict()
    data.pop("matrix")
    path = tmp_path / "nomatrix.json"
    path.write_text(json.dumps(data))
    assert run("cluster", "--instance", path, "--out", tmp_path / "c.json") == cli.EXIT_CONFIG


def test_generate_from_base_instance(tiny, tmp_path):
    out = tmp_path / "g.json"
    assert run("generate", "--instance", tiny, "--count", 50, "--seed", 4, "--out", out) == 0
    inst = load_instance(out)
    assert len(inst.orders) == 50
    assert all(o.quantity >= 1 for o in inst.orders)
    assert inst.metadata["seed"] == 4


@pytest.mark.parametrize(
    "argv",
    [
        ("generate", "--out", "x.json"),
        ("generate", "--synthetic-cities", "1", "--out", "x.json"),
        ("generate", "--synthetic-cities", "5", "--demand-cities", "9", "--out", "x.json"),
        ("generate", "--synthetic-cities", "5", "--count", "0", "--out", "x.json"),
    ],
)
def test_generate_bad_arguments(argv, tmp_path, monkeypatch):
    monkeypatch.chdir(tmp_path)
    assert run(*argv) == cli.EXIT_CONFIG


def test_every_command_is_byte_identical(tmp_path):
    def pipeline(tag):
        d = tmp_path / tag
        d.mkdir()
        inst, base = d / "inst.json", d / "base.json"
        assert run("generate", "--synthetic-cities", 10, "--count", 30, "--seed", 7, "--demand-cities", 5, "--out", base) == 0
        assert run("generate", "--instance", base, "--count", 40, "--seed", 3, "--out", inst) == 0
        assert run("validate", "--instance", inst, "--out", d / "report.json") == 0
        assert run("cluster", "--instance", inst, "--p", 4, "--out", d / "clusters.json") == 0
        assert run("design", "--instance", inst, "--clusters", d / "clusters.json", "--max-lead-hours", 20, "--out", d / "design.json") == 0
        assert run("sweep", "--instance", inst, "--clusters", d / "clusters.json", "--from", 3, "--to", 40, "--step", 3, "--jobs", 2, "--out", d / "curve.csv", "--svg", d / "curve.svg") == 0
        return {p.name: p.read_bytes() for p in sorted(d.iterdir())}

    first, second = pipeline("a"), pipeline("b")
    assert first.keys() == second.keys()
    assert first == second
