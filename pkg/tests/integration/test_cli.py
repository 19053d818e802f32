"""Command line runs through scripts/tvflow.py main()."""

import json

import pandas as pd
import pytest
import yaml

from config.settings import get_settings
from scripts.tvflow import main
from src.ingestion.loaders.graph_loader import parse_graph_file, read_edge_field, read_vertex_field

G2_FILE = """mmgraph 1
v 0 1.0
v 1 1.0
e 0 1 1.0
u 0 1.0
u 1 -1.0
"""

D1_FILE = """mmgraph 1
v 0 1.0
v 1 1.0
e 0 1 1.0
interior 0
f 0 1 2.0
u 0 0.0
"""


@pytest.fixture(autouse=True)
def isolated_settings(tmp_path, monkeypatch):
    settings = get_settings()
    monkeypatch.setattr(settings, "log_dir", str(tmp_path / "logs"))
    monkeypatch.setattr(settings, "output_dir", str(tmp_path / "runs"))
    monkeypatch.setattr(settings, "seed", settings.seed)
    monkeypatch.setattr(settings, "threads", settings.threads)


@pytest.fixture
def g2_file(tmp_path):
    path = tmp_path / "g2.mmg"
    path.write_text(G2_FILE, encoding="utf-8")
    return path


@pytest.fixture
def d1_file(tmp_path):
    path = tmp_path / "d1.mmg"
    path.write_text(D1_FILE, encoding="utf-8")
    return path


def test_gen(tmp_path):
    out = tmp_path / "grid.mmg"
    assert main(["--quiet", "gen", "grid2d", "--rows", "3", "--cols", "3", "--boundary", "dirichlet", "--out", str(out)]) == 0
    assert "interior 4" in out.read_text(encoding="utf-8")
    assert (tmp_path / "grid.f.mmg").exists()


def test_gen_needs_sizes(tmp_path):
    assert main(["--quiet", "gen", "path", "--out", str(tmp_path / "p.mmg")]) == 1


def test_flow(tmp_path, g2_file):
    out = tmp_path / "flow.csv"
    assert main(["--quiet", "flow", "--graph", str(g2_file), "--tau", "0.25", "--T", "2", "--entropy", "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert list(frame.columns)[:3] == ["t", "vertex", "u"]
    assert frame["t"].max() == pytest.approx(1.0)


def test_flow_with_separate_datum(tmp_path, g2_file):
    u0 = tmp_path / "u0.mmg"
    u0.write_text("mmgraph 1\nu 0 3.0\nu 1 1.0\n", encoding="utf-8")
    out = tmp_path / "flow.csv"
    assert main(["--quiet", "flow", "--graph", str(g2_file), "--u0", str(u0), "--tau", "0.5", "--T", "2", "--out", str(out)]) == 0
    frame = pd.read_csv(out)
    assert frame[frame["t"] == 0.0]["u"].tolist() == [3.0, 1.0]


def test_resolvent(tmp_path, d1_file):
    out = tmp_path / "resolvent.csv"
    assert main(["--quiet", "resolvent", "--graph", str(d1_file), "--bc", "dirichlet", "--lambda", "1", "--out", str(out)]) == 0
    assert pd.read_csv(out)["u"].tolist() == pytest.approx([1.0], abs=1e-9)


def test_resolvent_dumps_certificate(tmp_path, d1_file):
    dump = tmp_path / "cert.json"
    code = main([
        "--quiet", "resolvent", "--graph", str(d1_file), "--bc", "dirichlet", "--lambda", "1",
        "--max-iters", "200000", "--out", str(tmp_path / "r.csv"), "--dump-certificate", str(dump),
    ])
    assert code == 0
    document = json.loads(dump.read_text(encoding="utf-8"))
    assert document["converged"] is True
    assert document["condition_report"]["passed"] is True
    assert document["u"] == pytest.approx([1.0], abs=1e-9)
    assert document["lambda"] == 1.0
    [(x, y, value)] = document["X"]
    assert (x, y) == (0, 1)
    assert abs(value) <= 1.0

    domain = parse_graph_file(d1_file).domain
    fields = dump.with_suffix(".fields.mmg")
    assert read_vertex_field(fields, domain) == pytest.approx([1.0], abs=1e-9)
    assert read_edge_field(fields, domain).boundary == pytest.approx([value])


def test_resolvent_iteration_cap(tmp_path, g2_file):
    datum = tmp_path / "g.mmg"
    datum.write_text("mmgraph 1\nu 0 2.0\nu 1 1.0\n", encoding="utf-8")
    dump = tmp_path / "cert.json"
    code = main([
        "--quiet", "resolvent", "--graph", str(g2_file), "--g", str(datum), "--lambda", "1",
        "--max-iters", "1", "--dump-certificate", str(dump),
    ])
    assert code == 1
    document = json.loads(dump.read_text(encoding="utf-8"))
    assert document["converged"] is False
    assert document["iterations"] == 1


def test_resolvent_rejects_bad_iteration_cap(tmp_path, d1_file):
    args = ["--quiet", "resolvent", "--graph", str(d1_file), "--bc", "dirichlet", "--lambda", "1"]
    assert main(args + ["--max-iters", "0"]) == 1


def test_analyze(tmp_path, g2_file):
    out = tmp_path / "analysis.csv"
    code = main([
        "--quiet", "analyze", "--graph", str(g2_file), "--tau", "0.25", "--T", "2",
        "--lambda1", "--extinction", "--profile", "--out", str(out),
    ])
    assert code == 0
    summary = json.loads(out.with_suffix(".json").read_text(encoding="utf-8"))
    assert summary["lambda1"]["lambda1_upper"] == pytest.approx(2.0 ** 0.5)
    lo, hi = summary["extinction_bracket"]
    assert lo <= 1.0 <= hi
    assert set(summary["checks"]) == {"extinction_bound", "ground_state"}


def test_missing_inputs_fail_cleanly(tmp_path, d1_file):
    assert main(["--quiet", "flow", "--graph", str(tmp_path / "absent.mmg"), "--tau", "0.1", "--T", "1"]) == 1
    no_data = tmp_path / "nof.mmg"
    no_data.write_text("mmgraph 1\nv 0 1\nv 1 1\ne 0 1 1\ninterior 0\nu 0 1\n", encoding="utf-8")
    assert main(["--quiet", "resolvent", "--graph", str(no_data), "--bc", "dirichlet", "--lambda", "1"]) == 1


def test_selftest_quick():
    assert main(["--quiet", "--seed", "3", "selftest", "--quick"]) == 0


def test_batch(tmp_path):
    specs = tmp_path / "specs.yaml"
    specs.write_text(
        yaml.safe_dump([
            {"name": "a", "graph": {"generator": "path", "params": {"n": 3}}, "u0": {"kind": "noise", "seed": 1}},
            {"name": "b", "graph": {"generator": "cycle", "params": {"n": 4}}, "u0": {"kind": "noise", "seed": 2}},
        ]),
        encoding="utf-8",
    )
    assert main(["--quiet", "--threads", "2", "batch", str(specs), "--out-dir", str(tmp_path / "runs")]) == 0
    assert (tmp_path / "runs" / "a" / "trajectory.csv").exists()
    assert (tmp_path / "runs" / "b" / "summary.json").exists()
