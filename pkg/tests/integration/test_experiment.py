"""End-to-end experiment runs: specs, artifacts, determinism and batches."""

import json

import pytest
import yaml
from pydantic import ValidationError

from src.ingestion.generators import path_graph
from src.ingestion.loaders.graph_loader import write_graph_file
from src.workflows.experiment import ExperimentSpec, load_specs, run_batch, run_experiment


def g2_spec(**overrides):
    data = {
        "name": "g2",
        "graph": {"generator": "path", "params": {"n": 2}},
        "u0": {"kind": "values", "values": [1.0, -1.0]},
        "tau": 0.25,
        "horizon": 2.0,
        "analyses": ["extinction", "lambda1", "profile", "ground_state"],
        "checks": ["mean", "energy", "regularity", "entropy"],
    }
    data.update(overrides)
    return ExperimentSpec.model_validate(data)


def test_two_point_experiment(tmp_path):
    result = run_experiment(g2_spec(), output_dir=tmp_path)
    assert result.status == "success", result.summary
    assert result.exit_code == 0

    summary = json.loads((tmp_path / "g2" / "summary.json").read_text(encoding="utf-8"))
    lo, hi = summary["extinction_bracket"]
    assert lo <= 1.0 <= hi
    assert summary["lambda1"]["lambda1_upper"] == pytest.approx(2.0 ** 0.5)
    assert summary["profile"] == pytest.approx([1.0, -1.0], abs=1e-6)
    assert set(summary["checks"]) >= {"mean_conservation", "energy_dissipation", "ground_state", "extinction_bound"}
    for name in ("trajectory.csv", "checks.csv", "summary.json"):
        assert (tmp_path / "g2" / name).exists()


def test_dirichlet_experiment_from_file(tmp_path):
    generated = path_graph(2)
    graph_file = write_graph_file(tmp_path / "d1.mmg", generated.graph)
    spec = ExperimentSpec.model_validate(
        {
            "name": "d1",
            "graph": {"file": str(graph_file)},
            "interior": [0],
            "bc": "dirichlet",
            "boundary_value": 0.0,
            "u0": {"kind": "constant", "value": 2.0},
            "tasks": ["resolvent", "flow"],
            "tau": 0.25,
            "horizon": 3.0,
            "analyses": ["extinction", "profile"],
            "checks": ["energy", "mean"],
        }
    )
    result = run_experiment(spec, output_dir=tmp_path / "out")
    assert result.status == "success", result.errors
    lo, hi = result.summary["extinction_bracket"]
    assert lo <= 2.0 <= hi
    assert result.summary["resolvent"]["certificate"]["passed"]
    assert "mean_conservation" not in result.summary["checks"]
    assert (tmp_path / "out" / "d1" / "resolvent.csv").exists()


def test_variational_checks_on_grid(tmp_path):
    spec = ExperimentSpec.model_validate(
        {
            "name": "grid",
            "graph": {"generator": "grid2d", "params": {"rows": 5, "cols": 5, "boundary": "dirichlet"}},
            "bc": "dirichlet",
            "boundary_from_trace": True,
            "u0": {"kind": "noise", "seed": 11},
            "tau": 0.1,
            "horizon": 1.0,
            "checks": ["variational", "entropy"],
        }
    )
    result = run_experiment(spec, output_dir=tmp_path)
    assert result.status == "success", result.summary.get("checks")
    assert {"variational[u]", "variational[u0]", "variational[steady]"} <= set(result.summary["checks"])


@pytest.mark.parametrize(
    "overrides",
    [
        {"tol": 0.0},
        {"tau": -1.0},
        {"u0": {"kind": "noise"}},
        {"graph": {"file": "does/not/exist.mmg"}},
        {"graph": {}},
        {"boundary_value": 1.0, "boundary_from_trace": True},
    ],
)
def test_invalid_specs_are_rejected(overrides):
    with pytest.raises(ValidationError):
        g2_spec(**overrides)


def test_bad_setup_is_an_error_result(tmp_path):
    result = run_experiment(g2_spec(u0={"kind": "values", "values": [1.0, 2.0, 3.0]}), output_dir=tmp_path)
    assert result.status == "error"
    assert result.exit_code == 1
    assert (tmp_path / "g2" / "summary.json").exists()


def test_not_converged_is_a_failed_result(tmp_path):
    spec = g2_spec(u0={"kind": "values", "values": [2.0, 1.0]}, tasks=["resolvent"], max_iters=1, analyses=[], checks=[])
    result = run_experiment(spec, output_dir=tmp_path)
    assert result.status == "failed"
    assert result.errors


def test_runs_are_byte_identical(tmp_path):
    spec = g2_spec(u0={"kind": "noise", "seed": 5}, name="noise")
    run_experiment(spec, output_dir=tmp_path / "a")
    run_experiment(spec, output_dir=tmp_path / "b")
    for name in ("trajectory.csv", "summary.json", "checks.csv"):
        assert (tmp_path / "a" / "noise" / name).read_bytes() == (tmp_path / "b" / "noise" / name).read_bytes()


def test_batch_keeps_order(tmp_path):
    specs_file = tmp_path / "batch.yaml"
    specs_file.write_text(
        yaml.safe_dump(
            {
                "experiments": [
                    {"name": f"path{n}", "graph": {"generator": "path", "params": {"n": n}},
                     "u0": {"kind": "noise", "seed": n}, "tau": 0.2, "horizon": 1.0}
                    for n in (3, 4, 5)
                ]
            }
        ),
        encoding="utf-8",
    )
    specs = load_specs(specs_file)
    results = run_batch(specs, threads=2, output_dir=tmp_path / "runs")
    assert [r.name for r in results] == ["path3", "path4", "path5"]
    assert all(r.exit_code == 0 for r in results)
    assert all((tmp_path / "runs" / r.name / "summary.json").exists() for r in results)


def test_batch_rejects_duplicate_names():
    with pytest.raises(ValueError):
        run_batch([g2_spec(), g2_spec()])
