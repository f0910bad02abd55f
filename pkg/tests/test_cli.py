import json

import numpy as np
import pandas as pd
import pytest

from transitbench.cli import ENV_OUT, main

BASE = {
    "data": {"preset": "travel_survey", "n": 400, "seed": 5},
    "models": [{"family": "zinb"}, {"family": "cart", "max_depth": 4}],
    "k": 3,
    "seed": 2,
}


def write_config(tmp_path, **changes):
    doc = json.loads(json.dumps(BASE))
    doc.update(changes)
    path = tmp_path / "run.json"
    path.write_text(json.dumps(doc))
    return str(path)


def run(tmp_path, command, *extra, **changes):
    cfg = write_config(tmp_path, **changes)
    out = tmp_path / f"out_{command}"
    code = main([command, "--config", cfg, "--out", str(out), *extra])
    return code, out


def test_bench_writes_long_scores_and_tests(tmp_path):
    code, out = run(tmp_path, "bench")
    assert code == 0
    scores = pd.read_csv(out / "scores.csv")
    assert len(scores) == 2 * 3
    assert set(scores.model) == {"zinb", "cart"}
    tests = json.loads((out / "tests.json").read_text())
    assert set(tests) == {"r2", "rmse", "medae", "rrse"}
    assert tests["rmse"]["orientation"] == "lower-better"
    assert len(tests["r2"]["pairs"]) == 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["command"] == "bench"
    assert "scores.csv" in manifest["outputs"]
    assert len(manifest["config_sha256"]) == 64


def test_bench_is_deterministic(tmp_path):
    _, a = run(tmp_path, "bench")
    b = tmp_path / "again"
    assert main(["bench", "--config", str(tmp_path / "run.json"), "--out", str(b)]) == 0
    for name in ("scores.csv", "score_matrix.csv", "summary.csv", "tests.json", "pvalues_r2.csv", "folds.csv"):
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_parallel_jobs_match_serial(tmp_path):
    _, a = run(tmp_path, "bench")
    b = tmp_path / "par"
    assert main(["bench", "--config", str(tmp_path / "run.json"), "--out", str(b), "--jobs", "2"]) == 0
    assert (a / "scores.csv").read_bytes() == (b / "scores.csv").read_bytes()


@pytest.mark.parametrize("change", [{"alpha": 1.5}, {"k": 1}, {"metrics": ["mape"]}, {"models": []}])
def test_invalid_config_exits_2_before_writing(tmp_path, capsys, change):
    code, out = run(tmp_path, "bench", **change)
    assert code == 2
    assert not out.exists()
    assert capsys.readouterr().err.startswith("error:")


def test_cli_overrides_are_validated(tmp_path):
    code, _ = run(tmp_path, "bench", "--alpha", "0")
    assert code == 2


def test_missing_data_file_exits_3(tmp_path):
    (tmp_path / "schema.json").write_text(json.dumps({
        "target": "trips", "columns": [{"name": "trips", "kind": "count"}, {"name": "a", "kind": "numeric"}]}))
    code, out = run(tmp_path, "bench", data={"path": "missing.csv", "schema": "schema.json"})
    assert code == 3
    assert not out.exists()
    assert not [p for p in tmp_path.iterdir() if p.name.startswith(".")]


def test_refuses_to_clobber_foreign_directory(tmp_path):
    out = tmp_path / "out_bench"
    out.mkdir()
    (out / "keep.txt").write_text("mine")
    code, _ = run(tmp_path, "bench")
    assert code == 2
    assert (out / "keep.txt").read_text() == "mine"


def test_output_root_env(tmp_path, monkeypatch):
    monkeypatch.setenv(ENV_OUT, str(tmp_path / "root"))
    cfg = write_config(tmp_path)
    assert main(["synth", "--config", cfg, "--out", "rel"]) == 0
    assert (tmp_path / "root" / "rel" / "data.csv").exists()


def test_synth_roundtrips_through_bench(tmp_path):
    code, out = run(tmp_path, "synth")
    assert code == 0
    data = pd.read_csv(out / "data.csv")
    assert len(data) == 400
    code, out2 = run(tmp_path, "bench", data={"path": "out_synth/data.csv", "schema": "out_synth/schema.json"})
    assert code == 0
    assert len(pd.read_csv(out2 / "scores.csv")) == 6


def test_subset_filters_rows(tmp_path):
    code, out = run(tmp_path, "synth", subset={"transit_pass": 1})
    assert code == 0
    assert (pd.read_csv(out / "data.csv").transit_pass == 1).all()


def test_explain_single_method(tmp_path):
    code, out = run(tmp_path, "explain", explain={"model": "cart", "methods": ["importance"]})
    assert code == 0
    tables = sorted(p.name for p in out.iterdir() if p.suffix in (".csv", ".json") and p.name != "manifest.json")
    assert tables == ["importance.csv"]


def test_explain_lime_two_instances(tmp_path):
    code, out = run(tmp_path, "explain", explain={
        "model": "cart", "methods": ["lime"], "instances": [3, 7], "lime": {"num_samples": 400}})
    assert code == 0
    doc = json.loads((out / "lime.json").read_text())
    assert [e["instance"] for e in doc["entries"]] == [3, 7]
    assert all(e["method"] == "lime" for e in doc["entries"])


def test_explain_shap_efficiency(tmp_path):
    code, out = run(tmp_path, "explain", explain={
        "model": "cart", "methods": ["shap"], "shap_rows": [0, 1, 2], "background": 15})
    assert code == 0
    shap = pd.read_csv(out / "shap.csv")
    env = json.loads((out / "shap.json").read_text())
    for inst in env["instances"]:
        total = shap.loc[shap.instance == inst["instance"], "shap"].sum()
        assert total == pytest.approx(inst["prediction"] - inst["base"], abs=1e-8)


def test_explain_unknown_method_exits_2(tmp_path):
    code, out = run(tmp_path, "explain", explain={"model": "cart", "methods": ["anchors"]})
    assert code == 2
    assert not out.exists()


def test_explain_unknown_model_exits_2(tmp_path):
    code, _ = run(tmp_path, "explain", explain={"model": "nope", "methods": ["pdp"]})
    assert code == 2


def test_scenario_three_models(tmp_path):
    models = [{"family": "ols"}, {"family": "zinb"}, {"family": "cart", "max_depth": 4}]
    code, out = run(tmp_path, "scenario", models=models, scenario={"deltas": [0, 50000, 100000]})
    assert code == 0
    curves = pd.read_csv(out / "sensitivity.csv")
    assert len(curves) == 9
    assert (curves.loc[curves.delta == 0, "mean_new_trips"] == 0).all()
    spaef = pd.read_csv(out / "spaef_matrix.csv").set_index("model")
    assert spaef.shape == (3, 3)
    np.testing.assert_allclose(np.diag(spaef.to_numpy()), 1.0)
    for name in ("ols", "zinb", "cart"):
        assert (out / f"hexmap_{name}.csv").exists()


def test_scenario_zero_delta_only(tmp_path):
    code, out = run(tmp_path, "scenario", scenario={"deltas": [0]})
    assert code == 0
    curves = pd.read_csv(out / "sensitivity.csv")
    assert (curves.mean_new_trips == 0).all()
    hexmap = pd.read_csv(out / "hexmap_zinb.csv")
    assert (hexmap.value == 0).all()


def test_scenario_bad_deltas_exit_2(tmp_path):
    code, _ = run(tmp_path, "scenario", scenario={"deltas": [10000, 0]})
    assert code == 2


def test_plots_are_svg(tmp_path):
    code, out = run(tmp_path, "bench", "--plots")
    assert code == 0
    svgs = sorted(out.glob("*.svg"))
    assert svgs
    for p in svgs:
        head = p.read_text()[:400]
        assert "<svg" in head


def test_plots_deterministic(tmp_path):
    _, a = run(tmp_path, "scenario", "--plots", scenario={"deltas": [0, 100000]})
    b = tmp_path / "again"
    assert main(["scenario", "--config", str(tmp_path / "run.json"), "--out", str(b), "--plots"]) == 0
    for p in a.glob("*.svg"):
        assert p.read_bytes() == (b / p.name).read_bytes(), p.name


def test_scenario_without_coordinates_skips_maps(tmp_path, capsys):
    _, synth = run(tmp_path, "synth")
    schema = json.loads((synth / "schema.json").read_text())
    schema["coords"] = None
    (synth / "schema.json").write_text(json.dumps(schema))
    with pytest.warns(UserWarning, match="coordinates"):
        code, out = run(tmp_path, "scenario", data={"path": "out_synth/data.csv", "schema": "out_synth/schema.json"},
                        scenario={"deltas": [0, 10000]})
    assert code == 0
    assert (out / "sensitivity.csv").exists()
    assert not list(out.glob("hexmap_*"))
    assert "warning:" in capsys.readouterr().err


def test_explain_plots_cover_every_method(tmp_path):
    code, out = run(tmp_path, "explain", "--plots", explain={
        "model": "cart", "methods": list(("importance", "pdp", "ice", "shap", "lime")),
        "features": ["access", "vehicles_per_adult"], "shap_rows": 5, "background": 10, "ice_sample": 10,
        "instances": [0], "repeats": 2, "lime": {"num_samples": 300}})
    assert code == 0
    names = {p.name for p in out.glob("*.svg")}
    assert names == {"importance.svg", "pdp_access.svg", "pdp_vehicles_per_adult.svg",
                     "shap_beeswarm.svg", "lime_0.svg"}
