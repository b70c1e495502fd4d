import csv
import json

import numpy as np
import pytest

from loadveil.cli import main
from loadveil.harness import (
    SEED_ENV,
    ConfigError,
    ScenarioError,
    emit_results,
    grid_configs,
    parse_config,
    run_configs,
    run_scenario,
    run_sweep,
    scenario_streams,
    set_path,
)
from loadveil.traces import load_traces_csv, save_models_json, synthesize_household, \
    synthetic_household, write_traces_csv

FAST = {"particles": 50}


def doc(technique="none", **extra):
    d = {"technique": technique, "duration_days": 0.01, "seed": 3, "nilm": dict(FAST),
         "outputs": {"traces": False}}
    if technique == "blh":
        d["blh"] = {"capacity_ah": 100}
    if technique == "llh":
        d["llh"] = {"daily_target_kwh": 5}
    d.update(extra)
    return d


def read_csv(path):
    with open(path, newline="") as fh:
        return list(csv.DictReader(fh))


# --- config validation -------------------------------------------------------

@pytest.mark.parametrize("bad, msg", [
    ({"technique": "magic"}, "technique"),
    ({"technique": "blh"}, "exactly its own block"),
    ({"technique": "blh", "blh": {"capacity_ah": 10}, "llh": {"daily_target_kwh": 5}}, "exactly"),
    ({"technique": "none", "llh": {"daily_target_kwh": 5}}, "must not carry"),
    ({"technique": "llh", "llh": {"daily_target_kwh": 5}, "battery": {}}, "battery"),
    ({"technique": "blh", "blh": {"capacity_ah": -1}}, "capacity_ah"),
    ({"technique": "none", "seed": -1}, "seed"),
    ({"technique": "none", "duration_days": 0.5, "step_seconds": 7}, "integer"),
    ({"technique": "none", "nilm": {"median_order": 4}}, "odd"),
    ({"technique": "none", "bogus": 1}, "bogus"),
    ({"technique": "llh", "llh": {"daily_target_kwh": 50}}, "p_max_w"),
    ({"technique": "blh", "blh": {"capacity_ah": 100, "soc_force_low": 0.1}}, "SOC window"),
    ({"technique": "none", "household": {"csv": "x.csv"}}, "models"),
])
def test_config_errors(bad, msg):
    with pytest.raises(ConfigError, match=msg):
        parse_config(bad)


def test_config_defaults():
    cfg = parse_config({"technique": "blh", "blh": {"capacity_ah": 100}})
    assert cfg.scenario_id == "blh-100Ah"
    assert cfg.n_samples == 86400 and cfg.median_order == 5
    assert cfg.stepping.beta_w == 360.0
    assert [m.name for m in cfg.models][0] == "TV"


def test_seed_precedence(monkeypatch):
    d = doc(seed=4)
    assert parse_config(d).seed == 4
    monkeypatch.setenv(SEED_ENV, "11")
    assert parse_config(d).seed == 11
    assert parse_config(d, seed=99).seed == 99
    monkeypatch.setenv(SEED_ENV, "eleven")
    with pytest.raises(ConfigError):
        parse_config(d)


def test_scenario_streams_depend_on_id():
    a, _ = scenario_streams(0, "blh-10")
    b, _ = scenario_streams(0, "blh-600")
    a2, _ = scenario_streams(0, "blh-10")
    assert a.generate_state(2).tolist() == a2.generate_state(2).tolist()
    assert a.generate_state(2).tolist() != b.generate_state(2).tolist()


def test_set_path_copies():
    base = {"blh": {"capacity_ah": 1}}
    out = set_path(base, "blh.capacity_ah", 5)
    assert out["blh"]["capacity_ah"] == 5 and base["blh"]["capacity_ah"] == 1


def test_grid_has_eleven_scenarios():
    docs = grid_configs(doc())
    assert [d["technique"] for d in docs].count("blh") == 6
    assert [d["technique"] for d in docs].count("llh") == 4
    for d in docs:
        parse_config(d)


# --- running ----------------------------------------------------------------

def test_no_hiding_has_zero_rmse_and_turnover():
    r = run_scenario(doc())
    assert r.ok and r.rmse_w == 0 and r.turnover_kwh == 0
    assert 0 <= r.accuracy.total <= 1 and 0 <= r.reference.total <= 1


def test_blh_and_llh_scenarios():
    blh = run_scenario(doc("blh"))
    llh = run_scenario(doc("llh"))
    assert blh.rmse_w > 0 and blh.fallback_fraction == 0
    assert llh.rmse_w > 0 and llh.turnover_kwh > 0
    assert blh.reference.total == llh.reference.total  # shared household


def test_scenario_failure_is_wrapped(tmp_path):
    models = tmp_path / "m.json"
    save_models_json(synthetic_household(), models)
    d = doc(household={"models": "m.json", "csv": "missing.csv"})
    cfg = parse_config(d, str(tmp_path))
    with pytest.raises(ScenarioError, match="missing.csv"):
        run_scenario(cfg)
    [res] = run_configs([d], base_dir=str(tmp_path))
    assert not res.ok and "missing.csv" in res.error


def test_csv_household(tmp_path):
    models = synthetic_household()
    traces, _ = synthesize_household(models, 900, seed=1)
    write_traces_csv(traces, tmp_path / "house.csv")
    save_models_json(models, tmp_path / "m.json")
    d = doc(household={"models": "m.json", "csv": "house.csv"})
    r = run_configs([d], base_dir=str(tmp_path))[0]
    assert r.ok and r.rmse_w == 0


def test_emit_empty_writes_header_only(tmp_path):
    emit_results([], tmp_path)
    lines = (tmp_path / "results.csv").read_text().splitlines()
    assert len(lines) == 1 and lines[0].startswith("scenario_id,technique")


def test_emit_and_reload_traces(tmp_path):
    d = doc("blh", outputs={"traces": True})
    [r] = run_configs([d])
    paths = emit_results([r], tmp_path)
    assert len(paths) == 4
    rows = read_csv(tmp_path / "results.csv")
    assert float(rows[0]["rmse_w"]) == r.rmse_w
    plot = read_csv(tmp_path / "plotdata.csv")
    assert plot[0]["technique"] == "blh"
    table = read_csv(tmp_path / "accuracy_table.csv")
    assert [row["case"] for row in table] == ["blh", "reference"]
    loaded = load_traces_csv(tmp_path / "traces" / "blh-100Ah.csv",
                             schema=["net_w", "metered_w", "soc"])
    np.testing.assert_array_equal(loaded["metered_w"].samples, r.traces["metered_w"])
    np.testing.assert_array_equal(
        loaded["metered_w"].samples, loaded["net_w"].samples + r.traces["battery_w"])
    assert loaded["soc"].samples.min() >= 0.2


def test_results_byte_reproducible(tmp_path):
    for name in ("a", "b"):
        emit_results(run_configs([doc("llh")]), tmp_path / name)
    assert (tmp_path / "a" / "results.csv").read_bytes() == (tmp_path / "b" / "results.csv").read_bytes()


def test_sweep_order_independent(tmp_path):
    base = doc("blh")
    emit_results(run_sweep(base, "blh.capacity_ah", [10, 600, 100]), tmp_path / "x")
    emit_results(run_sweep(base, "blh.capacity_ah", [600, 100, 10]), tmp_path / "y")
    for f in ("results.csv", "plotdata.csv", "accuracy_table.csv"):
        assert (tmp_path / "x" / f).read_bytes() == (tmp_path / "y" / f).read_bytes()
    values = [float(r["value"]) for r in read_csv(tmp_path / "x" / "results.csv")]
    assert values == [10, 100, 600]


def test_sweep_records_bad_value():
    results = run_sweep(doc("blh"), "blh.capacity_ah", [100, -5])
    assert [r.ok for r in results] == [True, False]


# --- CLI --------------------------------------------------------------------

def write_doc(tmp_path, d):
    path = tmp_path / "cfg.json"
    path.write_text(json.dumps(d))
    return str(path)


def test_cli_validate(tmp_path, capsys):
    assert main(["validate", "--config", write_doc(tmp_path, doc("blh"))]) == 0
    assert "ok: scenario 'blh-100Ah'" in capsys.readouterr().out
    assert main(["validate", "--config", write_doc(tmp_path, {"technique": "x"})]) == 2
    assert main(["validate", "--config", str(tmp_path / "absent.json")]) == 2


def test_cli_run_and_seed(tmp_path):
    cfg = write_doc(tmp_path, doc("llh"))
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o1"), "--seed", "5"]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o2"), "--seed", "5"]) == 0
    assert main(["run", "--config", cfg, "--out", str(tmp_path / "o3"), "--seed", "6"]) == 0
    a, b, c = ((tmp_path / o / "results.csv").read_bytes() for o in ("o1", "o2", "o3"))
    assert a == b != c


def test_cli_sweep_and_failure_exit(tmp_path):
    cfg = write_doc(tmp_path, doc("blh"))
    out = tmp_path / "s"
    assert main(["sweep", "--config", cfg, "--axis", "blh.capacity_ah=10,100",
                 "--out", str(out)]) == 0
    assert len(read_csv(out / "results.csv")) == 2
    assert main(["sweep", "--config", cfg, "--axis", "blh.capacity_ah=10,-1",
                 "--out", str(out)]) == 1


def test_cli_bad_axis(tmp_path):
    with pytest.raises(SystemExit):
        main(["sweep", "--config", write_doc(tmp_path, doc("blh")), "--axis", "nonsense"])
