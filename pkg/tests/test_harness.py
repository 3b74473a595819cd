import json

import numpy as np
import pytest
import yaml

from mfcsim.dynamics import TrajectoryRecord
from mfcsim.harness.config import (
    ConfigError,
    ControllerSpec,
    ExperimentConfig,
    config_from_dict,
    load_config,
    load_model,
    save_config,
)
from mfcsim.harness.ensemble import (
    EnsembleFailure,
    compare_modes,
    entropy_floor,
    gamma_scan,
    purity_floor,
    run_ensemble,
    tail_window_max,
    wilson_interval,
)
from mfcsim.harness.results import export_results, load_results, load_trajectories, write_curves
from mfcsim.harness.verify import HypothesisMismatch, verify_theorem
from mfcsim.states import DensityMatrix

QUBIT = {
    "model": {"H0": {"diag": [0, 1]}, "Hb": {"path": [1]}, "L": {"diag": [1, -1]}},
    "initial_state": "maximally_mixed",
    "controller": {"law": "switching", "target": 1, "gamma": 0.5},
    "T": 4,
    "dt": 0.001,
    "trajectories": 12,
    "seed": 11,
    "sample_every": 100,
    "batch_size": 5,
}

SIGMAX = {
    "model": {"H0": {"diag": [0, 1]}, "Hb": {"path": [1]}, "L": [[0, 1], [1, 0]], "eta": 0.5},
    "controller": {"law": "switching"},
    "T": 2,
    "trajectories": 10,
    "sample_every": 50,
}


def cfg(base=QUBIT, **kw):
    d = json.loads(json.dumps(base))
    d.update(kw)
    return config_from_dict(d)


# configuration


def test_config_round_trip_yaml_and_json(tmp_path):
    c = cfg(olc_variant={"kind": "unitary", "H0_prime": {"diag": [0, 2]}, "u": 0.3})
    for name in ("c.yaml", "c.json"):
        save_config(c, tmp_path / name)
        assert load_config(tmp_path / name) == c


def test_config_operator_forms(tmp_path):
    (tmp_path / "l.txt").write_text("N 2\n1.0+0.0j 0.0+0.0j\n0.0+0.0j -1.0+0.0j\n")
    d = json.loads(json.dumps(QUBIT))
    d["model"]["L"] = {"file": "l.txt"}
    d["model"]["Hb"] = {"matrix": [[0, "0-1j"], ["0+1j", 0]]}
    d["initial_state"] = {"pure": [1, "1j"]}
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(d))
    c = load_config(tmp_path / "c.yaml")
    assert np.allclose(c.model.L.data, np.diag([1, -1]))
    assert c.model.Hb.data[0, 1] == -1j
    assert np.allclose(c.initial_state.data, [[0.5, -0.5j], [0.5j, 0.5]])
    d["initial_state"] = {"eigenstate": 2}
    assert config_from_dict(d, tmp_path).initial_state.data[1, 1] == 1


def test_config_missing_field_named():
    d = json.loads(json.dumps(QUBIT))
    del d["model"]["L"]
    with pytest.raises(ConfigError, match="missing required field 'model.L'"):
        config_from_dict(d)
    d = json.loads(json.dumps(QUBIT))
    del d["T"]
    with pytest.raises(ConfigError, match="'T'"):
        config_from_dict(d)


def test_config_unknown_controller_named():
    d = json.loads(json.dumps(QUBIT))
    d["controller"]["law"] = "bang-bang"
    with pytest.raises(ConfigError, match="unknown controller tag 'bang-bang'"):
        config_from_dict(d)


def test_config_invariants():
    for bad in ({"T": -1}, {"dt": 0}, {"trajectories": 0}, {"convergence_epsilon": 1.5}):
        with pytest.raises(ConfigError):
            cfg(**bad)
    with pytest.raises(ConfigError, match="controller.gamma"):
        cfg(controller={"gamma": 1.2})
    with pytest.raises(ConfigError, match="controller.target"):
        cfg(controller={"target": 3})
    with pytest.raises(ConfigError, match="model.L"):
        d = json.loads(json.dumps(QUBIT))
        d["model"]["L"] = {"diag": ["x", 1]}
        config_from_dict(d)
    with pytest.raises(ConfigError, match="initial_state"):
        cfg(initial_state={"pure": [0, 0]})


def test_yaml_parse_error_has_location(tmp_path):
    p = tmp_path / "bad.yaml"
    p.write_text("model:\n  H0: [1, 2\nT: 3\n")
    with pytest.raises(ConfigError, match="line"):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.yaml")


def test_load_model_bare_and_embedded(tmp_path):
    (tmp_path / "m.yaml").write_text(yaml.safe_dump(QUBIT["model"]))
    (tmp_path / "c.yaml").write_text(yaml.safe_dump(QUBIT))
    assert np.array_equal(load_model(tmp_path / "m.yaml").L.data, load_model(tmp_path / "c.yaml").L.data)


# ensembles


def test_ensemble_at_target_converges_trivially():
    c = cfg(initial_state={"eigenstate": 1}, controller={"law": "zero"})
    r = run_ensemble(c)
    assert r.probability == 1 and np.all(r.final_distances == 0) and np.all(r.mean_distance == 0)


def test_ensemble_identical_across_workers():
    c = cfg()
    a = run_ensemble(c, workers=1)
    b = run_ensemble(c, workers=3)
    assert a == b
    assert [t.to_csv() for t in a.trajectories] == [t.to_csv() for t in b.trajectories]


def test_ensemble_independent_of_batch_size():
    a = run_ensemble(cfg())
    b = run_ensemble(cfg(batch_size=50))
    assert np.array_equal(a.final_distances, b.final_distances)


def test_ensemble_statistics():
    r = run_ensemble(cfg(T=6, trajectories=30))
    lo, hi = r.interval
    assert 0 <= lo <= r.probability <= hi <= 1
    assert r.probability_at(r.times[-1]) == r.probability
    assert r.tail_max.shape == (30,)
    assert np.all(r.tail_max >= r.final_distances)


def test_wilson_interval_values():
    lo, hi = wilson_interval(180, 200)
    assert lo < 0.9 < hi
    assert np.isclose(lo, 0.8506, atol=1e-3) and np.isclose(hi, 0.9343, atol=1e-3)
    assert wilson_interval(0, 0) == (0.0, 1.0)


def test_tail_window():
    t = np.linspace(0, 10, 11)
    d = np.array([[1, 1, 1, 1, 1, 0.2, 0.5, 0.1, 0, 0, 0.3]])
    assert tail_window_max(t, d, 10.0)[0] == 0.5


def test_ensemble_failure_threshold():
    c = cfg(dt=0.5, T=20.0, controller={"law": "constant", "value": 50.0}, sample_every=1)
    with pytest.raises(EnsembleFailure):
        run_ensemble(c)


def test_probability_non_decreasing_in_horizon():
    probs = [run_ensemble(cfg(T=T, trajectories=40, batch_size=40), keep_states=False).probability for T in (1, 3, 8)]
    assert probs[0] <= probs[1] <= probs[2]


# results


def test_results_round_trip(tmp_path):
    r = run_ensemble(cfg())
    export_results(r, tmp_path / "e.json", "json")
    export_results(r, tmp_path / "t.csv", "csv")
    assert load_results(tmp_path / "e.json") == r
    trs = load_trajectories(tmp_path / "t.csv")
    assert len(trs) == 12
    for a, b in zip(trs, r.trajectories):
        assert np.array_equal(a.states, b.states) and np.array_equal(a.record, b.record)
    with pytest.raises(ValueError):
        export_results(r, tmp_path / "x", "parquet")
    assert (tmp_path / "t.csv").read_text().startswith("trajectory,t,u,D,Y,rho_11_re")


def test_write_curves(tmp_path):
    (p,) = write_curves(tmp_path, {"c": (np.array([0.0, 1.0]), {"y": np.array([2.0, 3.0])})})
    assert p.read_text() == "x,y\n0.0,2.0\n1.0,3.0\n"


# comparisons and floors


def test_floors():
    assert np.isclose(entropy_floor(DensityMatrix.maximally_mixed(2)), 0.5)
    assert np.isclose(purity_floor(DensityMatrix.maximally_mixed(2)), 1 - np.sqrt(0.5))
    assert entropy_floor(DensityMatrix.eigenstate(1, 3)) == pytest.approx(0, abs=1e-14)


def test_compare_modes_small():
    rep = compare_modes(cfg(T=8, trajectories=20, batch_size=20), min_probability=0.5)
    assert rep["verdict"] == "PASS"
    assert np.isclose(rep["unitary_olc"]["final_entropy"], np.log(2))
    assert rep["master_eq_olc"]["final_distance"] >= rep["master_eq_olc"]["distance_floor"]
    assert rep["checks"]["master_eq_purity_monotone"]
    assert len(rep["curves"]["times"]) == len(rep["curves"]["unitary_distance"])


def test_gamma_scan_small():
    rows = gamma_scan(cfg(T=3, trajectories=10, batch_size=10), [0.05, 0.5, 0.95])
    assert [r["gamma"] for r in rows] == [0.05, 0.5, 0.95]
    for r in rows:
        assert r["wilson_low"] <= r["probability"] <= r["wilson_high"]
    with pytest.raises(ValueError):
        gamma_scan(cfg(), [1.0])


# verification suites


def test_verify_t2_t3_small():
    c = cfg(T=5)
    v2 = verify_theorem(c, "T2")
    assert v2.passed and v2.margins["max_entropy_drift"] <= 1e-6
    v3 = verify_theorem(c, "T3")
    assert v3.passed and v3.margins["max_purity_increase_per_step"] <= 1e-8


def test_verify_generator_small():
    from mfcsim.harness.verify import verify_generator

    v = verify_generator(cfg(), "Eq27", draws=200, configurations=2, samples=20_000)
    assert v.passed and v.margins["eq27_max_residual"] <= 1e-10


def test_verify_t4_t5_small():
    c = cfg(SIGMAX)
    v4 = verify_theorem(c, "T4")
    assert v4.passed and v4.margins["min_tail_max"] >= v4.margins["delta_d"]
    v5 = verify_theorem(c, "T5")
    assert v5.passed
    assert np.isclose(v5.margins["capital_delta_d"], v5.margins["capital_delta_d_off_diagonal_route"])
    assert any("evidence, not proof" in n for n in v5.notes)


def test_verify_mean_small():
    c = cfg(controller={"law": "constant", "value": 0.3}, T=1, trajectories=300, batch_size=100)
    assert verify_theorem(c, "mean").passed


def test_verify_hypothesis_mismatch():
    with pytest.raises(HypothesisMismatch):
        verify_theorem(cfg(), "T5")
    with pytest.raises(HypothesisMismatch):
        verify_theorem(cfg(SIGMAX), "T3")
    with pytest.raises(HypothesisMismatch):
        verify_theorem(cfg(initial_state={"eigenstate": 1}), "T2")
    with pytest.raises(HypothesisMismatch):
        verify_theorem(cfg(), "mean")
    with pytest.raises(ValueError):
        verify_theorem(cfg(), "T9")
