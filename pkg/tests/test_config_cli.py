import json

import numpy as np
import pytest

from nsdmd.cli import main
from nsdmd.config import ConfigError, ExperimentConfig, load_config, save_config
from nsdmd.dictionary import coordinates
from nsdmd.edmd import TransferModel, load_model, save_model


BASE_CFG = {
    "system": {
        "name": "two_well",
        "domain": [[-2.0, 2.0], [-3.0, 3.0]],
        "n_init": 12,
        "horizon": 2.0,
        "dt": 0.1,
        "seed": 0,
    },
    "dictionary": {"kind": "gaussian_rbf", "size": 12, "sigma": 0.9, "ridge": 1e-6},
    "output": {"grid_points": 9},
    "ulam": {"divisions": 4},
}


def write_cfg(path, payload=None):
    path.write_text(json.dumps(payload if payload is not None else BASE_CFG))
    return path


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def test_minimal_config_materializes_all_defaults():
    cfg = ExperimentConfig.parse({"system": dict(BASE_CFG["system"])})
    assert cfg.dictionary.kind == "gaussian_rbf"
    assert cfg.dictionary.size == 100
    assert cfg.fit.method == "nsdmd_case3"
    assert cfg.fit.max_iter == 50_000
    assert cfg.output.grid_points == 32
    assert cfg.ulam.divisions == 32
    assert cfg.lyapunov.threshold_fraction == 0.1
    d = cfg.to_dict()
    assert set(d) == {"system", "dictionary", "fit", "output", "ulam", "lyapunov"}


def test_unknown_top_level_block_rejected():
    with pytest.raises(ConfigError, match="unknown top-level"):
        ExperimentConfig.parse({"system": dict(BASE_CFG["system"]), "extra": {}})


def test_unknown_key_in_block_rejected():
    bad = dict(BASE_CFG["system"], typo=1)
    with pytest.raises(ConfigError, match="unknown keys.*typo"):
        ExperimentConfig.parse({"system": bad})


def test_missing_required_keys_rejected():
    with pytest.raises(ConfigError, match="missing required block 'system'"):
        ExperimentConfig.parse({})
    incomplete = {k: v for k, v in BASE_CFG["system"].items() if k != "domain"}
    with pytest.raises(ConfigError, match="missing required key 'domain'"):
        ExperimentConfig.parse({"system": incomplete})


def test_type_and_choice_validation():
    with pytest.raises(ConfigError, match="expected an integer"):
        ExperimentConfig.parse({"system": dict(BASE_CFG["system"], n_init=2.5)})
    with pytest.raises(ConfigError, match="expected a number"):
        ExperimentConfig.parse({"system": dict(BASE_CFG["system"], horizon=True)})
    with pytest.raises(ConfigError, match="expected one of"):
        ExperimentConfig.parse({"system": dict(BASE_CFG["system"], name="pendulum")})
    with pytest.raises(ConfigError, match="expected one of"):
        ExperimentConfig.parse({"system": dict(BASE_CFG["system"]),
                                "fit": {"method": "ridge_regression"}})


def test_domain_validation():
    with pytest.raises(ConfigError, match="lo < hi"):
        ExperimentConfig.parse({"system": dict(BASE_CFG["system"], domain=[[1.0, -1.0]])})
    with pytest.raises(ConfigError, match=r"\[\[lo, hi\]"):
        ExperimentConfig.parse({"system": dict(BASE_CFG["system"], domain="grid")})


def test_dt_required_for_flows_not_maps():
    flow = dict(BASE_CFG["system"])
    flow.pop("dt")
    with pytest.raises(ConfigError, match="dt must be positive"):
        ExperimentConfig.parse({"system": flow})
    henon = {"name": "henon", "domain": [[-1.5, 1.5], [-0.4, 0.4]],
             "n_init": 2, "horizon": 50}
    cfg = ExperimentConfig.parse({"system": henon})
    assert cfg.system.dt == 0.0


def test_config_round_trip(tmp_path):
    cfg = ExperimentConfig.parse(json.loads(json.dumps(BASE_CFG)))
    path = save_config(cfg, tmp_path / "cfg.json")
    back = load_config(path)
    assert back.to_dict() == cfg.to_dict()


def test_load_config_errors(tmp_path):
    with pytest.raises(ConfigError, match="not found"):
        load_config(tmp_path / "nope.json")
    bad = tmp_path / "bad.json"
    bad.write_text("{not json")
    with pytest.raises(ConfigError, match="invalid JSON"):
        load_config(bad)


# ---------------------------------------------------------------------------
# CLI: simulate
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def sim_root(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    cfg_path = write_cfg(root / "config.json")
    assert main(["--config", str(cfg_path), "--out-dir", str(root), "simulate"]) == 0
    return root, cfg_path


def test_simulate_writes_snapshots_and_resolved_config(sim_root):
    root, _ = sim_root
    assert (root / "snapshots.csv").exists()
    resolved = json.loads((root / "config.resolved.json").read_text())
    # Defaults are materialized in the persisted copy.
    assert resolved["fit"]["method"] == "nsdmd_case3"
    assert resolved["system"]["seed"] == 0


def test_simulate_rerun_is_byte_identical(sim_root, tmp_path):
    root, cfg_path = sim_root
    assert main(["--config", str(cfg_path), "--out-dir", str(tmp_path), "simulate"]) == 0
    assert (tmp_path / "snapshots.csv").read_bytes() == (root / "snapshots.csv").read_bytes()


def test_simulate_seed_override_changes_data(sim_root, tmp_path):
    root, cfg_path = sim_root
    rc = main(["--config", str(cfg_path), "--seed", "5", "--out-dir", str(tmp_path), "simulate"])
    assert rc == 0
    assert (tmp_path / "snapshots.csv").read_bytes() != (root / "snapshots.csv").read_bytes()
    resolved = json.loads((tmp_path / "config.resolved.json").read_text())
    assert resolved["system"]["seed"] == 5


def test_missing_config_file_exits_2(tmp_path, capsys):
    rc = main(["--config", str(tmp_path / "ghost.json"), "--out-dir", str(tmp_path), "simulate"])
    assert rc == 2
    assert "not found" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# CLI: fit
# ---------------------------------------------------------------------------

def run_fit(sim_root, tmp_path, fit_block=None, dict_block=None):
    root, _ = sim_root
    payload = json.loads(json.dumps(BASE_CFG))
    if fit_block:
        payload["fit"] = fit_block
    if dict_block:
        payload["dictionary"] = dict_block
    cfg_path = write_cfg(tmp_path / "config.json", payload)
    rc = main([
        "--config", str(cfg_path), "--out-dir", str(tmp_path),
        "fit", "--snapshots", str(root / "snapshots.csv"),
    ])
    return rc, tmp_path / "model.json"


@pytest.mark.parametrize("method", ["dmd", "edmd", "nsdmd_case2"])
def test_fit_methods_write_models(sim_root, tmp_path, method, capsys):
    rc, model_path = run_fit(sim_root, tmp_path, fit_block={"method": method})
    assert rc == 0
    out = capsys.readouterr().out
    assert f"method={method}" in out
    model = load_model(model_path)
    assert model.method == method
    if method == "nsdmd_case2":
        assert np.abs(model.P.sum(axis=1) - 1.0).max() <= 1e-6


def test_fit_grid_centers_and_indicator_dictionaries(sim_root, tmp_path):
    rc, _ = run_fit(
        sim_root, tmp_path,
        fit_block={"method": "edmd"},
        dict_block={"kind": "gaussian_rbf", "size": 16, "sigma": 1.2,
                    "center_policy": "grid", "ridge": 1e-6},
    )
    assert rc == 0
    rc, model_path = run_fit(
        sim_root, tmp_path,
        fit_block={"method": "edmd"},
        dict_block={"kind": "indicator_boxes", "size": 16},
    )
    assert rc == 0
    assert load_model(model_path).K.shape == (16, 16)


def test_fit_iteration_cap_exits_3_but_saves_model(sim_root, tmp_path):
    rc, model_path = run_fit(sim_root, tmp_path,
                             fit_block={"method": "nsdmd_case2", "max_iter": 1})
    assert rc == 3
    model = load_model(model_path)
    assert model.converged is False


def test_fit_without_snapshots_exits_2(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path / "config.json")
    rc = main(["--config", str(cfg_path), "--out-dir", str(tmp_path), "fit"])
    assert rc == 2
    assert "snapshot file not found" in capsys.readouterr().err


# ---------------------------------------------------------------------------
# CLI: spectrum / lyapunov / ulam / compare
# ---------------------------------------------------------------------------

@pytest.fixture(scope="module")
def fitted_root(sim_root, tmp_path_factory):
    root, _ = sim_root
    out = tmp_path_factory.mktemp("fitted")
    payload = json.loads(json.dumps(BASE_CFG))
    payload["fit"] = {"method": "nsdmd_case2"}
    cfg_path = write_cfg(out / "config.json", payload)
    rc = main([
        "--config", str(cfg_path), "--out-dir", str(out),
        "fit", "--snapshots", str(root / "snapshots.csv"),
    ])
    assert rc == 0
    return out, cfg_path


def test_spectrum_writes_tables_and_grids(fitted_root, capsys):
    out, cfg_path = fitted_root
    rc = main([
        "--config", str(cfg_path), "--out-dir", str(out),
        "spectrum", "--which", "density", "--which", "koopman:1",
    ])
    assert rc == 0
    assert (out / "eigenvalues.csv").exists()
    assert (out / "grid_density.csv").exists()
    assert (out / "grid_koopman_1.csv").exists()
    assert (out / "grid_density.lattice.json").exists()
    header = (out / "eigenvalues.csv").read_text().splitlines()[0]
    assert header == "index,re,im,modulus,residual"


def test_spectrum_without_unit_eigenvalue_exits_4(tmp_path, capsys):
    decaying = TransferModel(
        K=np.array([[0.5]]), P=np.array([[0.5]]), Lambda=np.eye(1),
        dictionary=coordinates(1), objective=0.0, method="edmd",
    )
    model_path = save_model(decaying, tmp_path / "model.json")
    cfg_path = write_cfg(tmp_path / "config.json")
    rc = main([
        "--config", str(cfg_path), "--out-dir", str(tmp_path),
        "spectrum", "--model", str(model_path), "--which", "density",
    ])
    assert rc == 4
    assert "spectral error" in capsys.readouterr().err


def test_lyapunov_command_writes_certificate(fitted_root):
    out, cfg_path = fitted_root
    rc = main(["--config", str(cfg_path), "--out-dir", str(out), "lyapunov"])
    cert = json.loads((out / "lyapunov.json").read_text())
    assert rc == (0 if cert["converged"] else 3)
    assert cert["sub_spectral_radius"] >= 0.0
    assert len(cert["attractor_indices"]) >= 1


def test_ulam_and_compare_pipeline(fitted_root, capsys):
    out, cfg_path = fitted_root
    assert main(["--config", str(cfg_path), "--out-dir", str(out), "ulam"]) == 0
    assert (out / "ulam.csv").exists()
    assert (out / "ulam.partition.json").exists()
    assert main(["--config", str(cfg_path), "--out-dir", str(out), "compare"]) == 0
    report = json.loads((out / "compare.json").read_text())
    assert 0.0 <= report["l1_distance"] <= 2.0


def test_compare_missing_inputs_exits_2(tmp_path, capsys):
    cfg_path = write_cfg(tmp_path / "config.json")
    rc = main(["--config", str(cfg_path), "--out-dir", str(tmp_path), "compare"])
    assert rc == 2
