import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from recgp import cli
from recgp.config import DEFAULTS, ExperimentConfig, load_config
from recgp.errors import ConfigError

SMALL = {
    "seed": 3,
    "scenario": {"m": [6]},
    "sizes": {"n_train": 25, "n_test": 5, "trials": 2, "n_pca": 40},
    "gp": {"restarts": 1, "max_iters": 60},
    "channel": {"sigma_sh_sq": [1.0, 3.0]},
}


@pytest.fixture
def config_file(tmp_path):
    path = tmp_path / "small.yaml"
    path.write_text(yaml.safe_dump(SMALL))
    return path


def run(args):
    return cli.main([str(a) for a in args])


def read_csv(path):
    lines = Path(path).read_text().splitlines()
    assert lines[0].startswith("# recgp schema_version=1 seed=")
    return lines[1], [ln.split(",") for ln in lines[2:]]


def test_defaults_validate():
    cfg = ExperimentConfig.from_dict({})
    assert cfg.m_values == (30,) and cfg.n_train == 100 and cfg.trials == 20
    assert cfg.noise_grid == (1.0, 2.0, 3.0, 4.0, 5.0)
    assert cfg.path_loss.mode == "literal"


@pytest.mark.parametrize("doc, key", [
    ({"sizes": {"trials": 0}}, "sizes.trials"),
    ({"sizes": {"bogus": 1}}, "sizes.bogus"),
    ({"channel": {"sigma_sh_sq": []}}, "channel.sigma_sh_sq"),
    ({"channel": {"sigma_sh_sq": [1, -2]}}, "channel.sigma_sh_sq[1]"),
    ({"l_policy": {"kind": "fixed", "l": 99}}, "l_policy.l"),
    ({"l_policy": {"kind": "nope"}}, "l_policy.kind"),
    ({"scenario": {"m": [30, 0]}}, "scenario.m[1]"),
    ({"seed": -1}, "seed"),
])
def test_invalid_config_names_key(doc, key):
    with pytest.raises(ConfigError) as err:
        ExperimentConfig.from_dict(doc)
    assert err.value.key == key


def test_overrides_and_paper_scale(config_file):
    cfg = load_config(config_file, [("sizes.trials", 7)], paper_scale=False)
    assert cfg.trials == 7 and cfg.n_train == 25
    cfg = load_config(config_file, paper_scale=True)
    assert cfg.m_values == (30, 60) and cfg.n_train == 400 and cfg.trials == 200
    assert cfg.n_pca == 1000


def test_shipped_configs_validate():
    root = Path(__file__).resolve().parents[1] / "configs"
    desk = load_config(root / "desk.yaml")
    paper = load_config(root / "paper.yaml")
    assert desk.trials == 20 and desk.n_train == 100 and desk.n_pca == 200
    assert paper.trials == 200 and paper.n_train == 400 and paper.n_pca == 1000


def test_config_error_exit_code(tmp_path, config_file):
    assert run(["rmse-sweep", "--config", config_file, "--set", "sizes.trials=0",
                "--out", tmp_path]) == cli.EXIT_CONFIG
    assert run(["rmse-sweep", "--config", tmp_path / "missing.yaml"]) == cli.EXIT_IO


def test_pca_analysis(tmp_path, config_file):
    out = tmp_path / "pca"
    assert run(["pca-analysis", "--config", config_file, "--out", out]) == 0
    header, rows = read_csv(out / "pca_singular_values_M6.csv")
    assert header == "l,sigma_l,max_dev" and len(rows) == 6
    header, rows = read_csv(out / "pca_truncation_error_M6.csv")
    assert header == "l,abs_error,abs_max_dev,fraction,fraction_max_dev"
    meta = json.loads((out / "pca_analysis_meta.json").read_text())
    assert meta["seed"] == 3 and meta["schema_version"] == 1
    assert meta["power_unit"] == "dBm"
    assert len(meta["l_at_energy_threshold"]["6"]) == 2


def test_pca_single_trial_has_zero_deviation(tmp_path, config_file):
    out = tmp_path / "pca1"
    assert run(["pca-analysis", "--config", config_file, "--out", out, "--set", "sizes.trials=1"]) == 0
    _, rows = read_csv(out / "pca_singular_values_M6.csv")
    assert all(float(r[2]) == 0.0 for r in rows)


def test_rmse_sweep(tmp_path, config_file):
    out = tmp_path / "rmse"
    assert run(["rmse-sweep", "--config", config_file, "--out", out]) == 0
    header, rows = read_csv(out / "rmse_sweep_M6.csv")
    assert header == "sigma_sh_sq,method,mean_rmse,max_dev"
    assert len(rows) == 4
    meta = json.loads((out / "rmse_sweep_meta.json").read_text())
    assert set(meta["selected_l"]["6"]) == {"1.0", "3.0"}
    assert "wall_clock_s" not in meta
    lines = (out / "eval_results.jsonl").read_text().splitlines()
    assert len(lines) == 2 * 2 * 2


def test_l_sweep_includes_sgp_equivalent_row(tmp_path, config_file):
    out = tmp_path / "lsweep"
    assert run(["l-sweep", "--config", config_file, "--out", out]) == 0
    header, rows = read_csv(out / "l_sweep_M6.csv")
    assert header == "l,sigma_sh_sq,mean_rmse"
    assert len(rows) == 12
    out2 = tmp_path / "rmse"
    run(["rmse-sweep", "--config", config_file, "--out", out2, "--set", "l_policy.kind=fixed",
         "--set", "l_policy.l=6"])
    _, srows = read_csv(out2 / "rmse_sweep_M6.csv")
    sgp = {float(r[0]): float(r[2]) for r in srows if r[1] == "sgp"}
    full = {float(r[1]): float(r[2]) for r in rows if r[0] == "6"}
    for s2, v in full.items():
        assert v == pytest.approx(sgp[s2], abs=1e-8)


def test_train_and_localize(tmp_path, config_file):
    out = tmp_path / "model"
    assert run(["train", "--config", config_file, "--out", out, "--method", "recgp", "--l", "6"]) == 0
    model = out / "model_M6_recgp.json"
    assert model.exists()
    assert run(["localize", "--config", config_file, "--out", out, "--model", model,
                "--rss", out / "train_rss_M6.csv"]) == 0
    header, rows = read_csv(out / "predictions.csv")
    assert header == "mean_x,mean_y,var_x,var_y,lo_x,hi_x,lo_y,hi_y"
    pred = np.array(rows, dtype=float)
    _, truth = read_csv(out / "train_users_M6.csv")
    truth = np.array(truth, dtype=float)
    # a briefly trained model still sits close to its own training locations
    assert np.max(np.hypot(pred[:, 0] - truth[:, 0], pred[:, 1] - truth[:, 1])) < 10.0
    assert np.allclose(pred[:, 4], pred[:, 0] - 2 * np.sqrt(pred[:, 2]))
    assert np.allclose(pred[:, 7], pred[:, 1] + 2 * np.sqrt(pred[:, 3]))


def test_localize_errors(tmp_path, config_file):
    out = tmp_path / "m"
    run(["train", "--config", config_file, "--out", out, "--method", "sgp"])
    model = out / "model_M6_sgp.json"
    bad = tmp_path / "bad.csv"
    bad.write_text("antenna_0,antenna_1\n-50.0,-60.0\n")
    code = run(["localize", "--config", config_file, "--out", out, "--model", model, "--rss", bad])
    assert code not in (0, cli.EXIT_CONFIG)
    assert run(["localize", "--config", config_file, "--out", out, "--model", tmp_path / "nope.json",
                "--rss", bad]) == cli.EXIT_IO
    corrupt = tmp_path / "corrupt.json"
    corrupt.write_text("{not json")
    assert run(["localize", "--config", config_file, "--out", out, "--model", corrupt,
                "--rss", bad]) == cli.EXIT_IO


def test_gen_scenario(tmp_path, config_file):
    out = tmp_path / "scn"
    assert run(["gen-scenario", "--config", config_file, "--out", out]) == 0
    doc = json.loads((out / "scenario_M6.json").read_text())
    assert doc["seed"] == 3 and len(doc["antennas"]) == 6
    header, rows = read_csv(out / "test_rss_M6.csv")
    assert header == ",".join(f"antenna_{j}" for j in range(6)) and len(rows) == 5


def test_timing_flag_records_wall_clock(tmp_path, config_file):
    out = tmp_path / "t"
    assert run(["gen-scenario", "--config", config_file, "--out", out, "--timing"]) == 0
    assert "wall_clock_s" in json.loads((out / "gen_scenario_meta.json").read_text())


def test_seed_flag_overrides_file(tmp_path, config_file):
    out = tmp_path / "s"
    assert run(["gen-scenario", "--config", config_file, "--out", out, "--seed", "77"]) == 0
    assert json.loads((out / "gen_scenario_meta.json").read_text())["config"]["seed"] == 77
