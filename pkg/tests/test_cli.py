import csv
import json

import numpy as np
import pytest

from fnpcast.cli import RunConfig, main
from fnpcast.data import load_model, save_model
from fnpcast.exceptions import ContractError
from fnpcast.model import FittedModel, Hyperparams, zero_params

TINY = {"max_epochs": 4, "hidden_size": 4, "n_samples": 40,
        "train_seasons": ["2003/04", "2004/05", "2005/06"]}


@pytest.fixture
def workspace(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "wili.csv"), "--n-seasons", "4"]) == 0
    (tmp_path / "cfg.json").write_text(json.dumps(TINY))
    return tmp_path


def _train(ws, out="run"):
    return main(["train", "--config", str(ws / "cfg.json"), "--data", str(ws / "wili.csv"),
                 "--out", str(ws / out)])


def test_synth_layout(workspace):
    with open(workspace / "wili.csv") as fh:
        rows = list(csv.DictReader(fh))
    assert len(rows) == 4 * 52 and rows[0]["year"] == "2003" and rows[0]["week"] == "21"


def test_train_outputs_and_determinism(workspace):
    assert _train(workspace, "a") == 0 and _train(workspace, "b") == 0
    assert (workspace / "a" / "model.bin").read_bytes() == (workspace / "b" / "model.bin").read_bytes()
    with open(workspace / "a" / "train_log.csv") as fh:
        log = list(csv.DictReader(fh))
    assert len(log) == 4 and set(log[0]) == {"epoch", "train_loss", "val_loss", "train_rmse"}
    _, meta = load_model(workspace / "a" / "model.bin")
    assert meta["training_seasons"] == TINY["train_seasons"] and meta["region"] == "nat"


def test_missing_data_leaves_no_outputs(workspace, capsys):
    rc = main(["train", "--config", str(workspace / "cfg.json"), "--data", str(workspace / "none.csv"),
               "--out", str(workspace / "x")])
    assert rc == 2 and not (workspace / "x").exists()
    assert "not found" in capsys.readouterr().err


def test_bad_config(workspace):
    (workspace / "bad.json").write_text(json.dumps({"max_epoch": 3}))
    assert main(["train", "--config", str(workspace / "bad.json"), "--data", str(workspace / "wili.csv"),
                 "--out", str(workspace / "y")]) == 2
    (workspace / "bad2.json").write_text(json.dumps({"learning_rate": "fast"}))
    assert main(["train", "--config", str(workspace / "bad2.json"), "--out", str(workspace / "y")]) == 2
    with pytest.raises(ContractError):
        RunConfig.from_dict({"horizons": [0]})


def test_usage_errors_exit_2(capsys):
    with pytest.raises(SystemExit) as info:
        main(["forecast"])
    assert info.value.code == 2


def test_forecast_zero_weight_checkpoint(workspace):
    model = FittedModel(zero_params(4), Hyperparams(hidden_size=4, n_samples=2000), [np.ones(52)], ["r"])
    save_model(workspace / "zero.bin", model, {"training_seasons": [], "region": "nat"})
    out = workspace / "f.json"
    rc = main(["forecast", "--checkpoint", str(workspace / "zero.bin"), "--data", str(workspace / "wili.csv"),
               "--season", "2006/07", "--week", "45", "--out", str(out), "--draws", str(workspace / "d.csv")])
    assert rc == 0
    doc = json.loads(out.read_text())
    assert doc["schema_version"] == 1 and doc["point"] == 0.0 and doc["as_of"] == "2006w45"
    lo, hi = doc["intervals"]["0.95"]
    assert abs(lo + 1.96) < 0.05 and abs(hi - 1.96) < 0.05
    assert set(doc["intervals"]) == {"0.5", "0.8", "0.9", "0.95"}
    draws = np.loadtxt(workspace / "d.csv", skiprows=1)
    assert draws.size == 20000


def test_forecast_ar_matches_direct_at_k1(workspace):
    assert _train(workspace) == 0
    common = ["forecast", "--checkpoint", str(workspace / "run" / "model.bin"),
              "--data", str(workspace / "wili.csv"), "--season", "2006/07", "--week", "30", "--seed", "5"]
    assert main(common + ["--out", str(workspace / "d.json"), "--components"]) == 0
    assert main(common + ["--ar", "--k", "1", "--out", str(workspace / "a.json"), "--components"]) == 0
    direct = json.loads((workspace / "d.json").read_text())
    ar = json.loads((workspace / "a.json").read_text())
    assert ar["mode"] == "autoregressive" and direct["mode"] == "direct"
    # config n_samples=40 components; the rollout keeps ar_candidates of them
    assert len(ar["components"]["means"]) == 1000
    assert main(common + ["--ar", "--k", "3", "--out", str(workspace / "a3.json")]) == 0
    assert json.loads((workspace / "a3.json").read_text())["k"] == 3


def test_forecast_bad_week_and_k(workspace):
    assert _train(workspace) == 0
    common = ["forecast", "--checkpoint", str(workspace / "run" / "model.bin"),
              "--data", str(workspace / "wili.csv"), "--season", "2006/07"]
    assert main(common + ["--week", "60"]) == 2
    assert main(common + ["--week", "30", "--k", "2"]) == 2
    assert main(common[:-1] + ["1999/00", "--week", "30"]) == 2


def test_evaluate_outputs(workspace):
    assert _train(workspace) == 0
    out = workspace / "ev"
    rc = main(["evaluate", "--checkpoint", str(workspace / "run" / "model.bin"), "--data",
               str(workspace / "wili.csv"), "--test-seasons", "2006/07", "--k", "1", "2", "--out", str(out)])
    assert rc == 0
    with open(out / "metrics.csv") as fh:
        reader = csv.DictReader(fh)
        rows = list(reader)
    assert reader.fieldnames == ["horizon", "rmse", "mape", "ls", "cs"] and len(rows) == 2
    with open(out / "calibration_k2.csv") as fh:
        cal = list(csv.reader(fh))
    assert cal[0] == ["c", "k"] and len(cal) == 102
    summary = json.loads((out / "summary.json").read_text())
    assert summary["horizons"]["1"]["n_records"] == 33


def test_evaluate_errors(workspace, capsys):
    assert _train(workspace) == 0
    base = ["evaluate", "--checkpoint", str(workspace / "run" / "model.bin"), "--data",
            str(workspace / "wili.csv"), "--out", str(workspace / "ev")]
    assert main(base + ["--test-seasons", "2004/05", "--k", "1"]) == 2
    assert "2004/05" in capsys.readouterr().err
    assert main(base + ["--test-seasons", "2006/07", "--k"]) == 2


def test_evaluate_flags_over_dispersion(tmp_path):
    weeks = [(2010, w) for w in range(21, 53)] + [(2011, w) for w in range(1, 21)]
    with open(tmp_path / "flat.csv", "w") as fh:
        fh.write("region,year,week,wili\n" + "".join(f"nat,{y},{w},1.0\n" for y, w in weeks))
    params = zero_params(3)
    params["d1.1.b"] = np.array([1.0])
    params["d2.1.b"] = np.array([2 * np.log(150.0)])
    model = FittedModel(params, Hyperparams(hidden_size=3, n_samples=200), [np.ones(52)], ["r"])
    save_model(tmp_path / "wide.bin", model, {"training_seasons": [], "region": "nat"})
    rc = main(["evaluate", "--checkpoint", str(tmp_path / "wide.bin"), "--data", str(tmp_path / "flat.csv"),
               "--test-seasons", "2010/11", "--k", "1", "--out", str(tmp_path / "ev")])
    assert rc == 0
    h = json.loads((tmp_path / "ev" / "summary.json").read_text())["horizons"]["1"]
    assert h["over_dispersed"] and h["cs"] > 0.45


def test_divergence_exit_3(tmp_path):
    weeks = [(2010, w) for w in range(21, 53)] + [(2011, w) for w in range(1, 21)]
    with open(tmp_path / "huge.csv", "w") as fh:
        fh.write("region,year,week,wili\n" + "".join(f"nat,{y},{w},1e200\n" for y, w in weeks))
    (tmp_path / "cfg.json").write_text(json.dumps({"max_epochs": 2, "hidden_size": 3}))
    with np.errstate(over="ignore"):
        rc = main(["train", "--config", str(tmp_path / "cfg.json"), "--data", str(tmp_path / "huge.csv"),
                   "--out", str(tmp_path / "r")])
    assert rc == 3 and not (tmp_path / "r").exists()
