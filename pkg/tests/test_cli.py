import csv
import json
import math
import time

import numpy as np
import pytest

from ornn import io as oio
from ornn.cli import DEFAULTS, load_config, main
from ornn.errors import ConfigError
from ornn.wave1d import constant_profile

SMALL = {"grid": {"T": 1.0, "nt": 256}, "basis": {"kind": "box", "n": 16}, "data": {"samples": 4, "Ks": 8}}


def write_cfg(path, **blocks):
    cfg = json.loads(json.dumps(SMALL))
    for k, v in blocks.items():
        cfg[k] = {**cfg.get(k, {}), **v} if isinstance(v, dict) else v
    path.write_text(json.dumps(cfg))
    return str(path)


def run(cmd, cfg, out, *extra):
    return main([cmd, "--config", cfg, "--out", str(out), "--seed", "5", *extra])


@pytest.fixture(scope="module")
def dataset(tmp_path_factory):
    root = tmp_path_factory.mktemp("data")
    cfg = write_cfg(root / "cfg.json")
    assert run("datagen", cfg, root / "d") == 0
    return root / "d"


# -- configuration ---------------------------------------------------------------

def test_unknown_key_rejected(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "c.json", grid={"T": 1.0, "nt": 256, "dx": 0.1})
    assert run("bounds", cfg, tmp_path / "o") == 2
    assert "dx" in capsys.readouterr().err


def test_wrong_type_rejected(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", bounds={"L": "one"})
    assert run("bounds", cfg, tmp_path / "o") == 2


def test_flags_override_config(tmp_path):
    cfg = load_config(write_cfg(tmp_path / "c.json", seed=3), seed=8, out="elsewhere")
    assert cfg["seed"] == 8 and cfg["out"] == "elsewhere" and cfg["grid"]["nt"] == 256
    assert DEFAULTS["grid"]["nt"] == 1024


def test_bad_json(tmp_path):
    p = tmp_path / "c.json"
    p.write_text("{not json")
    assert run("bounds", str(p), tmp_path / "o") == 2
    with pytest.raises(ConfigError):
        load_config(write_cfg(tmp_path / "d.json", version=99))


# -- datagen -------------------------------------------------------------------------

def test_datagen_outputs(dataset):
    m = json.loads((dataset / "dataset.json").read_text())
    lams = oio.read_opmat_all(dataset / m["lambdas"])
    targets = oio.read_opmat(dataset / m["targets"])
    assert len(lams) == 4 and lams[0].shape == (16, 16) and targets.shape == (4, 16)
    assert np.all(targets[:, 8:] == 0) and np.all(targets[:, :8] > 0)
    assert m["lambda_norms"] == pytest.approx([np.linalg.norm(a, 2) for a in lams], rel=1e-15)


def test_datagen_identity_medium(tmp_path):
    cfg = write_cfg(tmp_path / "c.json", prior={"amplitude": 0.0}, data={"samples": 1, "Ks": 8})
    assert run("datagen", cfg, tmp_path / "d") == 0
    lam = oio.read_opmat_all(tmp_path / "d" / "lambdas.opmat")[0]
    assert np.linalg.norm(lam + np.eye(16), 2) <= 0.05
    assert np.all(oio.read_opmat(tmp_path / "d" / "targets.opmat")[0, :8] == 1.0)


def test_datagen_desk_scale_time(tmp_path):
    cfg = tmp_path / "c.json"
    cfg.write_text(json.dumps({"version": 1}))
    t0 = time.time()
    assert run("datagen", str(cfg), tmp_path / "d") == 0
    assert time.time() - t0 <= 60


# -- train ------------------------------------------------------------------------------

def _train_cfg(tmp_path, dataset, **train):
    return write_cfg(tmp_path / "t.json", train={"dataset": str(dataset / "dataset.json"), **train})


def test_train_history_and_metrics(tmp_path, dataset):
    cfg = _train_cfg(tmp_path, dataset, max_iters=12)
    assert run("train", cfg, tmp_path / "t") == 0
    metrics = json.loads((tmp_path / "t" / "metrics.json").read_text())
    rows = list(csv.reader(open(tmp_path / "t" / "history.csv")))
    assert len(rows) - 1 == metrics["iterations"] <= 12
    assert metrics["train_size"] == 3 and metrics["test_size"] == 1
    assert metrics["gap_estimate"] is not None


def test_train_full_shrinkage(tmp_path, dataset):
    cfg = _train_cfg(tmp_path, dataset, alpha=1.0, max_iters=400, step=0.5)
    assert run("train", cfg, tmp_path / "t") == 0
    assert json.loads((tmp_path / "t" / "metrics.json").read_text())["N1"] == 0


def test_train_resume(tmp_path, dataset):
    full = _train_cfg(tmp_path, dataset, max_iters=6)
    assert run("train", full, tmp_path / "full") == 0
    part = _train_cfg(tmp_path, dataset, max_iters=5)
    assert run("train", part, tmp_path / "part") == 0
    rest = _train_cfg(tmp_path, dataset, max_iters=1, resume=str(tmp_path / "part" / "params.json"))
    assert run("train", rest, tmp_path / "rest") == 0
    a = list(csv.reader(open(tmp_path / "full" / "history.csv")))[-1]
    b = list(csv.reader(open(tmp_path / "rest" / "history.csv")))[-1]
    assert abs(float(a[4]) - float(b[4])) <= 1e-12


def test_train_missing_dataset(tmp_path):
    cfg = write_cfg(tmp_path / "t.json", train={"dataset": str(tmp_path / "nope.json")})
    assert run("train", cfg, tmp_path / "t") == 2


# -- reconstruct ----------------------------------------------------------------------------

def test_reconstruct_missing_lambda(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "r.json", bc={"lambda": str(tmp_path / "missing.opmat")})
    assert run("reconstruct", cfg, tmp_path / "r") == 2
    assert "missing.opmat" in capsys.readouterr().err
    assert run("reconstruct", write_cfg(tmp_path / "r2.json"), tmp_path / "r") == 2


def test_reconstruct_identity_medium(tmp_path):
    prof = constant_profile(1.0, 1.0).save(tmp_path, "flat")
    cfg = tmp_path / "r.json"
    cfg.write_text(json.dumps({"version": 1, "bc": {"profile": str(prof)}}))
    assert run("reconstruct", str(cfg), tmp_path / "r") == 0
    summary = json.loads((tmp_path / "r" / "reconstruction.json").read_text())
    assert summary["rel_err_linf"] <= 0.10


def test_reconstruct_compare_net(tmp_path, dataset):
    assert run("train", _train_cfg(tmp_path, dataset, max_iters=3), tmp_path / "t") == 0
    cfg = write_cfg(tmp_path / "r.json", bc={"lambda": str(dataset / "lambdas.opmat"), "Ks": 8, "iters": 50})
    assert run("reconstruct", cfg, tmp_path / "r", "--compare-net", str(tmp_path / "t" / "params.json")) == 0
    rows = list(csv.reader(open(tmp_path / "r" / "reconstruction.csv")))
    assert rows[0][-1] == "net_v" and len(rows) == 9 and all(r[-1] for r in rows[1:])


# -- bounds, unroll, eval -------------------------------------------------------------------------

def test_bounds_c2(tmp_path):
    cfg = write_cfg(tmp_path / "b.json", bounds={"covering": {"R0": 1.0, "N0": 3, "n": 2, "M0": 10.0, "rho": 0.5}})
    assert run("bounds", cfg, tmp_path / "b") == 0
    res = json.loads((tmp_path / "b" / "bounds.json").read_text())
    assert res["C2"] == pytest.approx(64 * math.e ** 4, rel=1e-15)
    assert res["covering"]["log10_count"] == pytest.approx(8.2247, abs=1e-4)
    again = json.loads(json.dumps(res))
    assert again == res


def test_bounds_case_ii_error(tmp_path, capsys):
    cfg = write_cfg(tmp_path / "b.json", bounds={"flavor": "ii", "alpha": 0.01, "R0": 2.0, "eps0": 1.0})
    assert run("bounds", cfg, tmp_path / "b") == 2
    assert "alpha >= eps0^2 / R0" in capsys.readouterr().err


def test_unroll_and_eval(tmp_path, dataset):
    cfg = write_cfg(tmp_path / "u.json", bc={"lambda": str(dataset / "lambdas.opmat"), "iters": 5},
                    eval={"checkpoint": str(tmp_path / "u" / "unrolled.json"),
                          "lambdas": str(dataset / "lambdas.opmat")})
    assert run("unroll", cfg, tmp_path / "u") == 0
    summary = json.loads((tmp_path / "u" / "unroll.json").read_text())
    assert summary["layers"] == 20 and summary["max_dev_vs_ista"] <= 1e-10
    assert summary["R"] <= summary["R_bound"] * (1 + 1e-6)
    assert run("eval", cfg, tmp_path / "e") == 0
    outs = oio.read_opmat(tmp_path / "e" / "outputs.opmat")
    assert outs.shape == (4, 16)
    assert json.loads((tmp_path / "e" / "eval.json").read_text())["samples"] == 4
