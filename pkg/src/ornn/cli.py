"""Command line driver: datagen, train, reconstruct, bounds, unroll, eval.

Every command reads one JSON config (``--config``), merges it over the
defaults below, rejects unknown keys and writes deterministic CSV/JSON/OPMAT1
files into ``--out``.  Exit codes: 0 success, 1 numerical failure,
2 I/O or configuration failure.
"""
import argparse
import copy
import csv
import json
import math
import sys
from pathlib import Path

import numpy as np

from . import io as _io
from .approx import depth_width
from .bc_method import (build_bc_operators, control_error, discretization_scales, ista_control,
                        reconstruct_speed, report_csv, rescale_lambda, travel_to_euclidean,
                        unroll_to_ornn, unrolled_regularizer_bound)
from .core import NetworkSpec, ParamSet, forward, forward_general, regularizer, sparsity_count
from .errors import (ConfigError, DimensionError, DomainError, EmptySetError, OrnnError, ParamIndexError)
from .training import (TrainConfig, TrainingSet, covering_size, data_fit, generalization_constants,
                       generalization_gap_estimate, save_run, sparsity_budget, train)
from .wave1d import TimeBasis, WaveGrid, WaveSpeedProfile, lambda_op, sample_prior, travel_time, true_volume

VERSION = 1

DEFAULTS = {
    "version": VERSION,
    "seed": 0,
    "out": "out",
    "threads": 1,
    "prior": {"C0": 0.7, "C1": 1.3, "I0": [0.2, 0.8], "M": 1e5, "amplitude": 0.3, "bumps": 2,
              "nx": 4001},
    "grid": {"T": 1.0, "nt": 1024},
    "basis": {"kind": "box", "n": 64},
    "data": {"samples": 32, "target": "speed", "Ks": 16, "rescale_margin": 0.0},
    "train": {"dataset": None, "alpha": 1e-2, "L": 2, "max_iters": 200, "step": 1e-2, "R0_cap": None,
              "L0": 1.0, "prox_every": 1, "holdout": 0.25, "init_scale": 0.05, "resume": None},
    "bc": {"lambda": None, "index": 0, "profile": None, "truth": None, "alpha": 1e-3, "iters": 200,
           "Ks": 16, "s": 0.5, "offset": True},
    "bounds": {"flavor": "i", "L": 1, "n": 1, "alpha": 1.0, "f_inf": 1.0, "L0": 1.0, "R0": None,
               "eps0": None, "delta": 0.1, "target": 0.05, "covering": None, "depth_width": None,
               "discretization": None},
    "eval": {"checkpoint": None, "lambdas": None},
}

NUMERICAL = 1
IO_CONFIG = 2


# -- configuration -------------------------------------------------------------

def _merge(base, over, path=""):
    out = copy.deepcopy(base)
    for k, v in over.items():
        where = path + k
        if k not in base:
            raise ConfigError("unknown config key %r" % where)
        d = base[k]
        if isinstance(d, dict):
            if not isinstance(v, dict):
                raise ConfigError("%r must be an object" % where)
            out[k] = _merge(d, v, where + ".")
        elif d is not None and v is not None and not _same_kind(d, v):
            raise ConfigError("%r has the wrong type (%s)" % (where, type(v).__name__))
        else:
            out[k] = v
    return out


def _same_kind(default, value):
    if isinstance(default, bool):
        return isinstance(value, bool)
    if isinstance(default, (int, float)):
        return isinstance(value, (int, float)) and not isinstance(value, bool)
    return isinstance(value, type(default))


def load_config(path=None, seed=None, out=None, threads=None):
    user = {}
    if path is not None:
        try:
            user = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError("config is not valid JSON: %s" % exc)
        if not isinstance(user, dict):
            raise ConfigError("config must be a JSON object")
        if user.get("version", VERSION) != VERSION:
            raise ConfigError("unsupported config version %r" % user.get("version"))
    cfg = _merge(DEFAULTS, user)
    for key, val in (("seed", seed), ("out", out), ("threads", threads)):
        if val is not None:
            cfg[key] = val
    if not isinstance(cfg["seed"], int) or cfg["seed"] < 0 or cfg["seed"] >= 2 ** 64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    if cfg["threads"] < 1:
        raise ConfigError("threads must be >= 1")
    return cfg


def _outdir(cfg):
    d = Path(cfg["out"])
    d.mkdir(parents=True, exist_ok=True)
    return d


def _require_file(path, what):
    if path is None:
        raise ConfigError("%s is not set" % what)
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError("%s not found: %s" % (what, p))
    return p


def _basis(cfg):
    return TimeBasis(cfg["grid"]["T"], cfg["basis"]["n"], cfg["basis"]["kind"])


def _grid(cfg):
    return WaveGrid(T=cfg["grid"]["T"], nt=cfg["grid"]["nt"])


def _s_grid(T, Ks):
    return np.arange(1, Ks + 1) * T / Ks


def _scaled(lam, margin):
    return rescale_lambda(lam, margin)[0]


# -- commands ---------------------------------------------------------------------

def cmd_datagen(cfg):
    """Sample profiles, simulate their data operators and store (Lambda, target) pairs."""
    out = _outdir(cfg)
    basis, grid = _basis(cfg), _grid(cfg)
    T = cfg["grid"]["T"]
    dcfg = cfg["data"]
    if dcfg["samples"] < 1:
        raise ConfigError("data.samples must be >= 1")
    if dcfg["target"] not in ("speed", "volume"):
        raise ConfigError("data.target must be 'speed' or 'volume'")
    Ks = dcfg["Ks"]
    if not 1 <= Ks <= basis.n:
        raise ConfigError("data.Ks must lie in [1, n]")
    prior = dict(cfg["prior"], T=T)
    ss = np.random.SeedSequence(cfg["seed"]).spawn(dcfg["samples"])
    lams, targets, cs, norms = [], [], [], []
    s = _s_grid(T, Ks)
    for child in ss:
        prof = sample_prior(int(child.generate_state(1, np.uint64)[0]), prior)
        lam = lambda_op(prof, basis=basis, grid=grid)
        _, chi = travel_time(prof)
        tgt = np.zeros(basis.n)
        tgt[:Ks] = prof(chi(s)) if dcfg["target"] == "speed" else true_volume(prof, s)
        lams.append(lam)
        targets.append(tgt)
        cs.append(prof.c)
        norms.append(float(np.linalg.norm(lam, 2)))
    Path(out / "lambdas.opmat").write_bytes(b"".join(_io.encode_opmat(a) for a in lams))
    _io.write_opmat(out / "targets.opmat", np.array(targets))
    _io.write_opmat(out / "profiles.opmat", np.array(cs))
    manifest = {"version": VERSION, "seed": cfg["seed"], "samples": dcfg["samples"], "n": basis.n,
                "basis": basis.kind, "T": T, "nt": grid.nt, "target": dcfg["target"], "Ks": Ks,
                "target_len": Ks, "h0": [1.0 / math.sqrt(basis.n)] * basis.n,
                "lambda_norms": norms, "rescale_margin": dcfg["rescale_margin"],
                "prior": cfg["prior"], "x_grid": {"start": 0.0, "stop": float(prof.x[-1]),
                                                  "num": int(prof.x.size)},
                "lambdas": "lambdas.opmat", "targets": "targets.opmat", "profiles": "profiles.opmat"}
    _io.dump_json(out / "dataset.json", manifest)
    return {"dataset": str(out / "dataset.json"), "samples": dcfg["samples"],
            "max_lambda_norm": max(norms)}


def load_dataset(path):
    path = _require_file(path, "dataset manifest")
    m = json.loads(path.read_text(encoding="utf-8"))
    lams = np.array(_io.read_opmat_all(path.parent / m["lambdas"]))
    margin = m.get("rescale_margin", 0.0)
    lams = np.array([_scaled(a, margin) for a in lams])
    targets = _io.read_opmat(path.parent / m["targets"])
    return TrainingSet(lams, targets, np.array(m["h0"]), m["seed"], "prior"), m


def _split(S, holdout, seed):
    s = len(S)
    k = int(round(holdout * s))
    perm = np.random.default_rng(seed).permutation(s)
    if k <= 0 or k >= s:
        return S, None
    return S.subset(np.sort(perm[k:])), S.subset(np.sort(perm[:k]))


def cmd_train(cfg):
    out = _outdir(cfg)
    t = cfg["train"]
    S, meta = load_dataset(t["dataset"])
    S_train, S_test = _split(S, t["holdout"], cfg["seed"])
    n = S.n
    if t["resume"]:
        init = ParamSet.load(_require_file(t["resume"], "resume checkpoint"))
        if init.n != n:
            raise ConfigError("checkpoint width does not match the dataset")
        step = init.meta.get("step", t["step"])
    else:
        rng = np.random.default_rng(cfg["seed"])
        spec = NetworkSpec(t["L"], n)
        init = ParamSet(spec, t["init_scale"] * rng.standard_normal((t["L"], 1, 2, 4 * n, n)) / math.sqrt(n),
                        np.zeros((t["L"], 2, n)))
        step = t["step"]
    tc = TrainConfig(alpha=t["alpha"], R0_cap=t["R0_cap"], L0=t["L0"], max_iters=t["max_iters"],
                     step=step, prox_every=t["prox_every"], seed=cfg["seed"])
    params, history = train(init, S_train, tc)
    params.meta.update({"step": history[-1]["step"], "h0": list(map(float, S.h0))})
    save_run(out, tc, history, params, seed=cfg["seed"])
    metrics = {"data_fit": history[-1]["data_fit"], "R": regularizer(params),
               "N1": sparsity_count(params)[1], "iterations": len(history) - 1,
               "alpha": t["alpha"], "train_size": len(S_train),
               "test_size": 0 if S_test is None else len(S_test)}
    metrics["gap_estimate"] = (None if S_test is None
                               else generalization_gap_estimate(params, S_train, S_test, t["alpha"]))
    metrics["test_data_fit"] = None if S_test is None else data_fit(params, S_test)
    _io.dump_json(out / "metrics.json", metrics)
    return metrics


def _load_profile(path):
    return WaveSpeedProfile.load(_require_file(path, "profile"))


def _bc_lambda(cfg, basis):
    bc = cfg["bc"]
    if bc["lambda"] is not None:
        mats = _io.read_opmat_all(_require_file(bc["lambda"], "Lambda file"))
        if not 0 <= bc["index"] < len(mats):
            raise ConfigError("bc.index outside the Lambda file")
        lam = mats[bc["index"]]
        if lam.shape != (basis.n, basis.n):
            raise DimensionError("Lambda is %s but the basis has n = %d" % (lam.shape, basis.n))
        return lam, None
    if bc["profile"] is not None:
        prof = _load_profile(bc["profile"])
        return lambda_op(prof, basis=basis, grid=_grid(cfg)), prof
    raise ConfigError("bc.lambda or bc.profile is required")


def cmd_reconstruct(cfg, compare_net=None):
    out = _outdir(cfg)
    bc = cfg["bc"]
    basis = _basis(cfg)
    lam, prof = _bc_lambda(cfg, basis)
    truth = _load_profile(bc["truth"]) if bc["truth"] is not None else prof
    ops = build_bc_operators(basis)
    rec = reconstruct_speed(lam, ops, alpha=bc["alpha"], iters=bc["iters"], Ks=bc["Ks"],
                            offset=bc["offset"])
    text = report_csv(rec, truth)
    summary = {"Ks": bc["Ks"], "alpha": bc["alpha"], "iters": bc["iters"], "eps_D": rec.eps_D,
               "lambda_norm": float(np.linalg.norm(lam, 2))}
    if truth is not None:
        _, chi = travel_time(truth)
        ctrue = truth(chi(rec.s))
        err = (rec.v - ctrue) / ctrue
        summary["rel_err_linf"] = float(np.max(np.abs(err)))
        summary["rel_err_l2"] = float(np.sqrt(np.mean(err ** 2)))
    if compare_net is not None:
        net = ParamSet.load(_require_file(compare_net, "network checkpoint"))
        h0 = np.array(net.meta.get("h0", np.ones(net.n) / math.sqrt(net.n)))
        pred = forward(net, _scaled(lam, 0.0), h0)[:bc["Ks"]]
        rows = text.splitlines()
        cols = ["net_v"] + (["net_rel_err"] if truth is not None else [])
        body = [rows[0] + "," + ",".join(cols)]
        for j, row in enumerate(rows[1:]):
            extra = [_io.fmt_float(pred[j])]
            if truth is not None:
                extra.append(_io.fmt_float(abs(pred[j] - ctrue[j]) / ctrue[j]))
            body.append(row + "," + ",".join(extra))
        text = "\n".join(body) + "\n"
        if truth is not None:
            summary["net_rel_err_linf"] = float(np.max(np.abs(pred - ctrue) / ctrue))
    (out / "reconstruction.csv").write_text(text, encoding="utf-8")
    _io.dump_json(out / "reconstruction.json", summary)
    return summary


def cmd_bounds(cfg):
    out = _outdir(cfg)
    b = cfg["bounds"]
    rep = generalization_constants(b["L"], b["n"], b["alpha"], b["f_inf"], L0=b["L0"], R0=b["R0"],
                                   eps0=b["eps0"], flavor=b["flavor"])
    result = {"flavor": rep.flavor, "inputs": rep.inputs, "log10_C1": rep.log10_C1,
              "log10_C2": rep.log10_C2, "C2": rep.C2,
              "C1": rep.C1 if math.isfinite(rep.C1) else None,
              "delta": b["delta"], "target": b["target"],
              "log10_bound_at_min_s": None, "min_samples": rep.min_samples(b["delta"], b["target"])}
    result["log10_bound_at_min_s"] = rep.log10_bound(b["delta"], result["min_samples"])
    R0 = b["R0"] if b["flavor"] == "ii" else b["L0"] / b["alpha"]
    result["sparsity"] = sparsity_budget(b["L"], min(b["alpha"], 1.0), R0, "R0")
    if b["covering"] is not None:
        c = b["covering"]
        result["covering"] = covering_size(c["R0"], c["N0"], c["n"], c["M0"], c["rho"], c.get("L", b["L"]))
    if b["depth_width"] is not None:
        result["depth_width"] = depth_width(**b["depth_width"])
    if b["discretization"] is not None:
        result["discretization"] = discretization_scales(**b["discretization"])
    _io.dump_json(out / "bounds.json", result)
    return result


def cmd_unroll(cfg):
    out = _outdir(cfg)
    bc = cfg["bc"]
    basis = _basis(cfg)
    lam, _ = _bc_lambda(cfg, basis)
    ops = build_bc_operators(basis)
    params = unroll_to_ornn(ops, bc["s"], bc["alpha"], bc["iters"], lam_like=lam)
    params.save(out, "unrolled")
    net_out, _ = forward_general(params, lam, np.zeros(basis.n))
    ref = ista_control(ops, lam, bc["s"], bc["alpha"], bc["iters"])
    step = params.meta["step"]
    summary = {"layers": params.L, "lags": params.K, "step": step, "threshold": params.meta["threshold"],
               "R": regularizer(params), "R_bound": unrolled_regularizer_bound(ops, bc["s"], step, bc["iters"]),
               "max_dev_vs_ista": float(np.max(np.abs(net_out - ref.coeffs))),
               "volume": float(net_out @ ops.phi_T)}
    _io.dump_json(out / "unroll.json", summary)
    return summary


def cmd_eval(cfg):
    out = _outdir(cfg)
    e = cfg["eval"]
    net = ParamSet.load(_require_file(e["checkpoint"], "network checkpoint"))
    lams = np.array(_io.read_opmat_all(_require_file(e["lambdas"], "Lambda file")))
    if lams.shape[1:] != (net.n, net.n):
        raise DimensionError("Lambda files do not match the network width %d" % net.n)
    h0 = np.array(net.meta.get("h0", np.ones(net.n) / math.sqrt(net.n)))
    if net.meta.get("layers_per_iteration"):
        h0 = np.zeros(net.n)
    outs = forward(net, lams, h0)
    _io.write_opmat(out / "outputs.opmat", outs)
    with open(out / "outputs.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["sample"] + ["y%d" % i for i in range(net.n)])
        for j, row in enumerate(outs):
            w.writerow([j] + [_io.fmt_float(v) for v in row])
    summary = {"samples": int(lams.shape[0]), "n": net.n, "max_abs_output": float(np.max(np.abs(outs)))}
    _io.dump_json(out / "eval.json", summary)
    return summary


COMMANDS = {"datagen": cmd_datagen, "train": cmd_train, "reconstruct": cmd_reconstruct,
            "bounds": cmd_bounds, "unroll": cmd_unroll, "eval": cmd_eval}

CONFIG_ERRORS = (ConfigError, DomainError, DimensionError, EmptySetError, ParamIndexError,
                 OSError, KeyError, TypeError, json.JSONDecodeError)


def build_parser():
    p = argparse.ArgumentParser(prog="ornn", description=__doc__.splitlines()[0])
    sub = p.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        sp = sub.add_parser(name)
        sp.add_argument("--config", help="JSON config file")
        sp.add_argument("--seed", type=int, help="global seed (u64)")
        sp.add_argument("--out", help="output directory")
        sp.add_argument("--threads", type=int, help="accepted for compatibility; runs single-threaded")
        if name == "reconstruct":
            sp.add_argument("--compare-net", help="checkpoint to evaluate on the same Lambda")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = load_config(args.config, args.seed, args.out, args.threads)
        fn = COMMANDS[args.command]
        if args.command == "reconstruct":
            result = fn(cfg, compare_net=args.compare_net)
        else:
            result = fn(cfg)
    except CONFIG_ERRORS as exc:
        print("error: %s" % exc, file=sys.stderr)
        return IO_CONFIG
    except (OrnnError, ArithmeticError, np.linalg.LinAlgError) as exc:
        print("numerical failure: %s" % exc, file=sys.stderr)
        return NUMERICAL
    print(json.dumps(_io._round_floats(result), sort_keys=True))
    return 0


if __name__ == "__main__":
    sys.exit(main())
