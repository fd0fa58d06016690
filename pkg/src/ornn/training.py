"""Sparsity-regularized training and generalization-bound calculators."""
import csv
import math
import sys
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional

import numpy as np

from .core import ParamSet, clamp_relu, forward, forward_general, param_grad, regularizer, sparsity_count
from .errors import DimensionError, DomainError, EmptySetError, NumericalError
from . import io as _io

LAMBDA_SLACK = 1e-12


@dataclass
class TrainingSet:
    """Pairs (Lambda_i, target_i) sharing one network input h0."""

    lams: np.ndarray
    targets: np.ndarray
    h0: np.ndarray
    seed: int = 0
    prior_tag: str = ""

    def __post_init__(self):
        self.lams = np.asarray(self.lams, dtype=np.float64)
        self.targets = np.asarray(self.targets, dtype=np.float64)
        self.h0 = np.asarray(self.h0, dtype=np.float64)
        if self.lams.ndim != 3 or self.lams.shape[1] != self.lams.shape[2]:
            raise DimensionError("lams must have shape (s, n, n)")
        s, n = self.lams.shape[:2]
        if self.targets.shape != (s, n) or self.h0.shape != (n,):
            raise DimensionError("targets must be (s, n) and h0 (n,)")
        if s and np.linalg.norm(self.lams, 2, axis=(1, 2)).max() > 1 + LAMBDA_SLACK:
            raise DomainError("every Lambda_i must satisfy ||Lambda_i|| <= 1")

    def __len__(self):
        return self.lams.shape[0]

    @property
    def n(self):
        return self.h0.shape[0]

    def subset(self, idx):
        idx = np.asarray(idx, dtype=int)
        return TrainingSet(self.lams[idx], self.targets[idx], self.h0, self.seed, self.prior_tag)


def random_lambdas(rng, s, n, symmetric=True):
    """Random operators scaled to spectral norm drawn uniformly in (0, 1]."""
    X = rng.standard_normal((s, n, n))
    if symmetric:
        X = 0.5 * (X + np.transpose(X, (0, 2, 1)))
    nrm = np.linalg.norm(X, 2, axis=(1, 2))
    r = rng.uniform(0.0, 1.0, s)
    return X * (r / nrm)[:, None, None]


def teacher_set(teacher, s, seed, h0=None, prior_tag="random-symmetric"):
    rng = np.random.default_rng(seed)
    lams = random_lambdas(rng, s, teacher.n)
    h0 = np.ones(teacher.n) / np.sqrt(teacher.n) if h0 is None else h0
    out = forward(teacher, lams, h0) if s else np.zeros((0, teacher.n))
    return TrainingSet(lams, out, h0, seed, prior_tag)


@dataclass
class TrainConfig:
    alpha: float
    R0_cap: Optional[float] = None
    L0: float = 1.0
    max_iters: int = 500
    step: float = 1e-2
    prox_every: int = 1
    tol: float = 1e-12
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.alpha <= 1.0:
            raise DomainError("alpha must lie in (0, 1]")
        if self.step <= 0:
            raise DomainError("step size must be positive")
        if self.prox_every < 1 or self.max_iters < 0:
            raise DomainError("prox_every >= 1 and max_iters >= 0 required")

    @property
    def cap(self):
        return self.L0 / self.alpha if self.R0_cap is None else self.R0_cap


# -- losses -------------------------------------------------------------------

def loss(params, lam, target, alpha, h0=None):
    """||f_theta(Lambda) - target||^2 + alpha R(theta); h0 defaults to 1/sqrt(n)."""
    target = np.asarray(target, dtype=np.float64)
    h0 = _default_h0(params.n) if h0 is None else h0
    return empirical_loss(params, TrainingSet(np.asarray(lam)[None], target[None], h0), alpha)


def _default_h0(n):
    return np.ones(n) / np.sqrt(n)


def data_fit(params, S):
    if len(S) == 0:
        raise EmptySetError("training set is empty")
    if S.n != params.n:
        raise DimensionError("training set width %d does not match network width %d" % (S.n, params.n))
    out = forward(params, S.lams, S.h0)
    return float(np.mean(np.sum((out - S.targets) ** 2, axis=1)))


def empirical_loss(params, S, alpha):
    """(1/s) sum ||f_theta(Lambda_i) - target_i||^2 + alpha R(theta)."""
    return data_fit(params, S) + alpha * regularizer(params)


def _fit_grad(params, S):
    out, tr = forward_general(params, S.lams, S.h0)
    m = params.spec.truncation
    y = out if m is None else clamp_relu(out, m)
    g = 2.0 * (y - S.targets) / len(S)
    if m is not None:
        g = g * (np.abs(out) < m)
    dtheta, dbias = param_grad(params, S.lams, S.h0, g)
    for group in params.shared_layers:
        idx = [l - 1 for l in group]
        dtheta[idx] = dtheta[idx].sum(axis=0)
        dbias[idx] = dbias[idx].sum(axis=0)
    return dtheta, dbias


def group_shrink(theta, thresh):
    """v <- v max(0, 1 - thresh / ||v||) on every slot vector."""
    nrm = np.linalg.norm(theta, axis=-1, keepdims=True)
    with np.errstate(divide="ignore", invalid="ignore"):
        scale = np.where(nrm > 0, np.maximum(0.0, 1.0 - thresh / nrm), 0.0)
    return theta * scale


def _project_unit(v):
    nrm = np.linalg.norm(v, axis=-1, keepdims=True)
    return v / np.maximum(nrm, 1.0)


def _candidate(params, dtheta, dbias, step, alpha, cap, prox):
    theta = params.theta - step * dtheta
    bias = params.bias - step * dbias
    if prox:
        theta = group_shrink(theta, 0.5 * alpha * step)
    theta, bias = _project_unit(theta), _project_unit(bias)
    R = 0.5 * float(np.linalg.norm(theta, axis=-1).sum())
    if R > cap:
        theta = theta * (cap / R)
    return ParamSet(params.spec, theta, bias, params.shared_layers, True, params.meta)


def train(init, S, cfg: TrainConfig, max_halvings=40):
    """Proximal gradient descent on the regularized empirical loss.

    Each iteration takes a gradient step on the data fit, applies the group
    shrinkage prox of the penalty (every ``prox_every`` iterations), projects
    slot vectors into the unit ball and rescales P1 when R exceeds the cap.
    A step that raises the objective is halved until it does not, so the
    recorded objective never increases by more than ``tol``.
    """
    if len(S) == 0:
        raise EmptySetError("training set is empty")
    params = init
    step = cfg.step
    cur = empirical_loss(params, S, cfg.alpha)
    history = [_record(0, params, S, cfg.alpha, step)]
    for it in range(1, cfg.max_iters + 1):
        try:
            dtheta, dbias = _fit_grad(params, S)
        except NumericalError as exc:
            raise NumericalError("iteration %d: %s" % (it, exc)) from exc
        if not (np.all(np.isfinite(dtheta)) and np.all(np.isfinite(dbias))):
            raise NumericalError("iteration %d: non-finite gradient" % it)
        prox = it % cfg.prox_every == 0
        for _ in range(max_halvings):
            cand = _candidate(params, dtheta, dbias, step, cfg.alpha, cfg.cap, prox)
            try:
                new = empirical_loss(cand, S, cfg.alpha)
            except NumericalError:
                new = math.inf
            if new <= cur + cfg.tol:
                break
            step *= 0.5
        else:
            break
        if not math.isfinite(new):
            raise NumericalError("iteration %d: loss is not finite" % it)
        params, improved, cur = cand, cur - new, new
        history.append(_record(it, params, S, cfg.alpha, step))
        if improved <= cfg.tol and prox:
            break
    return params, history


def _record(it, params, S, alpha, step):
    fit = data_fit(params, S)
    R = regularizer(params)
    return {"iter": it, "data_fit": fit, "R": R, "N1": sparsity_count(params)[1],
            "loss": fit + alpha * R, "step": step}


def save_run(directory, cfg, history, params, seed=None):
    """Manifest JSON (config echo, seed, CSV path), history CSV and checkpoint.

    The CSV has one row per iteration run; the initial state is not a row.
    """
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    with open(d / "history.csv", "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["iter", "data_fit", "R", "N1", "loss"])
        for h in history[1:]:
            w.writerow([h["iter"], _io.fmt_float(h["data_fit"]), _io.fmt_float(h["R"]), h["N1"],
                        _io.fmt_float(h["loss"])])
    ckpt = params.save(d, "params")
    manifest = {"config": asdict(cfg), "seed": cfg.seed if seed is None else seed,
                "history_csv": "history.csv", "checkpoint": Path(ckpt).name}
    _io.dump_json(d / "train_manifest.json", manifest)
    return d / "train_manifest.json"


# -- sparsity and generalization calculators -----------------------------------

def sparsity_budget(L, alpha, R0_or_L0, flavor="R0"):
    """N1 = floor(4^(L+1) R0^(3/2) alpha^(-1/2) e^(2 R0)) and N0 = 2L + N1.

    flavor "R0" takes R0 directly; "L0" uses R0 = L0 / alpha.  Returns a dict
    with N1, N0 and a ``saturated`` flag set when N1 exceeds sys.maxsize.
    """
    if not 0.0 < alpha <= 1.0:
        raise DomainError("alpha must lie in (0, 1]")
    if R0_or_L0 < 0:
        raise DomainError("R0 must be nonnegative")
    if flavor not in ("R0", "L0"):
        raise DomainError("flavor must be 'R0' or 'L0'")
    R0 = R0_or_L0 if flavor == "R0" else R0_or_L0 / alpha
    if R0 == 0:
        return {"N1": 0, "N0": 2 * L, "R0": 0.0, "saturated": False}
    log_n1 = (L + 1) * math.log(4) + 1.5 * math.log(R0) - 0.5 * math.log(alpha) + 2 * R0
    if log_n1 > math.log(sys.maxsize):
        return {"N1": sys.maxsize, "N0": sys.maxsize, "R0": R0, "saturated": True}
    n1 = math.floor(4.0 ** (L + 1) * R0 ** 1.5 * alpha ** -0.5 * math.exp(2 * R0))
    return {"N1": n1, "N0": 2 * L + n1, "R0": R0, "saturated": False}


LN10 = math.log(10.0)


@dataclass
class BoundReport:
    """C1, C2 of the generalization gap bound, kept in log space.

    ``log10_C1`` and ``log10_C2`` are always finite for admissible inputs
    unless the exponent itself overflows a double (then inf).
    """

    flavor: str
    log10_C1: float
    log10_C2: float
    inputs: dict = field(default_factory=dict)

    @property
    def C1(self):
        return 10.0 ** self.log10_C1 if self.log10_C1 < 308 else math.inf

    @property
    def C2(self):
        return 10.0 ** self.log10_C2 if self.log10_C2 < 308 else math.inf

    def _decay(self):
        n, F = self.inputs["n"], self.inputs["f_inf"]
        return 2.0 / (25.0 * n * n * F ** 4)

    def log10_bound(self, delta, s):
        """log10 of C1 delta^-C2 exp(-2 s delta^2 / ((5n)^2 ||f||^4))."""
        if not 0 < delta:
            raise DomainError("delta must be positive")
        return self.log10_C1 - self.C2 * math.log10(delta) - s * delta ** 2 * self._decay() / LN10

    def bound(self, delta, s):
        v = self.log10_bound(delta, s)
        return 10.0 ** v if v < 308 else math.inf

    def min_samples(self, delta, target=0.05):
        """Smallest s with bound(delta, s) <= target."""
        need = self.log10_C1 - self.C2 * math.log10(delta) - math.log10(target)
        if need <= 0:
            return 0
        return math.ceil(need * LN10 / (delta ** 2 * self._decay()))


def _log10_exp_of(log_inner):
    """log10(exp(x)) given ln(x); x may be astronomically large."""
    if log_inner > 700:
        return math.inf
    return math.exp(log_inner) / LN10


def generalization_constants(L, n, alpha, f_inf, L0=None, R0=None, eps0=None, flavor="i"):
    """C1, C2 of the generalization gap bound.

    case i:  C1 = exp(8^(L+4) n^1.5 (1+F) e^(5 L0/alpha)),  C2 = 8^(L+1) n e^(4 L0/alpha)
    case ii: C1 = 2 exp(8^(L+3) n^1.5 (R0+L+F) e^(6 R0) alpha^-1/2),
             C2 = 8^(L+1) n e^(6 R0) alpha^-1/2, needing alpha >= eps0^2/R0, R0 >= 1.
    """
    if L < 1 or n < 1 or alpha <= 0 or f_inf <= 0:
        raise DomainError("need L, n >= 1 and alpha, ||f|| > 0")
    ln8 = math.log(8.0)
    if flavor == "i":
        if L0 is None or L0 <= 0:
            raise DomainError("case i needs L0 > 0")
        ln_inner = (L + 4) * ln8 + 1.5 * math.log(n) + math.log1p(f_inf) + 5.0 * L0 / alpha
        log10_C1 = _log10_exp_of(ln_inner)
        ln_C2 = (L + 1) * ln8 + math.log(n) + 4.0 * L0 / alpha
        inputs = {"L": L, "n": n, "alpha": alpha, "f_inf": f_inf, "L0": L0}
    elif flavor == "ii":
        if R0 is None or eps0 is None:
            raise DomainError("case ii needs R0 and eps0")
        if R0 < 1 or alpha < eps0 ** 2 / R0:
            raise DomainError("case ii requires R0 >= 1 and alpha >= eps0^2 / R0")
        ln_inner = ((L + 3) * ln8 + 1.5 * math.log(n) + math.log(R0 + L + f_inf)
                    + 6.0 * R0 - 0.5 * math.log(alpha))
        log10_C1 = math.log10(2.0) + _log10_exp_of(ln_inner)
        ln_C2 = (L + 1) * ln8 + math.log(n) + 6.0 * R0 - 0.5 * math.log(alpha)
        inputs = {"L": L, "n": n, "alpha": alpha, "f_inf": f_inf, "R0": R0, "eps0": eps0}
    else:
        raise DomainError("flavor must be 'i' or 'ii'")
    return BoundReport(flavor, log10_C1, ln_C2 / LN10, inputs)


def covering_size(R0, N0, n, M0, rho, L=1):
    """log10 of 8^(N0 n) M0 (R0/rho)^(N0 n) and the radius 4^(L+1) rho (R0+2L) e^(2 R0)."""
    if not 0.0 < rho <= R0:
        raise DomainError("need 0 < rho <= R0")
    if N0 < 0 or n < 1 or M0 <= 0:
        raise DomainError("need N0 >= 0, n >= 1, M0 > 0")
    d = N0 * n
    log10_count = d * math.log10(8.0) + math.log10(M0) + d * math.log10(R0 / rho)
    radius = 4.0 ** (L + 1) * rho * (R0 + 2 * L) * math.exp(2 * R0)
    return {"log10_count": log10_count, "radius": radius}


def perturbation_radius(L, rho, R0):
    return 4.0 ** (L + 1) * rho * (R0 + 2 * L) * math.exp(2 * R0)


def hoeffding_bound(N, delta, M):
    """P(|mean - E| > delta) <= 2 exp(-2 N delta^2 / M^2) for samples in an interval of length M."""
    return 2.0 * math.exp(-2.0 * N * delta ** 2 / M ** 2)


def hoeffding_radius(N, M, confidence=0.95):
    """delta with hoeffding_bound(N, delta, M) = 1 - confidence."""
    return M * math.sqrt(math.log(2.0 / (1.0 - confidence)) / (2.0 * N))


def loss_range(n, f_inf):
    """Range 5 n ||f||_inf^2 of the per-sample loss used in the Hoeffding step."""
    return 5.0 * n * f_inf ** 2


def generalization_gap_estimate(params, S_train, S_test, alpha):
    if len(S_train) == 0 or len(S_test) == 0:
        raise EmptySetError("both sets must be nonempty")
    return abs(empirical_loss(params, S_train, alpha) - empirical_loss(params, S_test, alpha))


def fold_partition(s, folds, seed):
    if folds < 2 or s < folds:
        raise DomainError("need folds >= 2 and at least as many samples as folds")
    perm = np.random.default_rng(seed).permutation(s)
    return [np.sort(p) for p in np.array_split(perm, folds)]


def cross_validate_alpha(S, candidates, folds, cfg: TrainConfig, init, slack=0.05):
    """Smallest candidate whose mean held-out fit is within (1+slack) of the best.

    Returns (alpha, table of (alpha, mean held-out error)).
    """
    candidates = sorted(float(a) for a in candidates)
    if not candidates:
        raise DomainError("no candidate alpha given")
    if len(candidates) == 1:
        return candidates[0], []
    parts = fold_partition(len(S), folds, cfg.seed)
    table = []
    for a in candidates:
        c = TrainConfig(**{**asdict(cfg), "alpha": a})
        errs = []
        for j, test in enumerate(parts):
            train_idx = np.concatenate([p for i, p in enumerate(parts) if i != j])
            theta, _ = train(init, S.subset(train_idx), c)
            errs.append(data_fit(theta, S.subset(test)))
        table.append((a, float(np.mean(errs))))
    best = min(e for _, e in table)
    for a, e in table:
        if e <= (1.0 + slack) * best:
            return a, table
    return candidates[-1], table
