"""Boundary control reconstruction of the wave speed from the data operator.

Everything works in coefficient space of an orthonormal TimeBasis on [0, 2T],
so the synthesis map and its adjoint are identities.  Sources g are outward
Neumann fluxes: the wave is driven by u_x(0, t) = -g(t), which makes
<u^g(T), 1> = <g, Phi_T> hold with Phi_T(t) = (T - t) 1_[0,T](t).
"""
import csv
import io
import math
from dataclasses import dataclass, field

import numpy as np

from .core import NetworkSpec, ParamSet, check_operator, operator_norm
from .errors import DimensionError, DomainError, NumericalError, ReconstructionError, StepSizeError
from .wave1d import TimeBasis, WaveGrid, solve_wave, travel_time

OBJ_SLACK = 1e-12


def _gram(basis, F, lo=0.0, hi=None, order=8):
    """<psi_i, F_j> over [lo, hi] by composite Gauss-Legendre.

    Panel edges include lo, hi, T and every box edge, so piecewise smooth
    integrands are integrated to rounding error.
    """
    hi = basis.horizon if hi is None else hi
    e = np.linspace(0.0, basis.horizon, 2 * max(basis.n, 64) + 1)
    e = np.unique(np.concatenate([e[(e > lo) & (e < hi)], [lo, hi]]))
    x, w = np.polynomial.legendre.leggauss(order)
    a, b = e[:-1, None], e[1:, None]
    nodes = (0.5 * (b - a) * x + 0.5 * (a + b)).ravel()
    weights = (0.5 * (b - a) * w).ravel()
    return (basis.values(nodes) * weights) @ np.atleast_2d(F(nodes)).T


class BcOperators:
    """Time-domain operators of the boundary control method in a basis.

    R f(t) = f(2T - t), S f(t) = int_0^t f, J f(t) = 1/2 1_[0,T](t) int_t^{2T-t} f.
    The composites JS and SRJ are assembled from the analytic action on the
    basis (second antiderivatives), not as products of truncated matrices.
    """

    def __init__(self, basis: TimeBasis, T=None):
        T = basis.T if T is None else float(T)
        if abs(basis.horizon - 2.0 * T) > 1e-12:
            raise DomainError("basis horizon must equal 2T")
        self.basis, self.T = basis, T
        b, tt = basis, 2.0 * T
        Psi, Psi2 = b.antideriv, b.antideriv2
        self.R_mat = _gram(b, lambda t: b.values(tt - t))
        self.S_mat = _gram(b, Psi)
        self.J_mat = _gram(b, lambda t: 0.5 * (Psi(tt - t) - Psi(t)), 0.0, T)
        self.JS = _gram(b, lambda t: 0.5 * (Psi2(tt - t) - Psi2(t)), 0.0, T)
        end = Psi2(np.array([tt]))

        def G(x):
            m = np.minimum(x, T)
            return 0.5 * (end - Psi2(tt - m) - Psi2(m))

        self.SRJ = _gram(b, lambda t: G(np.full_like(t, tt)) - G(tt - t))
        self.phi_T = _gram(b, lambda t: (T - t)[None, :], 0.0, T)[:, 0]

    @property
    def n(self):
        return self.basis.n

    def P(self, s):
        """Projection for the control window [T - s, T].

        Box basis: orthogonal projection onto the cells whose midpoint lies
        in the window (idempotent; equals the multiplication operator when
        T - s is a cell edge).  Cosine basis: the compressed multiplication
        operator, which is only approximately idempotent.
        """
        if not 0.0 <= s <= self.T:
            raise DomainError("control time s must lie in [0, T]")
        b = self.basis
        if b.kind == "box":
            mid = 0.5 * (b.edges[:-1] + b.edges[1:])
            return np.diag(((mid >= self.T - s) & (mid <= self.T)).astype(float))
        if s == 0.0:
            return np.zeros((b.n, b.n))
        return _gram(b, b.values, self.T - s, self.T)


def build_bc_operators(basis: TimeBasis, T=None) -> BcOperators:
    return BcOperators(basis, T)


def default_basis(T=1.0, n=64):
    return TimeBasis(T, n, "box")


def connecting_operator(ops: BcOperators, lam):
    """K with <K f, h> = <u^f(T), u^h(T)>_{L^2(c^-2 dx)}.

    K = R Lam (SRJ) - (JS) Lam for outward-flux sources.
    """
    lam = check_operator(lam)
    if lam.shape != (ops.n, ops.n):
        raise DimensionError("Lambda must be %dx%d" % (ops.n, ops.n))
    return ops.R_mat @ lam @ ops.SRJ - ops.JS @ lam


def _vec(x, n):
    x = np.asarray(x, dtype=np.float64)
    if x.shape != (n,):
        raise DimensionError("expected a coefficient vector of length %d" % n)
    return x


def blago_inner(ops, lam, f, h):
    K = connecting_operator(ops, lam)
    return float(_vec(h, ops.n) @ K @ _vec(f, ops.n))


def blago_linear(ops, f):
    return float(_vec(f, ops.n) @ ops.phi_T)


def soft_threshold(x, alpha):
    if alpha < 0:
        raise DomainError("threshold must be nonnegative")
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x - alpha, 0.0) - np.maximum(-x - alpha, 0.0)


def rescale_lambda(lam, margin=0.0):
    """Divide Lambda by (1 + margin) ||Lambda|| when its norm exceeds 1.

    Returns (operator, measured norm, rescaled flag).
    """
    lam = check_operator(lam)
    nrm = operator_norm(lam)
    if nrm <= 1.0:
        return lam, nrm, False
    return lam / ((1.0 + margin) * nrm), nrm, True


@dataclass
class ControlResult:
    s: float
    alpha: float
    coeffs: np.ndarray
    objective: list
    iterations: int
    step: float
    iterates: list = field(default_factory=list)


def ista_system(ops, lam, s, K=None):
    """(P K P, P Phi_T, P) for control time s."""
    P = ops.P(s)
    K = connecting_operator(ops, lam) if K is None else K
    return P @ K @ P, P @ ops.phi_T, P


def default_step(A):
    nrm = operator_norm(A)
    return 0.9 / nrm if nrm > 0 else 1.0


def ista_control(ops, lam, s, alpha, iters=200, step=None, K=None, keep_iterates=False):
    """Iterated soft thresholding for min <PKPf, f> - 2<f, P Phi_T> + 2 alpha ||f||_1.

    f <- sigma_{alpha step}(f - step P K P f + step P Phi_T), from f = 0.
    """
    if alpha < 0:
        raise DomainError("alpha must be nonnegative")
    if iters < 1:
        raise DomainError("need at least one iteration")
    A, rhs, _ = ista_system(ops, lam, s, K)
    step = default_step(A) if step is None else float(step)
    if step <= 0:
        raise DomainError("step must be positive")
    f = np.zeros(ops.n)
    obj, its = [], []
    prev, rises = math.inf, 0
    for _ in range(iters):
        f = soft_threshold(f - step * (A @ f) + step * rhs, alpha * step)
        val = float(f @ A @ f - 2.0 * f @ rhs + 2.0 * alpha * np.abs(f).sum())
        if not math.isfinite(val):
            raise StepSizeError("objective diverged; reduce the step")
        rises = rises + 1 if val > prev + OBJ_SLACK else 0
        if rises >= 10:
            raise StepSizeError("objective rose for 10 consecutive iterations at step %.4g" % step)
        prev = val
        obj.append(val)
        if keep_iterates:
            its.append(f.copy())
    return ControlResult(s, alpha, f, obj, iters, step, its)


def volume_estimate(ops, result: ControlResult):
    return blago_linear(ops, result.coeffs)


def s_grid(T, Ks):
    if Ks < 2:
        raise DomainError("need K_s >= 2")
    return np.arange(1, Ks + 1) * T / Ks


@dataclass
class Reconstruction:
    s: np.ndarray
    V: np.ndarray
    D: np.ndarray
    v: np.ndarray
    s_eff: np.ndarray
    eps_D: float


def reconstruct_speed(lam, ops, s=None, alpha=1e-3, iters=200, Ks=16, offset=True):
    """v(s_j) = 1 / D(s_j) with D the finite difference of the volumes V(s_j).

    For the box basis the projected window holds whole cells, so the
    estimated volume behaves like V(s - Delta/2); with ``offset`` the
    differences are taken against these effective control times, anchored at
    V(0) = 0.  D is clamped below at 1e-6 max|V| / T.
    """
    s = s_grid(ops.T, Ks) if s is None else np.asarray(s, dtype=np.float64)
    if s.size < 2:
        raise DomainError("need K_s >= 2")
    K = connecting_operator(ops, lam)
    V = np.array([volume_estimate(ops, ista_control(ops, lam, sj, alpha, iters, K=K)) for sj in s])
    if not np.any(V):
        raise ReconstructionError("all volume estimates vanished; lower alpha")
    shift = 0.5 * ops.basis.delta if (offset and ops.basis.kind == "box") else 0.0
    s_eff = np.concatenate([[0.0], s - shift])
    D = np.diff(np.concatenate([[0.0], V])) / np.diff(s_eff)
    eps_D = 1e-6 * float(np.max(np.abs(V))) / ops.T
    D = np.maximum(D, eps_D)
    return Reconstruction(s, V, D, 1.0 / D, s_eff[1:], eps_D)


def travel_to_euclidean(v, s):
    """x_j = chi(s_j) = int_0^{s_j} v by the trapezoid rule.

    When the grid does not start at 0, v(0) is taken equal to v(s_0).
    """
    v = np.asarray(v, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    if np.any(v <= 0):
        raise DomainError("v must be positive")
    if s[0] > 0:
        ss, vv = np.concatenate([[0.0], s]), np.concatenate([[v[0]], v])
    else:
        ss, vv = s, v
    x = np.concatenate([[0.0], np.cumsum(0.5 * (vv[1:] + vv[:-1]) * np.diff(ss))])
    if s[0] > 0:
        x = x[1:]
    return x, v.copy()


def report_csv(rec: Reconstruction, profile=None):
    """CSV text with columns s_j, V_alpha, D_alpha, v_alpha, x_j, c_true_at_chi, rel_err."""
    x, _ = travel_to_euclidean(rec.v, rec.s)
    if profile is not None:
        _, chi = travel_time(profile)
        ctrue = profile(chi(rec.s))
        err = np.abs(rec.v - ctrue) / ctrue
    out = io.StringIO()
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["s_j", "V_alpha", "D_alpha", "v_alpha", "x_j", "c_true_at_chi", "rel_err"])
    for j in range(rec.s.size):
        row = [rec.s[j], rec.V[j], rec.D[j], rec.v[j], x[j]]
        row += [ctrue[j], err[j]] if profile is not None else ["", ""]
        w.writerow([v if v == "" else "%.17g" % v for v in row])
    return out.getvalue()


# -- interior checks ------------------------------------------------------------

def control_wavefield(profile, ops, coeffs, grid=None):
    """u^{g}(., T) for the control g = sum_j coeffs_j psi_j (outward flux)."""
    grid = grid or WaveGrid(T=ops.T)
    h = -(np.asarray(coeffs) @ ops.basis.source_samples(grid.t))
    fld = solve_wave(profile, h, grid, snapshot_times=(ops.T,))
    return fld.x, fld.snapshots[ops.T]


def control_error(profile, ops, coeffs, s, grid=None):
    """||u^{g}(T) - 1_{M(s)}|| in L^2(c^-2 dx), trapezoid on the solver grid."""
    x, u = control_wavefield(profile, ops, coeffs, grid)
    tau, _ = travel_time(profile)
    ind = (tau(x) <= s).astype(float)
    w = np.full(x.size, x[1] - x[0])
    w[0] *= 0.5
    w[-1] *= 0.5
    return float(np.sqrt(np.sum(w * (u - ind) ** 2 / profile(x) ** 2)))


# -- unrolled network ---------------------------------------------------------

def unroll_to_ornn(ops, s, alpha, iters, lam_like=None, step=None, K=None):
    """Operator recurrent network whose output is the ISTA iterate f^(iters).

    Four layers per iteration (K = 4 lags).  With f^m = h_{4m} and h_0 = 0,
    a = alpha * step, x = f - step PKPf + step P Phi_T:
        h_{4m+1} = P f                                      (fixed A)
        h_{4m+2} = step SRJ P h_{4m+1}                      (trained A)
        h_{4m+3} = relu(-f + PR Lam h_{4m+2} - step PJS Lam h_{4m+1} - step P Phi_T - a)
        h_{4m+4} = -h_{4m+3} + relu(f - PR Lam h_{4m+2} + step PJS Lam h_{4m+1} + step P Phi_T - a)
    so h_{4m+4} = sigma_a(x).  Only the step needs Lambda (for the default
    step); pass ``lam_like`` or ``step``.
    """
    if iters < 1:
        raise DomainError("need at least one iteration")
    n = ops.n
    P = ops.P(s)
    if step is None:
        if lam_like is None and K is None:
            raise DomainError("give step, or Lambda to derive the default step")
        Kc = connecting_operator(ops, lam_like) if K is None else K
        step = default_step(P @ Kc @ P)
    a = alpha * step
    rhs = step * (P @ ops.phi_T)
    W2 = step * (ops.SRJ @ P)
    W3 = step * (P @ ops.JS)
    PR = P @ ops.R_mat
    I = np.eye(n)
    L = 4 * iters
    fa = np.zeros((L, 4, 2, n, n))
    fb = np.zeros((L, 4, 2, n, n))
    A = np.zeros((L, 4, 2, n, n))
    B = np.zeros((L, 4, 2, n, n))
    bias = np.zeros((L, 2, n))
    for m in range(iters):
        l = 4 * m
        fa[l, 0, 0] = P
        A[l + 1, 0, 0] = W2
        fa[l + 2, 2, 1] = -I
        B[l + 2, 1, 1] = -W3
        fb[l + 2, 0, 1] = PR
        bias[l + 2, 1] = -rhs - a
        fa[l + 3, 0, 0] = -I
        fa[l + 3, 3, 1] = I
        B[l + 3, 2, 1] = W3
        fb[l + 3, 1, 1] = -PR
        bias[l + 3, 1] = rhs - a
    spec = NetworkSpec(L, n, 4, 0.0, fa, fb, strict=False)
    groups = [[4 * m + r for m in range(iters)] for r in range(1, 5)]
    try:
        params = ParamSet.from_dense(spec, A, B, bias, shared_layers=groups if iters > 1 else None,
                                     meta={"step": step, "threshold": a, "s": s, "alpha": alpha,
                                           "layers_per_iteration": 4})
    except np.linalg.LinAlgError as exc:
        raise NumericalError("SVD failed: %s" % exc)
    return params


def unrolled_regularizer_bound(ops, s, step, iters):
    """iters * (sum sqrt(sigma(step SRJ P)) + 2 sum sqrt(sigma(step P JS)))."""
    P = ops.P(s)
    s2 = np.linalg.svd(step * ops.SRJ @ P, compute_uv=False)
    s3 = np.linalg.svd(step * P @ ops.JS, compute_uv=False)
    return iters * (np.sqrt(s2).sum() + 2.0 * np.sqrt(s3).sum())


# -- large-scale discretization rates -------------------------------------------

def discretization_scales(delta, C=1.0, Cp=1.0, Cpp=1.0, r=1.0):
    """log10 sizes of the network discretization at accuracy delta.

    eps = delta^270, N0 = C eps^(-4/7), K <= C eps^(-1/18), L <= C log(1/delta),
    n <= C eps^(-4/7 - 1/18), R <= C' K L n^(1/r), and the coarser R <= C'' delta^-16.
    """
    if not 0.0 < delta < 1.0:
        raise DomainError("delta must lie in (0, 1)")
    if min(C, Cp, Cpp, r) <= 0:
        raise DomainError("constants must be positive")
    lg = math.log10
    log_eps = 270.0 * lg(delta)
    logN0 = lg(C) - 4.0 / 7.0 * log_eps
    logK = lg(C) - log_eps / 18.0
    L = C * math.log(1.0 / delta)
    logn = lg(C) - (4.0 / 7.0 + 1.0 / 18.0) * log_eps
    logR = lg(Cp) + logK + lg(L) + logn / r
    return {"log10_eps": log_eps, "log10_N0": logN0, "log10_K": logK, "L": L,
            "log10_n": logn, "log10_R": logR, "log10_R_coarse": lg(Cpp) - 16.0 * lg(delta)}
