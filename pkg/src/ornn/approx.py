"""Polynomial approximation of holomorphic operator functions by networks."""
import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .core import NetworkSpec, ParamSet, check_operator
from .errors import DimensionError, DomainError, EvalError
from . import io as _io


@dataclass
class HolomorphicSampler:
    evaluator: Callable
    r: float
    bound: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.r < 1.0:
            raise DomainError("radius margin r must lie in (0, 1)")


def taylor_coeffs(q, ell, quad_points=None):
    """a_k = (2 pi i)^-1 ∮ q(z) z^(-k-1) dz on |z| = 1+r, trapezoid rule.

    The trapezoid rule on a circle is spectrally accurate for holomorphic q;
    the default node count is 16(ell+1).
    """
    if ell < 0:
        raise DomainError("degree must be nonnegative")
    N = 16 * (ell + 1) if quad_points is None else int(quad_points)
    if N < 4 * (ell + 1):
        raise DomainError("need at least 4(ell+1) quadrature points")
    rho = 1.0 + q.r
    z = rho * np.exp(2j * np.pi * np.arange(N) / N)
    try:
        vals = np.array([complex(q.evaluator(zj)) for zj in z])
    except Exception as exc:
        raise EvalError("evaluator failed on the contour: %s" % exc) from exc
    if not np.all(np.isfinite(vals)):
        raise EvalError("evaluator returned non-finite values on the contour")
    k = np.arange(ell + 1)
    a = (vals[None, :] * z[None, :] ** (-k[:, None])).mean(axis=1)
    return a.real


def degree_for_tolerance(r, eps0):
    """Smallest-form degree with (1+r)^-ell / r <= eps0."""
    if not (0.0 < eps0 < r < 1.0):
        raise DomainError("need 0 < eps0 < r < 1, got r=%r eps0=%r" % (r, eps0))
    return 1 + int(math.floor(math.log(1.0 / (r * eps0)) / math.log(1.0 + r)))


def tail_bound(r, ell):
    return (1.0 + r) ** (-ell) / r


@dataclass
class OperatorPolynomial:
    """Either ``terms[j] = [A_j0, ..., A_jj]`` or scalar ``coeffs`` a_0..a_d."""

    terms: Optional[list] = None
    coeffs: Optional[np.ndarray] = None

    @property
    def degree(self):
        return len(self.terms) - 1 if self.terms is not None else len(self.coeffs) - 1

    def save(self, directory, name="poly"):
        """Manifest JSON plus one OPMAT1 blob holding every block (or the coefficients)."""
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        blob = "%s_blocks.opmat" % name
        if self.coeffs is not None:
            mats = [np.asarray(self.coeffs, dtype=np.float64)[None, :]]
            doc = {"form": "scalar", "degree": self.degree}
        else:
            mats = [np.asarray(A, dtype=np.float64) for blocks in self.terms for A in blocks]
            doc = {"form": "general", "degree": self.degree}
        (d / blob).write_bytes(b"".join(_io.encode_opmat(m) for m in mats))
        doc["blocks"] = blob
        _io.dump_json(d / ("%s.json" % name), doc)
        return d / ("%s.json" % name)

    @classmethod
    def load(cls, path):
        path = Path(path)
        doc = json.loads(path.read_text(encoding="utf-8"))
        mats = _io.read_opmat_all(path.parent / doc["blocks"])
        if doc["form"] == "scalar":
            return cls(coeffs=mats[0][0])
        terms, pos = [], 0
        for j in range(doc["degree"] + 1):
            terms.append(mats[pos:pos + j + 1])
            pos += j + 1
        return cls(terms=terms)


def eval_operator_polynomial(P, lam, x):
    x = np.asarray(x, dtype=np.float64)
    lam = check_operator(lam, x.shape[0])
    if P.coeffs is not None:
        # Horner: y = a_d x; y = a_k x + Lam y
        a = np.asarray(P.coeffs, dtype=np.float64)
        y = a[-1] * x
        for ak in a[-2::-1]:
            y = ak * x + lam @ y
        return y
    out = np.zeros_like(x)
    for j, blocks in enumerate(P.terms):
        if len(blocks) != j + 1:
            raise DimensionError("term %d needs %d coefficient blocks" % (j, j + 1))
        y = x
        for Ajk in blocks[:0:-1]:
            y = lam @ (check_operator(Ajk, x.shape[0]) @ y)
        out = out + check_operator(blocks[0], x.shape[0]) @ y
    return out


def _coef_scale(a, xnorm):
    return max(1.0, float(np.max(np.abs(a))) * max(xnorm, 1.0))


def neumann_network(a, x=None, n=None):
    """Network computing sum_k a_k Lam^k x by the Horner recurrence.

    With ``x`` given the vector is baked into the biases: a basic (K = 1)
    network of depth max(ell, 1) fed with h0 = x,
        h_1 = a_{ell-1} x + a_ell Lam h0,   h_m = a_{ell-m} x + Lam h_{m-1}.
    With ``x=None`` the input vector is read from h0 through lagged skip
    connections (K = ell), which lets the network be composed after another.

    Coefficients are divided by a common scale gamma >= 1 so every fixed
    operator and bias respects the unit cap; the network output times
    ``meta['output_scale']`` is the polynomial value.
    """
    a = np.asarray(a, dtype=np.float64)
    ell = len(a) - 1
    if ell < 0:
        raise DomainError("need at least one coefficient")
    if x is not None:
        x = np.asarray(x, dtype=np.float64)
        n = x.shape[0]
        gamma = _coef_scale(a, float(np.linalg.norm(x)))
        c = a / gamma
        if ell == 0:
            spec = NetworkSpec(1, n)
            bias = np.zeros((1, 2, n))
            bias[0, 0] = c[0] * x
            return ParamSet(spec, bias=bias, meta={"output_scale": gamma, "degree": 0})
        fb = np.zeros((ell, 1, 2, n, n))
        bias = np.zeros((ell, 2, n))
        fb[0, 0, 0] = c[ell] * np.eye(n)
        for m in range(1, ell + 1):
            bias[m - 1, 0] = c[ell - m] * x
            if m > 1:
                fb[m - 1, 0, 0] = np.eye(n)
        spec = NetworkSpec(ell, n, 1, fixed_B=fb)
        return ParamSet(spec, bias=bias, meta={"output_scale": gamma, "degree": ell, "h0": "x"})
    if n is None:
        raise DomainError("width n is required when x is not given")
    return neumann_network_lagged(a, n)


def neumann_network_lagged(a, n):
    """Horner network whose input vector is h0 (depth max(ell,1), K = ell)."""
    a = np.asarray(a, dtype=np.float64)
    ell = len(a) - 1
    gamma = max(1.0, float(np.max(np.abs(a))))
    c = a / gamma
    if ell == 0:
        spec = NetworkSpec(1, n, 1, fixed_A={(1, 1, 0): c[0] * np.eye(n)})
        return ParamSet(spec, meta={"output_scale": gamma, "degree": 0})
    fa = np.zeros((ell, ell, 2, n, n))
    fb = np.zeros((ell, ell, 2, n, n))
    fb[0, 0, 0] = c[ell] * np.eye(n)
    for m in range(1, ell + 1):
        fa[m - 1, m - 1, 0] = c[ell - m] * np.eye(n)
        if m > 1:
            fb[m - 1, 0, 0] = np.eye(n)
    spec = NetworkSpec(ell, n, ell, fixed_A=fa, fixed_B=fb)
    return ParamSet(spec, meta={"output_scale": gamma, "degree": ell})


def compose_networks(parts):
    """Concatenate layers; part j+1 reads the output of part j as its h0.

    Lagged terms of a part that would reach before its own h0 multiply
    zeros in the standalone network, so they are dropped.
    """
    parts = list(parts)
    if not parts:
        raise DomainError("nothing to compose")
    n = parts[0].n
    if any(p.n != n for p in parts):
        raise DimensionError("all parts must have the same width")
    if len({p.eta for p in parts}) > 1:
        raise DomainError("parts use different leaks")
    L = sum(p.L for p in parts)
    K = max(p.K for p in parts)
    fa = np.zeros((L, K, 2, n, n))
    fb = np.zeros((L, K, 2, n, n))
    theta = np.zeros((L, K, 2, 4 * n, n))
    bias = np.zeros((L, 2, n))
    start = 0
    capped = True
    for p in parts:
        for l in range(p.L):
            kmax = min(p.K, l + 1)
            fa[start + l, :kmax] = p.spec.fixed_A[l, :kmax]
            fb[start + l, :kmax] = p.spec.fixed_B[l, :kmax]
            theta[start + l, :kmax] = p.theta[l, :kmax]
        bias[start:start + p.L] = p.bias
        capped = capped and p.capped
        start += p.L
    spec = NetworkSpec(L, n, K, parts[0].eta, fa, fb, parts[-1].spec.truncation,
                       strict=all(p.spec.strict for p in parts))
    scale = float(np.prod([p.meta.get("output_scale", 1.0) for p in parts]))
    return ParamSet(spec, theta, bias, capped=capped, meta={"output_scale": scale})


def depth_width(C, k, n, m, g_c1, g_ck, r, eps):
    """Depth L0 and width W0 of the smooth-outer-function approximant.

    C is the unspecified constant C(k, n, r) and is supplied by the caller.
    Returns natural values (W0 may be huge, so log10 W0 is also given).
    """
    if min(C, k, n, m, g_c1, g_ck, r, eps) <= 0:
        raise DomainError("all inputs must be positive")
    ratio = 4.0 ** (k + 1) * g_ck / eps
    L0 = C * (math.log(4.0 * g_c1 / (r * eps)) + math.log(ratio) + 1.0)
    log10_W0 = (math.log10(C * m * n) + (n / k) * math.log10(ratio)
                + math.log10(math.log(ratio) + 1.0))
    W0 = 10.0 ** log10_W0 if log10_W0 < 300 else math.inf
    return {"L0": L0, "W0": W0, "log10_W0": log10_W0}
