"""Operator recurrent networks: parameters, forward maps, structural rewrites.

A layer of the general network reads

    h_l = b0 + sum_k (A0_k h_{l-k} + B0_k Lam h_{l-k})
             + phi[b1 + sum_k (A1_k h_{l-k} + B1_k Lam h_{l-k})]

with h_{-k} = 0.  Each weight is ``fixed + sum_p u_p v_p^T`` where the
rank-one factors live in 4n slots per (layer, lag, branch): slots 1..2n hold
the n pairs of the A weight and slots 2n+1..4n the n pairs of the B weight.
Biases are the p = 0 slots and exist only for lag 1.

Operators are plain float64 ndarrays; ``check_operator`` validates them.
Indices exposed to users are 1-based (layer, lag, slot) as in the math; the
arrays are 0-based.
"""
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import DimensionError, DomainError, NumericalError, ParamIndexError
from . import io as _io

NORM_SLACK = 1e-12


def check_operator(a, n=None):
    a = np.asarray(a, dtype=np.float64)
    if a.ndim != 2:
        raise DimensionError("operator must be 2-D, got shape %s" % (a.shape,))
    if n is not None and a.shape != (n, n):
        raise DimensionError("expected %dx%d operator, got %s" % (n, n, a.shape))
    if not np.all(np.isfinite(a)):
        raise NumericalError("operator has non-finite entries")
    return a


def operator_norm(a):
    return float(np.linalg.norm(np.asarray(a, dtype=np.float64), 2))


def assemble_weight(fixed, pairs):
    """fixed + sum of outer products u v^T."""
    fixed = check_operator(fixed)
    rows, cols = fixed.shape
    out = fixed.copy()
    for u, v in pairs:
        u = np.asarray(u, dtype=np.float64)
        v = np.asarray(v, dtype=np.float64)
        if u.shape != (rows,) or v.shape != (cols,):
            raise DimensionError("factor shapes %s, %s do not match %s" % (u.shape, v.shape, fixed.shape))
        out += np.outer(u, v)
    return out


def leaky_relu(x, eta=0.0):
    x = np.asarray(x, dtype=np.float64)
    return np.maximum(x, eta * x)


def _fixed_array(fixed, L, K, n, name):
    arr = np.zeros((L, K, 2, n, n))
    if fixed is None:
        return arr
    if isinstance(fixed, dict):
        for key, val in fixed.items():
            l, k, i = key
            if not (1 <= l <= L and 1 <= k <= K and i in (0, 1)):
                raise ParamIndexError("%s index %s outside network" % (name, key))
            if isinstance(val, str):
                val = {"identity": np.eye(n), "zero": np.zeros((n, n))}[val]
            arr[l - 1, k - 1, i] = check_operator(val, n)
        return arr
    fixed = np.asarray(fixed, dtype=np.float64)
    if fixed.shape != arr.shape:
        raise DimensionError("%s must have shape %s" % (name, arr.shape))
    return fixed.copy()


class NetworkSpec:
    """Architecture: depth L, width n, lags K, leak eta, fixed operators.

    ``strict`` enforces the cap ||fixed|| <= 1 on every fixed operator.  The
    widening and unrolling constructions switch it off because their block
    companion operators are allowed to exceed it.
    """

    def __init__(self, L, n, K=1, eta=0.0, fixed_A=None, fixed_B=None, truncation=None, strict=True):
        if L < 1 or n < 1 or K < 1:
            raise DomainError("L, n, K must be positive")
        if not 0.0 <= eta <= 1.0:
            raise DomainError("leak eta must lie in [0, 1]")
        if truncation is not None and truncation < 0:
            raise DomainError("truncation bound must be nonnegative")
        self.L, self.n, self.K = int(L), int(n), int(K)
        self.eta = float(eta)
        self.truncation = truncation
        self.strict = strict
        self.fixed_A = _fixed_array(fixed_A, self.L, self.K, self.n, "fixed_A")
        self.fixed_B = _fixed_array(fixed_B, self.L, self.K, self.n, "fixed_B")
        if strict:
            for name, arr in (("fixed_A", self.fixed_A), ("fixed_B", self.fixed_B)):
                norms = np.linalg.norm(arr, 2, axis=(-2, -1))
                if np.any(norms > 1 + NORM_SLACK):
                    raise DomainError("%s has an operator of norm %.6g > 1" % (name, norms.max()))

    def replace(self, **kw):
        args = dict(L=self.L, n=self.n, K=self.K, eta=self.eta, fixed_A=self.fixed_A,
                    fixed_B=self.fixed_B, truncation=self.truncation, strict=self.strict)
        args.update(kw)
        return NetworkSpec(**args)


class DenseNet:
    """Network held as assembled weights.

    This is the unconstrained-weights representation: the arrays carry no
    slot budget or norm cap.  ``act_scale`` multiplies the activation branch
    of each layer (used by the leaky rewrite).
    """

    unconstrained = True

    def __init__(self, A, B, b, eta=0.0, act_scale=None, truncation=None):
        self.A = np.asarray(A, dtype=np.float64)
        self.B = np.asarray(B, dtype=np.float64)
        self.b = np.asarray(b, dtype=np.float64)
        L, K, two, n, n2 = self.A.shape
        if two != 2 or n != n2 or self.B.shape != self.A.shape or self.b.shape != (L, 2, n):
            raise DimensionError("inconsistent dense weight shapes")
        self.L, self.K, self.n = L, K, n
        self.eta = float(eta)
        self.act_scale = np.ones(L) if act_scale is None else np.asarray(act_scale, dtype=np.float64)
        self.truncation = truncation

    def dense(self):
        return self


class ParamSet:
    """Factored parameters theta over P1 ∪ P2 together with their spec.

    theta has shape (L, K, 2, 4n, n): slot axis 0-based, so array slot q is
    the math slot q+1.  bias has shape (L, 2, n) (lag 1 only).  Instances are
    treated as immutable; the assembled weights are cached on first use.
    """

    def __init__(self, spec, theta=None, bias=None, shared_layers=None, capped=True, meta=None):
        L, K, n = spec.L, spec.K, spec.n
        self.spec = spec
        self.theta = np.zeros((L, K, 2, 4 * n, n)) if theta is None else np.array(theta, dtype=np.float64)
        self.bias = np.zeros((L, 2, n)) if bias is None else np.array(bias, dtype=np.float64)
        if self.theta.shape != (L, K, 2, 4 * n, n):
            raise DimensionError("theta must have shape %s" % ((L, K, 2, 4 * n, n),))
        if self.bias.shape != (L, 2, n):
            raise DimensionError("bias must have shape %s" % ((L, 2, n),))
        if not (np.all(np.isfinite(self.theta)) and np.all(np.isfinite(self.bias))):
            raise NumericalError("non-finite parameter vector")
        self.capped = capped
        if capped:
            worst = max(np.linalg.norm(self.theta, axis=-1).max(initial=0.0),
                        np.linalg.norm(self.bias, axis=-1).max(initial=0.0))
            if worst > 1 + NORM_SLACK:
                raise DomainError("parameter vector of norm %.6g exceeds the cap 1" % worst)
        self.shared_layers = [list(g) for g in (shared_layers or [])]
        for group in self.shared_layers:
            first = group[0] - 1
            for l in group[1:]:
                if not (np.array_equal(self.theta[l - 1], self.theta[first])
                        and np.array_equal(self.bias[l - 1], self.bias[first])):
                    raise DomainError("tied layers %s hold different vectors" % group)
        self.meta = dict(meta or {})
        self._dense = None

    @property
    def L(self):
        return self.spec.L

    @property
    def K(self):
        return self.spec.K

    @property
    def n(self):
        return self.spec.n

    @property
    def eta(self):
        return self.spec.eta

    def replace(self, theta=None, bias=None, spec=None, capped=None):
        return ParamSet(spec or self.spec,
                        self.theta if theta is None else theta,
                        self.bias if bias is None else bias,
                        self.shared_layers,
                        self.capped if capped is None else capped,
                        self.meta)

    def trained_weights(self):
        """Low-rank parts sum_p u_p v_p^T as arrays (L, K, 2, n, n)."""
        n = self.n
        t = self.theta
        A = np.einsum("lkipa,lkipb->lkiab", t[:, :, :, 0:2 * n:2], t[:, :, :, 1:2 * n:2])
        B = np.einsum("lkipa,lkipb->lkiab", t[:, :, :, 2 * n::2], t[:, :, :, 2 * n + 1::2])
        return A, B

    def dense(self):
        if self._dense is None:
            A, B = self.trained_weights()
            self._dense = DenseNet(self.spec.fixed_A + A, self.spec.fixed_B + B, self.bias,
                                   eta=self.spec.eta, truncation=self.spec.truncation)
        return self._dense

    # -- indexing -----------------------------------------------------
    def check_index(self, index):
        l, k, i, p = index
        ok = (1 <= l <= self.L and 1 <= k <= self.K and i in (0, 1) and 0 <= p <= 4 * self.n
              and (p != 0 or k == 1))
        if not ok:
            raise ParamIndexError("index %s is not in P1 ∪ P2" % (tuple(index),))

    def get(self, index):
        self.check_index(index)
        l, k, i, p = index
        if p == 0:
            return self.bias[l - 1, i].copy()
        return self.theta[l - 1, k - 1, i, p - 1].copy()

    def with_vector(self, index, value):
        self.check_index(index)
        l, k, i, p = index
        theta, bias = self.theta.copy(), self.bias.copy()
        if p == 0:
            bias[l - 1, i] = value
        else:
            theta[l - 1, k - 1, i, p - 1] = value
        return self.replace(theta=theta, bias=bias)

    def indices(self):
        """Canonical order: P1 by (l, k, i, p), then P2."""
        n = self.n
        out = [(l, k, i, p) for l in range(1, self.L + 1) for k in range(1, self.K + 1)
               for i in (0, 1) for p in range(1, 4 * n + 1)]
        out += [(l, 1, i, 0) for l in range(1, self.L + 1) for i in (0, 1)]
        return out

    def vectors(self):
        return np.concatenate([self.theta.reshape(-1, self.n), self.bias.reshape(-1, self.n)])

    @classmethod
    def from_vectors(cls, spec, vecs, **kw):
        n1 = spec.L * spec.K * 2 * 4 * spec.n
        vecs = np.asarray(vecs, dtype=np.float64)
        if vecs.shape != (n1 + 2 * spec.L, spec.n):
            raise DimensionError("vector blob has shape %s" % (vecs.shape,))
        theta = vecs[:n1].reshape(spec.L, spec.K, 2, 4 * spec.n, spec.n)
        bias = vecs[n1:].reshape(spec.L, 2, spec.n)
        return cls(spec, theta, bias, **kw)

    @classmethod
    def from_dense(cls, spec, A, B, b, **kw):
        """Factor dense trained weights into slot pairs via the SVD.

        Pair p gets (sqrt(s_p) u_p, sqrt(s_p) v_p); factor norms can exceed 1,
        so the result is uncapped unless the caller asks otherwise.
        """
        L, K, n = spec.L, spec.K, spec.n
        theta = np.zeros((L, K, 2, 4 * n, n))
        for l in range(L):
            for k in range(K):
                for i in range(2):
                    for off, W in ((0, A[l, k, i]), (2 * n, B[l, k, i])):
                        if not np.any(W):
                            continue
                        try:
                            U, s, Vt = np.linalg.svd(W)
                        except np.linalg.LinAlgError as exc:
                            raise NumericalError("SVD failed: %s" % exc)
                        r = np.sqrt(s)
                        theta[l, k, i, off:off + 2 * n:2] = (U * r).T
                        theta[l, k, i, off + 1:off + 2 * n:2] = Vt * r[:, None]
        kw.setdefault("capped", False)
        return cls(spec, theta, b, **kw)

    # -- manifest -----------------------------------------------------
    def save(self, directory, name="params"):
        d = Path(directory)
        d.mkdir(parents=True, exist_ok=True)
        blobs = {}
        fixed = {}
        for tag, arr in (("A", self.spec.fixed_A), ("B", self.spec.fixed_B)):
            for l in range(self.L):
                for k in range(self.K):
                    for i in range(2):
                        W = arr[l, k, i]
                        if not np.any(W):
                            continue
                        key = "%s/%d/%d/%d" % (tag, l + 1, k + 1, i)
                        if np.array_equal(W, np.eye(self.n)):
                            fixed[key] = "identity"
                            continue
                        raw = _io.encode_opmat(W)
                        digest = hashlib.sha256(raw).hexdigest()[:16]
                        fname = "%s_fixed_%s.opmat" % (name, digest)
                        if fname not in blobs:
                            blobs[fname] = raw
                        fixed[key] = fname
        for fname, raw in sorted(blobs.items()):
            (d / fname).write_bytes(raw)
        vec_name = "%s_vectors.opmat" % name
        _io.write_opmat(d / vec_name, self.vectors())
        manifest = {
            "L": self.L, "K": self.K, "n": self.n, "eta": self.eta,
            "truncation": self.spec.truncation, "strict": self.spec.strict,
            "capped": self.capped, "shared_layers": self.shared_layers,
            "fixed_ops": fixed, "vectors": vec_name, "meta": self.meta,
        }
        path = d / ("%s.json" % name)
        _io.dump_json(path, manifest)
        return path

    @classmethod
    def load(cls, path):
        path = Path(path)
        m = json.loads(path.read_text(encoding="utf-8"))
        L, K, n = m["L"], m["K"], m["n"]
        fa, fb = np.zeros((L, K, 2, n, n)), np.zeros((L, K, 2, n, n))
        for key, val in m["fixed_ops"].items():
            tag, l, k, i = key.split("/")
            W = np.eye(n) if val == "identity" else (np.zeros((n, n)) if val == "zero"
                                                      else _io.read_opmat(path.parent / val))
            (fa if tag == "A" else fb)[int(l) - 1, int(k) - 1, int(i)] = W
        spec = NetworkSpec(L, n, K, m["eta"], fa, fb, m.get("truncation"), m.get("strict", True))
        vecs = _io.read_opmat(path.parent / m["vectors"])
        return cls.from_vectors(spec, vecs, shared_layers=m.get("shared_layers"),
                                capped=m.get("capped", True), meta=m.get("meta"))


# -- forward maps ------------------------------------------------------------

@dataclass
class Trace:
    h: list
    pre: list = field(default_factory=list)
    lam_h: list = field(default_factory=list)

    @property
    def patterns(self):
        """Sign pattern of each activation argument (0 counts as negative)."""
        return [p > 0 for p in self.pre]


def _batch(lam, h0, n):
    lam = np.asarray(lam, dtype=np.float64)
    h0 = np.asarray(h0, dtype=np.float64)
    single = lam.ndim == 2
    if single:
        lam = lam[None]
    if lam.shape[1:] != (n, n):
        raise DimensionError("Lambda must be %dx%d, got %s" % (n, n, lam.shape[1:]))
    if h0.ndim == 1:
        h0 = np.broadcast_to(h0, (lam.shape[0], h0.shape[0]))
    if h0.shape != (lam.shape[0], n):
        raise DimensionError("h0 must have length %d" % n)
    if not np.all(np.isfinite(lam)):
        raise NumericalError("Lambda has non-finite entries")
    return lam, np.array(h0), single


def _run(net, lam, h0):
    d = net.dense()
    lam, h, single = _batch(lam, h0, d.n)
    tr = Trace(h=[h], lam_h=[np.einsum("sij,sj->si", lam, h)])
    for l in range(d.L):
        p0 = np.broadcast_to(d.b[l, 0], h.shape).copy()
        p1 = np.broadcast_to(d.b[l, 1], h.shape).copy()
        for k in range(1, d.K + 1):
            j = l + 1 - k
            if j < 0:
                break
            hk, lk = tr.h[j], tr.lam_h[j]
            p0 += hk @ d.A[l, k - 1, 0].T + lk @ d.B[l, k - 1, 0].T
            p1 += hk @ d.A[l, k - 1, 1].T + lk @ d.B[l, k - 1, 1].T
        h = p0 + d.act_scale[l] * leaky_relu(p1, d.eta)
        if not np.all(np.isfinite(h)):
            raise NumericalError("non-finite activation at layer %d" % (l + 1))
        tr.pre.append(p1)
        tr.h.append(h)
        tr.lam_h.append(np.einsum("sij,sj->si", lam, h))
    return tr, single


def _unbatch(tr, single):
    if single:
        tr = Trace(h=[x[0] for x in tr.h], pre=[x[0] for x in tr.pre], lam_h=[x[0] for x in tr.lam_h])
    return tr.h[-1], tr


def forward_general(params, lam, h0):
    """Evaluate the network; batched when ``lam`` has shape (s, n, n)."""
    tr, single = _run(params, lam, h0)
    return _unbatch(tr, single)


def forward_basic(params, lam, h0):
    if params.dense().K != 1:
        raise DimensionError("forward_basic needs K = 1; use forward_general")
    return forward_general(params, lam, h0)


def forward(params, lam, h0):
    """Output only, with the truncation G applied when the spec sets one."""
    out, _ = forward_general(params, lam, h0)
    m = params.dense().truncation
    return out if m is None else clamp_relu(out, m)


def clamp_relu(x, m):
    """G(x) = -m + relu(m + (m - relu(m - x))), which equals clip(x, -m, m)."""
    x = np.asarray(x, dtype=np.float64)
    inner = m - np.maximum(m - x, 0.0)
    return -m + np.maximum(m + inner, 0.0)


def truncate_forward(params, lam, h0, m):
    if m < 0:
        raise DomainError("truncation bound must be nonnegative")
    out, _ = forward_general(params, lam, h0)
    return clamp_relu(out, m)


# -- reverse mode ------------------------------------------------------------

def backward_dense(net, tr, lam, g_out):
    """Vector-Jacobian product w.r.t. the dense weights.

    ``tr`` must be a batched trace (from ``_run``); ``g_out`` has shape (s, n).
    Returns (dA, dB, db) summed over the batch.
    """
    d = net.dense()
    lam = np.asarray(lam, dtype=np.float64)
    if lam.ndim == 2:
        lam = lam[None]
    dA, dB, db = np.zeros_like(d.A), np.zeros_like(d.B), np.zeros_like(d.b)
    gh = [np.zeros_like(x) for x in tr.h]
    gh[-1] = gh[-1] + g_out
    for l in range(d.L - 1, -1, -1):
        g = gh[l + 1]
        slope = np.where(tr.pre[l] > 0, 1.0, d.eta)
        gpre = (g, g * d.act_scale[l] * slope)
        for i in range(2):
            db[l, i] += gpre[i].sum(axis=0)
        for k in range(1, d.K + 1):
            j = l + 1 - k
            if j < 0:
                break
            for i in range(2):
                gp = gpre[i]
                dA[l, k - 1, i] += gp.T @ tr.h[j]
                dB[l, k - 1, i] += gp.T @ tr.lam_h[j]
                back_b = gp @ d.B[l, k - 1, i]
                gh[j] += gp @ d.A[l, k - 1, i] + np.einsum("si,sij->sj", back_b, lam)
    return dA, dB, db


def factor_grads(params, dA, dB):
    """Chain dense weight gradients to the slot factors."""
    n = params.n
    t = params.theta
    g = np.zeros_like(t)
    for off, dW in ((0, dA), (2 * n, dB)):
        left = t[:, :, :, off:off + 2 * n:2]
        right = t[:, :, :, off + 1:off + 2 * n:2]
        g[:, :, :, off:off + 2 * n:2] = np.einsum("lkiab,lkipb->lkipa", dW, right)
        g[:, :, :, off + 1:off + 2 * n:2] = np.einsum("lkiab,lkipa->lkipb", dW, left)
    return g


def param_grad(params, lam, h0, g_out):
    """Gradient of <g_out, f_theta(Lam)> w.r.t. (theta, bias), summed over a batch."""
    tr, single = _run(params, lam, h0)
    g_out = np.asarray(g_out, dtype=np.float64)
    if single:
        g_out = g_out[None]
    dA, dB, db = backward_dense(params, tr, lam, g_out)
    return factor_grads(params, dA, dB), db


# -- structural rewrites ------------------------------------------------------

def lift_input(h0, K):
    h0 = np.asarray(h0, dtype=np.float64)
    return np.concatenate([h0, np.zeros(h0.shape[-1] * (K - 1))])


def block_lambda(lam, K):
    return np.kron(np.eye(K), np.asarray(lam, dtype=np.float64))


def widen_general_to_basic(params):
    """Basic network of width nK carrying (h_l, ..., h_{l-K+1}); returns (net, Pi_n)."""
    L, K, n = params.L, params.K, params.n
    if K == 1:
        return params, np.eye(n)
    N = n * K
    fa = np.zeros((L, 1, 2, N, N))
    fb = np.zeros((L, 1, 2, N, N))
    theta = np.zeros((L, 1, 2, 4 * N, N))
    bias = np.zeros((L, 2, N))
    bias[:, :, :n] = params.bias
    for k in range(K):
        cols = slice(k * n, (k + 1) * n)
        fa[:, 0, :, :n, cols] = params.spec.fixed_A[:, k]
        fb[:, 0, :, :n, cols] = params.spec.fixed_B[:, k]
        for off_src, off_dst in ((0, 0), (2 * n, 2 * N)):
            src = params.theta[:, k, :, off_src:off_src + 2 * n]
            dst = slice(off_dst + 2 * n * k, off_dst + 2 * n * (k + 1))
            block = np.zeros((L, 2, 2 * n, N))
            block[:, :, 0::2, :n] = src[:, :, 0::2]
            block[:, :, 1::2, cols] = src[:, :, 1::2]
            theta[:, 0, :, dst] = block
    for k in range(K - 1):
        fa[:, 0, 0, (k + 1) * n:(k + 2) * n, k * n:(k + 1) * n] = np.eye(n)
    spec = NetworkSpec(L, N, 1, params.eta, fa, fb, params.spec.truncation, strict=False)
    wide = ParamSet(spec, theta, bias, params.shared_layers, capped=params.capped, meta=params.meta)
    proj = np.zeros((n, N))
    proj[:, :n] = np.eye(n)
    return wide, proj


def rewrite_leaky_to_standard(params, eta):
    """Fold the linear part of a leaky activation into the affine branch.

    phi_eta(y) = eta*y + (1-eta)*relu(y), so the result has eta = 0 and an
    activation branch scaled by (1-eta).  Returned as a DenseNet.
    """
    if not 0.0 < eta < 1.0:
        raise DomainError("leak must satisfy 0 < eta < 1, got %r" % eta)
    d = params.dense()
    A = d.A.copy()
    B = d.B.copy()
    b = d.b.copy()
    A[:, :, 0] += eta * d.A[:, :, 1]
    B[:, :, 0] += eta * d.B[:, :, 1]
    b[:, 0] += eta * d.b[:, 1]
    return DenseNet(A, B, b, eta=0.0, act_scale=d.act_scale * (1.0 - eta), truncation=d.truncation)


def embed_standard_nn(std_layers, lam):
    """Standard net h_l = A0 h + relu(b + A1 h) as an ORNN on diag(lam) with h0 = 1."""
    lam = np.asarray(lam, dtype=np.float64)
    n = lam.shape[0]
    L = len(std_layers)
    A = np.zeros((L, 1, 2, n, n))
    B = np.zeros((L, 1, 2, n, n))
    b = np.zeros((L, 2, n))
    for l, (a0, a1, bl) in enumerate(std_layers):
        a0, a1, bl = np.asarray(a0, float), np.asarray(a1, float), np.asarray(bl, float)
        if a0.shape != (n, n) or a1.shape != (n, n) or bl.shape != (n,):
            raise DimensionError("standard layer %d is not square of width %d" % (l + 1, n))
        target = B if l == 0 else A
        target[l, 0, 0] = a0
        target[l, 0, 1] = a1
        b[l, 1] = bl
    params = ParamSet.from_dense(NetworkSpec(L, n), A, B, b)
    return params, np.diag(lam), np.ones(n)


# -- measurements -------------------------------------------------------------

def regularizer(params, layer=None, lag=None, branch=None):
    """R = 1/2 sum of ||theta_p|| over P1, optionally restricted to one layer/lag/branch."""
    t = params.theta
    sel = (slice(None) if layer is None else layer - 1,
           slice(None) if lag is None else lag - 1,
           slice(None) if branch is None else branch)
    return 0.5 * float(np.linalg.norm(t[sel], axis=-1).sum())


def schatten_seminorm(a, p):
    if p <= 0:
        raise DomainError("Schatten exponent must be positive")
    try:
        s = np.linalg.svd(check_operator(a), compute_uv=False)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("SVD did not converge: %s" % exc)
    return float(np.sum(s ** p) ** (1.0 / p))


def sparsity_count(params, tol=0.0):
    if tol < 0:
        raise DomainError("tol must be nonnegative")
    n1 = int(np.count_nonzero(np.linalg.norm(params.theta, axis=-1) > tol))
    n2 = int(np.count_nonzero(np.linalg.norm(params.bias, axis=-1) > tol))
    return n1 + n2, n1


def lipschitz_bound(params, index):
    """4^(L+1) ||partner|| e^R for P1 slots, 4^(L+1) e^R for biases (K = 1)."""
    if params.K != 1:
        raise DimensionError("the Lipschitz bound is stated for K = 1")
    params.check_index(index)
    l, k, i, p = index
    scale = 4.0 ** (params.L + 1) * np.exp(regularizer(params))
    if p == 0:
        return float(scale)
    partner = p + 1 if p % 2 == 1 else p - 1
    return float(scale * np.linalg.norm(params.theta[l - 1, k - 1, i, partner - 1]))
