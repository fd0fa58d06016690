"""Random instances and slow reference implementations shared by the tests."""
import numpy as np

from ornn.core import NetworkSpec, ParamSet


def random_operator(rng, n, norm=1.0, symmetric=False):
    X = rng.standard_normal((n, n))
    if symmetric:
        X = 0.5 * (X + X.T)
    return norm * X / np.linalg.norm(X, 2)


def random_params(rng, L, n, K=1, eta=0.0, scale=0.5, density=1.0, fixed=True, truncation=None):
    """Capped random network; fixed operators have norm <= 1."""
    fa = np.zeros((L, K, 2, n, n))
    fb = np.zeros((L, K, 2, n, n))
    if fixed:
        for idx in np.ndindex(L, K, 2):
            fa[idx] = random_operator(rng, n, rng.uniform(0, 1))
            fb[idx] = random_operator(rng, n, rng.uniform(0, 1))
    spec = NetworkSpec(L, n, K, eta, fa, fb, truncation)
    theta = rng.standard_normal((L, K, 2, 4 * n, n))
    theta *= (rng.random((L, K, 2, 4 * n, 1)) < density)
    theta *= scale / np.maximum(1.0, np.linalg.norm(theta, axis=-1, keepdims=True))
    bias = rng.standard_normal((L, 2, n))
    bias *= scale / np.maximum(1.0, np.linalg.norm(bias, axis=-1, keepdims=True))
    return ParamSet(spec, theta, bias)


def dense_weights_loop(params):
    """Assemble A, B from slots with explicit loops over rank-one pairs."""
    L, K, n = params.L, params.K, params.n
    A = params.spec.fixed_A.copy()
    B = params.spec.fixed_B.copy()
    for l, k, i in np.ndindex(L, K, 2):
        for p in range(n):
            A[l, k, i] += np.outer(params.theta[l, k, i, 2 * p], params.theta[l, k, i, 2 * p + 1])
            B[l, k, i] += np.outer(params.theta[l, k, i, 2 * n + 2 * p], params.theta[l, k, i, 2 * n + 2 * p + 1])
    return A, B


def forward_loop(params, lam, h0):
    """Layer recursion written out directly; returns all states."""
    A, B = dense_weights_loop(params)
    eta = params.eta
    hs = [np.asarray(h0, dtype=float)]
    for l in range(params.L):
        p0 = params.bias[l, 0].copy()
        p1 = params.bias[l, 1].copy()
        for k in range(1, params.K + 1):
            if l + 1 - k < 0:
                continue
            h = hs[l + 1 - k]
            p0 += A[l, k - 1, 0] @ h + B[l, k - 1, 0] @ (lam @ h)
            p1 += A[l, k - 1, 1] @ h + B[l, k - 1, 1] @ (lam @ h)
        hs.append(p0 + np.where(p1 > 0, p1, eta * p1))
    return hs
