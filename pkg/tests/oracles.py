"""Reference computations written independently of the package internals."""
from __future__ import annotations

import math

import numpy as np


def power_svd(a: np.ndarray, k: int, iters: int = 20000, tol: float = 1e-15):
    """Top-k singular triplets by power iteration on A A^T with deflation."""
    a = np.array(a, dtype=np.float64)
    m = a @ a.T
    rng = np.random.default_rng(12345)
    us, sigmas = [], []
    for _ in range(k):
        v = rng.standard_normal(m.shape[0])
        for u in us:
            v -= (u @ v) * u
        v /= np.linalg.norm(v)
        lam = 0.0
        for _ in range(iters):
            w = m @ v
            for u in us:
                w -= (u @ w) * u
            nw = np.linalg.norm(w)
            if nw == 0.0:
                break
            w /= nw
            new_lam = float(w @ m @ w)
            done = abs(new_lam - lam) <= tol * max(1.0, abs(new_lam)) and np.linalg.norm(w - v) < 1e-12
            v, lam = w, new_lam
            if done:
                break
        us.append(v)
        sigmas.append(math.sqrt(max(lam, 0.0)))
    return np.array(us).T, np.array(sigmas)


def sym2x2_eigenvalues(a: np.ndarray) -> tuple[float, float]:
    """Eigenvalues of A^T A for a 2x2 A from the characteristic polynomial."""
    s = a.T @ a
    tr = s[0, 0] + s[1, 1]
    det = s[0, 0] * s[1, 1] - s[0, 1] * s[1, 0]
    disc = math.sqrt(max(tr * tr / 4 - det, 0.0))
    return tr / 2 + disc, tr / 2 - disc


def random_search_best(g: np.ndarray, k: int, c: float, n: int, rng) -> float:
    """Largest ||W^T G||_F^2 over ``n`` random W with ||W||_F = c."""
    best = 0.0
    rows = g.shape[0]
    batch = 1000
    for start in range(0, n, batch):
        m = min(batch, n - start)
        w = rng.standard_normal((m, rows, k))
        w *= c / np.linalg.norm(w.reshape(m, -1), axis=1)[:, None, None]
        p = np.einsum("mrk,rc->mkc", w, g)
        best = max(best, float(np.max(np.sum(p * p, axis=(1, 2)))))
    return best


def conv_loop(x: np.ndarray, w: np.ndarray, stride: int = 1, pad: int = 0) -> np.ndarray:
    """Naive cross-correlation, NCHW input and OIHW filters."""
    n, c, h, wd = x.shape
    o, _, kh, kw = w.shape
    xp = np.zeros((n, c, h + 2 * pad, wd + 2 * pad))
    xp[:, :, pad:pad + h, pad:pad + wd] = x
    ho = (h + 2 * pad - kh) // stride + 1
    wo = (wd + 2 * pad - kw) // stride + 1
    out = np.zeros((n, o, ho, wo))
    for b in range(n):
        for f in range(o):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[b, :, i * stride:i * stride + kh, j * stride:j * stride + kw]
                    out[b, f, i, j] = np.sum(patch * w[f])
    return out


def new_filter_grad_loop(w_out: np.ndarray, g: np.ndarray, in_kernel) -> np.ndarray:
    """grad[k, c, a, b] = sum_{o,u,v} W_out[o, k, u, v] * G[o, c, u + a, v + b]."""
    o, k, ho, wo = w_out.shape
    c = g.shape[1]
    hi, wi = in_kernel
    out = np.zeros((k, c, hi, wi))
    for kk in range(k):
        for cc in range(c):
            for a in range(hi):
                for b in range(wi):
                    s = 0.0
                    for oo in range(o):
                        for u in range(ho):
                            for v in range(wo):
                                s += w_out[oo, kk, u, v] * g[oo, cc, u + a, v + b]
                    out[kk, cc, a, b] = s
    return out


def finite_difference(f, x: np.ndarray, h: float = 1e-5) -> np.ndarray:
    """Central differences of scalar ``f`` w.r.t. every entry of ``x`` (modified in place)."""
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        old = x[idx]
        x[idx] = old + h
        fp = f()
        x[idx] = old - h
        fm = f()
        x[idx] = old
        grad[idx] = (fp - fm) / (2 * h)
    return grad


def rel_err(a, b) -> float:
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    den = max(np.linalg.norm(a), np.linalg.norm(b), 1e-300)
    return float(np.linalg.norm(a - b) / den)


def mse(out, target) -> float:
    return float(np.mean((np.asarray(out) - np.asarray(target)) ** 2))
