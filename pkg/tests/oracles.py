"""Independent brute-force oracles shared by the test modules.

Nothing here calls the closed forms under test: inner maximisations over u
use a dense grid refined by golden-section search, written from the
definitions.
"""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import minimize

from dromest.losses import LossModel

_GOLD = (math.sqrt(5.0) - 1.0) / 2.0


def conjugate_brute(loss: LossModel, u):
    """Convex conjugate of the Huber or squared loss."""
    if loss.kind == "squared":
        return u * u / 4.0
    return np.where(np.abs(u) <= loss.delta, 0.5 * u * u, np.inf)


def inner_sup_brute(r, s, loss: LossModel, grid: int = 201) -> np.ndarray:
    """``sup_u u r + u^2 s - L*(u)`` elementwise (``s`` broadcasts against ``r``)."""
    r, s = np.broadcast_arrays(np.asarray(r, dtype=float), np.asarray(s, dtype=float))
    shape = r.shape
    r, s = r.ravel(), s.ravel()
    if loss.kind == "huber":
        half = np.full_like(r, loss.delta)
    else:
        half = 4.0 * (np.abs(r) + 1.0) / np.maximum(1.0 - 4.0 * s, 1e-3)

    def f(u):
        return u * r + u * u * s - conjugate_brute(loss, u)

    us = half[:, None] * np.linspace(-1.0, 1.0, grid)[None, :]
    vals = us * r[:, None] + us * us * s[:, None] - conjugate_brute(loss, us)
    k = np.argmax(vals, axis=1)
    rows = np.arange(r.size)
    a = us[rows, np.maximum(k - 1, 0)]
    b = us[rows, np.minimum(k + 1, grid - 1)]
    best = vals[rows, k]
    for _ in range(48):
        c = b - _GOLD * (b - a)
        d = a + _GOLD * (b - a)
        left = f(c) > f(d)
        b = np.where(left, d, b)
        a = np.where(left, a, c)
    return np.maximum(best, f(0.5 * (a + b))).reshape(shape)


def dual_value(theta, lam, A, y, eps, loss) -> float:
    """``lam eps + mean_i sup_u [u r_i + u^2 ||theta||^2/(4 lam) - L*(u)]``."""
    s = float(theta @ theta) / (4.0 * lam)
    return lam * eps + float(np.mean(inner_sup_brute(y - A @ theta, s, loss)))


def _smoothness(loss: LossModel) -> float:
    return 2.0 if loss.kind == "squared" else 1.0


def _box(d, radius, points):
    axis = np.linspace(-radius / math.sqrt(d), radius / math.sqrt(d), points)
    mesh = np.stack(np.meshgrid(*([axis] * d), indexing="ij"), -1).reshape(-1, d)
    return mesh[np.linalg.norm(mesh, axis=1) <= radius]


def _simplex(G, x0, step: float, restarts: int = 6):
    """Nelder-Mead from a fixed-size simplex, restarted until it stops improving."""
    opts = {"xatol": 1e-8, "fatol": 1e-12, "maxiter": 20000, "maxfev": 20000}
    best, x = math.inf, np.asarray(x0, dtype=float)
    for _ in range(restarts):
        opts["initial_simplex"] = np.vstack([x, x + step * np.eye(x.size)])
        res = minimize(G, x, method="Nelder-Mead", options=opts)
        improved = best - float(res.fun) > 1e-12
        if float(res.fun) < best:
            best, x = float(res.fun), np.asarray(res.x)
        if not improved:
            break
    return best, x


def w2_oracle(A, y, eps, R, loss, points: int = 7, lam_points: int = 60):
    """Grid search over ``(theta, lambda)``, then a simplex refinement.

    ``lambda`` is parametrised as ``floor(theta) + t^2`` so that the
    constraint ``lambda >= M R sqrt(d) ||theta|| / 2`` holds everywhere.
    Returns ``(value, theta, lambda)``.
    """
    n, d = A.shape
    M = _smoothness(loss)
    radius = R * math.sqrt(d) * (1 - 1e-9)
    floor = lambda th: M * R * math.sqrt(d) * float(np.linalg.norm(th)) / 2.0  # noqa: E731

    thetas = _box(d, radius, points)
    offsets = np.geomspace(1e-6, 1e3, lam_points) / math.sqrt(eps)
    nt = np.linalg.norm(thetas, axis=1)
    lam = M * R * math.sqrt(d) * nt[:, None] / 2.0 + offsets[None, :]  # (T, K)
    res = y[None, :] - thetas @ A.T  # (T, n)
    s = (nt * nt)[:, None] / (4.0 * lam)  # (T, K)
    vals = inner_sup_brute(res[:, None, :], s[:, :, None], loss).mean(axis=2) + eps * lam
    i, j = np.unravel_index(int(np.argmin(vals)), vals.shape)

    def G(x):
        th = x[:d]
        if np.linalg.norm(th) > radius:
            return 1e6 * (1.0 + np.linalg.norm(th) - radius)
        return dual_value(th, floor(th) + x[d] ** 2, A, y, eps, loss)

    val, x = _simplex(G, np.append(thetas[i], math.sqrt(offsets[j])), step=0.1)
    return val, x[:d], floor(x[:d]) + x[d] ** 2


def dre_oracle(A, y, lam, R, loss, points: int = 7):
    """Grid search over ``theta`` at fixed ``lam``, then a simplex refinement."""
    d = A.shape[1]
    radius = R * math.sqrt(d) * (1 - 1e-9)
    thetas = _box(d, radius, points)
    res = y[None, :] - thetas @ A.T
    s = np.sum(thetas * thetas, axis=1)[:, None] / (4.0 * lam)
    vals = inner_sup_brute(res, s, loss).mean(axis=1)

    def G(th):
        if np.linalg.norm(th) > radius:
            return 1e6 * (1.0 + np.linalg.norm(th) - radius)
        return dual_value(th, lam, A, y, 0.0, loss)

    return _simplex(G, thetas[int(np.argmin(vals))], step=0.1)


def tiny_instance(seed: int, n: int = 5, d: int = 3):
    rng = np.random.default_rng(seed)
    A = rng.standard_normal((n, d)) / math.sqrt(d)
    theta0 = rng.standard_normal(d)
    y = A @ theta0 + rng.standard_normal(n)
    return A, y, theta0
