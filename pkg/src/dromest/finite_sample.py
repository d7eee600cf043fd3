"""Finite-sample robust estimators on one dataset.

* ``fit_w1``: ``(1/n) sum L(y_i - theta'x_i) + eps * Lip(L) * ||theta||``.
* ``fit_w2_squared``: ``sqrt(mean squared residual) + sqrt(eps) ||theta||``.
* ``fit_w2_smooth``: the Wasserstein-2 worst-case risk through its dual,
  ``min_{theta, lambda in Lambda} lambda eps + (1/n) sum sup_u [u r_i + u^2 s - L*(u)]``
  with ``s = ||theta||^2 / (4 lambda)`` and ``lambda >= M R sqrt(d) ||theta|| / 2``.
* ``fit_dre``: the same inner problem at a fixed ``lambda``.

For the dual problems ``lambda`` is eliminated: writing ``lambda = kappa ||theta||``
turns the constraint into the fixed interval ``kappa >= M R sqrt(d) / 2``, so the
partial minimum ``G(theta) = min_kappa g`` has gradient ``grad_theta g`` at the
optimal ``kappa`` (Danskin). ``G`` is convex and is minimised by accelerated
projected gradient onto ``||theta|| <= R sqrt(d)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy.optimize import linprog
from scipy.sparse import eye as sparse_eye
from scipy.sparse import hstack as sparse_hstack

from . import losses
from .errors import ConcavityViolation, DivergedError, DomainError, NotSmooth
from .linesearch import Bracket, minimize_convex_1d
from .losses import LossModel


@dataclass
class Dataset:
    A: np.ndarray
    y: np.ndarray
    z: np.ndarray | None = None
    theta0: np.ndarray | None = None

    def __post_init__(self):
        self.A = np.asarray(self.A, dtype=float)
        self.y = np.asarray(self.y, dtype=float)
        if self.A.ndim != 2 or self.y.shape != (self.A.shape[0],):
            raise DomainError(f"shape mismatch: A {self.A.shape}, y {self.y.shape}")

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def d(self) -> int:
        return self.A.shape[1]


@dataclass
class FitResult:
    theta_hat: np.ndarray
    objective: float
    iterations: int
    converged: bool
    normalized_error: float | None = None
    history: list = field(default_factory=list, repr=False)
    extra: dict = field(default_factory=dict)


@dataclass(frozen=True)
class FitOptions:
    max_iter: int = 20_000
    tol: float = 1e-10
    method: str = "auto"  # "auto" | "subgradient" (fit_w1 only)
    power_iterations: int = 20


def normalized_error(theta_hat, theta0, d: int | None = None) -> float:
    theta_hat = np.asarray(theta_hat, dtype=float)
    theta0 = np.asarray(theta0, dtype=float)
    if theta_hat.shape != theta0.shape:
        raise DomainError("dimension mismatch between estimate and truth")
    d = theta0.size if d is None else d
    diff = theta_hat - theta0
    return float(diff @ diff) / d


def _finish(data: Dataset, theta, objective, iterations, converged, history, **extra) -> FitResult:
    if not math.isfinite(objective):
        raise DivergedError("non-finite objective")
    err = None if data.theta0 is None else normalized_error(theta, data.theta0, data.d)
    return FitResult(theta, float(objective), int(iterations), bool(converged), err, history, extra)


# -- inner maximisation -------------------------------------------------------------


def inner_sup(r, s: float, loss: LossModel):
    """``sup_u u r + u^2 s - L*(u)``; returns ``(value, u_star)`` (vectorised in r)."""
    r = np.asarray(r, dtype=float)
    M = loss.constants.smoothness_m
    if M is None:
        if s > 0:
            raise ConcavityViolation("the absolute loss has no smoothness constant; need s = 0")
        u = np.sign(r)
        return np.abs(r), u
    if not s < 1.0 / (2.0 * M):
        raise ConcavityViolation(f"s = {s} must be below 1/(2M) = {1.0 / (2.0 * M)}")
    if s < 0:
        raise DomainError("s must be nonnegative")
    if loss.kind == losses.SQUARED:
        u = 2.0 * r / (1.0 - 4.0 * s)
        return r * r / (1.0 - 4.0 * s), u
    d = loss.delta
    u = np.clip(r / (1.0 - 2.0 * s), -d, d)
    return r * u + u * u * (s - 0.5), u


# -- first-order machinery -----------------------------------------------------------


def spectral_norm(A: np.ndarray, iterations: int = 20, seed: int = 0) -> float:
    """Power-iteration estimate of ``||A||_2`` (deterministic start)."""
    v = np.random.default_rng(seed).standard_normal(A.shape[1])
    v /= np.linalg.norm(v)
    sigma = 0.0
    for _ in range(iterations):
        w = A.T @ (A @ v)
        nw = np.linalg.norm(w)
        if nw == 0:
            return 0.0
        v = w / nw
        sigma = math.sqrt(nw)
    return sigma


def _block_shrink(v: np.ndarray, amount: float) -> np.ndarray:
    nv = np.linalg.norm(v)
    if nv <= amount:
        return np.zeros_like(v)
    return v * (1.0 - amount / nv)


def _ball(radius: float):
    def proj(v, step):
        nv = np.linalg.norm(v)
        return v if nv <= radius else v * (radius / nv)

    return proj


def _accelerated(
    fg: Callable[[np.ndarray], tuple[float, np.ndarray]],
    f: Callable[[np.ndarray], float],
    prox: Callable[[np.ndarray, float], np.ndarray],
    h: Callable[[np.ndarray], float],
    x0: np.ndarray,
    L0: float,
    opts: FitOptions,
    keep: Callable[[np.ndarray], np.ndarray] | None = None,
):
    """Monotone FISTA with backtracking on ``f + h``; ``prox(v, step)`` is the prox of ``step*h``.

    ``keep`` maps extrapolated points back into the domain of ``f`` when ``f``
    is only defined on the feasible set.

    Returns ``(x, objective, iterations, converged, best-objective history)``.
    """
    x = x0.copy()
    fx = f(x) + h(x)
    y = x.copy()
    t = 1.0
    L = L0
    hist = [fx]
    stall = 0
    for k in range(1, opts.max_iter + 1):
        fy, gy = fg(y)
        while True:
            z = prox(y - gy / L, 1.0 / L)
            dz = z - y
            fz_smooth = f(z)
            if fz_smooth <= fy + gy @ dz + 0.5 * L * (dz @ dz) + 1e-15 * abs(fy):
                break
            L *= 2.0
            if L > 1e20:
                raise DivergedError("backtracking failed to find a step")
        fz = fz_smooth + h(z)
        if not math.isfinite(fz):
            raise DivergedError("non-finite objective")
        x_prev = x
        if fz <= fx:
            x, fx_new = z, fz
        else:
            fx_new = fx
        t_new = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
        y = x + (t / t_new) * (z - x) + ((t - 1.0) / t_new) * (x - x_prev)
        if keep is not None:
            y = keep(y)
        t = t_new
        rel = (fx - fx_new) / max(1.0, abs(fx_new))
        fx = fx_new
        hist.append(fx)
        gm = L * math.sqrt(dz @ dz)
        # restart momentum when the step goes uphill
        if fz > hist[-2]:
            t = 1.0
            y = x.copy()
        stall = stall + 1 if rel <= opts.tol else 0
        if gm <= opts.tol * 1e-2 * max(1.0, math.sqrt(x @ x)) or stall >= 50:
            return x, fx, k, True, hist
        L = max(L * 0.9, 1e-12)
    return x, fx, opts.max_iter, False, hist


def _lstsq(data: Dataset) -> np.ndarray:
    return np.linalg.lstsq(data.A, data.y, rcond=None)[0]


# -- Wasserstein-1 ---------------------------------------------------------------------


def _w1_objective(data: Dataset, loss: LossModel, weight: float, theta) -> float:
    r = data.y - data.A @ theta
    return float(np.mean(losses.eval_loss(loss, r))) + weight * float(np.linalg.norm(theta))


def _pdhg(data: Dataset, loss: LossModel, weight: float, opts: FitOptions):
    """Chambolle-Pock on ``F(A theta) + weight ||theta||``, ``F(v) = mean L(y - v)``."""
    A, y, n = data.A, data.y, data.n
    nrm = spectral_norm(A, opts.power_iterations) * 1.01
    # balance primal scale (~||theta||) against dual scale (~1/sqrt(n))
    ratio = math.sqrt(data.d * n) / max(1.0, math.sqrt(n))
    tau = 0.99 * ratio / nrm
    sigma = 0.99 / (ratio * nrm)
    theta = np.zeros(data.d)
    p = np.zeros(n)
    Atp = np.zeros(data.d)
    best = _w1_objective(data, loss, weight, theta)
    best_theta = theta.copy()
    hist = [best]
    stall = 0
    for k in range(1, opts.max_iter + 1):
        theta_new = _block_shrink(theta - tau * Atp, tau * weight)
        step = theta_new - theta
        w = p + sigma * (A @ (theta_new + step))
        # Moreau: prox_{sigma F*}(w) = w - sigma prox_{F/sigma}(w / sigma)
        v = w / sigma
        prox_F = y - losses.prox(loss, y - v, 1.0 / (n * sigma))
        p_new = w - sigma * prox_F
        Atp_new = A.T @ p_new
        # primal and dual residuals of the saddle-point optimality system
        primal = np.linalg.norm(-step / tau - (Atp - Atp_new))
        dual = np.linalg.norm((p - p_new) / sigma + A @ step)
        theta, p, Atp = theta_new, p_new, Atp_new
        if k % 10 == 0 or k == 1:
            obj = _w1_objective(data, loss, weight, theta)
            if obj < best:
                best, best_theta = obj, theta.copy()
                stall = 0
            else:
                stall += 1
            hist.append(best)
            # the long stall window only guards against a stagnating iteration
            if max(primal, dual) <= opts.tol * 1e2 or stall >= 2000:
                return best_theta, best, k, True, hist
    return best_theta, best, opts.max_iter, False, hist


def _lad_linprog(data: Dataset):
    """Unregularised least absolute deviations as a linear program (HiGHS)."""
    n, d = data.n, data.d
    # variables (theta, e+, e-) with A theta + e+ - e- = y, e+/- >= 0
    c = np.concatenate([np.zeros(d), np.full(2 * n, 1.0 / n)])
    A_eq = sparse_hstack([data.A, sparse_eye(n), -sparse_eye(n)], format="csr")
    bounds = [(None, None)] * d + [(0, None)] * (2 * n)
    res = linprog(c, A_eq=A_eq, b_eq=data.y, bounds=bounds, method="highs")
    if res.status != 0:
        raise DivergedError(f"LAD linear program failed: {res.message}")
    return np.asarray(res.x[:d]), int(getattr(res, "nit", 0) or 0)


def _prox_subgradient(data: Dataset, loss: LossModel, weight: float, opts: FitOptions):
    """Subgradient step on the data term, exact prox on the norm, c/sqrt(k) steps, averaging."""
    A, y, n = data.A, data.y, data.n
    c = 1.0 / max(spectral_norm(A, opts.power_iterations), 1e-12)
    theta = np.zeros(data.d)
    avg = theta.copy()
    best = _w1_objective(data, loss, weight, theta)
    best_theta = theta.copy()
    hist = [best]
    window = best
    for k in range(1, opts.max_iter + 1):
        step = c * math.sqrt(n) / math.sqrt(k)
        g = -A.T @ np.asarray(losses.loss_derivative(loss, y - A @ theta)) / n
        theta = _block_shrink(theta - step * g, step * weight)
        avg += (theta - avg) / k
        for cand in (theta, avg):
            obj = _w1_objective(data, loss, weight, cand)
            if obj < best:
                best, best_theta = obj, cand.copy()
        hist.append(best)
        if k % 50 == 0:
            if (window - best) <= opts.tol * max(1.0, abs(best)):
                return best_theta, best, k, True, hist
            window = best
    return best_theta, best, opts.max_iter, False, hist


def fit_w1(data: Dataset, loss: LossModel, eps: float, opts: FitOptions = FitOptions()) -> FitResult:
    """Lipschitz-regularised M-estimation (the Wasserstein-1 robust problem)."""
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    lip = loss.constants.lipschitz
    if lip is None and eps > 0:
        raise DomainError("fit_w1 with eps > 0 needs a Lipschitz loss")
    weight = 0.0 if eps == 0 else eps * lip
    obj = lambda th: _w1_objective(data, loss, weight, th)  # noqa: E731

    if loss.kind == losses.SQUARED:
        theta = _lstsq(data)
        return _finish(data, theta, obj(theta), 1, True, [obj(theta)])
    if opts.method == "subgradient":
        theta, val, it, conv, hist = _prox_subgradient(data, loss, weight, opts)
        return _finish(data, theta, val, it, conv, hist)
    if loss.kind == losses.ABSOLUTE and weight == 0:
        if not np.all(np.isfinite(data.y)):
            raise DivergedError("non-finite responses")
        theta, it = _lad_linprog(data)
        return _finish(data, theta, obj(theta), it, True, [obj(theta)])
    if loss.kind == losses.ABSOLUTE:
        theta, val, it, conv, hist = _pdhg(data, loss, weight, opts)
        return _finish(data, theta, val, it, conv, hist)

    A, y, n = data.A, data.y, data.n

    def f(th):
        return float(np.mean(losses.eval_loss(loss, y - A @ th)))

    def fg(th):
        r = y - A @ th
        return float(np.mean(losses.eval_loss(loss, r))), -A.T @ np.asarray(losses.loss_derivative(loss, r)) / n

    L0 = spectral_norm(A, opts.power_iterations) ** 2 * loss.constants.smoothness_m / n
    theta, val, it, conv, hist = _accelerated(
        fg, f, lambda v, st: _block_shrink(v, st * weight), lambda th: weight * float(np.linalg.norm(th)), _lstsq(data), L0, opts
    )
    return _finish(data, theta, val, it, conv, hist)


# -- Wasserstein-2, squared loss ---------------------------------------------------------


def fit_w2_squared(data: Dataset, eps: float, opts: FitOptions = FitOptions()) -> FitResult:
    """Square-root regularised least squares; ``objective`` is the squared optimum."""
    if eps < 0:
        raise DomainError("eps must be nonnegative")
    A, y, n = data.A, data.y, data.n
    w = math.sqrt(eps)
    theta0 = _lstsq(data)
    if eps == 0:
        r = y - A @ theta0
        val = float(r @ r) / n
        return _finish(data, theta0, val, 1, True, [val])

    def f(th):
        r = y - A @ th
        return math.sqrt(float(r @ r) / n)

    def fg(th):
        r = y - A @ th
        rms = math.sqrt(float(r @ r) / n)
        if rms == 0:
            return 0.0, np.zeros_like(th)
        return rms, -(A.T @ r) / (n * rms)

    r0 = y - A @ theta0
    L0 = spectral_norm(A, opts.power_iterations) ** 2 / (n * max(math.sqrt(float(r0 @ r0) / n), 1e-12))
    theta, val, it, conv, hist = _accelerated(
        fg, f, lambda v, st: _block_shrink(v, st * w), lambda th: w * float(np.linalg.norm(th)), theta0, L0, opts
    )
    return _finish(data, theta, val * val, it, conv, [h * h for h in hist])


# -- Wasserstein-2 dual and regularised problems -------------------------------------------


def _radius(R: float, d: int) -> float:
    # strictly inside the ball so that s < 1/(2M) holds at the lambda floor
    return R * math.sqrt(d) * (1.0 - 1e-9)


def _start(data: Dataset, radius: float) -> np.ndarray:
    th = _lstsq(data)
    nt = np.linalg.norm(th)
    return th if nt <= radius else th * (radius / nt)


def _dual_parts(data: Dataset, loss: LossModel, eps: float, R: float):
    """Value and gradient of ``G(theta) = min_{kappa >= kappa0} g(theta, kappa ||theta||)``."""
    A, y, n, d = data.A, data.y, data.n, data.d
    M = loss.constants.smoothness_m
    kappa0 = M * R * math.sqrt(d) / 2.0
    state = {"kappa": None}

    def g_kappa(r, nt, kappa):
        v, _ = inner_sup(r, nt / (4.0 * kappa), loss)
        return eps * kappa * nt + float(np.mean(v))

    def best_kappa(r, nt):
        lbar = float(np.mean(np.asarray(losses.loss_derivative(loss, r)) ** 2))
        cap = kappa0 + math.sqrt(lbar) / (2.0 * math.sqrt(eps)) + 1.0
        return minimize_convex_1d(lambda k: g_kappa(r, nt, k), Bracket(kappa0, max(cap, 2.0 * kappa0), open_hi=True), 1e-12 * cap, 1e8)

    def value(th, want_grad=False):
        r = y - A @ th
        nt = float(np.linalg.norm(th))
        if eps == 0 or nt == 0:
            v, u = inner_sup(r, 0.0, loss)
            val = float(np.mean(v))
            if not want_grad:
                return val
            return val, -(A.T @ u) / n, math.inf
        kappa, val = best_kappa(r, nt)
        state["kappa"] = kappa
        if not want_grad:
            return val
        _, u = inner_sup(r, nt / (4.0 * kappa), loss)
        lam = kappa * nt
        grad = (eps * lam / (nt * nt) + float(np.mean(u * u)) / (4.0 * lam)) * th - (A.T @ u) / n
        return val, grad, lam

    return value


def fit_w2_smooth(data: Dataset, loss: LossModel, eps: float, R: float, opts: FitOptions = FitOptions()) -> FitResult:
    """Wasserstein-2 robust estimator for a smooth loss through its dual."""
    if loss.constants.smoothness_m is None:
        raise NotSmooth("fit_w2_smooth needs a smooth loss")
    if eps < 0 or not R > 0:
        raise DomainError("need eps >= 0 and R > 0")
    radius = _radius(R, data.d)
    parts = _dual_parts(data, loss, eps, R)
    lam_box = {}

    def fg(th):
        val, grad, lam = parts(th, want_grad=True)
        lam_box["lam"] = lam
        return val, grad

    L0 = spectral_norm(data.A, opts.power_iterations) ** 2 * loss.constants.smoothness_m / data.n
    proj = _ball(radius)
    theta, val, it, conv, hist = _accelerated(fg, parts, proj, lambda th: 0.0, _start(data, radius), L0, opts, lambda v: proj(v, 0.0))
    _, _, lam = parts(theta, want_grad=True)
    return _finish(data, theta, val, it, conv, hist, lam=lam)


def fit_dre(data: Dataset, loss: LossModel, lam: float, R: float, opts: FitOptions = FitOptions()) -> FitResult:
    """Distributionally regularised estimator at a fixed transport price ``lam``."""
    M = loss.constants.smoothness_m
    if M is None:
        raise NotSmooth("fit_dre needs a smooth loss")
    if not lam > 0 or not R > 0:
        raise DomainError("need lam > 0 and R > 0")
    A, y, n, d = data.A, data.y, data.n, data.d
    if not lam > M * R * R * d / 2.0 * (1.0 - 1e-12):
        raise ConcavityViolation(f"lam = {lam} must exceed M R^2 d / 2 = {M * R * R * d / 2}")
    radius = _radius(R, d)

    def f(th):
        v, _ = inner_sup(y - A @ th, float(th @ th) / (4.0 * lam), loss)
        return float(np.mean(v))

    def fg(th):
        s = float(th @ th) / (4.0 * lam)
        v, u = inner_sup(y - A @ th, s, loss)
        return float(np.mean(v)), -(A.T @ u) / n + (float(np.mean(u * u)) / (2.0 * lam)) * th

    L0 = spectral_norm(A, opts.power_iterations) ** 2 * M / n
    proj = _ball(radius)
    theta, val, it, conv, hist = _accelerated(fg, f, proj, lambda th: 0.0, _start(data, radius), L0, opts, lambda v: proj(v, 0.0))
    return _finish(data, theta, val, it, conv, hist, lam=lam)
