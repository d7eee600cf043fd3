"""Closed-form calculus for the supported univariate losses.

Every loss here is convex, symmetric and satisfies ``L(0) = min L = 0``.
For each kind we provide the loss itself, its convex conjugate, the Moreau
envelope ``e_L(c, tau) = min_v (c - v)^2 / (2 tau) + L(v)`` with its proximal
point, and (for smooth losses) the component ``f`` in the split
``L* = u^2 / (2M) + f*``, which is equivalent to ``L = e_f(., 1/M)``.

Envelopes are also exposed as lists of polynomial pieces so that Gaussian
expectations can be taken in closed form (see :mod:`dromest.noise`).
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np
from scipy.optimize import minimize_scalar

from .errors import BracketTooSmall, Degenerate, DomainError, NotSmooth

INF = math.inf  # explicit +infinity returned by conjugates outside their domain

SQUARED = "squared"
ABSOLUTE = "absolute"
HUBER = "huber"
KINDS = (SQUARED, ABSOLUTE, HUBER)
DEFAULT_HUBER_DELTA = 1.345


@dataclass(frozen=True)
class LossModel:
    """A supported loss. ``delta`` is only meaningful for Huber."""

    kind: str
    delta: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise DomainError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == HUBER:
            delta = DEFAULT_HUBER_DELTA if self.delta is None else float(self.delta)
            if not (delta > 0 and math.isfinite(delta)):
                raise DomainError(f"Huber delta must be positive and finite, got {self.delta}")
            object.__setattr__(self, "delta", delta)
        elif self.delta is not None:
            object.__setattr__(self, "delta", None)

    @classmethod
    def squared(cls) -> "LossModel":
        return cls(SQUARED)

    @classmethod
    def absolute(cls) -> "LossModel":
        return cls(ABSOLUTE)

    @classmethod
    def huber(cls, delta: float = DEFAULT_HUBER_DELTA) -> "LossModel":
        return cls(HUBER, delta)

    @classmethod
    def from_config(cls, cfg: dict) -> "LossModel":
        if not isinstance(cfg, dict) or "kind" not in cfg:
            raise DomainError("loss config must be an object with a 'kind' field")
        kind = str(cfg["kind"]).lower()
        return cls(kind, cfg.get("delta"))

    def to_config(self) -> dict:
        out = {"kind": self.kind}
        if self.kind == HUBER:
            out["delta"] = self.delta
        return out

    @property
    def constants(self) -> "LossConstants":
        return loss_constants(self)

    @property
    def smooth(self) -> bool:
        return self.kind != ABSOLUTE


@dataclass(frozen=True)
class LossConstants:
    """Lipschitz and smoothness constants; ``None`` means unavailable."""

    lipschitz: float | None
    smoothness_m: float | None


def loss_constants(model: LossModel) -> LossConstants:
    if model.kind == SQUARED:
        return LossConstants(lipschitz=None, smoothness_m=2.0)
    if model.kind == ABSOLUTE:
        return LossConstants(lipschitz=1.0, smoothness_m=None)
    return LossConstants(lipschitz=model.delta, smoothness_m=1.0)


def _out(x):
    x = np.asarray(x, dtype=float)
    return float(x) if x.ndim == 0 else x


def eval_loss(model: LossModel, r):
    r = np.asarray(r, dtype=float)
    a = np.abs(r)
    if model.kind == SQUARED:
        val = r * r
    elif model.kind == ABSOLUTE:
        val = a
    else:
        d = model.delta
        val = np.where(a <= d, 0.5 * r * r, d * a - 0.5 * d * d)
    return _out(val)


def loss_derivative(model: LossModel, r):
    """Derivative (a subgradient for the absolute loss, 0 at the kink)."""
    r = np.asarray(r, dtype=float)
    if model.kind == SQUARED:
        return _out(2.0 * r)
    if model.kind == ABSOLUTE:
        return _out(np.sign(r))
    return _out(np.clip(r, -model.delta, model.delta))


def conjugate(model: LossModel, u):
    """Convex conjugate ``L*(u)``; returns :data:`INF` outside the domain."""
    u = np.asarray(u, dtype=float)
    if model.kind == SQUARED:
        val = 0.25 * u * u
    elif model.kind == ABSOLUTE:
        val = np.where(np.abs(u) <= 1.0, 0.0, INF)
    else:
        val = np.where(np.abs(u) <= model.delta, 0.5 * u * u, INF)
    return _out(val)


def _check_tau(tau):
    tau = np.asarray(tau, dtype=float)
    if np.any(~(tau > 0)):
        raise DomainError("Moreau envelope parameter tau must be positive")
    return tau


def moreau_envelope(model: LossModel, c, tau):
    """``e_L(c, tau)`` in closed form."""
    tau = _check_tau(tau)
    c = np.asarray(c, dtype=float)
    a = np.abs(c)
    if model.kind == SQUARED:
        val = c * c / (1.0 + 2.0 * tau)
    elif model.kind == ABSOLUTE:
        val = np.where(a <= tau, c * c / (2.0 * tau), a - 0.5 * tau)
    else:
        d, s = model.delta, 1.0 + tau
        val = np.where(a <= d * s, c * c / (2.0 * s), d * a - 0.5 * d * d * s)
    return _out(val)


def prox(model: LossModel, c, tau):
    """Proximal point ``argmin_v (c - v)^2 / (2 tau) + L(v)``."""
    tau = _check_tau(tau)
    c = np.asarray(c, dtype=float)
    a = np.abs(c)
    if model.kind == SQUARED:
        v = c / (1.0 + 2.0 * tau)
    elif model.kind == ABSOLUTE:
        v = np.sign(c) * np.maximum(a - tau, 0.0)
    else:
        d, s = model.delta, 1.0 + tau
        v = np.where(a <= d * s, c / s, c - tau * d * np.sign(c))
    return _out(v)


def f_component(model: LossModel, u):
    """The ``f`` with ``e_f(., 1/M) = L``; Huber gives ``delta |u|``."""
    if model.kind == ABSOLUTE:
        raise NotSmooth("the absolute loss has no smoothness constant")
    if model.kind == SQUARED:
        raise Degenerate("f is the indicator of {0} for the squared loss")
    return _out(model.delta * np.abs(np.asarray(u, dtype=float)))


def f_envelope(model: LossModel, x, t):
    """``e_f(x, t)`` for the f-component; ``t = 0`` returns ``f`` itself."""
    if model.kind == ABSOLUTE:
        raise NotSmooth("the absolute loss has no smoothness constant")
    if model.kind == SQUARED:
        raise Degenerate("f is the indicator of {0} for the squared loss")
    x = np.asarray(x, dtype=float)
    t = np.asarray(t, dtype=float)
    if np.any(t < 0):
        raise DomainError("envelope parameter must be nonnegative")
    d = model.delta
    a = np.abs(x)
    with np.errstate(divide="ignore", invalid="ignore"):
        quad = x * x / (2.0 * t)
    return _out(np.where(a <= d * t, np.where(t > 0, quad, 0.0), d * a - 0.5 * d * d * t))


# -- piecewise polynomial form -------------------------------------------------
#
# A piece is (lo, hi, a0, a1, a2) meaning a0 + a1 x + a2 x^2 on [lo, hi].

Piece = tuple[float, float, float, float, float]


def _abs_pieces(slope: float, offset: float) -> list[Piece]:
    return [(-INF, 0.0, offset, -slope, 0.0), (0.0, INF, offset, slope, 0.0)]


def _huberlike_pieces(d: float, t: float) -> list[Piece]:
    # e_f(., t) for f = d |.|
    if t == 0.0:
        return _abs_pieces(d, 0.0)
    a = d * t
    off = -0.5 * d * d * t
    return [
        (-INF, -a, off, -d, 0.0),
        (-a, a, 0.0, 0.0, 1.0 / (2.0 * t)),
        (a, INF, off, d, 0.0),
    ]


def loss_pieces(model: LossModel) -> list[Piece]:
    if model.kind == SQUARED:
        return [(-INF, INF, 0.0, 0.0, 1.0)]
    if model.kind == ABSOLUTE:
        return _abs_pieces(1.0, 0.0)
    return _huberlike_pieces(model.delta, 1.0)


def envelope_pieces(model: LossModel, tau: float) -> list[Piece]:
    """Pieces of ``e_L(., tau)``; ``tau = 0`` gives the loss itself."""
    tau = float(tau)
    if tau < 0:
        raise DomainError("envelope parameter must be nonnegative")
    if tau == 0.0:
        return loss_pieces(model)
    if model.kind == SQUARED:
        return [(-INF, INF, 0.0, 0.0, 1.0 / (1.0 + 2.0 * tau))]
    if model.kind == ABSOLUTE:
        return [
            (-INF, -tau, -0.5 * tau, -1.0, 0.0),
            (-tau, tau, 0.0, 0.0, 1.0 / (2.0 * tau)),
            (tau, INF, -0.5 * tau, 1.0, 0.0),
        ]
    return _huberlike_pieces(model.delta, 1.0 + tau)


def f_envelope_pieces(model: LossModel, t: float) -> list[Piece]:
    """Pieces of ``e_f(., t)``; ``t = 0`` gives ``f`` itself."""
    if model.kind == ABSOLUTE:
        raise NotSmooth("the absolute loss has no smoothness constant")
    if model.kind == SQUARED:
        raise Degenerate("f is the indicator of {0} for the squared loss")
    if t < 0:
        raise DomainError("envelope parameter must be nonnegative")
    return _huberlike_pieces(model.delta, float(t))


def eval_pieces(pieces: list[Piece], x):
    x = np.asarray(x, dtype=float)
    out = np.zeros_like(x)
    for lo, hi, a0, a1, a2 in pieces:
        mask = (x >= lo) & (x <= hi)
        out = np.where(mask, a0 + x * (a1 + a2 * x), out)
    return _out(out)


# -- oracle ---------------------------------------------------------------------


def brute_force_envelope(
    fn: Callable[[np.ndarray], np.ndarray],
    c: float,
    tau: float,
    halfwidth: float = 50.0,
    tol: float = 1e-11,
    grid: int = 4001,
) -> float:
    """Minimise ``(c - v)^2 / (2 tau) + fn(v)`` by grid search plus refinement.

    ``fn`` must accept numpy arrays. Independent of every closed form above.
    """
    if not tau > 0:
        raise DomainError("tau must be positive")

    def obj(v):
        v = np.asarray(v, dtype=float)
        return (c - v) ** 2 / (2.0 * tau) + np.asarray(fn(v), dtype=float)

    vs = np.linspace(c - halfwidth, c + halfwidth, grid)
    vals = obj(vs)
    i = int(np.argmin(vals))
    if i == 0 or i == grid - 1:
        raise BracketTooSmall(f"grid minimiser on the boundary at v={vs[i]}")
    res = minimize_scalar(
        lambda v: float(obj(v)),
        bounds=(vs[i - 1], vs[i + 1]),
        method="bounded",
        options={"xatol": tol, "maxiter": 500},
    )
    return float(min(res.fun, vals[i]))
