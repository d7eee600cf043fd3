"""Noise distributions and expectations over ``N(0,1) x P_Z``.

Two integration routes are provided.

``product_expectation`` is the generic one: a tensor Gauss-Hermite rule in
``g`` times a per-kind rule in ``z`` (Gauss-Hermite for Gaussian noise,
two-sided Gauss-Laguerre for Laplace, a single node for a point mass), or
seeded Monte Carlo.

``piecewise_expectation`` handles the integrands that actually occur in the
scalar problems: a piecewise polynomial (degree <= 2) evaluated at
``c G + Z``. For Gaussian and point-mass noise ``c G + Z`` is Gaussian and the
expectation is exact via truncated normal moments. Laplace noise integrates
the exact Gaussian inner expectation against the Laplace density with
composite Gauss-Legendre panels split at the kinks.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache
from typing import Callable

import numpy as np
from numpy.polynomial.hermite_e import hermegauss
from numpy.polynomial.laguerre import laggauss
from numpy.polynomial.legendre import leggauss
from scipy.special import ndtr

from .errors import DomainError, EvaluationError

GAUSSIAN = "gaussian"
LAPLACE = "laplace"
POINTMASS = "pointmass"
NOISE_KINDS = (GAUSSIAN, LAPLACE, POINTMASS)

QUADRATURE = "quadrature"
MONTECARLO = "montecarlo"


@dataclass(frozen=True)
class NoiseModel:
    """``scale`` is the standard deviation (Gaussian) or the scale ``b`` (Laplace)."""

    kind: str
    scale: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise DomainError(f"unknown noise kind {self.kind!r}; expected one of {NOISE_KINDS}")
        scale = float(self.scale)
        if self.kind == POINTMASS:
            scale = 0.0
        elif not (scale > 0 and math.isfinite(scale)):
            raise DomainError(f"{self.kind} noise needs a positive finite scale, got {self.scale}")
        object.__setattr__(self, "scale", scale)

    @classmethod
    def gaussian(cls, sigma: float = 1.0) -> "NoiseModel":
        return cls(GAUSSIAN, sigma)

    @classmethod
    def laplace(cls, b: float = 1.0) -> "NoiseModel":
        return cls(LAPLACE, b)

    @classmethod
    def pointmass(cls) -> "NoiseModel":
        return cls(POINTMASS, 0.0)

    @classmethod
    def from_config(cls, cfg: dict) -> "NoiseModel":
        if not isinstance(cfg, dict) or "kind" not in cfg:
            raise DomainError("noise config must be an object with a 'kind' field")
        kind = str(cfg["kind"]).lower()
        if kind == GAUSSIAN:
            return cls(kind, cfg.get("sigma", 1.0))
        if kind == LAPLACE:
            return cls(kind, cfg.get("scale", 1.0))
        return cls(kind, 0.0)

    def to_config(self) -> dict:
        if self.kind == GAUSSIAN:
            return {"kind": GAUSSIAN, "sigma": self.scale}
        if self.kind == LAPLACE:
            return {"kind": LAPLACE, "scale": self.scale}
        return {"kind": POINTMASS}

    @property
    def second_moment(self) -> float:
        if self.kind == GAUSSIAN:
            return self.scale**2
        if self.kind == LAPLACE:
            return 2.0 * self.scale**2
        return 0.0

    @property
    def sigma_z(self) -> float:
        return math.sqrt(self.second_moment)


def sample(model: NoiseModel, seed, n: int) -> np.ndarray:
    """``n`` i.i.d. draws; ``seed`` is an int or a ``numpy.random.Generator``."""
    if n < 1:
        raise DomainError("sample size must be at least 1")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    if model.kind == GAUSSIAN:
        return rng.normal(0.0, model.scale, size=n)
    if model.kind == LAPLACE:
        return rng.laplace(0.0, model.scale, size=n)
    return np.zeros(n)


@dataclass(frozen=True)
class QuadratureConfig:
    gh_nodes: int = 64
    mc_samples: int = 200_000
    mode: str = QUADRATURE
    seed: int = 20240601

    def __post_init__(self):
        if int(self.gh_nodes) < 8:
            raise DomainError("gh_nodes must be at least 8")
        if int(self.mc_samples) < 10_000:
            raise DomainError("mc_samples must be at least 1e4")
        if self.mode not in (QUADRATURE, MONTECARLO):
            raise DomainError(f"quadrature mode must be {QUADRATURE!r} or {MONTECARLO!r}")
        object.__setattr__(self, "gh_nodes", int(self.gh_nodes))
        object.__setattr__(self, "mc_samples", int(self.mc_samples))
        object.__setattr__(self, "seed", int(self.seed))

    @classmethod
    def from_config(cls, cfg: dict | None) -> "QuadratureConfig":
        cfg = dict(cfg or {})
        unknown = set(cfg) - {"gh_nodes", "mc_samples", "mode", "seed"}
        if unknown:
            raise DomainError(f"unknown quadrature fields: {sorted(unknown)}")
        return cls(**cfg)

    def to_config(self) -> dict:
        return {"gh_nodes": self.gh_nodes, "mc_samples": self.mc_samples, "mode": self.mode, "seed": self.seed}


# -- generic product rule --------------------------------------------------------


@lru_cache(maxsize=32)
def _std_normal_rule(k: int):
    x, w = hermegauss(k)  # weight exp(-x^2/2)
    return x, w / math.sqrt(2.0 * math.pi)


_MAX_LAGUERRE = 160


@lru_cache(maxsize=32)
def _laplace_rule(k: int, b: float):
    # numpy's Laguerre weights overflow beyond ~180 nodes
    x, w = laggauss(min(k, _MAX_LAGUERRE))  # weight exp(-x) on (0, inf)
    nodes = np.concatenate([-b * x[::-1], b * x])
    weights = 0.5 * np.concatenate([w[::-1], w])
    return nodes, weights


def _noise_rule(noise: NoiseModel, k: int):
    if noise.kind == GAUSSIAN:
        x, w = _std_normal_rule(k)
        return noise.scale * x, w
    if noise.kind == LAPLACE:
        return _laplace_rule(k, noise.scale)
    return np.zeros(1), np.ones(1)


def mc_pairs(noise: NoiseModel, cfg: QuadratureConfig) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(cfg.seed)
    g = rng.standard_normal(cfg.mc_samples)
    z = sample(noise, rng, cfg.mc_samples)
    return g, z


def product_expectation(
    integrand: Callable[[np.ndarray, np.ndarray], np.ndarray],
    noise: NoiseModel,
    cfg: QuadratureConfig = QuadratureConfig(),
    return_se: bool = False,
):
    """``E integrand(G, Z)`` with ``G ~ N(0,1)`` independent of ``Z ~ noise``.

    The integrand must be vectorised. With ``return_se`` the Monte Carlo
    standard error is returned as well (0 for quadrature).
    """
    if cfg.mode == MONTECARLO:
        g, z = mc_pairs(noise, cfg)
        vals = np.asarray(integrand(g, z), dtype=float)
        bad = ~np.isfinite(vals)
        if bad.any():
            i = int(np.argmax(bad))
            raise EvaluationError("non-finite integrand value", node=(float(g[i]), float(z[i])))
        mean = float(vals.mean())
        se = float(vals.std(ddof=1) / math.sqrt(vals.size))
        return (mean, se) if return_se else mean

    gx, gw = _std_normal_rule(cfg.gh_nodes)
    zx, zw = _noise_rule(noise, cfg.gh_nodes)
    G, Z = np.meshgrid(gx, zx, indexing="ij")
    vals = np.asarray(integrand(G, Z), dtype=float)
    vals = np.broadcast_to(vals, G.shape)
    bad = ~np.isfinite(vals)
    if bad.any():
        i, j = np.unravel_index(int(np.argmax(bad)), bad.shape)
        raise EvaluationError("non-finite integrand value", node=(float(gx[i]), float(zx[j])))
    mean = float(gw @ vals @ zw)
    return (mean, 0.0) if return_se else mean


# -- exact route for piecewise polynomials ----------------------------------------


def _phi(x):
    return np.exp(-0.5 * x * x) / math.sqrt(2.0 * math.pi)


def _interval_mass(a, b):
    # P(a < Y < b) for Y ~ N(0,1) without cancellation in either tail
    return np.where(a > 0, ndtr(-a) - ndtr(-b), ndtr(b) - ndtr(a))


def _truncated_moments(a, b):
    """E[Y^k 1{a<Y<b}], k = 0, 1, 2, for standard normal Y (a, b may be inf)."""
    m0 = _interval_mass(a, b)
    pa, pb = _phi(a), _phi(b)
    m1 = pa - pb
    with np.errstate(invalid="ignore"):
        apa = np.where(np.isfinite(a), a * pa, 0.0)
        bpb = np.where(np.isfinite(b), b * pb, 0.0)
    m2 = m0 + apa - bpb
    return m0, m1, m2


def gaussian_piecewise_expectation(pieces, mu, s):
    """``E p(X)`` for ``X ~ N(mu, s^2)``; ``mu`` may be an array, ``s >= 0``."""
    mu = np.asarray(mu, dtype=float)
    if s == 0.0:
        out = np.zeros_like(mu)
        for lo, hi, a0, a1, a2 in pieces:
            mask = (mu >= lo) & (mu <= hi)
            out = np.where(mask, a0 + mu * (a1 + a2 * mu), out)
        return out
    total = np.zeros_like(mu)
    for lo, hi, a0, a1, a2 in pieces:
        a = (lo - mu) / s
        b = (hi - mu) / s
        m0, m1, m2 = _truncated_moments(a, b)
        # X = mu + s Y
        ex0 = m0
        ex1 = mu * m0 + s * m1
        ex2 = mu * mu * m0 + 2.0 * mu * s * m1 + s * s * m2
        total = total + a0 * ex0 + a1 * ex1 + a2 * ex2
    return total


_GL_NODES, _GL_WEIGHTS = leggauss(16)


def _composite_legendre(breaks: np.ndarray, width: float):
    xs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        if hi <= lo:
            continue
        k = max(1, int(math.ceil((hi - lo) / width)))
        edges = np.linspace(lo, hi, k + 1)
        half = 0.5 * np.diff(edges)
        mid = 0.5 * (edges[:-1] + edges[1:])
        xs.append((mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel())
        ws.append((half[:, None] * _GL_WEIGHTS[None, :]).ravel())
    return np.concatenate(xs), np.concatenate(ws)


def piecewise_expectation(pieces, c: float, noise: NoiseModel, cfg: QuadratureConfig = QuadratureConfig()) -> float:
    """``E p(c G + Z)`` for a piecewise polynomial ``p`` of degree <= 2."""
    c = abs(float(c))
    if cfg.mode == MONTECARLO:
        from .losses import eval_pieces

        return product_expectation(lambda g, z: eval_pieces(pieces, c * g + z), noise, cfg)
    if noise.kind != LAPLACE:
        s = math.hypot(c, noise.scale)
        return float(gaussian_piecewise_expectation(pieces, 0.0, s))
    b = noise.scale
    kinks = sorted({p[0] for p in pieces if math.isfinite(p[0])} | {p[1] for p in pieces if math.isfinite(p[1])} | {0.0})
    reach = 45.0 * b + max((abs(k) for k in kinks), default=0.0)
    breaks = np.array([-reach] + [k for k in kinks if -reach < k < reach] + [reach])
    width = 0.25 * min(b, c) if c > 0 else 0.25 * b
    width = max(width, 0.02 * b)
    z, w = _composite_legendre(breaks, width)
    dens = np.exp(-np.abs(z) / b) / (2.0 * b)
    inner = gaussian_piecewise_expectation(pieces, z, c)
    return float(np.sum(w * dens * inner))
