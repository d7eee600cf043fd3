"""Scalar saddle-point solvers producing asymptotic error predictions.

Every characterisation has the shape ``min_alpha max_beta O(alpha, beta)``
once the remaining auxiliary variables are optimised out in closed-ish form:

* ``tau1`` enters only through ``beta*tau1/2 + F(alpha, tau1/beta)``; with
  ``t = tau1/beta`` this is ``phi(alpha, beta) = inf_t beta^2 t/2 + F(alpha, t)``
  (and the analogue with ``L/rho`` or ``E/rho`` for the first-order modes).
* ``tau2`` enters the first Wasserstein-2 display as ``beta * h1(alpha, t)``
  after ``tau2 = sqrt(eps0) t``; in the second display it only couples with
  ``(alpha, beta)``; in the Wasserstein-1 display it couples with
  ``(alpha, beta)`` through the norm-envelope term.

The resulting 2-D marginal is convex in ``alpha`` and concave in ``beta``;
it is solved by nested bracketed 1-D searches and certified by one-sided
slopes of ``V(alpha) = max_beta O`` and by the max-min value.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from typing import Callable

from . import losses
from .errors import BracketError, ConfigError, UnboundedMinimizer
from .linesearch import Bracket, maximize_concave_1d, minimize_convex_1d
from .noise import QuadratureConfig
from .scalar import (
    DRE,
    DRE_SQUARED,
    W1,
    W2_DRO,
    W2_DRO_SQUARED,
    EnvelopeEvaluator,
    ProblemSpec,
    dre_beta_terms,
    g_function,
    get_evaluator,
    o2_tau2_inf,
)

__all__ = [
    "Bracket",
    "minimize_convex_1d",
    "maximize_concave_1d",
    "SolverConfig",
    "Prediction",
    "solve",
    "solve_w1",
    "solve_w2",
    "solve_dre",
    "solve_squared_dro",
    "solve_squared_dre",
]

ALPHA_AT_UPPER_BOUND = "AlphaAtUpperBound"
EPSILON_BOUND_UNVERIFIED = "EpsilonBoundUnverified"
EPSILON_BOUND_VIOLATED = "EpsilonBoundViolated"
DRE_UPPER_BOUND_ONLY = "DreUpperBoundOnly"
NON_UNIQUE_WARNING = "NonUniqueWarning"

TIE_TOL = 1e-8
INNER_TOL = 1e-10


@dataclass(frozen=True)
class SolverConfig:
    tol: float = 1e-7
    certify: bool = True
    quadrature: QuadratureConfig = QuadratureConfig()
    slope_step: float = 1e-5
    flat_step: float = 1e-3

    @classmethod
    def from_config(cls, cfg: dict | None, quadrature: QuadratureConfig) -> "SolverConfig":
        cfg = dict(cfg or {})
        unknown = set(cfg) - {"tol", "certify", "slope_step", "flat_step"}
        if unknown:
            raise ConfigError(f"unknown solver fields: {sorted(unknown)}")
        tol = float(cfg.get("tol", 1e-7))
        if not 0 < tol < 1e-2:
            raise ConfigError("solver.tol must lie in (0, 1e-2)")
        return cls(
            tol=tol,
            certify=bool(cfg.get("certify", True)),
            quadrature=quadrature,
            slope_step=float(cfg.get("slope_step", 1e-5)),
            flat_step=float(cfg.get("flat_step", 1e-3)),
        )


@dataclass(frozen=True)
class Certificate:
    slope_minus: float | None
    slope_plus: float | None
    minmax: float
    maxmin: float | None

    @property
    def gap(self) -> float | None:
        return None if self.maxmin is None else abs(self.minmax - self.maxmin)

    def stationary(self, tol: float = 1e-6) -> bool:
        ok = True
        if self.slope_minus is not None:
            ok &= self.slope_minus <= tol
        if self.slope_plus is not None:
            ok &= self.slope_plus >= -tol
        return bool(ok)

    def to_dict(self) -> dict:
        return {
            "slope_minus": self.slope_minus,
            "slope_plus": self.slope_plus,
            "minmax": self.minmax,
            "maxmin": self.maxmin,
            "gap": self.gap,
        }


@dataclass(frozen=True)
class Prediction:
    """Asymptotic prediction: ``||theta_hat - theta0||^2 / d -> alpha_star_sq``."""

    mode: str
    alpha_star: float
    value: float
    witness: dict
    branch: str
    flags: tuple = ()
    value_v1: float | None = None
    value_v2: float | None = None
    alpha_star_v1: float | None = None
    alpha_star_v2: float | None = None
    certificates: dict = field(default_factory=dict)
    spec: dict = field(default_factory=dict)

    @property
    def alpha_star_sq(self) -> float:
        return self.alpha_star * self.alpha_star

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "alpha_star": self.alpha_star,
            "alpha_star_sq": self.alpha_star_sq,
            "value": self.value,
            "value_v1": self.value_v1,
            "value_v2": self.value_v2,
            "alpha_star_v1": self.alpha_star_v1,
            "alpha_star_v2": self.alpha_star_v2,
            "witness": dict(self.witness),
            "branch": self.branch,
            "flags": list(self.flags),
            "certificates": {k: v.to_dict() for k, v in self.certificates.items()},
            "spec": dict(self.spec),
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True, allow_nan=False)


# -- generic nested solve --------------------------------------------------------------


@dataclass
class _Marginal:
    value: float
    alpha: float
    beta: float
    cert: Certificate
    V: Callable[[float], float]


def _split_max(f, br: Bracket, kinks, tol, growth):
    """Maximise a concave ``f`` piece by piece between known kinks.

    Bracketed Brent only resolves a kink to about ``sqrt(eps) |x|``; with
    the kink as a closed endpoint its value is evaluated exactly instead.
    """
    cuts = [k for k in kinks if br.lo < k < br.hi or (br.open_hi and k > br.lo)]
    if not cuts:
        return maximize_concave_1d(f, br, tol, growth)
    edges = [br.lo, *sorted(cuts)]
    parts = [Bracket(a, b, open_lo=(i == 0 and br.open_lo)) for i, (a, b) in enumerate(zip(edges[:-1], edges[1:])) if b > a]
    hi = max(br.hi, 2.0 * edges[-1])
    parts.append(Bracket(edges[-1], hi, open_hi=br.open_hi))
    return max((maximize_concave_1d(f, p, tol, growth) for p in parts), key=lambda r: r[1])


def _solve_marginal(O, a_br: Bracket, b_br: Bracket, cfg: SolverConfig, b_growth: float = 1e3, b_kinks=()) -> _Marginal:
    """``min_alpha max_beta O`` plus its certificate; ``b_kinks`` are known kinks in beta."""

    def argmax_beta(alpha):
        return _split_max(lambda b: O(alpha, b), b_br, b_kinks, INNER_TOL, b_growth)

    def V(alpha):
        return argmax_beta(alpha)[1]

    try:
        a_star, v_star = minimize_convex_1d(V, a_br, cfg.tol * 1e-2)
    except BracketError as exc:
        raise UnboundedMinimizer(f"the minimiser over alpha is not bounded: {exc}") from exc
    b_star = argmax_beta(a_star)[0]

    sm = sp = None
    maxmin = None
    if cfg.certify:
        h = cfg.slope_step
        if a_star - h >= a_br.lo:
            sm = (v_star - V(a_star - h)) / h
        if a_br.open_hi or a_star + h <= a_br.hi:
            sp = (V(a_star + h) - v_star) / h

        # a compact alpha set holding alpha* keeps min-max = max-min (Sion)
        a_cl = a_br if not a_br.open_hi else Bracket(a_br.lo, max(a_br.hi, 4.0 * a_star))

        def W(beta):
            return minimize_convex_1d(lambda a: O(a, beta), a_cl, INNER_TOL)[1]

        maxmin = _split_max(W, b_br, b_kinks, cfg.tol * 1e-2, b_growth)[1]
    cert = Certificate(slope_minus=sm, slope_plus=sp, minmax=v_star, maxmin=maxmin)
    return _Marginal(value=v_star, alpha=a_star, beta=b_star, cert=cert, V=V)


def _scale(spec: ProblemSpec) -> float:
    return spec.sigma_theta0 + spec.sigma_z + 1.0


def _phi_search(fn, beta, cap):
    """``inf_{t >= 0} beta^2 t/2 + fn(t)`` where ``fn(0)`` is the limit value."""
    return minimize_convex_1d(lambda t: 0.5 * beta * beta * t + fn(t), Bracket(0.0, cap, open_hi=True), INNER_TOL, 1e6)


def _phi_F(ev: EnvelopeEvaluator, spec: ProblemSpec):
    """``(alpha, beta) -> (t*, inf_t beta^2 t/2 + F(alpha, t))``."""
    S = _scale(spec)
    if spec.loss.kind == losses.SQUARED:
        sz = spec.sigma_z

        def phi_sq(alpha, beta):
            s = math.hypot(alpha, sz)
            return (s / beta if beta > 0 else math.inf), beta * s

        return phi_sq

    def phi(alpha, beta):
        if beta == 0:
            return math.inf, 0.0
        return _phi_search(lambda t: ev.F(alpha, t), beta, 10.0 * S / min(beta, 1.0))

    return phi


def _psi_L(ev: EnvelopeEvaluator, spec: ProblemSpec):
    S, rho = _scale(spec), spec.rho

    def psi(alpha, beta):
        if beta == 0:
            return math.inf, ev.L(alpha, math.inf) / rho
        return _phi_search(lambda t: ev.L(alpha, t) / rho, beta, 10.0 * S / (min(beta, 1.0) * min(1.0, math.sqrt(rho))))

    return psi


def _psi_E(spec: ProblemSpec):
    rho, sz = spec.rho, spec.sigma_z
    sr = math.sqrt(rho)

    def psi(alpha, beta):
        # inf_t beta^2 t/2 + E(alpha, t)/rho: t* = s/(beta sqrt(rho)) while beta <= 1/sqrt(rho), else 0
        s = math.hypot(alpha, sz)
        if beta * sr <= 1.0:
            t = math.inf if beta == 0 else s / (beta * sr)
            return t, (0.0 if beta == 0 else beta * s / sr) - sz / rho
        return 0.0, (s - sz) / rho

    return psi


def _k_star(spec: ProblemSpec, lam: float):
    """``(alpha, beta) -> (tau2*, sup_tau2 -alpha tau2/2 - alpha beta^2/(2 tau2) + lam G(.))``."""
    rho, sig = spec.rho, spec.sigma_theta0
    S = _scale(spec)

    def k(alpha, beta):
        if alpha == 0:
            return None, (lam * g_function(0.0, 0.0, rho, sig) if lam > 0 else 0.0)
        if lam == 0:
            return beta, -alpha * beta

        def f(t2):
            return -0.5 * alpha * t2 - alpha * beta * beta / (2.0 * t2) + lam * g_function(alpha * beta / t2, alpha * lam / t2, rho, sig)

        return maximize_concave_1d(f, Bracket(0.0, 10.0 * (S + beta + lam), open_lo=True, open_hi=True), INNER_TOL, 1e6)

    return k


def _first_order(spec: ProblemSpec, cfg: SolverConfig, psi, lam: float, b_kinks=()) -> tuple[_Marginal, dict]:
    k = _k_star(spec, lam)

    def O(alpha, beta):
        return psi(alpha, beta)[1] + k(alpha, beta)[1]

    S = _scale(spec)
    m = _solve_marginal(
        O,
        Bracket(0.0, 10.0 * S, open_hi=True),
        Bracket(0.0, 10.0 * S / min(1.0, math.sqrt(spec.rho)), open_hi=True),
        cfg,
        b_kinks=b_kinks,
    )
    t1 = psi(m.alpha, m.beta)[0]
    witness = {"tau1": m.beta * t1, "tau2": k(m.alpha, m.beta)[0], "beta": m.beta}
    return m, witness


def solve_w1(spec: ProblemSpec, cfg: SolverConfig = SolverConfig()) -> Prediction:
    if spec.mode != W1:
        raise ConfigError(f"solve_w1 needs mode {W1!r}, got {spec.mode!r}")
    ev = get_evaluator(spec.loss, spec.noise, cfg.quadrature, spec.shift)
    lam = 0.0 if spec.epsilon0 == 0 else spec.epsilon0 * spec.loss.constants.lipschitz
    m, witness = _first_order(spec, cfg, _psi_L(ev, spec), lam)
    return Prediction(
        mode=spec.mode,
        alpha_star=m.alpha,
        value=m.value,
        witness=witness,
        branch="Single",
        certificates={"main": m.cert},
        spec=spec.to_dict(),
    )


def solve_squared_dro(spec: ProblemSpec, cfg: SolverConfig = SolverConfig()) -> Prediction:
    if spec.mode != W2_DRO_SQUARED:
        raise ConfigError(f"solve_squared_dro needs mode {W2_DRO_SQUARED!r}, got {spec.mode!r}")
    # the closed-form beta section switches branch at beta = 1/sqrt(rho)
    m, witness = _first_order(spec, cfg, _psi_E(spec), math.sqrt(spec.epsilon0), (1.0 / math.sqrt(spec.rho),))
    flags = []
    h = max(100.0 * cfg.tol, cfg.flat_step)
    sides = [m.V(m.alpha + h)]
    if m.alpha - h >= 0:
        sides.append(m.V(m.alpha - h))
    if all(abs(v - m.value) <= 1e-9 for v in sides):
        flags.append(NON_UNIQUE_WARNING)
    return Prediction(
        mode=spec.mode,
        alpha_star=m.alpha,
        value=m.value,
        witness=witness,
        branch="Single",
        flags=tuple(flags),
        certificates={"main": m.cert},
        spec=spec.to_dict(),
    )


def _h1(spec: ProblemSpec):
    """``alpha -> (t*, inf_t eps0 t/2 + rho(s^2+a^2)/(2t) - a sqrt(rho) sqrt(rho s^2/t^2 + 1))``."""
    rho, sig, eps0 = spec.rho, spec.sigma_theta0, spec.epsilon0
    sr = math.sqrt(rho)
    cache = {}

    def h1(alpha):
        if alpha in cache:
            return cache[alpha]
        if eps0 == 0:
            out = (math.inf, -alpha * sr)
        else:

            def f(t):
                return 0.5 * eps0 * t + rho * (sig * sig + alpha * alpha) / (2.0 * t) - alpha * sr * math.sqrt(rho * sig * sig / (t * t) + 1.0)

            cap = 10.0 * (math.sqrt(rho * (sig * sig + alpha * alpha + 1.0) / eps0) + 1.0)
            out = minimize_convex_1d(f, Bracket(0.0, cap, open_lo=True, open_hi=True), INNER_TOL, 1e6)
        cache[alpha] = out
        return out

    return h1


def solve_w2(spec: ProblemSpec, cfg: SolverConfig = SolverConfig()) -> Prediction:
    """Both Wasserstein-2 subproblems; the larger value selects the branch.

    A squared loss is accepted here too: then ``beta*tau1/2 + F`` is replaced by
    its infimum over ``tau1``, ``beta * sqrt(alpha^2 + sigma_z^2)``.
    """
    if spec.mode != W2_DRO:
        raise ConfigError(f"solve_w2 needs mode {W2_DRO!r}, got {spec.mode!r}")
    ev = get_evaluator(spec.loss, spec.noise, cfg.quadrature, spec.shift)
    k = spec.constants
    M, sig = spec.M, spec.sigma_theta0
    phi = _phi_F(ev, spec)
    h1 = _h1(spec)
    S = _scale(spec)
    a_br = Bracket(0.0, sig)

    def O1(alpha, beta):
        return phi(alpha, beta)[1] - beta * beta / (2.0 * M) + beta * h1(alpha)[1]

    def O2(alpha, beta):
        return phi(alpha, beta)[1] - beta * beta / (2.0 * M) + o2_tau2_inf(alpha, beta, spec)[1]

    b_lo = k.B * (1.0 + 1e-9)
    b_cap = b_lo + 10.0 * S * max(M, 1.0)
    m1 = _solve_marginal(O1, a_br, Bracket(b_lo, b_cap, open_hi=True), cfg)
    if k.B > 0:
        m2 = _solve_marginal(O2, a_br, Bracket(0.0, k.B), cfg)
    else:
        m2 = None

    v1 = m1.value
    v2 = m2.value if m2 is not None else 0.0
    if m2 is None or v1 - v2 > TIE_TOL:
        branch, alpha, value = "V1", m1.alpha, v1
    elif v2 - v1 > TIE_TOL:
        branch, alpha, value = "V2", m2.alpha, v2
    else:
        branch, alpha, value = "Tie", max(m1.alpha, m2.alpha), max(v1, v2)

    if branch == "V2":
        beta = m2.beta
        t_star = phi(alpha, beta)[0]
        tau2 = o2_tau2_inf(alpha, beta, spec)[0]
    else:
        beta = m1.beta
        t_star = phi(m1.alpha, beta)[0]
        tau2 = math.sqrt(spec.epsilon0) * h1(m1.alpha)[0]
    witness = {"tau1": beta * t_star, "tau2": tau2, "beta": beta}

    flags = []
    if alpha >= sig - max(cfg.tol, 1e-6):
        flags.append(ALPHA_AT_UPPER_BOUND)
    if k.eps0_max is None:
        flags.append(EPSILON_BOUND_UNVERIFIED)
    elif spec.epsilon0 > k.eps0_max:
        flags.append(EPSILON_BOUND_VIOLATED)
    certs = {"v1": m1.cert}
    if m2 is not None:
        certs["v2"] = m2.cert
    return Prediction(
        mode=spec.mode,
        alpha_star=alpha,
        value=value,
        witness=witness,
        branch=branch,
        flags=tuple(flags),
        value_v1=v1,
        value_v2=v2,
        alpha_star_v1=m1.alpha,
        alpha_star_v2=None if m2 is None else m2.alpha,
        certificates=certs,
        spec=spec.to_dict(),
    )


def _solve_regularized(spec: ProblemSpec, cfg: SolverConfig, phi, M: float) -> Prediction:
    R, sig = spec.R_theta, spec.sigma_theta0
    S = _scale(spec)

    def O(alpha, beta):
        return phi(alpha, beta)[1] - beta * beta / (2.0 * M) + dre_beta_terms(alpha, beta, spec)

    m = _solve_marginal(O, Bracket(0.0, R + sig), Bracket(0.0, 10.0 * S * max(M, 1.0), open_hi=True), cfg)
    t_star = phi(m.alpha, m.beta)[0]
    flags = []
    if m.alpha > R - sig:
        flags.append(DRE_UPPER_BOUND_ONLY)
    return Prediction(
        mode=spec.mode,
        alpha_star=m.alpha,
        value=m.value,
        witness={"tau1": m.beta * t_star, "tau2": None, "beta": m.beta},
        branch="Single",
        flags=tuple(flags),
        certificates={"main": m.cert},
        spec=spec.to_dict(),
    )


def solve_dre(spec: ProblemSpec, cfg: SolverConfig = SolverConfig()) -> Prediction:
    if spec.mode != DRE:
        raise ConfigError(f"solve_dre needs mode {DRE!r}, got {spec.mode!r}")
    ev = get_evaluator(spec.loss, spec.noise, cfg.quadrature, spec.shift)
    return _solve_regularized(spec, cfg, _phi_F(ev, spec), spec.M)


def solve_squared_dre(spec: ProblemSpec, cfg: SolverConfig = SolverConfig()) -> Prediction:
    if spec.mode != DRE_SQUARED:
        raise ConfigError(f"solve_squared_dre needs mode {DRE_SQUARED!r}, got {spec.mode!r}")
    sz = spec.sigma_z

    def phi(alpha, beta):
        s = math.hypot(alpha, sz)
        return (s / beta if beta > 0 else math.inf), beta * s

    return _solve_regularized(spec, cfg, phi, 2.0)


_DISPATCH = {
    W1: solve_w1,
    W2_DRO: solve_w2,
    W2_DRO_SQUARED: solve_squared_dro,
    DRE: solve_dre,
    DRE_SQUARED: solve_squared_dre,
}


def solve(spec: ProblemSpec, cfg: SolverConfig = SolverConfig()) -> Prediction:
    """Dispatch on ``spec.mode``."""
    return _DISPATCH[spec.mode](spec, cfg)
