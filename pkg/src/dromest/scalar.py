"""Deterministic scalar functions of the asymptotic characterisations.

Notation: ``alpha`` is the limiting error norm, ``beta``/``tau1``/``tau2`` are
the auxiliary scalar variables, ``rho = d/n``. The expected envelopes are

* ``L(c, tau) = E[e_L(cG + Z, tau) - shift * L(Z)]``,
* ``F(c, tau) = E[e_f(cG + Z, tau)]`` where ``L = e_f(., 1/M)``,

and ``G``/``E`` are the closed-form norm-envelope limits. Every objective
below is one of the five minimax displays, evaluated pointwise.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

from . import losses
from .errors import ConfigError, Degenerate, DomainError, NotSmooth, UseSquaredSpecialization
from .linesearch import Bracket, minimize_convex_1d
from .losses import LossModel
from .noise import NoiseModel, QuadratureConfig, piecewise_expectation

W1 = "w1"
W2_DRO = "w2_dro"
W2_DRO_SQUARED = "w2_dro_squared"
DRE = "dre"
DRE_SQUARED = "dre_squared"
MODES = (W1, W2_DRO, W2_DRO_SQUARED, DRE, DRE_SQUARED)


@dataclass(frozen=True)
class ProblemSpec:
    """One asymptotic prediction problem.

    ``epsilon0`` is used by the Wasserstein modes, ``lambda0`` by the
    regularised ones. ``R_theta`` defaults to ``4 * sigma_theta0``.
    """

    mode: str
    loss: LossModel
    noise: NoiseModel
    rho: float
    epsilon0: float = 0.0
    lambda0: float | None = None
    sigma_theta0: float = 1.0
    R_theta: float | None = None
    L_lower: float | None = None
    shift: bool = False

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"unknown mode {self.mode!r}; expected one of {MODES}")
        for name in ("rho", "sigma_theta0"):
            v = float(getattr(self, name))
            if not (v > 0 and math.isfinite(v)):
                raise ConfigError(f"{name} must be positive and finite, got {getattr(self, name)}")
            object.__setattr__(self, name, v)
        R = 4.0 * self.sigma_theta0 if self.R_theta is None else float(self.R_theta)
        if not (R > 0 and math.isfinite(R)):
            raise ConfigError(f"R_theta must be positive and finite, got {self.R_theta}")
        object.__setattr__(self, "R_theta", R)
        eps0 = float(self.epsilon0)
        if not (eps0 >= 0 and math.isfinite(eps0)):
            raise ConfigError(f"epsilon0 must be nonnegative and finite, got {self.epsilon0}")
        object.__setattr__(self, "epsilon0", eps0)
        if self.L_lower is not None:
            ll = float(self.L_lower)
            if not (ll > 0 and math.isfinite(ll)):
                raise ConfigError(f"L_lower must be positive, got {self.L_lower}")
            object.__setattr__(self, "L_lower", ll)
        self._check_mode()

    def _check_mode(self):
        kind, sigma, R = self.loss.kind, self.sigma_theta0, self.R_theta
        if self.mode == W1:
            if self.loss.constants.lipschitz is None and self.epsilon0 > 0:
                raise ConfigError("w1 with epsilon0 > 0 needs a Lipschitz loss (the squared loss has none)")
        elif self.mode == W2_DRO:
            if not self.loss.smooth:
                raise ConfigError("w2_dro needs a smooth loss (absolute is not smooth)")
            if R < 2.0 * sigma:
                raise ConfigError(f"w2_dro needs R_theta >= 2 sigma_theta0 (got R_theta={R}, sigma_theta0={sigma})")
        elif self.mode == W2_DRO_SQUARED:
            if kind != losses.SQUARED:
                raise ConfigError("w2_dro_squared needs the squared loss")
        else:
            if self.lambda0 is None:
                raise ConfigError(f"{self.mode} needs lambda0")
            lam0 = float(self.lambda0)
            object.__setattr__(self, "lambda0", lam0)
            if self.mode == DRE_SQUARED:
                if kind != losses.SQUARED:
                    raise ConfigError("dre_squared needs the squared loss")
                if not lam0 > R * R:
                    raise ConfigError(f"dre_squared needs lambda0 > R_theta^2 = {R * R:g} (got {lam0:g})")
            else:
                if not self.loss.smooth:
                    raise ConfigError("dre needs a smooth loss (absolute is not smooth)")
                if R < sigma:
                    raise ConfigError(f"dre needs R_theta >= sigma_theta0 (got R_theta={R}, sigma_theta0={sigma})")
                M = self.loss.constants.smoothness_m
                if not lam0 > M * R * R / 2.0:
                    raise ConfigError(f"dre needs lambda0 > M R_theta^2 / 2 = {M * R * R / 2:g} (got {lam0:g})")

    @property
    def M(self) -> float | None:
        return self.loss.constants.smoothness_m

    @property
    def sigma_z(self) -> float:
        return self.noise.sigma_z

    @property
    def constants(self) -> "DerivedConstants":
        return derived_constants(self)

    def to_dict(self) -> dict:
        return {
            "mode": self.mode,
            "loss": self.loss.to_config(),
            "noise": self.noise.to_config(),
            "rho": self.rho,
            "epsilon0": self.epsilon0,
            "lambda0": self.lambda0,
            "sigma_theta0": self.sigma_theta0,
            "R_theta": self.R_theta,
            "L_lower": self.L_lower,
            "shift": self.shift,
        }

    @classmethod
    def from_dict(cls, cfg: dict) -> "ProblemSpec":
        if not isinstance(cfg, dict):
            raise ConfigError("problem must be a JSON object")
        allowed = {"mode", "loss", "noise", "rho", "epsilon0", "lambda0", "sigma_theta0", "R_theta", "L_lower", "shift"}
        unknown = set(cfg) - allowed
        if unknown:
            raise ConfigError(f"unknown problem fields: {sorted(unknown)}")
        for req in ("mode", "rho"):
            if req not in cfg:
                raise ConfigError(f"problem.{req} is required")
        mode = str(cfg["mode"]).lower()
        default_loss = {"kind": "squared"} if mode in (W2_DRO_SQUARED, DRE_SQUARED) else None
        loss_cfg = cfg.get("loss", default_loss)
        if loss_cfg is None:
            raise ConfigError("problem.loss is required for this mode")
        try:
            loss = LossModel.from_config(loss_cfg)
            noise = NoiseModel.from_config(cfg.get("noise", {"kind": "gaussian", "sigma": 1.0}))
        except DomainError as exc:
            raise ConfigError(str(exc)) from exc
        try:
            return cls(
                mode=mode,
                loss=loss,
                noise=noise,
                rho=cfg["rho"],
                epsilon0=cfg.get("epsilon0", 0.0),
                lambda0=cfg.get("lambda0"),
                sigma_theta0=cfg.get("sigma_theta0", 1.0),
                R_theta=cfg.get("R_theta"),
                L_lower=cfg.get("L_lower"),
                shift=bool(cfg.get("shift", False)),
            )
        except (TypeError, ValueError) as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(str(exc)) from exc


@dataclass(frozen=True)
class DerivedConstants:
    B: float
    p_const: float
    q_const: float
    eps0_max: float | None


def derived_constants(spec: ProblemSpec) -> DerivedConstants:
    M = spec.M
    if M is None:
        raise NotSmooth("derived constants need a smooth loss")
    rho, eps0, R = spec.rho, spec.epsilon0, spec.R_theta
    B = math.sqrt(eps0 * rho) * M * R
    p = eps0 * math.sqrt(rho) * M * R / 2.0
    q = 2.0 * math.sqrt(rho) * M * R
    eps0_max = None if spec.L_lower is None else spec.L_lower / (rho * M * M * R * R)
    return DerivedConstants(B=B, p_const=p, q_const=q, eps0_max=eps0_max)


# -- closed-form norm-envelope limits ----------------------------------------------


def g_function(c: float, tau: float, rho: float, sigma_theta0: float) -> float:
    """Limit of the norm envelope on the signal side (two branches)."""
    s2 = c * c + sigma_theta0 * sigma_theta0
    sr = math.sqrt(rho)
    if sr * math.sqrt(s2) > tau:
        return math.sqrt(s2 / rho) - tau / (2.0 * rho) - sigma_theta0 / sr
    return s2 / (2.0 * tau) - sigma_theta0 / sr


def e_function(c: float, tau: float, rho: float, sigma_z: float) -> float:
    """Limit of the norm envelope on the residual side.

    The additive constant is ``-sigma_z`` in both branches, which is what the
    limit of ``(e(cg + z) - sqrt(n)||z||)/n`` produces; it does not depend on
    any optimisation variable, so it shifts values but never moves ``alpha``.
    ``rho`` is accepted for signature symmetry with :func:`g_function`.
    """
    s2 = c * c + sigma_z * sigma_z
    s = math.sqrt(s2)
    if s > tau:
        return s - tau / 2.0 - sigma_z
    return s2 / (2.0 * tau) - sigma_z


# -- expected envelopes ----------------------------------------------------------------

_QUANT = 12  # decimal places of the memo key


class EnvelopeEvaluator:
    """Memoised ``L`` and ``F`` for one (loss, noise, quadrature, shift).

    Arguments are rounded to 1e-12 and evaluated at the rounded point, so a
    value depends only on its key. ``tau = 0`` returns the limit
    (``E L`` resp. ``E f``); ``tau = inf`` returns the limit 0 (minus the shift).
    """

    def __init__(self, loss: LossModel, noise: NoiseModel, cfg: QuadratureConfig = QuadratureConfig(), shift: bool = False):
        self.loss, self.noise, self.cfg, self.shift = loss, noise, cfg, shift
        self._L = lru_cache(maxsize=1 << 16)(self._L_raw)
        self._F = lru_cache(maxsize=1 << 16)(self._F_raw)
        self._shift_value = None

    def shift_value(self) -> float:
        if self._shift_value is None:
            self._shift_value = piecewise_expectation(losses.loss_pieces(self.loss), 0.0, self.noise, self.cfg)
        return self._shift_value

    def _L_raw(self, c: float, tau: float) -> float:
        base = 0.0 if math.isinf(tau) else piecewise_expectation(losses.envelope_pieces(self.loss, tau), c, self.noise, self.cfg)
        return base - self.shift_value() if self.shift else base

    def _F_raw(self, c: float, tau: float) -> float:
        if math.isinf(tau):
            return 0.0
        return piecewise_expectation(losses.f_envelope_pieces(self.loss, tau), c, self.noise, self.cfg)

    @staticmethod
    def _key(c, tau):
        if tau < 0 or math.isnan(tau):
            raise DomainError("envelope parameter must be nonnegative")
        tau = float(tau) if math.isinf(tau) else round(float(tau), _QUANT)
        return round(abs(float(c)), _QUANT), tau

    def L(self, c: float, tau: float) -> float:
        return self._L(*self._key(c, tau))

    def F(self, c: float, tau: float) -> float:
        if self.loss.kind == losses.SQUARED:
            raise UseSquaredSpecialization("F is infinite for the squared loss; use the squared-loss path")
        if self.loss.kind == losses.ABSOLUTE:
            raise NotSmooth("F needs a smooth loss")
        return self._F(*self._key(c, tau))


@lru_cache(maxsize=64)
def get_evaluator(loss: LossModel, noise: NoiseModel, cfg: QuadratureConfig = QuadratureConfig(), shift: bool = False) -> EnvelopeEvaluator:
    return EnvelopeEvaluator(loss, noise, cfg, shift)


def _ev(spec: ProblemSpec, cfg) -> EnvelopeEvaluator:
    if isinstance(cfg, EnvelopeEvaluator):
        return cfg
    return get_evaluator(spec.loss, spec.noise, cfg or QuadratureConfig(), spec.shift)


def _positive(**kw):
    for k, v in kw.items():
        if not v > 0:
            raise DomainError(f"{k} must be positive, got {v}")


def expected_shifted_envelope_L(c, tau, loss, noise, cfg=QuadratureConfig(), shift=False) -> float:
    _positive(tau=tau)
    return get_evaluator(loss, noise, cfg, bool(shift)).L(c, tau)


def expected_envelope_F(c, tau, loss, noise, cfg=QuadratureConfig()) -> float:
    _positive(tau=tau)
    try:
        losses.f_component(loss, 0.0)
    except Degenerate as exc:
        raise UseSquaredSpecialization(str(exc)) from exc
    return get_evaluator(loss, noise, cfg).F(c, tau)


# -- the minimax displays -------------------------------------------------------------


def _lip_weight(spec: ProblemSpec) -> float:
    if spec.epsilon0 == 0.0:
        return 0.0
    return spec.epsilon0 * spec.loss.constants.lipschitz


def _ratio(tau1, beta):
    return math.inf if beta == 0 else tau1 / beta


def objective_w1(alpha, tau1, tau2, beta, spec: ProblemSpec, cfg=None) -> float:
    ev = _ev(spec, cfg)
    lam = _lip_weight(spec)
    rho, sig = spec.rho, spec.sigma_theta0
    _positive(tau1=tau1, tau2=tau2)
    val = beta * tau1 / 2.0 - alpha * tau2 / 2.0 - alpha * beta * beta / (2.0 * tau2)
    val += ev.L(alpha, _ratio(tau1, beta)) / rho
    if lam > 0:
        val += lam * g_function(alpha * beta / tau2, alpha * lam / tau2, rho, sig)
    return val


def objective_sq_dro(alpha, tau1, tau2, beta, spec: ProblemSpec, cfg=None) -> float:
    rho, sig, sz = spec.rho, spec.sigma_theta0, spec.sigma_z
    r = math.sqrt(spec.epsilon0)
    _positive(tau1=tau1, tau2=tau2)
    val = beta * tau1 / 2.0 - alpha * tau2 / 2.0 - alpha * beta * beta / (2.0 * tau2)
    t = _ratio(tau1, beta)
    val += (-sz if math.isinf(t) else e_function(alpha, t, rho, sz)) / rho
    if r > 0:
        val += r * g_function(alpha * beta / tau2, alpha * r / tau2, rho, sig)
    return val


def _F_term(ev: EnvelopeEvaluator, alpha, tau1, beta):
    # beta*tau1/2 + F(alpha, tau1/beta), with the beta -> 0 limit F(alpha, inf) = 0
    if beta == 0:
        return 0.0
    return beta * tau1 / 2.0 + ev.F(alpha, tau1 / beta)


def objective_o1(alpha, tau1, tau2, beta, spec: ProblemSpec, cfg=None) -> float:
    ev = _ev(spec, cfg)
    _positive(tau1=tau1, tau2=tau2)
    rho, sig, M = spec.rho, spec.sigma_theta0, spec.M
    r = math.sqrt(spec.epsilon0)
    val = _F_term(ev, alpha, tau1, beta) + r * beta * tau2 / 2.0 - beta * beta / (2.0 * M)
    val -= alpha * beta * math.sqrt(rho) * math.sqrt(rho * spec.epsilon0 * sig * sig / (tau2 * tau2) + 1.0)
    val += r * beta * rho * (sig * sig + alpha * alpha) / (2.0 * tau2)
    return val


def o2_tau2_section(alpha, beta, tau2, spec: ProblemSpec) -> float:
    """The tau2-dependent part of the second display (excluding tau1 and F)."""
    k = spec.constants
    rho, sig = spec.rho, spec.sigma_theta0
    cc = k.p_const + beta * beta / k.q_const
    return (
        cc * tau2 / 2.0
        - alpha * math.sqrt(rho) * math.sqrt(cc * cc * rho * sig * sig / (tau2 * tau2) + beta * beta)
        + rho * cc * (sig * sig + alpha * alpha) / (2.0 * tau2)
    )


def o2_tau2_inf(alpha, beta, spec: ProblemSpec, tol: float = 1e-9) -> tuple[float, float]:
    """``(tau2*, value)`` of the inner infimum over tau2 > 0."""
    k = spec.constants
    cc = k.p_const + beta * beta / k.q_const
    if cc == 0.0:
        return math.inf, 0.0
    scale = math.sqrt(spec.rho) * (spec.sigma_theta0 + alpha) + 1.0
    return minimize_convex_1d(
        lambda t: o2_tau2_section(alpha, beta, t, spec), Bracket(0.0, 10.0 * scale, open_lo=True, open_hi=True), tol, max_growth=1e6
    )


def objective_o2(alpha, tau1, beta, spec: ProblemSpec, cfg=None) -> float:
    ev = _ev(spec, cfg)
    _positive(tau1=tau1)
    return _F_term(ev, alpha, tau1, beta) - beta * beta / (2.0 * spec.M) + o2_tau2_inf(alpha, beta, spec)[1]


def dre_beta_terms(alpha, beta, spec: ProblemSpec) -> float:
    sig, lam0, rho = spec.sigma_theta0, spec.lambda0, spec.rho
    return beta * beta * (sig * sig + alpha * alpha) / (4.0 * lam0) - alpha * beta * math.sqrt(
        rho + beta * beta * sig * sig / (4.0 * lam0 * lam0)
    )


def objective_dre(alpha, tau1, beta, spec: ProblemSpec, cfg=None) -> float:
    ev = _ev(spec, cfg)
    _positive(tau1=tau1)
    return _F_term(ev, alpha, tau1, beta) - beta * beta / (2.0 * spec.M) + dre_beta_terms(alpha, beta, spec)


def objective_sq_dre(alpha, beta, spec: ProblemSpec) -> float:
    sz = spec.sigma_z
    return beta * math.hypot(alpha, sz) - beta * beta / 4.0 + dre_beta_terms(alpha, beta, spec)
