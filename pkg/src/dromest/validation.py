"""Oracle checks for the closed-form envelopes and the norm-envelope limits."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import losses
from .losses import LossModel
from .noise import NoiseModel
from .scalar import e_function, expected_envelope_F, g_function

C_GRID = tuple(np.linspace(-10.0, 10.0, 81))
TAU_GRID = (0.1, 0.5, 1.0, 5.0, 20.0)
ENVELOPE_TOL = 1e-8
CONTINUITY_TOL = 1e-12


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_deviation: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.max_deviation <= self.tolerance


def envelope_check(loss: LossModel, huber_coefficient_error: float = 0.0) -> CheckResult:
    """Closed-form Moreau envelope against grid-plus-Brent minimisation.

    ``huber_coefficient_error`` perturbs the closed form multiplicatively for
    Huber losses; it exists only as a negative control.
    """
    worst = 0.0
    for tau in TAU_GRID:
        for c in C_GRID:
            closed = float(losses.moreau_envelope(loss, c, tau))
            if loss.kind == losses.HUBER:
                closed *= 1.0 + huber_coefficient_error
            brute = losses.brute_force_envelope(lambda v: losses.eval_loss(loss, v), c, tau)
            worst = max(worst, abs(closed - brute))
    return CheckResult(f"envelope[{loss.kind}]", worst, ENVELOPE_TOL)


def recovery_check(loss: LossModel) -> CheckResult:
    """``e_f(x, 1/M) = L(x)`` with the envelope of ``f`` found by brute force."""
    M = loss.constants.smoothness_m
    worst = 0.0
    for c in C_GRID:
        env = losses.brute_force_envelope(lambda v: losses.f_component(loss, v), c, 1.0 / M)
        worst = max(worst, abs(env - float(losses.eval_loss(loss, c))))
    return CheckResult(f"recovery[{loss.kind}]", worst, ENVELOPE_TOL)


def _jump(fn, boundary, *args):
    # the two branches evaluated one ulp apart at the switching point
    below = fn(args[0], math.nextafter(boundary, 0.0), *args[1:])
    above = fn(args[0], math.nextafter(boundary, math.inf), *args[1:])
    at = fn(args[0], boundary, *args[1:])
    return max(abs(below - at), abs(above - at))


def continuity_check(samples: int = 1000, seed: int = 7) -> list:
    rng = np.random.default_rng(seed)
    c = rng.uniform(-5.0, 5.0, samples)
    rho = rng.uniform(0.05, 2.0, samples)
    sig = rng.uniform(0.1, 3.0, samples)
    g_dev = e_dev = 0.0
    for ci, ri, si in zip(c, rho, sig):
        tau_g = math.sqrt(ri) * math.sqrt(ci * ci + si * si)
        g_dev = max(g_dev, _jump(g_function, tau_g, ci, ri, si))
        tau_e = math.sqrt(ci * ci + si * si)
        e_dev = max(e_dev, _jump(e_function, tau_e, ci, ri, si))
    return [CheckResult("continuity[G]", float(g_dev), CONTINUITY_TOL), CheckResult("continuity[E]", float(e_dev), CONTINUITY_TOL)]


def pointmass_check(loss: LossModel = LossModel.huber()) -> CheckResult:
    """With no noise and ``c = 0`` the expected f-envelope is ``e_f(0, t) = 0``."""
    dev = max(abs(expected_envelope_F(0.0, t, loss, NoiseModel.pointmass())) for t in TAU_GRID)
    return CheckResult("pointmass[F]", float(dev), ENVELOPE_TOL)


def run_suite(huber_coefficient_error: float = 0.0, huber_delta: float = 1.0) -> list:
    huber = LossModel.huber(huber_delta)
    out = [envelope_check(m, huber_coefficient_error) for m in (LossModel.absolute(), LossModel.squared(), huber)]
    out.append(recovery_check(huber))
    out.extend(continuity_check())
    out.append(pointmass_check(huber))
    return out
