import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from dromest import losses
from dromest.errors import BracketTooSmall, Degenerate, DomainError, NotSmooth
from dromest.losses import INF, LossModel

H1 = LossModel.huber(1.0)
MODELS = [LossModel.squared(), LossModel.absolute(), LossModel.huber(1.0), LossModel.huber(2.5)]
finite = st.floats(-50, 50, allow_nan=False)
taus = st.floats(0.01, 50, allow_nan=False)
models = st.sampled_from(MODELS)


def test_huber_values():
    assert losses.eval_loss(H1, 0.5) == pytest.approx(0.125, abs=1e-15)
    assert losses.eval_loss(H1, 2.0) == pytest.approx(1.5, abs=1e-15)


@pytest.mark.parametrize("m", MODELS)
def test_zero_at_origin(m):
    assert losses.eval_loss(m, 0.0) == 0.0


def test_conjugates():
    assert losses.conjugate(H1, 0.5) == pytest.approx(0.125)
    assert losses.conjugate(LossModel.absolute(), 2.0) == INF
    assert losses.conjugate(LossModel.squared(), 2.0) == pytest.approx(1.0)
    assert math.isinf(losses.conjugate(H1, 1.5))


def test_envelope_examples():
    a = LossModel.absolute()
    assert losses.moreau_envelope(a, 0.5, 1.0) == pytest.approx(0.125)
    assert losses.moreau_envelope(a, 2.0, 1.0) == pytest.approx(1.5)
    assert losses.moreau_envelope(LossModel.squared(), 1.0, 0.5) == pytest.approx(0.5)


def test_envelope_rejects_nonpositive_tau():
    for tau in (0.0, -1.0):
        with pytest.raises(DomainError):
            losses.moreau_envelope(H1, 1.0, tau)


def test_f_component():
    assert losses.f_component(LossModel.huber(2.0), -3.0) == pytest.approx(6.0)
    assert losses.f_component(H1, 0.0) == 0.0
    with pytest.raises(Degenerate):
        losses.f_component(LossModel.squared(), 1.0)
    with pytest.raises(NotSmooth):
        losses.f_component(LossModel.absolute(), 1.0)


def test_constants():
    assert losses.loss_constants(LossModel.squared()).lipschitz is None
    assert losses.loss_constants(LossModel.absolute()).smoothness_m is None
    c = losses.loss_constants(LossModel.huber(2.0))
    assert (c.lipschitz, c.smoothness_m) == (2.0, 1.0)


def test_huber_default_delta():
    assert LossModel.huber().delta == 1.345
    assert LossModel.from_config({"kind": "huber"}).delta == 1.345


def test_brute_force_examples():
    assert losses.brute_force_envelope(np.abs, 0.0, 1.0) == pytest.approx(0.0, abs=1e-12)
    v = losses.brute_force_envelope(np.square, 1.0, 0.5)
    # stationarity at v = c / (1 + 2 tau)
    vs = 1.0 / 2.0
    assert v == pytest.approx((1.0 - vs) ** 2 / 1.0 + vs**2, abs=1e-10)
    h = losses.brute_force_envelope(lambda x: losses.eval_loss(H1, x), 3.0, 1.0)
    assert h == pytest.approx(losses.moreau_envelope(H1, 3.0, 1.0), abs=1e-10)


def test_brute_force_bracket_too_small():
    with pytest.raises(BracketTooSmall):
        losses.brute_force_envelope(lambda v: (v - 100.0) ** 2, 0.0, 1.0, halfwidth=5.0)


@pytest.mark.parametrize("m", MODELS)
def test_oracle_agreement_grid(m):
    for tau in (0.1, 0.5, 1.0, 5.0, 20.0):
        for c in np.linspace(-10, 10, 81):
            ref = losses.brute_force_envelope(lambda v: losses.eval_loss(m, v), c, tau)
            assert abs(losses.moreau_envelope(m, c, tau) - ref) <= 1e-8


def test_prox_is_envelope_minimiser():
    for m in MODELS:
        for c in np.linspace(-6, 6, 25):
            for tau in (0.3, 2.0):
                v = losses.prox(m, c, tau)
                val = (c - v) ** 2 / (2 * tau) + losses.eval_loss(m, v)
                assert val == pytest.approx(losses.moreau_envelope(m, c, tau), abs=1e-12)


def test_f_envelope_pieces_match_closed_form():
    for t in (0.0, 0.2, 3.0):
        xs = np.linspace(-7, 7, 57)
        np.testing.assert_allclose(losses.eval_pieces(losses.f_envelope_pieces(H1, t), xs), losses.f_envelope(H1, xs, t), atol=1e-14)


@given(models, finite)
def test_symmetric_nonnegative(m, r):
    v = losses.eval_loss(m, r)
    assert v >= 0 and v == losses.eval_loss(m, -r)


@given(models, finite, finite, st.floats(0, 1))
def test_convexity(m, a, b, w):
    lhs = losses.eval_loss(m, w * a + (1 - w) * b)
    assert lhs <= w * losses.eval_loss(m, a) + (1 - w) * losses.eval_loss(m, b) + 1e-9 * (1 + a * a + b * b)


@given(models, finite)
def test_growth_bound(m, r):
    p = 1 if m.kind == "absolute" else 2
    C = max(1.0, m.delta or 1.0) ** 2 + 1.0
    assert losses.eval_loss(m, r) <= C * (1 + abs(r) ** p)


@given(st.sampled_from([LossModel.absolute(), H1, LossModel.huber(2.5)]), finite, finite)
def test_lipschitz(m, a, b):
    L = m.constants.lipschitz
    assert abs(losses.eval_loss(m, a) - losses.eval_loss(m, b)) <= L * abs(a - b) + 1e-9


@given(st.sampled_from([LossModel.squared(), H1]), finite, finite)
def test_smoothness(m, a, b):
    h = 1e-6
    d = lambda x: (losses.eval_loss(m, x + h) - losses.eval_loss(m, x - h)) / (2 * h)  # noqa: E731
    assert abs(d(a) - d(b)) <= m.constants.smoothness_m * abs(a - b) + 1e-4


@given(models, finite, taus, taus)
def test_envelope_bounds_and_monotone(m, c, t1, t2):
    lo, hi = sorted((t1, t2))
    e1, e2 = losses.moreau_envelope(m, c, lo), losses.moreau_envelope(m, c, hi)
    assert 0 <= e1 <= losses.eval_loss(m, c) + 1e-12
    assert e1 >= e2 - 1e-12


@given(models, finite, finite, st.floats(0, 1), taus)
def test_envelope_convex_in_c(m, a, b, w, tau):
    mid = losses.moreau_envelope(m, w * a + (1 - w) * b, tau)
    assert mid <= w * losses.moreau_envelope(m, a, tau) + (1 - w) * losses.moreau_envelope(m, b, tau) + 1e-9 * (1 + a * a + b * b)


@given(models, finite, st.floats(-3, 3))
def test_fenchel_young(m, x, u):
    conj = losses.conjugate(m, u)
    if math.isfinite(conj):
        assert losses.eval_loss(m, x) + conj >= x * u - 1e-9
    g = losses.loss_derivative(m, x)
    assert losses.eval_loss(m, x) + losses.conjugate(m, g) == pytest.approx(x * g, abs=1e-9 * (1 + x * x))


@settings(max_examples=30)
@given(st.floats(-10, 10), st.floats(0.2, 4.0))
def test_recovery_identity(c, delta):
    m = LossModel.huber(delta)
    env = losses.brute_force_envelope(lambda v: losses.f_component(m, v), c, 1.0)
    assert abs(env - losses.eval_loss(m, c)) <= 1e-8


def test_config_roundtrip():
    for m in MODELS:
        assert LossModel.from_config(m.to_config()) == m
    with pytest.raises(DomainError):
        LossModel.from_config({"kind": "hinge"})
    with pytest.raises(DomainError):
        LossModel.huber(0.0)
