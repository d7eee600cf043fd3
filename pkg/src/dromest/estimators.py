"""scikit-learn compatible wrappers around the finite-sample fitters.

Both estimators fit a linear model without intercept (the data model is
``y = X theta0 + z``); centre the data beforehand if an offset is needed.
The ``epsilon`` and ``lam`` parameters are used as given, without any
dimension-dependent scaling.
"""

from __future__ import annotations

from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_is_fitted, validate_data

from .finite_sample import Dataset, FitOptions, fit_dre, fit_w1, fit_w2_smooth, fit_w2_squared
from .losses import DEFAULT_HUBER_DELTA, LossModel


def _loss(kind: str, delta: float) -> LossModel:
    if kind == "huber":
        return LossModel.huber(delta)
    return LossModel(kind)


class _Base(RegressorMixin, BaseEstimator):
    def _store(self, res):
        self.coef_ = res.theta_hat
        self.intercept_ = 0.0
        self.objective_ = res.objective
        self.n_iter_ = res.iterations
        self.converged_ = res.converged
        return self

    def predict(self, X):
        check_is_fitted(self, "coef_")
        X = validate_data(self, X, reset=False)
        return X @ self.coef_


class WassersteinRegressor(_Base):
    """Wasserstein distributionally robust linear regression.

    Parameters
    ----------
    loss : {"huber", "absolute", "squared"}
    order : {1, 2}
        Order of the transport cost.
    epsilon : float
        Ambiguity radius.
    delta : float
        Huber threshold (ignored for other losses).
    radius : float
        Per-coordinate bound ``R`` on the coefficients (``||coef|| <= R sqrt(d)``);
        only used by ``order=2`` with a non-squared loss.
    """

    def __init__(self, loss="huber", order=1, epsilon=0.0, delta=DEFAULT_HUBER_DELTA, radius=4.0, max_iter=20_000, tol=1e-10):
        self.loss = loss
        self.order = order
        self.epsilon = epsilon
        self.delta = delta
        self.radius = radius
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        if self.order not in (1, 2):
            raise ValueError("order must be 1 or 2")
        if self.epsilon < 0:
            raise ValueError("epsilon must be nonnegative")
        data = Dataset(X, y)
        opts = FitOptions(max_iter=self.max_iter, tol=self.tol)
        loss = _loss(self.loss, self.delta)
        if self.order == 1:
            res = fit_w1(data, loss, self.epsilon, opts)
        elif self.loss == "squared":
            res = fit_w2_squared(data, self.epsilon, opts)
        else:
            res = fit_w2_smooth(data, loss, self.epsilon, self.radius, opts)
        return self._store(res)


class DistributionallyRegularizedRegressor(_Base):
    """Linear regression with a Wasserstein-2 transport penalty of price ``lam``.

    ``lam=None`` uses ``M radius^2 d``, twice the smallest admissible price.
    """

    def __init__(self, loss="huber", lam=None, delta=DEFAULT_HUBER_DELTA, radius=4.0, max_iter=20_000, tol=1e-10):
        self.loss = loss
        self.lam = lam
        self.delta = delta
        self.radius = radius
        self.max_iter = max_iter
        self.tol = tol

    def fit(self, X, y):
        X, y = validate_data(self, X, y, y_numeric=True)
        loss = _loss(self.loss, self.delta)
        lam = self.lam
        if lam is None:
            if loss.constants.smoothness_m is None:
                raise ValueError("the absolute loss is not smooth; use WassersteinRegressor(order=1)")
            lam = loss.constants.smoothness_m * self.radius**2 * X.shape[1]
        res = fit_dre(Dataset(X, y), loss, lam, self.radius, FitOptions(max_iter=self.max_iter, tol=self.tol))
        return self._store(res)


__all__ = ["WassersteinRegressor", "DistributionallyRegularizedRegressor"]
