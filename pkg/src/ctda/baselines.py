"""Multivariate linear-regression baselines over a common lag window.

Unlike the per-channel equalizer bank, these models regress the target on
*all* channels jointly: the regressors at index ``t`` are every channel's
samples ``x_m[t - l]`` for ``l = 0 .. lag``.  ``fit_ols`` is plain least
squares; ``fit_bayes`` is the Gaussian-prior posterior mean, equivalent to
ridge regression with penalty ``noise_variance / prior_variance``.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

_JITTER = 1e-10

METHODS = ("ols", "bayes")


@dataclass(frozen=True)
class LinearModel:
    """Joint linear regression coefficients over all channels.

    ``coefficients[m * (lag + 1) + l]`` multiplies ``x_m[t - l]``; the fit
    is affine, so ``intercept`` absorbs all the channel and target means.
    """

    coefficients: np.ndarray
    intercept: float
    common_lag: int
    residual_mse: float
    method: str = "ols"
    degenerate: bool = False

    def __post_init__(self):
        coef = np.asarray(self.coefficients, dtype=float)
        object.__setattr__(self, "coefficients", coef)
        if self.common_lag < 0:
            raise ValueError("lag must be >= 0")
        if coef.ndim != 1 or coef.size == 0 or coef.size % (self.common_lag + 1):
            raise ValueError(
                f"coefficient count {coef.size} does not split into whole "
                f"channels of {self.common_lag + 1} lags"
            )
        if not np.all(np.isfinite(coef)) or not np.isfinite(self.intercept):
            raise ValueError("coefficients and intercept must be finite")
        if self.residual_mse < 0:
            raise ValueError("residual MSE cannot be negative")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}")

    @property
    def n_channels(self) -> int:
        return int(self.coefficients.size // (self.common_lag + 1))


def _as_matrix(xs) -> np.ndarray:
    x = np.asarray(xs, dtype=float)
    if x.ndim == 1:
        x = x[None, :]
    if x.ndim != 2:
        raise ValueError("inputs must be one series or a stack of series")
    if not np.all(np.isfinite(x)):
        raise ValueError("series must be finite")
    return x


def _design(x: np.ndarray, lag: int) -> np.ndarray:
    """Rows y-index t = lag..T-1; columns (channel, lag) with newest first."""
    blocks = [sliding_window_view(xm, lag + 1)[:, ::-1] for xm in x]
    return np.hstack(blocks)


def _solve_centered(a, targets, penalty: float):
    col_means = a.mean(axis=0)
    y_mean = float(targets.mean())
    ac = a - col_means
    yc = targets - y_mean
    gram = ac.T @ ac
    rhs = ac.T @ yc
    degenerate = bool(np.linalg.matrix_rank(gram + penalty * np.eye(a.shape[1])) < a.shape[1])
    if degenerate:
        gram = gram + _JITTER * max(np.trace(gram), 1.0) * np.eye(a.shape[1])
    coef = np.linalg.solve(gram + penalty * np.eye(a.shape[1]), rhs)
    intercept = y_mean - float(coef @ col_means)
    residuals = targets - (a @ coef + intercept)
    return coef, intercept, float(np.mean(residuals**2)), degenerate


def fit_ols(xs, y, common_lag: int) -> LinearModel:
    """Ordinary least squares of ``y[t]`` on every ``x_m[t - l]``.

    Rank-deficient designs (collinear channels) are diagonally loaded and
    flagged ``degenerate``.
    """
    x = _as_matrix(xs)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != x.shape[1]:
        raise ValueError("target must be a series matching the inputs' length")
    if common_lag < 0:
        raise ValueError("lag must be >= 0")
    if x.shape[1] <= common_lag + 1:
        raise ValueError(
            f"insufficient data: {x.shape[1]} samples cannot fit lag {common_lag}"
        )
    a = _design(x, common_lag)
    coef, intercept, mse, degenerate = _solve_centered(a, y[common_lag:], 0.0)
    return LinearModel(coef, intercept, common_lag, mse, "ols", degenerate)


def fit_bayes(
    xs,
    y,
    common_lag: int,
    prior_variance: float = 1.0,
    noise_variance: float | None = None,
) -> LinearModel:
    """Posterior-mean coefficients under a zero-mean Gaussian prior.

    Equivalent to ridge regression with penalty ``noise_variance /
    prior_variance`` on the centered design.  When ``noise_variance`` is
    omitted, the OLS residual variance of the same design is used.
    """
    if prior_variance <= 0:
        raise ValueError("prior variance must be positive")
    if noise_variance is None:
        noise_variance = fit_ols(xs, y, common_lag).residual_mse
    if noise_variance < 0:
        raise ValueError("noise variance cannot be negative")
    x = _as_matrix(xs)
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or y.size != x.shape[1]:
        raise ValueError("target must be a series matching the inputs' length")
    if x.shape[1] <= common_lag + 1:
        raise ValueError(
            f"insufficient data: {x.shape[1]} samples cannot fit lag {common_lag}"
        )
    a = _design(x, common_lag)
    penalty = noise_variance / prior_variance
    coef, intercept, mse, degenerate = _solve_centered(a, y[common_lag:], penalty)
    return LinearModel(coef, intercept, common_lag, mse, "bayes", degenerate)


def predict(model: LinearModel, xs, n: int) -> float:
    """Regression estimate of ``y[n]`` from all channels' lag windows."""
    x = _as_matrix(xs)
    if x.shape[0] != model.n_channels:
        raise ValueError(
            f"model covers {model.n_channels} channels, got {x.shape[0]}"
        )
    if not 0 <= n < x.shape[1]:
        raise ValueError(f"index {n} outside series of length {x.shape[1]}")
    if n < model.common_lag:
        raise ValueError(
            f"insufficient history: index {n} needs {model.common_lag} past samples"
        )
    window = x[:, n - model.common_lag : n + 1][:, ::-1].reshape(-1)
    return model.intercept + float(model.coefficients @ window)


def predict_series(model: LinearModel, xs, indices) -> np.ndarray:
    """Vectorized :func:`predict` at several indices."""
    x = _as_matrix(xs)
    idx = np.asarray(indices, dtype=np.int64)
    if idx.size == 0:
        return np.zeros(0)
    if idx.min() < model.common_lag or idx.max() >= x.shape[1]:
        raise ValueError("some indices lack a full window")
    rows = _design(x, model.common_lag)[idx - model.common_lag]
    return model.intercept + rows @ model.coefficients


def linear_model_to_dict(model: LinearModel) -> dict:
    return {
        "type": model.method,
        "coefficients": model.coefficients.tolist(),
        "intercept": model.intercept,
        "common_lag": model.common_lag,
        "residual_mse": model.residual_mse,
    }


def linear_model_from_dict(obj: dict) -> LinearModel:
    try:
        return LinearModel(
            coefficients=np.asarray(obj["coefficients"], dtype=float),
            intercept=float(obj["intercept"]),
            common_lag=int(obj["common_lag"]),
            residual_mse=float(obj["residual_mse"]),
            method=str(obj["type"]),
        )
    except KeyError as exc:
        raise ValueError(f"model object missing key {exc}") from exc
