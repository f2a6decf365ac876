"""Combine the estimates of several per-channel tap-delay-line models.

Mirrors receive diversity: each input series is an independent "branch"
observing the same target, and branch estimates are merged with one of

* ``mrc_inverse_mse``  -- weights proportional to inverse branch MSE,
* ``mrc_lmmse``        -- jointly least-squares optimal linear weights,
* ``equal_gain``       -- uniform weights,
* ``selective``        -- best single branch only.

Inverse-MSE and equal-gain weights are convex (nonnegative, sum to one);
LMMSE weights are unconstrained.
"""

from __future__ import annotations

import dataclasses
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .equalizer import EqualizerModel, estimate_series, model_from_dict, model_to_dict

FUSION_MODES = ("mrc_inverse_mse", "mrc_lmmse", "equal_gain", "selective")

_ALPHA_TOL = 1e-9
_JITTER = 1e-10


@dataclass(frozen=True)
class FusionModel:
    """A bank of named branch models plus their combining weights."""

    channels: tuple
    alphas: np.ndarray
    mode: str
    degenerate: bool = False

    def __post_init__(self):
        channels = tuple(self.channels)
        object.__setattr__(self, "channels", channels)
        alphas = np.asarray(self.alphas, dtype=float)
        object.__setattr__(self, "alphas", alphas)
        if len(channels) < 1:
            raise ValueError("fusion needs at least one channel")
        for entry in channels:
            name, model = entry
            if not isinstance(model, EqualizerModel):
                raise ValueError(f"channel {name!r} is not an equalizer model")
        if alphas.shape != (len(channels),):
            raise ValueError("need exactly one weight per channel")
        if not np.all(np.isfinite(alphas)):
            raise ValueError("combining weights must be finite")
        if self.mode not in FUSION_MODES:
            raise ValueError(f"unknown fusion mode {self.mode!r}")
        if self.mode in ("mrc_inverse_mse", "equal_gain"):
            if np.any(alphas < -_ALPHA_TOL) or abs(alphas.sum() - 1.0) > _ALPHA_TOL:
                raise ValueError(f"{self.mode} weights must be convex")
        if self.mode == "selective":
            hot = np.isclose(alphas, 1.0, atol=_ALPHA_TOL)
            cold = np.isclose(alphas, 0.0, atol=_ALPHA_TOL)
            if hot.sum() != 1 or not np.all(hot | cold):
                raise ValueError("selective weights must pick exactly one channel")

    @property
    def names(self) -> list:
        return [name for name, _ in self.channels]

    @property
    def models(self) -> list:
        return [model for _, model in self.channels]


def mrc_weights_inverse_mse(mses) -> np.ndarray:
    """Convex weights proportional to ``1 / mse`` per channel.

    A zero-MSE channel is a perfect branch: the first such channel takes
    all the weight.
    """
    m = np.asarray(mses, dtype=float)
    if m.ndim != 1 or m.size == 0:
        raise ValueError("need a non-empty vector of MSEs")
    if np.any(m < 0) or not np.all(np.isfinite(m)):
        raise ValueError("MSEs must be finite and nonnegative")
    alphas = np.zeros(m.size)
    zero = np.flatnonzero(m == 0)
    if zero.size:
        alphas[zero[0]] = 1.0
        return alphas
    inv = 1.0 / m
    return inv / inv.sum()


def mrc_weights_lmmse(predictions, y):
    """Unconstrained least-squares combining weights.

    Solves ``E[p p^T] alpha = E[p y]`` with sample moments over the supplied
    window, i.e. the weights minimizing the MSE of ``alpha @ predictions``.
    Returns ``(alphas, degenerate)``; a rank-deficient moment matrix (e.g.
    duplicated branches) is diagonally loaded and flagged.
    """
    p = np.atleast_2d(np.asarray(predictions, dtype=float))
    y = np.asarray(y, dtype=float)
    if y.ndim != 1 or p.shape[1] != y.size:
        raise ValueError("predictions must be (M, n) matching targets of length n")
    if p.shape[1] == 0:
        raise ValueError("need at least one sample to estimate moments")
    n = p.shape[1]
    gram = (p @ p.T) / n
    rhs = (p @ y) / n
    degenerate = bool(np.linalg.matrix_rank(gram) < p.shape[0])
    if degenerate:
        gram = gram + _JITTER * max(np.trace(gram), 1.0) * np.eye(p.shape[0])
    return np.linalg.solve(gram, rhs), degenerate


def equal_gain_weights(n_channels: int) -> np.ndarray:
    if n_channels < 1:
        raise ValueError("need at least one channel")
    return np.full(n_channels, 1.0 / n_channels)


def selective_weights(mses) -> np.ndarray:
    """One-hot weights picking the smallest-MSE channel (first on ties)."""
    m = np.asarray(mses, dtype=float)
    if m.ndim != 1 or m.size == 0:
        raise ValueError("need a non-empty vector of MSEs")
    alphas = np.zeros(m.size)
    alphas[int(np.argmin(m))] = 1.0
    return alphas


def fuse(model: FusionModel, inputs: Sequence, n: int) -> float:
    """Combined estimate at window-end index ``n``.

    ``inputs[m]`` is the full input series of channel ``m``; each branch
    forms its own window estimate and the weighted sum is returned.
    """
    if len(inputs) != len(model.channels):
        raise ValueError("need one input series per channel")
    total = 0.0
    for alpha, (name, eq), x in zip(model.alphas, model.channels, inputs):
        est = estimate_series(eq, x, [n])[0]
        total += alpha * est
    return float(total)


def fuse_series(model: FusionModel, inputs: Sequence, indices) -> np.ndarray:
    """Vectorized :func:`fuse` over several window-end indices."""
    if len(inputs) != len(model.channels):
        raise ValueError("need one input series per channel")
    idx = np.asarray(indices, dtype=np.int64)
    out = np.zeros(idx.size)
    for alpha, (_, eq), x in zip(model.alphas, model.channels, inputs):
        out += alpha * estimate_series(eq, x, idx)
    return out


def select_channels(channels, policy: str, k: int | None = None, threshold: float | None = None):
    """Filter a list of ``(name, model)`` pairs before fusing.

    ``top_k`` keeps the ``k`` smallest validation-MSE channels (ties broken
    by name); asking for more channels than exist keeps them all with a
    warning.  ``mse_threshold`` keeps channels with validation MSE at most
    ``threshold``; when none qualify the single best channel is kept and
    the returned flag is True.

    Returns ``(selected, forced_best)``.
    """
    channels = list(channels)
    if not channels:
        raise ValueError("no channels to select from")
    ranked = sorted(channels, key=lambda nc: (nc[1].validation_mse, nc[0]))
    if policy == "top_k":
        if k is None or k < 1:
            raise ValueError("top_k selection needs k >= 1")
        if k > len(channels):
            warnings.warn(
                f"requested top {k} of {len(channels)} channels; keeping all",
                stacklevel=2,
            )
            k = len(channels)
        return ranked[:k], False
    if policy == "mse_threshold":
        if threshold is None:
            raise ValueError("mse_threshold selection needs a threshold")
        kept = [nc for nc in ranked if nc[1].validation_mse <= threshold]
        if kept:
            return kept, False
        return ranked[:1], True
    raise ValueError(f"unknown selection policy {policy!r}")


def online_alpha_update(model: FusionModel, squared_errors, window: int) -> FusionModel:
    """Refresh inverse-MSE weights from a trailing window of squared errors.

    ``squared_errors[m]`` holds channel ``m``'s past squared estimation
    errors, oldest first.  Only the last ``window`` entries count; if fewer
    are available they are all used (with a warning).  With no completed
    errors at all the model is returned unchanged.
    """
    if model.mode != "mrc_inverse_mse":
        raise ValueError("online weight updates require mrc_inverse_mse fusion")
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(squared_errors) != len(model.channels):
        raise ValueError("need one error history per channel")
    histories = [np.asarray(h, dtype=float) for h in squared_errors]
    if any(h.size == 0 for h in histories):
        return model
    if any(h.size < window for h in histories):
        warnings.warn(
            "fewer completed errors than the update window; using all available",
            stacklevel=2,
        )
    mses = np.array([h[-window:].mean() for h in histories])
    return dataclasses.replace(model, alphas=mrc_weights_inverse_mse(mses))


def fusion_to_dict(model: FusionModel) -> dict:
    return {
        "mode": model.mode,
        "alphas": model.alphas.tolist(),
        "channels": [
            {"name": name, "model": model_to_dict(eq)} for name, eq in model.channels
        ],
    }


def fusion_from_dict(obj: dict) -> FusionModel:
    try:
        channels = tuple(
            (entry["name"], model_from_dict(entry["model"]))
            for entry in obj["channels"]
        )
        return FusionModel(
            channels=channels,
            alphas=np.asarray(obj["alphas"], dtype=float),
            mode=str(obj["mode"]),
        )
    except KeyError as exc:
        raise ValueError(f"fusion object missing key {exc}") from exc
