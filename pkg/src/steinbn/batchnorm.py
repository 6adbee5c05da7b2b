"""Batch normalization variants over (N, C, H, W) tensors.

Six variants share one forward/backward skeleton: raw channel moments are
corrected by a per-channel affine map (coefficients frozen per batch), then
the usual normalize-and-affine step is applied. The backward pass treats the
frozen correction coefficients as constants of the batch, so gradients flow
through the raw moments exactly as in standard BN.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .estimators import (
    VAR_FLOOR,
    geometric_mean,
    js_mean_factor,
    variance_c_bound,
)
from .tensor import ChannelStats, InvalidInputError, Tensor4, channel_moments


class BNVariant(str, Enum):
    STANDARD = "standard"
    STEIN = "stein"
    MEAN_ONLY = "mean-only"
    KHOSHSIRAT = "khoshsirat"
    LASSO = "lasso"
    RIDGE = "ridge"


class BNMode(str, Enum):
    TRAIN = "train"
    EVAL = "eval"


@dataclass
class BNLayer:
    """State of one batch-norm layer.

    c_tilde=None selects the midpoint of the classical admissible interval
    for the current (n, C) at every forward call. lam is the shared Lasso/
    Ridge penalty. Running statistics store the CORRECTED statistics so
    eval mode inherits the shrinkage.
    """

    num_channels: int
    variant: BNVariant = BNVariant.STANDARD
    momentum: float = 0.1
    eps: float = 1e-5
    c_tilde: float | None = None
    lam: float = 0.0
    mode: BNMode = BNMode.TRAIN
    positive_part: bool = False
    gamma: np.ndarray = field(default=None)
    beta: np.ndarray = field(default=None)
    running_mean: np.ndarray = field(default=None)
    running_var: np.ndarray = field(default=None)

    def __post_init__(self):
        if not (0.0 < self.momentum <= 1.0):
            raise InvalidInputError("momentum must lie in (0, 1]")
        if self.eps <= 0:
            raise InvalidInputError("eps must be positive")
        if self.lam < 0:
            raise InvalidInputError("lambda must be non-negative")
        self.variant = BNVariant(self.variant)
        self.mode = BNMode(self.mode)
        c = self.num_channels
        if self.gamma is None:
            self.gamma = np.ones(c)
        if self.beta is None:
            self.beta = np.zeros(c)
        if self.running_mean is None:
            self.running_mean = np.zeros(c)
        if self.running_var is None:
            self.running_var = np.ones(c)
        for name in ("gamma", "beta", "running_mean", "running_var"):
            v = np.asarray(getattr(self, name), dtype=np.float64)
            if v.shape != (c,):
                raise InvalidInputError(f"{name} must have length C={c}")
            setattr(self, name, v)
        if np.any(self.running_var < 0):
            raise InvalidInputError("running_var entries must be non-negative")

    def train(self) -> "BNLayer":
        self.mode = BNMode.TRAIN
        return self

    def eval(self) -> "BNLayer":
        self.mode = BNMode.EVAL
        return self

    def state_arrays(self) -> dict[str, np.ndarray]:
        return {
            "gamma": self.gamma,
            "beta": self.beta,
            "running_mean": self.running_mean,
            "running_var": self.running_var,
        }

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for name in ("gamma", "beta", "running_mean", "running_var"):
            setattr(self, name, np.asarray(arrays[name], dtype=np.float64).copy())


@dataclass
class BNForwardCache:
    """Everything the backward pass needs, with the forward's exact inv_std."""

    mode: BNMode
    raw: ChannelStats | None
    corrected_mean: np.ndarray
    corrected_var: np.ndarray
    inv_std: np.ndarray
    normalized: Tensor4
    x: Tensor4
    # frozen per-channel affine correction: corrected = coef * raw + offset
    mean_coef: np.ndarray
    mean_offset: np.ndarray
    var_coef: np.ndarray
    var_offset: np.ndarray
    shrink_factor_mean: float
    mean_degraded: bool


def _auto_c(layer: BNLayer, n: int, p: int) -> float:
    if layer.c_tilde is not None:
        return layer.c_tilde
    if p < 2:
        return 0.0
    return 0.5 * variance_c_bound(n, p)


def correction_coefficients(
    layer: BNLayer, stats: ChannelStats
) -> tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, float, bool]:
    """Frozen affine coefficients (mean_coef, mean_offset, var_coef, var_offset).

    Returns the scalar mean shrink factor and a degraded flag alongside; the
    coefficients already encode clamping decisions made at the current batch.
    """
    c = stats.mean.size
    n = stats.count
    ones, zeros = np.ones(c), np.zeros(c)
    mean_coef, mean_offset = ones.copy(), zeros.copy()
    var_coef, var_offset = ones.copy(), zeros.copy()
    s_mean, degraded = 1.0, False
    variant = layer.variant

    if variant in (BNVariant.STEIN, BNVariant.MEAN_ONLY, BNVariant.KHOSHSIRAT):
        s_mean, degraded = js_mean_factor(stats.mean, positive_part=layer.positive_part)
        mean_coef = np.full(c, s_mean)

    if variant == BNVariant.STEIN:
        floored = np.maximum(stats.var, VAR_FLOOR)
        c_t = _auto_c(layer, n, c)
        var_coef = np.full(c, n / (n + 1.0))
        var_offset = np.full(c, c_t * geometric_mean(floored))
    elif variant == BNVariant.KHOSHSIRAT:
        t, _ = js_mean_factor(stats.var)
        corrected = t * stats.var
        clamped = corrected < VAR_FLOOR
        var_coef = np.where(clamped, 0.0, t)
        var_offset = np.where(clamped, VAR_FLOOR, 0.0)
    elif variant == BNVariant.LASSO:
        thr = layer.lam / (2.0 * n)
        active = np.abs(stats.mean) > thr
        mean_coef = np.where(active, 1.0, 0.0)
        mean_offset = np.where(active, -np.sign(stats.mean) * thr, 0.0)
        vpos = stats.var - layer.lam / 2.0 > VAR_FLOOR
        var_coef = np.where(vpos, 1.0, 0.0)
        var_offset = np.where(vpos, -layer.lam / 2.0, VAR_FLOOR)
    elif variant == BNVariant.RIDGE:
        mean_coef = np.full(c, n / (n + layer.lam))
        var_coef = np.full(c, 1.0 / (1.0 + layer.lam))

    return mean_coef, mean_offset, var_coef, var_offset, s_mean, degraded


def bn_forward(layer: BNLayer, x: Tensor4) -> tuple[Tensor4, BNForwardCache]:
    """Normalize x; in train mode also update the running statistics."""
    _, c, _, _ = x.dims
    if c != layer.num_channels:
        raise InvalidInputError(f"layer has C={layer.num_channels}, input has C={c}")

    if layer.mode == BNMode.EVAL:
        mean = layer.running_mean
        var = np.maximum(layer.running_var, VAR_FLOOR)
        inv_std = 1.0 / np.sqrt(var + layer.eps)
        normalized = Tensor4((x.data - mean[None, :, None, None]) * inv_std[None, :, None, None])
        y = Tensor4(
            layer.gamma[None, :, None, None] * normalized.data
            + layer.beta[None, :, None, None]
        )
        cache = BNForwardCache(
            mode=BNMode.EVAL,
            raw=None,
            corrected_mean=mean.copy(),
            corrected_var=var.copy(),
            inv_std=inv_std,
            normalized=normalized,
            x=x,
            mean_coef=np.ones(c),
            mean_offset=np.zeros(c),
            var_coef=np.ones(c),
            var_offset=np.zeros(c),
            shrink_factor_mean=1.0,
            mean_degraded=False,
        )
        return y, cache

    stats = channel_moments(x)
    m_coef, m_off, v_coef, v_off, s_mean, degraded = correction_coefficients(layer, stats)
    corrected_mean = m_coef * stats.mean + m_off
    corrected_var = np.maximum(v_coef * stats.var + v_off, VAR_FLOOR)
    inv_std = 1.0 / np.sqrt(corrected_var + layer.eps)

    normalized = Tensor4(
        (x.data - corrected_mean[None, :, None, None]) * inv_std[None, :, None, None]
    )
    y = Tensor4(
        layer.gamma[None, :, None, None] * normalized.data + layer.beta[None, :, None, None]
    )
    bn_update_running(layer, ChannelStats(corrected_mean, corrected_var, stats.count))
    cache = BNForwardCache(
        mode=BNMode.TRAIN,
        raw=stats,
        corrected_mean=corrected_mean,
        corrected_var=corrected_var,
        inv_std=inv_std,
        normalized=normalized,
        x=x,
        mean_coef=m_coef,
        mean_offset=m_off,
        var_coef=v_coef,
        var_offset=v_off,
        shrink_factor_mean=s_mean,
        mean_degraded=degraded,
    )
    return y, cache


def bn_backward(
    layer: BNLayer, cache: BNForwardCache, grad_out: Tensor4
) -> tuple[Tensor4, np.ndarray, np.ndarray]:
    """Gradients w.r.t. input, gamma and beta under the frozen-factor convention."""
    if grad_out.dims != cache.x.dims:
        raise InvalidInputError("grad_out shape does not match cached forward input")
    g = grad_out.data
    grad_beta = g.sum(axis=(0, 2, 3))
    grad_gamma = (g * cache.normalized.data).sum(axis=(0, 2, 3))

    inv_std = cache.inv_std[None, :, None, None]
    gx_hat = g * layer.gamma[None, :, None, None]

    if cache.mode == BNMode.EVAL:
        return Tensor4(gx_hat * inv_std), grad_gamma, grad_beta

    n, c, h, w = cache.x.dims
    m = n * h * w
    x_center = cache.x.data - cache.raw.mean[None, :, None, None]

    # d corrected_var / d raw_var and d corrected_mean / d raw_mean are the
    # frozen coefficients; offsets drop out of the gradient
    dvar = (
        (gx_hat * (cache.x.data - cache.corrected_mean[None, :, None, None])).sum(axis=(0, 2, 3))
        * -0.5
        * cache.inv_std**3
        * cache.var_coef
    )
    dmean = (
        -(gx_hat.sum(axis=(0, 2, 3))) * cache.inv_std * cache.mean_coef
        + dvar * (-2.0 / m) * x_center.sum(axis=(0, 2, 3))
    )
    grad_in = (
        gx_hat * inv_std
        + dvar[None, :, None, None] * (2.0 / m) * x_center
        + dmean[None, :, None, None] / m
    )
    return Tensor4(grad_in), grad_gamma, grad_beta


def bn_update_running(layer: BNLayer, corrected: ChannelStats) -> BNLayer:
    """EMA update with the corrected statistics; train mode only."""
    if layer.mode != BNMode.TRAIN:
        raise InvalidInputError("running statistics update requires train mode")
    mom = layer.momentum
    layer.running_mean = (1.0 - mom) * layer.running_mean + mom * corrected.mean
    layer.running_var = (1.0 - mom) * layer.running_var + mom * corrected.var
    return layer
