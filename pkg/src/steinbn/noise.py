"""Zero-mean additive perturbation samplers.

Families: the heavy-tailed Levy/Gaussian-mixture density with closed-form
inverse CDF, bounded uniform perturbations, plain Gaussian, and none.
Sampling is counter-based per entry, so identical (seed, spec, shape)
always produce bit-identical tensors.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .rng import CounterRng
from .tensor import InvalidInputError, Tensor4

FAMILIES = ("levy-gauss", "bounded-uniform", "gaussian", "none")

_MAX_RETRIES = 64


@dataclass(frozen=True)
class NoiseSpec:
    """Perturbation family plus its scale and optional coordinate bound.

    epsilon_bound > 0 truncates levy-gauss samples to [-eps, eps] (and sets
    the half-width of bounded-uniform); 0 means untruncated. level_pct is the
    "k% noise" knob used by the training harness, where sigma is derived as
    (k/100) times the per-channel clean standard deviation.
    """

    family: str = "none"
    sigma: float = 1.0
    epsilon_bound: float = 0.0
    level_pct: float = 0.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise InvalidInputError(f"unknown noise family {self.family!r}")
        if self.family in ("levy-gauss", "gaussian") and self.sigma <= 0:
            raise InvalidInputError("sigma must be positive for stochastic families")
        if self.epsilon_bound < 0:
            raise InvalidInputError("epsilon_bound must be non-negative")


def levy_gauss_pdf(x, sigma: float = 1.0):
    """Density f(x) = 1/(2*sqrt(2)*pi*sigma) * (x^2/(2 sigma^2) + 1/4)^-1."""
    x = np.asarray(x, dtype=np.float64)
    return 1.0 / (2.0 * math.sqrt(2.0) * math.pi * sigma) / (x**2 / (2.0 * sigma**2) + 0.25)


def levy_gauss_cdf(x, sigma: float = 1.0):
    """Closed-form CDF: F(x) = 1/2 + arctan(sqrt(2) x / sigma) / pi."""
    x = np.asarray(x, dtype=np.float64)
    return 0.5 + np.arctan(math.sqrt(2.0) * x / sigma) / math.pi


def levy_gauss_quantile(u, sigma: float = 1.0):
    """Inverse CDF: F^-1(u) = (sigma / sqrt(2)) * tan(pi * (u - 1/2))."""
    u = np.asarray(u, dtype=np.float64)
    if sigma <= 0:
        raise InvalidInputError("sigma must be positive")
    if np.any(u <= 0.0) or np.any(u >= 1.0):
        raise InvalidInputError("quantile argument must lie strictly inside (0, 1)")
    out = (sigma / math.sqrt(2.0)) * np.tan(math.pi * (u - 0.5))
    return float(out) if out.ndim == 0 else out


def _sample_levy_gauss(
    rng: CounterRng, count: int, sigma: float, eps: float, stream: tuple[int, ...], offset: int
) -> np.ndarray:
    out = levy_gauss_quantile(rng.uniform(count, *stream, 0, offset=offset), sigma)
    if eps <= 0:
        return out
    # resample out-of-bound entries per retry counter, then clamp survivors
    for retry in range(1, _MAX_RETRIES + 1):
        bad = np.abs(out) > eps
        if not bad.any():
            return out
        fresh = levy_gauss_quantile(rng.uniform(count, *stream, retry, offset=offset), sigma)
        out = np.where(bad, fresh, out)
    return np.clip(out, -eps, eps)


def sample_noise_flat(
    spec: NoiseSpec, count: int, rng: CounterRng, *stream: int, offset: int = 0
) -> np.ndarray:
    """Flat vector of i.i.d. perturbations from a keyed counter stream."""
    if spec.family == "none":
        return np.zeros(count)
    if spec.family == "bounded-uniform":
        eps = spec.epsilon_bound
        return (2.0 * rng.uniform(count, *stream, offset=offset) - 1.0) * eps
    if spec.family == "gaussian":
        return spec.sigma * rng.normal(count, *stream, offset=offset)
    return _sample_levy_gauss(rng, count, spec.sigma, spec.epsilon_bound, tuple(stream), offset)


def sample_noise(spec: NoiseSpec, shape: tuple[int, int, int, int], rng: CounterRng) -> Tensor4:
    """Tensor of i.i.d. perturbations; deterministic given (rng.seed, spec, shape)."""
    count = int(np.prod(shape))
    return Tensor4(sample_noise_flat(spec, count, rng).reshape(shape))


def subgaussian_proxy_of_bound(epsilon: float) -> float:
    """Variance proxy 2*eps^2 of a zero-mean vector bounded in [-eps, eps]."""
    if epsilon < 0:
        raise InvalidInputError("epsilon must be non-negative")
    return 2.0 * epsilon**2


def truncated_levy_gauss(epsilon: float, sigma: float | None = None) -> NoiseSpec:
    """Default experimental noise: mixture density truncated at eps = 3*sigma.

    epsilon == 0 degrades to the zero-noise spec so level sweeps can include
    a clean cell.
    """
    if epsilon == 0:
        return NoiseSpec(family="none")
    if sigma is None:
        sigma = epsilon / 3.0
    return NoiseSpec(family="levy-gauss", sigma=sigma, epsilon_bound=epsilon)
