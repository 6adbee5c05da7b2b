"""Synthetic datasets and CSV image ingestion for the training harness."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import CounterRng
from .tensor import InvalidInputError


@dataclass(frozen=True)
class Dataset:
    images: np.ndarray  # (N, C, H, W) float64
    labels: np.ndarray  # (N,) int64

    def __post_init__(self):
        if self.images.ndim != 4 or self.labels.shape != (self.images.shape[0],):
            raise InvalidInputError("images must be (N,C,H,W) with matching labels")

    @property
    def input_dims(self) -> tuple[int, int, int]:
        return self.images.shape[1:]

    @property
    def n_classes(self) -> int:
        return int(self.labels.max()) + 1


def make_synthetic_blobs(
    n_classes: int,
    n_per_class: int,
    channels: int,
    hw: int,
    sep: float,
    seed: int,
) -> Dataset:
    """Gaussian class blobs in channel space.

    Each class has a per-channel mean drawn from N(0, sep^2/2) so the rms
    per-channel separation between two class means is `sep` in units of the
    within-class standard deviation (which is 1). Every pixel of a channel
    shares its class mean.
    """
    if n_classes < 2 or sep < 0:
        raise InvalidInputError("need n_classes >= 2 and sep >= 0")
    rng = CounterRng(seed)
    centers = (sep / np.sqrt(2.0)) * rng.normal(n_classes * channels, 101).reshape(
        n_classes, channels
    )
    n_total = n_classes * n_per_class
    labels = np.repeat(np.arange(n_classes), n_per_class)
    pixels = rng.normal(n_total * channels * hw * hw, 102).reshape(n_total, channels, hw, hw)
    images = pixels + centers[labels][:, :, None, None]
    # fixed interleaved order; train/val/test splitting permutes separately
    return Dataset(images=images, labels=labels.astype(np.int64))


def split_indices(n: int, seed: int) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Deterministic 80/10/10 train/val/test permutation split."""
    order = np.argsort(CounterRng(seed).uniform(n, 103), kind="stable")
    n_train = int(0.8 * n)
    n_val = int(0.1 * n)
    return order[:n_train], order[n_train : n_train + n_val], order[n_train + n_val :]


def load_csv_images(path, channels: int, hw: int) -> Dataset:
    """Read `label,px_0,...` rows with pixel values in [0,1]."""
    raw = np.loadtxt(path, delimiter=",", skiprows=1, ndmin=2)
    labels = raw[:, 0].astype(np.int64)
    pixels = raw[:, 1:]
    if pixels.shape[1] != channels * hw * hw:
        raise InvalidInputError(
            f"rows carry {pixels.shape[1]} pixels, expected {channels * hw * hw}"
        )
    return Dataset(images=pixels.reshape(-1, channels, hw, hw), labels=labels)


def save_csv_images(path, ds: Dataset) -> None:
    n, c, h, w = ds.images.shape
    header = "label," + ",".join(f"px_{i}" for i in range(c * h * w))
    flat = ds.images.reshape(n, -1)
    with open(path, "w") as f:
        f.write(header + "\n")
        for lbl, row in zip(ds.labels, flat):
            f.write(str(int(lbl)) + "," + ",".join(repr(float(v)) for v in row) + "\n")
