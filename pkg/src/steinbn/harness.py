"""Desk-scale training harness comparing the BN variants.

Protocol: train on clean data with SGD + Nesterov and early stopping on
clean validation accuracy, then sweep additive noise levels at test time
and record accuracy per (method, batch size, noise level, seed) cell.
"""

from __future__ import annotations

import csv
import io
import json
import struct
import warnings
from dataclasses import dataclass, field, asdict

import numpy as np

from .batchnorm import BNVariant
from .data import Dataset, make_synthetic_blobs, split_indices
from .nn import (
    BatchNorm,
    SGDNesterov,
    Sequential,
    accuracy_pct,
    build_mlp2,
    build_tiny_cnn,
    softmax_cross_entropy,
)
from .noise import NoiseSpec, sample_noise_flat
from .rng import CounterRng
from .tensor import InvalidInputError

CHECKPOINT_MAGIC = b"SBN1"
RESULTS_HEADER = "method,batch_size,noise_pct,seed,metric,value,epochs"


@dataclass
class ExperimentConfig:
    """Knobs of one training/evaluation sweep; JSON keys mirror field names
    ("lambda" maps to the lam attribute)."""

    dataset: str = "SyntheticBlobs"
    model: str = "MLP2"
    bn_variant: str = "stein"
    batch_size: int = 32
    learning_rate: float = 0.01
    max_epochs: int = 20
    early_stop_patience: int = 5
    noise_levels: list = field(default_factory=lambda: [0, 10, 20, 30])
    seeds: list = field(default_factory=lambda: [1])
    c_tilde: float | None = None
    lam: float = 0.0
    momentum_sgd: float = 0.9
    nesterov: bool = True
    # dataset knobs (SyntheticBlobs)
    n_classes: int = 4
    n_per_class: int = 250
    channels: int = 3
    hw: int = 8
    sep: float = 3.0
    hidden: int = 128
    noise_family: str = "levy-gauss"
    feature_noise: bool = False

    def __post_init__(self):
        if self.batch_size < 2:
            raise InvalidInputError("batch_size must be >= 2")
        if not self.seeds:
            raise InvalidInputError("need at least one seed")
        if any(not (0 <= lv <= 100) for lv in self.noise_levels):
            raise InvalidInputError("noise levels must lie in [0, 100]")
        BNVariant(self.bn_variant)

    def to_json(self) -> str:
        d = asdict(self)
        d["lambda"] = d.pop("lam")
        return json.dumps(d, indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text: str) -> "ExperimentConfig":
        d = json.loads(text)
        if "lambda" in d:
            d["lam"] = d.pop("lambda")
        return cls(**d)


@dataclass
class ResultRow:
    method: str
    batch_size: int
    noise_pct: float
    seed: int
    metric: str
    value: float
    epochs: int

    def __post_init__(self):
        if not (0.0 <= self.value <= 100.0):
            raise InvalidInputError("metric values are percentages in [0, 100]")


def rows_to_csv(rows: list[ResultRow]) -> str:
    buf = io.StringIO()
    buf.write(RESULTS_HEADER + "\n")
    for r in rows:
        buf.write(
            f"{r.method},{r.batch_size},{r.noise_pct},{r.seed},{r.metric},{r.value},{r.epochs}\n"
        )
    return buf.getvalue()


def rows_from_csv(text: str) -> list[ResultRow]:
    clean = "\n".join(ln for ln in text.splitlines() if ln and not ln.startswith("#"))
    reader = csv.DictReader(io.StringIO(clean))
    return [
        ResultRow(
            method=r["method"],
            batch_size=int(r["batch_size"]),
            noise_pct=float(r["noise_pct"]),
            seed=int(r["seed"]),
            metric=r["metric"],
            value=float(r["value"]),
            epochs=int(r["epochs"]),
        )
        for r in reader
    ]


# ---------------------------------------------------------------------------
# checkpoint format: magic "SBN1", then per array
#   u32 name length | name utf-8 | u32 ndim | ndim x u32 dims | f64 LE payload


def save_arrays(path, arrays: dict[str, np.ndarray]) -> None:
    with open(path, "wb") as f:
        f.write(CHECKPOINT_MAGIC)
        for name, arr in arrays.items():
            arr = np.asarray(arr, dtype=np.float64)
            encoded = name.encode("utf-8")
            f.write(struct.pack("<I", len(encoded)))
            f.write(encoded)
            f.write(struct.pack("<I", arr.ndim))
            f.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            f.write(arr.astype("<f8").tobytes())


def load_arrays(path) -> dict[str, np.ndarray]:
    with open(path, "rb") as f:
        blob = f.read()
    if blob[:4] != CHECKPOINT_MAGIC:
        raise InvalidInputError("not a checkpoint file (bad magic)")
    out, pos = {}, 4
    while pos < len(blob):
        (name_len,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        name = blob[pos : pos + name_len].decode("utf-8")
        pos += name_len
        (ndim,) = struct.unpack_from("<I", blob, pos)
        pos += 4
        dims = struct.unpack_from(f"<{ndim}I", blob, pos)
        pos += 4 * ndim
        count = int(np.prod(dims)) if ndim else 1
        out[name] = np.frombuffer(blob, dtype="<f8", count=count, offset=pos).reshape(dims)
        pos += 8 * count
    return out


@dataclass
class Checkpoint:
    config: ExperimentConfig
    seed: int
    arrays: dict[str, np.ndarray]
    epochs_trained: int
    best_val_acc: float
    diverged: bool = False

    def save(self, path) -> None:
        arrays = dict(self.arrays)
        arrays["__meta__"] = np.array(
            [self.seed, self.epochs_trained, self.best_val_acc, float(self.diverged)]
        )
        save_arrays(path, arrays)
        with open(str(path) + ".json", "w") as f:
            f.write(self.config.to_json())

    @classmethod
    def load(cls, path) -> "Checkpoint":
        arrays = load_arrays(path)
        meta = arrays.pop("__meta__")
        with open(str(path) + ".json") as f:
            config = ExperimentConfig.from_json(f.read())
        return cls(
            config=config,
            seed=int(meta[0]),
            arrays=arrays,
            epochs_trained=int(meta[1]),
            best_val_acc=float(meta[2]),
            diverged=bool(meta[3]),
        )


def build_model(config: ExperimentConfig, input_dims, n_classes: int, seed: int) -> Sequential:
    rng = CounterRng(seed)
    kwargs = dict(c_tilde=config.c_tilde, lam=config.lam)
    variant = BNVariant(config.bn_variant)
    if config.model == "MLP2":
        return build_mlp2(input_dims, n_classes, variant, rng, hidden=config.hidden, **kwargs)
    if config.model == "TinyCNN":
        return build_tiny_cnn(input_dims, n_classes, variant, rng, **kwargs)
    raise InvalidInputError(f"unknown model {config.model!r}")


def make_dataset(config: ExperimentConfig, seed: int) -> Dataset:
    if config.dataset == "SyntheticBlobs":
        return make_synthetic_blobs(
            config.n_classes, config.n_per_class, config.channels, config.hw, config.sep, seed
        )
    raise InvalidInputError(
        f"dataset {config.dataset!r} must be loaded from file (use load_csv_images)"
    )


def _evaluate(model: Sequential, images: np.ndarray, labels: np.ndarray, batch: int = 256) -> float:
    model.eval()
    correct = 0
    for lo in range(0, images.shape[0], batch):
        logits = model.forward(images[lo : lo + batch])
        pred = logits.reshape(logits.shape[0], -1).argmax(axis=1)
        correct += int(np.sum(pred == labels[lo : lo + batch]))
    return 100.0 * correct / images.shape[0]


def train_model(config: ExperimentConfig, dataset: Dataset, seed: int) -> Checkpoint:
    """Train one model; early stopping on clean validation accuracy."""
    tr, va, _ = split_indices(dataset.images.shape[0], seed)
    x_tr, y_tr = dataset.images[tr], dataset.labels[tr]
    x_va, y_va = dataset.images[va], dataset.labels[va]
    model = build_model(config, dataset.input_dims, dataset.n_classes, seed)
    opt = SGDNesterov(model, config.learning_rate, config.momentum_sgd, config.nesterov)
    shuffle_rng = CounterRng(seed)

    best_val = _evaluate(model, x_va, y_va)
    best_state = {k: v.copy() for k, v in model.state_arrays().items()}
    best_epoch, stale = 0, 0

    for epoch in range(1, config.max_epochs + 1):
        model.train()
        order = np.argsort(shuffle_rng.uniform(x_tr.shape[0], 104, epoch), kind="stable")
        for lo in range(0, x_tr.shape[0] - 1, config.batch_size):
            idx = order[lo : lo + config.batch_size]
            if idx.size < 2:
                continue  # BN needs at least 2 samples
            logits = model.forward(x_tr[idx])
            loss, grad = softmax_cross_entropy(logits, y_tr[idx])
            if not np.isfinite(loss):
                warnings.warn(f"diverged at epoch {epoch} (loss={loss}); run marked failed")
                model.load_state_arrays(best_state)
                return Checkpoint(config, seed, best_state, epoch, best_val, diverged=True)
            model.backward(grad)
            opt.step()
        val_acc = _evaluate(model, x_va, y_va)
        if val_acc > best_val:
            best_val = val_acc
            best_state = {k: v.copy() for k, v in model.state_arrays().items()}
            best_epoch, stale = epoch, 0
        else:
            stale += 1
            if stale >= config.early_stop_patience:
                break

    model.load_state_arrays(best_state)
    return Checkpoint(config, seed, best_state, best_epoch, best_val)


def _noisy_inputs(
    images: np.ndarray, level_pct: float, family: str, seed: int
) -> np.ndarray:
    """Add zero-mean noise with per-channel sigma = (level/100) * clean channel std."""
    if level_pct == 0:
        return images
    n, c, h, w = images.shape
    ch_std = images.transpose(1, 0, 2, 3).reshape(c, -1).std(axis=1)
    rng = CounterRng(seed)
    # unit-scale draws, scaled per channel; levy-gauss is left untruncated so
    # the heavy tail of the mixture density reaches the classifier
    if family == "levy-gauss":
        base_spec = NoiseSpec(family="levy-gauss", sigma=1.0, epsilon_bound=0.0)
    elif family == "gaussian":
        base_spec = NoiseSpec(family="gaussian", sigma=1.0)
    elif family == "bounded-uniform":
        base_spec = NoiseSpec(family="bounded-uniform", epsilon_bound=1.0)
    else:
        raise InvalidInputError(f"unknown noise family {family!r}")
    unit = sample_noise_flat(base_spec, images.size, rng, 105, int(round(level_pct * 100))).reshape(
        images.shape
    )
    sigma = (level_pct / 100.0) * ch_std
    return images + unit * sigma[None, :, None, None]


def evaluate_under_noise(
    checkpoint: Checkpoint,
    dataset: Dataset,
    noise_levels: list,
    noise_family: str,
    seed: int,
) -> list[ResultRow]:
    """Test accuracy per noise level, deterministic per (seed, level)."""
    config = checkpoint.config
    _, _, te = split_indices(dataset.images.shape[0], seed)
    x_te, y_te = dataset.images[te], dataset.labels[te]
    model = build_model(config, dataset.input_dims, dataset.n_classes, seed)
    model.load_state_arrays(checkpoint.arrays)
    rows = []
    for level in noise_levels:
        if config.feature_noise:
            acc = _evaluate_feature_noise(model, x_te, y_te, level, noise_family, seed)
        else:
            acc = _evaluate(model, _noisy_inputs(x_te, level, noise_family, seed), y_te)
        rows.append(
            ResultRow(
                method=config.bn_variant,
                batch_size=config.batch_size,
                noise_pct=float(level),
                seed=seed,
                metric="accuracy",
                value=acc,
                epochs=checkpoint.epochs_trained,
            )
        )
    return rows


def _evaluate_feature_noise(
    model: Sequential, images: np.ndarray, labels: np.ndarray, level_pct: float,
    family: str, seed: int,
) -> float:
    """Inject noise after the first BN layer instead of at the input."""
    model.eval()
    first_bn = next(i for i, l in enumerate(model.layers) if isinstance(l, BatchNorm))
    x = images
    for layer in model.layers[: first_bn + 1]:
        x = layer.forward(x)
    x = _noisy_inputs(x, level_pct, family, seed)
    for layer in model.layers[first_bn + 1 :]:
        x = layer.forward(x)
    pred = x.reshape(x.shape[0], -1).argmax(axis=1)
    return 100.0 * float(np.mean(pred == labels))


def run_sweep(config: ExperimentConfig) -> list[ResultRow]:
    """Train and evaluate over every seed of the config; one variant per call."""
    rows = []
    for seed in config.seeds:
        dataset = make_dataset(config, seed)
        ckpt = train_model(config, dataset, seed)
        rows.extend(
            evaluate_under_noise(ckpt, dataset, config.noise_levels, config.noise_family, seed)
        )
    return rows


def aggregate_results(rows: list[ResultRow]) -> str:
    """Mean and sample sd per (method, batch_size, noise) cell, as CSV."""
    cells: dict[tuple, list[float]] = {}
    epochs: dict[tuple, list[int]] = {}
    for r in rows:
        key = (r.method, r.batch_size, r.noise_pct, r.metric)
        cells.setdefault(key, []).append(r.value)
        epochs.setdefault(key, []).append(r.epochs)
    buf = io.StringIO()
    buf.write("method,batch_size,noise_pct,metric,mean,sd,n_seeds\n")
    for key in sorted(cells):
        vals = np.asarray(cells[key])
        if vals.size < 2:
            warnings.warn(f"cell {key} has fewer than 2 seeds; omitted from summary")
            buf.write(f"# warning: cell {key} omitted (single seed)\n")
            continue
        method, bs, noise, metric = key
        buf.write(
            f"{method},{bs},{noise},{metric},{vals.mean():.6g},{vals.std(ddof=1):.6g},{vals.size}\n"
        )
    return buf.getvalue()
