"""Small neural-net layers with manual backpropagation.

Just enough machinery for the desk-scale BN comparison: dense and 3x3
convolution layers, relu, global average pooling, softmax cross-entropy,
and SGD with Nesterov momentum. Activations travel as (N, C, H, W) float64
arrays; BN layers wrap the Tensor4-based core.
"""

from __future__ import annotations

import numpy as np

from .batchnorm import BNLayer, BNVariant, bn_backward, bn_forward
from .rng import CounterRng
from .tensor import Tensor4


class Layer:
    def params(self) -> dict[str, np.ndarray]:
        return {}

    def grads(self) -> dict[str, np.ndarray]:
        return {}

    def train(self):
        pass

    def eval(self):
        pass


class Dense(Layer):
    """Affine map on flattened inputs; output shaped (N, units, 1, 1)."""

    def __init__(self, in_features: int, units: int, rng: CounterRng, tag: int):
        scale = np.sqrt(2.0 / in_features)
        self.w = scale * rng.normal(in_features * units, tag, 0).reshape(in_features, units)
        self.b = np.zeros(units)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._x = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        n = x.shape[0]
        self._in_shape = x.shape
        flat = x.reshape(n, -1)
        self._x = flat
        out = flat @ self.w + self.b
        return out.reshape(n, -1, 1, 1)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        n = grad.shape[0]
        g = grad.reshape(n, -1)
        self.dw = self._x.T @ g
        self.db = g.sum(axis=0)
        return (g @ self.w.T).reshape(self._in_shape)

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}


class Conv3x3(Layer):
    """3x3 convolution with padding 1 and stride 1, via im2col."""

    def __init__(self, in_channels: int, out_channels: int, rng: CounterRng, tag: int):
        fan_in = in_channels * 9
        scale = np.sqrt(2.0 / fan_in)
        self.w = scale * rng.normal(out_channels * fan_in, tag, 0).reshape(out_channels, fan_in)
        self.b = np.zeros(out_channels)
        self.dw = np.zeros_like(self.w)
        self.db = np.zeros_like(self.b)
        self._cols = None
        self._shape = None

    @staticmethod
    def _im2col(x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        padded = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
        cols = np.empty((n, c, 9, h, w))
        k = 0
        for dh in range(3):
            for dw in range(3):
                cols[:, :, k] = padded[:, :, dh : dh + h, dw : dw + w]
                k += 1
        return cols.reshape(n, c * 9, h * w)

    def forward(self, x: np.ndarray) -> np.ndarray:
        n, c, h, w = x.shape
        self._shape = x.shape
        cols = self._im2col(x)
        self._cols = cols
        out = np.einsum("of,nfp->nop", self.w, cols) + self.b[None, :, None]
        return out.reshape(n, -1, h, w)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        n, c, h, w = self._shape
        g = grad.reshape(n, -1, h * w)
        self.db = g.sum(axis=(0, 2))
        self.dw = np.einsum("nop,nfp->of", g, self._cols)
        dcols = np.einsum("of,nop->nfp", self.w, g).reshape(n, c, 9, h, w)
        dx = np.zeros((n, c, h + 2, w + 2))
        k = 0
        for dh in range(3):
            for dw in range(3):
                dx[:, :, dh : dh + h, dw : dw + w] += dcols[:, :, k]
                k += 1
        return dx[:, :, 1 : 1 + h, 1 : 1 + w]

    def params(self):
        return {"w": self.w, "b": self.b}

    def grads(self):
        return {"w": self.dw, "b": self.db}


class ReLU(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._mask = x > 0
        return x * self._mask

    def backward(self, grad: np.ndarray) -> np.ndarray:
        return grad * self._mask


class GlobalAvgPool(Layer):
    def forward(self, x: np.ndarray) -> np.ndarray:
        self._shape = x.shape
        return x.mean(axis=(2, 3), keepdims=True)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        n, c, h, w = self._shape
        return np.broadcast_to(grad / (h * w), self._shape).copy()


class BatchNorm(Layer):
    """Adapter running the shrinkage-aware BN core inside the layer stack."""

    def __init__(self, num_channels: int, variant: BNVariant, c_tilde=None, lam: float = 0.0):
        self.bn = BNLayer(num_channels=num_channels, variant=variant, c_tilde=c_tilde, lam=lam)
        self.dgamma = np.zeros(num_channels)
        self.dbeta = np.zeros(num_channels)
        self._cache = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        y, self._cache = bn_forward(self.bn, Tensor4(x))
        return np.asarray(y.data)

    def backward(self, grad: np.ndarray) -> np.ndarray:
        gx, self.dgamma, self.dbeta = bn_backward(self.bn, self._cache, Tensor4(grad))
        return np.asarray(gx.data)

    def train(self):
        self.bn.train()

    def eval(self):
        self.bn.eval()

    def params(self):
        return {"gamma": self.bn.gamma, "beta": self.bn.beta}

    def grads(self):
        return {"gamma": self.dgamma, "beta": self.dbeta}

    def state_arrays(self):
        return self.bn.state_arrays()


class Sequential:
    def __init__(self, layers: list[Layer]):
        self.layers = layers

    def forward(self, x: np.ndarray) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def train(self):
        for layer in self.layers:
            layer.train()

    def eval(self):
        for layer in self.layers:
            layer.eval()

    def named_params(self):
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                yield f"layer{i}.{name}", layer, name, arr

    def state_arrays(self) -> dict[str, np.ndarray]:
        """All weights plus BN running statistics, checkpoint-ready."""
        out = {}
        for i, layer in enumerate(self.layers):
            for name, arr in layer.params().items():
                out[f"layer{i}.{name}"] = arr
            if isinstance(layer, BatchNorm):
                for name, arr in layer.bn.state_arrays().items():
                    out[f"layer{i}.{name}"] = arr
        return out

    def load_state_arrays(self, arrays: dict[str, np.ndarray]) -> None:
        for i, layer in enumerate(self.layers):
            if isinstance(layer, BatchNorm):
                layer.bn.load_state_arrays(
                    {k: arrays[f"layer{i}.{k}"] for k in ("gamma", "beta", "running_mean", "running_var")}
                )
            else:
                for name in layer.params():
                    layer.params()[name][...] = arrays[f"layer{i}.{name}"]


def softmax_cross_entropy(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Mean cross-entropy and gradient w.r.t. logits, shaped like logits."""
    n = logits.shape[0]
    flat = logits.reshape(n, -1)
    shifted = flat - flat.max(axis=1, keepdims=True)
    logsumexp = np.log(np.exp(shifted).sum(axis=1))
    loss = float(np.mean(logsumexp - shifted[np.arange(n), labels]))
    probs = np.exp(shifted) / np.exp(shifted).sum(axis=1, keepdims=True)
    probs[np.arange(n), labels] -= 1.0
    return loss, (probs / n).reshape(logits.shape)


def accuracy_pct(logits: np.ndarray, labels: np.ndarray) -> float:
    pred = logits.reshape(logits.shape[0], -1).argmax(axis=1)
    return 100.0 * float(np.mean(pred == labels))


class SGDNesterov:
    """SGD with Nesterov acceleration, momentum 0.9 by default."""

    def __init__(self, model: Sequential, lr: float, momentum: float = 0.9, nesterov: bool = True):
        self.model = model
        self.lr = lr
        self.momentum = momentum
        self.nesterov = nesterov
        self.velocity = {key: np.zeros_like(arr) for key, _, _, arr in model.named_params()}

    def step(self) -> None:
        for key, layer, name, arr in self.model.named_params():
            g = layer.grads()[name]
            v = self.velocity[key]
            v *= self.momentum
            v += g
            update = g + self.momentum * v if self.nesterov else v
            arr -= self.lr * update


def build_mlp2(
    input_dims: tuple[int, int, int],
    n_classes: int,
    variant: BNVariant,
    rng: CounterRng,
    hidden: int = 128,
    c_tilde=None,
    lam: float = 0.0,
) -> Sequential:
    """flatten -> dense(hidden) -> BN (features as channels) -> relu -> dense."""
    c, h, w = input_dims
    return Sequential(
        [
            Dense(c * h * w, hidden, rng, 11),
            BatchNorm(hidden, variant, c_tilde=c_tilde, lam=lam),
            ReLU(),
            Dense(hidden, n_classes, rng, 12),
        ]
    )


def build_tiny_cnn(
    input_dims: tuple[int, int, int],
    n_classes: int,
    variant: BNVariant,
    rng: CounterRng,
    width: int = 8,
    c_tilde=None,
    lam: float = 0.0,
) -> Sequential:
    """Two conv3x3+BN+relu blocks, then global average pooling and a dense head."""
    c, h, w = input_dims
    return Sequential(
        [
            Conv3x3(c, width, rng, 21),
            BatchNorm(width, variant, c_tilde=c_tilde, lam=lam),
            ReLU(),
            Conv3x3(width, 2 * width, rng, 22),
            BatchNorm(2 * width, variant, c_tilde=c_tilde, lam=lam),
            ReLU(),
            GlobalAvgPool(),
            Dense(2 * width, n_classes, rng, 23),
        ]
    )
