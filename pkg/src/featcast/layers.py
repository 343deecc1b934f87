"""Dense numeric engine: the layers of the feature-extraction network.

Everything runs on float64 numpy arrays ("tensors": a shape plus a row-major
buffer).  Each layer caches what its backward pass needs; `Network` strings
layers together and owns the forward/backward contract.  Training is
single-threaded and deterministic for a fixed seed.
"""

from __future__ import annotations

import numpy as np

F64 = np.float64


def glorot_uniform(rng: np.random.Generator, shape: tuple[int, ...], fan_in: int, fan_out: int) -> np.ndarray:
    limit = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-limit, limit, size=shape).astype(F64)


def _require_finite(arr: np.ndarray, what: str) -> None:
    if not np.all(np.isfinite(arr)):
        raise FloatingPointError(f"non-finite values in {what}")


class Layer:
    """Base layer: subclasses fill in forward/backward and parameter lists."""

    kind = "layer"

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        raise NotImplementedError

    def backward(self, gout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def params(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        """(name, weight, gradient) triples; gradient shapes mirror weights."""
        return []

    def zero_grad(self) -> None:
        for _, _, g in self.params():
            g.fill(0.0)


class Conv1d(Layer):
    """Same-length 1D convolution over (batch, channels, length) inputs.

    Odd kernels pad symmetrically; even kernels pad left-heavy (e.g. k=8 pads
    4 left / 3 right) so the output length always equals the input length.
    """

    kind = "conv1d"

    def __init__(self, ch_in: int, ch_out: int, kernel: int, rng: np.random.Generator | None = None):
        if kernel < 1:
            raise ValueError(f"kernel size must be >= 1, got {kernel}")
        self.ch_in = ch_in
        self.ch_out = ch_out
        self.kernel = kernel
        self.pad_left = kernel // 2
        self.pad_right = kernel - 1 - kernel // 2
        if rng is None:
            self.w = np.zeros((ch_out, ch_in, kernel), dtype=F64)
        else:
            self.w = glorot_uniform(rng, (ch_out, ch_in, kernel), ch_in * kernel, ch_out * kernel)
        self.b = np.zeros(ch_out, dtype=F64)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._cols: np.ndarray | None = None
        self._in_shape: tuple[int, ...] | None = None

    def params(self):
        return [("w", self.w, self.gw), ("b", self.b, self.gb)]

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if x.ndim != 3:
            raise ValueError(f"conv1d expects (batch, channels, length), got {x.ndim} dims")
        if x.shape[1] != self.ch_in:
            raise ValueError(f"conv1d channel dimension mismatch: input has {x.shape[1]} channels, layer expects {self.ch_in}")
        batch, _, length = x.shape
        padded = np.pad(x, ((0, 0), (0, 0), (self.pad_left, self.pad_right)))
        view = np.lib.stride_tricks.sliding_window_view(padded, self.kernel, axis=2)
        # (B, C_in, L, K) view -> one contiguous (B*L, C_in*K) copy for the matmul
        flat = view.transpose(0, 2, 1, 3).reshape(batch * length, self.ch_in * self.kernel)
        out = flat @ self.w.reshape(self.ch_out, -1).T + self.b
        self._cols = flat if training else None
        self._in_shape = x.shape
        return out.reshape(batch, length, self.ch_out).transpose(0, 2, 1)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        if self._cols is None or self._in_shape is None:
            raise RuntimeError("conv1d backward called without a cached training forward pass")
        batch, _, length = self._in_shape
        gflat = gout.transpose(0, 2, 1).reshape(batch * length, self.ch_out)
        self.gw += (gflat.T @ self._cols).reshape(self.w.shape)
        self.gb += gflat.sum(axis=0)
        # input gradient: push column gradients back to their padded positions
        gcols = (gflat @ self.w.reshape(self.ch_out, -1)).reshape(batch, length, self.ch_in, self.kernel)
        gin_pad = np.zeros((batch, self.ch_in, length + self.kernel - 1))
        for k in range(self.kernel):
            gin_pad[:, :, k : k + length] += gcols[:, :, :, k].transpose(0, 2, 1)
        return gin_pad[:, :, self.pad_left : self.pad_left + length]


class BatchNorm1d(Layer):
    """Per-channel batch normalisation over (batch, time) with running stats."""

    kind = "batchnorm"

    def __init__(self, channels: int, momentum: float = 0.9, eps: float = 1e-5):
        self.channels = channels
        self.momentum = momentum
        self.eps = eps
        self.gamma = np.ones(channels, dtype=F64)
        self.beta = np.zeros(channels, dtype=F64)
        self.ggamma = np.zeros_like(self.gamma)
        self.gbeta = np.zeros_like(self.beta)
        self.running_mean = np.zeros(channels, dtype=F64)
        self.running_var = np.ones(channels, dtype=F64)
        self.initialized = False
        self._xhat: np.ndarray | None = None
        self._invstd: np.ndarray | None = None

    def params(self):
        return [("gamma", self.gamma, self.ggamma), ("beta", self.beta, self.gbeta)]

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if x.shape[1] != self.channels:
            raise ValueError(f"batchnorm channel dimension mismatch: input has {x.shape[1]} channels, layer expects {self.channels}")
        g = self.gamma[None, :, None]
        b = self.beta[None, :, None]
        if training:
            if x.shape[0] < 2:
                raise ValueError("batchnorm training requires batch size >= 2")
            mean = x.mean(axis=(0, 2))
            var = x.var(axis=(0, 2))
            invstd = 1.0 / np.sqrt(var + self.eps)
            xhat = (x - mean[None, :, None]) * invstd[None, :, None]
            self.running_mean = self.momentum * self.running_mean + (1.0 - self.momentum) * mean
            self.running_var = self.momentum * self.running_var + (1.0 - self.momentum) * var
            self.initialized = True
            self._xhat = xhat
            self._invstd = invstd
            return g * xhat + b
        if not self.initialized:
            raise RuntimeError("uninitialized running statistics: batchnorm inference before any training step")
        xhat = (x - self.running_mean[None, :, None]) / np.sqrt(self.running_var[None, :, None] + self.eps)
        self._xhat = None
        return g * xhat + b

    def backward(self, gout: np.ndarray) -> np.ndarray:
        if self._xhat is None or self._invstd is None:
            raise RuntimeError("batchnorm backward called without a cached training forward pass")
        xhat, invstd = self._xhat, self._invstd
        n = gout.shape[0] * gout.shape[2]
        self.ggamma += (gout * xhat).sum(axis=(0, 2))
        self.gbeta += gout.sum(axis=(0, 2))
        gxhat = gout * self.gamma[None, :, None]
        s1 = gxhat.sum(axis=(0, 2), keepdims=True)
        s2 = (gxhat * xhat).sum(axis=(0, 2), keepdims=True)
        return (invstd[None, :, None] / n) * (n * gxhat - s1 - xhat * s2)


class ReLU(Layer):
    kind = "relu"

    def __init__(self):
        self._mask: np.ndarray | None = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        mask = x > 0
        self._mask = mask if training else None
        return np.where(mask, x, 0.0)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        if self._mask is None:
            raise RuntimeError("relu backward called without a cached training forward pass")
        return gout * self._mask


class GlobalAvgPool(Layer):
    """Collapse the time axis to its mean: (B, C, L) -> (B, C)."""

    kind = "gap"

    def __init__(self):
        self._length: int | None = None

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        self._length = x.shape[2] if training else None
        return x.mean(axis=2)

    def backward(self, gout: np.ndarray) -> np.ndarray:
        if self._length is None:
            raise RuntimeError("gap backward called without a cached training forward pass")
        return np.repeat(gout[:, :, None], self._length, axis=2) / self._length


class Dense(Layer):
    kind = "dense"

    def __init__(self, n_in: int, n_out: int, rng: np.random.Generator | None = None):
        self.n_in = n_in
        self.n_out = n_out
        if rng is None:
            self.w = np.zeros((n_in, n_out), dtype=F64)
        else:
            self.w = glorot_uniform(rng, (n_in, n_out), n_in, n_out)
        self.b = np.zeros(n_out, dtype=F64)
        self.gw = np.zeros_like(self.w)
        self.gb = np.zeros_like(self.b)
        self._x: np.ndarray | None = None

    def params(self):
        return [("w", self.w, self.gw), ("b", self.b, self.gb)]

    def forward(self, x: np.ndarray, training: bool) -> np.ndarray:
        if x.ndim != 2:
            raise ValueError(f"dense expects (batch, features), got {x.ndim} dims")
        if x.shape[1] != self.n_in:
            raise ValueError(f"dense feature dimension mismatch: input has {x.shape[1]} features, layer expects {self.n_in}")
        self._x = x if training else None
        return x @ self.w + self.b

    def backward(self, gout: np.ndarray) -> np.ndarray:
        if self._x is None:
            raise RuntimeError("dense backward called without a cached training forward pass")
        self.gw += self._x.T @ gout
        self.gb += gout.sum(axis=0)
        return gout @ self.w.T


def sparse_xent(logits: np.ndarray, labels: np.ndarray) -> tuple[float, np.ndarray]:
    """Sparse categorical cross-entropy with softmax, mean over the batch.

    Returns (loss, gradient w.r.t. logits).  The gradient per example is
    (softmax - onehot) / batch, so its components sum to zero.
    """
    labels = np.asarray(labels)
    batch, n_classes = logits.shape
    if labels.shape != (batch,):
        raise ValueError(f"labels shape {labels.shape} does not match batch size {batch}")
    bad = (labels < 0) | (labels >= n_classes)
    if np.any(bad):
        idx = int(np.argmax(bad))
        raise ValueError(f"label {labels[idx]} out of range [0, {n_classes}) at batch index {idx}")
    shifted = logits - logits.max(axis=1, keepdims=True)
    expz = np.exp(shifted)
    probs = expz / expz.sum(axis=1, keepdims=True)
    rows = np.arange(batch)
    loss = float(-np.mean(shifted[rows, labels] - np.log(expz.sum(axis=1))))
    grad = probs.copy()
    grad[rows, labels] -= 1.0
    return loss, grad / batch


class Network:
    """Fixed-topology sequence of layers with a cached forward pass."""

    def __init__(self, layers: list[Layer]):
        self.layers = layers
        self._forward_done = False

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        out = np.asarray(x, dtype=F64)
        for layer in self.layers:
            out = layer.forward(out, training)
        _require_finite(out, "network forward output")
        self._forward_done = training
        return out

    def forward_until(self, x: np.ndarray, n_layers: int) -> np.ndarray:
        """Inference pass through the first `n_layers` layers only."""
        out = np.asarray(x, dtype=F64)
        for layer in self.layers[:n_layers]:
            out = layer.forward(out, False)
        _require_finite(out, "network forward output")
        return out

    def backward(self, gout: np.ndarray) -> None:
        """Accumulate gradients for every weight; weights are not mutated."""
        if not self._forward_done:
            raise RuntimeError("backward called without a preceding training forward pass")
        g = gout
        for layer in reversed(self.layers):
            g = layer.backward(g)
        self._forward_done = False

    def params(self) -> list[tuple[str, np.ndarray, np.ndarray]]:
        out = []
        for i, layer in enumerate(self.layers):
            for name, w, g in layer.params():
                out.append((f"{i}.{layer.kind}.{name}", w, g))
        return out

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()
