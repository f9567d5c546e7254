"""Dense-array network layers with explicit forward/backward passes.

Each layer caches what its backward pass needs during forward; the
architectures here are static chains, so a tape is unnecessary. All layers
work on a leading batch axis and also accept a single unbatched sample
(handy in tests). Training tensors default to float32; construct with
dtype=np.float64 for gradient-check precision.
"""

from __future__ import annotations

import numpy as np

from ..errors import PipelineError


def xavier_init(
    fan_in: int,
    fan_out: int,
    shape: tuple[int, ...] | None = None,
    seed: int = 0,
) -> np.ndarray:
    """Uniform samples in [-b, b] with b = sqrt(6 / (fan_in + fan_out))."""
    if fan_in < 1 or fan_out < 1:
        raise PipelineError(f"fan_in/fan_out must be >= 1, got {fan_in}, {fan_out}")
    bound = np.sqrt(6.0 / (fan_in + fan_out))
    rng = np.random.default_rng(seed)
    return rng.uniform(-bound, bound, size=shape if shape is not None else (fan_in, fan_out))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


class Parameter:
    """A trainable array and its accumulated gradient."""

    __slots__ = ("name", "value", "grad")

    def __init__(self, name: str, value: np.ndarray):
        self.name = name
        self.value = np.ascontiguousarray(value)
        self.grad = np.zeros_like(self.value)


class Layer:
    kind = "layer"
    batched_ndim: int | None = None  # expected ndim including the batch axis

    def __init__(self, dtype=np.float32):
        self.dtype = np.dtype(dtype)
        self.params: list[Parameter] = []
        self._squeeze = False

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        raise NotImplementedError

    def backward(self, grad: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def zero_grad(self) -> None:
        for p in self.params:
            p.grad[...] = 0

    def _promote(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=self.dtype)
        if self.batched_ndim is None or x.ndim == self.batched_ndim:
            self._squeeze = False
            return x
        if x.ndim == self.batched_ndim - 1:
            self._squeeze = True
            return x[None]
        raise PipelineError(
            f"{self.kind} expected {self.batched_ndim}-D (batched) or "
            f"{self.batched_ndim - 1}-D input, got shape {x.shape}"
        )

    def _restore(self, y: np.ndarray) -> np.ndarray:
        return y[0] if self._squeeze else y

    def _regrade(self, grad: np.ndarray) -> np.ndarray:
        grad = np.asarray(grad, dtype=self.dtype)
        return grad[None] if self._squeeze else grad


class Dense(Layer):
    """Affine map x @ W + b."""

    kind = "dense"
    batched_ndim = 2

    def __init__(self, in_features: int, out_features: int, seed: int = 0, dtype=np.float32):
        super().__init__(dtype)
        w = xavier_init(in_features, out_features, seed=seed)
        self.weight = Parameter("weight", w.astype(self.dtype))
        self.bias = Parameter("bias", np.zeros(out_features, dtype=self.dtype))
        self.params = [self.weight, self.bias]
        self._x: np.ndarray | None = None

    def forward(self, x, training=False):
        x = self._promote(x)
        if x.shape[1] != self.weight.value.shape[0]:
            raise PipelineError(
                f"dense shape mismatch: input {x.shape} vs weights "
                f"{self.weight.value.shape}"
            )
        self._x = x
        return self._restore(x @ self.weight.value + self.bias.value)

    def backward(self, grad):
        grad = self._regrade(grad)
        self.weight.grad += self._x.T @ grad
        self.bias.grad += grad.sum(axis=0)
        return self._restore(grad @ self.weight.value.T)


class LeakyReLU(Layer):
    """x if x >= 0 else alpha * x, elementwise."""

    kind = "leaky_relu"

    def __init__(self, alpha: float = 0.1, dtype=np.float32):
        super().__init__(dtype)
        if alpha <= 0:
            raise PipelineError(f"leaky ReLU alpha must be > 0, got {alpha}")
        self.alpha = alpha
        self._neg: np.ndarray | None = None

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=self.dtype)
        self._neg = x < 0
        return np.where(self._neg, self.alpha * x, x)

    def backward(self, grad):
        grad = np.asarray(grad, dtype=self.dtype)
        return np.where(self._neg, self.alpha * grad, grad)


class Dropout(Layer):
    """Inverted dropout: zero with probability rate, scale survivors."""

    kind = "dropout"

    def __init__(self, rate: float, seed: int = 0, dtype=np.float32):
        super().__init__(dtype)
        if not 0.0 <= rate < 1.0:
            raise PipelineError(f"dropout rate must be in [0, 1), got {rate}")
        self.rate = rate
        self._rng = np.random.default_rng(seed)
        self._mask: np.ndarray | None = None

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=self.dtype)
        if not training or self.rate == 0.0:
            self._mask = None
            return x
        keep = self._rng.random(x.shape) >= self.rate
        self._mask = keep.astype(self.dtype) / (1.0 - self.rate)
        return x * self._mask

    def backward(self, grad):
        grad = np.asarray(grad, dtype=self.dtype)
        return grad if self._mask is None else grad * self._mask


class Conv2d(Layer):
    """Same-padded 2-D cross-correlation with stride 1."""

    kind = "conv2d"
    batched_ndim = 4

    def __init__(
        self,
        in_channels: int,
        out_channels: int,
        kernel: int | tuple[int, int],
        seed: int = 0,
        dtype=np.float32,
    ):
        super().__init__(dtype)
        kh, kw = (kernel, kernel) if isinstance(kernel, int) else kernel
        if kh % 2 == 0 or kw % 2 == 0:
            raise PipelineError(f"same-padding conv needs odd kernels, got {kh}x{kw}")
        self.in_channels = in_channels
        self.out_channels = out_channels
        self.kh, self.kw = kh, kw
        fan_in = in_channels * kh * kw
        fan_out = out_channels * kh * kw
        w = xavier_init(fan_in, fan_out, (out_channels, in_channels, kh, kw), seed=seed)
        self.weight = Parameter("weight", w.astype(self.dtype))
        self.bias = Parameter("bias", np.zeros(out_channels, dtype=self.dtype))
        self.params = [self.weight, self.bias]
        self._cols: np.ndarray | None = None
        self._in_shape: tuple | None = None

    def _im2col(self, x: np.ndarray) -> np.ndarray:
        """Patch matrix [B*H*W, C*kh*kw] so the conv is a single GEMM.

        One gather through an overlapping strided view; no intermediate
        patch tensor.
        """
        b, c, h, w = x.shape
        ph, pw = self.kh // 2, self.kw // 2
        xp = np.zeros((b, c, h + 2 * ph, w + 2 * pw), dtype=self.dtype)
        xp[:, :, ph : ph + h, pw : pw + w] = x
        s0, s1, s2, s3 = xp.strides
        patches = np.lib.stride_tricks.as_strided(
            xp,
            shape=(b, h, w, c, self.kh, self.kw),
            strides=(s0, s2, s3, s1, s2, s3),
        )
        return np.ascontiguousarray(patches).reshape(b * h * w, c * self.kh * self.kw)

    def forward(self, x, training=False):
        x = self._promote(x)
        if x.shape[1] != self.in_channels:
            raise PipelineError(
                f"conv2d shape mismatch: input {x.shape} vs kernels "
                f"{self.weight.value.shape}"
            )
        b, _, h, w = x.shape
        cols = self._im2col(x)
        w_flat = self.weight.value.reshape(self.out_channels, -1)
        out = cols @ w_flat.T + self.bias.value
        self._cols = cols
        self._in_shape = x.shape
        return self._restore(
            out.reshape(b, h * w, self.out_channels).transpose(0, 2, 1).reshape(
                b, self.out_channels, h, w
            )
        )

    def backward(self, grad):
        grad = self._regrade(grad)
        b, c, h, w = self._in_shape
        g_rows = np.ascontiguousarray(
            grad.reshape(b, self.out_channels, h * w).transpose(0, 2, 1)
        ).reshape(b * h * w, self.out_channels)
        self.bias.grad += g_rows.sum(axis=0)
        # weight layout [O, C, kh, kw] matches the [C*kh*kw] patch axis
        self.weight.grad += (g_rows.T @ self._cols).reshape(self.weight.value.shape)

        w_flat = self.weight.value.reshape(self.out_channels, -1)
        g_patches = (g_rows @ w_flat).reshape(b, h, w, c, self.kh, self.kw)
        ph, pw = self.kh // 2, self.kw // 2
        # fold in channels-last layout (contiguous writes), transpose once
        gxp = np.zeros((b, h + 2 * ph, w + 2 * pw, c), dtype=self.dtype)
        for dy in range(self.kh):
            for dx in range(self.kw):
                gxp[:, dy : dy + h, dx : dx + w, :] += g_patches[:, :, :, :, dy, dx]
        gx = gxp[:, ph : ph + h, pw : pw + w, :].transpose(0, 3, 1, 2)
        return self._restore(np.ascontiguousarray(gx))


class MaxPool2d(Layer):
    """Non-overlapping pooling; odd trailing dims are padded with -inf."""

    kind = "maxpool2d"
    batched_ndim = 4

    def __init__(self, pool: int = 2, dtype=np.float32):
        super().__init__(dtype)
        if pool < 2:
            raise PipelineError(f"pool size must be >= 2, got {pool}")
        self.pool = pool
        self._idx: np.ndarray | None = None
        self._in_shape: tuple | None = None

    def forward(self, x, training=False):
        x = self._promote(x)
        b, c, h, w = x.shape
        p = self.pool
        h2, w2 = -(-h // p), -(-w // p)
        xp = np.full((b, c, h2 * p, w2 * p), -np.inf, dtype=self.dtype)
        xp[:, :, :h, :w] = x
        blocks = (
            xp.reshape(b, c, h2, p, w2, p)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, h2, w2, p * p)
        )
        self._idx = blocks.argmax(axis=-1)
        self._in_shape = x.shape
        out = np.take_along_axis(blocks, self._idx[..., None], axis=-1)[..., 0]
        return self._restore(out)

    def backward(self, grad):
        grad = self._regrade(grad)
        b, c, h, w = self._in_shape
        p = self.pool
        h2, w2 = -(-h // p), -(-w // p)
        g_blocks = np.zeros((b, c, h2, w2, p * p), dtype=self.dtype)
        np.put_along_axis(g_blocks, self._idx[..., None], grad[..., None], axis=-1)
        gxp = (
            g_blocks.reshape(b, c, h2, w2, p, p)
            .transpose(0, 1, 2, 4, 3, 5)
            .reshape(b, c, h2 * p, w2 * p)
        )
        return self._restore(gxp[:, :, :h, :w])


class _LstmDirection:
    """One direction of an LSTM: gate order (input, forget, candidate, output)."""

    def __init__(
        self,
        input_size: int,
        units: int,
        seed: int,
        dtype,
        tag: str,
        forget_bias: float = 1.0,
    ):
        self.units = units
        self.dtype = np.dtype(dtype)
        wx = xavier_init(input_size, units, (input_size, 4 * units), seed=seed)
        wh = xavier_init(units, units, (units, 4 * units), seed=seed + 1)
        bias = np.zeros(4 * units)
        bias[units : 2 * units] = forget_bias
        self.wx = Parameter(f"{tag}_wx", wx.astype(self.dtype))
        self.wh = Parameter(f"{tag}_wh", wh.astype(self.dtype))
        self.bias = Parameter(f"{tag}_bias", bias.astype(self.dtype))
        self.params = [self.wx, self.wh, self.bias]
        self._cache: list | None = None
        self._x: np.ndarray | None = None

    def forward(self, x: np.ndarray) -> np.ndarray:
        b, t, _ = x.shape
        u = self.units
        h = np.zeros((b, u), dtype=self.dtype)
        c = np.zeros((b, u), dtype=self.dtype)
        hs = np.empty((b, t, u), dtype=self.dtype)
        self._cache = []
        self._x = x
        for step in range(t):
            xt = x[:, step]
            z = xt @ self.wx.value + h @ self.wh.value + self.bias.value
            i = _sigmoid(z[:, :u])
            f = _sigmoid(z[:, u : 2 * u])
            g = np.tanh(z[:, 2 * u : 3 * u])
            o = _sigmoid(z[:, 3 * u :])
            c_prev = c
            c = f * c_prev + i * g
            tc = np.tanh(c)
            h_prev = h
            h = o * tc
            hs[:, step] = h
            self._cache.append((xt, h_prev, c_prev, i, f, g, o, tc))
        return hs

    def backward(self, g_hs: np.ndarray) -> np.ndarray:
        b, t, _ = self._x.shape
        u = self.units
        gx = np.zeros_like(self._x)
        gh = np.zeros((b, u), dtype=self.dtype)
        gc = np.zeros((b, u), dtype=self.dtype)
        for step in reversed(range(t)):
            xt, h_prev, c_prev, i, f, g, o, tc = self._cache[step]
            ght = g_hs[:, step] + gh
            go = ght * tc
            gc = gc + ght * o * (1.0 - tc * tc)
            gi = gc * g
            gg = gc * i
            gf = gc * c_prev
            gc_prev = gc * f
            dz = np.concatenate(
                [
                    gi * i * (1.0 - i),
                    gf * f * (1.0 - f),
                    gg * (1.0 - g * g),
                    go * o * (1.0 - o),
                ],
                axis=1,
            )
            self.wx.grad += xt.T @ dz
            self.wh.grad += h_prev.T @ dz
            self.bias.grad += dz.sum(axis=0)
            gx[:, step] = dz @ self.wx.value.T
            gh = dz @ self.wh.value.T
            gc = gc_prev
        return gx


class BLSTM(Layer):
    """Bidirectional LSTM over the time axis; outputs concatenated per step.

    Input [B, T, F] -> output [B, T, 2*units]; the first half of the feature
    axis is the forward pass, the second half the (re-aligned) backward pass.
    Initial states are zero.
    """

    kind = "blstm"
    batched_ndim = 3

    def __init__(self, input_size: int, units: int, seed: int = 0, dtype=np.float32):
        super().__init__(dtype)
        if units < 1:
            raise PipelineError(f"BLSTM needs >= 1 unit, got {units}")
        self.units = units
        self.fwd = _LstmDirection(input_size, units, seed, dtype, tag="fwd")
        self.bwd = _LstmDirection(input_size, units, seed + 7919, dtype, tag="bwd")
        self.params = self.fwd.params + self.bwd.params

    def forward(self, x, training=False):
        x = self._promote(x)
        if not np.all(np.isfinite(x)):
            raise PipelineError("BLSTM input contains non-finite values")
        if x.shape[-1] != self.fwd.wx.value.shape[0]:
            raise PipelineError(
                f"blstm shape mismatch: input {x.shape} vs wx "
                f"{self.fwd.wx.value.shape}"
            )
        h_f = self.fwd.forward(x)
        h_b = self.bwd.forward(np.ascontiguousarray(x[:, ::-1]))[:, ::-1]
        return self._restore(np.concatenate([h_f, h_b], axis=-1))

    def backward(self, grad):
        grad = self._regrade(grad)
        u = self.units
        gx_f = self.fwd.backward(np.ascontiguousarray(grad[..., :u]))
        gx_b = self.bwd.backward(np.ascontiguousarray(grad[:, ::-1, u:]))[:, ::-1]
        return self._restore(gx_f + gx_b)


class TimeMean(Layer):
    """Mean over the time axis: [B, T, F] -> [B, F]."""

    kind = "time_mean"
    batched_ndim = 3

    def __init__(self, dtype=np.float32):
        super().__init__(dtype)
        self._t = 0

    def forward(self, x, training=False):
        x = self._promote(x)
        self._t = x.shape[1]
        return self._restore(x.mean(axis=1))

    def backward(self, grad):
        grad = self._regrade(grad)
        return self._restore(
            np.broadcast_to(grad[:, None, :] / self._t, (grad.shape[0], self._t, grad.shape[1])).astype(self.dtype)
        )


class Reshape(Layer):
    """Pure data-movement adapters between layer families.

    Modes: add_channel [B,T,F]->[B,1,T,F]; to_sequence [B,C,H,W]->[B,H,C*W]
    (time axis preserved, channels and width flattened into features);
    flatten [B,...]->[B,D].
    """

    kind = "reshape"
    MODES = ("add_channel", "to_sequence", "flatten")

    def __init__(self, mode: str, dtype=np.float32):
        super().__init__(dtype)
        if mode not in self.MODES:
            raise PipelineError(f"unknown reshape mode {mode!r}")
        self.mode = mode
        self._in_shape: tuple | None = None

    def forward(self, x, training=False):
        x = np.asarray(x, dtype=self.dtype)
        self._in_shape = x.shape
        if self.mode == "add_channel":
            b, t, f = x.shape
            return x.reshape(b, 1, t, f)
        if self.mode == "to_sequence":
            b, c, h, w = x.shape
            return x.transpose(0, 2, 1, 3).reshape(b, h, c * w)
        return x.reshape(x.shape[0], -1)

    def backward(self, grad):
        grad = np.asarray(grad, dtype=self.dtype)
        if self.mode == "to_sequence":
            b, c, h, w = self._in_shape
            return grad.reshape(b, h, c, w).transpose(0, 2, 1, 3)
        return grad.reshape(self._in_shape)
