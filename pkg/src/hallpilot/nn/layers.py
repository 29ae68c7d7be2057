"""Differentiable layers over numpy arrays.

Batch layout is (N, C, H, W) for images, (N, D) for vectors and (N, T, D) for
sequences. Each layer caches what its backward pass needs; backward returns
the input gradient and accumulates parameter gradients into Tensor.grad.
"""

from __future__ import annotations

import math

import numpy as np


class Tensor:
    """Parameter holder: float data plus a same-shape gradient slot."""

    def __init__(self, data, name: str = ""):
        self.data = np.asarray(data, dtype=np.float32)
        self.grad = None
        self.name = name

    @property
    def shape(self):
        return self.data.shape

    def zero_grad(self):
        self.grad = np.zeros_like(self.data)


def xavier_init(shape, fan_in: int, fan_out: int, seed=0) -> np.ndarray:
    """Uniform on +-sqrt(6 / (fan_in + fan_out))."""
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    bound = math.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-bound, bound, size=shape)


def _sigmoid(x):
    return 1.0 / (1.0 + np.exp(-x))


class Layer:
    name = "layer"

    def params(self) -> list[Tensor]:
        return []

    def forward(self, x: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def backward(self, dout: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def out_shape(self, in_shape: tuple) -> tuple:
        """Per-sample output shape given per-sample input shape; raises on mismatch."""
        raise NotImplementedError


class Conv2d(Layer):
    def __init__(self, in_ch: int, out_ch: int, kernel: int, stride: int = 1,
                 padding: int = 0, rng=None, name: str = "conv2d"):
        self.in_ch, self.out_ch = in_ch, out_ch
        self.kh = self.kw = kernel
        self.stride, self.padding = stride, padding
        self.name = name
        fan_in = in_ch * self.kh * self.kw
        fan_out = out_ch * self.kh * self.kw
        self.w = Tensor(xavier_init((out_ch, in_ch, self.kh, self.kw),
                                    fan_in, fan_out, rng or 0), name + ".w")
        self.b = Tensor(np.zeros(out_ch), name + ".b")

    def params(self):
        return [self.w, self.b]

    def out_shape(self, in_shape):
        if len(in_shape) != 3 or in_shape[0] != self.in_ch:
            raise ValueError(f"layer {self.name}: expected ({self.in_ch}, H, W) "
                             f"input, got {in_shape}")
        c, h, w = in_shape
        oh = (h + 2 * self.padding - self.kh) // self.stride + 1
        ow = (w + 2 * self.padding - self.kw) // self.stride + 1
        if oh < 1 or ow < 1:
            raise ValueError(f"layer {self.name}: kernel {self.kh} too large "
                             f"for input {in_shape}")
        return (self.out_ch, oh, ow)

    def _im2col(self, xp, oh, ow):
        n, c, _, _ = xp.shape
        s = self.stride
        cols = np.empty((n, c, self.kh, self.kw, oh, ow), dtype=xp.dtype)
        for i in range(self.kh):
            for j in range(self.kw):
                cols[:, :, i, j] = xp[:, :, i:i + s * oh:s, j:j + s * ow:s]
        return cols.reshape(n, c * self.kh * self.kw, oh * ow)

    def forward(self, x):
        n, c, h, w = x.shape
        _, oh, ow = self.out_shape((c, h, w))
        p = self.padding
        xp = np.pad(x, ((0, 0), (0, 0), (p, p), (p, p))) if p else x
        cols = self._im2col(xp, oh, ow)
        wmat = self.w.data.reshape(self.out_ch, -1).astype(x.dtype)
        out = np.matmul(wmat[None], cols)
        out += self.b.data.astype(x.dtype)[None, :, None]
        self._cache = (xp.shape, cols, oh, ow, x.dtype)
        return out.reshape(n, self.out_ch, oh, ow)

    def backward(self, dout):
        xp_shape, cols, oh, ow, dtype = self._cache
        n = dout.shape[0]
        dflat = dout.reshape(n, self.out_ch, oh * ow)
        dw = np.matmul(dflat, cols.transpose(0, 2, 1)).sum(axis=0)
        self.w.grad += dw.reshape(self.w.data.shape)
        self.b.grad += dflat.sum(axis=(0, 2))
        wmat = self.w.data.reshape(self.out_ch, -1).astype(dtype)
        dcols = np.matmul(wmat.T[None], dflat)
        dcols = dcols.reshape(n, xp_shape[1], self.kh, self.kw, oh, ow)
        dxp = np.zeros(xp_shape, dtype=dtype)
        s = self.stride
        for i in range(self.kh):
            for j in range(self.kw):
                dxp[:, :, i:i + s * oh:s, j:j + s * ow:s] += dcols[:, :, i, j]
        p = self.padding
        return dxp[:, :, p:dxp.shape[2] - p, p:dxp.shape[3] - p] if p else dxp


class Linear(Layer):
    def __init__(self, in_f: int, out_f: int, rng=None, name: str = "linear"):
        self.in_f, self.out_f = in_f, out_f
        self.name = name
        self.w = Tensor(xavier_init((in_f, out_f), in_f, out_f, rng or 0),
                        name + ".w")
        self.b = Tensor(np.zeros(out_f), name + ".b")

    def params(self):
        return [self.w, self.b]

    def out_shape(self, in_shape):
        if len(in_shape) != 1 or in_shape[0] != self.in_f:
            raise ValueError(f"layer {self.name}: expected ({self.in_f},) input, "
                             f"got {in_shape}")
        return (self.out_f,)

    def forward(self, x):
        self._x = x
        return x @ self.w.data.astype(x.dtype) + self.b.data.astype(x.dtype)

    def backward(self, dout):
        self.w.grad += self._x.T @ dout
        self.b.grad += dout.sum(axis=0)
        return dout @ self.w.data.astype(dout.dtype).T


class ReLU(Layer):
    name = "relu"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        self._mask = x > 0
        return x * self._mask

    def backward(self, dout):
        return dout * self._mask


class Tanh(Layer):
    name = "tanh"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        self._y = np.tanh(x)
        return self._y

    def backward(self, dout):
        return dout * (1.0 - self._y ** 2)


class Softmax(Layer):
    name = "softmax"

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        z = x - x.max(axis=-1, keepdims=True)
        e = np.exp(z)
        self._y = e / e.sum(axis=-1, keepdims=True)
        return self._y

    def backward(self, dout):
        y = self._y
        return y * (dout - (dout * y).sum(axis=-1, keepdims=True))


class MaxPool2x2(Layer):
    name = "maxpool"

    def out_shape(self, in_shape):
        c, h, w = in_shape
        if h < 2 or w < 2:
            raise ValueError(f"layer {self.name}: input {in_shape} too small to pool")
        return (c, h // 2, w // 2)

    def forward(self, x):
        n, c, h, w = x.shape
        h2, w2 = h // 2, w // 2
        xc = x[:, :, :2 * h2, :2 * w2]
        windows = xc.reshape(n, c, h2, 2, w2, 2).transpose(0, 1, 2, 4, 3, 5)
        windows = windows.reshape(n, c, h2, w2, 4)
        self._argmax = windows.argmax(axis=-1)
        self._in_shape = x.shape
        return np.take_along_axis(windows, self._argmax[..., None], axis=-1)[..., 0]

    def backward(self, dout):
        n, c, h, w = self._in_shape
        h2, w2 = h // 2, w // 2
        dwin = np.zeros((n, c, h2, w2, 4), dtype=dout.dtype)
        np.put_along_axis(dwin, self._argmax[..., None], dout[..., None], axis=-1)
        dxc = dwin.reshape(n, c, h2, w2, 2, 2).transpose(0, 1, 2, 4, 3, 5)
        dxc = dxc.reshape(n, c, 2 * h2, 2 * w2)
        dx = np.zeros(self._in_shape, dtype=dout.dtype)
        dx[:, :, :2 * h2, :2 * w2] = dxc
        return dx


class Flatten(Layer):
    name = "flatten"

    def out_shape(self, in_shape):
        return (int(np.prod(in_shape)),)

    def forward(self, x):
        self._in_shape = x.shape
        return x.reshape(x.shape[0], -1)

    def backward(self, dout):
        return dout.reshape(self._in_shape)


class Reshape(Layer):
    def __init__(self, target: tuple, name: str = "reshape"):
        self.target = tuple(target)
        self.name = name

    def out_shape(self, in_shape):
        if int(np.prod(in_shape)) != int(np.prod(self.target)):
            raise ValueError(f"layer {self.name}: cannot reshape {in_shape} "
                             f"to {self.target}")
        return self.target

    def forward(self, x):
        self._in_shape = x.shape
        return x.reshape((x.shape[0],) + self.target)

    def backward(self, dout):
        return dout.reshape(self._in_shape)


class Upsample2x(Layer):
    """Nearest-neighbor 2x upsampling."""

    name = "upsample2x"

    def out_shape(self, in_shape):
        c, h, w = in_shape
        return (c, 2 * h, 2 * w)

    def forward(self, x):
        return x.repeat(2, axis=2).repeat(2, axis=3)

    def backward(self, dout):
        n, c, h2, w2 = dout.shape
        return dout.reshape(n, c, h2 // 2, 2, w2 // 2, 2).sum(axis=(3, 5))


class Normalize(Layer):
    """Standardize per channel over the batch (zero mean, unit variance)."""

    name = "normalize"
    eps = 1e-8

    def out_shape(self, in_shape):
        return in_shape

    def forward(self, x):
        axes = (0, 2, 3) if x.ndim == 4 else (0,)
        mu = x.mean(axis=axes, keepdims=True)
        var = x.var(axis=axes, keepdims=True)
        self._std = np.sqrt(var + self.eps)
        self._axes = axes
        self._m = x.size // mu.size
        self._y = (x - mu) / self._std
        return self._y

    def backward(self, dout):
        y, axes, m = self._y, self._axes, self._m
        mean_d = dout.mean(axis=axes, keepdims=True)
        mean_dy = (dout * y).mean(axis=axes, keepdims=True)
        return (dout - mean_d - y * mean_dy) / self._std


class GRU(Layer):
    """Gated recurrent unit over (N, T, D); returns the final hidden state.

    z = sigmoid(x Wz + h Uz + bz), r = sigmoid(x Wr + h Ur + br),
    htilde = tanh(x Wh + (r*h) Uh + bh), h' = (1 - z)*h + z*htilde.
    """

    def __init__(self, input_size: int, hidden_size: int, rng=None,
                 name: str = "gru"):
        self.input_size, self.hidden_size = input_size, hidden_size
        self.name = name
        d, h = input_size, hidden_size

        def w(shape, nm):
            return Tensor(xavier_init(shape, shape[0], shape[1], rng or 0),
                          f"{name}.{nm}")

        self.wz, self.uz = w((d, h), "wz"), w((h, h), "uz")
        self.wr, self.ur = w((d, h), "wr"), w((h, h), "ur")
        self.wh, self.uh = w((d, h), "wh"), w((h, h), "uh")
        self.bz = Tensor(np.zeros(h), f"{name}.bz")
        self.br = Tensor(np.zeros(h), f"{name}.br")
        self.bh = Tensor(np.zeros(h), f"{name}.bh")

    def params(self):
        return [self.wz, self.uz, self.bz, self.wr, self.ur, self.br,
                self.wh, self.uh, self.bh]

    def out_shape(self, in_shape):
        if len(in_shape) != 2 or in_shape[1] != self.input_size:
            raise ValueError(f"layer {self.name}: expected (T, {self.input_size}) "
                             f"input, got {in_shape}")
        return (self.hidden_size,)

    def forward(self, x):
        n, t, _ = x.shape
        dtype = x.dtype
        p = {k: v.data.astype(dtype) for k, v in
             dict(wz=self.wz, uz=self.uz, wr=self.wr, ur=self.ur,
                  wh=self.wh, uh=self.uh).items()}
        bz = self.bz.data.astype(dtype)
        br = self.br.data.astype(dtype)
        bh = self.bh.data.astype(dtype)
        h = np.zeros((n, self.hidden_size), dtype=dtype)
        self._steps = []
        for i in range(t):
            xt = x[:, i, :]
            z = _sigmoid(xt @ p["wz"] + h @ p["uz"] + bz)
            r = _sigmoid(xt @ p["wr"] + h @ p["ur"] + br)
            htil = np.tanh(xt @ p["wh"] + (r * h) @ p["uh"] + bh)
            h_new = (1.0 - z) * h + z * htil
            self._steps.append((xt, h, z, r, htil))
            h = h_new
        self._t = t
        return h

    def backward(self, dout):
        dtype = dout.dtype
        uz = self.uz.data.astype(dtype)
        ur = self.ur.data.astype(dtype)
        uh = self.uh.data.astype(dtype)
        wz = self.wz.data.astype(dtype)
        wr = self.wr.data.astype(dtype)
        wh = self.wh.data.astype(dtype)
        dh = dout
        dx = np.zeros((dout.shape[0], self._t, self.input_size), dtype=dtype)
        for i in reversed(range(self._t)):
            xt, h_prev, z, r, htil = self._steps[i]
            dz = dh * (htil - h_prev)
            dhtil = dh * z
            dh_prev = dh * (1.0 - z)

            dah = dhtil * (1.0 - htil ** 2)
            self.wh.grad += xt.T @ dah
            self.uh.grad += (r * h_prev).T @ dah
            self.bh.grad += dah.sum(axis=0)
            drh = dah @ uh.T
            dr = drh * h_prev
            dh_prev += drh * r

            daz = dz * z * (1.0 - z)
            self.wz.grad += xt.T @ daz
            self.uz.grad += h_prev.T @ daz
            self.bz.grad += daz.sum(axis=0)
            dh_prev += daz @ uz.T

            dar = dr * r * (1.0 - r)
            self.wr.grad += xt.T @ dar
            self.ur.grad += h_prev.T @ dar
            self.br.grad += dar.sum(axis=0)
            dh_prev += dar @ ur.T

            dx[:, i, :] = daz @ wz.T + dar @ wr.T + dah @ wh.T
            dh = dh_prev
        return dx
