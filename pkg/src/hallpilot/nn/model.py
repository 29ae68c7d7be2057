"""Declarative layer stacks: LayerSpec lists validated and built into a
sequential Model with forward/backward.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .layers import (GRU, Conv2d, Flatten, Layer, Linear, MaxPool2x2,
                     Normalize, ReLU, Reshape, Softmax, Tanh, Tensor,
                     Upsample2x)

LAYER_KINDS = ("conv2d", "linear", "relu", "tanh", "softmax", "maxpool",
               "flatten", "gru", "normalize", "upsample2x", "reshape")


@dataclass
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise ValueError(f"unknown layer kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, **self.params}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        d = dict(d)
        return cls(kind=d.pop("kind"), params=d)


def _build_layer(spec: LayerSpec, in_shape: tuple, rng, idx: int) -> Layer:
    p = spec.params
    name = f"{spec.kind}{idx}"
    if spec.kind == "conv2d":
        return Conv2d(in_ch=in_shape[0], out_ch=p["filters"], kernel=p["kernel"],
                      stride=p.get("stride", 1), padding=p.get("padding", 0),
                      rng=rng, name=name)
    if spec.kind == "linear":
        return Linear(in_f=in_shape[0], out_f=p["out"], rng=rng, name=name)
    if spec.kind == "relu":
        return ReLU()
    if spec.kind == "tanh":
        return Tanh()
    if spec.kind == "softmax":
        return Softmax()
    if spec.kind == "maxpool":
        return MaxPool2x2()
    if spec.kind == "flatten":
        return Flatten()
    if spec.kind == "gru":
        return GRU(input_size=in_shape[1], hidden_size=p["hidden"], rng=rng,
                   name=name)
    if spec.kind == "normalize":
        return Normalize()
    if spec.kind == "upsample2x":
        return Upsample2x()
    if spec.kind == "reshape":
        return Reshape(tuple(p["shape"]), name=name)
    raise ValueError(f"unknown layer kind {spec.kind!r}")


class Model:
    """Sequential stack of layers with cached-activation backprop."""

    def __init__(self, layers: list[Layer], input_shape: tuple,
                 output_shape: tuple):
        self.layers = layers
        self.input_shape = tuple(input_shape)
        self.output_shape = tuple(output_shape)

    @classmethod
    def build(cls, specs: list[LayerSpec], input_shape: tuple,
              seed: int = 0) -> "Model":
        rng = np.random.default_rng(seed)
        shape = tuple(input_shape)
        layers = []
        for i, spec in enumerate(specs):
            layer = _build_layer(spec, shape, rng, i)
            shape = layer.out_shape(shape)
            layers.append(layer)
        return cls(layers, input_shape, shape)

    def forward(self, x: np.ndarray) -> np.ndarray:
        if tuple(x.shape[1:]) != self.input_shape:
            raise ValueError(f"model expects input {self.input_shape}, "
                             f"got {tuple(x.shape[1:])}")
        for layer in self.layers:
            x = layer.forward(x)
        return x

    def backward(self, dout: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            dout = layer.backward(dout)
        return dout

    def params(self) -> list[Tensor]:
        out = []
        for layer in self.layers:
            out.extend(layer.params())
        return out

    def zero_grad(self):
        for p in self.params():
            p.zero_grad()

    def cast(self, dtype):
        for p in self.params():
            p.data = p.data.astype(dtype)

    @property
    def n_params(self) -> int:
        return sum(p.data.size for p in self.params())
