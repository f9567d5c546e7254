"""Sequential container wiring layers into one trainable chain."""

from __future__ import annotations

import numpy as np

from ..errors import PipelineError
from .layers import Layer, Parameter


class Network:
    """Static chain of layers sharing one forward/backward protocol.

    Parameters get stable dotted names ("03_conv2d.weight") so checkpoints
    and optimizer state line up across runs.
    """

    def __init__(self, layers: list[Layer]):
        self.layers = list(layers)
        for i, layer in enumerate(self.layers):
            for p in layer.params:
                if "." not in p.name:
                    p.name = f"{i:02d}_{layer.kind}.{p.name}"
        names = [p.name for p in self.parameters()]
        if len(names) != len(set(names)):
            raise PipelineError(f"duplicate parameter names in network: {sorted(names)}")

    def forward(self, x: np.ndarray, training: bool = False) -> np.ndarray:
        for layer in self.layers:
            x = layer.forward(x, training=training)
        return x

    def backward(self, grad: np.ndarray) -> np.ndarray:
        for layer in reversed(self.layers):
            grad = layer.backward(grad)
        return grad

    def parameters(self) -> list[Parameter]:
        return [p for layer in self.layers for p in layer.params]

    def zero_grad(self) -> None:
        for layer in self.layers:
            layer.zero_grad()

    def param_dict(self) -> dict[str, np.ndarray]:
        return {p.name: p.value for p in self.parameters()}

    def snapshot(self) -> dict[str, np.ndarray]:
        return {p.name: p.value.copy() for p in self.parameters()}

    def load_param_dict(self, values: dict[str, np.ndarray]) -> None:
        params = self.parameters()
        names = {p.name for p in params}
        if names != set(values):
            missing = names - set(values)
            extra = set(values) - names
            raise PipelineError(
                f"parameter name mismatch: missing {sorted(missing)}, extra {sorted(extra)}"
            )
        for p in params:
            v = np.asarray(values[p.name], dtype=p.value.dtype)
            if v.shape != p.value.shape:
                raise PipelineError(
                    f"parameter {p.name!r} shape mismatch: {v.shape} vs {p.value.shape}"
                )
            p.value = np.ascontiguousarray(v)
        # Re-point the layers' views to the freshly loaded arrays.
        for layer in self.layers:
            layer.zero_grad()
