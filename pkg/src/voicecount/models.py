"""Declarative model descriptions and builders for the four architectures.

A ModelConfig is a validated chain of LayerSpecs: every config is statically
shape-traced at construction so an impossible chain (e.g. pooling past the
resolution of the input) fails before any training work starts.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

from . import nn
from .errors import PipelineError
from .seeding import derive_seed

LAYER_KINDS = (
    "conv2d",
    "maxpool2d",
    "leaky_relu",
    "blstm",
    "dense",
    "dropout",
    "reshape",
    "time_mean",
)

DEFAULT_ALPHA = 0.1
DEFAULT_DROPOUT = 0.3


@dataclass(frozen=True)
class LayerSpec:
    kind: str
    params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in LAYER_KINDS:
            raise PipelineError(f"unknown layer kind {self.kind!r}")

    def to_dict(self) -> dict:
        return {"kind": self.kind, "params": dict(self.params)}

    @classmethod
    def from_dict(cls, d: dict) -> "LayerSpec":
        return cls(d["kind"], dict(d.get("params", {})))


def trace_shapes(
    input_shape: tuple[int, int], layers: tuple[LayerSpec, ...]
) -> list[tuple[int, ...]]:
    """Per-sample shape after each layer; raises on any inconsistency.

    Pooling is validated with an exact-halving budget: n pools need every
    spatial dim >= 2^n, otherwise the chain is rejected naming the block
    that exhausts the axis. (At runtime odd dims are padded, but a config
    that only ever pools padding is a mis-scaled architecture, not a model.)
    """
    shape: tuple[int, ...] = tuple(input_shape)
    if len(shape) != 2 or min(shape) < 1:
        raise PipelineError(f"input shape must be (frames, coeffs), got {shape}")
    shapes = [shape]
    floor_dims: tuple[int, int] | None = None
    pool_count = 0
    for idx, spec in enumerate(layers):
        p = spec.params
        if spec.kind == "reshape":
            mode = p["mode"]
            if mode == "add_channel":
                if len(shape) != 2:
                    raise PipelineError(f"layer {idx}: add_channel needs a 2-D input, got {shape}")
                shape = (1, shape[0], shape[1])
                floor_dims = (shape[1], shape[2])
            elif mode == "to_sequence":
                if len(shape) != 3:
                    raise PipelineError(f"layer {idx}: to_sequence needs a 3-D input, got {shape}")
                c, h, w = shape
                shape = (h, c * w)
            elif mode == "flatten":
                shape = (int(np.prod(shape)),)
            else:
                raise PipelineError(f"layer {idx}: unknown reshape mode {mode!r}")
        elif spec.kind == "conv2d":
            if len(shape) != 3:
                raise PipelineError(f"layer {idx}: conv2d needs a 3-D input, got {shape}")
            kh, kw = p["kernel"] if isinstance(p["kernel"], (tuple, list)) else (p["kernel"],) * 2
            if kh % 2 == 0 or kw % 2 == 0:
                raise PipelineError(f"layer {idx}: same-padding conv needs odd kernels, got {kh}x{kw}")
            shape = (p["filters"], shape[1], shape[2])
        elif spec.kind == "maxpool2d":
            if len(shape) != 3:
                raise PipelineError(f"layer {idx}: maxpool2d needs a 3-D input, got {shape}")
            pool_count += 1
            if floor_dims is not None:
                fh, fw = floor_dims[0] // 2, floor_dims[1] // 2
                if fh < 1 or fw < 1:
                    axis = "time" if fh < 1 else "coefficient"
                    raise PipelineError(
                        f"conv block {pool_count} (layer {idx}): pooling would reduce the "
                        f"{axis} axis below 1 sample; input {shapes[0]} supports at most "
                        f"{pool_count - 1} pooled blocks"
                    )
                floor_dims = (fh, fw)
            c, h, w = shape
            shape = (c, -(-h // 2), -(-w // 2))
        elif spec.kind == "leaky_relu":
            if p.get("alpha", DEFAULT_ALPHA) <= 0:
                raise PipelineError(f"layer {idx}: leaky ReLU alpha must be > 0")
        elif spec.kind == "dropout":
            if not 0.0 <= p["rate"] < 1.0:
                raise PipelineError(f"layer {idx}: dropout rate must be in [0, 1)")
        elif spec.kind == "blstm":
            if len(shape) != 2:
                raise PipelineError(f"layer {idx}: blstm needs a (time, features) input, got {shape}")
            shape = (shape[0], 2 * p["units"])
        elif spec.kind == "time_mean":
            if len(shape) != 2:
                raise PipelineError(f"layer {idx}: time_mean needs a (time, features) input, got {shape}")
            shape = (shape[1],)
        elif spec.kind == "dense":
            if len(shape) != 1:
                raise PipelineError(f"layer {idx}: dense needs a flat input, got {shape}")
            shape = (p["units"],)
        shapes.append(shape)
    return shapes


@dataclass(frozen=True)
class ModelConfig:
    """Named, shape-checked architecture: input geometry plus a layer chain."""

    name: str
    input_shape: tuple[int, int]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))
        shapes = trace_shapes(self.input_shape, self.layers)
        if shapes[-1] != (2,):
            raise PipelineError(
                f"model {self.name!r} must end in exactly 2 output units, got {shapes[-1]}"
            )

    def shape_trace(self) -> list[tuple[int, ...]]:
        return trace_shapes(self.input_shape, self.layers)

    def to_dict(self) -> dict:
        return {
            "name": self.name,
            "input_shape": list(self.input_shape),
            "layers": [spec.to_dict() for spec in self.layers],
        }

    @classmethod
    def from_dict(cls, d: dict) -> "ModelConfig":
        return cls(
            d["name"],
            tuple(d["input_shape"]),
            tuple(LayerSpec.from_dict(s) for s in d["layers"]),
        )


def architecture_hash(config: ModelConfig) -> str:
    blob = json.dumps(config.to_dict(), sort_keys=True)
    return hashlib.sha256(blob.encode()).hexdigest()


def _conv_stage(blocks: int, kernel, filters: int, alpha: float) -> list[LayerSpec]:
    stage = [LayerSpec("reshape", {"mode": "add_channel"})]
    for _ in range(blocks):
        stage += [
            LayerSpec("conv2d", {"filters": filters, "kernel": kernel}),
            LayerSpec("leaky_relu", {"alpha": alpha}),
            LayerSpec("maxpool2d", {"pool": 2}),
        ]
    return stage


def _fc_head(fc_sizes: tuple[int, ...], alpha: float, dropout_rate: float) -> list[LayerSpec]:
    head: list[LayerSpec] = []
    for size in fc_sizes:
        head += [
            LayerSpec("dense", {"units": size}),
            LayerSpec("leaky_relu", {"alpha": alpha}),
            LayerSpec("dropout", {"rate": dropout_rate}),
        ]
    head.append(LayerSpec("dense", {"units": 2}))
    return head


def build_cnn_lstm_fc(
    input_shape: tuple[int, int],
    conv_blocks: int = 7,
    kernel: int | tuple[int, int] = 5,
    filters: int = 256,
    lstm_layers: int = 3,
    lstm_units: int = 128,
    fc_sizes: tuple[int, ...] = (512, 64),
    dropout_rate: float = DEFAULT_DROPOUT,
    alpha: float = DEFAULT_ALPHA,
    name: str = "cnn-lstm-fc",
) -> ModelConfig:
    """The hybrid: conv blocks -> BLSTM stack -> mean over time -> FC head."""
    if conv_blocks < 1:
        raise PipelineError(f"need at least one conv block, got {conv_blocks}")
    layers = _conv_stage(conv_blocks, kernel, filters, alpha)
    layers.append(LayerSpec("reshape", {"mode": "to_sequence"}))
    layers += [LayerSpec("blstm", {"units": lstm_units}) for _ in range(lstm_layers)]
    layers.append(LayerSpec("time_mean", {}))
    layers += _fc_head(fc_sizes, alpha, dropout_rate)
    return ModelConfig(name, input_shape, tuple(layers))


def build_cnn_fc(
    input_shape: tuple[int, int],
    conv_blocks: int = 7,
    kernel: int | tuple[int, int] = 5,
    filters: int = 256,
    fc_sizes: tuple[int, ...] = (512, 64),
    dropout_rate: float = DEFAULT_DROPOUT,
    alpha: float = DEFAULT_ALPHA,
    name: str = "cnn-fc",
) -> ModelConfig:
    """Conv blocks feeding the FC head directly (no recurrent stage)."""
    if conv_blocks < 1:
        raise PipelineError(f"need at least one conv block, got {conv_blocks}")
    layers = _conv_stage(conv_blocks, kernel, filters, alpha)
    layers.append(LayerSpec("reshape", {"mode": "flatten"}))
    layers += _fc_head(fc_sizes, alpha, dropout_rate)
    return ModelConfig(name, input_shape, tuple(layers))


def build_lstm_fc(
    input_shape: tuple[int, int],
    lstm_layers: int = 3,
    lstm_units: int = 128,
    fc_sizes: tuple[int, ...] = (512, 64),
    dropout_rate: float = DEFAULT_DROPOUT,
    alpha: float = DEFAULT_ALPHA,
    name: str = "lstm-fc",
) -> ModelConfig:
    """BLSTM stack over raw feature frames, then the FC head."""
    layers = [LayerSpec("blstm", {"units": lstm_units}) for _ in range(lstm_layers)]
    layers.append(LayerSpec("time_mean", {}))
    layers += _fc_head(fc_sizes, alpha, dropout_rate)
    return ModelConfig(name, input_shape, tuple(layers))


def build_fc_baseline(
    input_shape: tuple[int, int],
    hidden: tuple[int, ...] = (1024, 512, 256, 64),
    alpha: float = DEFAULT_ALPHA,
    name: str = "fc",
) -> ModelConfig:
    """Plain fully-connected baseline over the flattened feature matrix."""
    layers = [LayerSpec("reshape", {"mode": "flatten"})]
    for size in hidden:
        layers += [
            LayerSpec("dense", {"units": size}),
            LayerSpec("leaky_relu", {"alpha": alpha}),
        ]
    layers.append(LayerSpec("dense", {"units": 2}))
    return ModelConfig(name, input_shape, tuple(layers))


ARCHITECTURES = {
    "fc": build_fc_baseline,
    "cnn-fc": build_cnn_fc,
    "lstm-fc": build_lstm_fc,
    "cnn-lstm-fc": build_cnn_lstm_fc,
}


def build_model(arch: str, input_shape: tuple[int, int], **overrides) -> ModelConfig:
    if arch not in ARCHITECTURES:
        raise PipelineError(
            f"unknown architecture {arch!r}; choose from {sorted(ARCHITECTURES)}"
        )
    return ARCHITECTURES[arch](input_shape, **overrides)


def build_network(config: ModelConfig, seed: int = 0, dtype=np.float32) -> nn.Network:
    """Instantiate trainable layers for a config; weights keyed off seed."""
    shapes = config.shape_trace()
    layers: list[nn.Layer] = []
    for idx, spec in enumerate(config.layers):
        p = spec.params
        in_shape = shapes[idx]
        layer_seed = derive_seed(seed, "layer", idx)
        if spec.kind == "reshape":
            layers.append(nn.Reshape(p["mode"], dtype=dtype))
        elif spec.kind == "conv2d":
            layers.append(
                nn.Conv2d(
                    in_shape[0],
                    p["filters"],
                    tuple(p["kernel"]) if isinstance(p["kernel"], (tuple, list)) else p["kernel"],
                    seed=layer_seed,
                    dtype=dtype,
                )
            )
        elif spec.kind == "maxpool2d":
            layers.append(nn.MaxPool2d(p.get("pool", 2), dtype=dtype))
        elif spec.kind == "leaky_relu":
            layers.append(nn.LeakyReLU(p.get("alpha", DEFAULT_ALPHA), dtype=dtype))
        elif spec.kind == "dropout":
            layers.append(nn.Dropout(p["rate"], seed=layer_seed, dtype=dtype))
        elif spec.kind == "blstm":
            layers.append(nn.BLSTM(in_shape[1], p["units"], seed=layer_seed, dtype=dtype))
        elif spec.kind == "time_mean":
            layers.append(nn.TimeMean(dtype=dtype))
        elif spec.kind == "dense":
            layers.append(nn.Dense(in_shape[0], p["units"], seed=layer_seed, dtype=dtype))
    return nn.Network(layers)


def aggregate_clip_prediction(
    window_preds: list[tuple[float, float]] | np.ndarray, n_max: int = 10
) -> tuple[int, int]:
    """Collapse per-window normalized predictions into integer counts.

    Mean over windows per output, rescaled by n_max, rounded half away from
    zero, clamped to [0, n_max]; if the pair still sums past n_max it is
    proportionally reduced first.
    """
    arr = np.asarray(window_preds, dtype=np.float64).reshape(-1, 2)
    if arr.shape[0] == 0:
        raise PipelineError("cannot aggregate an empty prediction list")
    means = np.clip(arr.mean(axis=0) * n_max, 0.0, n_max)
    total = means.sum()
    if total > n_max:
        means *= n_max / total
    counts = np.floor(means + 0.5).astype(int)
    while counts.sum() > n_max:
        counts[np.argmax(counts - means)] -= 1
    return int(counts[0]), int(counts[1])
