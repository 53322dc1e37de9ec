"""Sequential model specs, shape inference, parameter counting, forward and backward passes."""

from __future__ import annotations

from dataclasses import dataclass
from typing import Any, Sequence, Union

import numpy as np

from . import functional as F

ACTIVATIONS = ("relu", "relu6", "none")


class ShapeError(ValueError):
    pass


@dataclass(frozen=True)
class Conv:
    filters: int
    kernel: tuple[int, int] = (3, 3)
    activation: str = "relu"

    def __post_init__(self):
        object.__setattr__(self, "kernel", tuple(int(k) for k in self.kernel))
        if self.filters < 1 or min(self.kernel) < 1 or len(self.kernel) != 2:
            raise ValueError("conv filters and kernel dims must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


@dataclass(frozen=True)
class MaxPool:
    pass


@dataclass(frozen=True)
class Flatten:
    pass


@dataclass(frozen=True)
class Dense:
    units: int = 1
    activation: str = "none"

    def __post_init__(self):
        if self.units < 1:
            raise ValueError("dense units must be >= 1")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


LayerSpec = Union[Conv, MaxPool, Flatten, Dense]
Shape = tuple[int, ...]


@dataclass(frozen=True)
class ModelSpec:
    input_shape: tuple[int, int, int]
    layers: tuple[LayerSpec, ...]

    def __post_init__(self):
        object.__setattr__(self, "input_shape", tuple(int(d) for d in self.input_shape))
        object.__setattr__(self, "layers", tuple(self.layers))

    def to_dict(self) -> dict[str, Any]:
        layers = []
        for layer in self.layers:
            if isinstance(layer, Conv):
                layers.append({"type": "conv", "filters": layer.filters, "kernel": list(layer.kernel),
                               "activation": layer.activation})
            elif isinstance(layer, MaxPool):
                layers.append({"type": "maxpool"})
            elif isinstance(layer, Flatten):
                layers.append({"type": "flatten"})
            else:
                layers.append({"type": "dense", "units": layer.units, "activation": layer.activation})
        return {"input_shape": list(self.input_shape), "layers": layers}

    @classmethod
    def from_dict(cls, data: dict[str, Any]) -> "ModelSpec":
        layers: list[LayerSpec] = []
        for d in data["layers"]:
            kind = d["type"]
            if kind == "conv":
                layers.append(Conv(d["filters"], tuple(d["kernel"]), d.get("activation", "relu")))
            elif kind == "maxpool":
                layers.append(MaxPool())
            elif kind == "flatten":
                layers.append(Flatten())
            elif kind == "dense":
                layers.append(Dense(d["units"], d.get("activation", "none")))
            else:
                raise ValueError(f"unknown layer type {kind!r}")
        return cls(tuple(data["input_shape"]), tuple(layers))


def infer_shapes(spec: ModelSpec) -> list[Shape]:
    """Output shape (without batch dimension) of every layer, in order."""
    h, w, c = spec.input_shape
    if min(h, w, c) < 1:
        raise ShapeError(f"invalid input shape {spec.input_shape}")
    shape: Shape = (h, w, c)
    shapes: list[Shape] = []
    for i, layer in enumerate(spec.layers):
        if isinstance(layer, Conv):
            if len(shape) != 3:
                raise ShapeError(f"layer {i}: convolution needs a spatial input, got {shape}")
            shape = (shape[0], shape[1], layer.filters)
        elif isinstance(layer, MaxPool):
            if len(shape) != 3:
                raise ShapeError(f"layer {i}: pooling needs a spatial input, got {shape}")
            if shape[0] < 2 or shape[1] < 2:
                raise ShapeError(f"layer {i}: cannot pool spatial dims {shape[:2]}")
            shape = (shape[0] // 2, shape[1] // 2, shape[2])
        elif isinstance(layer, Flatten):
            if len(shape) != 3:
                raise ShapeError(f"layer {i}: flatten needs a spatial input, got {shape}")
            shape = (shape[0] * shape[1] * shape[2],)
        elif isinstance(layer, Dense):
            if len(shape) != 1:
                raise ShapeError(f"layer {i}: dense needs a flat input, got {shape}")
            shape = (layer.units,)
        else:
            raise ShapeError(f"layer {i}: unknown layer {layer!r}")
        shapes.append(shape)
    if not spec.layers or not isinstance(spec.layers[-1], Dense) or spec.layers[-1].units != 1:
        raise ShapeError("final layer must be Dense(1)")
    return shapes


def _param_shapes(spec: ModelSpec) -> list[dict[str, Shape] | None]:
    shapes = infer_shapes(spec)
    prev: Shape = spec.input_shape
    out: list[dict[str, Shape] | None] = []
    for layer, shape in zip(spec.layers, shapes):
        if isinstance(layer, Conv):
            kh, kw = layer.kernel
            out.append({"weight": (kh, kw, prev[-1], layer.filters), "bias": (layer.filters,)})
        elif isinstance(layer, Dense):
            out.append({"weight": (prev[0], layer.units), "bias": (layer.units,)})
        else:
            out.append(None)
        prev = shape
    return out


def count_params(spec: ModelSpec) -> tuple[list[int], int]:
    """Per-layer trainable scalar counts and their total."""
    per_layer = [
        0 if p is None else sum(int(np.prod(s)) for s in p.values()) for p in _param_shapes(spec)
    ]
    return per_layer, sum(per_layer)


LAYER_NAMES = {Conv: "conv", MaxPool: "max_pooling", Flatten: "flatten", Dense: "dense"}


def summary(spec: ModelSpec) -> list[tuple[str, str, Shape, int]]:
    """(name, type, output shape, params) rows in the style of a Keras summary."""
    shapes = infer_shapes(spec)
    counts, _ = count_params(spec)
    seen: dict[str, int] = {}
    rows = []
    for layer, shape, n in zip(spec.layers, shapes, counts):
        base = LAYER_NAMES[type(layer)]
        seen[base] = seen.get(base, 0) + 1
        rows.append((f"{base}_{seen[base]}", type(layer).__name__, shape, n))
    return rows


Params = list  # list of {"weight": ndarray, "bias": ndarray} or None, one per layer


def init_params(spec: ModelSpec, rng: np.random.Generator) -> Params:
    """Uniform He-style init, bound sqrt(6 / fan_in); biases start at zero."""
    params: Params = []
    for p in _param_shapes(spec):
        if p is None:
            params.append(None)
            continue
        wshape = p["weight"]
        fan_in = int(np.prod(wshape[:-1]))
        bound = np.sqrt(6.0 / fan_in)
        params.append({
            "weight": rng.uniform(-bound, bound, size=wshape),
            "bias": np.zeros(p["bias"]),
        })
    return params


def zeros_like_params(params: Params) -> Params:
    return [None if p is None else {k: np.zeros_like(v) for k, v in p.items()} for p in params]


def flatten_params(params: Params) -> np.ndarray:
    parts = [p[k].ravel() for p in params if p is not None for k in ("weight", "bias")]
    return np.concatenate(parts) if parts else np.zeros(0)


def unflatten_params(spec: ModelSpec, flat: np.ndarray) -> Params:
    flat = np.asarray(flat, dtype=np.float64)
    _, total = count_params(spec)
    if flat.size != total:
        raise ShapeError(f"parameter vector has {flat.size} values, spec needs {total}")
    params: Params = []
    offset = 0
    for p in _param_shapes(spec):
        if p is None:
            params.append(None)
            continue
        entry = {}
        for k in ("weight", "bias"):
            n = int(np.prod(p[k]))
            entry[k] = flat[offset : offset + n].reshape(p[k]).copy()
            offset += n
        params.append(entry)
    if offset != flat.size:
        raise ShapeError(f"parameter vector has {flat.size} values, spec needs {offset}")
    return params


def param_dtype(params: Params) -> np.dtype:
    """Compute dtype of a parameter set (float64 unless the caller cast it)."""
    for p in params:
        if p is not None:
            return p["weight"].dtype
    return np.dtype(np.float64)


def cast_params(params: Params, dtype) -> Params:
    return [None if p is None else {k: v.astype(dtype) for k, v in p.items()} for p in params]


def forward(spec: ModelSpec, params: Params, batch: np.ndarray):
    """Scores of shape (N, 1) and the cache needed by ``backward``.

    The computation runs in the dtype of ``params``.
    """
    x = np.asarray(batch, dtype=param_dtype(params))
    if x.ndim != 4 or x.shape[1:] != spec.input_shape:
        raise ShapeError(f"batch shape {x.shape} does not match input {spec.input_shape}")
    cache = []
    for layer, p in zip(spec.layers, params):
        if isinstance(layer, Conv):
            z, cols = F.conv2d_forward(x, p["weight"], p["bias"])
            cache.append((x.shape, cols, z))
            x = F.activate(z, layer.activation)
        elif isinstance(layer, MaxPool):
            out, arg = F.maxpool2x2_forward(x)
            cache.append((x.shape, arg))
            x = out
        elif isinstance(layer, Flatten):
            cache.append(x.shape)
            x = x.reshape(x.shape[0], -1)
        else:
            z = x @ p["weight"] + p["bias"]
            cache.append((x, z))
            x = F.activate(z, layer.activation)
    return x, cache


def predict(spec: ModelSpec, params: Params, batch: np.ndarray, batch_size: int = 64) -> np.ndarray:
    """Scores in chunks, without keeping caches."""
    out = [forward(spec, params, batch[i : i + batch_size])[0] for i in range(0, len(batch), batch_size)]
    return np.concatenate(out) if out else np.zeros((0, 1))


def backward(spec: ModelSpec, params: Params, cache: list, dscores: np.ndarray) -> Params:
    """Parameter gradients given the gradient of the objective w.r.t. the scores."""
    grads: Params = [None] * len(spec.layers)
    d = np.asarray(dscores, dtype=param_dtype(params))
    for i in range(len(spec.layers) - 1, -1, -1):
        layer, p, c = spec.layers[i], params[i], cache[i]
        need_dx = i > 0
        if isinstance(layer, Conv):
            x_shape, cols, z = c
            dz = F.activation_grad(z, d, layer.activation)
            d, dw, db = F.conv2d_backward(dz, cols, x_shape, p["weight"], need_dx)
            grads[i] = {"weight": dw, "bias": db}
        elif isinstance(layer, MaxPool):
            x_shape, arg = c
            d = F.maxpool2x2_backward(d, arg, x_shape)
        elif isinstance(layer, Flatten):
            d = d.reshape(c)
        else:
            x, z = c
            dz = F.activation_grad(z, d, layer.activation)
            grads[i] = {"weight": x.T @ dz, "bias": dz.sum(axis=0)}
            d = dz @ p["weight"].T if need_dx else None
    return grads


# conv layers per width block (32, 64, 128, 256) for each depth level
BLOCK_TEMPLATES: dict[int, tuple[int, int, int, int]] = {
    6: (2, 2, 1, 1),
    8: (2, 2, 2, 2),
    10: (3, 3, 2, 2),
    12: (3, 3, 3, 3),
}
BLOCK_WIDTHS = (32, 64, 128, 256)


def sequential_cnn(
    n_layers: int,
    input_size: int | tuple[int, int],
    kernel: int | Sequence[int] = 3,
    activation: str = "relu",
    channels: int = 3,
) -> ModelSpec:
    """Conv blocks of widths 32/64/128/256, a max pool after each block, then Flatten and Dense(1).

    ``kernel`` is either one size for every conv or one size per conv layer.
    """
    try:
        blocks = BLOCK_TEMPLATES[int(n_layers)]
    except KeyError:
        raise ValueError(f"no layer template for {n_layers} conv layers; choose from {sorted(BLOCK_TEMPLATES)}") from None
    kernels = [int(kernel)] * sum(blocks) if np.isscalar(kernel) else [int(k) for k in kernel]
    if len(kernels) != sum(blocks):
        raise ValueError(f"expected {sum(blocks)} kernel sizes, got {len(kernels)}")
    h, w = (input_size, input_size) if np.isscalar(input_size) else input_size
    layers: list[LayerSpec] = []
    k = iter(kernels)
    for width, count in zip(BLOCK_WIDTHS, blocks):
        for _ in range(count):
            ks = next(k)
            layers.append(Conv(width, (ks, ks), activation))
        layers.append(MaxPool())
    layers += [Flatten(), Dense(1)]
    return ModelSpec((int(h), int(w), channels), tuple(layers))


def table3_spec() -> ModelSpec:
    """The published 10-layer network at 100x100 input, with the per-layer
    kernel sizes its parameter counts imply (2x2 for the first three convs)."""
    return sequential_cnn(10, 100, kernel=[2, 2, 2] + [3] * 7, activation="relu6")
