"""Network container, forward/backward passes, the two fixed
architectures, and the flat binary parameter container."""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from volumetrica.nn.layers import (
    AvgPool,
    ConvLayer,
    _im2col,
    activation_grad,
    avg_pool,
    avg_pool_backward,
    conv_backward,
    conv_forward_cached,
)
from volumetrica.nn.losses import bce_with_logits, bce_with_logits_grad, mse, mse_grad


@dataclass
class Network:
    """Ordered conv/pool layers plus the declared input shape
    (*spatial, channels)."""

    layers: list
    input_shape: tuple[int, ...]

    def __post_init__(self):
        shape = tuple(self.input_shape)
        channels = shape[-1]
        for i, layer in enumerate(self.layers):
            if isinstance(layer, ConvLayer):
                if layer.in_channels != channels:
                    raise ValueError(
                        f"layer {i} expects {layer.in_channels} channels, gets {channels}"
                    )
                channels = layer.out_channels
            elif isinstance(layer, AvgPool):
                continue
            else:
                raise TypeError(f"unsupported layer type {type(layer)!r}")

    @property
    def rank(self) -> int:
        return len(self.input_shape) - 1

    def output_shapes(self) -> list[tuple[int, ...]]:
        """Shape after each layer for the declared input shape."""
        shapes = []
        spatial = list(self.input_shape[:-1])
        channels = self.input_shape[-1]
        for layer in self.layers:
            if isinstance(layer, ConvLayer):
                channels = layer.out_channels
            else:
                for ax, p in enumerate(layer.pool):
                    if spatial[ax] % p != 0:
                        raise ValueError(f"pool {layer.pool} does not divide {tuple(spatial)}")
                    spatial[ax] //= p
            shapes.append(tuple(spatial) + (channels,))
        return shapes

    def output_spatial(self) -> tuple[int, ...]:
        return self.output_shapes()[-1][:-1]

    def param_count(self) -> int:
        return sum(l.param_count for l in self.layers if isinstance(l, ConvLayer))

    def parameters(self) -> list[np.ndarray]:
        params = []
        for layer in self.layers:
            if isinstance(layer, ConvLayer):
                params.extend([layer.weights, layer.bias])
        return params

    def final_activation(self) -> str:
        for layer in reversed(self.layers):
            if isinstance(layer, ConvLayer):
                return layer.activation
        return "none"


def predict(net: Network, x: np.ndarray) -> np.ndarray:
    """Pure forward pass; identical inputs give bit-identical outputs."""
    a = np.asarray(x, dtype=np.float64)
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            a, _, _ = conv_forward_cached(layer, a)
        else:
            a = avg_pool(a, layer.pool)
    return a


def _forward_cached(net: Network, x: np.ndarray, first_cols=None):
    a = np.asarray(x, dtype=np.float64)
    cache = []
    for i, layer in enumerate(net.layers):
        if isinstance(layer, ConvLayer):
            inp = a
            a, z, cols = conv_forward_cached(layer, a, first_cols if i == 0 else None)
            cache.append(("conv", layer, inp, z, cols, a))
        else:
            inp_shape = a.shape
            a = avg_pool(a, layer.pool)
            cache.append(("pool", layer, inp_shape))
    return a, cache


def input_cols(net: Network, x: np.ndarray):
    """Precompute the first layer's im2col matrix for repeated passes
    over the same input; returns None when there is nothing to reuse."""
    if not net.layers or not isinstance(net.layers[0], ConvLayer):
        return None
    layer = net.layers[0]
    if all(k == 1 for k in layer.kernel):
        return None
    return _im2col(np.asarray(x, dtype=np.float64), layer.kernel)


def backward(net: Network, x: np.ndarray, target: np.ndarray, loss_kind: str, first_cols=None):
    """Loss and exact gradients for every weight and bias.

    Returns (loss_value, grads) where grads maps one (dW, db) tuple per
    conv layer (None for pools), in layer order. For bce the final layer
    must be sigmoid-activated; the gradient is taken through the fused
    stable path.
    """
    target = np.asarray(target, dtype=np.float64)
    out, cache = _forward_cached(net, x, first_cols)
    if out.shape != target.shape:
        raise ValueError(f"output shape {out.shape} != target shape {target.shape}")

    if loss_kind == "bce":
        if net.final_activation() != "sigmoid":
            raise ValueError("bce requires a sigmoid final layer")
        kind, layer, inp, z, cols, a = cache[-1]
        loss_value = bce_with_logits(z, target)
        dz = bce_with_logits_grad(z, target)
        grads_rev = []
        dW, db, da = conv_backward(layer, inp, cols, dz, need_dx=len(cache) > 1)
        grads_rev.append((dW, db))
        remaining = cache[:-1]
    elif loss_kind == "mse":
        loss_value = mse(out, target)
        da = mse_grad(out, target)
        grads_rev = []
        remaining = cache
    else:
        raise ValueError(f"unknown loss kind {loss_kind!r}")

    for pos in range(len(remaining) - 1, -1, -1):
        entry = remaining[pos]
        if entry[0] == "conv":
            _, layer, inp, z, cols, a = entry
            if layer.activation == "none":
                dz = da
            else:
                dz = np.multiply(da, activation_grad(a, z, layer.activation), out=da)
            dW, db, da = conv_backward(layer, inp, cols, dz, need_dx=pos > 0)
            grads_rev.append((dW, db))
        else:
            _, layer, inp_shape = entry
            grads_rev.append(None)
            da = avg_pool_backward(layer.pool, inp_shape, da)

    return loss_value, list(reversed(grads_rev))


def gradient_list(grads) -> list[np.ndarray]:
    """Flatten per-layer (dW, db) tuples to match Network.parameters()."""
    flat = []
    for g in grads:
        if g is not None:
            flat.extend(g)
    return flat


def build_segmenter_2d(seed: int = 0) -> Network:
    """(1024,1024,1) -> Conv 32@3x3 relu -> AvgPool 2x2 -> Conv 1@1x1 sigmoid."""
    rng = np.random.default_rng(seed)
    return Network(
        layers=[
            ConvLayer.create(2, 3, 1, 32, "relu", rng),
            AvgPool((2, 2)),
            ConvLayer.create(2, 1, 32, 1, "sigmoid", rng),
        ],
        input_shape=(1024, 1024, 1),
    )


def build_segmenter_3d(seed: int = 0) -> Network:
    """(32,32,32,1) -> Conv 32@3x3x3 relu -> AvgPool 2x2x2 -> Conv 1@1x1x1 sigmoid."""
    rng = np.random.default_rng(seed)
    return Network(
        layers=[
            ConvLayer.create(3, 3, 1, 32, "relu", rng),
            AvgPool((2, 2, 2)),
            ConvLayer.create(3, 1, 32, 1, "sigmoid", rng),
        ],
        input_shape=(32, 32, 32, 1),
    )


_MAGIC = b"VNET"
_ACTIVATION_CODES = {"none": 0, "relu": 1, "sigmoid": 2}
_ACTIVATION_NAMES = {v: k for k, v in _ACTIVATION_CODES.items()}


def save_network(net: Network, path) -> None:
    """Flat little-endian container: magic, input shape, layer table,
    float64 parameters."""
    out = [_MAGIC, struct.pack("<I", 1)]
    out.append(struct.pack("<B", len(net.input_shape)))
    out.append(struct.pack(f"<{len(net.input_shape)}I", *net.input_shape))
    out.append(struct.pack("<I", len(net.layers)))
    for layer in net.layers:
        if isinstance(layer, ConvLayer):
            out.append(struct.pack("<BB", 1, layer.rank))
            out.append(struct.pack(f"<{layer.rank}I", *layer.kernel))
            out.append(struct.pack("<IIB", layer.in_channels, layer.out_channels,
                                   _ACTIVATION_CODES[layer.activation]))
            out.append(np.ascontiguousarray(layer.weights, dtype="<f8").tobytes())
            out.append(np.ascontiguousarray(layer.bias, dtype="<f8").tobytes())
        else:
            out.append(struct.pack("<BB", 2, layer.rank))
            out.append(struct.pack(f"<{layer.rank}I", *layer.pool))
    with open(path, "wb") as fh:
        fh.write(b"".join(out))


def load_network(path) -> Network:
    with open(path, "rb") as fh:
        data = fh.read()
    if data[:4] != _MAGIC:
        raise ValueError("not a network container (bad magic)")
    (version,) = struct.unpack_from("<I", data, 4)
    if version != 1:
        raise ValueError(f"unsupported network container version {version}")
    pos = 8
    (ndim,) = struct.unpack_from("<B", data, pos)
    pos += 1
    input_shape = struct.unpack_from(f"<{ndim}I", data, pos)
    pos += 4 * ndim
    (n_layers,) = struct.unpack_from("<I", data, pos)
    pos += 4
    layers = []
    for _ in range(n_layers):
        kind, rank = struct.unpack_from("<BB", data, pos)
        pos += 2
        extents = struct.unpack_from(f"<{rank}I", data, pos)
        pos += 4 * rank
        if kind == 1:
            in_ch, out_ch, act = struct.unpack_from("<IIB", data, pos)
            pos += 9
            n_w = math.prod(extents) * in_ch * out_ch
            weights = np.frombuffer(data, dtype="<f8", count=n_w, offset=pos).reshape(
                extents + (in_ch, out_ch)
            )
            pos += 8 * n_w
            bias = np.frombuffer(data, dtype="<f8", count=out_ch, offset=pos)
            pos += 8 * out_ch
            layers.append(ConvLayer(weights.copy(), bias.copy(), _ACTIVATION_NAMES[act]))
        elif kind == 2:
            layers.append(AvgPool(extents))
        else:
            raise ValueError(f"unknown layer kind {kind} in container")
    return Network(layers, tuple(input_shape))
