"""Forward-only encoder-decoder segmentation engine.

The network is a VGG-16-shaped encoder (13 conv layers, channels
64/128/256/512/512, max-pool after each stage) mirrored by a decoder that
max-unpools with the paired encoder's argmax indices and convolves (13
layers; the last conv of a stage steps down to the next stage's width),
closed by a 3x3 classification conv and a per-pixel softmax over 4
classes.  Convolutions are 3x3, stride 1, zero-padded, bias-free.

Tensors are float64 numpy arrays in NCHW layout; weights are persisted
as float32 in a flat binary container (see save_weights).
"""

from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

from .errors import MissingClassError, ShapeMismatchError, WeightsFormatError
from .imgcore import NUM_CLASSES, validate_labels

INPUT_SIZE = 224
ENCODER_CHANNELS = (64, 128, 256, 512, 512)
ENCODER_CONVS = (2, 2, 3, 3, 3)


# ---------------------------------------------------------------------------
# layer and network specs

@dataclass(frozen=True)
class Conv3x3:
    in_channels: int
    out_channels: int


@dataclass(frozen=True)
class BatchNorm:
    channels: int
    eps: float = 1e-5


@dataclass(frozen=True)
class Relu:
    pass


@dataclass(frozen=True)
class MaxPool:
    pool_id: int


@dataclass(frozen=True)
class MaxUnpool:
    pool_id: int


@dataclass(frozen=True)
class Softmax:
    classes: int


@dataclass(frozen=True)
class NetworkSpec:
    layers: tuple[tuple[str, object], ...]
    in_channels: int = 3
    input_size: int = INPUT_SIZE

    def conv_layers(self) -> list[tuple[str, Conv3x3]]:
        return [(n, l) for n, l in self.layers if isinstance(l, Conv3x3)]

    def expected_weights(self) -> dict[str, tuple[int, ...]]:
        """Tensor name -> shape for every trainable / running parameter."""
        shapes: dict[str, tuple[int, ...]] = {}
        for name, layer in self.layers:
            if isinstance(layer, Conv3x3):
                shapes[f"{name}.weight"] = (layer.out_channels, layer.in_channels, 3, 3)
            elif isinstance(layer, BatchNorm):
                for part in ("gamma", "beta", "mean", "var"):
                    shapes[f"{name}.{part}"] = (layer.channels,)
        return shapes


def build_sipsegnet() -> NetworkSpec:
    """The fixed 224x224x3 -> 224x224x4 segmentation network."""
    layers: list[tuple[str, object]] = []
    ch = 3
    for stage, (width, n_convs) in enumerate(zip(ENCODER_CHANNELS, ENCODER_CONVS), start=1):
        for i in range(1, n_convs + 1):
            layers.append((f"enc{stage}.conv{i}", Conv3x3(ch, width)))
            layers.append((f"enc{stage}.bn{i}", BatchNorm(width)))
            layers.append((f"enc{stage}.relu{i}", Relu()))
            ch = width
        layers.append((f"enc{stage}.pool", MaxPool(pool_id=stage)))

    # decoder stage widths mirror the encoder; the last conv of each stage
    # steps down to the width expected by the next (shallower) unpool
    for stage in range(5, 0, -1):
        width = ENCODER_CHANNELS[stage - 1]
        next_width = ENCODER_CHANNELS[stage - 2] if stage > 1 else ENCODER_CHANNELS[0]
        n_convs = ENCODER_CONVS[stage - 1]
        layers.append((f"dec{stage}.unpool", MaxUnpool(pool_id=stage)))
        for i in range(1, n_convs + 1):
            out_ch = next_width if i == n_convs and stage > 1 else width
            layers.append((f"dec{stage}.conv{i}", Conv3x3(ch, out_ch)))
            layers.append((f"dec{stage}.bn{i}", BatchNorm(out_ch)))
            layers.append((f"dec{stage}.relu{i}", Relu()))
            ch = out_ch

    layers.append(("head.conv", Conv3x3(ch, NUM_CLASSES)))
    layers.append(("head.softmax", Softmax(NUM_CLASSES)))
    return NetworkSpec(layers=tuple(layers))


def init_random_weights(net: NetworkSpec, seed: int) -> dict[str, np.ndarray]:
    """He-scaled random conv weights, identity batch-norm statistics."""
    rng = np.random.default_rng(seed)
    weights: dict[str, np.ndarray] = {}
    for name, shape in net.expected_weights().items():
        if name.endswith(".weight"):
            fan_in = shape[1] * shape[2] * shape[3]
            weights[name] = rng.normal(0.0, np.sqrt(2.0 / fan_in), shape).astype(np.float32)
        elif name.endswith(".gamma"):
            weights[name] = np.ones(shape, dtype=np.float32)
        elif name.endswith(".var"):
            weights[name] = np.ones(shape, dtype=np.float32)
        else:
            weights[name] = np.zeros(shape, dtype=np.float32)
    return weights


def zero_weights(net: NetworkSpec) -> dict[str, np.ndarray]:
    """All-zero convs with identity batch norms (uniform softmax output)."""
    w = init_random_weights(net, 0)
    for name in w:
        if name.endswith(".weight"):
            w[name] = np.zeros_like(w[name])
    return w


# ---------------------------------------------------------------------------
# primitive ops

def conv3x3_apply(x: np.ndarray, weight: np.ndarray, block_rows: int = 32) -> np.ndarray:
    """3x3, stride-1, zero-padded convolution via blocked im2col matmul."""
    b, c, h, w = x.shape
    out_ch = weight.shape[0]
    if weight.shape[1] != c:
        raise ShapeMismatchError(f"conv expects {weight.shape[1]} input channels, got {c}")
    wmat = weight.reshape(out_ch, c * 9)
    out = np.empty((b, out_ch, h, w))
    for bi in range(b):
        xp = np.pad(x[bi], ((0, 0), (1, 1), (1, 1)))
        for r0 in range(0, h, block_rows):
            r1 = min(r0 + block_rows, h)
            rows = r1 - r0
            cols = np.empty((c * 9, rows * w))
            k = 0
            for dy in range(3):
                for dx in range(3):
                    cols[k::9] = xp[:, r0 + dy : r1 + dy, dx : dx + w].reshape(c, -1)
                    k += 1
            out[bi, :, r0:r1, :] = (wmat @ cols).reshape(out_ch, rows, w)
    return out


def batchnorm_apply(x: np.ndarray, gamma, beta, mean, var, eps: float) -> np.ndarray:
    g = np.asarray(gamma, dtype=np.float64)[None, :, None, None]
    b = np.asarray(beta, dtype=np.float64)[None, :, None, None]
    m = np.asarray(mean, dtype=np.float64)[None, :, None, None]
    v = np.asarray(var, dtype=np.float64)[None, :, None, None]
    return (x - m) / np.sqrt(v + eps) * g + b


def maxpool2_with_indices(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2, stride-2 max pooling returning per-window argmax indices.

    Indices are the flat position (0..3, row-major) of the first maximal
    cell inside each window.
    """
    b, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatchError(f"max pooling needs even spatial dims, got {h}x{w}")
    windows = x.reshape(b, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, h // 2, w // 2, 4)
    idx = windows.argmax(axis=-1).astype(np.uint8)
    vals = np.take_along_axis(windows, idx[..., None].astype(np.int64), axis=-1)[..., 0]
    return vals, idx


def max_unpool2(x: np.ndarray, idx: np.ndarray, out_hw: tuple[int, int]) -> np.ndarray:
    """Scatter pooled values back to their argmax positions, zero elsewhere."""
    b, c, h, w = x.shape
    oh, ow = out_hw
    if idx.shape != x.shape:
        raise ShapeMismatchError(f"indices shape {idx.shape} does not match input {x.shape}")
    if oh != 2 * h or ow != 2 * w:
        raise ShapeMismatchError(f"output {oh}x{ow} must be 2x the pooled {h}x{w}")
    if idx.max(initial=0) > 3:
        raise ValueError("pool index outside its 2x2 window")
    windows = np.zeros((b, c, h, w, 4))
    np.put_along_axis(windows, idx[..., None].astype(np.int64), x[..., None], axis=-1)
    return windows.reshape(b, c, h, w, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(b, c, oh, ow)


def softmax_channels(x: np.ndarray) -> np.ndarray:
    e = np.exp(x - x.max(axis=1, keepdims=True))
    return e / e.sum(axis=1, keepdims=True)


# ---------------------------------------------------------------------------
# forward pass

def forward(
    net: NetworkSpec, weights: dict[str, np.ndarray], x: np.ndarray
) -> tuple[np.ndarray, list[tuple[str, tuple[int, ...]]]]:
    """Run the network; returns (probabilities, per-layer output shapes).

    Accepts (B, 1, H, W) grayscale input, replicated to the 3-channel
    input layer.  Missing/extra weight tensors or shape mismatches raise
    WeightsFormatError.
    """
    x = np.asarray(x, dtype=np.float64)
    if x.ndim != 4:
        raise ShapeMismatchError("input must be (B, C, H, W)")
    if x.shape[1] == 1:
        x = np.repeat(x, net.in_channels, axis=1)
    if x.shape[1] != net.in_channels or x.shape[2] != net.input_size or x.shape[3] != net.input_size:
        raise ShapeMismatchError(
            f"input must be (B, {net.in_channels}, {net.input_size}, {net.input_size}), got {x.shape}"
        )
    expected = net.expected_weights()
    for name, shape in expected.items():
        if name not in weights:
            raise WeightsFormatError(f"missing weight tensor {name!r}")
        if tuple(weights[name].shape) != shape:
            raise WeightsFormatError(
                f"tensor {name!r} has shape {tuple(weights[name].shape)}, expected {shape}"
            )

    shapes: list[tuple[str, tuple[int, ...]]] = []
    pooled: dict[int, tuple[np.ndarray, tuple[int, int]]] = {}
    for name, layer in net.layers:
        if isinstance(layer, Conv3x3):
            x = conv3x3_apply(x, np.asarray(weights[f"{name}.weight"], dtype=np.float64))
        elif isinstance(layer, BatchNorm):
            x = batchnorm_apply(
                x,
                weights[f"{name}.gamma"],
                weights[f"{name}.beta"],
                weights[f"{name}.mean"],
                weights[f"{name}.var"],
                layer.eps,
            )
        elif isinstance(layer, Relu):
            x = np.maximum(x, 0.0)
        elif isinstance(layer, MaxPool):
            pre_hw = (x.shape[2], x.shape[3])
            x, idx = maxpool2_with_indices(x)
            pooled[layer.pool_id] = (idx, pre_hw)
        elif isinstance(layer, MaxUnpool):
            idx, pre_hw = pooled[layer.pool_id]
            x = max_unpool2(x, idx, pre_hw)
        elif isinstance(layer, Softmax):
            x = softmax_channels(x)
        else:  # pragma: no cover
            raise TypeError(f"unknown layer {layer!r}")
        shapes.append((name, tuple(x.shape)))
    return x, shapes


# ---------------------------------------------------------------------------
# class balancing and loss

@dataclass(frozen=True)
class ClassWeights:
    counts: np.ndarray  # int64 per-class pixel counts
    frequencies: np.ndarray  # counts / total
    weights: np.ndarray  # 1 / frequency, adjusted so w * f rounds to 1.0


def _exact_inverse(f: float) -> float:
    """1/f nudged by ulps until the float product f * w equals 1.0."""
    w = 1.0 / f
    for _ in range(4):
        p = w * f
        if p == 1.0:
            return w
        w = np.nextafter(w, np.inf if p < 1.0 else -np.inf)
    return w


def class_weights(label_maps: list[np.ndarray]) -> ClassWeights:
    """Inverse-frequency class weights from a corpus of label maps."""
    counts = np.zeros(NUM_CLASSES, dtype=np.int64)
    for lm in label_maps:
        lab = validate_labels(lm)
        counts += np.bincount(lab.ravel(), minlength=NUM_CLASSES)
    if (counts == 0).any():
        missing = [i for i in range(NUM_CLASSES) if counts[i] == 0]
        raise MissingClassError(f"classes {missing} have no pixels; weights undefined")
    total = counts.sum()
    freqs = counts / total
    weights = np.array([_exact_inverse(f) for f in freqs])
    return ClassWeights(counts=counts, frequencies=freqs, weights=weights)


def one_hot(labels: np.ndarray, classes: int = NUM_CLASSES) -> np.ndarray:
    """Label map (H, W) -> one-hot tensor (classes, H, W)."""
    lab = validate_labels(labels)
    out = np.zeros((classes,) + lab.shape)
    for k in range(classes):
        out[k][lab == k] = 1.0
    return out


def weighted_bce_loss(
    prob: np.ndarray, target: np.ndarray, weights: np.ndarray, eps: float = 1e-7
) -> float:
    """Per-pixel binary cross entropy summed over channels, weighted by the
    true class of each pixel, averaged over batch and spatial dims only."""
    p = np.asarray(prob, dtype=np.float64)
    t = np.asarray(target, dtype=np.float64)
    if p.shape != t.shape or p.ndim != 4:
        raise ShapeMismatchError(f"prob {p.shape} and target {t.shape} must match as (B, K, H, W)")
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (p.shape[1],):
        raise ShapeMismatchError(f"need one weight per class, got {w.shape}")
    pc = np.clip(p, eps, 1.0 - eps)
    per_pixel = (t * np.log(pc) + (1.0 - t) * np.log(1.0 - pc)).sum(axis=1)
    pixel_weight = (t * w[None, :, None, None]).sum(axis=1)
    b, _, h, ww = p.shape
    return float(-(pixel_weight * per_pixel).sum() / (b * h * ww))


def sgdm_step(
    w: np.ndarray, grad: np.ndarray, velocity: np.ndarray, lr: float, momentum: float
) -> tuple[np.ndarray, np.ndarray]:
    """One momentum step: u = -lr*grad + momentum*velocity; w' = w + u."""
    wv = np.asarray(w, dtype=np.float64)
    g = np.asarray(grad, dtype=np.float64)
    v = np.asarray(velocity, dtype=np.float64)
    if wv.shape != g.shape or wv.shape != v.shape:
        raise ShapeMismatchError("parameter, gradient and velocity lengths must match")
    if lr <= 0.0:
        raise ValueError("learning rate must be positive")
    if not 0.0 <= momentum < 1.0:
        raise ValueError("momentum must lie in [0, 1)")
    update = -lr * g + momentum * v
    return wv + update, update


# ---------------------------------------------------------------------------
# weights container: magic "SIPW", little-endian, float32 payloads

MAGIC = b"SIPW"
FORMAT_VERSION = 1


def save_weights(path: str, weights: dict[str, np.ndarray]) -> None:
    """Write tensors as: magic, u16 version, u32 count, then per tensor
    u16 name length + UTF-8 name, u8 rank, u32 dims, float32 LE data."""
    with open(path, "wb") as fh:
        fh.write(MAGIC)
        fh.write(struct.pack("<HI", FORMAT_VERSION, len(weights)))
        for name in sorted(weights):
            arr = np.ascontiguousarray(weights[name], dtype="<f4")
            encoded = name.encode("utf-8")
            fh.write(struct.pack("<H", len(encoded)))
            fh.write(encoded)
            fh.write(struct.pack("<B", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(arr.tobytes())


def load_weights(path: str, net: NetworkSpec | None = None) -> dict[str, np.ndarray]:
    """Read a weights container; optionally validate against a network spec."""
    with open(path, "rb") as fh:
        data = fh.read()

    def take(n: int, pos: int) -> tuple[bytes, int]:
        if pos + n > len(data):
            raise WeightsFormatError(f"{path}: truncated file at byte {pos}")
        return data[pos : pos + n], pos + n

    chunk, pos = take(4, 0)
    if chunk != MAGIC:
        raise WeightsFormatError(f"{path}: bad magic {chunk!r}")
    chunk, pos = take(6, pos)
    version, count = struct.unpack("<HI", chunk)
    if version != FORMAT_VERSION:
        raise WeightsFormatError(f"{path}: unsupported format version {version}")
    weights: dict[str, np.ndarray] = {}
    for _ in range(count):
        chunk, pos = take(2, pos)
        (name_len,) = struct.unpack("<H", chunk)
        chunk, pos = take(name_len, pos)
        name = chunk.decode("utf-8")
        chunk, pos = take(1, pos)
        rank = chunk[0]
        chunk, pos = take(4 * rank, pos)
        shape = struct.unpack(f"<{rank}I", chunk)
        n_items = int(np.prod(shape, dtype=np.int64)) if rank else 1
        chunk, pos = take(4 * n_items, pos)
        weights[name] = np.frombuffer(chunk, dtype="<f4").reshape(shape).copy()
    if pos != len(data):
        raise WeightsFormatError(f"{path}: {len(data) - pos} trailing bytes")
    if net is not None:
        expected = net.expected_weights()
        for name, shape in expected.items():
            if name not in weights:
                raise WeightsFormatError(f"{path}: missing tensor {name!r}")
            if tuple(weights[name].shape) != shape:
                raise WeightsFormatError(
                    f"{path}: tensor {name!r} has shape {tuple(weights[name].shape)}, expected {shape}"
                )
        extra = set(weights) - set(expected)
        if extra:
            raise WeightsFormatError(f"{path}: unexpected tensors {sorted(extra)}")
    return weights
