"""Feedforward network representation, inference, and block partitioning.

Models are loaded from a JSON schema supporting dense, conv2d, maxpool2d,
avgpool2d, activation, and flatten layers. All boundary states exchanged
with callers are flat float64 vectors in (channel, row, col) row-major
order; shaped (c, h, w) tensors exist only internally. Training and
autodiff are out of scope: this module only evaluates.
"""

from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import DataFormatError, ModelFormatError, ShapeError

__all__ = [
    "DenseLayer",
    "Conv2dLayer",
    "MaxPool2dLayer",
    "AvgPool2dLayer",
    "ActivationLayer",
    "FlattenLayer",
    "NetworkModel",
    "Block",
    "BlockPartition",
    "build_model",
    "load_model",
    "forward",
    "batch_boundary_states",
    "partition",
    "block_forward",
    "block_forward_batch",
    "load_mnist_idx",
    "pool_input_9x9",
]

ACTIVATION_NAMES = ("relu", "sigmoid", "tanh", "identity")

IDX_IMAGES_MAGIC = 0x00000803
IDX_LABELS_MAGIC = 0x00000801


@dataclass(frozen=True, eq=False)
class DenseLayer:
    """Affine map y = weight @ x + bias with weight (out x in)."""

    weight: np.ndarray
    bias: np.ndarray
    kind: str = field(default="dense", init=False)


@dataclass(frozen=True, eq=False)
class Conv2dLayer:
    """2-d cross-correlation with zero padding.

    weight has shape (out_channels, in_channels, kh, kw); stride and
    padding are (vertical, horizontal) pairs.
    """

    weight: np.ndarray
    bias: np.ndarray
    stride: tuple[int, int]
    padding: tuple[int, int]
    kind: str = field(default="conv2d", init=False)


@dataclass(frozen=True, eq=False)
class MaxPool2dLayer:
    window: tuple[int, int]
    stride: tuple[int, int]
    kind: str = field(default="maxpool2d", init=False)


@dataclass(frozen=True, eq=False)
class AvgPool2dLayer:
    window: tuple[int, int]
    stride: tuple[int, int]
    kind: str = field(default="avgpool2d", init=False)


@dataclass(frozen=True, eq=False)
class ActivationLayer:
    """Elementwise nonlinearity: one of relu, sigmoid, tanh, identity."""

    fn: str
    kind: str = field(default="activation", init=False)


@dataclass(frozen=True, eq=False)
class FlattenLayer:
    """Reshape (c, h, w) to a flat vector in (channel, row, col) order."""

    kind: str = field(default="flatten", init=False)


LayerSpec = (
    DenseLayer
    | Conv2dLayer
    | MaxPool2dLayer
    | AvgPool2dLayer
    | ActivationLayer
    | FlattenLayer
)


@dataclass(eq=False)
class NetworkModel:
    """A validated feedforward network.

    ``boundary_shapes`` lists the tensor shape at every layer boundary
    (len(layers) + 1 entries, the first being ``input_shape``); it is
    computed during construction, never inferred again.
    """

    name: str
    input_shape: tuple[int, ...]
    layers: tuple[LayerSpec, ...]
    boundary_shapes: tuple[tuple[int, ...], ...]

    @property
    def boundary_dims(self) -> list[int]:
        """Flattened dimension at each layer boundary."""
        return [int(np.prod(s)) for s in self.boundary_shapes]


@dataclass(frozen=True)
class Block:
    """A contiguous run of layers treated as one unit.

    ``layer_range`` is inclusive on both ends. ``layer_dims`` holds the
    flattened dimensions of every boundary the block touches, from its
    input boundary through its output boundary. ``category`` compares the
    endpoint dims: S2L when out > in, L2S when out < in, E2E when equal.
    """

    id: int
    layer_range: tuple[int, int]
    in_dim: int
    out_dim: int
    category: str
    layer_dims: tuple[int, ...]


@dataclass(frozen=True)
class BlockPartition:
    """An ordered tiling of a model's layers into blocks."""

    blocks: tuple[Block, ...]


def _layer_output_shape(
    layer: LayerSpec, shape: tuple[int, ...], index: int
) -> tuple[int, ...]:
    """Shape produced by ``layer`` on input ``shape``; raises on mismatch."""
    label = f"layer {index} ({layer.kind})"
    if isinstance(layer, DenseLayer):
        if len(shape) != 1:
            raise ModelFormatError(
                f"{label} needs a flat input but receives shape {shape}; "
                "insert a flatten layer first"
            )
        out_dim, in_dim = layer.weight.shape
        if shape[0] != in_dim:
            raise ModelFormatError(
                f"{label} expects input dim {in_dim} but receives {shape[0]}"
            )
        return (out_dim,)
    if isinstance(layer, Conv2dLayer):
        if len(shape) != 3:
            raise ModelFormatError(
                f"{label} needs a (c, h, w) input but receives shape {shape}"
            )
        oc, ic, kh, kw = layer.weight.shape
        c, h, w = shape
        if c != ic:
            raise ModelFormatError(
                f"{label} expects {ic} input channels but receives {c}"
            )
        ph, pw = layer.padding
        sh, sw = layer.stride
        oh = (h + 2 * ph - kh) // sh + 1
        ow = (w + 2 * pw - kw) // sw + 1
        if oh < 1 or ow < 1:
            raise ModelFormatError(
                f"{label} kernel {kh}x{kw} does not fit input {h}x{w} "
                f"with padding {layer.padding}"
            )
        return (oc, oh, ow)
    if isinstance(layer, (MaxPool2dLayer, AvgPool2dLayer)):
        if len(shape) != 3:
            raise ModelFormatError(
                f"{label} needs a (c, h, w) input but receives shape {shape}"
            )
        c, h, w = shape
        wh, ww = layer.window
        sh, sw = layer.stride
        oh = (h - wh) // sh + 1
        ow = (w - ww) // sw + 1
        if oh < 1 or ow < 1:
            raise ModelFormatError(
                f"{label} window {wh}x{ww} does not fit input {h}x{w}"
            )
        return (c, oh, ow)
    if isinstance(layer, ActivationLayer):
        return shape
    if isinstance(layer, FlattenLayer):
        return (int(np.prod(shape)),)
    raise ModelFormatError(f"{label}: unsupported layer type")


def build_model(
    name: str, input_shape: tuple[int, ...], layers: list[LayerSpec]
) -> NetworkModel:
    """Assemble a model and validate its whole shape chain.

    Raises ModelFormatError naming the offending layer when any layer
    cannot consume its predecessor's output.
    """
    input_shape = tuple(int(s) for s in input_shape)
    if len(input_shape) not in (1, 3) or any(s < 1 for s in input_shape):
        raise ModelFormatError(
            f"input_shape must be [n] or [c, h, w] with positive entries, "
            f"got {list(input_shape)}"
        )
    shapes = [input_shape]
    for i, layer in enumerate(layers):
        shapes.append(_layer_output_shape(layer, shapes[-1], i))
    return NetworkModel(
        name=name,
        input_shape=input_shape,
        layers=tuple(layers),
        boundary_shapes=tuple(shapes),
    )


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise ModelFormatError(message)


def _parse_array(obj, label: str) -> np.ndarray:
    arr = np.asarray(obj, dtype=np.float64)
    if not np.isfinite(arr).all():
        raise ModelFormatError(f"{label} contains non-finite values")
    return arr


def _parse_pair(obj, label: str) -> tuple[int, int]:
    _require(
        isinstance(obj, (list, tuple)) and len(obj) == 2,
        f"{label} must be a pair of integers",
    )
    a, b = int(obj[0]), int(obj[1])
    _require(a >= 1 and b >= 1, f"{label} entries must be >= 1")
    return (a, b)


def _parse_layer(obj: dict, index: int) -> LayerSpec:
    label = f"layer {index}"
    _require(isinstance(obj, dict), f"{label} must be an object")
    kind = obj.get("kind")
    if kind == "dense":
        for key in ("out", "in", "weight", "bias"):
            _require(key in obj, f"{label} (dense) is missing field '{key}'")
        out_dim, in_dim = int(obj["out"]), int(obj["in"])
        weight = _parse_array(obj["weight"], f"{label} (dense) weight")
        bias = _parse_array(obj["bias"], f"{label} (dense) bias")
        _require(
            weight.ndim == 2 and weight.shape == (out_dim, in_dim),
            f"{label} (dense) weight has shape "
            f"{weight.shape if weight.ndim == 2 else list(np.shape(obj['weight']))}, "
            f"declared out x in is {out_dim}x{in_dim}",
        )
        _require(
            bias.shape == (out_dim,),
            f"{label} (dense) bias has length {bias.size}, expected {out_dim}",
        )
        return DenseLayer(weight=weight, bias=bias)
    if kind == "conv2d":
        for key in ("out_channels", "in_channels", "kernel", "stride",
                    "padding", "weight", "bias"):
            _require(key in obj, f"{label} (conv2d) is missing field '{key}'")
        oc, ic = int(obj["out_channels"]), int(obj["in_channels"])
        kh, kw = _parse_pair(obj["kernel"], f"{label} (conv2d) kernel")
        weight = _parse_array(obj["weight"], f"{label} (conv2d) weight")
        bias = _parse_array(obj["bias"], f"{label} (conv2d) bias")
        _require(
            weight.shape == (oc, ic, kh, kw),
            f"{label} (conv2d) weight has shape {weight.shape}, declared "
            f"(out_channels, in_channels, kh, kw) is ({oc}, {ic}, {kh}, {kw})",
        )
        _require(
            bias.shape == (oc,),
            f"{label} (conv2d) bias has length {bias.size}, expected {oc}",
        )
        stride = _parse_pair(obj["stride"], f"{label} (conv2d) stride")
        padding = obj["padding"]
        _require(
            isinstance(padding, (list, tuple)) and len(padding) == 2
            and all(int(p) >= 0 for p in padding),
            f"{label} (conv2d) padding must be a pair of non-negative ints",
        )
        return Conv2dLayer(
            weight=weight,
            bias=bias,
            stride=stride,
            padding=(int(padding[0]), int(padding[1])),
        )
    if kind in ("maxpool2d", "avgpool2d"):
        for key in ("window", "stride"):
            _require(key in obj, f"{label} ({kind}) is missing field '{key}'")
        window = _parse_pair(obj["window"], f"{label} ({kind}) window")
        stride = _parse_pair(obj["stride"], f"{label} ({kind}) stride")
        cls = MaxPool2dLayer if kind == "maxpool2d" else AvgPool2dLayer
        return cls(window=window, stride=stride)
    if kind == "activation":
        _require("fn" in obj, f"{label} (activation) is missing field 'fn'")
        fn = obj["fn"]
        _require(
            fn in ACTIVATION_NAMES,
            f"{label} (activation) has unknown fn '{fn}'; "
            f"expected one of {list(ACTIVATION_NAMES)}",
        )
        return ActivationLayer(fn=fn)
    if kind == "flatten":
        return FlattenLayer()
    raise ModelFormatError(f"{label} has unknown kind '{kind}'")


def load_model(path) -> NetworkModel:
    """Load and validate a model JSON file.

    Parse errors keep json's line/column context; structural errors name
    the offending layer and field.
    """
    try:
        with open(path, "r", encoding="utf-8") as fh:
            raw = json.load(fh)
    except json.JSONDecodeError as exc:
        raise ModelFormatError(f"invalid JSON in {path}: {exc}") from exc
    _require(isinstance(raw, dict), "model file must contain a JSON object")
    for key in ("name", "input_shape", "layers"):
        _require(key in raw, f"model is missing top-level field '{key}'")
    _require(
        isinstance(raw["layers"], list) and raw["layers"],
        "model field 'layers' must be a non-empty list",
    )
    layers = [_parse_layer(obj, i) for i, obj in enumerate(raw["layers"])]
    return build_model(str(raw["name"]), tuple(raw["input_shape"]), layers)


def _relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # Split by sign so exp never overflows.
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


_ACTIVATION_FNS = {
    "relu": _relu,
    "sigmoid": _sigmoid,
    "tanh": np.tanh,
    "identity": lambda x: x,
}


def _apply_conv2d(layer: Conv2dLayer, x: np.ndarray) -> np.ndarray:
    """Cross-correlate a batch (n, c, h, w) with the layer kernel."""
    ph, pw = layer.padding
    if ph or pw:
        x = np.pad(x, ((0, 0), (0, 0), (ph, ph), (pw, pw)))
    oc, ic, kh, kw = layer.weight.shape
    sh, sw = layer.stride
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::sh, ::sw]
    n, _, oh, ow = win.shape[:4]
    # im2col: one GEMM per batch instead of nested loops.
    cols = np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5))
    cols = cols.reshape(n * oh * ow, ic * kh * kw)
    out = cols @ layer.weight.reshape(oc, -1).T + layer.bias
    return out.reshape(n, oh, ow, oc).transpose(0, 3, 1, 2)


def _apply_pool(
    layer: MaxPool2dLayer | AvgPool2dLayer, x: np.ndarray
) -> np.ndarray:
    wh, ww = layer.window
    sh, sw = layer.stride
    win = sliding_window_view(x, (wh, ww), axis=(2, 3))[:, :, ::sh, ::sw]
    if isinstance(layer, MaxPool2dLayer):
        return win.max(axis=(-2, -1))
    return win.mean(axis=(-2, -1))


def _apply_layer(layer: LayerSpec, x: np.ndarray) -> np.ndarray:
    """Apply one layer to a batch whose shape matches the layer's input."""
    if isinstance(layer, DenseLayer):
        return x @ layer.weight.T + layer.bias
    if isinstance(layer, Conv2dLayer):
        return _apply_conv2d(layer, x)
    if isinstance(layer, (MaxPool2dLayer, AvgPool2dLayer)):
        return _apply_pool(layer, x)
    if isinstance(layer, ActivationLayer):
        return _ACTIVATION_FNS[layer.fn](x)
    if isinstance(layer, FlattenLayer):
        return x.reshape(x.shape[0], -1)
    raise ShapeError("unsupported layer type")


def _run_layers(
    model: NetworkModel, first: int, last: int, xs: np.ndarray
) -> np.ndarray:
    """Run layers first..last (inclusive) on a flat batch (n, dim)."""
    shape = model.boundary_shapes[first]
    cur = xs.reshape(xs.shape[0], *shape)
    for layer in model.layers[first : last + 1]:
        cur = _apply_layer(layer, cur)
    return cur.reshape(xs.shape[0], -1)


def forward(model: NetworkModel, x) -> tuple[np.ndarray, list[np.ndarray]]:
    """Evaluate the network on one flat input vector.

    Returns the flat output and the trace: one flat state per layer
    boundary, trace[0] being the input itself.
    """
    from .linalg import as_vector

    x = as_vector(x)
    expected = int(np.prod(model.input_shape))
    if x.size != expected:
        raise ShapeError(
            f"input has length {x.size}, model expects {expected}"
        )
    cur = x.reshape(1, *model.input_shape)
    trace = [x.copy()]
    for layer in model.layers:
        cur = _apply_layer(layer, cur)
        trace.append(cur.reshape(-1).copy())
    return trace[-1], trace


def batch_boundary_states(
    model: NetworkModel, xs: np.ndarray
) -> list[np.ndarray]:
    """Flat states (n, dim) at every layer boundary for a batch of inputs."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != int(np.prod(model.input_shape)):
        raise ShapeError(
            f"expected batch shape (n, {int(np.prod(model.input_shape))}), "
            f"got {xs.shape}"
        )
    cur = xs.reshape(xs.shape[0], *model.input_shape)
    states = [xs.copy()]
    for layer in model.layers:
        cur = _apply_layer(layer, cur)
        states.append(cur.reshape(cur.shape[0], -1).copy())
    return states


def partition(model: NetworkModel, ranges) -> BlockPartition:
    """Tile the model's layers into contiguous inclusive blocks.

    ``ranges`` is a sequence of (first, last) pairs that must cover every
    layer exactly once, in order, with no gaps or overlaps.
    """
    n_layers = len(model.layers)
    if not ranges:
        raise ShapeError("partition needs at least one block range")
    cleaned = []
    for k, pair in enumerate(ranges):
        if len(pair) != 2:
            raise ShapeError(f"block {k}: range must be a (first, last) pair")
        first, last = int(pair[0]), int(pair[1])
        if first > last:
            raise ShapeError(f"block {k}: empty range ({first}, {last})")
        cleaned.append((first, last))
    if cleaned[0][0] != 0:
        raise ShapeError(
            f"partition must start at layer 0, starts at {cleaned[0][0]}"
        )
    for k in range(1, len(cleaned)):
        prev_last = cleaned[k - 1][1]
        if cleaned[k][0] != prev_last + 1:
            raise ShapeError(
                f"block {k} starts at layer {cleaned[k][0]} but block "
                f"{k - 1} ends at layer {prev_last}: ranges must tile "
                "contiguously"
            )
    if cleaned[-1][1] != n_layers - 1:
        raise ShapeError(
            f"partition ends at layer {cleaned[-1][1]} but the model has "
            f"layers 0..{n_layers - 1}"
        )
    dims = model.boundary_dims
    blocks = []
    for k, (first, last) in enumerate(cleaned):
        in_dim = dims[first]
        out_dim = dims[last + 1]
        if out_dim > in_dim:
            category = "S2L"
        elif out_dim < in_dim:
            category = "L2S"
        else:
            category = "E2E"
        blocks.append(
            Block(
                id=k,
                layer_range=(first, last),
                in_dim=in_dim,
                out_dim=out_dim,
                category=category,
                layer_dims=tuple(dims[first : last + 2]),
            )
        )
    return BlockPartition(blocks=tuple(blocks))


def block_forward(model: NetworkModel, block: Block, x) -> np.ndarray:
    """Run one block on a flat input of length block.in_dim."""
    from .linalg import as_vector

    x = as_vector(x)
    if x.size != block.in_dim:
        raise ShapeError(
            f"block {block.id} expects input length {block.in_dim}, "
            f"got {x.size}"
        )
    first, last = block.layer_range
    return _run_layers(model, first, last, x.reshape(1, -1))[0]


def block_forward_batch(
    model: NetworkModel, block: Block, xs: np.ndarray
) -> np.ndarray:
    """Run one block on a batch (n, block.in_dim) of flat inputs."""
    xs = np.asarray(xs, dtype=np.float64)
    if xs.ndim != 2 or xs.shape[1] != block.in_dim:
        raise ShapeError(
            f"block {block.id} expects batch shape (n, {block.in_dim}), "
            f"got {xs.shape}"
        )
    first, last = block.layer_range
    return _run_layers(model, first, last, xs)


def _read_exact(fh, count: int, path, what: str) -> bytes:
    data = fh.read(count)
    if len(data) != count:
        raise DataFormatError(
            f"{path}: truncated file while reading {what} "
            f"(wanted {count} bytes, got {len(data)})"
        )
    return data


def _open_maybe_gzip(path):
    with open(path, "rb") as probe:
        magic = probe.read(2)
    if magic == b"\x1f\x8b":
        return gzip.open(path, "rb")
    return open(path, "rb")


def load_mnist_idx(
    images_path, labels_path, limit: int | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Read big-endian IDX image/label files.

    Returns (images, labels) with images (n, rows*cols) float64 scaled to
    [0, 1] by dividing pixel bytes by 255, flattened row-major, and labels
    (n,) int64. Gzip-compressed files are detected by magic bytes.
    """
    with _open_maybe_gzip(images_path) as fh:
        header = _read_exact(fh, 16, images_path, "image header")
        magic, count, rows, cols = struct.unpack(">IIII", header)
        if magic != IDX_IMAGES_MAGIC:
            raise DataFormatError(
                f"{images_path}: bad magic 0x{magic:08x}, expected "
                f"0x{IDX_IMAGES_MAGIC:08x} for an IDX image file"
            )
        n = count if limit is None else min(limit, count)
        raw = _read_exact(fh, n * rows * cols, images_path, f"{n} images")
    images = np.frombuffer(raw, dtype=np.uint8).astype(np.float64) / 255.0
    images = images.reshape(n, rows * cols)
    with _open_maybe_gzip(labels_path) as fh:
        header = _read_exact(fh, 8, labels_path, "label header")
        magic, lcount = struct.unpack(">II", header)
        if magic != IDX_LABELS_MAGIC:
            raise DataFormatError(
                f"{labels_path}: bad magic 0x{magic:08x}, expected "
                f"0x{IDX_LABELS_MAGIC:08x} for an IDX label file"
            )
        if lcount != count:
            raise DataFormatError(
                f"label count {lcount} does not match image count {count}"
            )
        raw = _read_exact(fh, n, labels_path, f"{n} labels")
    labels = np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    return images, labels


def pool_input_9x9(x) -> np.ndarray:
    """Reduce a flat 28x28 image to 9x9: center-crop to 27x27 (leading
    offset (28-27)//2), then 3x3 max pooling with stride 3."""
    from .linalg import as_vector

    x = as_vector(x)
    if x.size != 28 * 28:
        raise ShapeError(f"expected a 784-pixel image, got length {x.size}")
    img = x.reshape(28, 28)
    off = (28 - 27) // 2
    crop = img[off : off + 27, off : off + 27]
    return crop.reshape(9, 3, 9, 3).max(axis=(1, 3)).reshape(-1)
