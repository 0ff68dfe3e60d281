"""Dense-tensor CNN core: the fixed network every experiment trains.

Images, weights and activations are plain numpy arrays (row-major). The
network stack is fixed: three 3x3 same-padding conv layers each followed by
ReLU and 2x2 max pooling, a flatten, two ReLU dense layers and a 4-logit
output layer. Forward and backward passes are written out by hand (im2col +
BLAS matmul) so every gradient can be checked against finite differences.

Training normally runs in float32; gradient checking must use float64 --
finite differences are not trustworthy in single precision.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field
from typing import Iterator

import numpy as np


class ShapeError(ValueError):
    """Raised when tensor shapes do not line up; names the offending dims."""


class NonFiniteError(ValueError):
    """Raised when a NaN/Inf crosses a layer boundary or enters the optimizer."""


def _require_finite(what: str, arr: np.ndarray) -> None:
    if not np.isfinite(arr).all():
        bad = int(np.size(arr) - np.isfinite(arr).sum())
        raise NonFiniteError(f"{what} contains {bad} non-finite values")


# ---------------------------------------------------------------------------
# layer primitives
# ---------------------------------------------------------------------------

def _im2col3(x: np.ndarray) -> np.ndarray:
    """(N,C,H,W) -> (N*H*W, C*9) patch matrix for a 3x3 same-padding conv."""
    n, c, h, w = x.shape
    xp = np.pad(x, ((0, 0), (0, 0), (1, 1), (1, 1)))
    win = np.lib.stride_tricks.sliding_window_view(xp, (3, 3), axis=(2, 3))
    # (N,C,H,W,3,3) -> (N,H,W,C,3,3) -> (N*H*W, C*9), contiguous for BLAS
    return np.ascontiguousarray(win.transpose(0, 2, 3, 1, 4, 5)).reshape(n * h * w, c * 9)


def _conv_same(x: np.ndarray, w: np.ndarray) -> np.ndarray:
    """3x3 stride-1 same cross-correlation without validation (internal)."""
    n, _, h, wd = x.shape
    cout = w.shape[0]
    out = _im2col3(x) @ w.reshape(cout, -1).T
    return out.reshape(n, h, wd, cout).transpose(0, 3, 1, 2)


def conv2d_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Cross-correlate (N,Cin,H,W) with (Cout,Cin,3,3) kernels, zero 'same' padding."""
    if x.ndim != 4 or w.ndim != 4 or b.ndim != 1:
        raise ShapeError(
            f"conv2d expects input rank 4, weights rank 4, bias rank 1; "
            f"got {x.shape}, {w.shape}, {b.shape}"
        )
    if w.shape[2:] != (3, 3):
        raise ShapeError(f"conv2d kernel must be 3x3, got {w.shape[2:]}")
    if x.shape[1] != w.shape[1]:
        raise ShapeError(
            f"conv2d channel mismatch: input Cin={x.shape[1]} vs weight Cin={w.shape[1]}"
        )
    if b.shape[0] != w.shape[0]:
        raise ShapeError(
            f"conv2d bias mismatch: bias has {b.shape[0]} entries, weights Cout={w.shape[0]}"
        )
    _require_finite("conv2d input", x)
    out = _conv_same(x, w) + b[None, :, None, None]
    _require_finite("conv2d output", out)
    return out


def conv2d_backward(
    x: np.ndarray, w: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Gradients of a summed scalar loss through conv2d_forward.

    Returns (grad_input, grad_weights, grad_bias).
    """
    n, cin, h, wd = x.shape
    cout = w.shape[0]
    if upstream.shape != (n, cout, h, wd):
        raise ShapeError(
            f"conv2d upstream shape {upstream.shape} != expected {(n, cout, h, wd)}"
        )
    _require_finite("conv2d upstream", upstream)
    grad_b = upstream.sum(axis=(0, 2, 3))
    up2 = np.ascontiguousarray(upstream.transpose(0, 2, 3, 1)).reshape(n * h * wd, cout)
    grad_w = (_im2col3(x).T @ up2).T.reshape(cout, cin, 3, 3)
    # grad wrt input: correlate upstream with the 180-rotated, channel-swapped kernel
    w_flip = np.ascontiguousarray(w[:, :, ::-1, ::-1].transpose(1, 0, 2, 3))
    grad_x = _conv_same(upstream, w_flip)
    return grad_x, grad_w, grad_b


def maxpool_forward(x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """2x2/stride-2 max pool. Returns (output, within-window argmax indices).

    Argmax indices are row-major window offsets in 0..3; ties break to the
    first (row-major) position.
    """
    if x.ndim != 4:
        raise ShapeError(f"maxpool expects rank-4 input, got {x.shape}")
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeError(f"maxpool needs even H and W, got H={h}, W={w}")
    win = (
        x.reshape(n, c, h // 2, 2, w // 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h // 2, w // 2, 4)
    )
    idx = win.argmax(axis=-1)
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, idx


def maxpool_backward(idx: np.ndarray, upstream: np.ndarray, input_shape) -> np.ndarray:
    """Scatter upstream gradients back to the argmax positions."""
    n, c, h, w = input_shape
    if upstream.shape != idx.shape:
        raise ShapeError(f"maxpool upstream {upstream.shape} != indices {idx.shape}")
    win = np.zeros((n, c, h // 2, w // 2, 4), dtype=upstream.dtype)
    np.put_along_axis(win, idx[..., None], upstream[..., None], axis=-1)
    return (
        win.reshape(n, c, h // 2, w // 2, 2, 2)
        .transpose(0, 1, 2, 4, 3, 5)
        .reshape(n, c, h, w)
    )


def relu_forward(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0)


def relu_backward(x: np.ndarray, upstream: np.ndarray) -> np.ndarray:
    return upstream * (x > 0)


def dense_forward(x: np.ndarray, w: np.ndarray, b: np.ndarray) -> np.ndarray:
    """Affine map (N,K) @ (K,M) + (M,)."""
    if x.ndim != 2 or w.ndim != 2:
        raise ShapeError(f"dense expects rank-2 input/weights, got {x.shape}, {w.shape}")
    if x.shape[1] != w.shape[0]:
        raise ShapeError(f"dense mismatch: input K={x.shape[1]} vs weight K={w.shape[0]}")
    if b.shape != (w.shape[1],):
        raise ShapeError(f"dense bias shape {b.shape} != ({w.shape[1]},)")
    _require_finite("dense input", x)
    return x @ w + b


def dense_backward(
    x: np.ndarray, w: np.ndarray, upstream: np.ndarray
) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    if upstream.shape != (x.shape[0], w.shape[1]):
        raise ShapeError(
            f"dense upstream shape {upstream.shape} != {(x.shape[0], w.shape[1])}"
        )
    return upstream @ w.T, x.T @ upstream, upstream.sum(axis=0)


def softmax(logits: np.ndarray) -> np.ndarray:
    """Row-wise stabilized softmax."""
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def softmax_cross_entropy(
    logits: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray]:
    """Mean cross-entropy over the batch and its gradient wrt logits.

    Gradient rows sum to zero by construction: grad = (softmax - onehot) / N.
    """
    if logits.ndim != 2:
        raise ShapeError(f"logits must be (N, classes), got {logits.shape}")
    labels = np.asarray(labels)
    n, k = logits.shape
    if labels.shape != (n,):
        raise ShapeError(f"labels shape {labels.shape} != ({n},)")
    if labels.min(initial=0) < 0 or labels.max(initial=0) >= k:
        raise ValueError(f"labels must lie in [0, {k - 1}], got range "
                         f"[{labels.min()}, {labels.max()}]")
    _require_finite("logits", logits)
    z = logits - logits.max(axis=1, keepdims=True)
    logp = z - np.log(np.exp(z).sum(axis=1, keepdims=True))
    loss = float(-logp[np.arange(n), labels].mean())
    grad = np.exp(logp)
    grad[np.arange(n), labels] -= 1.0
    grad /= n
    return loss, grad.astype(logits.dtype, copy=False)


# ---------------------------------------------------------------------------
# the fixed network
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class NetworkSpec:
    """Fixed stack: (conv3x3 -> relu -> pool2x2) x3, two dense, 4-way output."""

    in_channels: int = 3
    height: int = 64
    width: int = 64
    conv_channels: tuple[int, int, int] = (8, 16, 32)
    dense_widths: tuple[int, int] = (128, 64)
    num_classes: int = 4

    def __post_init__(self):
        if len(self.conv_channels) != 3:
            raise ShapeError("exactly three conv layers required")
        if len(self.dense_widths) != 2:
            raise ShapeError("exactly two hidden dense layers required")
        if self.height % 8 or self.width % 8:
            raise ShapeError(
                f"input H,W must be divisible by 8 for three 2x2 pools, "
                f"got {self.height}x{self.width}"
            )

    @property
    def flat_features(self) -> int:
        return self.conv_channels[2] * (self.height // 8) * (self.width // 8)

    def layer_shapes(self) -> dict[str, tuple[tuple, tuple]]:
        """Weight/bias shapes per layer, in forward order."""
        c1, c2, c3 = self.conv_channels
        d1, d2 = self.dense_widths
        return {
            "conv1": ((c1, self.in_channels, 3, 3), (c1,)),
            "conv2": ((c2, c1, 3, 3), (c2,)),
            "conv3": ((c3, c2, 3, 3), (c3,)),
            "fc1": ((self.flat_features, d1), (d1,)),
            "fc2": ((d1, d2), (d2,)),
            "out": ((d2, self.num_classes), (self.num_classes,)),
        }


@dataclass
class NetworkParams:
    """Per-layer weight/bias tensors keyed '<layer>.w' / '<layer>.b'."""

    tensors: dict[str, np.ndarray]
    seed: int = -1

    def astype(self, dtype) -> "NetworkParams":
        return NetworkParams(
            {k: v.astype(dtype) for k, v in self.tensors.items()}, self.seed
        )

    def copy(self) -> "NetworkParams":
        return NetworkParams({k: v.copy() for k, v in self.tensors.items()}, self.seed)

    def items(self) -> Iterator[tuple[str, np.ndarray]]:
        return iter(self.tensors.items())


def init_params(spec: NetworkSpec, seed: int, dtype=np.float32) -> NetworkParams:
    """He-style uniform init, U(-sqrt(6/fan_in), +sqrt(6/fan_in)), zero biases."""
    rng = np.random.default_rng(seed)
    tensors: dict[str, np.ndarray] = {}
    for name, (w_shape, b_shape) in spec.layer_shapes().items():
        fan_in = int(np.prod(w_shape[1:])) if len(w_shape) == 4 else w_shape[0]
        limit = np.sqrt(6.0 / fan_in)
        tensors[f"{name}.w"] = rng.uniform(-limit, limit, w_shape).astype(dtype)
        tensors[f"{name}.b"] = np.zeros(b_shape, dtype=dtype)
    return NetworkParams(tensors, seed)


def check_params(spec: NetworkSpec, params: NetworkParams) -> None:
    expected = spec.layer_shapes()
    for name, (w_shape, b_shape) in expected.items():
        w = params.tensors.get(f"{name}.w")
        b = params.tensors.get(f"{name}.b")
        if w is None or b is None:
            raise ShapeError(f"params missing layer {name!r}")
        if w.shape != w_shape or b.shape != b_shape:
            raise ShapeError(
                f"layer {name!r}: got {w.shape}/{b.shape}, expected {w_shape}/{b_shape}"
            )


def forward(
    spec: NetworkSpec, params: NetworkParams, x: np.ndarray
) -> tuple[np.ndarray, list]:
    """Run the full stack; returns (logits, cache-for-backward)."""
    if x.ndim != 4 or x.shape[1:] != (spec.in_channels, spec.height, spec.width):
        raise ShapeError(
            f"network input must be (N,{spec.in_channels},{spec.height},{spec.width}), "
            f"got {x.shape}"
        )
    t = params.tensors
    cache = []
    a = x
    for i in (1, 2, 3):
        w, b = t[f"conv{i}.w"], t[f"conv{i}.b"]
        z = conv2d_forward(a, w, b)
        r = relu_forward(z)
        p, idx = maxpool_forward(r)
        cache.append((f"conv{i}", a, z, idx, r.shape))
        a = p
    conv_out_shape = a.shape
    a = a.reshape(a.shape[0], -1)
    cache.append(("flatten", conv_out_shape))
    for name in ("fc1", "fc2"):
        w, b = t[f"{name}.w"], t[f"{name}.b"]
        z = dense_forward(a, w, b)
        cache.append((name, a, z))
        a = relu_forward(z)
    logits = dense_forward(a, t["out.w"], t["out.b"])
    cache.append(("out", a))
    return logits, cache


def backward(
    spec: NetworkSpec, params: NetworkParams, cache: list, grad_logits: np.ndarray
) -> dict[str, np.ndarray]:
    """Backprop grad_logits through the cached forward pass."""
    t = params.tensors
    grads: dict[str, np.ndarray] = {}
    _, a_out = cache[-1]
    g, grads["out.w"], grads["out.b"] = dense_backward(a_out, t["out.w"], grad_logits)
    for name, entry in (("fc2", cache[-2]), ("fc1", cache[-3])):
        _, a_in, z = entry
        g = relu_backward(z, g)
        g, grads[f"{name}.w"], grads[f"{name}.b"] = dense_backward(a_in, t[f"{name}.w"], g)
    _, conv_out_shape = cache[3]
    g = g.reshape(conv_out_shape)
    for entry in reversed(cache[:3]):
        name, a_in, z, idx, r_shape = entry
        g = maxpool_backward(idx, g, r_shape)
        g = relu_backward(z, g)
        g, grads[f"{name}.w"], grads[f"{name}.b"] = conv2d_backward(a_in, t[f"{name}.w"], g)
    return grads


def loss_and_grads(
    spec: NetworkSpec, params: NetworkParams, x: np.ndarray, labels: np.ndarray
) -> tuple[float, np.ndarray, dict[str, np.ndarray]]:
    """One forward/backward pass; returns (mean loss, logits, gradients)."""
    logits, cache = forward(spec, params, x)
    loss, grad_logits = softmax_cross_entropy(logits, labels)
    grads = backward(spec, params, cache, grad_logits)
    return loss, logits, grads


def sgd_step(params: NetworkParams, grads: dict[str, np.ndarray], lr: float) -> NetworkParams:
    """In-place w <- w - lr * g. Non-finite gradients abort the step."""
    if not lr > 0:
        raise ValueError(f"learning rate must be positive, got {lr}")
    for key, g in grads.items():
        _require_finite(f"gradient {key!r}", g)
    for key, g in grads.items():
        params.tensors[key] -= lr * g
    return params


def predict(
    spec: NetworkSpec, params: NetworkParams, image: np.ndarray
) -> tuple[int, float]:
    """Classify one preprocessed (C,H,W) image.

    Returns (class index, softmax probability of the argmax). Ties break to
    the lowest class index.
    """
    if image.ndim != 3:
        raise ShapeError(f"predict expects one (C,H,W) image, got {image.shape}")
    logits, _ = forward(spec, params, image[None].astype(np.float64))
    probs = softmax(logits[0])
    cls = int(probs.argmax())
    return cls, float(probs[cls])


# ---------------------------------------------------------------------------
# checkpoint serialization
# ---------------------------------------------------------------------------

CHECKPOINT_MAGIC = b"SBNN1"
# Layout after the magic, repeated per tensor: u32 name length, UTF-8 name,
# u32 rank, u32 extents, then little-endian float64 values in row-major order.


def save_checkpoint(path, params: NetworkParams) -> None:
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        for name, arr in params.items():
            nb = name.encode("utf-8")
            fh.write(struct.pack("<I", len(nb)))
            fh.write(nb)
            fh.write(struct.pack("<I", arr.ndim))
            fh.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
            fh.write(np.ascontiguousarray(arr, dtype="<f8").tobytes())


def load_checkpoint(path) -> NetworkParams:
    with open(path, "rb") as fh:
        blob = fh.read()
    if blob[:5] != CHECKPOINT_MAGIC:
        raise ValueError(f"{path}: bad checkpoint magic {blob[:5]!r}")
    tensors: dict[str, np.ndarray] = {}
    off = 5
    while off < len(blob):
        (nlen,) = struct.unpack_from("<I", blob, off)
        off += 4
        name = blob[off : off + nlen].decode("utf-8")
        off += nlen
        (rank,) = struct.unpack_from("<I", blob, off)
        off += 4
        shape = struct.unpack_from(f"<{rank}I", blob, off)
        off += 4 * rank
        count = int(np.prod(shape)) if rank else 1
        arr = np.frombuffer(blob, dtype="<f8", count=count, offset=off).reshape(shape)
        off += 8 * count
        tensors[name] = arr.copy()
    return NetworkParams(tensors, seed=-1)
