"""A tiny numpy video classifier with hand-written gradients, and its losses.

Architecture, per frame: two 3x3 convolutions with squareplus activations over RGB plus two fixed
coordinate channels, then global average pooling over space.  Across time
the pooled features are summarised by their temporal mean and the
consecutive-frame differences; a linear head maps the concatenation to K
logits.  Squareplus, a smooth ReLU, keeps the loss smooth, so central
finite differences agree with the analytic gradients.  The coordinate channels let pooled features depend on where the
shape is, so the temporal differences carry motion.

Activations are kept channels-last internally.  ``backward`` accumulates into
``net.grads``; ``sgd_step`` consumes and clears them.
"""

from __future__ import annotations

import hashlib
import json
import math
import struct
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

LOG_CLAMP = 1e-12


class NumericalError(FloatingPointError):
    """Raised when a loss or gradient stops being finite."""


@dataclass(frozen=True)
class NetConfig:
    num_classes: int = 6
    frames: int = 8
    size: int = 32
    conv1: int = 16
    conv2: int = 32
    stride1: int = 2
    stride2: int = 2
    coords: bool = True
    diff_gain: float = 4.0
    dtype: str = "float32"

    @property
    def in_channels(self) -> int:
        return 5 if self.coords else 3

    @property
    def feature_dim(self) -> int:
        return self.conv2 * self.frames

    def digest(self) -> bytes:
        """sha256 of the architecture (dtype excluded: weights are stored as float32)."""
        d = asdict(self)
        d.pop("dtype")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).digest()


class SmallNet:
    def __init__(self, config: NetConfig, rng: np.random.Generator | None = None):
        self.config = config
        self.dtype = np.dtype(config.dtype)
        c = config
        shapes = {
            "conv1.w": (c.conv1, c.in_channels, 3, 3),
            "conv1.b": (c.conv1,),
            "conv2.w": (c.conv2, c.conv1, 3, 3),
            "conv2.b": (c.conv2,),
            "fc.w": (c.num_classes, c.feature_dim),
            "fc.b": (c.num_classes,),
        }
        rng = rng if rng is not None else np.random.default_rng(0)
        self.params: dict[str, np.ndarray] = {}
        for name, shape in shapes.items():
            if name.endswith(".b"):
                p = np.zeros(shape)
            else:
                fan_in = int(np.prod(shape[1:]))
                gain = 2.0 if name.startswith("conv") else 1.0
                p = rng.standard_normal(shape) * math.sqrt(gain / fan_in)
            # draw in float64, round through float32 so both dtypes share values
            self.params[name] = p.astype(np.float32).astype(self.dtype)
        self.grads = {k: np.zeros_like(v) for k, v in self.params.items()}
        self.velocity = {k: np.zeros_like(v) for k, v in self.params.items()}
        self._coords = None

    @property
    def num_parameters(self) -> int:
        return sum(p.size for p in self.params.values())

    def astype(self, dtype: str) -> "SmallNet":
        """Copy of the network computing in ``dtype``."""
        cfg = NetConfig(**{**asdict(self.config), "dtype": dtype})
        other = SmallNet.__new__(SmallNet)
        other.config, other.dtype, other._coords = cfg, np.dtype(dtype), None
        other.params = {k: v.astype(dtype) for k, v in self.params.items()}
        other.grads = {k: np.zeros_like(v) for k, v in other.params.items()}
        other.velocity = {k: v.astype(dtype) for k, v in self.velocity.items()}
        return other

    def zero_grad(self) -> None:
        for g in self.grads.values():
            g.fill(0)

    def coord_cols(self, size: int, stride: int) -> np.ndarray:
        """im2col matrix of the two coordinate channels (row, column in [-1, 1])."""
        key = (size, stride)
        if self._coords is None or self._coords[0] != key:
            yy, xx = np.meshgrid(np.linspace(-1, 1, size), np.linspace(-1, 1, size), indexing="ij")
            coords = np.stack([yy, xx], axis=-1).astype(self.dtype)[None]
            _, cols = _conv_forward(coords, np.zeros((1, 2, 3, 3), self.dtype), np.zeros(1, self.dtype), stride)
            self._coords = (key, cols)
        return self._coords[1]


def _squareplus(z):
    """``(z + sqrt(z^2 + 1)) / 2``; also returns the root for the derivative."""
    root = np.sqrt(z * z + 1)
    return 0.5 * (z + root), root


def _squareplus_grad(z, root):
    return 0.5 * (1 + z / root)


def _conv_forward(x, w, b, stride):
    """x: B x H x W x C (channels last).  Returns output and im2col matrix."""
    bsz, h, wd, c = x.shape
    xp = np.zeros((bsz, h + 2, wd + 2, c), dtype=x.dtype)
    xp[:, 1:-1, 1:-1] = x
    win = sliding_window_view(xp, (3, 3), axis=(1, 2))[:, ::stride, ::stride]
    ho, wo = win.shape[1], win.shape[2]
    cols = win.reshape(bsz * ho * wo, c * 9)  # (C, kh, kw) order matches w
    out = cols @ w.reshape(w.shape[0], -1).T
    out += b
    return out.reshape(bsz, ho, wo, -1), cols


def _conv_backward(dout, cols, w, in_shape, stride, need_dx=True):
    bsz, h, wd, c = in_shape
    ho, wo = dout.shape[1], dout.shape[2]
    dflat = dout.reshape(-1, dout.shape[-1])
    dw = (dflat.T @ cols).reshape(w.shape)
    db = dflat.sum(axis=0)
    if not need_dx:
        return None, dw, db
    dcols = (dflat @ w.reshape(w.shape[0], -1)).reshape(bsz, ho, wo, c, 3, 3)
    dxp = np.zeros((bsz, h + 2, wd + 2, c), dtype=dout.dtype)
    for i in range(3):
        for j in range(3):
            dxp[:, i : i + stride * ho : stride, j : j + stride * wo : stride] += dcols[..., i, j]
    return dxp[:, 1:-1, 1:-1], dw, db


def forward(net: SmallNet, batch) -> tuple[np.ndarray, dict]:
    """Logits for an ``N x T x 3 x H x W`` batch, plus the cache for backward."""
    cfg = net.config
    batch = np.asarray(batch)
    if batch.dtype == np.uint8:
        batch = batch.astype(net.dtype) / net.dtype.type(255)
    if batch.ndim != 5 or batch.shape[1:] != (cfg.frames, 3, cfg.size, cfg.size):
        raise ValueError(
            f"batch shape {batch.shape} does not match N x {cfg.frames} x 3 x {cfg.size} x {cfg.size}"
        )
    n, t = batch.shape[:2]
    x = batch.astype(net.dtype, copy=False).transpose(0, 1, 3, 4, 2).reshape(n * t, cfg.size, cfg.size, 3)
    x = x - net.dtype.type(0.5)

    p = net.params
    w1 = p["conv1.w"]
    z1, cols1 = _conv_forward(x, w1[:, :3], p["conv1.b"], cfg.stride1)
    if cfg.coords:
        # coordinate channels are the same for every frame: one response map
        coord_cols = net.coord_cols(cfg.size, cfg.stride1)
        z1 += (coord_cols @ w1[:, 3:].reshape(w1.shape[0], -1).T).reshape(z1.shape[1:])
    a1, r1 = _squareplus(z1)
    z2, cols2 = _conv_forward(a1, p["conv2.w"], p["conv2.b"], cfg.stride2)
    a2, r2 = _squareplus(z2)
    pooled = a2.mean(axis=(1, 2)).reshape(n, t, -1)
    gain = net.dtype.type(cfg.diff_gain)
    diffs = (pooled[:, 1:] - pooled[:, :-1]) * gain
    feats = np.concatenate([pooled.mean(axis=1), diffs.reshape(n, -1)], axis=1)
    logits = feats @ p["fc.w"].T + p["fc.b"]
    cache = {
        "n": n, "t": t, "x_shape": x.shape, "cols1": cols1, "z1": z1, "r1": r1, "r2": r2,
        "a1_shape": a1.shape, "cols2": cols2, "z2": z2, "feats": feats,
    }
    return logits, cache


def predict_logits(net: SmallNet, batch, chunk: int = 256) -> np.ndarray:
    return np.concatenate([forward(net, batch[i : i + chunk])[0] for i in range(0, len(batch), chunk)])


def backward(net: SmallNet, cache: dict | None, dlogits) -> None:
    """Accumulate parameter gradients for upstream ``dlogits`` into ``net.grads``."""
    if cache is None:
        raise ValueError("backward needs the cache returned by forward")
    cfg, p, g = net.config, net.params, net.grads
    dlogits = np.asarray(dlogits, dtype=net.dtype)
    n, t = cache["n"], cache["t"]
    g["fc.w"] += dlogits.T @ cache["feats"]
    g["fc.b"] += dlogits.sum(axis=0)
    dfeats = dlogits @ p["fc.w"]

    c2 = cfg.conv2
    dmean = dfeats[:, :c2]
    ddiff = dfeats[:, c2:].reshape(n, t - 1, c2) * net.dtype.type(cfg.diff_gain)
    dpooled = np.repeat(dmean[:, None, :] / net.dtype.type(t), t, axis=1)
    dpooled[:, 1:] += ddiff
    dpooled[:, :-1] -= ddiff

    z2 = cache["z2"]
    area = net.dtype.type(z2.shape[1] * z2.shape[2])
    dz2 = (dpooled.reshape(n * t, 1, 1, c2) / area) * _squareplus_grad(z2, cache["r2"])
    da1, dw2, db2 = _conv_backward(dz2, cache["cols2"], p["conv2.w"], cache["a1_shape"], cfg.stride2)
    g["conv2.w"] += dw2
    g["conv2.b"] += db2
    dz1 = da1 * _squareplus_grad(cache["z1"], cache["r1"])
    w1 = p["conv1.w"]
    _, dw1, db1 = _conv_backward(dz1, cache["cols1"], w1[:, :3], cache["x_shape"], cfg.stride1, need_dx=False)
    g["conv1.w"][:, :3] += dw1
    g["conv1.b"] += db1
    if cfg.coords:
        dmap = dz1.sum(axis=0).reshape(-1, w1.shape[0])
        coord_cols = net.coord_cols(cfg.size, cfg.stride1)
        g["conv1.w"][:, 3:] += (dmap.T @ coord_cols).reshape(w1[:, 3:].shape)


def sgd_step(net: SmallNet, lr: float, momentum: float = 0.0) -> None:
    """Heavy-ball SGD: ``v <- momentum * v + g``, ``theta <- theta - lr * v``."""
    for name, grad in net.grads.items():
        if not np.all(np.isfinite(grad)):
            raise NumericalError(f"non-finite gradient in {name}")
    for name, grad in net.grads.items():
        v = net.velocity[name]
        v *= net.dtype.type(momentum)
        v += grad
        net.params[name] -= net.dtype.type(lr) * v
        grad.fill(0)


# --- losses -----------------------------------------------------------------


@dataclass
class LossOutput:
    value: float
    grad: np.ndarray  # w.r.t. the logits of the branch being trained
    clamped: bool = False


def softmax(logits) -> np.ndarray:
    logits = np.asarray(logits)
    z = logits - logits.max(axis=-1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=-1, keepdims=True)


def _as_2d(p):
    p = np.asarray(p, dtype=np.float64)
    return p[None] if p.ndim == 1 else p


def one_hot(labels, k: int) -> np.ndarray:
    labels = np.asarray(labels)
    out = np.zeros((labels.size, k))
    out[np.arange(labels.size), labels.ravel()] = 1
    return out


def ce_loss(p, y) -> LossOutput:
    """Mean cross-entropy ``-sum_k y_k log p_k``; gradient w.r.t. logits is ``(p - y) / N``.

    ``y`` may be one-hot rows or integer labels.
    """
    p = _as_2d(p)
    y = np.asarray(y)
    y = one_hot(y, p.shape[1]) if y.ndim == 1 and np.issubdtype(y.dtype, np.integer) else _as_2d(y)
    if y.shape != p.shape:
        raise ValueError(f"label shape {y.shape} does not match predictions {p.shape}")
    n = p.shape[0]
    clamped = bool(np.any(p[y > 0] < LOG_CLAMP))
    logp = np.log(np.maximum(p, LOG_CLAMP))
    value = float(-(y * logp).sum() / n)
    return LossOutput(value, (p - y) / n, clamped)


def av_loss(p, p_tilde, bidirectional: bool = False) -> LossOutput:
    """Appearance-variation loss, the mean of ``KL(p || p_tilde)``.

    The clean prediction ``p`` is a fixed target, so the returned gradient is
    w.r.t. the augmented logits only: ``(p_tilde - p) / N``.  With
    ``bidirectional`` the result carries a second gradient, for the clean
    logits, in ``grad_clean``.
    """
    p, q = _as_2d(p), _as_2d(p_tilde)
    if p.shape != q.shape:
        raise ValueError(f"shape mismatch {p.shape} vs {q.shape}")
    n = p.shape[0]
    clamped = bool(np.any((p > 0) & ((p < LOG_CLAMP) | (q < LOG_CLAMP))))
    logp = np.log(np.maximum(p, LOG_CLAMP))
    logq = np.log(np.maximum(q, LOG_CLAMP))
    # terms with p_k = 0 contribute nothing
    per_sample = np.where(p > 0, p * (logp - logq), 0.0).sum(axis=1)
    # clamping can leave tiny negative round-off
    per_sample = np.maximum(per_sample, 0.0)
    out = LossOutput(float(per_sample.sum() / n), (q - p) / n, clamped)
    if bidirectional:
        out.grad_clean = p * ((logp - logq) - per_sample[:, None]) / n
    return out


def total_loss(ce: float, av: float, lambda_av: float) -> float:
    if lambda_av < 0:
        raise ValueError(f"lambda_av must be non-negative, got {lambda_av}")
    return ce + lambda_av * av


# --- checkpoints --------------------------------------------------------------

CKPT_MAGIC = b"MCAK"
CKPT_VERSION = 1
_CKPT_HEADER = struct.Struct("<4sH32sI")


def save_checkpoint(net: SmallNet, path) -> None:
    """magic, version, architecture digest, config JSON, then float32 LE parameters."""
    cfg_json = json.dumps(asdict(net.config), sort_keys=True).encode()
    flat = np.concatenate([net.params[k].ravel() for k in sorted(net.params)]).astype("<f4")
    with open(path, "wb") as f:
        f.write(_CKPT_HEADER.pack(CKPT_MAGIC, CKPT_VERSION, net.config.digest(), len(cfg_json)))
        f.write(cfg_json)
        f.write(struct.pack("<Q", flat.size))
        f.write(flat.tobytes())


def load_checkpoint(path, expect: NetConfig | None = None) -> SmallNet:
    raw = Path(path).read_bytes()
    if raw[:4] != CKPT_MAGIC:
        raise ValueError(f"{path}: not a checkpoint (magic {raw[:4]!r})")
    if len(raw) < _CKPT_HEADER.size:
        raise ValueError(f"{path}: truncated header")
    _, version, digest, cfg_len = _CKPT_HEADER.unpack_from(raw)
    if version != CKPT_VERSION:
        raise ValueError(f"{path}: checkpoint version {version}, expected {CKPT_VERSION}")
    off = _CKPT_HEADER.size
    cfg = NetConfig(**json.loads(raw[off : off + cfg_len]))
    off += cfg_len
    if cfg.digest() != digest:
        raise ValueError(f"{path}: config digest mismatch")
    if expect is not None and expect.digest() != digest:
        raise ValueError(f"{path}: checkpoint architecture differs from the requested one")
    (count,) = struct.unpack_from("<Q", raw, off)
    off += 8
    if len(raw) - off != 4 * count:
        raise ValueError(f"{path}: expected {count} parameters, found {(len(raw) - off) // 4}")
    flat = np.frombuffer(raw, dtype="<f4", count=count, offset=off)
    net = SmallNet(cfg)
    pos = 0
    for k in sorted(net.params):
        size = net.params[k].size
        net.params[k] = flat[pos : pos + size].reshape(net.params[k].shape).astype(net.dtype)
        pos += size
    if pos != count:
        raise ValueError(f"{path}: parameter count {count} does not match the architecture ({pos})")
    return net
