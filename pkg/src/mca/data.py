"""MCAV video files and the synthetic MotionShapes dataset.

An MCAV file is a 24-byte little-endian header (magic ``b"MCAV"``, version
u16, ``T, C, H, W`` as u32, label u16) followed by ``T*C*H*W`` unsigned 8-bit
samples in ``T``-major, then channel, then row-major spatial order.

MotionShapes videos show one solid shape moving over a static low-frequency
grey texture.  The class is the motion (``up``, ``down``, ``left``,
``right``, ``grow``, ``shrink``); with probability ``kappa`` the shape is
painted in a hue assigned to its class, which gives a classifier an easy
appearance shortcut that does not survive a channel permutation.
"""

from __future__ import annotations

import json
import struct
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .augment import channel_swap, parse_permutation, permutation_name
from .colorspace import hsv_to_rgb, to_uint8

MAGIC = b"MCAV"
VERSION = 1
_HEADER = struct.Struct("<4sH4IH")

MOTIONS = ("up", "down", "left", "right", "grow", "shrink")
SHAPES = ("square", "disk", "triangle")
SPLITS = ("train", "val", "val_hueshift")


class McavError(ValueError):
    """Malformed MCAV file."""


class BadMagicError(McavError):
    pass


class TruncatedFileError(McavError):
    pass


class VersionMismatchError(McavError):
    pass


def write_mcav(video: np.ndarray, path, label: int = 0) -> None:
    video = np.asarray(video)
    if video.ndim != 4 or video.shape[1] != 3:
        raise ValueError(f"expected a T x 3 x H x W video, got shape {video.shape}")
    if video.dtype != np.uint8:
        raise TypeError(f"MCAV stores unsigned 8-bit samples, got {video.dtype}")
    if not 0 <= label < 2**16:
        raise ValueError(f"label out of u16 range: {label}")
    header = _HEADER.pack(MAGIC, VERSION, *video.shape, label)
    with open(path, "wb") as f:
        f.write(header)
        f.write(np.ascontiguousarray(video).tobytes())


def read_mcav(path) -> tuple[np.ndarray, int]:
    """Return ``(video, label)``; each malformation has its own exception."""
    raw = Path(path).read_bytes()
    if len(raw) < 4 or raw[:4] != MAGIC:
        raise BadMagicError(f"{path}: bad magic {raw[:4]!r}")
    if len(raw) < _HEADER.size:
        raise TruncatedFileError(f"{path}: header truncated ({len(raw)} bytes)")
    _, version, t, c, h, w, label = _HEADER.unpack_from(raw)
    if version != VERSION:
        raise VersionMismatchError(f"{path}: version {version}, expected {VERSION}")
    if c != 3:
        raise McavError(f"{path}: expected 3 channels, header says {c}")
    n = t * c * h * w
    payload = len(raw) - _HEADER.size
    if payload < n:
        raise TruncatedFileError(f"{path}: payload has {payload} bytes, header needs {n}")
    if payload > n:
        raise McavError(f"{path}: {payload - n} trailing bytes after payload")
    video = np.frombuffer(raw, dtype=np.uint8, count=n, offset=_HEADER.size)
    return video.reshape(t, c, h, w).copy(), label


@dataclass
class VideoDataset:
    videos: np.ndarray  # N x T x 3 x H x W, uint8
    labels: np.ndarray  # N, int64
    class_names: tuple[str, ...] = MOTIONS

    def __post_init__(self):
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.videos.ndim != 5 or self.videos.shape[2] != 3:
            raise ValueError(f"expected N x T x 3 x H x W videos, got {self.videos.shape}")
        if len(self.videos) != len(self.labels):
            raise ValueError("videos and labels differ in length")

    def __len__(self) -> int:
        return len(self.labels)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def subset(self, idx) -> "VideoDataset":
        return VideoDataset(self.videos[idx], self.labels[idx], self.class_names)


def save_dataset(ds: VideoDataset, directory) -> None:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    for i, (video, label) in enumerate(zip(ds.videos, ds.labels)):
        write_mcav(video, directory / f"{i:06d}.mcav", int(label))


def load_dataset(directory, class_names=None) -> VideoDataset:
    directory = Path(directory)
    files = sorted(directory.glob("*.mcav"))
    if not files:
        raise FileNotFoundError(f"no .mcav files in {directory}")
    pairs = [read_mcav(f) for f in files]
    videos = np.stack([v for v, _ in pairs])
    labels = np.array([y for _, y in pairs])
    if class_names is None:
        manifest = directory.parent / "manifest.json"
        if manifest.exists():
            class_names = tuple(json.loads(manifest.read_text())["class_names"])
        else:
            class_names = tuple(str(k) for k in range(labels.max() + 1))
    return VideoDataset(videos, labels, tuple(class_names))


@dataclass
class MotionShapesConfig:
    classes: tuple[str, ...] = MOTIONS
    frames: int = 8
    size: int = 32
    shapes: tuple[str, ...] = SHAPES
    kappa: float = 0.9
    n_train: int = 3000
    n_val: int = 600
    seed: int = 0
    hueshift_perm: str = "GBR"
    hue_spread: float = 10.0  # degrees of jitter around a class hue
    min_half_size: int = 3
    max_half_size: int = 5
    grow_range: tuple[int, int] = field(default=(2, 9))

    def __post_init__(self):
        self.classes = tuple(self.classes)
        self.shapes = tuple(self.shapes)
        self.grow_range = tuple(self.grow_range)
        unknown = set(self.classes) - set(MOTIONS)
        if unknown or not self.classes:
            raise ValueError(f"unknown motion classes: {sorted(unknown)}")
        if len(set(self.classes)) != len(self.classes):
            raise ValueError("duplicate motion classes")
        if set(self.shapes) - set(SHAPES) or not self.shapes:
            raise ValueError(f"shapes must be drawn from {SHAPES}")
        if not 0.0 <= self.kappa <= 1.0:
            raise ValueError(f"kappa must lie in [0, 1], got {self.kappa}")
        if self.frames < 2:
            raise ValueError("need at least two frames to show motion")
        if self.n_train < 0 or self.n_val < 0:
            raise ValueError("sample counts must be non-negative")
        if self.min_half_size < 1 or self.max_half_size < self.min_half_size:
            raise ValueError("bad shape size range")
        lo, hi = self.grow_range
        if not 1 <= lo < hi:
            raise ValueError("grow_range must satisfy 1 <= lo < hi")
        parse_permutation(self.hueshift_perm)
        # largest extent a shape ever needs, checked against the frame
        travel = self.frames - 1
        need = max(2 * self.max_half_size + 1 + travel, 2 * hi + 1)
        if need > self.size:
            raise ValueError(
                f"degenerate geometry: shapes need {need} px but frames are {self.size} px"
            )

    def class_hue(self, k: int) -> float:
        return 360.0 * k / len(self.classes)


def _background(rng: np.random.Generator, size: int, grid: int = 5) -> np.ndarray:
    """Static grey low-frequency texture, bilinear upsampling of a coarse grid."""
    coarse = rng.uniform(0.2, 0.55, size=(grid, grid))
    pos = np.linspace(0, grid - 1, size)
    lo = np.minimum(np.floor(pos).astype(int), grid - 2)
    frac = pos - lo
    interp = np.zeros((size, grid))
    interp[np.arange(size), lo] = 1 - frac
    interp[np.arange(size), lo + 1] = frac
    return interp @ coarse @ interp.T


def _shape_mask(kind: str, cy, cx, half, size: int) -> np.ndarray:
    """Boolean masks, one per frame, for integer centres and half sizes."""
    yy, xx = np.mgrid[0:size, 0:size]
    dy = yy[None] - np.asarray(cy)[:, None, None]
    dx = xx[None] - np.asarray(cx)[:, None, None]
    s = np.asarray(half)[:, None, None]
    if kind == "square":
        return (np.abs(dy) <= s) & (np.abs(dx) <= s)
    if kind == "disk":
        return dy * dy + dx * dx <= s * s
    if kind == "triangle":
        return (np.abs(dy) <= s) & (2 * np.abs(dx) <= dy + s)
    raise ValueError(f"unknown shape {kind!r}")


def _trajectory(rng: np.random.Generator, motion: str, cfg: MotionShapesConfig):
    t = np.arange(cfg.frames)
    n = cfg.size
    if motion in ("grow", "shrink"):
        lo, hi = cfg.grow_range
        half = np.rint(lo + (hi - lo) * t / (cfg.frames - 1)).astype(int)
        if motion == "shrink":
            half = half[::-1]
        cy = np.full(cfg.frames, rng.integers(hi, n - hi))
        cx = np.full(cfg.frames, rng.integers(hi, n - hi))
        return cy, cx, half

    s = int(rng.integers(cfg.min_half_size, cfg.max_half_size + 1))
    half = np.full(cfg.frames, s)
    span = n - 2 * s - 1  # room for the centre to travel
    max_step = max(1, min(2, span // (cfg.frames - 1)))
    step = int(rng.integers(1, max_step + 1))
    travel = step * (cfg.frames - 1)
    start = int(rng.integers(s, n - s - travel))
    along = start + step * t
    across = np.full(cfg.frames, rng.integers(s, n - s))
    if motion in ("up", "left"):
        along = along[::-1]
    if motion in ("up", "down"):
        return along, across, half
    return across, along, half


def render_motion_video(rng: np.random.Generator, label: int, cfg: MotionShapesConfig):
    """Render one video; returns ``(uint8 video, hue in degrees)``."""
    motion = cfg.classes[label]
    background = _background(rng, cfg.size)
    kind = cfg.shapes[int(rng.integers(len(cfg.shapes)))]
    cy, cx, half = _trajectory(rng, motion, cfg)
    if rng.random() < cfg.kappa:
        hue = cfg.class_hue(label) + rng.uniform(-cfg.hue_spread, cfg.hue_spread)
    else:
        hue = rng.uniform(0.0, 360.0)
    hue = float(np.mod(hue, 360.0))
    sat = rng.uniform(0.6, 1.0)
    val = rng.uniform(0.6, 1.0)
    color = hsv_to_rgb(np.array([hue, sat, val]))

    mask = _shape_mask(kind, cy, cx, half, cfg.size)  # T x H x W
    frames = np.where(mask[:, None], color[None, :, None, None], background[None, None])
    return to_uint8(frames), hue


def _sample_rng(seed: int, split: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([seed, split, index]))


def generate_split(cfg: MotionShapesConfig, split: int, count: int, return_hues: bool = False):
    """Generate ``count`` balanced samples; sample ``i`` has label ``i % K``."""
    k = len(cfg.classes)
    videos = np.empty((count, cfg.frames, 3, cfg.size, cfg.size), dtype=np.uint8)
    labels = np.arange(count) % k
    hues = np.empty(count)
    for i in range(count):
        videos[i], hues[i] = render_motion_video(_sample_rng(cfg.seed, split, i), labels[i], cfg)
    ds = VideoDataset(videos, labels, cfg.classes)
    return (ds, hues) if return_hues else ds


def generate_motionshapes(cfg: MotionShapesConfig) -> dict[str, VideoDataset]:
    """Build the ``train``, ``val`` and ``val_hueshift`` splits.

    ``val`` is drawn from the same distribution as ``train`` (same
    ``kappa``) from disjoint per-sample seeds; ``val_hueshift`` is ``val``
    with the fixed permutation ``cfg.hueshift_perm`` applied to every video.
    """
    train = generate_split(cfg, 0, cfg.n_train)
    val = generate_split(cfg, 1, cfg.n_val)
    shifted = VideoDataset(
        channel_swap(val.videos, cfg.hueshift_perm), val.labels.copy(), cfg.classes
    )
    return {"train": train, "val": val, "val_hueshift": shifted}


def write_motionshapes(splits: dict[str, VideoDataset], cfg: MotionShapesConfig, out) -> Path:
    out = Path(out)
    out.mkdir(parents=True, exist_ok=True)
    for name in SPLITS:
        save_dataset(splits[name], out / name)
    manifest = {
        "format": "mcav",
        "version": VERSION,
        "class_names": list(cfg.classes),
        "config": asdict(cfg),
        "hueshift_perm": permutation_name(parse_permutation(cfg.hueshift_perm)),
        "counts": {name: len(splits[name]) for name in SPLITS},
    }
    path = out / "manifest.json"
    path.write_text(json.dumps(manifest, indent=2, sort_keys=True))
    return path
