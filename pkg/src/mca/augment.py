"""Channel Swap, SwapMix and the per-iteration augmentation gate.

A permutation is a tuple of source channel indices: output channel ``i`` is
input channel ``perm[i]``.  ``"GRB"`` is ``(1, 0, 2)``, so a pure red frame
becomes pure green.  All random draws come from a caller-owned
:class:`numpy.random.Generator`.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .colorspace import hue_jitter, to_float

IDENTITY = (0, 1, 2)
_NAMES = "RGB"

# the five non-identity orderings, in a fixed order so draws are reproducible
PERMUTATIONS: tuple[tuple[int, int, int], ...] = tuple(
    tuple(_NAMES.index(c) for c in name) for name in ("RBG", "BRG", "BGR", "GRB", "GBR")
)


def parse_permutation(order) -> tuple[int, int, int]:
    """Accept ``"GRB"``-style names or index triples."""
    if isinstance(order, str):
        order = order.strip().upper()
        if sorted(order) != sorted(_NAMES):
            raise ValueError(f"not a permutation of RGB: {order!r}")
        return tuple(_NAMES.index(c) for c in order)
    perm = tuple(int(i) for i in order)
    if sorted(perm) != [0, 1, 2]:
        raise ValueError(f"not a permutation of (0, 1, 2): {order!r}")
    return perm


def permutation_name(perm) -> str:
    return "".join(_NAMES[i] for i in perm)


def inverse_permutation(perm) -> tuple[int, int, int]:
    return tuple(int(i) for i in np.argsort(perm))


@dataclass(frozen=True)
class MixCoefficient:
    lam: float
    alpha: float = 1.0

    def __post_init__(self):
        if not 0.0 <= self.lam <= 1.0:
            raise ValueError(f"lambda must lie in [0, 1], got {self.lam}")
        if not self.alpha > 0:
            raise ValueError(f"alpha must be positive, got {self.alpha}")


def sample_permutation(rng: np.random.Generator) -> tuple[int, int, int]:
    """Draw one of the five non-identity permutations uniformly."""
    return PERMUTATIONS[int(rng.integers(len(PERMUTATIONS)))]


def sample_lambda(rng: np.random.Generator, alpha: float = 1.0) -> MixCoefficient:
    """Draw the interpolation weight from ``Beta(alpha, alpha)``."""
    if not alpha > 0:
        raise ValueError(f"alpha must be positive, got {alpha}")
    return MixCoefficient(float(rng.beta(alpha, alpha)), alpha)


def _check_video(v: np.ndarray) -> None:
    if v.ndim < 3 or v.shape[-3] != 3:
        raise ValueError(f"expected (..., 3, H, W) video data, got shape {v.shape}")


def channel_swap(video, perm) -> np.ndarray:
    """Reorder the colour channels of every frame by ``perm``.

    Works on a single ``T x 3 x H x W`` video or any array with the channel
    axis third from last.  The result never aliases the input.
    """
    video = np.asarray(video)
    _check_video(video)
    perm = parse_permutation(perm)
    return video[..., list(perm), :, :]


def swap_mix(video, perm, lam) -> np.ndarray:
    """Interpolate a video with its channel-swapped copy.

    Returns ``lam * x + (1 - lam) * channel_swap(x, perm)`` in floating point.
    Unsigned 8-bit input is normalised first and the result is not
    re-quantised.
    """
    if isinstance(lam, MixCoefficient):
        lam = lam.lam
    if not 0.0 <= lam <= 1.0:
        raise ValueError(f"lambda must lie in [0, 1], got {lam}")
    video = np.asarray(video)
    _check_video(video)
    perm = parse_permutation(perm)
    if video.dtype == np.uint8:
        # fold the 1/255 normalisation into the two weights
        dtype = np.dtype(np.float32)
        scale = np.float32(1.0 / 255.0)
        w_keep, w_swap = np.float32(lam) * scale, np.float32(1 - lam) * scale
    else:
        video = to_float(video)
        dtype = video.dtype
        w_keep, w_swap = dtype.type(lam), dtype.type(1 - lam)
    # channel by channel on basic slices: no gathered copy of the input
    out = np.empty(video.shape, dtype)
    tmp = np.empty(video.shape[:-3] + video.shape[-2:], dtype)
    for c, src in enumerate(perm):
        np.multiply(video[..., c, :, :], w_keep, out=out[..., c, :, :], dtype=dtype)
        np.multiply(video[..., src, :, :], w_swap, out=tmp, dtype=dtype)
        out[..., c, :, :] += tmp
    return out


def mca_gate(rng: np.random.Generator, rho: float) -> bool:
    """True iff a uniform draw falls below ``rho``.  Always consumes one draw."""
    if not 0.0 <= rho <= 1.0:
        raise ValueError(f"rho must lie in [0, 1], got {rho}")
    return bool(rng.random() < rho)


def sample_batch_params(rng: np.random.Generator, n: int, alpha: float = 1.0):
    """Per-sample permutations and mix weights for a batch of ``n`` videos."""
    perms = [sample_permutation(rng) for _ in range(n)]
    lams = np.array([sample_lambda(rng, alpha).lam for _ in range(n)])
    return perms, lams


def channel_swap_batch(batch, perms) -> np.ndarray:
    """Apply one permutation per video of an ``N x T x 3 x H x W`` batch."""
    batch = np.asarray(batch)
    if len(perms) != len(batch):
        raise ValueError("need one permutation per video")
    return np.stack([channel_swap(v, p) for v, p in zip(batch, perms)])


def swap_mix_batch(batch, perms, lams) -> np.ndarray:
    """SwapMix with per-video parameters; frames of one video share them."""
    batch = np.asarray(batch)
    if not (len(perms) == len(lams) == len(batch)):
        raise ValueError("need one permutation and one lambda per video")
    return np.stack([swap_mix(v, p, lam) for v, p, lam in zip(batch, perms, lams)])


def random_swap_mix(batch, rng: np.random.Generator, alpha: float = 1.0) -> np.ndarray:
    """Sample per-video parameters and apply SwapMix to a batch."""
    perms, lams = sample_batch_params(rng, len(batch), alpha)
    return swap_mix_batch(batch, perms, lams)


def random_hue_jitter(batch, rng: np.random.Generator, max_delta: float = 180.0) -> np.ndarray:
    """Reference hue jitter: one uniform hue shift in ``[-max_delta, max_delta]`` per video."""
    x = to_float(np.asarray(batch))
    deltas = rng.uniform(-max_delta, max_delta, size=len(x))
    return np.stack([hue_jitter(v, float(d)) for v, d in zip(x, deltas)])


AUGMENTATIONS = ("identity", "channel-swap", "swapmix", "hue-jitter")


def apply_augmentation(batch, name: str, rng: np.random.Generator, alpha: float = 1.0) -> np.ndarray:
    """Apply a named augmentation to an ``N x T x 3 x H x W`` batch; returns floats in [0, 1]."""
    x = to_float(np.asarray(batch))
    if name == "identity":
        return x.copy()
    if name == "channel-swap":
        perms, _ = sample_batch_params(rng, len(x), alpha)
        return channel_swap_batch(x, perms)
    if name == "swapmix":
        return random_swap_mix(x, rng, alpha)
    if name == "hue-jitter":
        return random_hue_jitter(x, rng)
    raise ValueError(f"unknown augmentation {name!r}; choose from {AUGMENTATIONS}")
