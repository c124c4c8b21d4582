"""RGB <-> HSV conversion and the reference hue-jitter operation.

Arrays carry their three colour components along ``axis`` (last axis by
default; ``axis=-3`` for ``T x C x H x W`` video tensors).  Hue is expressed
in degrees in ``[0, 360)``, saturation and value in ``[0, 1]``.

Unsigned 8-bit inputs are normalised to float32 in ``[0, 1]``; float inputs
keep their precision.
"""

from __future__ import annotations

import numpy as np


def to_float(x: np.ndarray) -> np.ndarray:
    """Return ``x`` as floating point intensities in ``[0, 1]``."""
    x = np.asarray(x)
    if x.dtype == np.uint8:
        return x.astype(np.float32) * np.float32(1.0 / 255.0)
    if np.issubdtype(x.dtype, np.floating):
        return x
    return x.astype(np.float32)


def to_uint8(x: np.ndarray) -> np.ndarray:
    """Quantise ``[0, 1]`` intensities to unsigned 8-bit storage."""
    y = np.multiply(x, 255.0)
    np.rint(y, out=y)
    np.clip(y, 0, 255, out=y)
    return y.astype(np.uint8)


def _check_channels(x: np.ndarray, axis: int) -> None:
    if x.ndim == 0 or x.shape[axis] != 3:
        raise ValueError(f"expected 3 colour channels on axis {axis}, got shape {x.shape}")


def _hsv_components(rgb: np.ndarray, axis: int):
    r, g, b = np.moveaxis(rgb, axis, 0)
    mx = np.maximum(r, g)
    np.maximum(mx, b, out=mx)
    delta = np.minimum(r, g)
    np.minimum(delta, b, out=delta)
    np.subtract(mx, delta, out=delta)

    is_r = mx == r
    is_g = mx == g
    is_g &= ~is_r
    # numerator and offset of the active case; blue is the fallback
    h = np.subtract(r, g)
    np.subtract(b, r, out=h, where=is_g)
    np.subtract(g, b, out=h, where=is_r)
    offset = np.full_like(h, 240)
    np.copyto(offset, 120, where=is_g)
    np.copyto(offset, 0, where=is_r)
    # a flat pixel has a zero numerator, so dividing by 1 instead gives h = 0
    h /= delta + (delta == 0)
    h *= 60
    h += offset
    # red case with g < b, and the rare round-up to exactly 360
    np.add(h, 360, out=h, where=h < 0)
    np.subtract(h, 360, out=h, where=h >= 360)

    s = delta / (mx + (mx == 0))
    return h, s, mx


def _rgb_components(h, s, v, out):
    """Write the red, green and blue planes into ``out`` (leading axis = channel)."""
    h6 = h / out.dtype.type(60)
    vs = v * s
    k = np.empty_like(h6)
    for c, n in enumerate((5, 3, 1)):
        np.subtract(h6, 6 - n, out=k)
        np.add(k, 6, out=k, where=k < 0)
        np.minimum(k, 4 - k, out=k)
        np.clip(k, 0, 1, out=k)
        k *= vs
        np.subtract(v, k, out=out[c])
    return out


def _rgb_array(h, s, v, dtype, axis):
    shape = list(h.shape)
    shape.insert(axis % (h.ndim + 1), 3)
    out = np.empty(shape, dtype)
    _rgb_components(h, s, v, np.moveaxis(out, axis, 0))
    return out


def rgb_to_hsv(rgb, axis: int = -1) -> np.ndarray:
    """Convert RGB intensities to HSV.

    Ties between channels sharing the maximum resolve to the first case in the
    order ``max == min``, ``max == r`` (``g >= b`` then ``g < b``),
    ``max == g``, ``max == b``.
    """
    rgb = to_float(rgb)
    _check_channels(rgb, axis)
    if rgb.ndim == 1:
        return rgb_to_hsv(rgb[None])[0]
    return np.stack(_hsv_components(rgb, axis), axis=axis)


def hsv_to_rgb(hsv, axis: int = -1) -> np.ndarray:
    """Inverse of :func:`rgb_to_hsv`.

    Uses the branch-free form ``c_n = v - v s clip(min(k, 4 - k), 0, 1)`` with
    ``k = (n + h / 60) mod 6`` and ``n = 5, 3, 1`` for red, green, blue.
    The shift is applied as ``h / 60 - (6 - n)`` wrapped into ``[0, 6)``,
    which rounds less than adding ``n`` first.
    """
    hsv = to_float(hsv)
    _check_channels(hsv, axis)
    if hsv.ndim == 1:
        return hsv_to_rgb(hsv[None])[0]
    h, s, v = np.moveaxis(hsv, axis, 0)
    h = np.mod(h, 360)
    return _rgb_array(h, s, v, hsv.dtype, axis)


def hue_jitter(video, delta_h: float, axis: int = -3) -> np.ndarray:
    """Rotate the hue of every pixel by ``delta_h`` degrees.

    Every pixel goes to HSV and back, which is what makes the operation
    expensive.  Unsigned 8-bit input is returned as unsigned 8-bit.
    """
    if not -180 <= delta_h <= 180:
        raise ValueError(f"delta_h must lie in [-180, 180], got {delta_h}")
    video = np.asarray(video)
    _check_channels(video, axis)
    x = to_float(video)
    h, s, v = _hsv_components(x, axis)
    h += x.dtype.type(delta_h)
    np.mod(h, 360, out=h)
    out = _rgb_array(h, s, v, x.dtype, axis)
    if video.dtype == np.uint8:
        return to_uint8(out)
    return out
