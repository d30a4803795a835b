"""Portable anymap I/O, grayscale conversion and resampling.

Images are plain float64 numpy arrays with intensities in ``[0, 255]``:
shape ``(H, W)`` for gray images and ``(H, W, 3)`` for RGB.  Rounding to
integers happens only when writing.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .errors import ArgumentError, FormatError, LengthError, RangeError, UnsupportedError

_MAGICS = {b"P2": (1, True), b"P3": (3, True), b"P5": (1, False), b"P6": (3, False)}
_LUMA = np.array([0.299, 0.587, 0.114])


def _header_tokens(buf: bytes, count: int):
    """Read ``count`` whitespace-separated header tokens, skipping comments.

    Returns the tokens and the offset just past the single whitespace byte
    that terminates the last token.
    """
    tokens = []
    i, n = 0, len(buf)
    while len(tokens) < count:
        while i < n and buf[i : i + 1].isspace():
            i += 1
        if i < n and buf[i : i + 1] == b"#":
            while i < n and buf[i : i + 1] not in (b"\n", b"\r"):
                i += 1
            continue
        if i >= n:
            raise FormatError("truncated PNM header")
        j = i
        while j < n and not buf[j : j + 1].isspace() and buf[j : j + 1] != b"#":
            j += 1
        tokens.append(buf[i:j])
        i = j
    if i == n:
        return tokens, i
    if not buf[i : i + 1].isspace():
        raise FormatError("PNM header must end with a whitespace byte")
    return tokens, i + 1


def read_pnm(data: bytes) -> np.ndarray:
    """Decode a P2/P3/P5/P6 image into a float array.

    Parameters
    ----------
    data : bytes
        Complete file contents.

    Returns
    -------
    ndarray
        ``(H, W)`` for P2/P5, ``(H, W, 3)`` for P3/P6.
    """
    magic = bytes(data[:2])
    if magic not in _MAGICS:
        raise FormatError(f"unknown PNM magic {magic!r}")
    channels, ascii_payload = _MAGICS[magic]
    tokens, offset = _header_tokens(bytes(data[2:]), 3)
    try:
        width, height, maxval = (int(t) for t in tokens)
    except ValueError as exc:
        raise FormatError(f"non-numeric PNM header field: {exc}") from None
    if width < 1 or height < 1 or maxval < 1:
        raise FormatError("PNM dimensions and maxval must be positive")
    if maxval > 255:
        raise UnsupportedError(f"maxval {maxval} > 255 is not supported")
    expected = width * height * channels
    body = bytes(data[2 + offset :])

    if ascii_payload:
        fields = []
        for line in body.splitlines():
            fields.extend(line.split(b"#", 1)[0].split())
        if len(fields) != expected:
            raise LengthError(f"expected {expected} samples, found {len(fields)}")
        try:
            values = np.array([int(f) for f in fields], dtype=np.float64)
        except ValueError:
            raise FormatError("non-integer sample in ASCII payload") from None
    else:
        if len(body) != expected:
            raise LengthError(f"expected {expected} payload bytes, found {len(body)}")
        values = np.frombuffer(body, dtype=np.uint8).astype(np.float64)

    if np.any(values > maxval):
        raise FormatError("sample exceeds declared maxval")
    if maxval != 255:
        values = values * (255.0 / maxval)
    shape = (height, width) if channels == 1 else (height, width, 3)
    return values.reshape(shape)


def _check_image(img: np.ndarray) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim == 2 or (img.ndim == 3 and img.shape[2] == 3):
        if img.shape[0] < 1 or img.shape[1] < 1:
            raise ArgumentError("image must be non-empty")
        return img
    raise ArgumentError(f"expected (H, W) or (H, W, 3) array, got shape {img.shape}")


def write_pnm(img: np.ndarray, ascii: bool = False) -> bytes:
    """Encode a gray (P5/P2) or RGB (P6/P3) image with maxval 255."""
    img = _check_image(img)
    if not np.all(np.isfinite(img)) or img.min() < 0.0 or img.max() > 255.0:
        raise RangeError("intensities must lie in [0, 255]")
    q = np.floor(img + 0.5).astype(np.uint8)
    height, width = img.shape[:2]
    rgb = img.ndim == 3
    magic = {(False, False): "P5", (False, True): "P2", (True, False): "P6", (True, True): "P3"}[(rgb, ascii)]
    header = f"{magic}\n{width} {height}\n255\n".encode("ascii")
    if not ascii:
        return header + q.tobytes()
    rows = q.reshape(height, -1)
    return header + b"".join(" ".join(map(str, r)).encode("ascii") + b"\n" for r in rows)


def to_grayscale(img: np.ndarray) -> np.ndarray:
    """Rec. 601 luma of an ``(H, W, 3)`` image."""
    img = _check_image(img)
    if img.ndim != 3:
        raise ArgumentError("to_grayscale expects an RGB image")
    return img @ _LUMA


def _resample_axis(img: np.ndarray, new_len: int, axis: int) -> np.ndarray:
    old_len = img.shape[axis]
    if new_len == old_len:
        return img
    # half-pixel-centred sampling positions, clamped at the borders
    pos = (np.arange(new_len) + 0.5) * (old_len / new_len) - 0.5
    pos = np.clip(pos, 0.0, old_len - 1)
    lo = np.floor(pos).astype(int)
    hi = np.minimum(lo + 1, old_len - 1)
    w = pos - lo
    a = np.take(img, lo, axis=axis)
    b = np.take(img, hi, axis=axis)
    shape = [1] * img.ndim
    shape[axis] = new_len
    w = w.reshape(shape)
    return a * (1.0 - w) + b * w


def resize_bilinear(img: np.ndarray, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resize of a gray image using half-pixel-centred sampling."""
    img = _check_image(img)
    if img.ndim != 2:
        raise ArgumentError("resize_bilinear expects a gray image")
    if int(new_h) < 1 or int(new_w) < 1:
        raise ArgumentError("target dimensions must be >= 1")
    out = _resample_axis(img, int(new_h), 0)
    out = _resample_axis(out, int(new_w), 1)
    # convex weights keep values inside [0, 255]; clip only float round-off
    return np.clip(out, 0.0, 255.0)


def read_image(path) -> np.ndarray:
    return read_pnm(Path(path).read_bytes())


def write_image(path, img: np.ndarray, ascii: bool = False) -> None:
    Path(path).write_bytes(write_pnm(img, ascii=ascii))


def load_gray(path, size: int | None = None) -> np.ndarray:
    """Read a PNM file, convert to grayscale and resize to ``size x size``.

    ``size`` of ``None`` or ``0`` keeps the native resolution.
    """
    img = read_image(path)
    if img.ndim == 3:
        img = to_grayscale(img)
    if size:
        img = resize_bilinear(img, size, size)
    return img
