"""Deterministic synthetic mini-corpus used in place of natural photographs.

Six 112x112 gray images mixing gradients, oriented gratings, soft blobs,
edges and smoothed noise, so that learned atoms have structure to find.
"""

from __future__ import annotations

from pathlib import Path

import numpy as np

from .imageio import write_image

CORPUS_SEED = 20240
CORPUS_SIZE = 112
CORPUS_COUNT = 6


def _smooth_noise(rng, size, passes):
    z = rng.standard_normal((size, size))
    kernel = np.array([1.0, 4.0, 6.0, 4.0, 1.0]) / 16.0
    for _ in range(passes):
        z = np.apply_along_axis(lambda r: np.convolve(np.pad(r, 2, mode="wrap"), kernel, "valid"), 0, z)
        z = np.apply_along_axis(lambda r: np.convolve(np.pad(r, 2, mode="wrap"), kernel, "valid"), 1, z)
    return z / (np.abs(z).max() + 1e-12)


def _to_range(img):
    lo, hi = img.min(), img.max()
    return 20.0 + 215.0 * (img - lo) / (hi - lo)


def make_image(index: int, seed: int = CORPUS_SEED, size: int = CORPUS_SIZE) -> np.ndarray:
    rng = np.random.default_rng([seed, index])
    yy, xx = np.mgrid[0:size, 0:size] / size
    theta = rng.uniform(0, np.pi)
    img = 0.6 * (np.cos(theta) * xx + np.sin(theta) * yy)
    for _ in range(rng.integers(1, 4)):
        ang = rng.uniform(0, np.pi)
        freq = rng.uniform(3, 12)
        phase = rng.uniform(0, 2 * np.pi)
        img += rng.uniform(0.1, 0.4) * np.cos(2 * np.pi * freq * (np.cos(ang) * xx + np.sin(ang) * yy) + phase)
    for _ in range(rng.integers(2, 6)):
        cy, cx = rng.uniform(0, 1, 2)
        r = rng.uniform(0.05, 0.2)
        z = ((yy - cy) ** 2 + (xx - cx) ** 2 - r * r) / (0.1 * r * r)
        img += rng.uniform(-0.6, 0.6) * 0.5 * (1.0 - np.tanh(0.5 * z))
    for _ in range(rng.integers(0, 3)):
        ang = rng.uniform(0, 2 * np.pi)
        off = rng.uniform(0.2, 0.8)
        img += rng.uniform(0.2, 0.5) * ((np.cos(ang) * (xx - off) + np.sin(ang) * (yy - off)) > 0)
    img += 0.25 * _smooth_noise(rng, size, passes=int(rng.integers(1, 4)))
    return _to_range(img)


def make_corpus(seed: int = CORPUS_SEED, count: int = CORPUS_COUNT, size: int = CORPUS_SIZE):
    """List of ``(name, image)`` pairs, named ``img01`` ... in draw order."""
    return [(f"img{i + 1:02d}", make_image(i, seed, size)) for i in range(count)]


def write_corpus(directory, seed: int = CORPUS_SEED, count: int = CORPUS_COUNT, size: int = CORPUS_SIZE):
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    paths = []
    for name, img in make_corpus(seed, count, size):
        path = directory / f"{name}.pgm"
        write_image(path, img)
        paths.append(path)
    return paths


def bundled_corpus_dir() -> Path:
    """Directory of the pre-generated corpus shipped with the package."""
    return Path(__file__).parent / "data" / "minicorpus"
