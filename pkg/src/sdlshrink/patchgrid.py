"""Overlapping patch layout, extraction and coverage-weighted reassembly."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError


@dataclass(frozen=True)
class GridPlan:
    """Anchor layout of square-stride patches over an image.

    The anchor grid tiles the top-left ``crop_h x crop_w`` region exactly;
    trailing rows/columns that no anchor reaches are ignored.
    """

    image_h: int
    image_w: int
    patch_h: int
    patch_w: int
    stride_h: int
    stride_w: int
    anchors_y: int
    anchors_x: int

    @property
    def crop_h(self) -> int:
        return (self.anchors_y - 1) * self.stride_h + self.patch_h

    @property
    def crop_w(self) -> int:
        return (self.anchors_x - 1) * self.stride_w + self.patch_w

    @property
    def count(self) -> int:
        return self.anchors_y * self.anchors_x

    @property
    def patch_dim(self) -> int:
        return self.patch_h * self.patch_w

    def anchors(self):
        """Top-left corners in row-major order."""
        for ay in range(self.anchors_y):
            for ax in range(self.anchors_x):
                yield ay * self.stride_h, ax * self.stride_w


def _stride(patch: int, overlap_fraction: float) -> int:
    raw = patch * (1.0 - overlap_fraction)
    stride = int(round(raw))
    if stride < 1 or abs(raw - stride) > 1e-9:
        raise ArgumentError(f"patch {patch} with overlap {overlap_fraction} gives non-integral stride {raw}")
    return stride


def plan_grid(img_h: int, img_w: int, patch: int, overlap_fraction: float = 0.5) -> GridPlan:
    """Plan square patches of side ``patch`` sharing ``overlap_fraction`` of
    their extent with each neighbour.

    >>> plan = plan_grid(112, 112, 6, 0.5)
    >>> plan.stride_h, plan.crop_h, plan.count
    (3, 111, 1296)
    """
    if patch < 1:
        raise ArgumentError("patch size must be >= 1")
    if not 0.0 <= overlap_fraction < 1.0:
        raise ArgumentError("overlap fraction must lie in [0, 1)")
    if patch > img_h or patch > img_w:
        raise ArgumentError(f"patch {patch} exceeds image {img_h}x{img_w}")
    stride = _stride(patch, overlap_fraction)
    return GridPlan(
        image_h=img_h,
        image_w=img_w,
        patch_h=patch,
        patch_w=patch,
        stride_h=stride,
        stride_w=stride,
        anchors_y=(img_h - patch) // stride + 1,
        anchors_x=(img_w - patch) // stride + 1,
    )


def extract_patches(img: np.ndarray, plan: GridPlan) -> np.ndarray:
    """Return an ``(patch_dim, count)`` matrix of row-major flattened patches."""
    img = np.asarray(img, dtype=np.float64)
    if img.shape != (plan.image_h, plan.image_w):
        raise ArgumentError(f"image shape {img.shape} does not match plan {(plan.image_h, plan.image_w)}")
    windows = np.lib.stride_tricks.sliding_window_view(img, (plan.patch_h, plan.patch_w))
    windows = windows[:: plan.stride_h, :: plan.stride_w][: plan.anchors_y, : plan.anchors_x]
    return np.ascontiguousarray(windows.reshape(plan.count, plan.patch_dim).T)


def coverage_map(plan: GridPlan) -> np.ndarray:
    """Number of patches covering each pixel of the crop region."""
    cov = np.zeros((plan.crop_h, plan.crop_w), dtype=np.int64)
    for y, x in plan.anchors():
        cov[y : y + plan.patch_h, x : x + plan.patch_w] += 1
    return cov


def assemble_image(patches: np.ndarray, plan: GridPlan) -> np.ndarray:
    """Average overlapping patches back into a ``crop_h x crop_w`` image."""
    patches = np.asarray(patches, dtype=np.float64)
    if patches.shape != (plan.patch_dim, plan.count):
        raise ArgumentError(f"patch matrix shape {patches.shape} does not match plan {(plan.patch_dim, plan.count)}")
    acc = np.zeros((plan.crop_h, plan.crop_w))
    for k, (y, x) in enumerate(plan.anchors()):
        acc[y : y + plan.patch_h, x : x + plan.patch_w] += patches[:, k].reshape(plan.patch_h, plan.patch_w)
    return acc / coverage_map(plan)


def crop(img: np.ndarray, plan: GridPlan) -> np.ndarray:
    """The region of ``img`` that the plan reconstructs."""
    return np.asarray(img)[: plan.crop_h, : plan.crop_w]
