"""Online dictionary learning with block-coordinate atom updates.

The learner keeps the running statistics ``A = sum x x'`` and
``B = sum p x'`` of all codes seen so far and, after each new patch, does
one warm-started sweep of column-wise minimisation of the surrogate

    F(D) = 0.5 Tr(D'D A) - Tr(D'B)

over dictionaries whose atoms have norm at most one.
"""

from __future__ import annotations

import logging
import math
import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, DegenerateError, DivergenceError, FormatError, LengthError, StagnationError
from .patchgrid import GridPlan, extract_patches
from .solvers import BpdnProblem, SolverConfig, estimate_lipschitz, solve

log = logging.getLogger(__name__)

ATOM_SKIP_THRESHOLD = 1e-12
DEFAULT_MU = 2.0**-8


def init_dct_dictionary(m: int, n: int) -> np.ndarray:
    """Overcomplete separable DCT dictionary of shape ``(m, n)``.

    ``m`` must be a square ``h*h`` (patch side ``h``) and ``n`` a square
    ``k*k`` with ``k >= h``.  The 1-D factor keeps the first ``h`` samples
    of each of the ``k`` DCT-II basis vectors; atoms are Kronecker products
    of two such columns, normalised to unit length.  Column 0 is the
    constant atom.
    """
    h, k = math.isqrt(m), math.isqrt(n)
    if h * h != m or k * k != n or h < 1 or k < h:
        raise ArgumentError(f"DCT dictionary needs square m <= square n, got m={m}, n={n}")
    samples = np.arange(h)[:, None]
    freqs = np.arange(k)[None, :]
    C = np.cos(np.pi * (2 * samples + 1) * freqs / (2 * k))
    D = np.kron(C, C)
    return D / np.linalg.norm(D, axis=0)


@dataclass
class LearnState:
    """Running sufficient statistics of the online learner."""

    A: np.ndarray
    B: np.ndarray
    k: int = 0

    @classmethod
    def zeros(cls, m: int, n: int) -> "LearnState":
        return cls(np.zeros((n, n)), np.zeros((m, n)), 0)


def accumulate(state: LearnState, x, p) -> LearnState:
    """Add one (code, patch) pair: ``A += x x'``, ``B += p x'``."""
    x = np.asarray(x, dtype=np.float64).ravel()
    p = np.asarray(p, dtype=np.float64).ravel()
    n = state.A.shape[0]
    m = state.B.shape[0]
    if x.shape[0] != n or p.shape[0] != m:
        raise ArgumentError(f"expected code of length {n} and patch of length {m}")
    return LearnState(state.A + np.outer(x, x), state.B + np.outer(p, x), state.k + 1)


def update_dictionary(D, state: LearnState, sweeps: int = 1, threshold: float = ATOM_SKIP_THRESHOLD) -> np.ndarray:
    """Block-coordinate descent on the surrogate, one atom at a time.

    Atoms whose ``A_jj`` does not exceed ``threshold`` never received a
    coefficient and are left bit-for-bit unchanged.
    """
    D = np.array(D, dtype=np.float64)
    A, B = state.A, state.B
    if A.shape != (D.shape[1], D.shape[1]) or B.shape != D.shape:
        raise ArgumentError(f"state shapes {A.shape}, {B.shape} do not match dictionary {D.shape}")
    active = np.flatnonzero(np.diag(A) > threshold)
    for _ in range(sweeps):
        for j in active:
            u = (B[:, j] - D @ A[:, j]) / A[j, j] + D[:, j]
            D[:, j] = u / max(np.linalg.norm(u), 1.0)
    return D


def surrogate_objective(D, state: LearnState) -> float:
    if state.k == 0:
        raise DegenerateError("surrogate objective needs at least one accumulated sample")
    D = np.asarray(D, dtype=np.float64)
    return (0.5 * float(np.sum((D.T @ D) * state.A)) - float(np.sum(D * state.B))) / state.k


def surrogate_gradient(D, state: LearnState) -> np.ndarray:
    """``D A - B``, the gradient of ``k * surrogate_objective``."""
    D = np.asarray(D, dtype=np.float64)
    if state.A.shape[0] != D.shape[1] or state.B.shape != D.shape:
        raise ArgumentError("state shapes do not match dictionary")
    return D @ state.A - state.B


# --------------------------------------------------------------------------
# Online learning
# --------------------------------------------------------------------------


@dataclass
class LearnConfig:
    mu: float = DEFAULT_MU
    solver: SolverConfig = field(default_factory=SolverConfig)
    draw_order: str = "ordered"
    seed: int = 0
    update_sweeps: int = 1
    snapshot_every: int | None = None

    def __post_init__(self):
        if not self.mu > 0:
            raise ArgumentError("mu must be positive")
        if self.update_sweeps < 1:
            raise ArgumentError("update_sweeps must be >= 1")
        if self.draw_order not in ("ordered", "random"):
            raise ArgumentError(f"draw_order must be 'ordered' or 'random', got {self.draw_order!r}")


@dataclass
class LearnResult:
    snapshots: list
    state: LearnState
    patches_per_image: list
    skipped: list = field(default_factory=list)
    labels: list = field(default_factory=list)

    @property
    def final(self) -> np.ndarray:
        return self.snapshots[-1]


def learn_from_patches(patch_sets, cfg: LearnConfig, D0) -> LearnResult:
    """Run the online learner over a sequence of patch matrices.

    Each element of ``patch_sets`` is an ``(m, count)`` matrix; a snapshot
    is taken after each one (and every ``cfg.snapshot_every`` patches if
    set).  Patches whose sparse-coding solve fails are logged and skipped.
    """
    D = np.array(D0, dtype=np.float64)
    m, n = D.shape
    if m > n:
        warnings.warn(f"dictionary is not overcomplete ({m}x{n})", stacklevel=2)
    state = LearnState.zeros(m, n)
    snapshots, labels = [D.copy()], ["D0"]
    counts, skipped = [], []
    rng = np.random.default_rng(cfg.seed)
    L, v = estimate_lipschitz(D, return_vector=True)
    seen = 0
    for img_idx, P in enumerate(patch_sets):
        P = np.asarray(P, dtype=np.float64)
        if P.ndim != 2 or P.shape[0] != m:
            raise ArgumentError(f"patch matrix {img_idx} has shape {P.shape}, expected ({m}, count)")
        order = rng.permutation(P.shape[1]) if cfg.draw_order == "random" else range(P.shape[1])
        for col in order:
            p = P[:, col]
            try:
                code = solve(BpdnProblem(D, p, cfg.mu, lipschitz=L), cfg.solver)
            except (DivergenceError, StagnationError) as exc:
                log.warning("image %d patch %d skipped: %s", img_idx, col, exc)
                skipped.append((img_idx, int(col), str(exc)))
                continue
            x = code.x
            # in-place form of accumulate(); avoids reallocating A and B per patch
            state.A += np.outer(x, x)
            state.B += np.outer(p, x)
            state.k += 1
            D_new = update_dictionary(D, state, cfg.update_sweeps)
            if not np.array_equal(D_new, D):
                D = D_new
                L, v = estimate_lipschitz(D, v0=v, return_vector=True)
            seen += 1
            if cfg.snapshot_every and seen % cfg.snapshot_every == 0:
                snapshots.append(D.copy())
                labels.append(f"P{seen}")
        counts.append(P.shape[1])
        snapshots.append(D.copy())
        labels.append(f"D{img_idx + 1}")
    return LearnResult(snapshots, state, counts, skipped, labels)


def learn_online(images, cfg: LearnConfig, D0, plan: GridPlan | None = None) -> LearnResult:
    """Learn from gray images in the given order, one snapshot per image.

    ``plan`` defaults to 50%-overlap square patches matching ``D0``'s row
    count, planned per image.
    """
    from .patchgrid import plan_grid

    D0 = np.asarray(D0, dtype=np.float64)
    side = math.isqrt(D0.shape[0])

    def patches():
        for img in images:
            img = np.asarray(img, dtype=np.float64)
            grid = plan if plan is not None else plan_grid(img.shape[0], img.shape[1], side, 0.5)
            if grid.patch_dim != D0.shape[0]:
                raise ArgumentError(f"plan patch size {grid.patch_dim} does not match dictionary rows {D0.shape[0]}")
            yield extract_patches(img, grid)

    return learn_from_patches(patches(), cfg, D0)


# --------------------------------------------------------------------------
# Serialisation and rendering
# --------------------------------------------------------------------------

_MAGIC = b"SDIC"
_VERSION = 1
_HEADER = struct.Struct("<4sIII")
_MAX_ELEMENTS = 1 << 28


def save_dictionary(D) -> bytes:
    """Encode as ``SDIC`` v1: little-endian header then column-major f64."""
    D = np.asarray(D, dtype=np.float64)
    if D.ndim != 2:
        raise ArgumentError("dictionary must be 2-D")
    m, n = D.shape
    return _HEADER.pack(_MAGIC, _VERSION, m, n) + np.asfortranarray(D).astype("<f8").tobytes(order="F")


def load_dictionary(data: bytes) -> np.ndarray:
    if len(data) < _HEADER.size:
        raise LengthError("SDIC data shorter than its header")
    magic, version, m, n = _HEADER.unpack_from(data)
    if magic != _MAGIC:
        raise FormatError(f"bad SDIC magic {magic!r}")
    if version != _VERSION:
        raise FormatError(f"unsupported SDIC version {version}")
    if m < 1 or n < 1 or m * n > _MAX_ELEMENTS:
        raise FormatError(f"SDIC dimensions {m}x{n} out of range")
    payload = data[_HEADER.size :]
    if len(payload) != 8 * m * n:
        raise LengthError(f"SDIC payload is {len(payload)} bytes, expected {8 * m * n}")
    return np.frombuffer(payload, dtype="<f8").reshape((m, n), order="F").astype(np.float64)


def render_dictionary_mosaic(D, tile_cols: int | None = None, separator: float = 0.0) -> np.ndarray:
    """Tile atoms as square images, each rescaled to ``[0, 255]``.

    Tiles are separated (and framed) by 1-pixel lines.  A constant atom
    renders as uniform 127.5.
    """
    D = np.asarray(D, dtype=np.float64)
    m, n = D.shape
    side = math.isqrt(m)
    if side * side != m:
        raise ArgumentError(f"atom length {m} is not a perfect square")
    cols = tile_cols or math.ceil(math.sqrt(n))
    rows = math.ceil(n / cols)
    step = side + 1
    out = np.full((rows * step + 1, cols * step + 1), float(separator))
    for j in range(n):
        atom = D[:, j]
        lo, hi = atom.min(), atom.max()
        if hi - lo > 0:
            # clip guards against 255 + ulp, which the PNM writer rejects
            tile = np.clip((atom - lo) / (hi - lo) * 255.0, 0.0, 255.0)
        else:
            tile = np.full(m, 127.5)
        r, c = divmod(j, cols)
        out[1 + r * step : 1 + r * step + side, 1 + c * step : 1 + c * step + side] = tile.reshape(side, side)
    return out
