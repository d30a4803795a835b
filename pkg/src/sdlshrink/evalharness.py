"""Patch-wise image reconstruction, error measures and timing tables."""

from __future__ import annotations

import csv
import io
import logging
import re
import time
from dataclasses import asdict, dataclass, fields

import numpy as np

from .errors import ArgumentError, DegenerateError
from .patchgrid import GridPlan, assemble_image, crop, extract_patches
from .solvers import BpdnProblem, SolverConfig, estimate_lipschitz, solve

log = logging.getLogger(__name__)

CSV_HEADER = ["solver", "dict_stage", "image_id", "split", "ReEr", "AbEr", "InEr", "cpu_patch_mean", "cpu_image"]


@dataclass
class Reconstruction:
    image: np.ndarray
    codes: np.ndarray
    cpu_patch_mean: float
    cpu_image: float
    patch_cpu: np.ndarray
    iterations: np.ndarray


def reconstruct_image(img, D, cfg: SolverConfig, plan: GridPlan, mu: float = 2.0**-8, lipschitz: float | None = None) -> Reconstruction:
    """Code every patch of ``img`` against ``D`` and average the overlaps.

    The returned image covers the plan's crop region.  ``cpu_image`` is the
    process CPU time of the whole call (coding plus assembly); the per-patch
    mean counts solver time only.
    """
    t_image = time.process_time()
    D = np.asarray(D, dtype=np.float64)
    if D.shape[0] != plan.patch_dim:
        raise ArgumentError(f"dictionary rows {D.shape[0]} != patch dimension {plan.patch_dim}")
    P = extract_patches(img, plan)
    L = estimate_lipschitz(D) if lipschitz is None else lipschitz
    codes = np.zeros((D.shape[1], P.shape[1]))
    cpu = np.zeros(P.shape[1])
    iters = np.zeros(P.shape[1], dtype=np.int64)
    for k in range(P.shape[1]):
        t0 = time.process_time()
        result = solve(BpdnProblem(D, P[:, k], mu, lipschitz=L), cfg)
        cpu[k] = time.process_time() - t0
        codes[:, k] = result.x
        iters[k] = result.iterations
    rec = assemble_image(D @ codes, plan)
    cpu_image = time.process_time() - t_image
    return Reconstruction(rec, codes, float(cpu.mean()), cpu_image, cpu, iters)


def _pair(org, rec):
    org = np.asarray(org, dtype=np.float64)
    rec = np.asarray(rec, dtype=np.float64)
    if org.shape != rec.shape:
        raise ArgumentError(f"image shapes differ: {org.shape} vs {rec.shape}")
    return org, rec


def abs_error(org, rec) -> float:
    """Frobenius norm of the difference."""
    org, rec = _pair(org, rec)
    return float(np.linalg.norm(org - rec))


def rel_error(org, rec) -> float:
    org, rec = _pair(org, rec)
    denom = float(np.linalg.norm(org))
    if denom == 0.0:
        raise DegenerateError("relative error of an all-zero original is undefined")
    return float(np.linalg.norm(org - rec)) / denom


def inf_error(org, rec) -> float:
    """Largest absolute pixel deviation."""
    org, rec = _pair(org, rec)
    return float(np.max(np.abs(org - rec)))


@dataclass
class MetricsRecord:
    solver: str
    dict_stage: str
    image_id: str
    split: str
    re_er: float
    ab_er: float
    in_er: float
    cpu_patch_mean: float
    cpu_image: float


def evaluate_image(img, D, cfg: SolverConfig, plan: GridPlan, *, stage: str, image_id: str, split: str = "test",
                   mu: float = 2.0**-8, lipschitz: float | None = None):
    """Reconstruct one image and score it over the crop region.

    Returns ``(record, reconstruction)``.  An all-zero original gets
    ``ReEr = 0`` when reconstructed exactly (and raises otherwise).
    """
    rec = reconstruct_image(img, D, cfg, plan, mu=mu, lipschitz=lipschitz)
    org = crop(img, plan)
    ab = abs_error(org, rec.image)
    if np.any(org):
        re = rel_error(org, rec.image)
    elif ab == 0.0:
        re = 0.0
    else:
        raise DegenerateError(f"{image_id}: relative error of an all-zero original is undefined")
    record = MetricsRecord(cfg.method, stage, image_id, split, re, ab, inf_error(org, rec.image),
                           rec.cpu_patch_mean, rec.cpu_image)
    return record, rec


_STAGE_RE = re.compile(r"(\d+)")


def stage_key(label: str):
    """Natural sort key so that D2 sorts before D10."""
    return [int(t) if t.isdigit() else t for t in _STAGE_RE.split(label)]


def aggregate(records, by=("solver", "dict_stage")) -> list[MetricsRecord]:
    """Arithmetic means of every numeric field per group.

    Groups are returned sorted by their key (stage labels naturally
    ordered).  Fields not in ``by`` are reported as ``"*"`` unless all
    members agree.
    """
    records = list(records)
    if not records:
        raise ArgumentError("cannot aggregate an empty record set")
    valid = {f.name for f in fields(MetricsRecord)}
    if not set(by) <= valid:
        raise ArgumentError(f"unknown grouping keys {sorted(set(by) - valid)}")
    groups: dict[tuple, list[MetricsRecord]] = {}
    for r in records:
        groups.setdefault(tuple(getattr(r, k) for k in by), []).append(r)
    out = []
    for key in sorted(groups, key=lambda t: [stage_key(str(v)) for v in t]):
        members = groups[key]
        if not members:
            log.warning("empty group %s omitted", key)
            continue
        row = {}
        for f in fields(MetricsRecord):
            vals = [getattr(m, f.name) for m in members]
            if f.type in ("float", float):
                row[f.name] = float(np.mean(vals))
            else:
                row[f.name] = vals[0] if len(set(vals)) == 1 else "*"
        out.append(MetricsRecord(**row))
    return out


def _format_row(r: MetricsRecord) -> list[str]:
    return [r.solver, r.dict_stage, r.image_id, r.split,
            f"{r.re_er:.6g}", f"{r.ab_er:.6g}", f"{r.in_er:.6g}",
            f"{r.cpu_patch_mean:.6f}", f"{r.cpu_image:.6f}"]


def records_to_csv(records, header: bool = True) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    if header:
        writer.writerow(CSV_HEADER)
    for r in records:
        writer.writerow(_format_row(r))
    return buf.getvalue()


def records_from_csv(text: str) -> list[MetricsRecord]:
    rows = list(csv.reader(io.StringIO(text)))
    if not rows or rows[0] != CSV_HEADER:
        raise ArgumentError("metrics CSV header mismatch")
    out = []
    for row in rows[1:]:
        if not row:
            continue
        s, st, im, sp, re, ab, inf, cpm, cpi = row
        out.append(MetricsRecord(s, st, im, sp, float(re), float(ab), float(inf), float(cpm), float(cpi)))
    return out


def record_as_dict(r: MetricsRecord) -> dict:
    return asdict(r)
