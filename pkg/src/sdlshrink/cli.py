"""Command-line front end: ``learn``, ``reconstruct``, ``evaluate``, ``render-dict``.

Settings come from an optional JSON file (``--config``) overlaid by flags;
flags win.  Every command writes its outputs only after all computation
succeeded, and on failure prints a diagnostic to stderr and exits nonzero.
"""

from __future__ import annotations

import argparse
import glob
import hashlib
import json
import logging
import math
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from . import __version__
from .corpus import write_corpus
from .dictlearn import (
    DEFAULT_MU,
    LearnConfig,
    init_dct_dictionary,
    learn_from_patches,
    load_dictionary,
    render_dictionary_mosaic,
    save_dictionary,
)
from .errors import ConfigError, SdlError, UsageError
from .evalharness import CSV_HEADER, aggregate, evaluate_image, records_to_csv, stage_key
from .imageio import load_gray, write_image
from .patchgrid import extract_patches, plan_grid
from .solvers import DEFAULT_MAX_ITER, RECON_MAX_ITER, SolverConfig, canonical_method, estimate_lipschitz

log = logging.getLogger("sdlshrink")

IMAGE_SUFFIXES = (".pgm", ".ppm", ".pnm")


@dataclass
class RunConfig:
    """Settings shared by all commands.

    ``eps`` and ``max_iter`` of ``None`` select the per-solver defaults of
    the command (learning or reconstruction).  ``resize_to`` of 0 keeps
    native resolution.  ``n_atoms`` sizes the initial DCT dictionary.
    """

    data_dir: str | None = None
    patch: int = 6
    overlap: float = 0.5
    resize_to: int = 112
    mu: float = DEFAULT_MU
    solver: str = "FISTA"
    eps: float | None = None
    max_iter: int | None = None
    method_params: dict = field(default_factory=dict)
    draw_order: str = "ordered"
    seed: int = 0
    n_atoms: int = 256
    output_dir: str = "."

    def solvers(self) -> list[str]:
        names = [canonical_method(s.strip()) for s in str(self.solver).split(",") if s.strip()]
        if not names:
            raise ConfigError("no solver given")
        return names

    def learn_solver(self) -> SolverConfig:
        return SolverConfig(self.solvers()[0], eps_rel=self.eps, max_iter=self.max_iter or DEFAULT_MAX_ITER,
                            method_params=dict(self.method_params))

    def recon_solver(self, method: str) -> SolverConfig:
        opts = {"max_iter": self.max_iter or RECON_MAX_ITER}
        if self.eps is not None:
            opts["eps_rel"] = self.eps
        if self.method_params:
            opts["method_params"] = dict(self.method_params)
        return SolverConfig.for_reconstruction(method, **opts)

    def digest(self) -> str:
        """SHA-256 of the settings that influence results (not the output path)."""
        d = asdict(self)
        d.pop("output_dir")
        return hashlib.sha256(json.dumps(d, sort_keys=True).encode()).hexdigest()


_CONFIG_KEYS = {f.name for f in fields(RunConfig)}
# flag dest -> RunConfig field
_FLAG_FIELDS = {"out": "output_dir", "solver": "solver", "mu": "mu", "seed": "seed", "patch": "patch",
                "overlap": "overlap", "resize": "resize_to", "order": "draw_order", "eps": "eps",
                "max_iter": "max_iter", "atoms": "n_atoms"}


def build_config(args: argparse.Namespace) -> RunConfig:
    values: dict = {}
    if getattr(args, "config", None):
        try:
            loaded = json.loads(Path(args.config).read_text())
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {args.config}: {exc}") from exc
        if not isinstance(loaded, dict):
            raise ConfigError("config file must hold a JSON object")
        unknown = set(loaded) - _CONFIG_KEYS
        if unknown:
            raise ConfigError(f"unknown config keys: {sorted(unknown)}")
        values.update(loaded)
    for dest, name in _FLAG_FIELDS.items():
        v = getattr(args, dest, None)
        if v is not None:
            values[name] = v
    cfg = RunConfig(**values)
    if cfg.patch < 1 or cfg.resize_to < 0 or cfg.n_atoms < 1:
        raise ConfigError("patch and n_atoms must be positive and resize non-negative")
    if cfg.draw_order not in ("ordered", "random"):
        raise ConfigError(f"draw order must be 'ordered' or 'random', got {cfg.draw_order!r}")
    if not 0 <= cfg.seed < 2**64:
        raise ConfigError("seed must be an unsigned 64-bit integer")
    cfg.solvers()
    return cfg


def list_images(directory) -> list[Path]:
    d = Path(directory)
    if not d.is_dir():
        raise UsageError(f"data directory {directory} does not exist")
    files = sorted(p for p in d.iterdir() if p.is_file() and p.suffix.lower() in IMAGE_SUFFIXES)
    if not files:
        raise UsageError(f"no PNM images in {directory}")
    return files


def _load(path: Path, cfg: RunConfig) -> np.ndarray:
    try:
        return load_gray(path, cfg.resize_to)
    except SdlError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def _plan(img, cfg: RunConfig, rows: int):
    if rows != cfg.patch * cfg.patch:
        raise ConfigError(f"dictionary has {rows} rows but {cfg.patch}x{cfg.patch} patches have {cfg.patch ** 2}")
    return plan_grid(img.shape[0], img.shape[1], cfg.patch, cfg.overlap)


def _read_dictionary(path) -> np.ndarray:
    try:
        data = Path(path).read_bytes()
    except OSError as exc:
        raise UsageError(f"cannot read dictionary {path}: {exc.strerror}") from exc
    try:
        return load_dictionary(data)
    except SdlError as exc:
        raise type(exc)(f"{path}: {exc}") from exc


def _split_of(path: Path) -> str:
    return "train" if path.stem.lower().startswith("train") else "test"


# --------------------------------------------------------------------------
# Commands
# --------------------------------------------------------------------------


def cmd_learn(cfg: RunConfig) -> dict:
    if not cfg.data_dir:
        raise UsageError("learn needs a data directory")
    files = list_images(cfg.data_dir)
    images = [_load(p, cfg) for p in files]
    plans = [plan_grid(im.shape[0], im.shape[1], cfg.patch, cfg.overlap) for im in images]
    m = cfg.patch * cfg.patch
    side = math.isqrt(cfg.n_atoms)
    if side * side != cfg.n_atoms or side < cfg.patch:
        raise ConfigError(f"n_atoms must be a square of at least {m}, got {cfg.n_atoms}")
    D0 = init_dct_dictionary(m, cfg.n_atoms)
    lcfg = LearnConfig(mu=cfg.mu, solver=cfg.learn_solver(), draw_order=cfg.draw_order, seed=cfg.seed)
    # per-image plans so mixed sizes work when resizing is disabled
    result = learn_from_patches((extract_patches(im, pl) for im, pl in zip(images, plans)), lcfg, D0)

    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    width = max(2, len(str(len(images))))
    names = []
    for k, D in enumerate(result.snapshots):
        name = f"D{k:0{width}d}.sdic"
        (out / name).write_bytes(save_dictionary(D))
        names.append(name)
    manifest = {
        "version": __version__,
        "config": {k: v for k, v in asdict(cfg).items() if k != "output_dir"},
        "config_hash": cfg.digest(),
        "images": [p.name for p in files],
        "patches_per_image": result.patches_per_image,
        "total_patches": int(sum(result.patches_per_image)),
        "skipped_patches": len(result.skipped),
        "snapshots": names,
    }
    (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return manifest


def cmd_reconstruct(cfg: RunConfig, dict_file, image, out_image=None, metrics_file=None, stage=None):
    D = _read_dictionary(dict_file)
    image = Path(image)
    img = _load(image, cfg)
    plan = _plan(img, cfg, D.shape[0])
    method = cfg.solvers()[0]
    record, rec = evaluate_image(img, D, cfg.recon_solver(method), plan, stage=stage or Path(dict_file).stem,
                                 image_id=image.stem, split=_split_of(image), mu=cfg.mu)
    if out_image is not None:
        # the reconstruction may overshoot the pixel range slightly
        write_image(out_image, np.clip(rec.image, 0.0, 255.0))
    if metrics_file is not None:
        path = Path(metrics_file)
        fresh = not path.exists() or path.stat().st_size == 0
        with path.open("a") as fh:
            fh.write(records_to_csv([record], header=fresh))
    return record


def cmd_evaluate(cfg: RunConfig, dict_glob: str, eval_dir):
    dict_files = sorted(glob.glob(dict_glob), key=lambda p: stage_key(Path(p).stem))
    if not dict_files:
        raise UsageError(f"no dictionary files match {dict_glob!r}")
    files = list_images(eval_dir)
    images = [(p, _load(p, cfg)) for p in files]
    dicts = [(Path(f).stem, _read_dictionary(f)) for f in dict_files]
    records = []
    for method in cfg.solvers():
        scfg = cfg.recon_solver(method)
        for stage, D in dicts:
            L = estimate_lipschitz(D)
            for path, img in images:
                plan = _plan(img, cfg, D.shape[0])
                rec, _ = evaluate_image(img, D, scfg, plan, stage=stage, image_id=path.stem,
                                        split=_split_of(path), mu=cfg.mu, lipschitz=L)
                log.info("%s %s %s ReEr=%.4g", method, stage, path.stem, rec.re_er)
                records.append(rec)
    agg = aggregate(records)
    out = Path(cfg.output_dir)
    out.mkdir(parents=True, exist_ok=True)
    (out / "metrics.csv").write_text(records_to_csv(records))
    (out / "metrics_aggregate.csv").write_text(records_to_csv(agg))
    return records, agg


def cmd_render_dict(dict_file, out) -> np.ndarray:
    D = _read_dictionary(dict_file)
    side = math.isqrt(D.shape[0])
    if side * side != D.shape[0]:
        raise ConfigError(f"atom length {D.shape[0]} is not a perfect square")
    mosaic = render_dictionary_mosaic(D)
    write_image(out, mosaic)
    return mosaic


# --------------------------------------------------------------------------
# Argument parsing
# --------------------------------------------------------------------------


def _common(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="JSON file with RunConfig fields")
    p.add_argument("--out", help="output directory")
    p.add_argument("--solver", help="solver name (evaluate accepts a comma list)")
    p.add_argument("--mu", type=float)
    p.add_argument("--seed", type=int)
    p.add_argument("--patch", type=int)
    p.add_argument("--overlap", type=float)
    p.add_argument("--resize", type=int, help="square side to resize to; 0 keeps native size")
    p.add_argument("--order", choices=("ordered", "random"))
    p.add_argument("--eps", type=float, help="relative stopping tolerance")
    p.add_argument("--max-iter", dest="max_iter", type=int)
    p.add_argument("--atoms", type=int, help="number of dictionary atoms (square)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="sdlshrink", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=__version__)
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("learn", help="learn a dictionary online from a directory of images")
    p.add_argument("data_dir", nargs="?")
    _common(p)

    p = sub.add_parser("reconstruct", help="reconstruct one image patch-wise")
    p.add_argument("dict_file")
    p.add_argument("image")
    p.add_argument("--output", help="reconstructed PGM path")
    p.add_argument("--metrics", help="CSV file to append the metrics row to")
    p.add_argument("--stage", help="stage label (default: dictionary file stem)")
    _common(p)

    p = sub.add_parser("evaluate", help="evaluate dictionary stages on a directory of images")
    p.add_argument("dict_glob")
    p.add_argument("eval_dir")
    _common(p)

    p = sub.add_parser("render-dict", help="render dictionary atoms as a PGM mosaic")
    p.add_argument("dict_file")
    p.add_argument("output")

    p = sub.add_parser("make-corpus", help="write the synthetic mini-corpus")
    p.add_argument("directory")
    p.add_argument("--seed", type=int, default=20240)
    p.add_argument("--count", type=int, default=6)
    p.add_argument("--size", type=int, default=112)
    return parser


def run(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s: %(message)s")
    if args.command == "render-dict":
        cmd_render_dict(args.dict_file, args.output)
    elif args.command == "make-corpus":
        for p in write_corpus(args.directory, args.seed, args.count, args.size):
            print(p)
    else:
        cfg = build_config(args)
        if args.command == "learn":
            if args.data_dir:
                cfg.data_dir = args.data_dir
            manifest = cmd_learn(cfg)
            print(f"{len(manifest['snapshots'])} snapshots, {manifest['total_patches']} patches -> {cfg.output_dir}")
        elif args.command == "reconstruct":
            record = cmd_reconstruct(cfg, args.dict_file, args.image, args.output, args.metrics, args.stage)
            sys.stdout.write(",".join(CSV_HEADER) + "\n" + records_to_csv([record], header=False))
        elif args.command == "evaluate":
            records, agg = cmd_evaluate(cfg, args.dict_glob, args.eval_dir)
            sys.stdout.write(records_to_csv(agg))
    return 0


def main(argv=None) -> int:
    try:
        return run(argv)
    except UsageError as exc:
        print(f"sdlshrink: usage error: {exc}", file=sys.stderr)
        return 2
    except SdlError as exc:
        print(f"sdlshrink: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1
    except OSError as exc:
        print(f"sdlshrink: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
