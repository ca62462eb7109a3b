"""Command-line entry point: ``tissuepheno <subcommand> ...``.

Exit codes: 0 success, 2 invalid input or configuration, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import dataclasses
import json
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import ConfigError, TissuePhenoError
from .pipeline import (
    RunConfig,
    analyze_stage,
    exit_code,
    features_stage,
    parse_k_range,
    phenotype_stage,
    read_config_file,
    run_pipeline,
    tile_stage,
)

log = logging.getLogger("tissuepheno")


def _k_range(text: str):
    try:
        return parse_k_range(text)
    except ConfigError as exc:
        raise argparse.ArgumentTypeError(str(exc)) from None


def _build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="tissuepheno", description=__doc__.splitlines()[0])
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--out", type=Path, help="output directory")
    common.add_argument("--seed", type=int)
    common.add_argument("--threads", type=int)
    common.add_argument("--config", type=Path, help="key = value settings file")

    t = sub.add_parser("tile", parents=[common], help="cell maps -> CF vectors")
    t.add_argument("--cells", type=Path)
    t.add_argument("--tile-size", type=float)
    t.add_argument("--edges", action="store_true", help="also write per-slide edge lists")

    ph = sub.add_parser("phenotype", parents=[common], help="CF vectors -> phenotype model")
    ph.add_argument("--cf", type=Path, required=True)
    ph.add_argument("--k", type=int)
    ph.add_argument("--k-range", type=_k_range)
    ph.add_argument("--restarts", type=int)

    f = sub.add_parser("features", parents=[common], help="assignments -> slide features")
    f.add_argument("--assignments", type=Path, required=True)
    f.add_argument("--model", type=Path, required=True)
    f.add_argument("--tissue", type=Path)
    f.add_argument("--cells", type=Path)
    f.add_argument("--tile-size", type=float)
    f.add_argument("--quadrat-size", type=float)

    a = sub.add_parser("analyze", parents=[common], help="features + clinical -> report")
    a.add_argument("--features", type=Path, required=True)
    a.add_argument("--clinical", type=Path)
    a.add_argument("--bootstrap", type=int)

    s = sub.add_parser("synth", parents=[common], help="write a synthetic fixture")
    s.add_argument("--slides", type=int, default=40)
    s.add_argument("--grid", default="8x8", help="tiles per slide, ROWSxCOLS")
    s.add_argument("--density", type=float, default=1000.0, help="cells per mm^2")

    r = sub.add_parser("run", parents=[common], help="all stages end to end")
    r.add_argument("--cells", type=Path)
    r.add_argument("--tissue", type=Path)
    r.add_argument("--clinical", type=Path)
    r.add_argument("--tile-size", type=float)
    r.add_argument("--k", type=int)
    r.add_argument("--k-range", type=_k_range)
    r.add_argument("--restarts", type=int)
    r.add_argument("--bootstrap", type=int)
    r.add_argument("--quadrat-size", type=float)
    r.add_argument("--stats", action=argparse.BooleanOptionalAction, default=None,
                   help="run the statistical analysis (default: when --clinical is given)")
    return p


_CONFIG_FIELDS = {f.name for f in dataclasses.fields(RunConfig)}


def resolve_config(args: argparse.Namespace) -> RunConfig:
    """Defaults, then the config file, then explicit flags."""
    settings = read_config_file(args.config) if args.config else {}
    for key, value in vars(args).items():
        if key in _CONFIG_FIELDS and value is not None:
            settings[key] = value
    return RunConfig(**settings)


def _cmd_tile(args, cfg: RunConfig):
    if cfg.cells is None:
        raise ConfigError("--cells is required")
    path = tile_stage(cfg.cells, cfg.out, cfg.tile_size, cfg.threads, edges=args.edges)
    print(path)


def _cmd_phenotype(args, cfg: RunConfig):
    model = phenotype_stage(args.cf, cfg.out, cfg.k, cfg.k_range, cfg.restarts, cfg.seed)
    print(f"k = {model.k}, total cost {model.total_cost:.6g}")


def _cmd_features(args, cfg: RunConfig):
    if cfg.tissue is None:
        raise ConfigError("--tissue is required")
    path = features_stage(args.assignments, args.model, cfg.tissue, cfg.out,
                          cells_dir=cfg.cells, tile_size=cfg.tile_size,
                          quadrat_size=cfg.effective_quadrat, threads=cfg.threads)
    print(path)


def _cmd_analyze(args, cfg: RunConfig):
    if cfg.clinical is None or not cfg.clinical.is_file():
        raise ConfigError(f"clinical table not found: {cfg.clinical}")
    report = analyze_stage(args.features, cfg.clinical, cfg.out, cfg.seed, cfg.bootstrap)
    print(f"analysed {report['n_slides']} slides")


def _cmd_synth(args, cfg: RunConfig):
    from .cellmap import write_cell_map, write_tissue_labels
    from .synth import generate_fixture, write_clinical

    try:
        rows, cols = (int(v) for v in args.grid.lower().split("x"))
    except ValueError:
        raise ConfigError(f"--grid must look like 8x8, got {args.grid!r}") from None
    fx = generate_fixture(n_slides=args.slides, seed=cfg.seed, grid=(rows, cols),
                          density=args.density)
    out = cfg.out
    (out / "cells").mkdir(parents=True, exist_ok=True)
    (out / "tissue").mkdir(parents=True, exist_ok=True)
    for cmap, grid in zip(fx.slides, fx.grids):
        write_cell_map(cmap, out / "cells" / f"{cmap.slide_id}.csv")
        write_tissue_labels(grid, out / "tissue" / f"{grid.slide_id}.csv")
    write_clinical(fx.cohort, out / "clinical.csv")
    with open(out / "truth.csv", "w", encoding="utf-8") as fh:
        fh.write("slide_id,tile_row,tile_col,planted\n")
        for sid in sorted(fx.truth):
            for (r, c), name in sorted(fx.truth[sid].items()):
                fh.write(f"{sid},{r},{c},{name}\n")
    (out / "run.cfg").write_text(
        "cells = cells\ntissue = tissue\nclinical = clinical.csv\n", encoding="utf-8")
    print(f"wrote {len(fx.slides)} slides to {out}")


def _cmd_run(args, cfg: RunConfig):
    manifest = run_pipeline(cfg)
    print(json.dumps({"chosen_k": manifest["chosen_k"], "config_hash": manifest["config_hash"],
                      "out": str(cfg.out)}))


_COMMANDS = {
    "tile": _cmd_tile,
    "phenotype": _cmd_phenotype,
    "features": _cmd_features,
    "analyze": _cmd_analyze,
    "synth": _cmd_synth,
    "run": _cmd_run,
}


def main(argv=None) -> int:
    args = _build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = resolve_config(args)
        _COMMANDS[args.command](args, cfg)
    except TissuePhenoError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code(exc)
    return 0


if __name__ == "__main__":
    sys.exit(main())
