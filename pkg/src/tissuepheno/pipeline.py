"""Staged pipeline: tile graphs, phenotypes, slide features, cohort analysis.

Every stage reads and writes plain CSV/JSON files, so a single ``run`` and
the stages invoked one by one produce the same bytes.  ``run`` stages all
outputs in a scratch directory and moves them into place only after every
stage has succeeded.
"""
from __future__ import annotations

import csv
import dataclasses
import hashlib
import json
import logging
import os
import shutil
import tempfile
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable

import numpy as np

from . import __version__
from .analysis import DEFAULT_BOOTSTRAP, analyze_cohort
from .cellgraph import N_PAIRS, PAIR_NAMES, tile_graph, write_edges_csv
from .cellmap import DEFAULT_TILE_SIZE, load_cell_map, load_tissue_labels, tile_cells
from .errors import ConfigError, NumericalError, ParseError, ValidationError
from .features import read_feature_table, slide_features, write_feature_table
from .phenotype import (
    DEFAULT_K_RANGE,
    DEFAULT_RESTARTS,
    PhenotypeModel,
    assign_many,
    kmedoids,
    load_model,
    save_model,
    select_k,
)
from .plotting import km_svg
from .synth import load_clinical

log = logging.getLogger(__name__)

CF_FILE = "cf_vectors.csv"
MODEL_FILE = "model.json"
K_SELECTION_FILE = "k_selection.json"
ASSIGNMENTS_FILE = "assignments.csv"
FEATURES_FILE = "features.csv"
REPORT_FILE = "report.json"
MANIFEST_FILE = "manifest.json"
CONFIG_FILE = "run.cfg"
KM_DIR = "km"
CF_HEADER = ["slide_id", "tile_row", "tile_col", "n_cells", *PAIR_NAMES, "edge_count"]
ASSIGNMENT_HEADER = ["slide_id", "tile_row", "tile_col", "phenotype"]


# ----------------------------------------------------------------------------
# configuration


@dataclass(frozen=True)
class RunConfig:
    cells: Path | None = None
    tissue: Path | None = None
    clinical: Path | None = None
    out: Path = Path("out")
    tile_size: float = DEFAULT_TILE_SIZE
    k: int | None = None
    k_range: tuple[int, int] = DEFAULT_K_RANGE
    restarts: int = DEFAULT_RESTARTS
    seed: int = 0
    threads: int = 1
    stats: bool | None = None  # None: analyse whenever a clinical table is given
    bootstrap: int = DEFAULT_BOOTSTRAP
    quadrat_size: float | None = None  # defaults to the tile size

    def __post_init__(self):
        if not self.tile_size > 0:
            raise ConfigError(f"tile_size must be positive, got {self.tile_size}")
        if self.k is not None and not 2 <= self.k <= 12:
            raise ConfigError(f"k must lie in [2, 12], got {self.k}")
        lo, hi = self.k_range
        if not 2 <= lo <= hi <= 12:
            raise ConfigError(f"k_range must satisfy 2 <= lo <= hi <= 12, got {self.k_range}")
        if self.restarts < 1:
            raise ConfigError(f"restarts must be >= 1, got {self.restarts}")
        if self.threads < 1:
            raise ConfigError(f"threads must be >= 1, got {self.threads}")
        if self.bootstrap < 0:
            raise ConfigError(f"bootstrap must be >= 0, got {self.bootstrap}")
        if self.quadrat_size is not None and not self.quadrat_size > 0:
            raise ConfigError(f"quadrat_size must be positive, got {self.quadrat_size}")

    @property
    def run_stats(self) -> bool:
        return self.clinical is not None if self.stats is None else self.stats

    @property
    def effective_quadrat(self) -> float:
        return self.tile_size if self.quadrat_size is None else self.quadrat_size

    def check_inputs(self) -> None:
        """Fail before any compute if required inputs are absent."""
        for name in ("cells", "tissue"):
            p = getattr(self, name)
            if p is None:
                raise ConfigError(f"no {name} directory given")
            if not Path(p).is_dir():
                raise ConfigError(f"{name} directory not found: {p}")
        if self.run_stats:
            if self.clinical is None:
                raise ConfigError("statistics requested but no clinical table given")
            if not Path(self.clinical).is_file():
                raise ConfigError(f"clinical table not found: {self.clinical}")

    def canonical(self) -> dict:
        """Settings that determine the outputs (excludes out and threads).

        Paths are made absolute so the hash is independent of the working
        directory and a written config can be replayed from anywhere.
        """
        d = {}
        for f in dataclasses.fields(self):
            if f.name in ("out", "threads"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = os.path.abspath(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    def hash(self) -> str:
        blob = json.dumps(self.canonical(), sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(blob.encode()).hexdigest()


_PATH_KEYS = {"cells", "tissue", "clinical", "out"}
_INT_KEYS = {"k", "restarts", "seed", "threads", "bootstrap"}
_FLOAT_KEYS = {"tile_size", "quadrat_size"}


def parse_k_range(text: str) -> tuple[int, int]:
    for sep in ("-", ":", ","):
        if sep in text:
            a, b = text.split(sep, 1)
            try:
                return int(a), int(b)
            except ValueError:
                break
    raise ConfigError(f"k range must look like 2-8, got {text!r}")


def _parse_bool(text: str) -> bool:
    t = text.strip().lower()
    if t in ("1", "true", "yes", "on"):
        return True
    if t in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def coerce_setting(key: str, value: str):
    key = key.replace("-", "_")
    try:
        if value == "" or value.lower() == "none":
            return key, None
        if key in _PATH_KEYS:
            return key, Path(value)
        if key in _INT_KEYS:
            return key, int(value)
        if key in _FLOAT_KEYS:
            return key, float(value)
        if key == "k_range":
            return key, parse_k_range(value)
        if key == "stats":
            return key, _parse_bool(value)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None
    raise ConfigError(f"unknown setting {key!r}")


def read_config_file(path) -> dict:
    """``key = value`` lines; ``#`` starts a comment.

    Relative paths are taken relative to the file's directory.
    """
    settings = {}
    try:
        fh = open(path, encoding="utf-8")
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc.strerror}") from None
    with fh:
        for lineno, raw in enumerate(fh, start=1):
            line = raw.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ParseError("expected key = value", path, lineno)
            key, value = (s.strip() for s in line.split("=", 1))
            try:
                k, v = coerce_setting(key, value)
            except ConfigError as exc:
                raise ParseError(str(exc), path, lineno) from None
            if k in _PATH_KEYS and v is not None and not v.is_absolute():
                v = Path(path).parent / v
            settings[k] = v
    return settings


def write_config_file(cfg: RunConfig, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        for key, v in cfg.canonical().items():
            if isinstance(v, list):
                v = f"{v[0]}-{v[1]}"
            fh.write(f"{key} = {'' if v is None else v}\n")


# ----------------------------------------------------------------------------
# tables


def _slide_files(directory) -> dict[str, Path]:
    d = Path(directory)
    if not d.is_dir():
        raise ConfigError(f"not a directory: {d}")
    files = {p.stem: p for p in sorted(d.glob("*.csv"))}
    if not files:
        raise ValidationError(f"no .csv files in {d}")
    return files


def write_cf_table(rows: Iterable, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CF_HEADER)
        for sid, g in rows:
            w.writerow([sid, g.row, g.col, g.n_cells, *(repr(v) for v in g.cf.h), g.cf.edge_count])


@dataclass
class CFTable:
    slide_ids: list[str]
    addresses: list[tuple[int, int]]
    n_cells: np.ndarray
    H: np.ndarray
    edge_count: np.ndarray

    @property
    def phenotypable(self) -> np.ndarray:
        return self.edge_count > 0


def read_cf_table(path) -> CFTable:
    sids, addrs, nc, H, ec = [], [], [], [], []
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != CF_HEADER:
            raise ParseError(f"expected header {','.join(CF_HEADER)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            if len(row) != len(CF_HEADER):
                raise ParseError(f"expected {len(CF_HEADER)} fields", path, lineno)
            try:
                sids.append(row[0])
                addrs.append((int(row[1]), int(row[2])))
                nc.append(int(row[3]))
                H.append([float(v) for v in row[4:4 + N_PAIRS]])
                ec.append(int(row[-1]))
            except ValueError as exc:
                raise ParseError(str(exc), path, lineno) from None
    return CFTable(sids, addrs, np.asarray(nc, dtype=np.int64),
                   np.asarray(H, dtype=float).reshape(len(sids), N_PAIRS),
                   np.asarray(ec, dtype=np.int64))


def write_assignments(table: CFTable, labels: np.ndarray, path) -> None:
    """One row per tile with cells; unphenotyped tiles get an empty label."""
    it = iter(labels)
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(ASSIGNMENT_HEADER)
        for sid, (r, c), ok in zip(table.slide_ids, table.addresses, table.phenotypable):
            w.writerow([sid, r, c, int(next(it)) if ok else ""])


def read_assignments(path) -> dict[str, dict[tuple[int, int], int | None]]:
    out: dict[str, dict] = {}
    with open(path, encoding="utf-8") as fh:
        reader = csv.reader(fh)
        if next(reader, None) != ASSIGNMENT_HEADER:
            raise ParseError(f"expected header {','.join(ASSIGNMENT_HEADER)}", path, 1)
        for lineno, row in enumerate(reader, start=2):
            try:
                sid, r, c, p = row
                out.setdefault(sid, {})[(int(r), int(c))] = int(p) if p else None
            except ValueError:
                raise ParseError("malformed assignment row", path, lineno) from None
    return out


# ----------------------------------------------------------------------------
# stages


def _tile_one(path: Path, tile_size: float):
    """Worker: returns (slide_id, graphs, warning messages)."""
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        cmap = load_cell_map(path)
        try:
            graphs = [tile_graph(t) for t in tile_cells(cmap, tile_size)]
        except (ValidationError, NumericalError) as exc:
            raise type(exc)(f"slide {cmap.slide_id}: {exc}") from exc
    return cmap.slide_id, graphs, [str(w.message) for w in caught]


def _map(fn, items, threads: int):
    """Ordered map, in worker processes when threads > 1."""
    if threads <= 1 or len(items) <= 1:
        return [fn(*a) for a in items]
    with ProcessPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, *zip(*items)))


def tile_stage(cells_dir, out_dir, tile_size: float = DEFAULT_TILE_SIZE, threads: int = 1,
               edges: bool = False) -> Path:
    """Triangulate every tile of every slide and write the CF table."""
    files = _slide_files(cells_dir)
    results = _map(_tile_one, [(files[s], tile_size) for s in sorted(files)], threads)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    rows = []
    for sid, graphs, msgs in results:
        for m in msgs:
            log.warning("slide %s: %s", sid, m)
        rows.extend((sid, g) for g in graphs if g.n_cells > 0)
        if edges:
            (out_dir / "edges").mkdir(exist_ok=True)
            write_edges_csv(graphs, out_dir / "edges" / f"{sid}.csv")
    path = out_dir / CF_FILE
    write_cf_table(rows, path)
    return path


def phenotype_stage(cf_path, out_dir, k: int | None = None, k_range=DEFAULT_K_RANGE,
                    restarts: int = DEFAULT_RESTARTS, seed: int = 0) -> PhenotypeModel:
    """Cluster the phenotypable tiles; k is chosen by select_k unless fixed."""
    table = read_cf_table(cf_path)
    mask = table.phenotypable
    X = table.H[mask]
    slides = [s for s, ok in zip(table.slide_ids, mask) if ok]
    if len(X) < 2:
        raise ValidationError(f"only {len(X)} phenotypable tiles")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    selection = None
    if k is None:
        selection, models = select_k(X, slides, k_range, seed=seed, restarts=restarts,
                                     return_models=True)
        model = models[selection.chosen_k]
    else:
        model = kmedoids(X, k, restarts=restarts, seed=seed)
    save_model(model, out_dir / MODEL_FILE)
    sel_path = out_dir / K_SELECTION_FILE
    if selection is not None:
        _write_json(selection.to_json(), sel_path)
    elif sel_path.exists():
        sel_path.unlink()
    # labels through the persisted medoids, as a standalone features run would see them
    labels = assign_many(load_model(out_dir / MODEL_FILE), X)
    write_assignments(table, labels, out_dir / ASSIGNMENTS_FILE)
    return model


def _features_one(sid: str, tissue_path: Path, cells_path: Path | None, assignments: dict,
                  k: int, tile_size: float, quadrat_size: float):
    grid = load_tissue_labels(tissue_path, slide_id=sid)
    if grid.tile_size != tile_size:
        raise ValidationError(f"slide {sid}: tissue grid tile size {grid.tile_size} "
                              f"differs from {tile_size}")
    cmap = load_cell_map(cells_path, slide_id=sid) if cells_path is not None else None
    return slide_features(grid, assignments, k, cmap=cmap, quadrat_size=quadrat_size)


def features_stage(assignments_path, model_path, tissue_dir, out_dir, cells_dir=None,
                   tile_size: float = DEFAULT_TILE_SIZE, quadrat_size: float | None = None,
                   threads: int = 1) -> Path:
    """Per-slide signature table.  Without cell maps the Morisita index is left empty."""
    k = load_model(model_path).k
    assignments = read_assignments(assignments_path)
    tissue = _slide_files(tissue_dir)
    cells = _slide_files(cells_dir) if cells_dir is not None else {}
    if cells and set(cells) != set(tissue):
        raise ValidationError(
            "cell maps and tissue grids cover different slides: "
            f"only cells {sorted(set(cells) - set(tissue))}, "
            f"only tissue {sorted(set(tissue) - set(cells))}")
    stray = sorted(set(assignments) - set(tissue))
    if stray:
        raise ValidationError(f"assignments for slides without tissue grids: {stray}")
    q = tile_size if quadrat_size is None else quadrat_size
    jobs = [(sid, tissue[sid], cells.get(sid), assignments.get(sid, {}), k, tile_size, q)
            for sid in sorted(tissue)]
    feats = _map(_features_one, jobs, threads)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / FEATURES_FILE
    write_feature_table(feats, k, path)
    return path


def _km_csv(cut, path) -> None:
    with open(path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["stratum", "t", "S", "CI_lo", "CI_hi", "at_risk"])
        for name, curve in (("low", cut.low), ("high", cut.high)):
            for t, s, lo, hi, n in curve.rows():
                w.writerow([name, repr(t), repr(s), repr(lo), repr(hi), n])


def analyze_stage(features_path, clinical_path, out_dir, seed: int = 0,
                  bootstrap: int = DEFAULT_BOOTSTRAP) -> dict:
    ids, cols, F = read_feature_table(features_path)
    cohort = load_clinical(clinical_path)
    result = analyze_cohort(ids, cols, F, cohort, seed=seed, bootstrap=bootstrap)
    out_dir = Path(out_dir)
    km_dir = out_dir / KM_DIR
    km_dir.mkdir(parents=True, exist_ok=True)
    for name, cut in sorted(result.strata.items()):
        _km_csv(cut, km_dir / f"{name}.csv")
        title = f"{name}: cutoff {cut.cutoff:.4g}, adjusted p {cut.p_adj:.3g}"
        (km_dir / f"{name}.svg").write_text(
            km_svg({f"<= {cut.cutoff:.4g}": cut.low, f"> {cut.cutoff:.4g}": cut.high}, title),
            encoding="utf-8")
        result.report["optimal_cutoff"][name]["km_csv"] = f"{KM_DIR}/{name}.csv"
        result.report["optimal_cutoff"][name]["km_svg"] = f"{KM_DIR}/{name}.svg"
    _write_json(result.report, out_dir / REPORT_FILE)
    return result.report


# ----------------------------------------------------------------------------
# single-shot run


def _write_json(obj, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for chunk in iter(lambda: fh.read(1 << 16), b""):
            h.update(chunk)
    return h.hexdigest()


def _tree_hashes(root: Path, prefix: str = "") -> dict[str, str]:
    return {prefix + p.relative_to(root).as_posix(): sha256_file(p)
            for p in sorted(root.rglob("*")) if p.is_file()}


def run_pipeline(cfg: RunConfig) -> dict:
    """Run every stage and publish the outputs into ``cfg.out``.

    Returns the manifest.  Nothing is published if any stage fails.
    """
    cfg.check_inputs()
    out = Path(cfg.out)
    out.mkdir(parents=True, exist_ok=True)
    stage = Path(tempfile.mkdtemp(prefix=".staging-", dir=out))
    try:
        tile_stage(cfg.cells, stage, cfg.tile_size, cfg.threads)
        model = phenotype_stage(stage / CF_FILE, stage, cfg.k, cfg.k_range, cfg.restarts, cfg.seed)
        features_stage(stage / ASSIGNMENTS_FILE, stage / MODEL_FILE, cfg.tissue, stage,
                       cells_dir=cfg.cells, tile_size=cfg.tile_size,
                       quadrat_size=cfg.effective_quadrat, threads=cfg.threads)
        if cfg.run_stats:
            analyze_stage(stage / FEATURES_FILE, cfg.clinical, stage, cfg.seed, cfg.bootstrap)
        write_config_file(cfg, stage / CONFIG_FILE)

        selection = None
        if (stage / K_SELECTION_FILE).exists():
            selection = json.loads((stage / K_SELECTION_FILE).read_text(encoding="utf-8"))
        inputs = {**_tree_hashes(Path(cfg.cells), "cells/"),
                  **_tree_hashes(Path(cfg.tissue), "tissue/")}
        if cfg.run_stats:
            inputs["clinical"] = sha256_file(cfg.clinical)
        manifest = {
            "version": __version__,
            "seed": cfg.seed,
            "config_hash": cfg.hash(),
            "config": cfg.canonical(),
            "chosen_k": model.k,
            "k_selection_fallback": None if selection is None else selection["fallback"],
            "inputs": inputs,
            "outputs": _tree_hashes(stage),
        }
        _write_json(manifest, stage / MANIFEST_FILE)
        _publish(stage, out)
    finally:
        shutil.rmtree(stage, ignore_errors=True)
    return manifest


def _publish(stage: Path, out: Path) -> None:
    staged = [p.relative_to(stage) for p in sorted(stage.rglob("*")) if p.is_file()]
    names = {p.as_posix() for p in staged}
    # drop outputs of a previous run that this run does not produce
    for name in (K_SELECTION_FILE, REPORT_FILE):
        if name not in names and (out / name).exists():
            (out / name).unlink()
    if (out / KM_DIR).is_dir():
        shutil.rmtree(out / KM_DIR)
    # the manifest goes last so its presence marks a complete publish
    for rel in sorted(staged, key=lambda r: r.as_posix() == MANIFEST_FILE):
        dest = out / rel
        dest.parent.mkdir(parents=True, exist_ok=True)
        os.replace(stage / rel, dest)


def exit_code(exc: BaseException) -> int:
    """2 for invalid input or configuration, 3 for numerical failure."""
    if isinstance(exc, ValidationError):
        return 2
    if isinstance(exc, NumericalError):
        return 3
    return 1
