"""Planted-phenotype recovery as a function of cell density.

For each density and seed, draws planted tiles, clusters them with k-medoids
at k = 6 and reports the adjusted Rand index against the planted labels and
the k picked by the selection procedure.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np
from _common import emit, parse_config
from sklearn.metrics import adjusted_rand_score

from tissuepheno.phenotype import kmedoids, min_medoid_distance, select_k
from tissuepheno.synth import planted_tiles


@dataclass(frozen=True)
class Config:
    densities: tuple[float, ...] = (500.0, 1000.0, 2000.0)
    seeds: int = 5
    n_tiles: int = 300
    n_slides: int = 30
    restarts: int = 100
    k_lo: int = 2
    k_hi: int = 8


def run(cfg: Config) -> list[dict]:
    rows = []
    for density in cfg.densities:
        aris, ks, seps = [], [], []
        start = time.perf_counter()
        for seed in range(cfg.seeds):
            pt = planted_tiles(cfg.n_tiles, cfg.n_slides, seed=seed, density=density)
            m = kmedoids(pt.H, 6, restarts=cfg.restarts, seed=seed)
            aris.append(adjusted_rand_score(pt.labels, m.labels))
            seps.append(min_medoid_distance(m.medoids))
            ks.append(select_k(pt.H, pt.slides, (cfg.k_lo, cfg.k_hi), seed=seed,
                               restarts=cfg.restarts).chosen_k)
        rows.append({
            "density": density,
            "ari_min": float(np.min(aris)),
            "ari_mean": float(np.mean(aris)),
            "frac_ari_ge_0.99": float(np.mean(np.array(aris) >= 0.99)),
            "frac_k_eq_6": float(np.mean(np.array(ks) == 6)),
            "min_medoid_dist": float(np.min(seps)),
            "seconds": time.perf_counter() - start,
        })
    return rows


if __name__ == "__main__":
    cfg, as_json = parse_config(Config, __doc__.splitlines()[0])
    emit(cfg, run(cfg), as_json)
