"""Cohort-level analysis: association, logistic and Cox tables plus KM strata.

Each feature is analysed on its own complete cases.  A numerical failure in
one feature is recorded in its table entry and does not stop the others.
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import NumericalError, TissuePhenoError, ValidationError
from .stats.association import interquartile_delta, mann_whitney, spearman
from .stats.cox import cox_fit
from .stats.logistic import logistic_fit
from .stats.survival import AltmanDomainWarning, CutoffResult, optimal_cutoff_stratify
from .stats.validation import bootstrap_auc, concordance_index, roc_auc
from .synth import CohortTable

log = logging.getLogger(__name__)

DEFAULT_BOOTSTRAP = 100
COMPLETE_CASE_NOTE = ("missing values handled by complete-case analysis per model; "
                      "no multiple imputation or pooling is performed")


@dataclass
class AnalysisResult:
    report: dict
    strata: dict[str, CutoffResult] = field(default_factory=dict)


def _num(v):
    if v is None:
        return None
    v = float(v)
    return v if math.isfinite(v) else None


def _failure(exc: Exception) -> dict:
    return {"error": type(exc).__name__, "message": str(exc)}


def _binary_groupings(cohort: CohortTable) -> dict[str, np.ndarray]:
    """Two-level clinical variables coded 1/0 with NaN for missing."""
    names, C = cohort.clinical_matrix()
    groups = dict(zip(names, C.T))
    groups["metastasis_5yr"] = cohort.metastasis_5yr.astype(float)
    return groups


def association_table(F: np.ndarray, cols, groups: dict[str, np.ndarray]) -> dict:
    out = {}
    for j, name in enumerate(cols):
        entry = {}
        for g, lab in groups.items():
            ok = ~np.isnan(F[:, j]) & ~np.isnan(lab)
            x1 = F[ok & (lab == 1), j]
            x0 = F[ok & (lab == 0), j]
            try:
                r = mann_whitney(x1, x0)
            except TissuePhenoError as exc:
                entry[g] = _failure(exc)
                continue
            entry[g] = {"U": r.U, "p": r.p, "r2": r.r2, "n1": len(x1), "n0": len(x0),
                        "dropped": int((~ok).sum())}
        out[name] = entry
    return out


def _deltas(X: np.ndarray, binary: list[bool]) -> np.ndarray:
    return np.array([1.0 if b else interquartile_delta(X[:, j])[2] for j, b in enumerate(binary)])


def _is_binary(v: np.ndarray) -> bool:
    v = v[~np.isnan(v)]
    return bool(np.all((v == 0) | (v == 1)))


def _usable(X: np.ndarray, names: list[str], keep_first: bool = True):
    """Drop constant columns other than the first."""
    keep = [j for j in range(X.shape[1])
            if (j == 0 and keep_first) or np.ptp(X[:, j]) > 0]
    dropped = [names[j] for j in range(X.shape[1]) if j not in keep]
    return X[:, keep], [names[j] for j in keep], dropped


def _logistic_entry(X, y, names, binary, seed, B, multivariate):
    X, names, dropped_cov = _usable(X, names)
    binary = [binary[0]] + [True] * (len(names) - 1)
    deltas = _deltas(X, binary)
    fit = logistic_fit(X, y, deltas, names)
    factor, lo, hi = fit.or_factor(names[0])

    def refit(rows):
        return logistic_fit(X[rows], y[rows], deltas, names, lr_tests=False)

    def evaluate(m, rows):
        return roc_auc(m.intercept + X[rows] @ m.beta, y[rows])

    boot = bootstrap_auc(refit, evaluate, len(y), B=B, seed=seed)
    entry = {
        "factor": factor, "ci": [lo, hi], "delta": float(deltas[0]),
        "p": fit.lr_p[names[0]], "wald_p": fit.wald_p(names[0]),
        "auc": fit.auc, "auc_corrected": boot.corrected,
        "bootstrap_failures": boot.failures, "converged": fit.converged,
    }
    if multivariate:
        entry["covariates"] = names[1:]
        entry["dropped_covariates"] = dropped_cov
    return entry


def _cox_entry(X, t, e, names, binary, seed, B, multivariate):
    X, names, dropped_cov = _usable(X, names)
    binary = [binary[0]] + [True] * (len(names) - 1)
    deltas = _deltas(X, binary)
    fit = cox_fit(X, t, e, deltas, names)
    factor, lo, hi = fit.hr_factor(names[0])

    def refit(rows):
        return cox_fit(X[rows], t[rows], e[rows], deltas, names)

    def evaluate(m, rows):
        return concordance_index(m.linear_predictor(X[rows]), t[rows], e[rows])

    boot = bootstrap_auc(refit, evaluate, len(t), B=B, seed=seed)
    entry = {
        "factor": factor, "ci": [lo, hi], "delta": float(deltas[0]),
        "c_index": boot.apparent, "c_index_corrected": boot.corrected,
        "bootstrap_failures": boot.failures, "converged": fit.converged,
    }
    if multivariate:
        entry["p"] = fit.wald_p(names[0])
        entry["covariates"] = names[1:]
        entry["dropped_covariates"] = dropped_cov
    else:
        entry["p"] = fit.score_p
    return entry


def _guarded(fn, *args):
    try:
        return fn(*args)
    except (NumericalError, ValidationError) as exc:
        return _failure(exc)


def _complete(*arrays):
    ok = np.ones(len(arrays[0]), dtype=bool)
    for a in arrays:
        a = a if a.ndim == 2 else a[:, None]
        ok &= ~np.isnan(a).any(axis=1)
    return ok


def analyze_cohort(slide_ids, cols, F, cohort: CohortTable, seed: int = 0,
                   bootstrap: int = DEFAULT_BOOTSTRAP) -> AnalysisResult:
    """Run the full statistical battery on slide features joined to a cohort."""
    F = np.asarray(F, dtype=float)
    pos = {sid: i for i, sid in enumerate(cohort.ids)}
    rows = [i for i, sid in enumerate(slide_ids) if sid in pos]
    unmatched_features = sorted(set(slide_ids) - set(pos))
    unmatched_clinical = sorted(set(pos) - set(slide_ids))
    if len(rows) < 2:
        raise ValidationError("fewer than two slides match the clinical table")
    F = F[rows]
    ids = [slide_ids[i] for i in rows]
    crow = np.array([pos[s] for s in ids])
    cnames, C = cohort.clinical_matrix()
    C = C[crow]
    y = cohort.metastasis_5yr[crow].astype(float)
    t = cohort.dmfs_time[crow]
    e = cohort.event[crow]
    groups = {k: v[crow] for k, v in _binary_groupings(cohort).items()}

    variables = list(cols) + cnames
    V = np.column_stack([F, C])
    binary = [_is_binary(V[:, j]) for j in range(V.shape[1])]
    n_feat = len(cols)
    total_dropped = 0

    logistic = {"univariate": {}, "multivariate": {}}
    cox = {"univariate": {}, "multivariate": {}}
    cutoffs = {}
    strata = {}
    for j, name in enumerate(variables):
        x = V[:, j]
        ok = _complete(x, y)
        total_dropped += int((~ok).sum())
        ent = _guarded(_logistic_entry, x[ok, None], y[ok], [name], [binary[j]], seed,
                       bootstrap, False)
        ent.update(n=int(ok.sum()), dropped=int((~ok).sum()))
        logistic["univariate"][name] = ent

        ok = _complete(x, t, e)
        total_dropped += int((~ok).sum())
        ent = _guarded(_cox_entry, x[ok, None], t[ok], e[ok], [name], [binary[j]], seed,
                       bootstrap, False)
        ent.update(n=int(ok.sum()), events=int(np.nansum(e[ok])), dropped=int((~ok).sum()))
        cox["univariate"][name] = ent

        if j < n_feat:
            XM = np.column_stack([x, C])
            okm = _complete(XM, y)
            total_dropped += int((~okm).sum())
            ent = _guarded(_logistic_entry, XM[okm], y[okm], [name] + cnames,
                           [binary[j]] + [True] * len(cnames), seed, bootstrap, True)
            ent.update(n=int(okm.sum()), dropped=int((~okm).sum()))
            logistic["multivariate"][name] = ent

            okm = _complete(XM, t, e)
            total_dropped += int((~okm).sum())
            ent = _guarded(_cox_entry, XM[okm], t[okm], e[okm], [name] + cnames,
                           [binary[j]] + [True] * len(cnames), seed, bootstrap, True)
            ent.update(n=int(okm.sum()), events=int(np.nansum(e[okm])), dropped=int((~okm).sum()))
            cox["multivariate"][name] = ent

            try:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", AltmanDomainWarning)
                    cut = optimal_cutoff_stratify(x[ok], t[ok], e[ok])
            except (NumericalError, ValidationError) as exc:
                cutoffs[name] = _failure(exc)
            else:
                strata[name] = cut
                cutoffs[name] = {
                    "cutoff": cut.cutoff, "p_min": cut.p_min, "p_adj": cut.p_adj,
                    "chi2": cut.chi2, "n_low": cut.n_low, "n_high": cut.n_high,
                    "in_domain": cut.in_domain,
                }

    correlations = {}
    cf_cols = [c for c in cols if c.startswith("cf_ratio_")]
    ap_cols = [c for c in cols if c.startswith("ap_")]
    for a in cf_cols:
        for b in ap_cols:
            xa, xb = F[:, cols.index(a)], F[:, cols.index(b)]
            ok = ~np.isnan(xa) & ~np.isnan(xb)
            try:
                correlations[f"{a}~{b}"] = spearman(xa[ok], xb[ok])
            except TissuePhenoError:
                correlations[f"{a}~{b}"] = None

    report = {
        "n_slides": len(ids),
        "n_events": int(np.nansum(e)),
        "n_metastasis": int(y.sum()),
        "unmatched_feature_slides": unmatched_features,
        "unmatched_clinical_slides": unmatched_clinical,
        "missing_data": {"method": "complete-case", "rows_dropped": total_dropped},
        "association": association_table(F, cols, groups),
        "logistic": logistic,
        "cox": cox,
        "optimal_cutoff": cutoffs,
        "spearman_cf_ap": correlations,
        "bootstrap": {"replicates": bootstrap, "seed": seed, "correction": "optimism"},
    }
    if total_dropped:
        report["missing_data"]["note"] = COMPLETE_CASE_NOTE
    return AnalysisResult(_clean(report), strata)


def _clean(obj):
    """JSON-safe copy: numpy scalars to Python, non-finite floats to None."""
    if isinstance(obj, dict):
        return {str(k): _clean(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_clean(v) for v in obj]
    if isinstance(obj, (bool, np.bool_)):
        return bool(obj)
    if isinstance(obj, (int, np.integer)):
        return int(obj)
    if isinstance(obj, (float, np.floating)):
        return _num(obj)
    return obj
