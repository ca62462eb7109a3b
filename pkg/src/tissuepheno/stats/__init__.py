from .association import MannWhitneyResult, interquartile_delta, mann_whitney, spearman
from .cox import CoxFit, cox_fit, partial_likelihood, score_test
from .logistic import LogisticFit, logistic_fit
from .survival import (
    AltmanDomainWarning,
    CutoffResult,
    KMCurve,
    LogRankResult,
    altman_adjust,
    kaplan_meier,
    logrank,
    optimal_cutoff_stratify,
)
from .validation import BootstrapResult, bootstrap_auc, concordance_index, roc_auc

__all__ = [
    "AltmanDomainWarning",
    "BootstrapResult",
    "CoxFit",
    "CutoffResult",
    "KMCurve",
    "LogRankResult",
    "LogisticFit",
    "MannWhitneyResult",
    "altman_adjust",
    "bootstrap_auc",
    "concordance_index",
    "cox_fit",
    "interquartile_delta",
    "kaplan_meier",
    "logistic_fit",
    "logrank",
    "mann_whitney",
    "optimal_cutoff_stratify",
    "partial_likelihood",
    "roc_auc",
    "score_test",
    "spearman",
]
