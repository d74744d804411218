"""Self-contained statistics used across the pipeline."""

from .adf import adf_test, mackinnon_pvalue
from .inference import bh_adjust, discordant_counts, mcnemar, mcnemar_from_counts
from .metrics import Scores, confusion, precision_recall_f1
from .ols import OlsFit, RankDeficientError, TestResult, f_test_nested, ols_fit

__all__ = [
    "OlsFit",
    "RankDeficientError",
    "Scores",
    "TestResult",
    "adf_test",
    "bh_adjust",
    "confusion",
    "discordant_counts",
    "f_test_nested",
    "mackinnon_pvalue",
    "mcnemar",
    "mcnemar_from_counts",
    "ols_fit",
    "precision_recall_f1",
]
