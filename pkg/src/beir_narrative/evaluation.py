"""Walk-forward comparison of narrative-augmented classifiers against market-only benchmarks."""

from __future__ import annotations

import csv
import io
import logging
import warnings
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np

from .classifiers import KINDS, ClassifierSpec, train
from .panel import ModelData
from .pls import EarlyStopWarning, PlsError, PlsModel, fit_baseline, fit_pls
from .seeds import derive_seed
from .stats import Scores, TestResult, mcnemar, precision_recall_f1

log = logging.getLogger(__name__)

FEATURE_SETS = ("market", "market+pls")
MIN_USABLE_FOLDS = 3


class EvaluationError(ValueError):
    pass


class FoldSkippedWarning(UserWarning):
    pass


# --- fold plans -------------------------------------------------------------------

@dataclass(frozen=True)
class FoldPlan:
    """Expanding-window splits over ``n`` date-ordered rows.

    ``splits[i]`` is ``(train, test)`` as ``range`` objects; split ``i``
    trains on blocks ``0..i`` and tests on block ``i + 1``.
    """

    n: int
    blocks: tuple[range, ...]
    splits: tuple[tuple[range, range], ...]

    def __len__(self) -> int:
        return len(self.splits)

    def to_list(self) -> list[dict]:
        return [
            {"train": [tr.start, tr.stop], "test": [te.start, te.stop]}
            for tr, te in self.splits
        ]


def walk_forward_splits(n: int, k: int = 5) -> FoldPlan:
    """Partition ``n`` rows into ``k + 1`` contiguous blocks and build ``k`` splits.

    Blocks have size ``n // (k + 1)``; the remainder goes one row each to
    the earliest blocks.
    """
    if k < 1:
        raise EvaluationError("k must be >= 1")
    if n < k + 1:
        raise EvaluationError(f"need at least k+1={k + 1} rows for {k} walk-forward splits, got {n}")
    base, extra = divmod(n, k + 1)
    sizes = [base + (1 if b < extra else 0) for b in range(k + 1)]
    edges = np.concatenate([[0], np.cumsum(sizes)]).tolist()
    blocks = tuple(range(edges[b], edges[b + 1]) for b in range(k + 1))
    splits = tuple((range(0, edges[i + 1]), blocks[i + 1]) for i in range(k))
    return FoldPlan(n, blocks, splits)


# --- reports ----------------------------------------------------------------------

def delta_f1(model_f1: float, benchmark_f1: float) -> float:
    return float(model_f1) - float(benchmark_f1)


def _mean_scores(scores: Sequence[Scores]) -> Scores:
    # F1 is averaged over folds, not recombined from mean precision and recall
    arr = np.array([s.as_tuple() for s in scores])
    p, r, f = arr.mean(axis=0)
    return Scores(float(p), float(r), float(f))


@dataclass(frozen=True)
class FoldResult:
    fold: int  # 1-based split number
    n_train: int
    n_test: int
    model: Scores
    benchmark: Scores
    n_components: int = 0
    dropped_columns: tuple[str, ...] = ()

    def to_dict(self) -> dict:
        return {
            "fold": self.fold,
            "n_train": self.n_train,
            "n_test": self.n_test,
            "model": list(self.model.as_tuple()),
            "benchmark": list(self.benchmark.as_tuple()),
            "n_components": self.n_components,
            "dropped_columns": list(self.dropped_columns),
        }

    @classmethod
    def from_dict(cls, d: dict) -> "FoldResult":
        return cls(
            d["fold"], d["n_train"], d["n_test"], Scores(*d["model"]), Scores(*d["benchmark"]),
            d["n_components"], tuple(d["dropped_columns"]),
        )


@dataclass(frozen=True)
class CvReport:
    """Cross-validated scores of one (country, kind) pair, model against benchmark.

    ``truth``, ``model_pred`` and ``benchmark_pred`` are the pooled
    out-of-fold vectors over the folds that were not skipped.
    """

    country: str
    kind: str
    folds: tuple[FoldResult, ...]
    skipped: tuple[tuple[int, str], ...]
    truth: np.ndarray = field(repr=False)
    model_pred: np.ndarray = field(repr=False)
    benchmark_pred: np.ndarray = field(repr=False)
    mcnemar: TestResult = None
    seeds: tuple[int, ...] = ()

    @property
    def model(self) -> Scores:
        return _mean_scores([f.model for f in self.folds])

    @property
    def benchmark(self) -> Scores:
        return _mean_scores([f.benchmark for f in self.folds])

    @property
    def delta_f1(self) -> float:
        return delta_f1(self.model.f1, self.benchmark.f1)

    def to_dict(self) -> dict:
        m = self.mcnemar
        return {
            "country": self.country,
            "kind": self.kind,
            "folds": [f.to_dict() for f in self.folds],
            "skipped": [list(s) for s in self.skipped],
            "truth": self.truth.astype(int).tolist(),
            "model_pred": self.model_pred.astype(int).tolist(),
            "benchmark_pred": self.benchmark_pred.astype(int).tolist(),
            "mcnemar": {"statistic": m.statistic, "p_value": m.p_value, "method": m.method, "degenerate": m.degenerate, **m.extra},
            "seeds": [str(s) for s in self.seeds],
            "mean": {"model": list(self.model.as_tuple()), "benchmark": list(self.benchmark.as_tuple()), "delta_f1": self.delta_f1},
        }

    @classmethod
    def from_dict(cls, d: dict) -> "CvReport":
        m = d["mcnemar"]
        extra = {k: v for k, v in m.items() if k not in ("statistic", "p_value", "method", "degenerate")}
        return cls(
            d["country"],
            d["kind"],
            tuple(FoldResult.from_dict(f) for f in d["folds"]),
            tuple((int(a), str(b)) for a, b in d["skipped"]),
            np.asarray(d["truth"], dtype=np.int8),
            np.asarray(d["model_pred"], dtype=np.int8),
            np.asarray(d["benchmark_pred"], dtype=np.int8),
            TestResult(m["statistic"], m["p_value"], (), m["degenerate"], m["method"], extra),
            tuple(int(s) for s in d["seeds"]),
        )


# --- per-fold feature construction ---------------------------------------------------

@dataclass(frozen=True)
class EvalConfig:
    folds: int = 5
    n_components: int = 5
    seed: int = 0
    residual: str = "response"
    params: Mapping[str, dict] = field(default_factory=dict)
    # fit scalers on every row instead of the train window; exists only so
    # tests can show the harness detects look-ahead
    leak_scaler: bool = False


def _fit_scale(X, rows):
    """Train-window mean and population sd; zero-variance columns are flagged."""
    W = X[rows]
    mean = W.mean(axis=0)
    sd = W.std(axis=0)
    return mean, sd, sd > 0


@dataclass(frozen=True)
class _FoldFeatures:
    market_tr: np.ndarray
    market_te: np.ndarray
    market_names: tuple[str, ...]
    pls_tr: np.ndarray
    pls_te: np.ndarray
    n_components: int
    dropped: tuple[str, ...]
    pls: PlsModel | None = None
    theme_names: tuple[str, ...] = ()


def _fold_features(data: ModelData, train: np.ndarray, test: np.ndarray, cfg: EvalConfig) -> _FoldFeatures:
    fit_rows = np.arange(data.n) if cfg.leak_scaler else train
    m_mean, m_sd, m_ok = _fit_scale(data.market, fit_rows)
    t_mean, t_sd, t_ok = _fit_scale(data.themes, fit_rows)
    dropped = tuple(n for n, ok in zip(data.market_names, m_ok) if not ok) + tuple(
        n for n, ok in zip(data.theme_names, t_ok) if not ok
    )
    market_names = tuple(n for n, ok in zip(data.market_names, m_ok) if ok)
    Zm = (data.market[:, m_ok] - m_mean[m_ok]) / m_sd[m_ok]
    Zt = (data.themes[:, t_ok] - t_mean[t_ok]) / t_sd[t_ok]
    theme_names = tuple(n for n, ok in zip(data.theme_names, t_ok) if ok)
    if not market_names:
        raise EvaluationError(f"{data.country}: every market column is constant in the train window")
    if not theme_names:
        raise EvaluationError(f"{data.country}: every theme column is constant in the train window")
    y_tr = data.labels[train]
    base = fit_baseline(Zm[train], y_tr, market_names, residual=cfg.residual)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", EarlyStopWarning)
        pls = fit_pls(Zt[train], base.residuals, cfg.n_components, theme_names)
    S_tr = pls.transform(Zt[train])
    S_te = pls.transform(Zt[test])
    # unit-norm SIMPLS scores are rescaled to unit variance on the train window
    S_fit = pls.transform(Zt[fit_rows]) if cfg.leak_scaler else S_tr
    s_mean = S_fit.mean(axis=0)
    s_sd = S_fit.std(axis=0)
    s_sd = np.where(s_sd > 0, s_sd, 1.0)
    return _FoldFeatures(
        Zm[train], Zm[test], market_names,
        (S_tr - s_mean) / s_sd, (S_te - s_mean) / s_sd,
        pls.n_components, dropped, pls, theme_names,
    )


def full_sample_features(data: ModelData, config: EvalConfig | None = None):
    """Residual-PLS fitted on every row of ``data``.

    Used for the network analysis and the category profiles, which describe
    the whole sample rather than forecast out of sample. Returns the fitted
    ``PlsModel``, the unit-variance scores (rows of ``data``) and the names
    of constant columns that were dropped.
    """
    rows = np.arange(data.n)
    f = _fold_features(data, rows, rows, config or EvalConfig())
    return f.pls, f.pls_tr, f.dropped


# --- experiments ------------------------------------------------------------------

def classifier_seed(root: int, country: str, kind: str, fold: int) -> int:
    """Seed shared by the model and benchmark fits of one fold."""
    return derive_seed(root, "evaluate", country, kind, fold)


def run_country(data: ModelData, kinds: Sequence[str] = KINDS, config: EvalConfig | None = None) -> dict[str, CvReport]:
    """Walk-forward evaluation of every kind on one country's data.

    Each fold standardizes market and theme features on its train window,
    fits the market-only logistic baseline and the residual PLS there,
    projects the test window, and trains each kind twice: on market
    features (benchmark) and on market features plus PLS scores (model).
    Both use one ``FoldPlan`` and one classifier seed per fold.
    """
    cfg = config or EvalConfig()
    for kind in kinds:
        if kind not in KINDS:
            raise EvaluationError(f"unknown classifier kind {kind!r}")
    plan = walk_forward_splits(data.n, cfg.folds)
    y = np.asarray(data.labels, dtype=np.int64)
    per_kind = {k: {"folds": [], "truth": [], "model": [], "bench": [], "seeds": []} for k in kinds}
    skipped: list[tuple[int, str]] = []
    for i, (tr, te) in enumerate(plan.splits, start=1):
        train = np.arange(tr.start, tr.stop)
        test = np.arange(te.start, te.stop)
        y_tr, y_te = y[train], y[test]
        if y_tr.min() == y_tr.max():
            reason = "single-class training labels"
        else:
            reason = ""
            try:
                feats = _fold_features(data, train, test, cfg)
            except PlsError as exc:
                reason = str(exc)
        if reason:
            msg = f"{data.country}: fold {i} skipped ({reason})"
            warnings.warn(msg, FoldSkippedWarning, stacklevel=2)
            log.warning(msg)
            skipped.append((i, reason))
            continue
        bench_cols = tuple(f"market:{n}" for n in feats.market_names)
        model_cols = bench_cols + tuple(f"pls:{a + 1}" for a in range(feats.n_components))
        Xb_tr, Xb_te = feats.market_tr, feats.market_te
        Xm_tr = np.hstack([feats.market_tr, feats.pls_tr])
        Xm_te = np.hstack([feats.market_te, feats.pls_te])
        for kind in kinds:
            seed = classifier_seed(cfg.seed, data.country, kind, i)
            params = dict(cfg.params.get(kind, {}))
            spec = ClassifierSpec(kind, params, seed)
            bench = train_predict(spec, Xb_tr, y_tr, Xb_te, bench_cols)
            model = train_predict(spec, Xm_tr, y_tr, Xm_te, model_cols)
            acc = per_kind[kind]
            acc["folds"].append(
                FoldResult(
                    i, train.size, test.size, precision_recall_f1(model, y_te), precision_recall_f1(bench, y_te),
                    feats.n_components, feats.dropped,
                )
            )
            acc["truth"].append(y_te)
            acc["model"].append(model)
            acc["bench"].append(bench)
            acc["seeds"].append(seed)
    used = len(plan) - len(skipped)
    if used < MIN_USABLE_FOLDS:
        raise EvaluationError(
            f"{data.country}: only {used} usable fold(s) out of {len(plan)}; need at least {MIN_USABLE_FOLDS}"
        )
    reports = {}
    for kind, acc in per_kind.items():
        truth = np.concatenate(acc["truth"]).astype(np.int8)
        mp = np.concatenate(acc["model"]).astype(np.int8)
        bp = np.concatenate(acc["bench"]).astype(np.int8)
        reports[kind] = CvReport(
            data.country, kind, tuple(acc["folds"]), tuple(skipped), truth, mp, bp,
            mcnemar(mp, bp, truth), tuple(acc["seeds"]),
        )
    return reports


def train_predict(spec: ClassifierSpec, X_tr, y_tr, X_te, columns) -> np.ndarray:
    return train(spec, X_tr, y_tr, columns).predict(X_te)


def run_experiment(data: ModelData, kind: str, config: EvalConfig | None = None) -> CvReport:
    """One kind on one country; see ``run_country``."""
    return run_country(data, (kind,), config)[kind]


# --- result tables ---------------------------------------------------------------------

@dataclass(frozen=True)
class Table:
    """Country-by-kind grid of numbers; NaN marks a missing cell."""

    name: str
    rows: tuple[str, ...]
    columns: tuple[str, ...]
    values: np.ndarray

    def cell(self, row: str, column: str) -> float:
        return float(self.values[self.rows.index(row), self.columns.index(column)])

    def to_csv(self, digits: int = 4) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["country", *self.columns])
        for r, vals in zip(self.rows, self.values):
            w.writerow([r] + ["" if np.isnan(v) else f"{v:.{digits}f}" for v in vals])
        return buf.getvalue()

    @classmethod
    def from_csv(cls, text: str, name: str = "") -> "Table":
        reader = csv.reader(io.StringIO(text))
        header = next(reader)
        rows, vals = [], []
        for line in reader:
            if not line:
                continue
            rows.append(line[0])
            vals.append([float(v) if v != "" else np.nan for v in line[1:]])
        return cls(name, tuple(rows), tuple(header[1:]), np.array(vals, dtype=float).reshape(len(rows), len(header) - 1))


def delta_f1_table(model_f1: Table, benchmark_f1: Table) -> Table:
    """Elementwise model minus benchmark F1, aligned by row and column names."""
    if set(model_f1.rows) != set(benchmark_f1.rows) or set(model_f1.columns) != set(benchmark_f1.columns):
        raise EvaluationError("F1 tables cover different countries or kinds")
    ri = [benchmark_f1.rows.index(r) for r in model_f1.rows]
    ci = [benchmark_f1.columns.index(c) for c in model_f1.columns]
    bench = benchmark_f1.values[np.ix_(ri, ci)]
    return Table("delta_f1", model_f1.rows, model_f1.columns, model_f1.values - bench)


# file stem and accessor for each published-style table, in report order
TABLE_FIELDS = (
    ("f1", lambda r: r.model.f1),
    ("recall", lambda r: r.model.recall),
    ("precision", lambda r: r.model.precision),
    ("benchmark_f1", lambda r: r.benchmark.f1),
    ("benchmark_recall", lambda r: r.benchmark.recall),
    ("benchmark_precision", lambda r: r.benchmark.precision),
    ("mcnemar_statistic", lambda r: r.mcnemar.statistic),
    ("mcnemar_p", lambda r: r.mcnemar.p_value),
)


def report_tables(reports: Mapping[tuple[str, str], CvReport], countries: Sequence[str], kinds: Sequence[str]) -> dict[str, Table]:
    """Tables keyed by name, ``delta_f1`` first, computed from ``(country, kind)`` reports."""
    out = {}
    for name, get in TABLE_FIELDS:
        vals = np.full((len(countries), len(kinds)), np.nan)
        for i, c in enumerate(countries):
            for j, k in enumerate(kinds):
                if (c, k) in reports:
                    vals[i, j] = get(reports[(c, k)])
        out[name] = Table(name, tuple(countries), tuple(kinds), vals)
    return {"delta_f1": delta_f1_table(out["f1"], out["benchmark_f1"]), **out}
