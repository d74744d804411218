"""Daily theme-tone panels, differencing, stationarity gate, scaling and labels."""

from __future__ import annotations

import csv
import json
from collections import defaultdict
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from .gkg import GkgRecord
from .stats import adf_test
from .taxonomy import ThemeTaxonomy


class PanelError(ValueError):
    pass


# --- daily aggregation ---------------------------------------------------------

class PanelAccumulator:
    """Running tone sums and counts per (day, theme).

    ``merge`` is associative and commutative up to float summation order, so
    batches of records can be reduced independently and combined.
    """

    def __init__(self, tax: ThemeTaxonomy):
        self.tax = tax
        self.sums: dict[tuple[np.datetime64, str], float] = defaultdict(float)
        self.counts: dict[tuple[np.datetime64, str], int] = defaultdict(int)
        self.records = 0
        self.records_per_day: dict[np.datetime64, int] = defaultdict(int)

    def add(self, records: Iterable[GkgRecord]) -> "PanelAccumulator":
        retained = self.tax.is_retained
        for rec in records:
            day = np.datetime64(rec.date, "D")
            self.records += 1
            self.records_per_day[day] += 1
            for theme in rec.themes:
                if retained(theme):
                    key = (day, theme)
                    self.sums[key] += rec.avg_tone
                    self.counts[key] += 1
        return self

    def merge(self, other: "PanelAccumulator") -> "PanelAccumulator":
        for key, v in other.sums.items():
            self.sums[key] += v
        for key, v in other.counts.items():
            self.counts[key] += v
        for day, v in other.records_per_day.items():
            self.records_per_day[day] += v
        self.records += other.records
        return self

    def panel(self, country: str) -> "DailyThemePanel":
        dates = np.array(sorted({d for d, _ in self.counts}), dtype="datetime64[D]")
        columns = tuple(sorted({t for _, t in self.counts}))
        values = np.zeros((dates.size, len(columns)))
        counts = np.zeros((dates.size, len(columns)), dtype=np.int64)
        row = {d: i for i, d in enumerate(dates.tolist())}
        col = {t: j for j, t in enumerate(columns)}
        for (d, t), n in self.counts.items():
            i, j = row[d.item()], col[t]
            values[i, j] = self.sums[(d, t)] / n
            counts[i, j] = n
        return DailyThemePanel(country, dates, columns, values, counts, self.records, self.tax.digest)


@dataclass(frozen=True)
class DailyThemePanel:
    """Mean document tone per (day, retained theme); unobserved cells are 0.0."""

    country: str
    dates: np.ndarray
    columns: tuple[str, ...]
    values: np.ndarray
    counts: np.ndarray
    n_records: int = 0
    taxonomy_digest: str = ""

    def __post_init__(self):
        if len(set(self.columns)) != len(self.columns):
            raise PanelError("duplicate theme columns")
        if self.values.shape != (self.dates.size, len(self.columns)) or self.counts.shape != self.values.shape:
            raise PanelError("panel shape mismatch")
        if np.any((self.counts == 0) & (self.values != 0)):
            raise PanelError("nonzero tone stored for a cell with no records")

    def reindex(self, calendar) -> np.ndarray:
        """Values on ``calendar``; days absent from the panel read as 0.0.

        Panel days outside the calendar (weekends, holidays) are dropped.
        """
        cal = np.asarray(calendar, dtype="datetime64[D]")
        out = np.zeros((cal.size, len(self.columns)))
        if self.dates.size:
            pos = np.searchsorted(self.dates, cal)
            pos_c = np.minimum(pos, self.dates.size - 1)
            hit = self.dates[pos_c] == cal
            out[hit] = self.values[pos_c[hit]]
        return out

    def to_csv(self, path) -> None:
        path = Path(path)
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("date",) + self.columns)
            for d, row in zip(self.dates, self.values):
                w.writerow([str(d)] + [repr(float(v)) for v in row])
        sidecar = {
            "country": self.country,
            "taxonomy_digest": self.taxonomy_digest,
            "n_records": self.n_records,
            "n_days": int(self.dates.size),
            "n_themes": len(self.columns),
            "counts": {str(d): [int(c) for c in row] for d, row in zip(self.dates, self.counts)},
        }
        Path(str(path) + ".json").write_text(json.dumps(sidecar, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "DailyThemePanel":
        path = Path(path)
        meta = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            if not header or header[0] != "date":
                raise PanelError(f"{path}: first column must be 'date'")
            rows = list(reader)
        dates = np.array([r[0] for r in rows], dtype="datetime64[D]")
        values = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), len(header) - 1)
        counts = np.array([meta["counts"][r[0]] for r in rows], dtype=np.int64).reshape(values.shape)
        return cls(meta["country"], dates, tuple(header[1:]), values, counts, meta["n_records"], meta["taxonomy_digest"])


def aggregate_daily(records: Iterable[GkgRecord], tax: ThemeTaxonomy, country: str = "") -> DailyThemePanel:
    """Mean ``avg_tone`` per (day, retained theme) over records containing that theme."""
    return PanelAccumulator(tax).add(records).panel(country)


# --- differencing and stationarity ---------------------------------------------

def diff_k(x, k: int = 5) -> np.ndarray:
    """``x[t] - x[t-k]`` along the first axis, for t >= k (index positions)."""
    x = np.asarray(x, dtype=float)
    if k < 1:
        raise ValueError("k must be positive")
    if x.shape[0] <= k:
        raise ValueError(f"need more than k={k} observations, got {x.shape[0]}")
    return x[k:] - x[:-k]


@dataclass(frozen=True)
class AdfRow:
    name: str
    level_stat: float
    level_p: float
    diff_stat: float
    diff_p: float
    stationary: bool
    degenerate: bool = False

    def as_dict(self) -> dict:
        return {
            "name": self.name,
            "level_stat": self.level_stat,
            "level_p": self.level_p,
            "diff_stat": self.diff_stat,
            "diff_p": self.diff_p,
            "stationary": self.stationary,
            "degenerate": self.degenerate,
        }


def _adf_or_nan(x):
    try:
        res = adf_test(x)
    except ValueError:
        return None
    return res


def adf_gate(matrix, names: Sequence[str], k: int = 5, alpha: float = 0.05) -> list[AdfRow]:
    """ADF on levels and on k-differences for every column.

    A column is ``stationary`` when the unit root is rejected on its
    differences. Constant columns (levels or differences) are flagged
    degenerate and should be excluded from modelling.
    """
    X = np.asarray(matrix, dtype=float)
    if X.ndim != 2 or X.shape[1] != len(names):
        raise ValueError("matrix columns must match names")
    if X.shape[0] < 50:
        raise ValueError("ADF gate needs at least 50 observations per column")
    out = []
    for j, name in enumerate(names):
        lev = X[:, j]
        d = diff_k(lev, k)
        if np.ptp(lev) == 0 or np.ptp(d) == 0:
            out.append(AdfRow(name, np.nan, np.nan, np.nan, np.nan, False, degenerate=True))
            continue
        rl = _adf_or_nan(lev)
        rd = _adf_or_nan(d)
        if rl is None or rd is None:
            out.append(AdfRow(name, np.nan, np.nan, np.nan, np.nan, False, degenerate=True))
            continue
        out.append(AdfRow(name, rl.statistic, rl.p_value, rd.statistic, rd.p_value, rd.p_value < alpha))
    return out


# --- standardization -------------------------------------------------------------

@dataclass(frozen=True)
class Scaler:
    names: tuple[str, ...]
    mean: np.ndarray
    scale: np.ndarray

    def apply(self, matrix) -> np.ndarray:
        X = np.asarray(matrix, dtype=float)
        if X.ndim != 2 or X.shape[1] != len(self.names):
            raise ValueError(f"expected {len(self.names)} columns, got shape {X.shape}")
        return (X - self.mean) / self.scale


def standardize_fit(matrix, names: Sequence[str], rows=slice(None)) -> Scaler:
    """Column means and population standard deviations over ``rows``."""
    X = np.asarray(matrix, dtype=float)[rows]
    if X.shape[0] < 2:
        raise ValueError("standardization window needs at least 2 observations")
    if X.shape[1] != len(names):
        raise ValueError("matrix columns must match names")
    mean = X.mean(axis=0)
    scale = X.std(axis=0)
    flat = np.nonzero(scale == 0)[0]
    if flat.size:
        raise PanelError(f"zero variance in window for column(s): {', '.join(names[j] for j in flat)}")
    return Scaler(tuple(names), mean, scale)


def standardize_apply(scaler: Scaler, matrix) -> np.ndarray:
    return scaler.apply(matrix)


# --- labels ----------------------------------------------------------------------

@dataclass(frozen=True)
class BinaryLabels:
    """Direction labels indexed by position ``t`` of the source series."""

    positions: np.ndarray
    values: np.ndarray
    n_zero: int = 0


def make_labels(beir, k: int = 5, horizon: int = 1) -> BinaryLabels:
    """Label at ``t`` is 1 if ``B[t+h] - B[t+h-k] > 0`` and 0 if negative.

    Positions where the change is exactly zero are left out and counted.
    Only ``t`` with ``t+h-k >= 0`` and ``t+h <= n-1`` are produced.
    """
    b = np.asarray(beir, dtype=float)
    if horizon < 0 or k < 1:
        raise ValueError("need k >= 1 and horizon >= 0")
    if b.size <= k + horizon:
        raise ValueError(f"need more than k+horizon={k + horizon} observations, got {b.size}")
    t = np.arange(max(0, k - horizon), b.size - horizon)
    change = b[t + horizon] - b[t + horizon - k]
    keep = change != 0
    return BinaryLabels(t[keep], (change[keep] > 0).astype(np.int8), int((~keep).sum()))


# --- modelling dataset -----------------------------------------------------------

@dataclass(frozen=True)
class ColumnMeta:
    kind: str  # market | theme | pls
    name: str


@dataclass(frozen=True)
class ModelData:
    """Unstandardized k-differences and labels on the usable dates of one country."""

    country: str
    dates: np.ndarray
    market: np.ndarray
    market_names: tuple[str, ...]
    themes: np.ndarray
    theme_names: tuple[str, ...]
    labels: np.ndarray
    stats: dict = field(default_factory=dict)

    @property
    def n(self) -> int:
        return self.dates.size

    def columns(self) -> list[ColumnMeta]:
        return [ColumnMeta("market", n) for n in self.market_names] + [ColumnMeta("theme", n) for n in self.theme_names]

    def to_csv(self, path) -> None:
        """Write ``date,label,<kind>:<name>...`` rows plus a JSON sidecar."""
        header = ["date", "label"] + [f"{c.kind}:{c.name}" for c in self.columns()]
        X = np.hstack([self.market, self.themes])
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(header)
            for d, y, row in zip(self.dates, self.labels, X):
                w.writerow([str(d), int(y)] + [repr(float(v)) for v in row])
        meta = {"country": self.country, "stats": self.stats}
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "ModelData":
        meta = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        if header[:2] != ["date", "label"]:
            raise PanelError(f"{path}: expected 'date,label' leading columns")
        kinds = [h.split(":", 1) for h in header[2:]]
        if any(len(kv) != 2 or kv[0] not in ("market", "theme") for kv in kinds):
            raise PanelError(f"{path}: malformed column header")
        X = np.array([[float(v) for v in r[2:]] for r in rows]).reshape(len(rows), len(kinds))
        mk = [j for j, kv in enumerate(kinds) if kv[0] == "market"]
        th = [j for j, kv in enumerate(kinds) if kv[0] == "theme"]
        return cls(
            country=meta["country"],
            dates=np.array([r[0] for r in rows], dtype="datetime64[D]"),
            market=X[:, mk],
            market_names=tuple(kinds[j][1] for j in mk),
            themes=X[:, th],
            theme_names=tuple(kinds[j][1] for j in th),
            labels=np.array([int(r[1]) for r in rows], dtype=np.int8),
            stats=meta["stats"],
        )


def build_model_data(
    country: str,
    dates,
    beir,
    market,
    market_names: Sequence[str],
    theme_levels,
    theme_names: Sequence[str],
    k: int = 5,
    horizon: int = 1,
) -> ModelData:
    """Align k-differenced features at ``t`` with the label for ``t + horizon``.

    All inputs share one calendar (rows). Usable positions satisfy ``t >= k``
    and ``t + horizon < n``; zero BEIR changes are dropped.
    """
    dates = np.asarray(dates, dtype="datetime64[D]")
    beir = np.asarray(beir, dtype=float)
    market = np.asarray(market, dtype=float)
    themes = np.asarray(theme_levels, dtype=float)
    n = dates.size
    if not (beir.shape == (n,) and market.shape[0] == n and themes.shape[0] == n):
        raise ValueError("all inputs must share the calendar length")
    lab = make_labels(beir, k, horizon)
    use = lab.positions >= k
    t = lab.positions[use]
    cand = np.arange(k, n - horizon)
    n_zero = int(np.sum(beir[cand + horizon] == beir[cand + horizon - k]))
    if t.size == 0:
        raise PanelError(f"{country}: no usable observations after differencing")
    dm = market[t] - market[t - k]
    dth = themes[t] - themes[t - k]
    return ModelData(
        country=country,
        dates=dates[t],
        market=dm,
        market_names=tuple(market_names),
        themes=dth,
        theme_names=tuple(theme_names),
        labels=lab.values[use],
        stats={"zero_changes": n_zero, "calendar_days": int(n), "usable": int(t.size)},
    )
