"""Market time series: CSV loading, the country roster and calendar alignment."""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

# ISO-style country keys used throughout, with their GDELT FIPS codes
COUNTRIES = ("US", "UK", "DE", "JP", "ZA", "AU", "BR", "MX")
FIPS = {"US": "US", "UK": "UK", "DE": "GM", "JP": "JA", "ZA": "SF", "AU": "AS", "BR": "BR", "MX": "MX"}
COMMODITIES = ("GOLD", "OIL", "BCOM")
# the US dollar is the numeraire, so the US has no FX series by default
NO_FX_DEFAULT = ("US",)

CSV_HEADER = ("date", "name", "country", "value")
MIN_MODEL_LENGTH = 30


class MarketDataError(ValueError):
    pass


@dataclass(frozen=True)
class MarketSeries:
    name: str
    country: str | None
    dates: np.ndarray  # datetime64[D], strictly increasing
    values: np.ndarray

    def __post_init__(self):
        dates = np.asarray(self.dates, dtype="datetime64[D]")
        values = np.asarray(self.values, dtype=float)
        if dates.shape != values.shape or dates.ndim != 1:
            raise MarketDataError(f"{self.name}: dates and values must be 1-D and equal length")
        if dates.size > 1 and not np.all(dates[1:] > dates[:-1]):
            raise MarketDataError(f"{self.name}: dates must be strictly increasing")
        if not np.all(np.isfinite(values)):
            raise MarketDataError(f"{self.name}: non-finite value")
        object.__setattr__(self, "dates", dates)
        object.__setattr__(self, "values", values)

    def __len__(self):
        return self.values.size

    def __eq__(self, other):
        if not isinstance(other, MarketSeries):
            return NotImplemented
        return (
            self.name == other.name
            and self.country == other.country
            and np.array_equal(self.dates, other.dates)
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


@dataclass(frozen=True)
class CountrySpec:
    country: str
    beir: str
    stock: str
    steepener: str
    fx: str | None = None

    @property
    def market_names(self) -> tuple[str, ...]:
        """Country-specific explanatory series, in a fixed order."""
        names = [self.stock]
        if self.fx:
            names.append(self.fx)
        names.append(self.steepener)
        return tuple(names)


def country_spec(country: str, with_fx: bool | None = None) -> CountrySpec:
    if with_fx is None:
        with_fx = country not in NO_FX_DEFAULT
    return CountrySpec(
        country=country,
        beir=f"{country}_BEIR",
        stock=f"{country}_STOCK",
        steepener=f"{country}_STEEP",
        fx=f"{country}_FX" if with_fx else None,
    )


def default_roster(countries=COUNTRIES) -> tuple[list[CountrySpec], tuple[str, ...]]:
    """Country specs plus the full list of market series names they require."""
    specs = [country_spec(c) for c in countries]
    names = []
    for s in specs:
        names.append(s.beir)
        names.extend(s.market_names)
    names.extend(COMMODITIES)
    return specs, tuple(names)


def load_series(path) -> list[MarketSeries]:
    """Read a long-format ``date,name,country,value`` CSV.

    Series come back sorted by name, each sorted by date. Bad dates,
    non-finite values and duplicate ``(name, date)`` rows are fatal and
    reported with their line number.
    """
    path = Path(path)
    rows: dict[str, list[tuple[np.datetime64, float]]] = {}
    country_of: dict[str, str | None] = {}
    seen: dict[tuple[str, str], int] = {}
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or tuple(h.strip() for h in header) != CSV_HEADER:
            raise MarketDataError(f"{path}:1: expected header {','.join(CSV_HEADER)}")
        for row in reader:
            lineno = reader.line_num
            if not row:
                continue
            if len(row) != 4:
                raise MarketDataError(f"{path}:{lineno}: expected 4 fields, got {len(row)}")
            date_s, name, country, value_s = (c.strip() for c in row)
            try:
                day = dt.date.fromisoformat(date_s)
            except ValueError:
                raise MarketDataError(f"{path}:{lineno}: bad ISO date {date_s!r}") from None
            try:
                value = float(value_s)
            except ValueError:
                raise MarketDataError(f"{path}:{lineno}: bad value {value_s!r}") from None
            if not math.isfinite(value):
                raise MarketDataError(f"{path}:{lineno}: non-finite value {value_s!r}")
            if not name:
                raise MarketDataError(f"{path}:{lineno}: empty series name")
            key = (name, date_s)
            if key in seen:
                raise MarketDataError(f"{path}:{lineno}: duplicate row for {name} on {date_s} (first on line {seen[key]})")
            seen[key] = lineno
            country = country or None
            if name in country_of and country_of[name] != country:
                raise MarketDataError(f"{path}:{lineno}: series {name} changes country")
            country_of[name] = country
            rows.setdefault(name, []).append((np.datetime64(day, "D"), value))
    out = []
    for name in sorted(rows):
        pairs = sorted(rows[name], key=lambda p: p[0])
        out.append(
            MarketSeries(
                name=name,
                country=country_of[name],
                dates=np.array([p[0] for p in pairs], dtype="datetime64[D]"),
                values=np.array([p[1] for p in pairs]),
            )
        )
    return out


def write_series(series, path) -> None:
    """Write series in the long CSV format, sorted by name then date."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for s in sorted(series, key=lambda s: s.name):
            for d, v in zip(s.dates, s.values):
                w.writerow((str(d), s.name, s.country or "", repr(float(v))))


def check_roster(series, required) -> None:
    have = {s.name for s in series}
    missing = [n for n in required if n not in have]
    if missing:
        raise MarketDataError(f"missing market series: {', '.join(missing)}")


@dataclass(frozen=True)
class AlignedMatrix:
    """Series values on a calendar; rows with any gap are outside the common sample.

    ``values`` keeps NaN where a series has no usable observation; ``dates``
    and ``matrix`` expose only the common sample.
    """

    calendar: np.ndarray
    names: tuple[str, ...]
    values: np.ndarray
    fills: dict = field(default_factory=dict)

    @property
    def mask(self) -> np.ndarray:
        return np.all(np.isfinite(self.values), axis=1)

    @property
    def dates(self) -> np.ndarray:
        return self.calendar[self.mask]

    @property
    def matrix(self) -> np.ndarray:
        return self.values[self.mask]

    def column(self, name: str) -> np.ndarray:
        return self.matrix[:, self.names.index(name)]


def beir_calendar(beir: MarketSeries) -> np.ndarray:
    """The modelling calendar: every date with a BEIR observation."""
    return beir.dates.copy()


def align_calendar(series, calendar, ffill_limit: int = 5, trailing: str = "error") -> AlignedMatrix:
    """Put ``series`` on ``calendar`` (positions, not calendar-day arithmetic).

    A calendar date without an observation takes the last observed value if
    it is at most ``ffill_limit`` calendar positions old; longer gaps and
    dates before a series starts stay missing and drop out of the common
    sample. Observations off the calendar are ignored. Dates after a
    series' last observation are never filled: ``trailing="error"`` raises,
    ``"exclude"`` drops them from the sample.
    """
    if trailing not in ("error", "exclude"):
        raise ValueError(f"unknown trailing policy {trailing!r}")
    if ffill_limit < 0:
        raise ValueError("ffill_limit must be >= 0")
    cal = np.unique(np.asarray(calendar, dtype="datetime64[D]"))
    if cal.size == 0:
        raise MarketDataError("empty calendar")
    series = list(series)
    out = np.full((cal.size, len(series)), np.nan)
    fills = {}
    for j, s in enumerate(series):
        pos = np.searchsorted(cal, s.dates)
        hit = (pos < cal.size) & (cal[np.minimum(pos, cal.size - 1)] == s.dates)
        if not hit.any():
            raise MarketDataError(f"series {s.name} has no observations on the calendar")
        col = np.full(cal.size, np.nan)
        col[pos[hit]] = s.values[hit]
        if s.dates[-1] < cal[-1]:
            tail_start = int(np.searchsorted(cal, s.dates[-1], side="right"))
            if trailing == "error":
                raise MarketDataError(
                    f"series {s.name} ends on {s.dates[-1]}, {cal.size - tail_start} calendar dates "
                    f"before the calendar end {cal[-1]}; trailing gaps are not filled"
                )
        else:
            tail_start = cal.size
        observed = np.isfinite(col)
        # index of the last observation at or before each position
        last = np.where(observed, np.arange(cal.size), -1)
        last = np.maximum.accumulate(last)
        age = np.arange(cal.size) - last
        can_fill = (~observed) & (last >= 0) & (age <= ffill_limit) & (np.arange(cal.size) < tail_start)
        col[can_fill] = col[last[can_fill]]
        fills[s.name] = int(can_fill.sum())
        out[:, j] = col
    aligned = AlignedMatrix(cal, tuple(s.name for s in series), out, fills)
    if not aligned.mask.any():
        raise MarketDataError("aligned series share no common dates")
    return aligned
