"""Parsing and filtering of GDELT Global Knowledge Graph (v2.x) export files.

Files are tab-delimited, one news item per line, optionally gzip-compressed.
Only four columns matter here: the record id, the DATE stamp, a themes field
and a locations field, plus the V1.5 tone block whose first value is the
document's average tone.
"""

from __future__ import annotations

import datetime as dt
import gzip
import io
import json
import logging
import math
import os
from collections import Counter
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Mapping

from .taxonomy import ThemeTaxonomy

log = logging.getLogger(__name__)

# GKG 2.1 column layout (0-based)
DEFAULT_SCHEMA = {
    "record_id": 0,
    "date": 1,
    "themes": 8,  # V2EnhancedThemes: THEME,offset;THEME,offset;...
    "locations": 10,  # V2EnhancedLocations
    "tone": 15,
    "n_columns": 27,
}
SCHEMA_FIELDS = ("record_id", "date", "themes", "locations", "tone")

BAD_COLUMN_COUNT = "bad-column-count"
BAD_TONE = "bad-tone"
BAD_DATE = "bad-date"
SKIP_REASONS = (BAD_COLUMN_COUNT, BAD_TONE, BAD_DATE)


@dataclass(frozen=True, slots=True)
class GkgRecord:
    record_id: str
    date: dt.date
    themes: tuple[str, ...]
    avg_tone: float
    country_codes: frozenset[str]

    def __post_init__(self):
        if not (-10.0 <= self.avg_tone <= 10.0):
            raise ValueError(f"avg_tone {self.avg_tone} outside [-10, 10]")
        if len(set(self.themes)) != len(self.themes):
            raise ValueError("themes must be deduplicated")

    def to_json(self) -> str:
        return json.dumps(
            {
                "record_id": self.record_id,
                "date": self.date.isoformat(),
                "themes": list(self.themes),
                "avg_tone": self.avg_tone,
                "country_codes": sorted(self.country_codes),
            },
            ensure_ascii=False,
        )

    @classmethod
    def from_json(cls, text: str) -> "GkgRecord":
        d = json.loads(text)
        return cls(
            record_id=str(d["record_id"]),
            date=dt.date.fromisoformat(d["date"]),
            themes=tuple(d["themes"]),
            avg_tone=float(d["avg_tone"]),
            country_codes=frozenset(d["country_codes"]),
        )


@dataclass(frozen=True, slots=True)
class Skip:
    """Marker for a line that could not be turned into a record."""

    reason: str
    line_no: int = 0


@dataclass(frozen=True)
class IngestFilter:
    target_country: str
    min_ecofin_themes: int = 3

    def __post_init__(self):
        if self.min_ecofin_themes < 1:
            raise ValueError("min_ecofin_themes must be >= 1")
        if len(self.target_country) != 2:
            raise ValueError(f"target_country must be a 2-letter FIPS code, got {self.target_country!r}")


@dataclass
class IngestStats:
    lines_read: int = 0
    parsed: int = 0
    filtered_in: int = 0
    skipped: Counter = field(default_factory=Counter)
    files_read: int = 0
    file_errors: dict = field(default_factory=dict)

    @property
    def skipped_total(self) -> int:
        return sum(self.skipped.values())

    def merge(self, other: "IngestStats") -> None:
        self.lines_read += other.lines_read
        self.parsed += other.parsed
        self.filtered_in += other.filtered_in
        self.skipped.update(other.skipped)
        self.files_read += other.files_read
        self.file_errors.update(other.file_errors)

    def to_dict(self) -> dict:
        return {
            "lines_read": self.lines_read,
            "parsed": self.parsed,
            "filtered_in": self.filtered_in,
            "skipped": {r: self.skipped.get(r, 0) for r in SKIP_REASONS},
            "files_read": self.files_read,
            "file_errors": dict(sorted(self.file_errors.items())),
        }


def resolve_schema(schema: Mapping[str, int] | None = None) -> dict:
    out = dict(DEFAULT_SCHEMA)
    if schema:
        unknown = set(schema) - set(DEFAULT_SCHEMA)
        if unknown:
            raise ValueError(f"unknown schema keys: {sorted(unknown)}")
        out.update(schema)
    for key in SCHEMA_FIELDS:
        if not isinstance(out[key], int) or out[key] < 0:
            raise ValueError(f"schema index for {key!r} must be a nonnegative int")
    return out


def _as_text(value) -> str:
    if isinstance(value, bytes):
        return value.decode("utf-8", errors="replace")
    return value


def split_themes(field_text: str) -> tuple[str, ...]:
    """Split a themes field, dropping ``,offset`` suffixes and duplicates."""
    out = {}
    for item in field_text.split(";"):
        if not item:
            continue
        label = item.split(",", 1)[0].strip()
        if label:
            out[label] = None
    return tuple(out)


def location_countries(field_text: str) -> frozenset[str]:
    """FIPS country codes (third ``#``-separated slot) of every location entry."""
    codes = set()
    for entry in field_text.split(";"):
        if not entry:
            continue
        parts = entry.split("#")
        if len(parts) > 2:
            cc = parts[2]
            if len(cc) == 2 and cc.isalpha():
                codes.add(cc.upper())
    return frozenset(codes)


def _parse_date(text: str) -> dt.date | None:
    text = text.strip()
    if len(text) not in (8, 14) or not text.isdigit():
        return None
    try:
        return dt.date(int(text[0:4]), int(text[4:6]), int(text[6:8]))
    except ValueError:
        return None


def _parse_tone(text: str) -> float | None:
    head = text.split(",", 1)[0].strip()
    try:
        tone = float(head)
    except ValueError:
        return None
    if not math.isfinite(tone) or not -10.0 <= tone <= 10.0:
        return None
    return tone


def parse_gkg_line(line, schema: Mapping[str, int] | None = None, line_no: int = 0) -> GkgRecord | Skip:
    """Parse one tab-delimited GKG line into a record or a ``Skip`` marker.

    ``line`` may be ``str`` or ``bytes``; a trailing newline is ignored.
    """
    return _parse(line, resolve_schema(schema), line_no)


def _parse(line, sch: Mapping[str, int], line_no: int) -> GkgRecord | Skip:
    if isinstance(line, bytes):
        line = line.rstrip(b"\r\n")
        fields = line.split(b"\t")
    else:
        line = line.rstrip("\r\n")
        fields = line.split("\t")
    n_expected = sch.get("n_columns")
    if n_expected:
        if len(fields) != n_expected:
            return Skip(BAD_COLUMN_COUNT, line_no)
    elif len(fields) <= max(sch[k] for k in SCHEMA_FIELDS):
        return Skip(BAD_COLUMN_COUNT, line_no)
    date = _parse_date(_as_text(fields[sch["date"]]))
    if date is None:
        return Skip(BAD_DATE, line_no)
    tone = _parse_tone(_as_text(fields[sch["tone"]]))
    if tone is None:
        return Skip(BAD_TONE, line_no)
    return GkgRecord(
        record_id=_as_text(fields[sch["record_id"]]),
        date=date,
        themes=split_themes(_as_text(fields[sch["themes"]])),
        avg_tone=tone,
        country_codes=location_countries(_as_text(fields[sch["locations"]])),
    )


def format_gkg_line(
    record_id: str,
    when: dt.date | dt.datetime,
    themes: Iterable[str],
    avg_tone: float,
    countries: Iterable[str],
    n_columns: int = 27,
    filler: str = "",
) -> str:
    """Build a GKG 2.1 line (no newline) in the default column layout.

    Themes go to the enhanced field with synthetic character offsets,
    countries become ADM1-level enhanced location entries. ``filler`` is
    placed in the GCAM column to mimic realistic line lengths.
    """
    if isinstance(when, dt.datetime):
        stamp = when.strftime("%Y%m%d%H%M%S")
    else:
        stamp = when.strftime("%Y%m%d") + "000000"
    cols = [""] * n_columns
    cols[0] = record_id
    cols[1] = stamp
    cols[2] = "1"
    cols[3] = "example.com"
    cols[4] = f"https://example.com/{record_id}"
    themes = list(themes)
    cols[7] = ";".join(themes) + (";" if themes else "")
    cols[8] = "".join(f"{t},{100 + 37 * i};" for i, t in enumerate(themes))
    locs = [f"1#{cc} place#{cc}#{cc}00##0.0#0.0#{cc}#{200 + i}" for i, cc in enumerate(countries)]
    cols[9] = ";".join(f"1#{cc} place#{cc}#{cc}00#0.0#0.0#{cc}" for cc in countries)
    cols[10] = ";".join(locs)
    cols[15] = f"{avg_tone!r},2.1,1.3,3.4,20.5,0.5,250"
    if n_columns > 17:
        cols[17] = filler
    return "\t".join(cols)


def ecofin_count(rec: GkgRecord, tax: ThemeTaxonomy) -> int:
    return sum(1 for t in rec.themes if tax.categorize(t) == "Ecofin")


def passes_filter(rec: GkgRecord, f: IngestFilter, tax: ThemeTaxonomy) -> bool:
    """Country present in the locations and enough distinct Ecofin themes."""
    if f.target_country not in rec.country_codes:
        return False
    return ecofin_count(rec, tax) >= f.min_ecofin_themes


def open_maybe_gzip(path) -> io.BufferedIOBase:
    fh = open(path, "rb")
    magic = fh.peek(2)[:2] if hasattr(fh, "peek") else b""
    if magic == b"\x1f\x8b":
        return gzip.open(fh, "rb")
    return fh


def iter_file(path, schema: Mapping[str, int] | None = None) -> Iterator[GkgRecord | Skip]:
    """Yield a record or ``Skip`` for every non-blank line of ``path``."""
    sch = resolve_schema(schema)
    with open_maybe_gzip(path) as fh:
        for line_no, raw in enumerate(fh, start=1):
            if raw in (b"\n", b"\r\n", b""):
                continue
            yield _parse(raw, sch, line_no)


def _ingest_one(path, filters: Mapping[str, IngestFilter], tax: ThemeTaxonomy, schema):
    stats = IngestStats()
    by_country: dict[str, list[GkgRecord]] = {c: [] for c in filters}
    counts = Counter()
    try:
        for item in iter_file(path, schema):
            stats.lines_read += 1
            if isinstance(item, Skip):
                stats.skipped[item.reason] += 1
                continue
            stats.parsed += 1
            if not item.country_codes:
                continue
            eco = None
            for key, f in filters.items():
                if f.target_country in item.country_codes:
                    if eco is None:
                        eco = ecofin_count(item, tax)
                    if eco >= f.min_ecofin_themes:
                        by_country[key].append(item)
                        counts[key] += 1
        stats.files_read = 1
    except OSError as exc:
        stats.file_errors[str(path)] = f"{type(exc).__name__}: {exc}"
        log.error("cannot read %s: %s", path, exc)
        return stats, {c: [] for c in filters}, Counter()
    for recs in by_country.values():
        recs.sort(key=lambda r: r.date)  # stable: file order within a day
    return stats, by_country, counts


def ingest_by_country(
    paths: Iterable,
    filters: Mapping[str, IngestFilter],
    tax: ThemeTaxonomy,
    schema: Mapping[str, int] | None = None,
    jobs: int = 1,
) -> tuple[dict[str, list[GkgRecord]], dict[str, IngestStats]]:
    """Parse each file once and route passing records to every matching filter.

    Returns per-key record lists (date-sorted within each file, files in the
    given order) and per-key stats; line counters are shared, ``filtered_in``
    is per key. An unreadable file is recorded in ``file_errors`` and skipped.
    """
    paths = [os.fspath(p) for p in paths]
    records = {k: [] for k in filters}
    shared = IngestStats()
    filtered = Counter()
    if jobs > 1 and len(paths) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_ingest_one, paths, [filters] * len(paths), [tax] * len(paths), [schema] * len(paths)))
    else:
        results = [_ingest_one(p, filters, tax, schema) for p in paths]
    for stats, by_country, counts in results:
        shared.merge(stats)
        filtered.update(counts)
        for k, recs in by_country.items():
            records[k].extend(recs)
    per_key = {}
    for k in filters:
        s = IngestStats(
            lines_read=shared.lines_read,
            parsed=shared.parsed,
            filtered_in=filtered[k],
            skipped=Counter(shared.skipped),
            files_read=shared.files_read,
            file_errors=dict(shared.file_errors),
        )
        per_key[k] = s
    return records, per_key


def ingest_files(paths, f: IngestFilter, tax: ThemeTaxonomy, schema=None, jobs: int = 1):
    """Records passing ``f`` from every file, plus the ingest statistics."""
    records, stats = ingest_by_country(paths, {"_": f}, tax, schema=schema, jobs=jobs)
    return records["_"], stats["_"]


def write_records(records: Iterable[GkgRecord], path) -> int:
    n = 0
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for rec in records:
            fh.write(rec.to_json())
            fh.write("\n")
            n += 1
    return n


def read_records(path) -> list[GkgRecord]:
    with open(path, encoding="utf-8") as fh:
        return [GkgRecord.from_json(line) for line in fh if line.strip()]
