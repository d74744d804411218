"""Keyword rules mapping GDELT theme labels onto 30 theme categories."""

from __future__ import annotations

import csv
import hashlib
import threading
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

CATEGORIES = (
    "Ecofin", "Disease", "Actor", "Action", "Language", "Ethnicity", "Animal",
    "Disaster", "Social", "Relation", "Political", "Health", "Weapons",
    "Military", "Terror", "Environment", "Food", "Government", "Aid groups",
    "Information", "Conflict", "Emergency", "Human rights", "Migration",
    "Agriculture", "Discrimination", "Incident", "Criminal", "Tech",
    "Points of interest",
)
DESCRIPTIVE = frozenset({"Actor", "Ethnicity", "Language", "Points of interest", "Animal"})
RETAINED = tuple(c for c in CATEGORIES if c not in DESCRIPTIVE)

UNMAPPED = "Unmapped"
# bucket used when reporting unmapped themes that are kept
UNMAPPED_REPORT_CATEGORY = "Action"

DEFAULT_RULES_PATH = "data/taxonomy_rules.csv"


class TaxonomyError(ValueError):
    pass


@dataclass
class ThemeTaxonomy:
    """Ordered substring rules; the first pattern contained in a label wins.

    Matching is case-sensitive against uppercase GDELT labels. Results are
    memoized in a lock-protected cache, so one instance can be shared
    between threads.
    """

    rules: tuple[tuple[str, str], ...]
    drop_unmapped: bool = False
    source: str = "<memory>"
    _cache: dict = field(default_factory=dict, repr=False, compare=False)
    _lock: threading.Lock = field(default_factory=threading.Lock, repr=False, compare=False)

    def __post_init__(self):
        if not self.rules:
            raise TaxonomyError("taxonomy has no rules")
        seen = set()
        for pattern, category in self.rules:
            if category not in CATEGORIES:
                raise TaxonomyError(f"unknown category {category!r} for pattern {pattern!r}")
            if not pattern:
                raise TaxonomyError("empty pattern")
            if pattern in seen:
                raise TaxonomyError(f"duplicate pattern {pattern!r}")
            seen.add(pattern)

    def __getstate__(self):
        # the cache and lock are per-process; workers rebuild them
        return {"rules": self.rules, "drop_unmapped": self.drop_unmapped, "source": self.source}

    def __setstate__(self, state):
        self.__dict__.update(state)
        self._cache = {}
        self._lock = threading.Lock()

    def categorize(self, label: str) -> str:
        """Category of ``label``, or ``UNMAPPED`` when no rule matches."""
        try:
            return self._cache[label]
        except KeyError:
            pass
        result = UNMAPPED
        for pattern, category in self.rules:
            if pattern in label:
                result = category
                break
        with self._lock:
            self._cache[label] = result
        return result

    def is_retained(self, label: str) -> bool:
        cat = self.categorize(label)
        if cat == UNMAPPED:
            return not self.drop_unmapped
        return cat not in DESCRIPTIVE

    def report_category(self, label: str) -> str:
        """Category used in profiles and counts (unmapped themes report as Action)."""
        cat = self.categorize(label)
        return UNMAPPED_REPORT_CATEGORY if cat == UNMAPPED else cat

    def is_ecofin(self, label: str) -> bool:
        return self.categorize(label) == "Ecofin"

    @property
    def digest(self) -> str:
        """Stable hash of the rule table and unmapped-theme policy."""
        h = hashlib.sha256()
        for pattern, category in self.rules:
            h.update(f"{pattern}\x1f{category}\x1e".encode())
        h.update(b"drop" if self.drop_unmapped else b"keep")
        return h.hexdigest()


def parse_rules(lines, source: str = "<rules>") -> tuple[tuple[str, str], ...]:
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise TaxonomyError(f"{source}: empty rules file") from None
    if [h.strip() for h in header] != ["pattern", "category"]:
        raise TaxonomyError(f"{source}:1: expected header 'pattern,category', got {header!r}")
    rules = []
    seen = {}
    for row in reader:
        lineno = reader.line_num
        if not row or all(not c.strip() for c in row):
            continue
        if len(row) != 2:
            raise TaxonomyError(f"{source}:{lineno}: expected 2 fields, got {len(row)}")
        pattern, category = row[0].strip(), row[1].strip()
        if not pattern:
            raise TaxonomyError(f"{source}:{lineno}: empty pattern")
        if category not in CATEGORIES:
            raise TaxonomyError(f"{source}:{lineno}: unknown category {category!r}")
        if pattern in seen:
            raise TaxonomyError(f"{source}:{lineno}: duplicate pattern {pattern!r} (first on line {seen[pattern]})")
        seen[pattern] = lineno
        rules.append((pattern, category))
    if not rules:
        raise TaxonomyError(f"{source}: no rules")
    return tuple(rules)


def load_rules(path=None, drop_unmapped: bool = False) -> ThemeTaxonomy:
    """Load a ``pattern,category`` CSV; ``None`` loads the bundled default table."""
    if path is None:
        text = resources.files("beir_narrative").joinpath(DEFAULT_RULES_PATH).read_text(encoding="utf-8")
        source = f"<bundled {DEFAULT_RULES_PATH}>"
    else:
        path = Path(path)
        text = path.read_text(encoding="utf-8")
        source = str(path)
    rules = parse_rules(text.splitlines(), source)
    return ThemeTaxonomy(rules=rules, drop_unmapped=drop_unmapped, source=source)
