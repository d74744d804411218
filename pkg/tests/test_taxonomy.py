import threading
from pathlib import Path

import pytest
from hypothesis import given
from hypothesis import strategies as st

from beir_narrative.taxonomy import (
    CATEGORIES,
    DESCRIPTIVE,
    RETAINED,
    UNMAPPED,
    TaxonomyError,
    ThemeTaxonomy,
    load_rules,
    parse_rules,
)

FIXTURES = Path(__file__).parent / "fixtures"


@pytest.fixture(scope="module")
def tax():
    return load_rules()


def test_category_roster():
    assert len(CATEGORIES) == 30 and len(set(CATEGORIES)) == 30
    assert DESCRIPTIVE == {"Actor", "Ethnicity", "Language", "Points of interest", "Animal"}
    assert len(RETAINED) == 25


def test_weapon_rule_from_file(tmp_path):
    p = tmp_path / "rules.csv"
    p.write_text("pattern,category\nWEAPON,Weapons\n")
    t = load_rules(p)
    assert t.categorize("TAX_WEAPONS_BOMB") == "Weapons"


@pytest.mark.parametrize("text", ["", "pattern,category\n"])
def test_empty_rules_rejected(tmp_path, text):
    p = tmp_path / "rules.csv"
    p.write_text(text)
    with pytest.raises(TaxonomyError):
        load_rules(p)


def test_duplicate_pattern_rejected_with_line_number(tmp_path):
    p = tmp_path / "rules.csv"
    p.write_text("pattern,category\nECON_,Ecofin\nWEAPON,Weapons\nECON_,Ecofin\n")
    with pytest.raises(TaxonomyError, match=r":4: duplicate pattern 'ECON_' \(first on line 2\)"):
        load_rules(p)


def test_unknown_category_and_bad_rows():
    with pytest.raises(TaxonomyError, match=":2: unknown category"):
        parse_rules(["pattern,category", "FOO,Economy"])
    with pytest.raises(TaxonomyError, match=":3: expected 2 fields"):
        parse_rules(["pattern,category", "FOO,Ecofin", "BAR"])
    with pytest.raises(TaxonomyError, match="expected header"):
        parse_rules(["theme,cat", "FOO,Ecofin"])
    with pytest.raises(TaxonomyError):
        ThemeTaxonomy(rules=(("X", "Nope"),))


@pytest.mark.parametrize(
    "label,category",
    [
        ("TAX_WEAPONS_SUICIDE_BOMB", "Weapons"),
        ("TAX_WEAPONS_BOMB", "Weapons"),
        ("TAX_DISEASE_INFLUENZA", "Disease"),
        ("ZZZ_NO_MATCH", UNMAPPED),
        ("ECON_INFLATION", "Ecofin"),
        ("WB_1104_MACROECONOMIC_VULNERABILITY_AND_DEBT", "Ecofin"),
        ("TAX_FNCACT_PRESIDENT", "Actor"),
        ("TAX_ETHNICITY_AMERICAN", "Ethnicity"),
        ("TAX_WORLDLANGUAGES_SPANISH", "Language"),
        ("TAX_WORLDMAMMALS_DOG", "Animal"),
        ("TAX_POINTSOFINTEREST_AIRPORT", "Points of interest"),
        ("NATURAL_DISASTER_FLOODS", "Disaster"),
        ("WB_2024_SKILLS_DEVELOPMENT", "Social"),
        ("KILL", "Criminal"),
    ],
)
def test_default_rules(tax, label, category):
    assert tax.categorize(label) == category


def test_first_match_wins():
    t = ThemeTaxonomy(rules=(("TAX_", "Action"), ("WEAPON", "Weapons")))
    assert t.categorize("TAX_WEAPONS_BOMB") == "Action"
    t2 = ThemeTaxonomy(rules=(("WEAPON", "Weapons"), ("TAX_", "Action")))
    assert t2.categorize("TAX_WEAPONS_BOMB") == "Weapons"


def test_retention_policy(tax):
    assert not tax.is_retained("TAX_FNCACT_PRESIDENT")
    assert tax.is_retained("ECON_STOCKMARKET")
    assert tax.is_retained("ZZZ_NO_MATCH")
    assert tax.report_category("ZZZ_NO_MATCH") == "Action"
    strict = load_rules(drop_unmapped=True)
    assert not strict.is_retained("ZZZ_NO_MATCH")
    assert strict.digest != tax.digest


def test_matching_is_case_sensitive(tax):
    assert tax.categorize("econ_inflation") == UNMAPPED


def test_label_fixture_retained_fraction(tax):
    labels = (FIXTURES / "gkg_theme_labels.txt").read_text().split()
    assert len(labels) == 1000 and len(set(labels)) == 1000
    frac = sum(tax.is_retained(x) for x in labels) / len(labels)
    assert 0.60 <= frac <= 0.85
    assert {tax.categorize(x) for x in labels} >= set(CATEGORIES)


def test_digest_stable(tax):
    assert load_rules().digest == tax.digest
    assert len(tax.digest) == 64


@given(st.text(alphabet="ABCDEFGHIJKLMNOPQRSTUVWXYZ_0123456789", min_size=1, max_size=40))
def test_categorize_pure(label):
    a, b = load_rules(), load_rules()
    assert a.categorize(label) == b.categorize(label) == a.categorize(label)
    assert a.categorize(label) in CATEGORIES or a.categorize(label) == UNMAPPED


def test_concurrent_categorize(tax):
    labels = (FIXTURES / "gkg_theme_labels.txt").read_text().split()
    fresh = load_rules()
    expected = [tax.categorize(x) for x in labels]
    results = {}

    def work(i):
        results[i] = [fresh.categorize(x) for x in labels]

    threads = [threading.Thread(target=work, args=(i,)) for i in range(8)]
    for t in threads:
        t.start()
    for t in threads:
        t.join()
    assert all(r == expected for r in results.values())
