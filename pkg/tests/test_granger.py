import csv
import itertools
from fractions import Fraction
from pathlib import Path

import networkx as nx
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from oracles import brute_betweenness

from beir_narrative.granger import (
    GrangerError,
    VariablePanel,
    beir_predecessors,
    betweenness,
    build_graph,
    density,
    edges_csv,
    graph_summary,
    nodes_csv,
    pairwise_granger,
    predecessors_csv,
    quintile_rank,
    to_dot,
    to_graphml,
    variable_roster,
)

FIXTURES = Path(__file__).parent / "fixtures"
COUNTRIES = ("US", "UK", "DE", "JP", "ZA", "AU", "BR", "MX")


def names(n):
    return [f"v{i}" for i in range(n)]


def planted_panel(seed, n=500, b=0.5):
    """Eight white-noise series with lag-1 edges 0->1, 2->3, 4->5."""
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, 8))
    for s, t in ((0, 1), (2, 3), (4, 5)):
        X[1:, t] += b * X[:-1, s]
    return X


# --- pairwise tests ------------------------------------------------------------


def test_known_direction():
    rng = np.random.default_rng(7)
    x = rng.standard_normal(500)
    y = np.empty(500)
    y[0] = rng.standard_normal()
    y[1:] = 0.8 * x[:-1] + rng.standard_normal(499)
    t = pairwise_granger(np.column_stack([x, y]), names=["x", "y"])
    assert t.p_values[0, 1] < 1e-6
    assert t.p_values[1, 0] > 0.05
    assert np.isnan(t.p_values[0, 0]) and np.isnan(t.p_values[1, 1])
    assert t.nobs == 499


def test_identical_series_is_degenerate():
    x = np.random.default_rng(0).standard_normal(100)
    t = pairwise_granger(np.column_stack([x, x]))
    assert t.degenerate[0, 1] and t.degenerate[1, 0]
    assert t.p_values[0, 1] == 1.0


def test_matches_direct_regression():
    # statsmodels-free oracle: F from two lstsq fits
    rng = np.random.default_rng(3)
    X = rng.standard_normal((80, 3)).cumsum(axis=0) * 0.1 + rng.standard_normal((80, 3))
    t = pairwise_granger(X)
    from scipy import stats as sps

    for i, j in itertools.permutations(range(3), 2):
        y = X[1:, j]
        R = np.column_stack([np.ones(79), X[:-1, j]])
        F = np.column_stack([R, X[:-1, i]])
        rss_r = np.sum((y - R @ np.linalg.lstsq(R, y, rcond=None)[0]) ** 2)
        rss_f = np.sum((y - F @ np.linalg.lstsq(F, y, rcond=None)[0]) ** 2)
        f = (rss_r - rss_f) / (rss_f / (79 - 3))
        assert t.statistics[i, j] == pytest.approx(f, rel=1e-9)
        assert t.p_values[i, j] == pytest.approx(sps.f.sf(f, 1, 76), rel=1e-8, abs=1e-14)


def test_lag_two_uses_two_restrictions():
    rng = np.random.default_rng(5)
    x = rng.standard_normal(300)
    y = np.zeros(300)
    y[2:] = 0.6 * x[:-2] + rng.standard_normal(298)
    t1 = pairwise_granger(np.column_stack([x, y]), lag=1)
    t2 = pairwise_granger(np.column_stack([x, y]), lag=2)
    assert t2.p_values[0, 1] < 1e-6 < t1.p_values[0, 1]


def test_too_short():
    with pytest.raises(GrangerError, match="at least 31"):
        pairwise_granger(np.zeros((30, 2)))


def test_jobs_do_not_change_results():
    X = planted_panel(1, n=120)
    a = pairwise_granger(X, jobs=1)
    b = pairwise_granger(X, jobs=2)
    np.testing.assert_array_equal(a.p_values, b.p_values)


def test_white_noise_rejection_share():
    ok = 0
    for seed in range(50):
        X = np.random.default_rng(seed).standard_normal((500, 10))
        g = build_graph(pairwise_granger(X).p_values, names(10))
        ok += len(g.edges) <= 0.05 * 90
    assert ok >= 45


def test_planted_edges_always_found():
    # full power on every seed; false-edge frequency is covered by the acceptance suite
    planted = {("v0", "v1"), ("v2", "v3"), ("v4", "v5")}
    for seed in range(20):
        g = build_graph(pairwise_granger(planted_panel(seed)).p_values, names(8))
        assert planted <= {(e.source, e.target) for e in g.edges}


def test_permutation_invariance():
    X = planted_panel(4)
    perm = np.random.default_rng(0).permutation(8)
    nm = names(8)
    g1 = build_graph(pairwise_granger(X).p_values, nm)
    g2 = build_graph(pairwise_granger(X[:, perm]).p_values, [nm[k] for k in perm])
    e1 = {(e.source, e.target): e.p_adj for e in g1.edges}
    e2 = {(e.source, e.target): e.p_adj for e in g2.edges}
    assert e1.keys() == e2.keys()
    for k in e1:
        assert e1[k] == pytest.approx(e2[k], rel=1e-12)


def test_two_cycles_are_kept():
    rng = np.random.default_rng(9)
    n = 500
    x, y = np.zeros(n), np.zeros(n)
    for t in range(1, n):
        x[t] = 0.5 * y[t - 1] + rng.standard_normal()
        y[t] = 0.5 * x[t - 1] + rng.standard_normal()
    g = build_graph(pairwise_granger(np.column_stack([x, y])).p_values, ["x", "y"])
    assert {(e.source, e.target) for e in g.edges} == {("x", "y"), ("y", "x")}


# --- graph ------------------------------------------------------------------------


def test_density_paper_value():
    assert Fraction(817, 74 * 73) == Fraction(817, 5402)
    assert density(74, 817) == pytest.approx(0.1512, abs=5e-5)


def test_no_rejections_gives_empty_graph():
    P = np.full((4, 4), 0.9)
    np.fill_diagonal(P, np.nan)
    g = build_graph(P, names(4))
    assert g.edges == () and g.density == 0 and g.n_nodes == 4


def test_incomplete_matrix_raises():
    P = np.full((3, 3), 0.5)
    P[0, 1] = np.nan
    with pytest.raises(GrangerError):
        build_graph(P, names(3))


@settings(max_examples=60, deadline=None)
@given(st.integers(2, 9), st.integers(0, 2**31 - 1), st.floats(0.01, 0.2))
def test_graph_invariants(n, seed, alpha):
    rng = np.random.default_rng(seed)
    P = rng.uniform(0, 1, (n, n)) ** rng.uniform(1, 8)
    np.fill_diagonal(P, np.nan)
    g = build_graph(P, names(n), alpha=alpha)
    assert g.density_fraction == Fraction(len(g.edges), n * (n - 1))
    assert all(e.source != e.target for e in g.edges)
    off = ~np.eye(n, dtype=bool)
    expected = {(f"v{i}", f"v{j}") for i, j in zip(*np.nonzero(off & (g.p_adj <= alpha)))}
    assert {(e.source, e.target) for e in g.edges} == expected


# --- betweenness ------------------------------------------------------------------


def test_path_graph():
    c = betweenness({"a": ["b"], "b": ["c"], "c": []})
    assert c.raw == {"a": 0.0, "b": 1.0, "c": 0.0}
    assert c.normalized["b"] == 0.5
    assert c.normalization == "(n-1)(n-2)"


def test_complete_digraph():
    nodes = list("abcde")
    c = betweenness({v: [w for w in nodes if w != v] for v in nodes})
    assert all(x == 0 for x in c.raw.values())


def test_two_shortest_paths_split_credit():
    c = betweenness({"s": ["a", "b"], "a": ["t"], "b": ["t"], "t": []})
    assert c.raw["a"] == c.raw["b"] == 0.5


@pytest.mark.parametrize("seed", range(40))
def test_betweenness_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(2, 13))
    p = rng.uniform(0.05, 0.6)
    A = (rng.uniform(size=(n, n)) < p) & ~np.eye(n, dtype=bool)
    succ = {f"n{i}": [f"n{j}" for j in np.nonzero(A[i])[0]] for i in range(n)}
    got = betweenness(succ).raw
    oracle = brute_betweenness(succ)
    for v in succ:
        assert got[v] == pytest.approx(float(oracle[v]), abs=1e-12)


@pytest.mark.parametrize("seed", range(5))
def test_betweenness_networkx(seed):
    G = nx.gnp_random_graph(30, 0.1, seed=seed, directed=True)
    succ = {str(v): [str(w) for w in G.successors(v)] for v in G.nodes}
    ours = betweenness(succ)
    ref = nx.betweenness_centrality(G, normalized=False)
    ref_n = nx.betweenness_centrality(G, normalized=True)
    for v in G.nodes:
        assert ours.raw[str(v)] == pytest.approx(ref[v], abs=1e-9)
        assert ours.normalized[str(v)] == pytest.approx(ref_n[v], abs=1e-12)


# --- quintiles --------------------------------------------------------------------


def test_quintiles_ten_distinct():
    q = quintile_rank({f"n{i}": float(i) for i in range(10)})
    assert {v for v, k in q.items() if k == 1} == {"n9", "n8"}
    assert sorted(q.values()) == [1, 1, 2, 2, 3, 3, 4, 4, 5, 5]


def test_quintiles_ties_by_name():
    q = quintile_rank({v: 0.0 for v in ["e", "d", "c", "b", "a"]})
    assert q == {"a": 1, "b": 2, "c": 3, "d": 4, "e": 5}


def test_quintiles_need_five():
    with pytest.raises(GrangerError):
        quintile_rank({"a": 1.0})


def test_quintiles_fixture_74():
    with open(FIXTURES / "quintiles74.csv", newline="") as fh:
        rows = list(csv.DictReader(fh))
    q = quintile_rank({r["node"]: float(r["score"]) for r in rows})
    assert q == {r["node"]: int(r["quintile"]) for r in rows}


# --- roster and predecessors -------------------------------------------------------


def test_roster_size():
    roster = variable_roster(COUNTRIES)
    assert len(roster) == 74
    roles = [r[1] for r in roster]
    assert roles.count("BEIR") == 8 and roles.count("commodity") == 3
    assert roles.count("narrative") == 40 and roles.count("market") == 23


def graph_from_edges(edges):
    roster = variable_roster(COUNTRIES)
    nm = [r[0] for r in roster]
    P = np.ones((74, 74))
    np.fill_diagonal(P, np.nan)
    for s, t in edges:
        P[nm.index(s), nm.index(t)] = 1e-12
    return build_graph(P, nm, roles=[r[1] for r in roster], countries=[r[2] for r in roster])


def test_foreign_narrative_edge():
    rep = beir_predecessors(graph_from_edges([("DE_PLS1", "US_BEIR")]))
    us = rep["US"]
    assert [d["source"] for d in us["foreign_narrative"]] == ["DE_PLS1"]
    assert us["market"] == [] and us["local_narrative"] == []
    assert us["foreign_narrative_countries"] == ["DE"]


def test_isolated_beir_has_empty_report():
    rep = beir_predecessors(graph_from_edges([]))
    assert set(rep) == set(COUNTRIES)
    assert all(not r[g] for r in rep.values() for g in ("market", "local_narrative", "foreign_narrative"))


def test_planted_role_structure():
    edges = [
        ("MX_STOCK", "MX_BEIR"), ("OIL", "MX_BEIR"), ("US_BEIR", "MX_BEIR"),
        ("DE_PLS2", "DE_BEIR"), ("UK_PLS1", "DE_BEIR"), ("JP_PLS3", "DE_BEIR"),
        ("US_PLS1", "UK_STOCK"),
    ]
    rep = beir_predecessors(graph_from_edges(edges))
    assert sorted(d["source"] for d in rep["MX"]["market"]) == ["MX_STOCK", "OIL", "US_BEIR"]
    assert [d["source"] for d in rep["DE"]["local_narrative"]] == ["DE_PLS2"]
    assert rep["DE"]["foreign_narrative_countries"] == ["JP", "UK"]
    assert not rep["UK"]["market"]
    text = predecessors_csv(rep)
    assert text.count("\n") == 1 + 6


# --- panel and export -------------------------------------------------------------


def test_panel_roundtrip(tmp_path):
    dates = np.arange("2020-01-01", "2020-01-11", dtype="datetime64[D]")
    p = VariablePanel(("a", "b"), dates, np.random.default_rng(0).standard_normal((10, 2)), ("BEIR", "narrative"), ("US", "US"))
    p.to_csv(tmp_path / "panel.csv")
    q = VariablePanel.from_csv(tmp_path / "panel.csv")
    assert q.names == p.names and q.roles == p.roles
    np.testing.assert_array_equal(q.values, p.values)
    np.testing.assert_array_equal(q.dates, p.dates)


def test_panel_rejects_nonfinite():
    with pytest.raises(GrangerError, match="b"):
        VariablePanel(("a", "b"), np.arange(2).astype("datetime64[D]"), np.array([[0.0, np.nan], [1, 2]]), ("market",) * 2, ("US",) * 2)


def test_exports_readable():
    g = graph_from_edges([("DE_PLS1", "US_BEIR"), ("US_BEIR", "US_STOCK"), ("OIL", "US_BEIR")])
    G = nx.parse_graphml(to_graphml(g))
    assert G.number_of_nodes() == 74 and G.number_of_edges() == 3
    assert G.nodes["US_BEIR"]["role"] == "BEIR"
    assert G.nodes["US_BEIR"]["betweenness"] == 2.0
    assert G.nodes["US_BEIR"]["quintile"] == 1
    assert G.edges["OIL", "US_BEIR"]["p_adj"] > 0
    dot = to_dot(g)
    assert dot.count("->") == 3 and '"US_BEIR" [role="BEIR"' in dot
    assert edges_csv(g).count("\n") == 4
    assert nodes_csv(g).count("\n") == 75
    s = graph_summary(g)
    assert s["edges"] == 3 and s["density_fraction"] == [3, 5402]
