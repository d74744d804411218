"""Pairwise Granger tests, the BH-corrected directed graph and its centrality."""

from __future__ import annotations

import csv
import io
import json
import xml.etree.ElementTree as ET
from collections import deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np

from .market import COMMODITIES, default_roster
from .stats import RankDeficientError, bh_adjust, f_test_nested, ols_fit

ROLES = ("BEIR", "market", "commodity", "narrative")
MIN_LENGTH = 30


class GrangerError(ValueError):
    pass


# --- variable panel -----------------------------------------------------------------

def pls_name(country: str, component: int) -> str:
    """Node name of a country's narrative component (1-based)."""
    return f"{country}_PLS{component}"


def variable_roster(countries: Sequence[str], n_components: int = 5) -> list[tuple[str, str, str]]:
    """``(name, role, country)`` for every node; commodities have country ``""``.

    Eight countries and five components give 34 market series plus 40
    narrative components, 74 nodes.
    """
    specs, _ = default_roster(countries)
    out = []
    for s in specs:
        out.append((s.beir, "BEIR", s.country))
        out.extend((m, "market", s.country) for m in s.market_names)
    out.extend((c, "commodity", "") for c in COMMODITIES)
    for s in specs:
        out.extend((pls_name(s.country, a), "narrative", s.country) for a in range(1, n_components + 1))
    return out


@dataclass(frozen=True)
class VariablePanel:
    names: tuple[str, ...]
    dates: np.ndarray
    values: np.ndarray
    roles: tuple[str, ...]
    countries: tuple[str, ...]

    def __post_init__(self):
        n, p = self.values.shape
        if len(self.names) != p or len(self.roles) != p or len(self.countries) != p or self.dates.shape != (n,):
            raise GrangerError("panel names, roles, countries, dates and values disagree in shape")
        if len(set(self.names)) != p:
            raise GrangerError("duplicate variable names")
        bad = [r for r in self.roles if r not in ROLES]
        if bad:
            raise GrangerError(f"unknown role(s): {', '.join(sorted(set(bad)))}")
        if not np.all(np.isfinite(self.values)):
            cols = sorted({self.names[j] for j in np.nonzero(~np.isfinite(self.values))[1]})
            raise GrangerError(f"non-finite values in: {', '.join(cols)}")

    @property
    def size(self) -> int:
        return len(self.names)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("date",) + self.names)
            for d, row in zip(self.dates, self.values):
                w.writerow([str(d)] + [repr(float(v)) for v in row])
        meta = {"roles": list(self.roles), "countries": list(self.countries), "size": self.size}
        Path(str(path) + ".json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")

    @classmethod
    def from_csv(cls, path) -> "VariablePanel":
        meta = json.loads(Path(str(path) + ".json").read_text(encoding="utf-8"))
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.reader(fh)
            header = next(reader)
            rows = list(reader)
        values = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(len(rows), len(header) - 1)
        dates = np.array([r[0] for r in rows], dtype="datetime64[D]")
        return cls(tuple(header[1:]), dates, values, tuple(meta["roles"]), tuple(meta["countries"]))


# --- pairwise tests ---------------------------------------------------------------------

@dataclass(frozen=True)
class GrangerTests:
    """Raw results for every ordered pair; entry ``[i, j]`` tests ``names[i] -> names[j]``."""

    names: tuple[str, ...]
    p_values: np.ndarray
    statistics: np.ndarray
    degenerate: np.ndarray
    lag: int = 1
    nobs: int = 0


def _lags(v: np.ndarray, lag: int) -> np.ndarray:
    n = v.shape[0]
    return np.column_stack([v[lag - L : n - L] for L in range(1, lag + 1)])


def _tests_for_target(args):
    X, j, lag = args
    n = X.shape[0]
    y = X[lag:, j]
    ones = np.ones((n - lag, 1))
    own = _lags(X[:, j], lag)
    restricted = ols_fit(np.hstack([ones, own]), y)
    p = np.full(X.shape[1], np.nan)
    stat = np.full(X.shape[1], np.nan)
    degen = np.zeros(X.shape[1], dtype=bool)
    for i in range(X.shape[1]):
        if i == j:
            continue
        try:
            full = ols_fit(np.hstack([ones, own, _lags(X[:, i], lag)]), y)
        except RankDeficientError:
            p[i], stat[i], degen[i] = 1.0, 0.0, True
            continue
        res = f_test_nested(restricted, full, lag)
        p[i], stat[i], degen[i] = res.p_value, res.statistic, res.degenerate
    return j, p, stat, degen


def pairwise_granger(panel, lag: int = 1, names: Sequence[str] | None = None, jobs: int = 1) -> GrangerTests:
    """Bivariate Granger F-tests for all ordered pairs.

    For each target ``y`` and source ``x`` the restricted model regresses
    ``y_t`` on a constant and ``y_{t-1..t-lag}``; the full model adds
    ``x_{t-1..t-lag}``. A rank-deficient full design gets ``p = 1`` and the
    degenerate flag. Targets are distributed over ``jobs`` processes;
    results do not depend on ``jobs``.
    """
    if isinstance(panel, VariablePanel):
        X, names = panel.values, panel.names
    else:
        X = np.asarray(panel, dtype=float)
        names = tuple(names) if names is not None else tuple(f"x{j}" for j in range(X.shape[1]))
    if lag < 1:
        raise GrangerError("lag must be >= 1")
    n, p = X.shape
    if n < MIN_LENGTH + lag:
        raise GrangerError(f"panel has {n} rows; need at least {MIN_LENGTH + lag}")
    if not np.all(np.isfinite(X)):
        raise GrangerError("panel contains non-finite values")
    P = np.full((p, p), np.nan)
    S = np.full((p, p), np.nan)
    D = np.zeros((p, p), dtype=bool)
    work = [(X, j, lag) for j in range(p)]
    if jobs > 1 and p > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_tests_for_target, work, chunksize=max(1, p // (4 * jobs))))
    else:
        results = [_tests_for_target(w) for w in work]
    for j, pv, st, dg in results:
        P[:, j], S[:, j], D[:, j] = pv, st, dg
    return GrangerTests(tuple(names), P, S, D, lag, n - lag)


# --- graph --------------------------------------------------------------------------------

@dataclass(frozen=True)
class Edge:
    source: str
    target: str
    p_raw: float
    p_adj: float


@dataclass(frozen=True)
class GrangerGraph:
    names: tuple[str, ...]
    edges: tuple[Edge, ...]
    alpha: float
    p_raw: np.ndarray = field(repr=False)
    p_adj: np.ndarray = field(repr=False)
    roles: tuple[str, ...] = ()
    countries: tuple[str, ...] = ()

    @property
    def n_nodes(self) -> int:
        return len(self.names)

    @property
    def density_fraction(self) -> Fraction:
        n = self.n_nodes
        return Fraction(len(self.edges), n * (n - 1)) if n > 1 else Fraction(0)

    @property
    def density(self) -> float:
        return float(self.density_fraction)

    def successors(self) -> dict[str, list[str]]:
        out = {v: [] for v in self.names}
        for e in self.edges:
            out[e.source].append(e.target)
        return out

    def role(self, node: str) -> str:
        return self.roles[self.names.index(node)] if self.roles else ""

    def country(self, node: str) -> str:
        return self.countries[self.names.index(node)] if self.countries else ""


def density(n_nodes: int, n_edges: int) -> float:
    return n_edges / (n_nodes * (n_nodes - 1))


def build_graph(
    p_matrix,
    names: Sequence[str],
    alpha: float = 0.05,
    roles: Sequence[str] = (),
    countries: Sequence[str] = (),
) -> GrangerGraph:
    """Directed graph with an edge ``i -> j`` wherever the BH-adjusted p is at most ``alpha``.

    BH runs jointly over all ``n (n - 1)`` off-diagonal entries. Every
    variable stays a node, connected or not. Edges are listed in node
    order of (source, target).
    """
    P = np.asarray(p_matrix, dtype=float)
    n = len(names)
    if P.shape != (n, n):
        raise GrangerError(f"p-value matrix must be {n}x{n}")
    off = ~np.eye(n, dtype=bool)
    if np.any(~np.isfinite(P[off])):
        raise GrangerError("p-value matrix has missing off-diagonal entries")
    adj = np.full((n, n), np.nan)
    edges = []
    if n > 1:
        adjusted, reject = bh_adjust(P[off], alpha)
        adj[off] = adjusted
        R = np.zeros((n, n), dtype=bool)
        R[off] = reject
        for i, j in zip(*np.nonzero(R)):
            edges.append(Edge(names[i], names[j], float(P[i, j]), float(adj[i, j])))
    return GrangerGraph(tuple(names), tuple(edges), alpha, P.copy(), adj, tuple(roles), tuple(countries))


# --- centrality -----------------------------------------------------------------------------

@dataclass(frozen=True)
class Centrality:
    raw: dict
    normalized: dict
    # raw / ((n - 1)(n - 2)), the number of ordered pairs excluding the node
    normalization: str = "(n-1)(n-2)"


def betweenness(graph_or_successors) -> Centrality:
    """Exact shortest-path betweenness on an unweighted directed graph (Brandes).

    The raw score of ``v`` sums, over ordered pairs ``(s, t)`` with
    ``s != v != t``, the share of shortest ``s -> t`` paths through ``v``.
    """
    succ = graph_or_successors.successors() if isinstance(graph_or_successors, GrangerGraph) else graph_or_successors
    nodes = list(succ)
    index = {v: i for i, v in enumerate(nodes)}
    adj = [[index[w] for w in succ[v]] for v in nodes]
    n = len(nodes)
    cb = [0.0] * n
    for s in range(n):
        stack = []
        preds = [[] for _ in range(n)]
        sigma = [0] * n
        sigma[s] = 1
        dist = [-1] * n
        dist[s] = 0
        q = deque([s])
        while q:
            v = q.popleft()
            stack.append(v)
            for w in adj[v]:
                if dist[w] < 0:
                    dist[w] = dist[v] + 1
                    q.append(w)
                if dist[w] == dist[v] + 1:
                    sigma[w] += sigma[v]
                    preds[w].append(v)
        delta = [0.0] * n
        while stack:
            w = stack.pop()
            for v in preds[w]:
                delta[v] += sigma[v] / sigma[w] * (1.0 + delta[w])
            if w != s:
                cb[w] += delta[w]
    scale = (n - 1) * (n - 2)
    raw = {v: cb[i] for i, v in enumerate(nodes)}
    norm = {v: (x / scale if scale else 0.0) for v, x in raw.items()}
    return Centrality(raw, norm)


def quintile_rank(scores: Mapping[str, float]) -> dict[str, int]:
    """Quintile 1 (top) to 5 by descending score; ties are ordered by node name.

    The node at sorted position ``i`` of ``n`` gets quintile
    ``floor(5 i / n) + 1``.
    """
    n = len(scores)
    if n < 5:
        raise GrangerError("quintiles need at least 5 nodes")
    order = sorted(scores, key=lambda v: (-scores[v], v))
    return {v: 5 * i // n + 1 for i, v in enumerate(order)}


# --- BEIR predecessors -------------------------------------------------------------------------

PREDECESSOR_GROUPS = ("market", "local_narrative", "foreign_narrative")


def beir_predecessors(graph: GrangerGraph) -> dict[str, dict]:
    """Incoming edges of each BEIR node grouped by the source's role and country.

    Market-sourced edges cover market, commodity and other BEIR sources;
    narrative edges are local when the component belongs to the BEIR's
    country and foreign otherwise.
    """
    if not graph.roles:
        raise GrangerError("graph has no role tags")
    out = {}
    incoming: dict[str, list[Edge]] = {}
    for e in graph.edges:
        incoming.setdefault(e.target, []).append(e)
    for node, role, country in zip(graph.names, graph.roles, graph.countries):
        if role != "BEIR":
            continue
        groups = {g: [] for g in PREDECESSOR_GROUPS}
        for e in incoming.get(node, []):
            src_role, src_country = graph.role(e.source), graph.country(e.source)
            if src_role == "narrative":
                group = "local_narrative" if src_country == country else "foreign_narrative"
            else:
                group = "market"
            groups[group].append(
                {"source": e.source, "role": src_role, "country": src_country, "p_raw": e.p_raw, "p_adj": e.p_adj}
            )
        foreign = sorted({d["country"] for d in groups["foreign_narrative"]})
        out[country] = {"beir": node, **groups, "foreign_narrative_countries": foreign}
    return out


def predecessors_csv(report: Mapping[str, dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["country", "beir", "group", "source", "source_role", "source_country", "p_raw", "p_adj"])
    for country, rep in report.items():
        for g in PREDECESSOR_GROUPS:
            for d in rep[g]:
                w.writerow([country, rep["beir"], g, d["source"], d["role"], d["country"], repr(d["p_raw"]), repr(d["p_adj"])])
    return buf.getvalue()


# --- export -----------------------------------------------------------------------------------

def node_table(graph: GrangerGraph, centrality: Centrality | None = None) -> list[dict]:
    centrality = centrality or betweenness(graph)
    quint = quintile_rank(centrality.raw) if graph.n_nodes >= 5 else {}
    indeg = {v: 0 for v in graph.names}
    outdeg = {v: 0 for v in graph.names}
    for e in graph.edges:
        outdeg[e.source] += 1
        indeg[e.target] += 1
    return [
        {
            "node": v,
            "role": graph.roles[i] if graph.roles else "",
            "country": graph.countries[i] if graph.countries else "",
            "betweenness": centrality.raw[v],
            "betweenness_normalized": centrality.normalized[v],
            "quintile": quint.get(v, 0),
            "in_degree": indeg[v],
            "out_degree": outdeg[v],
        }
        for i, v in enumerate(graph.names)
    ]


def to_graphml(graph: GrangerGraph, centrality: Centrality | None = None) -> str:
    nodes = node_table(graph, centrality)
    root = ET.Element("graphml", xmlns="http://graphml.graphdrawing.org/xmlns")
    keys = [
        ("role", "node", "string"), ("country", "node", "string"), ("betweenness", "node", "double"),
        ("quintile", "node", "int"), ("p_raw", "edge", "double"), ("p_adj", "edge", "double"),
    ]
    for name, dom, typ in keys:
        ET.SubElement(root, "key", {"id": name, "for": dom, "attr.name": name, "attr.type": typ})
    g = ET.SubElement(root, "graph", id="granger", edgedefault="directed")
    for row in nodes:
        el = ET.SubElement(g, "node", id=row["node"])
        for k in ("role", "country", "betweenness", "quintile"):
            ET.SubElement(el, "data", key=k).text = repr(row[k]) if isinstance(row[k], float) else str(row[k])
    for e in graph.edges:
        el = ET.SubElement(g, "edge", source=e.source, target=e.target)
        ET.SubElement(el, "data", key="p_raw").text = repr(e.p_raw)
        ET.SubElement(el, "data", key="p_adj").text = repr(e.p_adj)
    ET.indent(root)
    return '<?xml version="1.0" encoding="UTF-8"?>\n' + ET.tostring(root, encoding="unicode") + "\n"


def _dot_id(s: str) -> str:
    return '"' + s.replace("\\", "\\\\").replace('"', '\\"') + '"'


def to_dot(graph: GrangerGraph, centrality: Centrality | None = None) -> str:
    lines = ["digraph granger {"]
    for row in node_table(graph, centrality):
        attrs = ", ".join(
            f'{k}="{row[k]!r}"' if isinstance(row[k], float) else f'{k}="{row[k]}"'
            for k in ("role", "country", "betweenness", "quintile")
        )
        lines.append(f"  {_dot_id(row['node'])} [{attrs}];")
    for e in graph.edges:
        lines.append(f'  {_dot_id(e.source)} -> {_dot_id(e.target)} [p_raw="{e.p_raw!r}", p_adj="{e.p_adj!r}"];')
    lines.append("}")
    return "\n".join(lines) + "\n"


def edges_csv(graph: GrangerGraph) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["source", "target", "p_raw", "p_adj"])
    for e in graph.edges:
        w.writerow([e.source, e.target, repr(e.p_raw), repr(e.p_adj)])
    return buf.getvalue()


def nodes_csv(graph: GrangerGraph, centrality: Centrality | None = None) -> str:
    rows = node_table(graph, centrality)
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(rows[0]) if rows else ["node"], lineterminator="\n")
    w.writeheader()
    for r in rows:
        w.writerow({k: repr(v) if isinstance(v, float) else v for k, v in r.items()})
    return buf.getvalue()


def graph_summary(graph: GrangerGraph, tests: GrangerTests | None = None) -> dict:
    d = graph.density_fraction
    out = {
        "nodes": graph.n_nodes,
        "edges": len(graph.edges),
        "density": graph.density,
        "density_fraction": [d.numerator, d.denominator],
        "alpha": graph.alpha,
        "tests": graph.n_nodes * (graph.n_nodes - 1),
        "betweenness_normalization": Centrality({}, {}).normalization,
    }
    if tests is not None:
        out["lag"] = tests.lag
        out["nobs"] = tests.nobs
        out["degenerate_pairs"] = [
            [tests.names[i], tests.names[j]] for i, j in zip(*np.nonzero(tests.degenerate))
        ]
    return out
