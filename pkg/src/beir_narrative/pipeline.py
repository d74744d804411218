"""Pipeline stages with hashed, atomically written artifacts and a run manifest.

Each stage reads the outputs of the stages it depends on, checks them
against the hashes recorded in ``manifest.json``, writes its own outputs
and records them. Stage outputs depend only on the config (minus ``jobs``
and the output directory) and the input files.
"""

from __future__ import annotations

import contextlib
import csv
import glob
import hashlib
import io
import json
import logging
import os
import platform
import warnings
from concurrent.futures import ProcessPoolExecutor
from importlib import metadata
from pathlib import Path
from typing import Iterator

import numpy as np

from . import granger as gr
from .config import RunConfig
from .evaluation import (
    CvReport,
    EvalConfig,
    FoldSkippedWarning,
    full_sample_features,
    report_tables,
    run_country,
    walk_forward_splits,
)
from .gkg import IngestFilter, ingest_by_country, read_records, write_records
from .market import COMMODITIES, FIPS, MarketDataError, align_calendar, country_spec, default_roster, load_series
from .panel import DailyThemePanel, ModelData, adf_gate, aggregate_daily, build_model_data, diff_k
from .pls import EarlyStopWarning, category_profile
from .taxonomy import load_rules

log = logging.getLogger(__name__)

STAGES = ("ingest", "aggregate", "preprocess", "features", "evaluate", "granger", "report")
DEPENDS = {
    "ingest": (),
    "aggregate": ("ingest",),
    "preprocess": ("aggregate",),
    "features": ("preprocess",),
    "evaluate": ("features",),
    "granger": ("features",),
    "report": ("evaluate",),
}
# config keys each stage's outputs depend on, cumulative over upstream stages
_INGEST_KEYS = ("paths.gkg", "paths.taxonomy", "schema", "parameters.min_ecofin_themes")
_PRE_KEYS = _INGEST_KEYS + ("paths.market", "parameters.k", "parameters.horizon", "parameters.ffill_limit")
_FEAT_KEYS = _PRE_KEYS + ("parameters.components", "parameters.residual", "parameters.folds", "seed")
STAGE_KEYS = {
    "ingest": _INGEST_KEYS,
    "aggregate": _INGEST_KEYS,
    "preprocess": _PRE_KEYS,
    "features": _FEAT_KEYS,
    "evaluate": _FEAT_KEYS + ("classifiers", "params"),
    "granger": _FEAT_KEYS + ("parameters.lag", "parameters.alpha"),
    "report": _FEAT_KEYS + ("classifiers", "params"),
}
MANIFEST = "manifest.json"
SEED_DERIVATION = "SeedSequence(root, spawn_key=(crc32(label) | int label, ...))"


class PipelineError(RuntimeError):
    """Missing or stale stage artifacts, or unusable inputs (a data error)."""


# --- files and hashes -------------------------------------------------------------

def sha256_file(path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@contextlib.contextmanager
def atomic_path(final) -> Iterator[Path]:
    """Yield a temporary sibling path; rename it (and a ``.json`` sidecar) into place on success."""
    final = Path(final)
    final.parent.mkdir(parents=True, exist_ok=True)
    tmp = final.with_name(f".tmp-{final.name}")
    side_tmp, side = Path(str(tmp) + ".json"), Path(str(final) + ".json")
    try:
        yield tmp
        if side_tmp.exists():
            os.replace(side_tmp, side)
        os.replace(tmp, final)
    finally:
        for p in (tmp, side_tmp):
            if p.exists():
                p.unlink()


def write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        tmp.write_bytes(text.encode("utf-8"))


def write_json(path, obj) -> None:
    write_text(path, json.dumps(obj, indent=1, sort_keys=True, allow_nan=True) + "\n")


def versions() -> dict:
    out = {"python": platform.python_version()}
    for dist in ("artifact", "numpy", "scipy", "numba"):
        try:
            out[dist] = metadata.version(dist)
        except metadata.PackageNotFoundError:
            out[dist] = "unknown"
    return out


def _csv_text(header, rows) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


# --- run context --------------------------------------------------------------------

class Run:
    """A config bound to its output directory and manifest."""

    def __init__(self, cfg: RunConfig):
        self.cfg = cfg
        self.out = cfg.resolve(cfg.paths.out)
        self.manifest_path = self.out / MANIFEST
        self.manifest = self._load_manifest()

    def _load_manifest(self) -> dict:
        if not self.manifest_path.exists():
            return {"format": 1, "stages": {}}
        try:
            return json.loads(self.manifest_path.read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise PipelineError(f"corrupt manifest {self.manifest_path}: {exc}") from None

    def rel(self, path) -> str:
        return Path(path).relative_to(self.out).as_posix()

    def external(self, path) -> str:
        """Input path as recorded: relative to the config directory when possible."""
        p = Path(path)
        try:
            return p.resolve().relative_to(Path(self.cfg.base_dir).resolve()).as_posix()
        except ValueError:
            return p.as_posix()

    def require(self, stage: str) -> dict:
        """Check that every upstream stage ran with this config and its files are intact."""
        entries = {}
        for dep in DEPENDS[stage]:
            rec = self.manifest["stages"].get(dep)
            if rec is None:
                raise PipelineError(f"stage '{dep}' has not been run in {self.out}; run `{dep}` before `{stage}`")
            if rec["config_digest"] != self.cfg.digest(STAGE_KEYS[dep]):
                raise PipelineError(f"stale pipeline: the config changed since '{dep}' ran; rerun `{dep}`")
            missing = [c for c in self.cfg.countries if c not in rec["countries"]]
            if missing:
                raise PipelineError(f"stage '{dep}' has no outputs for {', '.join(missing)}; rerun `{dep}`")
            for rel, digest in rec["outputs"].items():
                p = self.out / rel
                if not p.exists():
                    raise PipelineError(f"artifact {rel} of stage '{dep}' is missing; rerun `{dep}`")
                if sha256_file(p) != digest:
                    raise PipelineError(f"stale pipeline: {rel} does not match the hash recorded by '{dep}'; rerun `{dep}`")
            known = self.manifest.get("files", {})
            for rel, digest in rec["inputs"].items():
                if rel in known and known[rel] != digest:
                    raise PipelineError(f"stale pipeline: '{dep}' was built from an older {rel}; rerun `{dep}`")
            entries[dep] = rec
        return entries

    def record(self, stage: str, inputs, outputs, seeds=None, summary=None, countries=None) -> dict:
        ins = {}
        for p in inputs:
            p = Path(p)
            key = self.rel(p) if p.resolve().is_relative_to(self.out.resolve()) else self.external(p)
            ins[key] = sha256_file(p)
        outs = {self.rel(p): sha256_file(p) for p in sorted(outputs)}
        entry = {
            "config_digest": self.cfg.digest(STAGE_KEYS[stage]),
            "countries": list(countries if countries is not None else self.cfg.countries),
            "inputs": dict(sorted(ins.items())),
            "outputs": outs,
            "seeds": seeds or {"root": self.cfg.seed, "derivation": SEED_DERIVATION},
            "versions": versions(),
            "summary": summary or {},
        }
        self.manifest["stages"][stage] = entry
        # latest hash of every stage output; downstream records built from older files are stale
        files = self.manifest.setdefault("files", {})
        files.update(outs)
        self.manifest["files"] = dict(sorted(files.items()))
        self.manifest["config_digest"] = self.cfg.digest()
        self.manifest["config"] = self.cfg.to_dict()
        write_json(self.manifest_path, self.manifest)
        return entry

    def path(self, stage: str, name: str) -> Path:
        return self.out / stage / name


# --- stages -----------------------------------------------------------------------------

def gkg_inputs(cfg: RunConfig) -> list[Path]:
    files = []
    for pattern in cfg.paths.gkg:
        full = cfg.resolve(pattern)
        hits = sorted(glob.glob(str(full)))
        if not hits:
            raise PipelineError(f"no GKG files match {pattern!r} (resolved to {full})")
        files.extend(Path(h) for h in hits)
    return files


def _taxonomy(cfg: RunConfig):
    if cfg.paths.taxonomy:
        p = cfg.resolve(cfg.paths.taxonomy)
        if not p.exists():
            raise PipelineError(f"taxonomy rules not found: {p}")
        return load_rules(p), [p]
    return load_rules(), []


def cmd_ingest(run: Run) -> dict:
    cfg = run.cfg
    run.require("ingest")
    tax, tax_files = _taxonomy(cfg)
    files = gkg_inputs(cfg)
    filters = {c: IngestFilter(FIPS[c], cfg.parameters.min_ecofin_themes) for c in cfg.countries}
    records, stats = ingest_by_country(files, filters, tax, schema=cfg.schema or None, jobs=cfg.jobs)
    outputs = []
    for c in cfg.countries:
        p = run.path("ingest", f"records_{c}.jsonl")
        with atomic_path(p) as tmp:
            write_records(records[c], tmp)
        outputs.append(p)
    first = stats[cfg.countries[0]].to_dict()
    summary = {k: v for k, v in first.items() if k != "filtered_in"}
    summary["filtered_in"] = {c: stats[c].filtered_in for c in cfg.countries}
    # record file names relative to the config directory so the summary is location independent
    summary["file_errors"] = {run.external(k): v for k, v in first["file_errors"].items()}
    p = run.path("ingest", "stats.json")
    write_json(p, summary)
    outputs.append(p)
    if summary["file_errors"]:
        log.warning("%d GKG file(s) could not be read", len(summary["file_errors"]))
    return run.record("ingest", files + tax_files, outputs, summary=summary)


def cmd_aggregate(run: Run) -> dict:
    cfg = run.cfg
    run.require("aggregate")
    tax, _ = _taxonomy(cfg)
    inputs, outputs, summary = [], [], {}
    for c in cfg.countries:
        src = run.path("ingest", f"records_{c}.jsonl")
        panel = aggregate_daily(read_records(src), tax, c)
        p = run.path("aggregate", f"panel_{c}.csv")
        with atomic_path(p) as tmp:
            panel.to_csv(tmp)
        inputs.append(src)
        outputs += [p, Path(str(p) + ".json")]
        summary[c] = {"days": int(panel.dates.size), "themes": len(panel.columns), "records": panel.n_records}
    return run.record("aggregate", inputs, outputs, summary=summary)


def _market(cfg: RunConfig) -> tuple[Path, dict]:
    p = cfg.resolve(cfg.paths.market)
    if not p.exists():
        raise PipelineError(f"market data not found: {p}")
    return p, {s.name: s for s in load_series(p)}


def _country_series(series: dict, c: str):
    sp = country_spec(c)
    names = sp.market_names + COMMODITIES
    missing = [n for n in (sp.beir,) + names if n not in series]
    if missing:
        raise MarketDataError(f"missing market series for {c}: {', '.join(missing)}")
    return sp, names


def cmd_preprocess(run: Run) -> dict:
    cfg = run.cfg
    par = cfg.parameters
    run.require("preprocess")
    mpath, series = _market(cfg)
    inputs, outputs, summary = [mpath], [], {}
    for c in cfg.countries:
        sp, names = _country_series(series, c)
        al = align_calendar([series[sp.beir]] + [series[n] for n in names], series[sp.beir].dates, par.ffill_limit)
        src = run.path("aggregate", f"panel_{c}.csv")
        panel = DailyThemePanel.from_csv(src)
        theme_levels = panel.reindex(al.dates)
        md = build_model_data(c, al.dates, al.matrix[:, 0], al.matrix[:, 1:], names, theme_levels, panel.columns, par.k, par.horizon)
        p = run.path("preprocess", f"model_{c}.csv")
        with atomic_path(p) as tmp:
            md.to_csv(tmp)
        levels = np.hstack([al.matrix, theme_levels])
        rows = adf_gate(levels, (sp.beir,) + names + panel.columns, k=par.k)
        q = run.path("preprocess", f"adf_{c}.csv")
        fields = list(rows[0].as_dict())
        write_text(q, _csv_text(fields, [[repr(v) if isinstance(v, float) else v for v in r.as_dict().values()] for r in rows]))
        inputs += [src, Path(str(src) + ".json")]
        outputs += [p, Path(str(p) + ".json"), q]
        flagged = [r.name for r in rows if not r.stationary]
        summary[c] = {**md.stats, "adf_not_rejected_after_differencing": flagged, "fills": al.fills}
        if flagged:
            log.info("%s: unit root not rejected after differencing for %s", c, ", ".join(flagged))
    return run.record("preprocess", inputs, outputs, summary=summary)


def eval_config(cfg: RunConfig) -> EvalConfig:
    return EvalConfig(
        folds=cfg.parameters.folds,
        n_components=cfg.parameters.components,
        seed=cfg.seed,
        residual=cfg.parameters.residual,
        params=cfg.params,
    )


def cmd_features(run: Run) -> dict:
    cfg = run.cfg
    run.require("features")
    tax, _ = _taxonomy(cfg)
    ecfg = eval_config(cfg)
    inputs, outputs, summary = [], [], {}
    for c in cfg.countries:
        src = run.path("preprocess", f"model_{c}.csv")
        md = ModelData.from_csv(src)
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", EarlyStopWarning)
            pls, scores, dropped = full_sample_features(md, ecfg)
        p_model = run.path("features", f"pls_{c}.json")
        write_text(p_model, pls.to_json() + "\n")
        p_scores = run.path("features", f"scores_{c}.csv")
        header = ["date"] + [gr.pls_name(c, a + 1) for a in range(pls.n_components)]
        write_text(p_scores, _csv_text(header, [[str(d)] + [repr(float(v)) for v in row] for d, row in zip(md.dates, scores)]))
        profiles = [category_profile(pls, tax, a) for a in range(pls.n_components)]
        p_prof = run.path("features", f"profile_{c}.csv")
        cats = list(profiles[0])
        write_text(p_prof, _csv_text(["component"] + cats, [[a + 1] + [repr(pr[k]) for k in cats] for a, pr in enumerate(profiles)]))
        p_folds = run.path("features", f"folds_{c}.json")
        write_json(p_folds, {"n": md.n, "folds": walk_forward_splits(md.n, cfg.parameters.folds).to_list()})
        inputs += [src, Path(str(src) + ".json")]
        outputs += [p_model, p_scores, p_prof, p_folds]
        summary[c] = {"components": pls.n_components, "dropped_columns": list(dropped), "rows": md.n}
    return run.record("features", inputs, outputs, summary=summary)


def _evaluate_job(args):
    path, kinds, ecfg = args
    md = ModelData.from_csv(path)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always", FoldSkippedWarning)
        warnings.simplefilter("ignore", EarlyStopWarning)
        reps = run_country(md, kinds, ecfg)
    notes = sorted({str(w.message) for w in caught if issubclass(w.category, FoldSkippedWarning)})
    return md.country, {k: r.to_dict() for k, r in reps.items()}, notes


def cmd_evaluate(run: Run) -> dict:
    cfg = run.cfg
    run.require("evaluate")
    ecfg = eval_config(cfg)
    work = [(run.path("preprocess", f"model_{c}.csv"), tuple(cfg.classifiers), ecfg) for c in cfg.countries]
    if cfg.jobs > 1 and len(work) > 1:
        with ProcessPoolExecutor(max_workers=min(cfg.jobs, len(work))) as pool:
            results = list(pool.map(_evaluate_job, work))
    else:
        results = [_evaluate_job(w) for w in work]
    outputs, seeds, summary = [], {"root": cfg.seed, "derivation": SEED_DERIVATION, "classifier": {}}, {}
    for country, reps, notes in results:
        for kind, d in reps.items():
            p = run.path("evaluate", f"{country}_{kind}.json")
            write_json(p, d)
            outputs.append(p)
            seeds["classifier"][f"{country}/{kind}"] = d["seeds"]
            summary[f"{country}/{kind}"] = {
                "delta_f1": d["mean"]["delta_f1"],
                "skipped_folds": d["skipped"],
            }
        for note in notes:
            log.warning("%s", note)
    inputs = [w[0] for w in work] + [run.path("features", f"pls_{c}.json") for c in cfg.countries]
    return run.record("evaluate", inputs, outputs, seeds=seeds, summary=summary)


def granger_panel(run: Run, series: dict) -> gr.VariablePanel:
    """k-differenced market series and full-sample PLS scores on a shared calendar.

    The calendar intersects every country's BEIR dates; market series are
    aligned (with the configured forward-fill) and differenced on it, then
    joined by date with the narrative scores.
    """
    cfg = run.cfg
    k = cfg.parameters.k
    roster = gr.variable_roster(cfg.countries, cfg.parameters.components)
    _, market_names = default_roster(cfg.countries)
    missing = [n for n in market_names if n not in series]
    if missing:
        raise MarketDataError(f"missing market series: {', '.join(missing)}")
    cal = None
    for c in cfg.countries:
        d = series[f"{c}_BEIR"].dates
        cal = d if cal is None else np.intersect1d(cal, d)
    al = align_calendar([series[n] for n in market_names], cal, cfg.parameters.ffill_limit, trailing="exclude")
    dm = diff_k(al.matrix, k)
    mdates = al.dates[k:]
    cols = {n: dm[:, j] for j, n in enumerate(market_names)}
    dates = mdates
    scores = {}
    for c in cfg.countries:
        with open(run.path("features", f"scores_{c}.csv"), newline="", encoding="utf-8") as fh:
            rows = list(csv.reader(fh))
        sd = np.array([r[0] for r in rows[1:]], dtype="datetime64[D]")
        sv = np.array([[float(v) for v in r[1:]] for r in rows[1:]])
        scores[c] = (sd, rows[0][1:], sv)
        dates = np.intersect1d(dates, sd)
    if dates.size == 0:
        raise PipelineError("market and narrative series share no dates")
    values = []
    for name, role, country in roster:
        if role == "narrative":
            sd, names, sv = scores[country]
            if name not in names:
                raise PipelineError(f"features for {country} lack {name}; rerun `features`")
            col, idx = sv[:, names.index(name)], np.searchsorted(sd, dates)
        else:
            col, idx = cols[name], np.searchsorted(mdates, dates)
        values.append(col[idx])
    return gr.VariablePanel(
        tuple(r[0] for r in roster), dates, np.column_stack(values),
        tuple(r[1] for r in roster), tuple(r[2] for r in roster),
    )


def cmd_granger(run: Run) -> dict:
    cfg = run.cfg
    run.require("granger")
    mpath, series = _market(cfg)
    panel = granger_panel(run, series)
    tests = gr.pairwise_granger(panel, lag=cfg.parameters.lag, jobs=cfg.jobs)
    graph = gr.build_graph(tests.p_values, panel.names, cfg.parameters.alpha, panel.roles, panel.countries)
    cent = gr.betweenness(graph)
    preds = gr.beir_predecessors(graph)
    out = {
        "panel.csv": None,
        "graph.graphml": gr.to_graphml(graph, cent),
        "graph.dot": gr.to_dot(graph, cent),
        "edges.csv": gr.edges_csv(graph),
        "nodes.csv": gr.nodes_csv(graph, cent),
        "predecessors.csv": gr.predecessors_csv(preds),
    }
    outputs = []
    p = run.path("granger", "panel.csv")
    with atomic_path(p) as tmp:
        panel.to_csv(tmp)
    outputs += [p, Path(str(p) + ".json")]
    for name, text in out.items():
        if text is None:
            continue
        q = run.path("granger", name)
        write_text(q, text)
        outputs.append(q)
    P = tests.p_values
    q = run.path("granger", "pvalues.csv")
    write_text(q, _csv_text(["source"] + list(panel.names), [[n] + ["" if np.isnan(v) else repr(float(v)) for v in P[i]] for i, n in enumerate(panel.names)]))
    outputs.append(q)
    q = run.path("granger", "predecessors.json")
    write_json(q, preds)
    outputs.append(q)
    summary = gr.graph_summary(graph, tests)
    summary["calendar"] = [str(panel.dates[0]), str(panel.dates[-1]), int(panel.dates.size)]
    q = run.path("granger", "summary.json")
    write_json(q, summary)
    outputs.append(q)
    inputs = [mpath] + [run.path("features", f"scores_{c}.csv") for c in cfg.countries]
    return run.record("granger", inputs, outputs, summary={k: summary[k] for k in ("nodes", "edges", "density")})


def cmd_report(run: Run) -> dict:
    cfg = run.cfg
    run.require("report")
    reports, inputs = {}, []
    for c in cfg.countries:
        for kind in cfg.classifiers:
            p = run.path("evaluate", f"{c}_{kind}.json")
            if not p.exists():
                raise PipelineError(f"no evaluation for {c}/{kind}; rerun `evaluate`")
            reports[(c, kind)] = CvReport.from_dict(json.loads(p.read_text(encoding="utf-8")))
            inputs.append(p)
    tables = report_tables(reports, cfg.countries, cfg.classifiers)
    outputs = []
    for t in tables.values():
        p = run.path("report", f"{t.name}.csv")
        write_text(p, t.to_csv())
        outputs.append(p)
    summary = {
        f"{c}/{k}": {
            "delta_f1": r.delta_f1,
            "mcnemar_p": r.mcnemar.p_value,
            "folds_used": len(r.folds),
        }
        for (c, k), r in reports.items()
    }
    p = run.path("report", "summary.json")
    write_json(p, summary)
    outputs.append(p)
    return run.record("report", inputs, outputs, summary={"tables": list(tables)})


COMMANDS = {
    "ingest": cmd_ingest,
    "aggregate": cmd_aggregate,
    "preprocess": cmd_preprocess,
    "features": cmd_features,
    "evaluate": cmd_evaluate,
    "granger": cmd_granger,
    "report": cmd_report,
}


def run_all(cfg: RunConfig, stages=STAGES) -> Run:
    run = Run(cfg)
    for s in stages:
        log.info("stage %s", s)
        COMMANDS[s](run)
    return run
