import json
import shutil
from fractions import Fraction

import numpy as np
import pytest

from beir_narrative import cli, pipeline
from beir_narrative.config import ConfigError, RunConfig, from_dict, load_config, with_overrides
from beir_narrative.evaluation import CvReport, Table
from beir_narrative.granger import VariablePanel
from beir_narrative.panel import DailyThemePanel, ModelData

ARTIFACT_DIRS = ("report", "granger")


def prepare(root, seed=1, days=None, countries="US,DE"):
    argv = ["synth", "--out", str(root), "--country", countries, "--seed", str(seed)]
    if days:
        argv += ["--days", str(days)]
    assert cli.main(argv) == 0
    cfg = root / "config.toml"
    # two classifiers keep the end-to-end run short
    cfg.write_text('classifiers = ["LG", "XG"]\n' + cfg.read_text())
    return cfg


def tree_bytes(root):
    return {
        p.relative_to(root).as_posix(): p.read_bytes()
        for d in ARTIFACT_DIRS
        for p in sorted((root / d).rglob("*"))
        if p.is_file()
    }


@pytest.fixture(scope="module")
def demo(tmp_path_factory):
    root = tmp_path_factory.mktemp("demo")
    cfg = prepare(root)
    assert cli.main(["all", "--config", str(cfg)]) == 0
    return root, cfg


def test_end_to_end_artifacts(demo):
    root, _ = demo
    run = root / "run"
    for name in ("delta_f1", "f1", "recall", "precision", "benchmark_f1", "benchmark_recall", "benchmark_precision", "mcnemar_p", "mcnemar_statistic"):
        t = Table.from_csv((run / "report" / f"{name}.csv").read_text())
        assert t.rows == ("US", "DE") and t.columns == ("LG", "XG")
    for name in ("graph.graphml", "graph.dot", "edges.csv", "nodes.csv", "predecessors.json", "predecessors.csv", "summary.json", "pvalues.csv"):
        assert (run / "granger" / name).exists()
    summary = json.loads((run / "granger" / "summary.json").read_text())
    # US: BEIR, stock, steepener; DE adds FX; 3 commodities; 2 x 5 components
    assert summary["nodes"] == 20
    assert Fraction(*summary["density_fraction"]) == Fraction(summary["edges"], 20 * 19)


def test_manifest_covers_every_artifact(demo):
    root, _ = demo
    run = root / "run"
    man = json.loads((run / "manifest.json").read_text())
    assert set(man["stages"]) == set(pipeline.STAGES)
    recorded = set()
    for stage, entry in man["stages"].items():
        for rel, digest in entry["outputs"].items():
            assert pipeline.sha256_file(run / rel) == digest
            recorded.add(rel)
        assert entry["versions"]["numpy"] == np.__version__
        assert entry["seeds"]["root"] == 1
    on_disk = {p.relative_to(run).as_posix() for p in run.rglob("*") if p.is_file() and p.name != "manifest.json"}
    assert on_disk == recorded
    ev = man["stages"]["evaluate"]["seeds"]["classifier"]
    assert set(ev) == {"US/LG", "US/XG", "DE/LG", "DE/XG"}


def test_stage_outputs_round_trip(demo):
    root, _ = demo
    run = root / "run"
    p = DailyThemePanel.from_csv(run / "aggregate" / "panel_US.csv")
    assert p.country == "US" and p.values.shape[1] == len(p.columns)
    md = ModelData.from_csv(run / "preprocess" / "model_US.csv")
    assert md.n == 600
    rep = CvReport.from_dict(json.loads((run / "evaluate" / "US_LG.json").read_text()))
    assert rep.kind == "LG" and len(rep.folds) >= 3
    panel = VariablePanel.from_csv(run / "granger" / "panel.csv")
    assert panel.size == 20 and np.all(np.isfinite(panel.values))


def test_planted_signal_visible(demo):
    root, _ = demo
    t = Table.from_csv((root / "run" / "report" / "delta_f1.csv").read_text())
    assert np.all(t.values > 0)
    preds = json.loads((root / "run" / "granger" / "predecessors.json").read_text())
    assert "US_PLS1" in [d["source"] for d in preds["US"]["local_narrative"]]


def test_rerun_is_byte_identical(demo, tmp_path):
    root, cfg = demo
    assert cli.main(["all", "--config", str(cfg), "--out", str(tmp_path / "again"), "--jobs", "2"]) == 0
    a, b = tree_bytes(root / "run"), tree_bytes(tmp_path / "again")
    assert a.keys() == b.keys() and a == b


def test_stage_before_prerequisite(tmp_path, capsys):
    cfg = prepare(tmp_path, days=60)
    assert cli.main(["evaluate", "--config", str(cfg)]) == 2
    err = capsys.readouterr().err
    assert "features" in err and "not been run" in err


def test_stale_artifact_detected(demo, tmp_path, capsys):
    root, cfg = demo
    out = tmp_path / "copy"
    shutil.copytree(root / "run", out)
    model = out / "preprocess" / "model_US.csv"
    with open(model, "a") as fh:
        fh.write("\n")
    assert cli.main(["features", "--config", str(cfg), "--out", str(out)]) == 2
    assert "stale" in capsys.readouterr().err


def test_config_change_makes_downstream_stale(demo, tmp_path, capsys):
    root, cfg = demo
    out = tmp_path / "copy"
    shutil.copytree(root / "run", out)
    assert cli.main(["evaluate", "--config", str(cfg), "--out", str(out), "--components", "3"]) == 2
    err = capsys.readouterr().err
    assert "features" in err and "stale" in err


def test_rerun_upstream_invalidates_downstream(demo, tmp_path, capsys):
    root, cfg = demo
    out = tmp_path / "copy"
    shutil.copytree(root / "run", out)
    assert cli.main(["features", "--config", str(cfg), "--out", str(out), "--components", "3"]) == 0
    assert cli.main(["evaluate", "--config", str(cfg), "--out", str(out), "--components", "3"]) == 0
    # the old 5-component granger record is now stale against the new features
    assert cli.main(["granger", "--config", str(cfg), "--out", str(out)]) == 2
    assert "stale" in capsys.readouterr().err


def test_usage_errors(capsys):
    assert cli.main(["bogus"]) == 1
    assert cli.main(["ingest", "--country", "XX"]) == 1
    assert cli.main(["ingest", "--folds", "two"]) == 1


def test_bad_config_is_usage_error(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text("colour = 1\n")
    assert cli.main(["ingest", "--config", str(p)]) == 1
    assert "colour" in capsys.readouterr().err


def test_missing_inputs_are_data_errors(tmp_path, capsys):
    p = tmp_path / "c.toml"
    p.write_text('[paths]\ngkg = ["nothing/*.tsv"]\n')
    assert cli.main(["ingest", "--config", str(p)]) == 2
    assert "no GKG files" in capsys.readouterr().err


def test_numerical_failure_exit_code(tmp_path, capsys):
    cfg = prepare(tmp_path, days=60, countries="US")
    for stage in ("ingest", "aggregate", "preprocess"):
        assert cli.main([stage, "--config", str(cfg)]) == 0
    # 60 rows cannot support the 100-row logistic baseline
    assert cli.main(["features", "--config", str(cfg)]) == 3
    assert "numerical failure" in capsys.readouterr().err


# --- config ---------------------------------------------------------------------------


def test_config_defaults_and_overrides():
    cfg = RunConfig()
    assert cfg.countries == ("US", "UK", "DE", "JP", "ZA", "AU", "BR", "MX")
    assert (cfg.parameters.k, cfg.parameters.horizon, cfg.parameters.components, cfg.parameters.folds) == (5, 1, 5, 5)
    assert cfg.parameters.alpha == 0.05
    o = with_overrides(cfg, alpha=0.1, countries=["US"], jobs=3)
    assert o.parameters.alpha == 0.1 and o.countries == ("US",) and o.jobs == 3
    assert o.parameters.k == 5


def test_digest_ignores_jobs_and_out():
    a = RunConfig()
    b = with_overrides(a, jobs=4, out="/elsewhere")
    assert a.digest() == b.digest()
    assert a.digest() != with_overrides(a, seed=1).digest()
    assert a.digest(["parameters.k"]) == with_overrides(a, alpha=0.2).digest(["parameters.k"])


@pytest.mark.parametrize(
    "raw, match",
    [
        ({"parameters": {"kk": 5}}, "kk"),
        ({"parameters": {"alpha": 0.9}}, "alpha"),
        ({"parameters": {"folds": 1}}, "folds"),
        ({"parameters": {"components": 2.5}}, "integer"),
        ({"parameters": {"residual": "raw"}}, "residual"),
        ({"countries": ["US", "FR"]}, "FR"),
        ({"countries": "US"}, "list"),
        ({"classifiers": ["LG", "NB"]}, "classifiers"),
        ({"synth": {"signal": 2.0}}, "signal"),
        ({"schema": {"colour": 3}}, "schema"),
        ({"params": {"KNN": {}}}, "KNN"),
        ({"extra": 1}, "extra"),
    ],
)
def test_config_rejects(raw, match):
    with pytest.raises(ConfigError, match=match):
        from_dict(raw)


def test_toml_round_trip(tmp_path):
    p = tmp_path / "c.toml"
    p.write_text('countries = ["US"]\nseed = 4\n[parameters]\nalpha = 0.01\n[params.RF]\nn_trees = 10\n')
    cfg = load_config(p)
    assert cfg.countries == ("US",) and cfg.seed == 4 and cfg.parameters.alpha == 0.01
    assert cfg.params == {"RF": {"n_trees": 10}}
    assert cfg.resolve("data") == tmp_path / "data"


def test_atomic_write_leaves_no_temp_on_failure(tmp_path):
    target = tmp_path / "x.csv"
    with pytest.raises(RuntimeError):
        with pipeline.atomic_path(target) as tmp:
            tmp.write_text("partial")
            raise RuntimeError("boom")
    assert list(tmp_path.iterdir()) == []
