"""Command-line entry point: ``beir-narrative <stage> [options]``.

Exit codes: 0 success, 1 usage or config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import pipeline, synth
from .classifiers import ClassifierError
from .config import ConfigError, RunConfig, demo_toml, load_config, with_overrides
from .evaluation import EvaluationError
from .granger import GrangerError
from .market import COUNTRIES, MarketDataError
from .panel import PanelError
from .pls import PlsError
from .stats import RankDeficientError
from .taxonomy import TaxonomyError

EXIT_OK, EXIT_USAGE, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3
NUMERICAL = (PlsError, EvaluationError, RankDeficientError, ClassifierError, FloatingPointError, np.linalg.LinAlgError)
DATA = (pipeline.PipelineError, MarketDataError, PanelError, TaxonomyError, GrangerError, OSError, ValueError)

log = logging.getLogger("beir_narrative")


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _countries(text: str) -> list[str]:
    out = [c.strip().upper() for c in text.split(",") if c.strip()]
    bad = [c for c in out if c not in COUNTRIES]
    if bad or not out:
        raise argparse.ArgumentTypeError(f"unknown country code(s) {', '.join(bad) or text!r}; known: {', '.join(COUNTRIES)}")
    return out


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", type=Path, help="TOML run config (default: built-in defaults)")
    common.add_argument("--out", type=Path, help="output directory (overrides paths.out)")
    common.add_argument("--jobs", type=int, help="worker processes for independent jobs")
    common.add_argument("--seed", type=int, help="root seed")
    common.add_argument("--country", type=_countries, help="comma-separated country codes, e.g. US,DE")
    common.add_argument("--alpha", type=float, help="BH level for the Granger graph")
    common.add_argument("--components", type=int, help="number of PLS components")
    common.add_argument("--folds", type=int, help="walk-forward folds")
    common.add_argument("-v", "--verbose", action="count", default=0, help="more logging (repeatable)")

    p = _Parser(prog="beir-narrative", description="Narrative features for BEIR direction forecasts and Granger spillover graphs.")
    sub = p.add_subparsers(dest="command", metavar="command", parser_class=_Parser)
    sub.required = True
    helps = {
        "ingest": "parse GKG files and filter records per country",
        "aggregate": "daily mean tone per retained theme",
        "preprocess": "align market data, difference, label, ADF report",
        "features": "full-sample residual PLS, category profiles, fold plans",
        "evaluate": "walk-forward model vs benchmark for every country and classifier",
        "granger": "pairwise Granger graph, betweenness and BEIR predecessors",
        "report": "delta-F1, F1, recall, precision and McNemar tables",
        "all": "run every stage in order",
    }
    for name, text in helps.items():
        sub.add_parser(name, parents=[common], help=text, description=text)
    s = sub.add_parser("synth", parents=[common], help="write the synthetic demo dataset and its config")
    s.add_argument("--signal", type=float, help="planted narrative signal strength in [0, 1]")
    s.add_argument("--days", type=int, help="usable modelling days per country")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig(base_dir=str(Path.cwd()))
    return with_overrides(
        cfg,
        out=args.out.resolve() if args.out else None,
        jobs=args.jobs,
        seed=args.seed,
        countries=args.country,
        alpha=args.alpha,
        components=args.components,
        folds=args.folds,
    )


def cmd_synth(args, cfg: RunConfig) -> dict:
    """Write ``<out>/data/{gkg/,market.csv,synth.json}`` and ``<out>/config.toml``."""
    out = args.out.resolve() if args.out else Path.cwd() / "demo"
    signal = cfg.synth.signal if args.signal is None else args.signal
    scfg = synth.SynthConfig(
        n_days=args.days or cfg.synth.n_days,
        signal=signal,
        seed=cfg.seed,
        countries=cfg.countries,
        records_per_day=cfg.synth.records_per_day,
        market_beta=cfg.synth.market_beta,
        k=cfg.parameters.k,
        horizon=cfg.parameters.horizon,
    )
    meta = synth.generate(out / "data", scfg)
    pipeline.write_text(out / "config.toml", demo_toml(signal, cfg.seed, cfg.countries))
    return {"out": str(out), "files": len(meta["gkg_files"]) + 1, "malformed": meta["malformed"]}


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # --help, or a usage error already reported
        return int(exc.code or 0)
    logging.basicConfig(
        level=[logging.WARNING, logging.INFO, logging.DEBUG][min(args.verbose, 2)],
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        cfg = resolve_config(args)
        if args.command == "synth":
            info = cmd_synth(args, cfg)
            print(json.dumps(info, sort_keys=True))
            return EXIT_OK
        run = pipeline.Run(cfg)
        stages = pipeline.STAGES if args.command == "all" else (args.command,)
        for stage in stages:
            entry = pipeline.COMMANDS[stage](run)
            print(f"{stage}: {len(entry['outputs'])} artifact(s) in {run.out / stage}")
        return EXIT_OK
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except NUMERICAL as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except DATA as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
