"""Synthetic GKG exports and market series with a planted narrative signal.

Each country has a latent narrative factor ``f`` (AR(1), coefficient
0.97). The tone of "inflation narrative" articles follows ``f``; the
BEIR increment on day ``t + 1`` is

    beta * (stock_t + oil_t) / sqrt(2) + s * df_t + sqrt(1 - s^2) * eps_{t+1}

with unit-variance stock, oil and noise innovations, so news about day
``t`` moves BEIR one business day later. With ``s = 0`` the theme panel
carries no information about BEIR.
"""

from __future__ import annotations

import datetime as dt
import gzip
import json
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np

from .gkg import BAD_COLUMN_COUNT, BAD_DATE, BAD_TONE, format_gkg_line
from .market import COMMODITIES, COUNTRIES, FIPS, MarketSeries, default_roster, write_series

SIGNAL_THEMES = ("ECON_INFLATION", "ECON_INTEREST_RATES", "ECON_CENTRALBANK", "ECON_COST_OF_LIVING")
BACKGROUND_THEMES = ("ECON_STOCKMARKET", "EPU_ECONOMY", "ECON_TAXATION", "WB_1104_MACROECONOMIC_VULNERABILITY_AND_DEBT")
CONTEXT_THEMES = ("GENERAL_GOVERNMENT", "GENERAL_HEALTH", "ENV_CLIMATECHANGE", "EDUCATION", "SLFID_CIVIL_LIBERTIES")
# dropped by the taxonomy as descriptive
DESCRIPTIVE_THEMES = ("TAX_ETHNICITY_AMERICAN", "TAX_FNCACT_PRESIDENT")

AR_COEF = 0.97


@dataclass(frozen=True)
class SynthConfig:
    """Generator settings.

    ``n_days`` is the number of modelling rows per country: the calendar
    gets ``k + horizon`` extra business days so differencing and the label
    shift leave exactly ``n_days`` usable dates.
    """

    n_days: int = 600
    signal: float = 0.8
    seed: int = 0
    countries: tuple[str, ...] = COUNTRIES
    records_per_day: int = 24
    market_beta: float = 0.7
    # (source, target): narrative of source also moves BEIR of target
    spillovers: tuple[tuple[str, str], ...] = (("DE", "US"),)
    spillover_weight: float = 0.4
    malformed: dict = field(default_factory=lambda: {BAD_COLUMN_COUNT: 3, BAD_TONE: 2, BAD_DATE: 2})
    days_per_file: int = 20
    gzip_every: int = 3  # every n-th file is gzip-compressed; 0 disables
    filler_chars: int = 120
    start: str = "2016-01-04"
    k: int = 5
    horizon: int = 1

    def __post_init__(self):
        if not 0.0 <= self.signal <= 1.0:
            raise ValueError("signal must lie in [0, 1]")
        if self.n_days < 1 or self.records_per_day < 2:
            raise ValueError("need n_days >= 1 and records_per_day >= 2")
        unknown = set(self.countries) - set(COUNTRIES)
        if unknown:
            raise ValueError(f"unknown countries: {', '.join(sorted(unknown))}")
        object.__setattr__(self, "countries", tuple(self.countries))
        object.__setattr__(self, "spillovers", tuple(tuple(p) for p in self.spillovers))
        object.__setattr__(self, "malformed", dict(self.malformed))

    def to_dict(self) -> dict:
        d = asdict(self)
        d["countries"] = list(self.countries)
        d["spillovers"] = [list(p) for p in self.spillovers]
        return d


def business_days(start: str, n: int) -> np.ndarray:
    return np.busday_offset(np.datetime64(start, "D"), np.arange(n), roll="forward")


@dataclass(frozen=True)
class LatentPaths:
    dates: np.ndarray
    narrative: dict  # country -> f
    market: dict  # series name -> levels
    beir_increments: dict


def latent_paths(cfg: SynthConfig, rng: np.random.Generator) -> LatentPaths:
    n = cfg.n_days + cfg.k + cfg.horizon
    dates = business_days(cfg.start, n)
    s = cfg.signal
    oil = rng.normal(size=n)
    narrative, shocks, market, incs = {}, {}, {}, {}
    specs, _ = default_roster(cfg.countries)
    for spec in specs:
        c = spec.country
        e = rng.normal(size=n)
        f = np.empty(n)
        f[0] = e[0] / np.sqrt(1 - AR_COEF**2)
        for t in range(1, n):
            f[t] = AR_COEF * f[t - 1] + e[t]
        narrative[c] = f
        shocks[c] = np.diff(f, prepend=f[0])
        stock = rng.normal(size=n)
        noise = rng.normal(size=n)
        inc = np.zeros(n)
        drive = cfg.market_beta * (stock + oil) / np.sqrt(2) + s * shocks[c]
        inc[1:] = drive[:-1] + np.sqrt(1 - s * s) * noise[1:]
        incs[c] = inc
        market[spec.stock] = 1000.0 * np.exp(0.01 * np.cumsum(stock))
        market[spec.steepener] = 1.0 + 0.02 * np.cumsum(rng.normal(size=n))
        if spec.fx:
            market[spec.fx] = np.exp(0.005 * np.cumsum(rng.normal(size=n)))
    for src, dst in cfg.spillovers:
        if src in shocks and dst in incs:
            incs[dst][1:] += cfg.spillover_weight * s * shocks[src][:-1]
    for spec in specs:
        market[spec.beir] = 2.0 + 0.03 * np.cumsum(incs[spec.country])
    market["OIL"] = 60.0 * np.exp(0.02 * np.cumsum(oil))
    market["GOLD"] = 1200.0 * np.exp(0.01 * np.cumsum(rng.normal(size=n)))
    market["BCOM"] = 200.0 * np.exp(0.01 * np.cumsum(rng.normal(size=n)))
    return LatentPaths(dates, narrative, market, incs)


def _market_series(cfg: SynthConfig, paths: LatentPaths, rng) -> list[MarketSeries]:
    specs, names = default_roster(cfg.countries)
    country_of = {n: s.country for s in specs for n in (s.beir, *s.market_names)}
    out = []
    n = paths.dates.size
    for name in names:
        keep = np.ones(n, dtype=bool)
        if not name.endswith("_BEIR"):
            # isolated one-day gaps exercise forward filling
            gaps = rng.random(n) < 0.01
            gaps[0] = gaps[-1] = False
            keep &= ~gaps
        values = paths.market[name]
        out.append(MarketSeries(name, country_of.get(name), paths.dates[keep], values[keep]))
    return out


def _tone(x: float) -> float:
    return float(np.clip(round(x, 4), -10.0, 10.0))


def _country_lines(cfg: SynthConfig, paths: LatentPaths, rng, country: str) -> list[list[str]]:
    """GKG lines for every calendar day of one country (outer list by day)."""
    fips = [FIPS[country]]
    n = paths.dates.size
    R = cfg.records_per_day
    n_signal = R // 2
    # unit stationary variance
    level = paths.narrative[country] * np.sqrt(1 - AR_COEF**2)
    drop = rng.integers(0, 4, size=(n, R))  # each record names 3 of its 4 pool themes
    ctx = np.argsort(rng.random((n, R, len(CONTEXT_THEMES))), axis=2)[:, :, :2]
    n_ctx = 1 + rng.integers(0, 2, size=(n, R))
    noise = rng.normal(size=(n, R))
    extra = rng.random((n, R)) < 0.2
    which = rng.integers(0, len(DESCRIPTIVE_THEMES), size=(n, R))
    hours = rng.integers(0, 24 * 60, size=(n, R))
    rejected = rng.integers(0, 4, size=n)
    rejected_tone = rng.normal(size=n)
    filler = "x" * cfg.filler_chars
    out = []
    for d in range(n):
        day = paths.dates[d].astype(dt.date)
        stamp = f"{day:%Y%m%d}"
        lines = []
        for r in range(R):
            if r < n_signal:
                pool = SIGNAL_THEMES
                tone = -1.0 + 2.0 * level[d] + noise[d, r]
                k_ctx = 1
            else:
                pool = BACKGROUND_THEMES
                tone = -1.0 + 1.5 * noise[d, r]
                k_ctx = int(n_ctx[d, r])
            themes = [t for i, t in enumerate(pool) if i != drop[d, r]]
            themes += [CONTEXT_THEMES[j] for j in ctx[d, r, :k_ctx]]
            if extra[d, r]:
                themes.append(DESCRIPTIVE_THEMES[which[d, r]])
            when = dt.datetime.combine(day, dt.time(int(hours[d, r]) // 60, int(hours[d, r]) % 60))
            lines.append(format_gkg_line(f"{country}{stamp}-{r}", when, themes, _tone(tone), fips, filler=filler))
        # one article a day that mentions the country but fails the Ecofin filter
        themes = [t for i, t in enumerate(BACKGROUND_THEMES) if i != rejected[d]][:2] + [CONTEXT_THEMES[0]]
        lines.append(format_gkg_line(f"{country}{stamp}-x", day, themes, _tone(rejected_tone[d]), fips, filler=filler))
        out.append(lines)
    return out


def _malformed_line(reason: str, rng) -> str:
    good = format_gkg_line("BAD", dt.date(2016, 1, 4), list(BACKGROUND_THEMES[:3]), 0.0, ["US"])
    cols = good.split("\t")
    if reason == BAD_COLUMN_COUNT:
        return "\t".join(cols[: int(rng.integers(3, 20))])
    if reason == BAD_TONE:
        cols[15] = "not-a-number,1,2"
    elif reason == BAD_DATE:
        cols[1] = "2016-13-45"
    else:
        raise ValueError(reason)
    return "\t".join(cols)


def generate(out_dir, cfg: SynthConfig | None = None) -> dict:
    """Write ``gkg/*.gkg.tsv[.gz]``, ``market.csv`` and ``synth.json`` under ``out_dir``.

    Returns the ``synth.json`` content: the config, file names and the
    planted malformation counts. The same config always yields identical
    files.
    """
    cfg = cfg or SynthConfig()
    out = Path(out_dir)
    gdir = out / "gkg"
    gdir.mkdir(parents=True, exist_ok=True)
    root = np.random.SeedSequence(cfg.seed)
    lat_ss, mkt_ss, gkg_ss, bad_ss = root.spawn(4)
    paths = latent_paths(cfg, np.random.default_rng(lat_ss))
    series = _market_series(cfg, paths, np.random.default_rng(mkt_ss))
    write_series(series, out / "market.csv")

    n = paths.dates.size
    per_country = [
        _country_lines(cfg, paths, np.random.default_rng(ss), c)
        for c, ss in zip(cfg.countries, gkg_ss.spawn(len(cfg.countries)))
    ]
    chunks = [range(a, min(a + cfg.days_per_file, n)) for a in range(0, n, cfg.days_per_file)]
    bad_rng = np.random.default_rng(bad_ss)
    planted = [reason for reason, m in sorted(cfg.malformed.items()) for _ in range(int(m))]
    # malformed lines go into randomly chosen files
    bad_files = bad_rng.integers(0, len(chunks), size=len(planted)) if planted else []
    files = []
    for ci, chunk in enumerate(chunks):
        lines = []
        for d in chunk:
            for country_lines in per_country:
                lines.extend(country_lines[d])
        for reason, fi in zip(planted, bad_files):
            if fi == ci:
                pos = int(bad_rng.integers(0, len(lines) + 1))
                lines.insert(pos, _malformed_line(reason, bad_rng))
        first = paths.dates[chunk.start].astype(dt.date)
        name = f"{first:%Y%m%d}.gkg.tsv"
        body = ("\n".join(lines) + "\n").encode("utf-8")
        if cfg.gzip_every and ci % cfg.gzip_every == cfg.gzip_every - 1:
            name += ".gz"
            # mtime=0 keeps the compressed bytes reproducible
            with open(gdir / name, "wb") as raw, gzip.GzipFile(filename="", mode="wb", fileobj=raw, mtime=0) as gz:
                gz.write(body)
        else:
            (gdir / name).write_bytes(body)
        files.append(f"gkg/{name}")
    meta = {
        "config": cfg.to_dict(),
        "gkg_files": files,
        "market_file": "market.csv",
        "malformed": {r: int(m) for r, m in sorted(cfg.malformed.items())},
        "calendar": [str(paths.dates[0]), str(paths.dates[-1]), int(n)],
        "signal_themes": list(SIGNAL_THEMES),
        "commodities": list(COMMODITIES),
    }
    (out / "synth.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    return meta


def planted_model_data(cfg: SynthConfig | None = None, country: str = "US", n_noise_themes: int = 5):
    """A ``ModelData`` drawn from the same latent process, skipping the GKG round trip.

    Theme levels are the four signal themes (narrative level plus the
    sampling noise of a daily mean over signal articles) and
    ``n_noise_themes`` pure-noise themes. Market features are the country's
    stock, FX and steepener plus the three commodities.
    """
    from .market import country_spec
    from .panel import build_model_data

    cfg = cfg or SynthConfig(countries=(country,))
    if country not in cfg.countries:
        raise ValueError(f"{country} is not among the configured countries")
    lat_ss, _, gkg_ss, _ = np.random.SeedSequence(cfg.seed).spawn(4)
    paths = latent_paths(cfg, np.random.default_rng(lat_ss))
    rng = np.random.default_rng(gkg_ss)
    n = paths.dates.size
    per_theme = max(1, (cfg.records_per_day // 2) * 3 // 4)
    level = paths.narrative[country] * np.sqrt(1 - AR_COEF**2)
    signal = -1.0 + 2.0 * level[:, None] + rng.normal(size=(n, len(SIGNAL_THEMES))) / np.sqrt(per_theme)
    noise = -1.0 + 1.5 * rng.normal(size=(n, n_noise_themes)) / np.sqrt(per_theme)
    spec = country_spec(country)
    names = spec.market_names + COMMODITIES
    market = np.column_stack([paths.market[m] for m in names])
    theme_names = SIGNAL_THEMES + tuple(f"NOISE_THEME_{j}" for j in range(n_noise_themes))
    return build_model_data(
        country, paths.dates, paths.market[spec.beir], market, names,
        np.hstack([signal, noise]), theme_names, cfg.k, cfg.horizon,
    )
