"""Stage orchestration: filter -> network -> metrics -> probit -> report.

Every stage reads and writes plain files under the run's output directory so
that stages can be re-run or skipped independently. All randomness is derived
from the root seed through ``SeedSequence`` spawn keys (stage, market, window),
and parallel results are merged in canonical order, so a re-run with the same
configuration reproduces every numerical output byte for byte.
"""

from __future__ import annotations

import dataclasses
import functools
import hashlib
import json
import logging
import math
import platform
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml

from . import __version__
from .calendar import (
    CalendarGapError,
    DataValidationError,
    DatedSeries,
    compute_log_returns,
    load_prices,
    load_registry,
    read_dated_csv,
    utc_close_instant,
    write_dated_csv,
)
from .causality import HongConfig, Window, build_window_network, rolling_windows
from .filtering import select_model
from .garch import FAMILIES
from .hac import hac_trend_test
from .network import SpilloverNetwork, centrality_report, survival_matrix
from .probit import (
    COVARIATES,
    SamplerConfig,
    build_design,
    build_weights,
    fit_sar_probit,
    logdet_grid,
    market_window_covariates,
    summarize_coefficients,
)

log = logging.getLogger(__name__)

STAGES = ("filter", "network", "metrics", "probit", "report")
_STAGE_CODE = {s: i for i, s in enumerate(STAGES)}
REPORT_FILES = ("centralization.csv", "degree_correlation.csv", "survival.csv",
                "centrality_trends.csv", "probit_summary.csv")


class ConfigError(ValueError):
    pass


# ---------------------------------------------------------------------------
# configuration


@dataclass
class RunConfig:
    registry: Path
    prices: Path
    output: Path
    covariates: Path | None = None
    window_months: int = 12
    drift_months: int = 1
    bandwidth: int = 5
    base_level: float = 0.01
    center_k0: bool = False
    families: tuple = FAMILIES
    orders: tuple = (1, 2)
    diag_lags: int = 20
    mc_reps: int = 500
    diag_level: float = 0.05
    n_starts: int = 5
    per_window: bool = True
    draws: int = 2000
    burn_in: int = 500
    probit_covariates: tuple = COVARIATES
    hub: str = "US"
    incoming: bool = False
    survival_steps: int = 12
    seed: int = 0
    stages: tuple = STAGES
    workers: int = 1

    _SECTIONS = {
        "paths": ("registry", "prices", "covariates", "output"),
        "windows": ("window_months", "drift_months"),
        "hong": ("bandwidth", "base_level", "center_k0"),
        "filter": ("families", "orders", "diag_lags", "mc_reps", "diag_level", "n_starts", "per_window"),
        "probit": ("draws", "burn_in", "probit_covariates", "hub"),
        "metrics": ("incoming", "survival_steps"),
    }

    @classmethod
    def from_dict(cls, doc: dict, base: Path | None = None, overrides: dict | None = None) -> "RunConfig":
        flat = {}
        doc = dict(doc or {})
        for section, keys in cls._SECTIONS.items():
            sub = doc.pop(section, None) or {}
            unknown = set(sub) - set(keys)
            if unknown:
                raise ConfigError(f"unknown keys in [{section}]: {sorted(unknown)}")
            flat.update(sub)
        top = {"seed", "stages", "workers"}
        unknown = set(doc) - top
        if unknown:
            raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
        flat.update(doc)
        flat.update({k: v for k, v in (overrides or {}).items() if v is not None})
        for key in ("registry", "prices", "output"):
            if key not in flat:
                raise ConfigError(f"missing paths.{key}")
        base = Path(base) if base is not None else Path.cwd()
        for key in ("registry", "prices", "covariates", "output"):
            if flat.get(key) is not None:
                p = Path(flat[key])
                flat[key] = p if p.is_absolute() else base / p
        for key in ("families", "orders", "probit_covariates", "stages"):
            if key in flat:
                v = flat[key]
                flat[key] = tuple(v.split(",")) if isinstance(v, str) else tuple(v)
        if "orders" in flat:
            flat["orders"] = tuple(int(o) for o in flat["orders"])
        cfg = cls(**flat)
        cfg.check()
        return cfg

    @classmethod
    def from_file(cls, path, overrides: dict | None = None) -> "RunConfig":
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"config file {path} not found")
        with open(path) as fh:
            doc = yaml.safe_load(fh) or {}
        return cls.from_dict(doc, base=path.parent, overrides=overrides)

    def check(self) -> None:
        if self.window_months < 2:
            raise ConfigError("window must span at least 2 months")
        if self.drift_months < 1:
            raise ConfigError("drift must be at least 1 month")
        bad = [s for s in self.stages if s not in STAGES]
        if bad:
            raise ConfigError(f"unknown stages {bad}; choose from {STAGES}")
        bad = [f for f in self.families if f not in FAMILIES]
        if bad:
            raise ConfigError(f"unknown GARCH families {bad}")
        bad = [c for c in self.probit_covariates if c not in COVARIATES]
        if bad:
            raise ConfigError(f"unknown probit covariates {bad}")
        if self.draws <= self.burn_in:
            raise ConfigError("draws must exceed burn_in")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1")
        HongConfig(self.bandwidth, self.base_level, self.window_months, self.drift_months, self.center_k0)

    def check_paths(self, stages) -> None:
        need = ["registry"]
        if "filter" in stages:
            need.append("prices")
        if "probit" in stages:
            need.append("covariates")
        for key in need:
            p = getattr(self, key)
            if p is None or not Path(p).exists():
                raise ConfigError(f"{key} file {p} does not exist")
        out = Path(self.output)
        out.mkdir(parents=True, exist_ok=True)
        probe = out / ".write_probe"
        try:
            probe.write_text("")
            probe.unlink()
        except OSError as exc:
            raise ConfigError(f"output directory {out} is not writable: {exc}") from None

    def hong(self) -> HongConfig:
        return HongConfig(self.bandwidth, self.base_level, self.window_months, self.drift_months, self.center_k0)

    def hashed_fields(self) -> dict:
        """Settings that determine numerical outputs (the output location does not)."""
        d = {}
        for f in dataclasses.fields(self):
            if f.name in ("output", "workers", "stages"):
                continue
            v = getattr(self, f.name)
            if isinstance(v, Path):
                v = _file_digest(v)
            elif isinstance(v, tuple):
                v = list(v)
            d[f.name] = v
        return d

    @functools.cached_property
    def config_hash(self) -> str:
        blob = json.dumps(self.hashed_fields(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()[:16]

    @property
    def header(self) -> str:
        return f"# config_hash: {self.config_hash}\n"


def _file_digest(path: Path) -> str | None:
    if path is None or not Path(path).exists():
        return None
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def stage_seed(root: int, stage: str, market: int = 0, window: int = 0) -> int:
    ss = np.random.SeedSequence(root, spawn_key=(_STAGE_CODE[stage], market, window))
    return int(ss.generate_state(1)[0])


def _write_csv(df: pd.DataFrame, path: Path, header: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(header)
        df.to_csv(fh, index=False, float_format="%.10g", lineterminator="\n")


def _write_yaml(doc, path: Path, header: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, "w") as fh:
        fh.write(header)
        yaml.safe_dump(doc, fh, sort_keys=False, default_flow_style=None)


def _f(x) -> float | None:
    x = float(x)
    return None if math.isnan(x) else float(f"{x:.12g}")


def _read_csv(path: Path) -> pd.DataFrame:
    if not path.exists():
        raise DataValidationError(f"missing input {path}")
    return pd.read_csv(path, comment="#", dtype={"market_id": str, "window": str})


# ---------------------------------------------------------------------------
# shared inputs


def load_returns(cfg: RunConfig) -> tuple[dict, dict]:
    registry = load_registry(cfg.registry)
    prices = load_prices(cfg.prices)
    unknown = sorted(set(prices) - set(registry))
    if unknown:
        raise DataValidationError(f"prices for markets not in the registry: {unknown}")
    missing = sorted(set(registry) - set(prices))
    if missing:
        raise DataValidationError(f"registry markets without prices: {missing}")
    return registry, {m: compute_log_returns(prices[m]) for m in sorted(prices)}


def run_windows(cfg: RunConfig, series: dict) -> list[Window]:
    first = min(s.dates[0] for s in series.values())
    last = max(s.dates[-1] for s in series.values())
    wins = rolling_windows(str(first), str(last), cfg.window_months, cfg.drift_months)
    if not wins:
        raise DataValidationError("sample is shorter than one window")
    return wins


def _pool(cfg: RunConfig):
    return ProcessPoolExecutor(cfg.workers) if cfg.workers > 1 else None


def _map(pool, fn, tasks):
    return list(pool.map(fn, tasks)) if pool is not None else [fn(t) for t in tasks]


# ---------------------------------------------------------------------------
# filter


def _filter_task(task):
    mid, dates, values, kw = task
    fit = select_model(values, dates=dates, name=mid, **kw)
    return mid, fit


def _fit_record(fit) -> dict:
    g = fit.garch
    return {
        "model": fit.shape.label(),
        "stage": fit.stage,
        "nobs": int(fit.nobs),
        "loglik": _f(fit.loglik),
        "bic": _f(fit.bic),
        "arfima": {"d": _f(fit.arfima.d), "mu": _f(fit.arfima.mu),
                   "phi": [_f(v) for v in fit.arfima.phi], "theta": [_f(v) for v in fit.arfima.theta]},
        "garch": {"family": g.family, "omega": _f(g.omega), "alpha": [_f(v) for v in g.alpha],
                  "beta": [_f(v) for v in g.beta], "gamma": [_f(v) for v in g.gamma], "delta": _f(g.delta)},
        "johnson_su": {"lam": _f(fit.dist.lam), "zeta": _f(fit.dist.zeta)},
        "diagnostics": ({"levels_p": _f(fit.diag_pvalues[0]), "squares_p": _f(fit.diag_pvalues[1])}
                        if fit.diag_pvalues else None),
    }


def stage_filter(cfg: RunConfig) -> list[Path]:
    registry, returns = load_returns(cfg)
    ids = sorted(registry)
    kw = dict(families=cfg.families, orders=cfg.orders, lags=cfg.diag_lags, mc_reps=cfg.mc_reps,
              level=cfg.diag_level, n_starts=cfg.n_starts)
    out_dir = Path(cfg.output)
    if cfg.per_window:
        windows = run_windows(cfg, returns)
        jobs = [(w, i) for w in range(len(windows)) for i in range(len(ids))]
        tasks = []
        for w, i in jobs:
            s = returns[ids[i]].between(windows[w].start, windows[w].end)
            tasks.append((ids[i], s.dates, s.values, {**kw, "seed": stage_seed(cfg.seed, "filter", i, w + 1)}))
        labels = [windows[w].label for w, _ in jobs]
    else:
        tasks = [(m, returns[m].dates, returns[m].values, {**kw, "seed": stage_seed(cfg.seed, "filter", i, 0)})
                 for i, m in enumerate(ids)]
        labels = ["global"] * len(ids)
    pool = _pool(cfg)
    try:
        results = _map(pool, _filter_task, tasks)
    finally:
        if pool is not None:
            pool.shutdown()
    written = []
    for label in dict.fromkeys(labels):
        chunk = [r for r, lab in zip(results, labels) if lab == label]
        res_path = out_dir / "residuals" / f"{label}.csv"
        res_path.parent.mkdir(parents=True, exist_ok=True)
        write_dated_csv([DatedSeries(m, f.dates, f.std_residuals) for m, f in chunk], res_path, "s", cfg.header)
        fit_path = out_dir / "fits" / f"{label}.yaml"
        _write_yaml({"window": label, "markets": {m: _fit_record(f) for m, f in chunk}}, fit_path, cfg.header)
        written += [res_path, fit_path]
    return written


def load_residuals(cfg: RunConfig, window: Window) -> dict:
    base = Path(cfg.output) / "residuals"
    path = base / f"{window.label}.csv"
    if not path.exists():
        path = base / "global.csv"
    if not path.exists():
        raise DataValidationError(f"no residual file for window {window.label} under {base}; run the filter stage")
    return _cached_residuals(str(path), path.stat().st_mtime_ns)


_RESIDUAL_CACHE: dict = {}


def _cached_residuals(path: str, stamp: int) -> dict:
    key = (path, stamp)
    if key not in _RESIDUAL_CACHE:
        _RESIDUAL_CACHE.clear()
        _RESIDUAL_CACHE[key] = read_dated_csv(path, "s")
    return _RESIDUAL_CACHE[key]


def residual_windows(cfg: RunConfig) -> list[Window]:
    base = Path(cfg.output) / "residuals"
    g = base / "global.csv"
    if g.exists():
        return run_windows(cfg, read_dated_csv(g, "s"))
    files = sorted(base.glob("*.csv")) if base.exists() else []
    if not files:
        raise DataValidationError(f"no residual files under {base}; run the filter stage")
    labels = {p.stem for p in files}
    frames = [read_dated_csv(p, "s") for p in files]
    first = min(s.dates[0] for f in frames for s in f.values())
    last = max(s.dates[-1] for f in frames for s in f.values())
    wins = rolling_windows(str(first), str(last), cfg.window_months, cfg.drift_months)
    return [w for w in wins if w.label in labels]


# ---------------------------------------------------------------------------
# network


def _network_task(task):
    cfg, window = task
    registry = load_registry(cfg.registry)
    res = load_residuals(cfg, window)
    return build_window_network(res, window, registry, cfg.hong(), markets=sorted(registry))


def network_to_dict(net: SpilloverNetwork) -> dict:
    edges = []
    for a, b in sorted(net.edges):
        t = net.tests.get((a, b))
        edges.append({"out": a, "in": b, "Q": _f(t.Q) if t else None, "p": _f(t.p) if t else None})
    return {
        "window_end": net.window_end,
        "N": net.n,
        "level": _f(net.level),
        "vertices": list(net.vertices),
        "edges": edges,
        "skipped": [{"out": a, "in": b, "reason": r} for (a, b), r in sorted(net.skipped.items())],
    }


def network_from_dict(doc: dict) -> SpilloverNetwork:
    edges = frozenset((e["out"], e["in"]) for e in doc.get("edges") or [])
    skipped = {(s["out"], s["in"]): s["reason"] for s in doc.get("skipped") or []}
    level = doc.get("level")
    return SpilloverNetwork(str(doc["window_end"]), tuple(doc["vertices"]), edges, skipped=skipped,
                            level=math.nan if level is None else float(level))


def stage_network(cfg: RunConfig) -> list[Path]:
    windows = residual_windows(cfg)
    pool = _pool(cfg)
    try:
        nets = _map(pool, _network_task, [(cfg, w) for w in windows])
    finally:
        if pool is not None:
            pool.shutdown()
    out_dir = Path(cfg.output) / "networks"
    written, rows = [], []
    for w, net in zip(windows, nets):
        p = out_dir / f"{w.label}.yaml"
        _write_yaml(network_to_dict(net), p, cfg.header)
        written.append(p)
        for (a, b), t in sorted(net.tests.items()):
            rows.append({"window": w.label, "out": a, "in": b, "Q": t.Q, "p": t.p, "k_start": t.k_start,
                         "T": t.T, "significant": int((a, b) in net.edges)})
    tests = pd.DataFrame(rows, columns=["window", "out", "in", "Q", "p", "k_start", "T", "significant"])
    _write_csv(tests, out_dir / "tests.csv", cfg.header)
    written.append(out_dir / "tests.csv")
    return written


def load_networks(cfg: RunConfig) -> list[SpilloverNetwork]:
    base = Path(cfg.output) / "networks"
    files = sorted(base.glob("*.yaml")) if base.exists() else []
    if not files:
        raise DataValidationError(f"no network files under {base}; run the network stage")
    nets = []
    for p in files:
        with open(p) as fh:
            nets.append(network_from_dict(yaml.safe_load(fh)))
    return nets


# ---------------------------------------------------------------------------
# metrics


def stage_metrics(cfg: RunConfig) -> list[Path]:
    nets = load_networks(cfg)
    vrows, nrows = [], []
    for g in nets:
        rep = centrality_report(g, incoming=cfg.incoming)
        for v in g.vertices:
            vrows.append({"window": g.window_end, "market_id": v, "out_degree": rep.out_degree[v],
                          "in_degree": rep.in_degree[v], "harmonic": rep.harmonic[v]})
        nrows.append({"window": g.window_end, "n_edges": rep.n_edges, "density": rep.density,
                      "mean_degree_centrality": rep.mean_degree_centrality,
                      "mean_harmonic_centrality": rep.mean_harmonic_centrality,
                      "out_centralization": rep.out_centralization, "in_centralization": rep.in_centralization,
                      "degree_correlation": rep.degree_correlation})
    S = survival_matrix(nets, cfg.survival_steps)
    srows = [{"window": g.window_end, "step": s + 1, "ratio": S[t, s]}
             for t, g in enumerate(nets) for s in range(S.shape[1]) if s + 1 <= t]
    out = Path(cfg.output) / "metrics"
    paths = [out / "vertex.csv", out / "network.csv", out / "survival.csv"]
    _write_csv(pd.DataFrame(vrows), paths[0], cfg.header)
    _write_csv(pd.DataFrame(nrows), paths[1], cfg.header)
    _write_csv(pd.DataFrame(srows, columns=["window", "step", "ratio"]), paths[2], cfg.header)
    return paths


# ---------------------------------------------------------------------------
# probit


def _probit_task(task):
    panel, N, sampler = task
    return fit_sar_probit(panel, build_weights(N), sampler, logdet=logdet_grid(N))


def stage_probit(cfg: RunConfig) -> list[Path]:
    registry = load_registry(cfg.registry)
    nets = load_networks(cfg)
    windows = {w.label: w for w in residual_windows(cfg)}
    missing = [g.window_end for g in nets if g.window_end not in windows]
    if missing:
        raise DataValidationError(f"networks without a matching window: {missing}")
    if cfg.covariates is None or not Path(cfg.covariates).exists():
        raise DataValidationError(f"covariate file {cfg.covariates} not found")
    covs = pd.read_csv(cfg.covariates, comment="#", dtype={"market_id": str})
    need = {"date", "market_id", "equity_close", "fx_rate_usd", "market_cap_usd", "mc_to_gdp"}
    if need - set(covs.columns):
        raise DataValidationError(f"covariate file lacks columns {sorted(need - set(covs.columns))}")
    wins = [windows[g.window_end] for g in nets]
    ids = sorted(registry)
    mc = market_window_covariates(covs, wins, ids)
    panels = [build_design(g, w, mc, registry, cfg.probit_covariates, cfg.hub) for g, w in zip(nets, wins)]
    out = Path(cfg.output) / "probit"
    written = []
    for p in panels:
        path = out / "panels" / f"{p.window_end}.csv"
        _write_csv(p.frame(), path, cfg.header)
        written.append(path)
    N = len(ids)
    tasks = [(p, N, SamplerConfig(cfg.draws, cfg.burn_in, stage_seed(cfg.seed, "probit", 0, t + 1)))
             for t, p in enumerate(panels)]
    pool = _pool(cfg)
    try:
        fits = _map(pool, _probit_task, tasks)
    finally:
        if pool is not None:
            pool.shutdown()
    frames = []
    for f in fits:
        tab = f.table()
        tab.insert(0, "window", f.window_end)
        frames.append(tab)
    coef = pd.concat(frames, ignore_index=True)
    coef["significant"] = coef["significant"].astype(int)
    _write_csv(coef, out / "coefficients.csv", cfg.header)
    written.append(out / "coefficients.csv")
    return written


class _StoredFit:
    """Per-window coefficients read back from ``coefficients.csv``."""

    def __init__(self, rows: pd.DataFrame):
        self._c = {r.term: (float(r.mean), bool(r.significant)) for r in rows.itertuples()}

    def coefficients(self) -> dict:
        return self._c


# ---------------------------------------------------------------------------
# report


def centrality_trends(vertex: pd.DataFrame, registry: dict) -> pd.DataFrame:
    """Per-market mean/SD/max and HAC trend of each centrality series, plus the MG row.

    MG is the cross-market mean of the per-market slopes (an interpretation
    of the pooled mean-group row).
    """
    rows = []
    measures = ("out_degree", "in_degree", "harmonic")
    for m, g in vertex.groupby("market_id", sort=True):
        g = g.sort_values("window")
        for meas in measures:
            x = g[meas].to_numpy(float)
            tt = hac_trend_test(x) if len(x) >= 10 else None
            rows.append({
                "market_id": m,
                "classification": registry[m].classification if m in registry else "",
                "measure": meas,
                "mean": x.mean(),
                "sd": x.std(ddof=1) if len(x) > 1 else math.nan,
                "max": x.max(),
                "trend": tt.slope if tt else math.nan,
                "tstat": tt.tstat if tt else math.nan,
                "pvalue": tt.pvalue if tt else math.nan,
                "degenerate": int(tt.degenerate) if tt else 1,
            })
    df = pd.DataFrame(rows)
    for meas in measures:
        sub = df[df["measure"] == meas]
        rows.append({"market_id": "MG", "classification": "", "measure": meas, "mean": sub["mean"].mean(),
                     "sd": math.nan, "max": math.nan, "trend": sub["trend"].mean(), "tstat": math.nan,
                     "pvalue": math.nan, "degenerate": 0})
    return pd.DataFrame(rows)


def stage_report(cfg: RunConfig) -> list[Path]:
    base = Path(cfg.output)
    need = [base / "metrics" / "network.csv", base / "metrics" / "vertex.csv", base / "metrics" / "survival.csv",
            base / "probit" / "coefficients.csv"]
    missing = [str(p) for p in need if not p.exists()]
    if missing:
        raise DataValidationError(f"report inputs missing: {missing}")
    registry = load_registry(cfg.registry)
    net = _read_csv(need[0])
    vertex = _read_csv(need[1])
    surv = _read_csv(need[2])
    coef = _read_csv(need[3])
    out = base / "report"
    paths = [out / f for f in REPORT_FILES]
    _write_csv(net[["window", "n_edges", "density", "mean_degree_centrality", "mean_harmonic_centrality",
                    "out_centralization", "in_centralization"]], paths[0], cfg.header)
    _write_csv(net[["window", "degree_correlation"]], paths[1], cfg.header)
    _write_csv(surv, paths[2], cfg.header)
    _write_csv(centrality_trends(vertex, registry), paths[3], cfg.header)
    fits = [_StoredFit(g) for _, g in coef.groupby("window", sort=True)]
    if not fits:
        raise DataValidationError("probit coefficient file is empty")
    _write_csv(summarize_coefficients(fits), paths[4], cfg.header)
    return paths


# ---------------------------------------------------------------------------
# validate / run


def validate(cfg: RunConfig) -> list[str]:
    """Lint configuration and data; returns human-readable findings, raises on errors."""
    notes = []
    cfg.check_paths(("filter", "probit") if cfg.covariates else ("filter",))
    registry, returns = load_returns(cfg)
    prices = load_prices(cfg.prices)
    for m, p in prices.items():
        for d in np.unique(p.dates.astype("datetime64[Y]")):
            year_days = p.dates[p.dates.astype("datetime64[Y]") == d]
            for day in (year_days[0], year_days[-1]):
                try:
                    utc_close_instant(registry[m], day)
                except CalendarGapError as exc:
                    raise DataValidationError(f"calendar does not cover prices: {exc}") from None
    wins = run_windows(cfg, returns)
    notes.append(f"{len(registry)} markets, {len(wins)} windows ({wins[0].label} .. {wins[-1].label})")
    if "temporal_distance_us" in cfg.probit_covariates and cfg.hub not in registry:
        raise DataValidationError(f"hub market {cfg.hub!r} is not in the registry")
    if cfg.covariates is not None:
        covs = pd.read_csv(cfg.covariates, comment="#", dtype={"market_id": str})
        need = {"date", "market_id", "equity_close", "fx_rate_usd", "market_cap_usd", "mc_to_gdp"}
        if need - set(covs.columns):
            raise DataValidationError(f"covariate file lacks columns {sorted(need - set(covs.columns))}")
        market_window_covariates(covs, wins, sorted(registry))
    return notes


STAGE_FUNCS = {
    "filter": stage_filter,
    "network": stage_network,
    "metrics": stage_metrics,
    "probit": stage_probit,
    "report": stage_report,
}


@dataclass
class Manifest:
    config_hash: str
    seed: int
    versions: dict
    stages: list = field(default_factory=list)
    status: str = "ok"
    error: str = ""

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)


def _versions() -> dict:
    import numba
    import scipy

    return {"spillnet": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "pandas": pd.__version__, "numba": numba.__version__}


def run(cfg: RunConfig, stages=None) -> Manifest:
    """Run ``stages`` (default: the configured ones) in dependency order.

    A failing stage stops the run; artifacts of completed stages stay on disk
    and the manifest records the failure before the exception propagates.
    """
    stages = tuple(stages) if stages is not None else tuple(cfg.stages)
    bad = [s for s in stages if s not in STAGES]
    if bad:
        raise ConfigError(f"unknown stages {bad}")
    ordered = [s for s in STAGES if s in stages]
    cfg.check_paths(ordered)
    man = Manifest(cfg.config_hash, cfg.seed, _versions())
    path = Path(cfg.output) / "manifest.yaml"
    try:
        for s in ordered:
            t0 = time.perf_counter()
            log.info("stage %s", s)
            files = STAGE_FUNCS[s](cfg)
            man.stages.append({"stage": s, "seconds": round(time.perf_counter() - t0, 3),
                               "outputs": len(files)})
    except Exception as exc:
        man.status = "failed"
        man.error = f"{type(exc).__name__}: {exc}"
        raise
    finally:
        _write_yaml(man.to_dict(), path, cfg.header)
    return man
