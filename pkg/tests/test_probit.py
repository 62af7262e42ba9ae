import datetime as dt
import math
from types import SimpleNamespace

import numpy as np
import pandas as pd
import pytest
from scipy.stats import norm

from helpers import make_market
from spillnet.calendar import DataValidationError
from spillnet.causality import Window
from spillnet.network import SpilloverNetwork
from spillnet.probit import (
    COVARIATES,
    TABLE_ROWS,
    EdgePanel,
    LogDetGrid,
    RankDeficiencyError,
    SamplerConfig,
    build_design,
    build_weights,
    check_rank,
    collinear_columns,
    edge_pairs,
    fit_sar_probit,
    fit_standard_probit,
    logdet_grid,
    market_window_covariates,
    simulate_sar_probit,
    sparse_logdet,
    summarize_coefficients,
)


def edge_design(N, rng):
    """Intercept plus two pair-level covariates."""
    n = N * (N - 1)
    return np.column_stack([np.ones(n), rng.normal(size=n), rng.normal(size=n)])


def simulated_panel(N, beta, rho, seed):
    rng = np.random.default_rng(seed)
    X = edge_design(N, rng)
    W = build_weights(N)
    y = simulate_sar_probit(X, beta, rho, W, rng)
    return EdgePanel("sim", y, X, ("const", "x1", "x2"), edge_pairs(range(N))), W


class TestWeights:
    def test_three_markets_by_hand(self):
        W = build_weights(3, standardize=False)
        pairs = edge_pairs(range(3))
        assert pairs == [(0, 1), (0, 2), (1, 0), (1, 2), (2, 0), (2, 1)]
        row = W.W.toarray()[pairs.index((0, 1))]
        neighbours = {pairs[k] for k in np.flatnonzero(row)}
        assert neighbours == {(0, 2), (2, 1)}
        assert (1, 2) not in neighbours and (1, 0) not in neighbours

    @pytest.mark.parametrize("N", [3, 4, 5, 6, 9])
    def test_rule_oracle(self, N):
        W = build_weights(N, standardize=False).W.toarray()
        pairs = edge_pairs(range(N))
        ref = np.array([[float(p != q and (p[0] == q[0] or p[1] == q[1])) for q in pairs] for p in pairs])
        np.testing.assert_array_equal(W, ref)
        assert np.all(W.sum(axis=1) == 2 * (N - 2))
        np.testing.assert_array_equal(W, W.T)
        assert np.all(np.diag(W) == 0)

    def test_forty_markets(self):
        raw = build_weights(40, standardize=False)
        assert raw.n == 1560 and set(np.diff(raw.W.indptr)) == {76}
        std = build_weights(40)
        np.testing.assert_allclose(np.asarray(std.W.sum(axis=1)).ravel(), 1.0, atol=1e-12)
        assert std.row_standardized

    def test_too_small(self):
        with pytest.raises(ValueError):
            build_weights(2)

    @pytest.mark.parametrize("N", [3, 4, 5, 6])
    def test_logdet_matches_dense(self, N):
        W = build_weights(N).W
        I = np.eye(W.shape[0])
        for rho in np.round(np.arange(-0.9, 0.91, 0.1), 10):
            sign, ref = np.linalg.slogdet(I - rho * W.toarray())
            assert sign > 0
            assert abs(sparse_logdet(I - rho * W) - ref) < 1e-8
        grid = logdet_grid(N)
        for rho in (-0.83, -0.2, 0.37, 0.91):
            ref = np.linalg.slogdet(I - rho * W.toarray())[1]
            assert abs(float(grid(rho)) - ref) < 1e-5

    def test_grid_shape(self):
        g = LogDetGrid(build_weights(4).W, size=50, bound=0.9)
        assert len(g.rho) == 50 and g.rho[0] == -0.9 and g.values[len(g.values) // 2] < 1e-3


def _covariate_frame(markets, start, end, seed=0):
    rng = np.random.default_rng(seed)
    dates = pd.bdate_range(start, end)
    frames = []
    for i, m in enumerate(markets):
        n = len(dates)
        frames.append(pd.DataFrame({
            "date": dates,
            "market_id": m,
            "equity_close": 100 * np.exp(np.cumsum(rng.normal(0, 0.01 * (i + 1), n))),
            "fx_rate_usd": np.ones(n) if m == "US" else np.exp(np.cumsum(rng.normal(0, 0.005, n))),
            "market_cap_usd": np.where(dates.year == dates.year[0], 1e11 * (i + 1), 2e11 * (i + 1)),
            "mc_to_gdp": np.full(n, 0.5 + 0.1 * i),
        }))
    return pd.concat(frames, ignore_index=True)


def _windows():
    return [Window(dt.date(2010, 1, 1), dt.date(2010, 6, 30)), Window(dt.date(2010, 4, 1), dt.date(2010, 9, 30)),
            Window(dt.date(2010, 7, 1), dt.date(2010, 12, 31))]


class TestDesign:
    markets = ["AA", "BB", "CC", "US"]

    def _registry(self):
        return {
            "AA": make_market("AA", 540, "15:00", classification="developed"),
            "BB": make_market("BB", 60, "17:30", classification="emerging"),
            "CC": make_market("CC", -180, "17:00", classification="frontier"),
            "US": make_market("US", -300, "16:00", classification="developed"),
        }

    def test_window_covariates(self):
        cov = market_window_covariates(_covariate_frame(self.markets, "2010-01-01", "2010-12-31"),
                                       _windows(), self.markets)
        assert cov.shape == (12, 6)
        for c in ("eq_return", "fx_return"):
            assert abs(cov[c].mean()) < 1e-10 and abs(cov[c].std(ddof=0) - 1) < 1e-10
        # constant US exchange rate has no volatility
        assert (cov.xs("US", level="market_id")["fx_vol"] == 0).all()
        log_mcap = cov.loc[("2010-06", "BB"), "log_mcap"]
        assert log_mcap == pytest.approx(math.log(2e11))
        assert cov.loc[("2010-12", "CC"), "log_mc_gdp"] == pytest.approx(math.log(0.7))

    def test_window_covariate_gaps(self):
        df = _covariate_frame(["AA", "BB"], "2010-01-01", "2010-12-31")
        df = df[~((df["market_id"] == "BB") & (df["date"] >= "2010-10-01"))]
        with pytest.raises(DataValidationError, match="BB: 2010-12"):
            market_window_covariates(df, _windows(), ["AA", "BB"])
        with pytest.raises(DataValidationError, match="ZZ"):
            market_window_covariates(df, _windows(), ["AA", "ZZ"])

    def _panel(self, edges=frozenset({("US", "AA"), ("AA", "BB")})):
        reg = self._registry()
        win = _windows()[0]
        cov = market_window_covariates(_covariate_frame(self.markets, "2010-01-01", "2010-12-31"),
                                       _windows(), self.markets)
        net = SpilloverNetwork(win.label, tuple(self.markets), edges)
        return build_design(net, win, cov, reg), cov

    def test_panel_layout(self):
        panel, cov = self._panel()
        assert panel.X.shape == (12, len(COVARIATES)) and panel.columns == COVARIATES
        assert panel.pairs == sorted(panel.pairs)
        f = panel.frame()
        assert f.loc[(f.out == "US") & (f["in"] == "AA"), "y"].item() == 1
        assert f["y"].sum() == 2
        assert (f.loc[f.out == "US", "temporal_distance_us"] == 0).all()
        assert (f["temporal_distance"] >= 0).all() and (f["temporal_distance"] < 24).all()
        dd = f[(f.out == "US") & (f["in"] == "AA")]
        assert dd["dev_to_frontier"].item() == 0 and dd["dev_to_emerging"].item() == 0
        assert f.loc[(f.out == "US") & (f["in"] == "CC"), "dev_to_frontier"].item() == 1
        assert f.loc[(f.out == "AA") & (f["in"] == "BB"), "dev_to_emerging"].item() == 1
        assert f.loc[(f.out == "BB") & (f["in"] == "CC"), "dev_to_frontier"].item() == 0
        # out-vertex covariates repeat over the in-vertices
        assert f.loc[f.out == "BB", "eq_vol"].nunique() == 1
        assert f.loc[f.out == "BB", "eq_vol"].iloc[0] == cov.loc[("2010-06", "BB"), "eq_vol"]
        # AA closes 06:00 UTC, nine hours after the US close of 21:00 UTC the day before
        assert f.loc[(f.out == "AA") & (f["in"] == "US"), "temporal_distance"].item() == 9.0
        assert f.loc[(f.out == "AA"), "temporal_distance_us"].iloc[0] == 9.0

    def test_design_errors(self):
        reg = self._registry()
        cov = market_window_covariates(_covariate_frame(self.markets, "2010-01-01", "2010-12-31"),
                                       _windows(), self.markets)
        net = SpilloverNetwork("x", tuple(self.markets), frozenset())
        with pytest.raises(DataValidationError, match="hub"):
            build_design(net, _windows()[0], cov, reg, hub="JP")
        with pytest.raises(DataValidationError, match="window"):
            build_design(net, Window(dt.date(2011, 1, 1), dt.date(2011, 6, 30)), cov, reg)
        net5 = SpilloverNetwork("x", tuple(self.markets) + ("DD",), frozenset())
        with pytest.raises(DataValidationError, match="DD"):
            build_design(net5, _windows()[0], cov, {**reg, "DD": make_market("DD")})
        with pytest.raises(ValueError):
            build_design(net, _windows()[0], cov, reg, columns=("const", "moon_phase"))

    def test_forty_market_panel_size(self):
        ids = [f"M{i:02d}" for i in range(40)]
        reg = {m: make_market(m, 15 * i, "16:00") for i, m in enumerate(ids)}
        win = _windows()[0]
        cov = pd.DataFrame({c: 0.0 for c in ("eq_return", "eq_vol", "fx_return", "fx_vol", "log_mcap", "log_mc_gdp")},
                           index=pd.MultiIndex.from_product([[win.label], ids], names=["window", "market_id"]))
        panel = build_design(SpilloverNetwork(win.label, tuple(ids), frozenset()), win, cov, reg,
                             columns=("const", "temporal_distance"), hub="M00")
        assert panel.y.shape == (1560,) and panel.X.shape == (1560, 2)

    def test_rank_checks(self):
        rng = np.random.default_rng(0)
        X = np.column_stack([np.ones(20), rng.normal(size=20), np.zeros(20)])
        X = np.column_stack([X, 2 * X[:, 1] + 1])
        assert collinear_columns(X, ["a", "b", "c", "d"]) == ["c", "d"]
        with pytest.raises(RankDeficiencyError, match="'c', 'd'"):
            check_rank(X, ["a", "b", "c", "d"])

    def test_panel_validation(self):
        with pytest.raises(ValueError):
            EdgePanel("x", [0, 2], np.ones((2, 1)), ("const",))
        with pytest.raises(ValueError):
            EdgePanel("x", [0, 1], np.ones((3, 1)), ("const",))


class TestStandardProbit:
    def test_large_sample_recovery(self):
        rng = np.random.default_rng(1)
        x = rng.normal(size=10_000)
        y = (x + rng.normal(size=10_000) > 0).astype(int)
        fit = fit_standard_probit(y, np.column_stack([np.ones_like(x), x]))
        assert fit.converged and not fit.separation
        np.testing.assert_allclose(fit.beta, [0.0, 1.0], atol=0.05)

    def test_intercept_only_closed_form(self):
        n = 500
        y = np.zeros(n, dtype=int)
        y[7] = 1
        fit = fit_standard_probit(y, np.ones((n, 1)))
        assert fit.beta[0] == pytest.approx(norm.ppf(1 / n), abs=1e-6)

    def test_symmetric_design(self):
        x = np.repeat([-1.0, 1.0], 50)
        y = np.tile([0, 1], 50)
        fit = fit_standard_probit(y, np.column_stack([np.ones(100), x]))
        assert abs(fit.beta[0]) < 1e-8

    def test_separation_flagged(self):
        x = np.linspace(-1, 1, 40)
        fit = fit_standard_probit((x > 0).astype(int), np.column_stack([np.ones(40), x]))
        assert fit.separation and not fit.converged

    def test_rank_deficient(self):
        with pytest.raises(RankDeficiencyError):
            fit_standard_probit([0, 1, 0, 1], np.ones((4, 2)))


class TestSarProbit:
    def test_reproducible(self):
        panel, W = simulated_panel(6, (0.0, 1.0, -1.0), 0.3, seed=5)
        cfg = SamplerConfig(draws=300, burn_in=100, seed=9)
        a, b = fit_sar_probit(panel, W, cfg), fit_sar_probit(panel, W, cfg)
        np.testing.assert_array_equal(a.beta_mean, b.beta_mean)
        assert a.rho_mean == b.rho_mean and a.rho_ci == b.rho_ci
        c = fit_sar_probit(panel, W, SamplerConfig(draws=300, burn_in=100, seed=10))
        assert c.rho_mean != a.rho_mean

    def test_summaries(self):
        panel, W = simulated_panel(6, (0.0, 1.0, -1.0), 0.0, seed=6)
        fit = fit_sar_probit(panel, W, SamplerConfig(draws=400, burn_in=100, keep_draws=True))
        assert fit.beta_draws.shape == (300, 3) and fit.rho_draws.shape == (300,)
        assert np.all(np.abs(fit.rho_draws) < 1)
        assert fit.acceptance_rate == 1.0 and fit.draws >= fit.burn_in
        t = fit.table()
        assert list(t.term) == ["const", "x1", "x2", "rho"]
        assert set(fit.coefficients()) == {"const", "x1", "x2", "rho"}

    def test_rho_zero_recovery(self):
        beta = np.array([-0.5, 1.0, -0.7])
        panel, W = simulated_panel(20, beta, 0.0, seed=11)
        fit = fit_sar_probit(panel, W, SamplerConfig(seed=1))
        assert np.all(np.abs(fit.beta_mean - beta) < 3 * fit.beta_sd)
        assert fit.rho_ci[0] < 0 < fit.rho_ci[1]

    def test_fixed_rho_matches_mle(self):
        panel, W = simulated_panel(12, (-0.5, 1.0, -0.7), 0.0, seed=12)
        mle = fit_standard_probit(panel.y, panel.X)
        fit = fit_sar_probit(panel, W, SamplerConfig(seed=2, rho_fixed=0.0))
        assert fit.rho_mean == 0.0
        assert np.all(np.abs(fit.beta_mean - mle.beta) < 2 * mle.se)

    def test_rho_half_single_seed(self):
        panel, W = simulated_panel(20, (0.0, 2.0, -2.0), 0.5, seed=13)
        fit = fit_sar_probit(panel, W, SamplerConfig(seed=3))
        assert abs(fit.rho_mean - 0.5) < 0.3

    def test_label_permutation(self):
        N = 8
        rng = np.random.default_rng(14)
        ids = list(range(N))
        pairs = edge_pairs(ids)
        X = edge_design(N, rng)
        W = build_weights(N)
        y = simulate_sar_probit(X, (0.0, 1.5, -1.5), 0.4, W, rng)
        base = fit_sar_probit(EdgePanel("a", y, X, ("c", "x1", "x2"), pairs), W, SamplerConfig(seed=4))
        perm = rng.permutation(N)
        relabelled = [(int(perm[a]), int(perm[b])) for a, b in pairs]
        # rows re-sorted into the canonical order of the new labels
        idx = [relabelled.index(p) for p in edge_pairs(ids)]
        moved = fit_sar_probit(EdgePanel("b", y[idx], X[idx], ("c", "x1", "x2"), edge_pairs(ids)), W,
                               SamplerConfig(seed=4))
        assert np.all(np.abs(moved.beta_mean - base.beta_mean) < 0.3 * base.beta_sd)
        assert abs(moved.rho_mean - base.rho_mean) < 0.3 * base.rho_sd

    def test_errors(self):
        panel, W = simulated_panel(5, (0.0, 1.0, -1.0), 0.0, seed=1)
        with pytest.raises(ValueError):
            fit_sar_probit(panel, build_weights(6))
        bad = EdgePanel("x", panel.y, np.column_stack([panel.X, panel.X[:, 1]]), ("const", "x1", "x2", "x3"))
        with pytest.raises(RankDeficiencyError, match="x3"):
            fit_sar_probit(bad, W)
        with pytest.raises(ValueError):
            SamplerConfig(draws=100, burn_in=100)
        with pytest.raises(ValueError):
            SamplerConfig(rho_fixed=1.0)


def _stub(coefs):
    return SimpleNamespace(coefficients=lambda: coefs)


class TestSummary:
    def test_single_positive_window(self):
        t = summarize_coefficients([_stub({k: (0.5, True) for k, *_ in TABLE_ROWS})])
        assert list(t.term) == [k for k, *_ in TABLE_ROWS]
        assert (t.n_positive == 1).all() and (t.n_negative == 0).all()
        assert (t.n_positive_significant == 1).all()

    def test_sign_counts(self):
        t = summarize_coefficients([_stub({"rho": (1.0, True)}), _stub({"rho": (-1.0, False)})]).set_index("term")
        row = t.loc["rho"]
        assert row["mean"] == 0.0 and (row.n_positive, row.n_negative) == (1, 1)
        assert (row.n_positive_significant, row.n_negative_significant) == (1, 0)
        assert math.isnan(t.loc["eq_vol", "mean"]) and t.loc["eq_vol", "n_positive"] == 0

    def test_layout(self):
        t = summarize_coefficients([_stub({})])
        assert list(t.columns) == ["panel", "term", "label", "mean", "n_positive", "n_positive_significant",
                                   "n_negative", "n_negative_significant"]
        assert list(t.panel) == ["A"] * 3 + ["B"] * 8
        assert t.label.iloc[0] == "Spatial coefficient"
        with pytest.raises(ValueError):
            summarize_coefficients([])
