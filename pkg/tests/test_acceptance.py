"""End-to-end acceptance checks, one test per criterion.

Each test records what it measured; the terminal summary prints one
PASS/FAIL line per criterion. The coverage benchmarks (1-3) train the full
default booster on 50 x 4000 panels and take several minutes.
"""

import time

import numpy as np
import pytest
from scipy import stats

from poolbench.cluster import fit_pca, kmeans, lloyd
from poolbench.dgp import (
    ArGarch,
    ArHeavyTail,
    Sarima,
    SimConfig,
    heterogeneous_demand_panel,
    reference_specs,
    simulate_ar_garch,
    simulate_ar_t,
    simulate_panel,
    simulate_sarima,
)
from poolbench.homogeneity import pearson_profile_correlation, slope_homogeneity
from poolbench.harness import run_cluster, run_global, run_station
from poolbench.metrics import mse_median, picp, pinaw
from poolbench.panel import PanelSeries
from poolbench.qboost import FeatureSchema, TrainParams, best_split, train

from test_cli import _pipeline, _tree_bytes
from test_cluster import _all_labelings_J
from test_metrics import T, _fixture
from test_qboost import _brute_force_gain, _hist

pytestmark = pytest.mark.slow

N_STATIONS, HOURS, SEED = 50, 4000, 0


def _measured(record_property, text):
    record_property("measured", text)


@pytest.fixture(scope="module")
def homogeneous_runs():
    """Global and station PICP for every reference DGP on a 50 x 4000 panel."""
    out = {}
    for name, spec in reference_specs().items():
        panel = simulate_panel(spec, [(f"s{i:02d}", 1.0) for i in range(N_STATIONS)], HOURS, seed=SEED)
        t0 = time.perf_counter()
        g = run_global(panel, TrainParams(), dgp=name).reports[0].picp
        seconds = time.perf_counter() - t0
        s = run_station(panel, TrainParams(), dgp=name).summary().loc["mean", "picp"]
        out[name] = {"global": g, "station": s, "seconds": seconds}
    return out


@pytest.mark.criterion(1, "global PICP in [0.92, 0.97] on every homogeneous DGP, < 10 min each")
def test_criterion_01_global_calibration(homogeneous_runs, record_property):
    _measured(record_property, ", ".join(f"{k} {v['global']:.4f} ({v['seconds']:.0f}s)" for k, v in homogeneous_runs.items()))
    for name, v in homogeneous_runs.items():
        assert 0.92 <= v["global"] <= 0.97, name
        assert v["seconds"] < 600, name


@pytest.mark.criterion(2, "station mean PICP < global PICP - 0.05 on homogeneous data")
def test_criterion_02_station_undercoverage(homogeneous_runs, record_property):
    _measured(record_property, ", ".join(f"{k} gap {v['global'] - v['station']:.4f}" for k, v in homogeneous_runs.items()))
    for name, v in homogeneous_runs.items():
        assert v["station"] < v["global"] - 0.05, name


@pytest.mark.criterion(3, "heterogeneous panel: station PICP rises and the global-station gap < 0.05")
def test_criterion_03_heterogeneous_flip(homogeneous_runs, record_property):
    panel = heterogeneous_demand_panel(N_STATIONS, HOURS, seed=SEED)
    g = run_global(panel, TrainParams()).reports[0].picp
    s = run_station(panel, TrainParams()).summary().loc["mean", "picp"]
    homog = max(v["station"] for v in homogeneous_runs.values())
    _measured(record_property, f"global {g:.4f}, station {s:.4f} vs homogeneous max {homog:.4f}, gap {g - s:.4f}")
    assert s > homog
    assert g - s < 0.05


def _trend_panels(n_rep, N, T_, slope_sd, seed):
    rng = np.random.default_rng(seed)
    t = np.arange(1, T_ + 1)
    for _ in range(n_rep):
        slopes = 0.01 + slope_sd * rng.normal(size=(N, 1))
        yield rng.normal(0, 2, size=(N, 1)) + slopes * t + rng.normal(size=(N, T_))


@pytest.mark.criterion(4, "slope-homogeneity size 5% +- 2 (N=200, T=500, 500 runs); power >= 99%")
def test_criterion_04_pesaran(record_property):
    size = np.mean([slope_homogeneity(Y).reject_at_5pct for Y in _trend_panels(500, 200, 500, 0.0, 11)])
    power = np.mean([slope_homogeneity(Y).reject_at_5pct for Y in _trend_panels(500, 200, 500, 0.002, 12)])
    _measured(record_property, f"size {size:.3f}, power {power:.3f}")
    assert 0.03 <= size <= 0.07
    assert power >= 0.99


@pytest.mark.criterion(5, "profile correlation of a noisy copy (noise sd 0.5 x signal sd) > 0.6")
def test_criterion_05_pearson(record_property):
    first = simulate_panel(reference_specs()["sarima"], [(f"s{i}", 1.0) for i in range(20)], 8760, seed=SEED)
    rng = np.random.default_rng(1)
    sd = first.values.std(axis=1, keepdims=True)
    second = first.values + 0.5 * sd * rng.normal(size=first.values.shape)
    panel = PanelSeries(first.stations, first.start, np.hstack([first.values, second]))
    res = pearson_profile_correlation(panel, "2024-01-01")
    _measured(record_property, f"r {res.r:.4f} over {res.n_keys} keys")
    assert res.r > 0.6


@pytest.mark.criterion(6, "qboost: split oracle, monotone loss over 500 rounds, root quantile within 0.02")
def test_criterion_06_qboost(record_property):
    rng = np.random.default_rng(6)
    worst = 0.0
    for _ in range(300):
        n = int(rng.integers(2, 33))
        X = np.column_stack([np.round(rng.normal(size=n), 1), rng.integers(0, 4, n), rng.integers(0, 7, n)]).astype(float)
        cards = (0, 4, 7)
        g, h = rng.normal(size=n), np.ones(n)
        lam, min_leaf = float(rng.choice([0.0, 1.0])), int(rng.integers(1, 4))
        hist, mapper, *_ = _hist(X, g, h, cards=cards)
        s = best_split(hist, mapper.nbins, mapper.cards, lam, 0.0, min_leaf)
        oracle = _brute_force_gain(X, g, h, cards, lam, 0.0, min_leaf)
        if oracle <= 1e-12 * (h.sum() + 1):
            assert s is None
        else:
            worst = max(worst, abs(s.gain - oracle))
    assert worst <= 1e-9

    max_rise = -np.inf
    for seed in range(2):
        r = np.random.default_rng(100 + seed)
        X = np.column_stack([r.normal(size=1000), r.integers(0, 5, 1000)])
        y = np.sin(X[:, 0]) + 0.3 * X[:, 1] + r.standard_t(3, 1000)
        for tau in (0.025, 0.5, 0.975):
            f = train(X, y, TrainParams(quantile=tau, num_leaves=16, min_samples_leaf=10), FeatureSchema((0, 5)))
            max_rise = max(max_rise, float(np.max(np.diff(f.train_loss))))
    assert max_rise <= 1e-9

    fracs = {}
    for tau in (0.025, 0.5, 0.975):
        r = np.random.default_rng(7)
        X, y = r.normal(size=(10_000, 2)), r.normal(size=10_000)
        f = train(X, y, TrainParams(quantile=tau, n_rounds=100))
        fracs[tau] = float(np.mean(y < f.predict(X)))
    _measured(record_property, f"max split gap {worst:.1e}, max loss rise {max_rise:.1e}, root fractions {fracs}")
    assert all(abs(v - k) <= 0.02 for k, v in fracs.items())


@pytest.mark.criterion(7, "K-means J equals brute force on 12-point fixtures; Lloyd J monotone")
def test_criterion_07_kmeans(record_property):
    gaps = []
    for seed in range(6):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(12, 2)) + np.repeat(rng.normal(0, 1.5, size=(3, 2)), 4, axis=0)
        for k in (2, 3):
            gaps.append(abs(kmeans(X, k, seed=seed).J - _all_labelings_J(X, k)))
    rises = []
    rng = np.random.default_rng(70)
    for _ in range(200):
        X = rng.normal(size=(60, 3))
        k = int(rng.integers(2, 8))
        run = lloyd(X, X[rng.choice(60, k, replace=False)])
        rises.append(float(np.max(np.diff(run.history), initial=-np.inf)))
    _measured(record_property, f"max |J - J*| {max(gaps):.1e}, max Lloyd rise {max(rises):.1e}")
    assert max(gaps) <= 1e-9
    assert max(rises) <= 1e-9


@pytest.mark.criterion(8, "PCA orthonormality, reconstruction and 0.9 threshold straddle")
def test_criterion_08_pca(record_property):
    rng = np.random.default_rng(8)
    worst_orth = worst_rec = 0.0
    for _ in range(100):
        n, p = int(rng.integers(3, 40)), int(rng.integers(2, 12))
        z = rng.normal(size=(n, p)) @ rng.normal(size=(p, p))
        b = fit_pca(z, 0.9)
        V = b.components
        worst_orth = max(worst_orth, float(np.abs(V @ V.T - np.eye(p)).max()))
        zc = z - z.mean(0)
        worst_rec = max(worst_rec, float(np.abs(b.inverse_transform(b.transform(zc, p)) - zc).max()))
        cum = np.cumsum(b.explained_variance_ratio)
        assert cum[b.n_components - 1] >= 0.9 - 1e-12
        assert b.n_components == 1 or cum[b.n_components - 2] < 0.9
    _measured(record_property, f"orthonormality {worst_orth:.1e}, reconstruction {worst_rec:.1e}")
    assert worst_orth <= 1e-8 and worst_rec <= 1e-8


@pytest.mark.criterion(9, "metric examples exact; affine invariance on 100 fixtures")
def test_criterion_09_metrics(record_property):
    assert picp(T([0, 0], [1, 1], [2, 2], [1, 2])) == 1.0
    assert picp(T([1, 1, 1], [5, 5, 5], [9, 9, 9], [0, 5, 10])) == 1 / 3
    y = np.linspace(0, 10, 6)
    assert pinaw(T(y - 0.5, y, y + 0.5, y)) == pytest.approx(0.1, abs=1e-15)
    assert pinaw(T(y, y, y, y)) == 0.0
    assert pinaw(T([0, 1, 3], [1, 1, 2], [2, 1, 2], [0, 1, 3])) == pytest.approx(1 / 9, abs=1e-15)
    assert mse_median(T([0, 0], [3, 4], [9, 9], [3, 4])) == 0.0
    assert mse_median(T([0, 0], [1, 1], [2, 2], [0, 0])) == 1.0
    assert mse_median(T([0] * 3, [1, 1, 1], [5] * 3, [1, 2, 3])) == 5 / 3
    worst = 0.0
    for seed in range(100):
        t = _fixture(seed)
        r = np.random.default_rng(1000 + seed)
        a, b = float(r.uniform(0.1, 10)), float(r.normal(0, 100))
        s = T(a * t.lower + b, a * t.median + b, a * t.upper + b, a * t.y + b)
        assert picp(s) == picp(t)
        worst = max(worst, abs(pinaw(s) / pinaw(t) - 1))
    _measured(record_property, f"max relative PINAW drift {worst:.1e}")
    assert worst <= 1e-9


@pytest.mark.criterion(10, "cluster(k=1) == global and cluster(k=n) == station on a 10-station panel")
def test_criterion_10_degeneracy(record_property):
    panel = simulate_panel(reference_specs()["sarima"], [(f"s{i}", 1.0) for i in range(10)], 2000, seed=SEED)
    cols = ["picp", "pinaw", "mse_median", "crossing_rate", "n"]
    params = TrainParams()
    g, c1 = run_global(panel, params), run_cluster(panel, params, {s: 0 for s in panel.stations})
    st, cn = run_station(panel, params), run_cluster(panel, params, {s: i for i, s in enumerate(panel.stations)})
    d1 = np.abs(g.frame()[cols].to_numpy(float) - c1.frame()[cols].to_numpy(float)).max()
    dn = np.abs(st.frame()[cols].to_numpy(float) - cn.frame()[cols].to_numpy(float)).max()
    _measured(record_property, f"max diff k=1 {d1:.1e}, k=n {dn:.1e}")
    assert d1 <= 1e-9 and dn <= 1e-9


@pytest.mark.criterion(11, "every CLI stage is byte-identical across two seeded runs")
def test_criterion_11_cli_determinism(tmp_path, record_property):
    a, b = _pipeline(tmp_path / "a"), _pipeline(tmp_path / "b")
    ta, tb = _tree_bytes(a), _tree_bytes(b)
    # config.echo holds each run's own output path
    differing = sorted(k for k in set(ta) | set(tb) if ta.get(k) != tb.get(k) and k != "report/config.echo")
    _measured(record_property, f"{len(ta)} files compared, {len(differing)} differ")
    assert differing == []


@pytest.mark.criterion(12, "AR(1) variance, GARCH variance and t(5) excess kurtosis match closed forms")
def test_criterion_12_dgp_moments(record_property):
    ar = simulate_sarima(Sarima(mu=0.0, phi=[0.5], sigma2=1.0), SimConfig(n_steps=200_000, seed=SEED)).var()
    garch = simulate_ar_garch(ArGarch(mu=0.0, phi=[], omega=0.1, alpha=[0.2], beta=[0.7]), SimConfig(n_steps=1_000_000, seed=SEED)).var()
    z = simulate_ar_t(ArHeavyTail(mu=0.0, lags=(1,), phi=[0.0], sigma=1.0, nu=5.0), SimConfig(n_steps=10_000_000, seed=SEED))
    kurt = float(stats.kurtosis(z))
    _measured(record_property, f"AR(1) var {ar:.4f} (4/3), GARCH var {garch:.4f} (1), t(5) excess kurtosis {kurt:.3f} (6)")
    assert ar == pytest.approx(4 / 3, rel=0.05)
    assert garch == pytest.approx(1.0, rel=0.10)
    assert kurt == pytest.approx(6.0, rel=0.20)
