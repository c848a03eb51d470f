import json
import math

import numpy as np
import pytest

from cen_meta.analytic import mean_in_requests, stp_file
from cen_meta.model import Fixed, config_hash
from cen_meta.montecarlo import (
    MonteCarloConfig,
    TopologyRealization,
    _far_field,
    cstp_of_topology,
    empirical_summaries,
    exact_cstp,
    run_campaign,
    run_campaign_grid,
    sample_topology,
    topology_stream,
    write_samples_csv,
    write_sidecar_json,
)

from conftest import db

# ---- configuration -----------------------------------------------------------


@pytest.mark.parametrize("kw", [
    {"n_topologies": 0}, {"n_fading": 0}, {"threads": 0}, {"seed": -1},
    {"served_model": "nearest"},
])
def test_mc_config_validation(kw):
    with pytest.raises(ValueError):
        MonteCarloConfig(**kw)


def test_window_defaults(flex_cfg, fixed_cfg):
    lam_c = flex_cfg.lambda_bs / flex_cfg.xi
    region, guard = MonteCarloConfig().window(flex_cfg)
    mean_z = 0.5 / math.sqrt(lam_c)
    assert region == pytest.approx(max(10 / math.sqrt(math.pi * lam_c), 20 * 0.8 * mean_z))
    assert guard == pytest.approx(region / 2)
    region, _ = MonteCarloConfig().window(fixed_cfg)
    assert region == pytest.approx(max(10 / math.sqrt(math.pi * lam_c), 20 * fixed_cfg.scheme.r_c))
    with pytest.raises(ValueError):
        MonteCarloConfig(region_radius=400.0, guard_radius=250.0).window(flex_cfg)
    with pytest.raises(ValueError):
        MonteCarloConfig(region_radius=900.0, guard_radius=950.0).window(flex_cfg)


# ---- topology invariants -----------------------------------------------------


def _topologies(cfg, n, seed=11, **kw):
    mc = MonteCarloConfig(seed=seed, **kw)
    return [sample_topology(cfg, mc, topology_stream(seed, i)) for i in range(n)]


@pytest.mark.parametrize("which", ["fixed", "flex"])
def test_topology_invariants(fixed_cfg, flex_cfg, which):
    cfg = fixed_cfg if which == "fixed" else flex_cfg
    for t in _topologies(cfg, 12):
        d = np.hypot(t.bs_points[:, 0], t.bs_points[:, 1])
        holders = np.flatnonzero((t.caches == t.typical_request).any(axis=1))
        assert t.serving_bs in holders
        assert d[t.serving_bs] == pytest.approx(d[holders].min())
        assert t.serving_distance <= t.guard_radius
        assert 0 <= t.theta <= cfg.L
        assert t.theta == min(t.theta_r[t.serving_bs], cfg.L)
        assert t.served_user_per_bs[t.serving_bs] == -2
        r_in = cfg.scheme.r_c if which == "fixed" else cfg.scheme.mu * t.serving_distance
        assert np.all(t.interferer_radii[t.nulled] <= r_in + 1e-9)
        assert len(t.interferer_radii) == len(t.bs_points) - 1
        # every cache holds C distinct files out of the N_c most popular
        assert t.caches.shape[1] == cfg.C
        assert np.all(t.caches < cfg.cache.n_c)
        assert all(len(set(row)) == cfg.C for row in t.caches)


def test_no_nulling_without_range_or_dof(flex_cfg):
    for t in _topologies(flex_cfg.with_r_i(0.0), 5):
        assert not t.nulled.any() and t.theta == 0
    for t in _topologies(flex_cfg.replace(L=0), 5):
        assert not t.nulled.any() and t.theta == 0


def test_most_popular_caching_gives_identical_caches(flex_cfg):
    for t in _topologies(flex_cfg.replace(xi=1.0), 3):
        s = np.sort(t.caches, axis=1)
        assert np.all(s == s[0]) and np.all(s[0] == np.arange(flex_cfg.C))


# ---- per-topology CSTP -------------------------------------------------------


def _toy(theta=0, radii=(60.0,), z=30.0, region=1000.0):
    radii = np.asarray(radii, dtype=float)
    n = len(radii)
    return TopologyRealization(
        bs_points=np.zeros((n + 1, 2)), caches=np.zeros((n + 1, 1), dtype=int),
        served_user_per_bs=np.zeros(n + 1, dtype=int), typical_request=0, serving_bs=0,
        serving_distance=z, theta=theta, interferer_radii=radii,
        nulled=np.zeros(n, dtype=bool), theta_r=np.zeros(n + 1, dtype=int),
        region_radius=region, guard_radius=region / 2)


def test_cstp_tau_zero(flex_cfg):
    t = _toy()
    assert cstp_of_topology(t, 0.0, flex_cfg, 100, np.random.default_rng(0)) == 1.0
    assert exact_cstp(t, 0.0, flex_cfg) == pytest.approx(1.0, abs=1e-14)


def test_exact_cstp_single_interferer_closed_form(flex_cfg):
    # K = 1: P[g >= s (h u + far)] = exp(-s far) / (1 + s u)
    cfg = flex_cfg.replace(M=1, L=0)
    t = _toy(radii=(60.0,), z=30.0)
    tau = 2.0
    s = tau * 30.0 ** 4
    far = _far_field(cfg, t.region_radius)
    ref = math.exp(-s * far) / (1 + s * 60.0 ** -4)
    assert exact_cstp(t, tau, cfg) == pytest.approx(ref, rel=1e-12)


def test_exact_cstp_gamma_closed_form(flex_cfg):
    # K = 2, one interferer, negligible far field:
    # P[g >= s h u] = E[(1 + s h u) e^{-s h u}] = 1/(1+a) + a/(1+a)^2 with a = s u
    t = _toy(theta=flex_cfg.M - 2, radii=(50.0,), z=35.0, region=1e9)
    tau = 1.5
    a = tau * (35.0 / 50.0) ** 4
    ref = 1 / (1 + a) + a / (1 + a) ** 2
    assert exact_cstp(t, tau, flex_cfg) == pytest.approx(ref, rel=1e-9)


def test_fading_estimate_matches_exact(flex_cfg):
    t = _topologies(flex_cfg, 1, seed=3)[0]
    taus = db(np.array([-5.0, 5.0, 15.0]))
    n = 200_000
    est = cstp_of_topology(t, taus, flex_cfg, n, np.random.default_rng(1))
    ex = exact_cstp(t, taus, flex_cfg)
    se = np.sqrt(ex * (1 - ex) / n) + 1e-12
    assert np.all(np.abs(est - ex) <= 5 * se)


def test_cstp_nonincreasing_in_tau(flex_cfg):
    t = _topologies(flex_cfg, 1, seed=4)[0]
    taus = db(np.linspace(-10, 20, 13))
    assert np.all(np.diff(cstp_of_topology(t, taus, flex_cfg, 500, np.random.default_rng(2))) <= 0)
    assert np.all(np.diff(exact_cstp(t, taus, flex_cfg)) <= 1e-15)


# ---- campaigns, determinism, output ---------------------------------------------


def test_campaign_determinism_and_threads(flex_cfg, tmp_path):
    taus = db(np.array([0.0, 5.0]))
    a = run_campaign_grid(flex_cfg, MonteCarloConfig(n_topologies=12, n_fading=50, seed=9), taus)
    b = run_campaign_grid(flex_cfg, MonteCarloConfig(n_topologies=12, n_fading=50, seed=9,
                                                     threads=3), taus)
    assert np.array_equal(a.samples, b.samples)
    assert np.array_equal(a.thetas, b.thetas)
    write_samples_csv(a.sample_set(1), tmp_path / "a.csv")
    write_samples_csv(b.sample_set(1), tmp_path / "b.csv")
    assert (tmp_path / "a.csv").read_bytes() == (tmp_path / "b.csv").read_bytes()
    c = run_campaign_grid(flex_cfg, MonteCarloConfig(n_topologies=12, n_fading=50, seed=10), taus)
    assert not np.array_equal(a.samples, c.samples)


def test_run_campaign_single_threshold(flex_cfg):
    mc = MonteCarloConfig(n_topologies=4, n_fading=40, seed=2)
    s = run_campaign(flex_cfg, mc, float(db(5)))
    g = run_campaign_grid(flex_cfg, mc, [float(db(5))])
    assert np.array_equal(s.samples, g.samples[:, 0])
    assert s.cfg_hash == config_hash(flex_cfg) and s.seed == 2
    with pytest.raises(ValueError):
        run_campaign_grid(flex_cfg, mc, [1.0], estimator="median")


def test_csv_and_sidecar_format(flex_cfg, tmp_path):
    s = run_campaign(flex_cfg, MonteCarloConfig(n_topologies=3, n_fading=7, seed=1), 1.0)
    write_samples_csv(s, tmp_path / "s.csv")
    raw = (tmp_path / "s.csv").read_bytes()
    lines = raw.split(b"\r\n")
    assert lines[0] == b"topology_index,cstp" and lines[-1] == b""
    assert [ln.split(b",")[0] for ln in lines[1:-1]] == [b"0", b"1", b"2"]
    vals = [float(ln.split(b",")[1]) for ln in lines[1:-1]]
    assert np.allclose(vals, s.samples, rtol=1e-8)
    write_sidecar_json(s, flex_cfg, tmp_path / "s.json", {"note": 1})
    doc = json.loads((tmp_path / "s.json").read_text())
    assert doc["seed"] == 1 and doc["config_hash"] == config_hash(flex_cfg)
    assert doc["config"]["M"] == flex_cfg.M and "resamples" in doc and doc["note"] == 1


# ---- empirical summaries -------------------------------------------------------


def test_empirical_summaries_examples():
    e = empirical_summaries(np.ones(10), np.array([0.0, 0.5, 0.999]))
    assert e.stp == 1.0 and e.variance == 0.0 and np.all(e.ccdf == 1.0)
    e = empirical_summaries(np.array([0.0, 1.0]), np.array([0.5]))
    assert e.stp == 0.5 and e.ccdf[0] == 0.5
    e = empirical_summaries(np.array([0.2, 0.5, 0.5, 0.9]), np.array([0.2, 0.5, 0.95]))
    assert e.variance == pytest.approx(np.var([0.2, 0.5, 0.5, 0.9], ddof=1))
    assert e.ccdf.tolist() == [0.75, 0.25, 0.0]


def test_empirical_ccdf_integrates_to_mean():
    rng = np.random.default_rng(0)
    s = rng.beta(2.0, 1.2, size=2000)
    e = empirical_summaries(s, np.linspace(0, 1, 20001))
    area = float(np.sum(0.5 * (e.ccdf[1:] + e.ccdf[:-1]) * np.diff(e.x)))
    assert abs(area - e.stp) <= 1e-3


# ---- load and reliability against the analysis --------------------------------


@pytest.mark.slow
@pytest.mark.parametrize("which", ["fixed", "flex"])
def test_independent_served_users_reproduce_mean_requests(fixed_cfg, flex_cfg, which):
    cfg = fixed_cfg if which == "fixed" else flex_cfg
    r = run_campaign_grid(cfg, MonteCarloConfig(n_topologies=150, n_fading=1, seed=21,
                                                served_model="independent"),
                          [1.0], estimator="exact")
    assert r.mean_interior_requests == pytest.approx(mean_in_requests(cfg), rel=0.05)


@pytest.mark.slow
def test_small_campaign_stp_near_analysis(flex_cfg):
    t = float(db(0))
    r = run_campaign_grid(flex_cfg, MonteCarloConfig(n_topologies=200, n_fading=200, seed=4),
                          [t], estimator="exact")
    s = r.samples[:, 0]
    ci = 3 * s.std(ddof=1) / math.sqrt(len(s))
    assert abs(s.mean() - stp_file(t, flex_cfg)) <= 0.03 + ci


@pytest.mark.slow
def test_edge_effects_small(flex_cfg):
    # doubling the window moves the STP by less than the Monte Carlo CI
    t = float(db(5))
    base = MonteCarloConfig().window(flex_cfg)[0]
    mc1 = MonteCarloConfig(n_topologies=80, seed=8)
    mc2 = MonteCarloConfig(n_topologies=80, seed=8, region_radius=2 * base, guard_radius=base)
    a = run_campaign_grid(flex_cfg, mc1, [t], estimator="exact").samples[:, 0]
    b = run_campaign_grid(flex_cfg, mc2, [t], estimator="exact").samples[:, 0]
    ci = 1.96 * math.sqrt(a.var(ddof=1) / a.size + b.var(ddof=1) / b.size)
    assert abs(a.mean() - b.mean()) <= ci


def test_fixed_scheme_window_uses_range(fixed_cfg):
    assert isinstance(fixed_cfg.scheme, Fixed)
    region, guard = MonteCarloConfig().window(fixed_cfg.with_r_i(100.0))
    assert region == pytest.approx(2000.0) and guard == pytest.approx(1000.0)


@pytest.mark.slow
def test_independent_served_users_reproduce_theta_pmf(flex_cfg):
    from cen_meta.analytic import load_stats
    r = run_campaign_grid(flex_cfg, MonteCarloConfig(n_topologies=1000, n_fading=1, seed=5,
                                                     served_model="independent"),
                          [1.0], estimator="exact")
    tv = 0.5 * np.abs(r.theta_histogram(flex_cfg.L) - load_stats(flex_cfg).theta_i_pmf).sum()
    assert tv <= 0.02
