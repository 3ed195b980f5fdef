import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import integrate, stats

from lpkinetic.kernels import symbol_constant
from lpkinetic.stable_sim import (StableConfig, sample_1d_stable, sample_compensated_small_jumps,
                                  sample_isotropic_stable, sample_large_jumps, sample_positive_stable,
                                  simulate_path, sphere_area, stream_rng)


def ecf(x, xi):
    return np.mean(np.cos(np.outer(xi, x)), axis=1)


def test_sphere_area_low_dimensions():
    assert sphere_area(1) == pytest.approx(2.0)
    assert sphere_area(2) == pytest.approx(2 * np.pi)
    assert sphere_area(3) == pytest.approx(4 * np.pi)


def test_stream_rng_is_deterministic_and_separates_streams():
    a = stream_rng(3, "paths").random(5)
    b = stream_rng(3, "paths").random(5)
    c = stream_rng(3, "other").random(5)
    d = stream_rng(3, "paths", 1).random(5)
    assert np.array_equal(a, b)
    assert not np.allclose(a, c)
    assert not np.allclose(a, d)


@pytest.mark.parametrize("kw", [dict(alpha=0.0), dict(alpha=2.5), dict(alpha=1.5, d=0),
                                dict(alpha=1.5, r0=0.0), dict(alpha=1.5, kappa0=-1.0),
                                dict(alpha=1.5, scale=-1.0)])
def test_config_rejects_bad_values(kw):
    with pytest.raises(ValueError):
        StableConfig(**kw)


def test_default_normalization_is_unit_scale():
    cfg = StableConfig(1.3)
    assert cfg.scale == pytest.approx(1.0)
    assert cfg.kappa0 * symbol_constant(1.3, 1) == pytest.approx(1.0)
    half = StableConfig(1.3, kappa0=0.5)
    assert half.mass == pytest.approx(1.0)
    assert StableConfig(1.3, scale=half.scale).kappa0 == pytest.approx(0.5)


@pytest.mark.parametrize("alpha", [1.2, 1.7])
def test_rate_and_variance_match_quadrature(alpha):
    cfg = StableConfig(alpha, kappa0=0.8)
    dens = lambda r: 2 * cfg.mass * r ** (-1 - alpha)
    assert cfg.rate(0.3, 0.9) == pytest.approx(integrate.quad(dens, 0.3, 0.9)[0], rel=1e-10)
    assert cfg.rate(1.0) == pytest.approx(integrate.quad(dens, 1.0, np.inf)[0], rel=1e-8)
    var = integrate.quad(lambda r: r * r * dens(r), 0.0, 1.0)[0]
    assert cfg.small_jump_variance() == pytest.approx(var, rel=1e-8)


def test_eps_from_share_target_or_rate_cap():
    loose = StableConfig(1.3, max_rate=1e12)
    assert loose.eps == pytest.approx(0.01 ** (1 / 0.7))
    assert loose.replacement_share == pytest.approx(0.01)
    capped = StableConfig(1.8, max_rate=1e3)
    assert capped.rate(capped.eps, capped.r0) == pytest.approx(1e3, rel=1e-10)
    assert capped.replacement_share > 0.01
    with pytest.raises(ValueError):
        StableConfig(0.8).eps


@pytest.mark.parametrize("alpha", [0.7, 1.5, 2.0])
def test_1d_sampler_cf(alpha):
    x = sample_1d_stable(alpha, 40000, stream_rng(1, "cf"))
    xi = np.array([0.25, 0.5, 1.0, 2.0])
    target = np.exp(-xi ** alpha)
    assert np.max(np.abs(ecf(x, xi) - target)) < 0.02


def test_positive_stable_laplace_transform():
    a = 0.6
    s = sample_positive_stable(a, 40000, stream_rng(2, "pos"))
    assert np.all(s > 0)
    lam = np.array([0.3, 1.0, 2.5])
    emp = np.array([np.mean(np.exp(-l * s)) for l in lam])
    assert np.max(np.abs(emp - np.exp(-lam ** a))) < 0.01


@pytest.mark.parametrize("alpha", [1.1, 1.6])
def test_subordinated_sampler_matches_direct_sampler(alpha):
    cfg = StableConfig(alpha)
    x = sample_isotropic_stable(cfg, 1.0, 20000, stream_rng(3, "sub"))[:, 0]
    y = sample_1d_stable(alpha, 20000, stream_rng(3, "direct"))
    assert stats.ks_2samp(x, y).pvalue > 0.01


def test_isotropic_sampler_scales_with_time():
    cfg = StableConfig(1.5)
    x = sample_isotropic_stable(cfg, 0.125, 30000, stream_rng(4, "t"))[:, 0]
    xi = np.array([0.5, 1.0, 2.0])
    assert np.max(np.abs(ecf(x, xi) - np.exp(-0.125 * xi ** 1.5))) < 0.02


def test_isotropic_sampler_2d_is_rotation_invariant():
    cfg = StableConfig(1.4, d=2)
    x = sample_isotropic_stable(cfg, 1.0, 30000, stream_rng(5, "iso"))
    th = 0.7
    rot = x @ np.array([[np.cos(th), -np.sin(th)], [np.sin(th), np.cos(th)]])
    assert stats.ks_2samp(x[:, 0], rot[:, 0]).pvalue > 0.01
    xi = np.array([0.5, 1.0])
    assert np.max(np.abs(ecf(x[:, 1], xi) - np.exp(-xi ** 1.4))) < 0.02


def test_compensated_small_jumps_moments():
    cfg = StableConfig(1.5, max_rate=2e3)
    w = sample_compensated_small_jumps(cfg, 0.5, stream_rng(6, "small"), n=20000)[:, 0]
    var = cfg.small_jump_variance() * 0.5
    assert abs(np.mean(w)) < 4 * np.sqrt(var / 20000)
    assert np.var(w) == pytest.approx(var, rel=0.05)


def test_large_jumps_record():
    cfg = StableConfig(1.5)
    times, sizes = sample_large_jumps(cfg, 2000.0, stream_rng(7, "big"))
    assert np.all(np.diff(times) >= 0) and np.all((times > 0) & (times <= 2000))
    assert np.all(np.abs(sizes) >= cfg.r0)
    mean = cfg.rate(cfg.r0) * 2000
    assert abs(len(times) - mean) < 4 * np.sqrt(mean)


def test_path_endpoint_has_stable_law():
    cfg = StableConfig(1.5, max_rate=500)
    ends = np.array([simulate_path(StableConfig(1.5, seed=s, max_rate=500), 1.0, 8).values()[-1, 0]
                     for s in range(3000)])
    xi = np.array([0.5, 1.0, 2.0])
    assert np.max(np.abs(ecf(ends, xi) - np.exp(-xi ** cfg.alpha))) < 0.04


def test_brownian_path_variance():
    cfg = StableConfig(2.0)
    ends = np.array([simulate_path(StableConfig(2.0, seed=s), 1.0, 4).values()[-1, 0] for s in range(4000)])
    assert np.var(ends) == pytest.approx(2 * cfg.kappa0, rel=0.08)


def test_path_coarsen_keeps_grid_values():
    p = simulate_path(StableConfig(1.5, seed=2), 1.0, 64, stream="c")
    q = p.coarsen(8)
    assert np.allclose(q.values(), p.values()[::8], atol=1e-12)
    with pytest.raises(ValueError):
        p.coarsen(5)


def test_paths_share_jump_record_across_resolutions():
    cfg = StableConfig(1.5, seed=4)
    a = simulate_path(cfg, 1.0, 16, stream="s")
    b = simulate_path(cfg, 1.0, 256, stream="s")
    assert np.array_equal(a.jump_times, b.jump_times)


def test_path_is_cadlag_at_grid_nodes():
    p = simulate_path(StableConfig(1.5, seed=1), 1.0, 32)
    assert np.allclose(p(p.grid), p.values(), atol=1e-12)


def test_path_integral_matches_fine_riemann_sum():
    p = simulate_path(StableConfig(1.5, seed=9), 1.0, 32)
    t = np.linspace(0.0, 1.0, 2 ** 16 + 1)
    vals = p(t)[:, 0]
    riem = np.concatenate([[0.0], np.cumsum(vals[:-1] * np.diff(t))])
    assert np.max(np.abs(p.integral(t)[:, 0] - riem)) < 1e-3


def test_alpha_below_one_has_no_jump_record():
    p = simulate_path(StableConfig(0.8, seed=1), 1.0, 16)
    assert len(p.jump_times) == 0


def test_path_csv_roundtrip(tmp_path):
    p = simulate_path(StableConfig(1.5, seed=1), 1.0, 16)
    f = tmp_path / "path.csv"
    p.to_csv(f)
    data = np.loadtxt(f, delimiter=",", comments="#", skiprows=2)
    assert np.array_equal(data[:, 1], p.values()[:, 0])


@settings(max_examples=20, deadline=None)
@given(seed=st.integers(0, 10 ** 6), k=st.sampled_from([2, 4, 8]))
def test_coarsening_preserves_endpoint(seed, k):
    p = simulate_path(StableConfig(1.5, seed=seed, max_rate=200), 1.0, 16)
    assert p.coarsen(k).values()[-1, 0] == pytest.approx(p.values()[-1, 0], abs=1e-12)
