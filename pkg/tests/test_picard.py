import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import stats

from lpkinetic.kernels import levy_multiplier
from lpkinetic.picard import (KERNELS, JumpMapSpec, JumpMapTable, PicardConfig, change_of_variables,
                              feynman_kac_solve, identity_battery, jump_map_constant, jump_map_dz,
                              jump_map_inverse, jump_map_phi, large_jump_apply, node_grid, picard_residual,
                              picard_solve, simulate_phi_sde, tail_mass, trig_eval)
from lpkinetic.stable_sim import sample_compensated_small_jumps, stream_rng

MOD = JumpMapSpec(1.5, KERNELS["modulated"].kappa)
COS = JumpMapSpec(1.3, KERNELS["cosine"].kappa)


def const_spec(alpha, c):
    return JumpMapSpec(alpha, lambda x, z: c + 0 * np.asarray(x) * np.asarray(z))


# ---------------------------------------------------------------------------
# jump map

def test_spec_validation():
    with pytest.raises(ValueError):
        JumpMapSpec(2.0)
    with pytest.raises(ValueError):
        JumpMapSpec(1.5, lambda x, z: np.cos(3 * z) + 0 * x)


@pytest.mark.parametrize("alpha,c", [(0.6, 1.7), (1.5, 0.4), (1.9, 2.5)])
def test_tail_mass_constant_kernel(alpha, c):
    z = np.array([1e-4, 0.01, 0.3, 1.0])
    assert np.allclose(tail_mass(const_spec(alpha, c), 0.0, z), c * (z ** -alpha - 1) / alpha, rtol=1e-12)


def test_tail_mass_rejects_outside_unit_interval():
    with pytest.raises(ValueError):
        tail_mass(MOD, 0.0, 1.5)


@pytest.mark.parametrize("alpha,c", [(0.8, 1.7), (1.5, 0.5), (1.5, 1.7)])
def test_jump_map_matches_constant_kernel_closed_form(alpha, c):
    z = np.concatenate([-np.geomspace(1e-6, 1, 20), np.geomspace(1e-6, 1, 20)])
    got = jump_map_phi(const_spec(alpha, c), 0.2, z)
    assert np.allclose(got, jump_map_constant(alpha, c, z), rtol=1e-12, atol=0)


def test_newton_and_brent_agree():
    z = np.array([-0.9, -0.2, 1e-5, 0.05, 0.5, 0.999])
    x = np.array([0.0, 1.0, -2.0, 3.0, 0.5, 0.3])
    a = jump_map_phi(MOD, x, z, method="newton")
    b = jump_map_phi(MOD, x, z, method="brent")
    assert np.allclose(a, b, rtol=1e-12, atol=0)


def test_jump_map_fixed_points_and_domain():
    assert jump_map_phi(MOD, 0.3, 0.0) == 0.0
    assert jump_map_phi(MOD, 0.3, 1.0) == 1.0
    assert jump_map_phi(MOD, 0.3, -1.0) == -1.0
    with pytest.raises(ValueError):
        jump_map_phi(MOD, 0.3, 1.2)


@settings(max_examples=40, deadline=None)
@given(z=st.floats(1e-6, 0.999), x=st.floats(-np.pi, np.pi))
def test_jump_map_is_odd_and_inverted(z, x):
    p = jump_map_phi(MOD, x, z)
    assert jump_map_phi(MOD, x, -z) == pytest.approx(-p, rel=1e-14)
    assert jump_map_inverse(MOD, x, p) == pytest.approx(z, rel=1e-10)


@settings(max_examples=30, deadline=None)
@given(z1=st.floats(1e-6, 0.99), z2=st.floats(1e-6, 0.99), x=st.floats(-3, 3))
def test_jump_map_is_increasing(z1, z2, x):
    if z1 == z2:
        return
    lo, hi = sorted([z1, z2])
    assert jump_map_phi(COS, x, lo) < jump_map_phi(COS, x, hi)


def test_jump_map_derivative_matches_difference_quotient():
    z = np.array([0.01, 0.2, 0.7])
    h = 1e-6 * z
    fd = (jump_map_phi(MOD, 0.4, z + h) - jump_map_phi(MOD, 0.4, z - h)) / (2 * h)
    assert np.allclose(jump_map_dz(MOD, 0.4, z), fd, rtol=1e-6)


def test_table_lookup_matches_direct_solve():
    table = JumpMapTable(MOD)
    rng = np.random.default_rng(0)
    x = rng.uniform(-np.pi, np.pi, 200)
    z = rng.uniform(-1, 1, 200) * 10 ** rng.uniform(-5, 0, 200)
    # cubic Hermite in log|z| at tabulated x; linear in x between nodes
    xn = table.x[rng.integers(0, len(table.x), 200)]
    assert np.allclose(table(xn, z), jump_map_phi(MOD, xn, z), rtol=1e-6, atol=0)
    assert np.allclose(table(x, z), jump_map_phi(MOD, x, z), rtol=2e-4, atol=0)
    # periodic wrap in x
    assert np.allclose(table(x + 2 * np.pi, z), table(x, z), rtol=1e-12)


def test_small_variance_constant_kernel():
    c, a, eps = 1.7, 1.5, 0.1
    spec = const_spec(a, c)
    table = JumpMapTable(spec)
    top = jump_map_constant(a, c, eps)
    exact = 2 * 2.0 * c * top ** (2 - a) / (2 - a)
    assert table.small_variance(np.array([0.3]), eps)[0] == pytest.approx(exact, rel=1e-7)


@pytest.mark.parametrize("alpha,c", [(1.5, 1.7), (0.7, 0.6)])
def test_change_of_variables_square_closed_form(alpha, c):
    lhs, rhs = change_of_variables(const_spec(alpha, c), lambda z: z ** 2, 0.0)
    exact = c * 2 / (2 - alpha)
    assert rhs == pytest.approx(exact, rel=1e-10)
    assert lhs == pytest.approx(exact, rel=1e-8)


@pytest.mark.parametrize("spec", [MOD, COS, const_spec(1.5, 1.7)], ids=["modulated", "cosine", "constant"])
def test_identity_battery(spec):
    for name, (lhs, rhs, rel) in identity_battery(spec).items():
        assert rel <= 1e-6, name


def test_identity_fails_for_the_reversed_map():
    # pushing forward with the inverse map gives the wrong measure
    spec = const_spec(1.5, 1.7)
    z = np.geomspace(1e-7, 1, 400)
    wrong = jump_map_constant(1.5, 1 / 1.7, z)
    right = jump_map_constant(1.5, 1.7, z)
    assert np.allclose(jump_map_phi(spec, 0.0, z), right, rtol=1e-12)
    assert not np.allclose(wrong, right, rtol=1e-3)


# ---------------------------------------------------------------------------
# configuration and grid fields

@pytest.mark.parametrize("kw", [dict(alpha=0.9), dict(lam=0.0), dict(n_grid=10), dict(n_grid=1),
                                dict(n_paths=101), dict(kernel="nope"), dict(drift="nope")])
def test_picard_config_validation(kw):
    with pytest.raises(ValueError):
        PicardConfig(**kw)


def test_noise_eps_is_set_by_rate_cap():
    cfg = PicardConfig(max_rate=64.0)
    noise = cfg.noise()
    assert noise.rate(noise.eps, 1.0) == pytest.approx(64.0, rel=1e-10)


def test_trig_interpolant_is_exact_for_low_modes():
    n = 9
    xs = node_grid(n)
    X, V = np.meshgrid(xs, xs, indexing="ij")
    f = lambda x, v: np.cos(2 * x - v) + 0.5 * np.sin(3 * v) + 0.2
    vals = f(X, V)
    assert np.allclose(trig_eval(vals, X, V), vals, atol=1e-13)
    pts = np.random.default_rng(1).uniform(-4, 4, (2, 50))
    assert np.allclose(trig_eval(vals, *pts), f(*pts), atol=1e-12)


def test_large_jump_operator_on_a_cosine():
    cfg = PicardConfig(kernel="const", n_grid=7, n_paths=8, n_batches=2)
    xs = node_grid(7)
    X, V = np.meshgrid(xs, xs, indexing="ij")
    got = large_jump_apply(cfg, np.cos(2 * V))
    m = levy_multiplier(2.0, 1.5, w_range=(1.0, np.inf))
    assert np.allclose(got, m * np.cos(2 * V), atol=1e-12)
    assert np.all(large_jump_apply(PicardConfig(kernel="local", n_grid=7, n_paths=8, n_batches=2),
                                   np.cos(2 * V)) == 0)


# ---------------------------------------------------------------------------
# small-jump SDE

def test_unit_kernel_increments_match_direct_sampler():
    cfg = PicardConfig(kernel="const", drift="zero", T=0.25, n_steps=8, n_paths=4000)
    spec = cfg.jump_spec()
    p = simulate_phi_sde(spec, cfg, [0.0, 0.0], stream="ks")
    dv = p.final[0, :, 1]
    direct = sample_compensated_small_jumps(cfg.noise(), cfg.T, stream_rng(9, "direct"), n=4000)[:, 0]
    assert stats.ks_2samp(dv, direct).pvalue > 0.01
    assert np.all(p.final[0, :, 0] == 0.0)


def test_phi_sde_mean_follows_constant_drift():
    cfg = PicardConfig(kernel="modulated", drift="constant", T=0.5, n_steps=16, n_paths=4000)
    p = simulate_phi_sde(cfg.jump_spec(), cfg, [[0.1, -0.2]], stream="mean")
    X, V = p.final[0, :, 0], p.final[0, :, 1]
    se = V.std() / np.sqrt(len(V))
    assert np.all(X == pytest.approx(0.1 + 0.5 * 0.5))
    assert abs(V.mean() - (-0.2 + 0.25 * 0.5)) < 4 * se


def test_phi_sde_is_deterministic_per_stream():
    cfg = PicardConfig(n_steps=4, n_paths=16, n_batches=2)
    spec = cfg.jump_spec()
    a = simulate_phi_sde(spec, cfg, [0.0, 0.0], stream="d").final
    b = simulate_phi_sde(spec, cfg, [0.0, 0.0], stream="d").final
    assert np.array_equal(a, b)


# ---------------------------------------------------------------------------
# Feynman-Kac and Picard

SMALL = dict(n_grid=3, n_paths=400, n_batches=4, n_steps=16)


def test_feynman_kac_zero_source_gives_zero():
    cfg = PicardConfig(**SMALL)
    r = feynman_kac_solve(cfg, lambda t, x, v: 0 * x)
    assert np.all(r.u == 0)


def test_feynman_kac_constant_source_closed_form():
    cfg = PicardConfig(lam=2.0, T=0.5, **SMALL)
    r = feynman_kac_solve(cfg, lambda t, x, v: 1.0 + 0 * x)
    tau = cfg.T - r.times
    exact = (1 - np.exp(-cfg.lam * tau)) / cfg.lam
    assert np.max(np.abs(r.u - exact[:, None, None])) < 2e-4


def test_feynman_kac_matches_fourier_symbol():
    cfg = PicardConfig(kernel="const", drift="zero", lam=2.0, T=0.5, n_grid=5, n_paths=20000,
                       n_batches=8, n_steps=32)
    r = feynman_kac_solve(cfg, lambda t, x, v: np.cos(v))
    psi = levy_multiplier(1.0, cfg.alpha, w_range=(0.0, 1.0))
    rate = cfg.lam - psi
    tau = cfg.T - r.times
    xs = node_grid(5)
    X, V = np.meshgrid(xs, xs, indexing="ij")
    exact = ((1 - np.exp(-rate * tau)) / rate)[:, None, None] * np.cos(V)[None]
    trap = rate ** 2 * cfg.T * cfg.dt ** 2 / 12
    assert np.max(np.abs(r.u - exact)) < 5 * r.stderr.max() + trap + 1e-3


def test_local_kernel_stops_after_one_update():
    cfg = PicardConfig(kernel="local", **SMALL)
    res = picard_solve(cfg, lambda t, x, v: np.sin(x) + 0 * v)
    assert res.sup_diff[1] == 0.0
    assert res.converged


def test_picard_contracts():
    cfg = PicardConfig(n_grid=5, n_paths=2000, n_batches=4, n_steps=16, max_iter=5)
    res = picard_solve(cfg, lambda t, x, v: np.sin(2 * x - v) + 0.25)
    assert len(res.ratios) == 4
    assert max(res.ratios[1:]) <= 0.8
    assert res.converged
    assert res.batch_ratios.shape == (4, 4)


def test_picard_history_csv(tmp_path):
    cfg = PicardConfig(**SMALL, max_iter=3)
    res = picard_solve(cfg, lambda t, x, v: np.cos(x) + 0 * v)
    f = tmp_path / "hist.csv"
    res.to_csv(f)
    lines = f.read_text().splitlines()
    assert lines[0].startswith("# alpha=1.5")
    assert lines[1] == "n,sup_diff,ratio"
    assert len(lines) == 2 + len(res.sup_diff)


def test_picard_residual_needs_interior_time():
    cfg = PicardConfig(**SMALL, max_iter=2)
    src = lambda t, x, v: np.cos(x) + 0 * v
    res = picard_solve(cfg, src)
    with pytest.raises(ValueError):
        picard_residual(cfg, res, src, j=0)
