import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy import special

from lpkinetic.kernels import (
    GaussianSpec, KineticKernelSpec, LevyOpSpec, apply_levy_op, gamma_shift,
    gaussian_kernel, kernel_from_cf, kinetic_covariance_alpha2, kinetic_cf,
    levy_multiplier, moment_integral, symbol_constant, symbol_constant_closed,
)
from lpkinetic.lp_core import Field, GridSpec
from lpkinetic.estimates import random_bandlimited


# -- Gaussian kernel ----------------------------------------------------------

def test_gaussian_peak():
    spec = GaussianSpec.constant(1.0, 0.0, 1.0)
    assert gaussian_kernel(spec, 0.0) == pytest.approx(1 / np.sqrt(2 * np.pi), rel=1e-14)


def test_gaussian_mass():
    spec = GaussianSpec.constant(0.7, 0.0, 2.0)
    x = np.linspace(-30, 30, 60001)
    assert np.trapezoid(gaussian_kernel(spec, x), x) == pytest.approx(1.0, abs=1e-8)


def test_gaussian_2d_against_explicit_inverse():
    spec = GaussianSpec.constant(2 * np.eye(2), 0.0, 0.5)
    rng = np.random.default_rng(0)
    pts = rng.normal(size=(10, 2))
    # covariance is the identity: density exp(-|x|^2/2) / (2 pi)
    want = np.exp(-0.5 * np.sum(pts ** 2, axis=1)) / (2 * np.pi)
    assert np.max(np.abs(gaussian_kernel(spec, pts) / want - 1)) <= 1e-10


def test_gaussian_piecewise_covariance():
    spec = GaussianSpec([0.0, 1.0], [[[1.0]], [[3.0]]], s=0.5, t=2.0)
    assert spec.covariance()[0, 0] == pytest.approx(0.5 + 3.0)


def test_gaussian_rejects_singular_and_bad_window():
    with pytest.raises(ValueError):
        gaussian_kernel(GaussianSpec.constant(np.diag([1.0, 0.0])), np.zeros(2))
    with pytest.raises(ValueError):
        gaussian_kernel(GaussianSpec.constant(1.0, 1.0, 1.0), 0.0)
    with pytest.raises(ValueError):
        GaussianSpec.constant(5.0).__class__([0.0], [[[5.0]]], c0=2.0)


# -- symbol constant ------------------------------------------------------------

@pytest.mark.parametrize("alpha", [0.5, 1.0, 1.3, 1.5, 1.8])
def test_symbol_constant_calibration(alpha):
    assert symbol_constant(alpha) == pytest.approx(symbol_constant_closed(alpha), rel=1e-10)


def test_symbol_constant_cauchy_value():
    assert symbol_constant_closed(1.0) == pytest.approx(2 * np.pi, rel=1e-14)
    assert symbol_constant(2.0) == 1.0


# -- kinetic characteristic function -------------------------------------------

def test_cf_at_origin_and_bounded():
    spec = KineticKernelSpec.laplacian(1.5, t=0.7)
    assert kinetic_cf(spec, 0.0, 0.0) == 1.0
    rng = np.random.default_rng(1)
    v = kinetic_cf(spec, rng.normal(size=200) * 5, rng.normal(size=200) * 5)
    assert np.all((v >= 0) & (v <= 1))


@pytest.mark.parametrize("t", [0.3, 1.0, 2.5])
def test_cf_gaussian_case(t):
    spec = KineticKernelSpec(2.0, kappa0=1.0, t=t)
    C = kinetic_covariance_alpha2(t)
    rng = np.random.default_rng(2)
    xi, eta = rng.normal(size=(2, 50))
    q = C[0, 0] * xi ** 2 + 2 * C[0, 1] * xi * eta + C[1, 1] * eta ** 2
    assert np.max(np.abs(kinetic_cf(spec, xi, eta) / np.exp(-q / 2) - 1)) <= 1e-8


@settings(max_examples=25, deadline=None)
@given(st.floats(1.05, 1.95), st.floats(0.05, 4.0), st.floats(-6, 6), st.floats(-6, 6))
def test_cf_scaling(alpha, t, xi, eta):
    lhs = kinetic_cf(KineticKernelSpec.laplacian(alpha, t=t), xi, eta)
    rhs = kinetic_cf(KineticKernelSpec.laplacian(alpha, t=1.0), t ** (1 + 1 / alpha) * xi, t ** (1 / alpha) * eta)
    assert abs(lhs - rhs) <= 1e-10


@settings(max_examples=25, deadline=None)
@given(st.floats(1.05, 1.95), st.floats(0.1, 0.9), st.floats(-4, 4), st.floats(-4, 4))
def test_cf_chapman_kolmogorov(alpha, r, xi, eta):
    base = KineticKernelSpec.laplacian(alpha, U=1.3)
    whole = kinetic_cf(base.with_times(0.0, 1.0), xi, eta)
    late = kinetic_cf(base.with_times(r, 1.0), xi, eta)
    early = kinetic_cf(base.with_times(0.0, r), xi, eta + 1.3 * (1.0 - r) * xi)
    assert abs(whole - late * early) <= 1e-8 * max(whole, 1e-300) + 1e-300


def test_cf_callable_coefficients_match_constant():
    const = KineticKernelSpec.laplacian(1.5, t=1.0)
    call = KineticKernelSpec(1.5, kappa0=lambda r: const.kappa0, U=lambda r: 1.0, t=1.0)
    xi, eta = np.array([0.5, 2.0, -1.0]), np.array([1.0, -3.0, 0.2])
    assert np.max(np.abs(kinetic_cf(call, xi, eta) - kinetic_cf(const, xi, eta))) <= 1e-9


# -- kernel on a grid ----------------------------------------------------------

@pytest.fixture(scope="module")
def kgrid():
    return GridSpec((16.0, 8.0), (512, 256), (0, 1))


def test_kernel_mass_and_damping(kgrid):
    p = kernel_from_cf(KineticKernelSpec.laplacian(1.5, t=1.0), kgrid)
    assert np.sum(p.values) * kgrid.cell_volume == pytest.approx(1.0, abs=1e-6)
    assert p.values.min() >= -1e-6 * p.values.max()
    pd = kernel_from_cf(KineticKernelSpec.laplacian(1.5, t=1.0, lam=0.7), kgrid)
    assert np.sum(pd.values) * kgrid.cell_volume == pytest.approx(np.exp(-0.7), abs=1e-6)


def test_kernel_gaussian_case(kgrid):
    t = 1.0
    p = kernel_from_cf(KineticKernelSpec(2.0, kappa0=1.0, t=t), kgrid)
    g = GaussianSpec.constant(kinetic_covariance_alpha2(t), 0.0, 1.0)
    X, V = kgrid.mesh()
    rng = np.random.default_rng(3)
    # relative error is meaningful where the density is not at rounding level
    cand = np.flatnonzero(p.values.ravel() > 1e-4 * p.values.max())
    idx = np.unravel_index(rng.choice(cand, 20, replace=False), kgrid.shape)
    pts = np.stack([X[idx], V[idx]], axis=1)
    assert np.max(np.abs(p.values[idx] / gaussian_kernel(g, pts) - 1)) <= 1e-6


def test_kernel_point_symmetry(kgrid):
    p = kernel_from_cf(KineticKernelSpec.laplacian(1.3, t=1.0), kgrid).values
    flipped = np.roll(p[::-1, ::-1], (1, 1), axis=(0, 1))
    assert np.max(np.abs(p - flipped)) <= 1e-10 * p.max()


def test_kernel_unresolved_rejected():
    grid = GridSpec((4.0, 4.0), (16, 16), (0, 1))
    with pytest.raises(ValueError, match="N =") as err:
        kernel_from_cf(KineticKernelSpec.laplacian(1.5, t=0.01), grid)
    assert "(16, 16)" not in str(err.value)


# -- shear -----------------------------------------------------------------------

def test_shear_identity_and_phase():
    grid = GridSpec((np.pi, np.pi), (64, 64), (0, 1))
    X, V = grid.mesh()
    f = Field(grid, np.cos(3 * X + 2 * V))
    assert np.max(np.abs(gamma_shift(f, 0.0).values - f.values)) <= 1e-13
    # integer shear keeps the wave periodic: cos(3x + (2 + 3 Pi) v)
    out = gamma_shift(f, 2.0).values
    assert np.max(np.abs(out - np.cos(3 * X + 8 * V))) <= 1e-10


def test_shear_inverse():
    grid = GridSpec((np.pi, np.pi), (64, 64), (0, 1))
    f = random_bandlimited(grid, (10.0, 10.0), seed=4)
    back = gamma_shift(gamma_shift(f, 0.37), 0.37, inverse=True)
    assert np.max(np.abs(back.values - f.values)) <= 1e-10


# -- nonlocal operator -------------------------------------------------------------

def test_levy_of_constant_is_zero():
    grid = GridSpec((np.pi, np.pi), (8, 64), (0, 1))
    f = Field(grid, np.full(grid.shape, 3.0))
    assert apply_levy_op(f, LevyOpSpec(1.5)).sup() <= 1e-13
    spec = LevyOpSpec(1.5, kappa=lambda t, x, v, w: 1 + 0.2 * np.cos(x), state_dependent=True)
    assert apply_levy_op(f, spec).sup() <= 1e-10


@pytest.mark.parametrize("eta", [1.0, 4.0, 16.0])
def test_levy_plane_wave_both_routes(eta):
    alpha, c = 1.5, 1.7
    grid = GridSpec((np.pi, np.pi), (4, 128), (0, 1))
    X, V = grid.mesh()
    f = Field(grid, np.cos(eta * V))
    want = -c * symbol_constant(alpha) * eta ** alpha * np.cos(eta * V)
    mult = apply_levy_op(f, LevyOpSpec(alpha, kappa=lambda w: c)).values
    quad = apply_levy_op(f, LevyOpSpec(alpha, kappa=lambda t, x, v, w: c + 0 * x,
                                       state_dependent=True)).values
    scale = np.abs(want).max()
    assert np.max(np.abs(mult - want)) <= 1e-6 * scale
    assert np.max(np.abs(quad - want)) <= 1e-5 * scale


def test_truncated_symbol_small_frequency_limit():
    # second difference of v^2 is 2 w^2, so the symbol of jumps below r is
    # -2 eta^2 r^(2-alpha)/(2-alpha) + O(eta^4)
    alpha, r, eta = 1.5, 0.5, 1e-3
    m = levy_multiplier(np.array([eta]), alpha, None, (0.0, r))[0]
    assert m / (-2 * eta ** 2 * r ** (2 - alpha) / (2 - alpha)) == pytest.approx(1.0, rel=1e-6)


def test_levy_split_is_additive():
    alpha, eta = 1.3, np.array([0.7, 3.0, 11.0])
    kap = lambda w: 1 + 0.3 * np.cos(w)
    whole = levy_multiplier(eta, alpha, kap)
    parts = levy_multiplier(eta, alpha, kap, (0.0, 1.0)) + levy_multiplier(eta, alpha, kap, (1.0, np.inf))
    assert np.max(np.abs(whole - parts)) <= 1e-9 * np.abs(whole).max()


# -- moments -----------------------------------------------------------------------

def test_moment_total_mass():
    assert moment_integral(KineticKernelSpec.laplacian(1.5, t=0.25), 0, 0) == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("which", ["x", "v"])
def test_moment_gaussian_closed_form(which):
    t, g = 0.5, 0.6
    spec = KineticKernelSpec(2.0, kappa0=1.0, t=t)
    C = kinetic_covariance_alpha2(t)
    var = C[0, 0] if which == "x" else C[1, 1]
    want = (2 * var) ** (g / 2) * special.gamma((g + 1) / 2) / np.sqrt(np.pi)
    # the |x|^g kink limits the trapezoid rule to O(h^(1+g)): fine axis in the measured direction
    if which == "x":
        got = moment_integral(spec, g, 0.0, grid=GridSpec((3.0, 12.0), (4096, 128), (0, 1)))
    else:
        got = moment_integral(spec, 0.0, g, grid=GridSpec((3.0, 8.0), (128, 4096), (0, 1)))
    assert got == pytest.approx(want, rel=1e-4)


def test_moment_rejects_divergent():
    with pytest.raises(ValueError, match="diverges"):
        moment_integral(KineticKernelSpec.laplacian(1.5), 1.0, 0.6)


def test_moment_time_slope():
    a, b = 1.5, 0.5
    taus = 2.0 ** -np.arange(6, 0, -1)
    vals = [moment_integral(KineticKernelSpec.laplacian(a, t=tau), b, 0.0) for tau in taus]
    slope = np.polyfit(np.log(taus), np.log(vals), 1)[0]
    assert slope == pytest.approx(b * (1 + a) / a, abs=0.1)
