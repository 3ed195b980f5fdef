"""
Quantitative checks of block decay, commutator rates, orthogonality of
sheared rings, and Schauder gains.

Every decay claim ``value_j <= C 2^{-sigma j}`` is turned into a least-squares
fit of ``log2 value_j`` against ``j`` (`SlopeFit`). Constants are never
compared with fixed numbers; they are judged by their stability across the
fit range.
"""
import warnings
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, interpolate
from scipy.optimize import minimize
from scipy.special import roots_jacobi, roots_legendre

from .lp_core import (AnisotropyIndex, Field, GridSpec, PlaneWaveSum, besov_norm,
                      block_apply, build_partition, kinetic_ring, ring_multiplier,
                      spectral_derivative)
from .kernels import (GaussianSpec, KineticKernelSpec, _to_space, gamma_shift,
                      kinetic_cf, levy_multiplier, symbol_constant)

__all__ = [
    "SlopeFit", "fit_slope", "lacunary_field", "random_bandlimited",
    "heat_inner_integral", "heat_block_integral", "kinetic_block_integral",
    "commutator_field", "commutator_norm", "hq2_profile",
    "ThetaParams", "theta_set", "theta_sums", "theta_constant", "theta_j0", "orthogonality_check",
    "orthogonality_pairs", "DuhamelConfig", "DuhamelSolution", "duhamel_solve",
    "plane_wave_sup", "periodic_sup", "levy_on_waves", "schauder_report",
    "SchauderReport", "lacunary_waves", "constant_spread",
]

MAX_RESIDUAL = 0.3


# ----------------------------------------------------------------------------
# Slope fits

@dataclass
class SlopeFit:
    """Least-squares line through ``(j, log2 value_j)``."""
    js: np.ndarray
    log2v: np.ndarray
    slope: float
    intercept: float
    max_residual: float

    @property
    def jrange(self):
        return int(self.js[0]), int(self.js[-1])

    @property
    def residual_ok(self):
        return self.max_residual <= MAX_RESIDUAL

    def matches(self, target, tol):
        """Slope equals ``target`` within ``tol`` and residuals are small."""
        return bool(abs(self.slope - target) <= tol and self.residual_ok)

    def at_most(self, bound, tol):
        """Slope does not exceed ``bound + tol`` and residuals are small."""
        return bool(self.slope <= bound + tol and self.residual_ok)

    def as_dict(self):
        return {"j": [int(j) for j in self.js], "log2_value": [float(v) for v in self.log2v],
                "slope": self.slope, "intercept": self.intercept,
                "max_residual": self.max_residual}


def fit_slope(js, values):
    """Fit ``log2(values)`` linearly in ``js``; every residual is kept."""
    js = np.asarray(js, dtype=float)
    values = np.asarray(values, dtype=float)
    if js.shape != values.shape or len(js) < 2:
        raise ValueError("need at least two (j, value) pairs of equal length")
    if np.any(values <= 0) or not np.all(np.isfinite(values)):
        raise ValueError("slope fits need positive finite values")
    y = np.log2(values)
    slope, icpt = np.polyfit(js, y, 1)
    res = y - (slope * js + icpt)
    return SlopeFit(js, y, float(slope), float(icpt), float(np.max(np.abs(res))))


def constant_spread(values):
    """``max / min`` of a positive sequence (stability of a measured constant)."""
    values = np.asarray(values, dtype=float)
    return float(values.max() / values.min())


# ----------------------------------------------------------------------------
# Test fields

def lacunary_field(grid, beta, kmax, kmin=0, axis=0, base=1.0, seed=0, phases=True):
    """
    Weierstrass-type sum ``sum_k 2^{-beta k} cos(base 2^k x_axis + phase_k)``.

    Frequencies above the grid Nyquist are dropped. With ``phases=False``
    all phases are zero.
    """
    rng = np.random.default_rng(seed)
    mesh = grid.mesh()
    x = mesh[axis]
    vals = np.zeros(grid.shape)
    ph = rng.uniform(0, 2 * np.pi, kmax + 1) if phases else np.zeros(kmax + 1)
    for k in range(kmin, kmax + 1):
        freq = base * 2.0 ** k
        if freq >= grid.nyquist(axis):
            break
        vals += 2.0 ** (-beta * k) * np.cos(freq * x + ph[k])
    return Field(grid, vals)


def random_bandlimited(grid, bands, seed=0, scale=1.0):
    """
    Real random field whose spectrum lies in ``|freq_i| <= bands[i]``.

    Coefficients are complex Gaussian; the field is normalized to unit sup.
    """
    rng = np.random.default_rng(seed)
    spec = rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape)
    for i, fr in enumerate(grid.freq_mesh()):
        spec = np.where(np.abs(fr) <= bands[i], spec, 0.0)
    vals = np.fft.ifftn(spec).real
    m = np.abs(vals).max()
    return Field(grid, scale * vals / (m if m > 0 else 1.0))


# ----------------------------------------------------------------------------
# Time quadrature

def _gl(a, b, n):
    x, w = roots_legendre(n)
    return 0.5 * (b - a) * x + 0.5 * (b + a), 0.5 * (b - a) * w


def _gauss_jacobi_power(b, q, n):
    """Nodes and weights for ``int_0^b tau^q g(tau) d tau``."""
    x, w = roots_jacobi(n, 0.0, q)  # weight (1+x)^q on [-1,1]
    tau = 0.5 * b * (x + 1)
    return tau, w * (0.5 * b) ** (1 + q)


def _split_time_integral(inner, t, split, q=0.0, n_near=16, n_panel=10,
                         rel_cut=1e-9, max_panels=60):
    """
    ``int_0^t tau^q inner(tau) d tau`` split at ``split``.

    The near piece uses Gauss-Jacobi nodes with weight ``tau^q``; the far
    piece uses Gauss-Legendre panels on doubling intervals and stops once a
    panel contributes less than ``rel_cut`` of the running total. ``inner``
    may return None to end the far sum early; the dropped tail is then
    bounded by ``tau^{q+1} |inner|`` at the last node and added to the error.

    Returns
    -------
    value, error estimate, number of far panels used
    """
    a = min(split, t)
    nodes, wts = _gauss_jacobi_power(a, q, n_near)
    near = sum(w * inner(x) for x, w in zip(nodes, wts))
    n2, w2 = _gauss_jacobi_power(a, q, n_near // 2)
    near_lo = sum(w * inner(x) for x, w in zip(n2, w2))
    total, err = near, abs(near - near_lo)
    lo, k, part = a, 0, 0.0
    while lo < t and k < max_panels:
        hi = min(2 * lo, t)
        x, w = _gl(lo, hi, n_panel)
        vals = []
        for xx in x:
            v = inner(xx)
            if v is None:
                break
            vals.append(v)
        n = len(vals)
        if n < len(x):
            last = vals[-1] * x[n - 1] ** (q + 1) if n else abs(part)
            total += float(np.dot(w[:n], np.array(vals) * x[:n] ** q))
            err += abs(last)
            return total, err, k + 1
        part = float(np.dot(w, np.array(vals) * x ** q))
        total += part
        k += 1
        lo = hi
        if abs(part) <= rel_cut * abs(total):
            err += abs(part)
            break
    else:
        if lo < t:
            err += abs(part)
    return total, err, k


# ----------------------------------------------------------------------------
# Heat kernel blocks

def _next_pow2(n):
    return int(2 ** max(4, int(np.ceil(np.log2(max(n, 1))))))


def heat_inner_integral(j, beta, A, width=64.0):
    """
    ``int |x|^beta |R_j p(x)| dx`` for the centered Gaussian of variance ``A``
    in one dimension.

    The grid has spacing ``pi / 2^{j+2}`` and half-width
    ``width 2^{-j} + 12 sqrt(A)``, so the ring and the kernel are both
    resolved for every ``A``.
    """
    A = float(A)
    L = width * 2.0 ** (-j) + 12 * np.sqrt(A)
    N = _next_pow2(2 * L * 2.0 ** (j + 2) / np.pi)
    grid = GridSpec((L,), (N,))
    xi = grid.freq(0)
    mult = ring_multiplier(j, np.abs(xi)) * np.exp(-0.5 * A * xi ** 2)
    vals = _to_space(mult, grid)
    x = grid.axis(0)
    return float(np.sum(np.abs(x) ** beta * np.abs(vals)) * grid.spacing[0])


def heat_block_integral(j, beta, t=1.0, gspec=None, n_near=16):
    """
    ``int_0^t int |x|^beta |R_j p_{s,t}(x)| dx ds`` in one dimension.

    The s-integral is split at ``t - s = 2^{-2j}``; the inner integral at each
    node is `heat_inner_integral` with the exact covariance ``A_{s,t}``.

    Returns
    -------
    value, error estimate
    """
    if beta < 0:
        raise ValueError("beta must be nonnegative")
    if j < 1:
        raise ValueError("block index must be >= 1")
    if gspec is None:
        gspec = GaussianSpec.constant(1.0, 0.0, t)
    if gspec.dim != 1:
        raise ValueError("the grid block integral is one-dimensional")

    def inner(tau):
        A = float(np.asarray(gspec.covariance(t - tau, t)).reshape(-1)[0])
        return heat_inner_integral(j, beta, A)

    val, err, _ = _split_time_integral(inner, t, 2.0 ** (-2 * j), 0.0, n_near)
    return val, err


# ----------------------------------------------------------------------------
# Kinetic kernel blocks

@dataclass
class _BlockGridPlan:
    grid: GridSpec
    Pi: float


def _kinetic_node_grid(j, tau, spec, mode, K=(24.0, 24.0), max_points=2 ** 23):
    alpha = spec.alpha
    a1 = 1.0 + alpha
    Pi = float(np.asarray(spec.Pi(spec.t - tau, spec.t)).reshape(-1)[0])
    cks = spec.symbol_scale
    if mode == "aniso":
        Bx, Bv = 2.0 ** (a1 * (j + 1)), 2.0 ** (j + 1)
        sx = max(2.0 ** (-a1 * j), tau ** (1 + 1 / alpha))
        sv = max(2.0 ** (-j), tau ** (1 / alpha))
    else:
        Bx = 2.0 ** (j + 1)
        Bv = abs(Pi) * Bx + max(2 * tau * Bx, 2 * (36.0 / (cks * tau)) ** (1 / alpha))
        sx = max(2.0 ** (-j), tau ** (1 + 1 / alpha))
        sv = tau ** (1 / alpha)
    Lv = K[1] * sv
    Lx = K[0] * sx + abs(Pi) * Lv
    Nx = _next_pow2(2 * Lx * Bx / np.pi)
    Nv = _next_pow2(2 * Lv * Bv / np.pi)
    if Nx * Nv > max_points:
        return None
    return _BlockGridPlan(GridSpec((Lx, Lv), (Nx, Nv), (0, 1)), Pi)


def _ring_peak(j, tau, spec, mode, n=96):
    """Max of the sheared-kernel multiplier over the ring, on a coarse sample."""
    alpha = spec.alpha
    a1 = 1.0 + alpha
    Pi = float(np.asarray(spec.Pi(spec.t - tau, spec.t)).reshape(-1)[0])
    if mode == "aniso":
        r = np.linspace(0, 1, n)
        xi = np.concatenate([-(r[::-1] * 2.0 ** (a1 * (j + 1))), r * 2.0 ** (a1 * (j + 1))])
        eta = np.linspace(-2.0 ** (j + 1), 2.0 ** (j + 1), 2 * n)
        X, E = np.meshgrid(xi, eta, indexing="ij")
        phi = kinetic_ring(j, X, E, alpha)
    else:
        xi = np.linspace(2.0 ** (j - 1), 2.0 ** (j + 1), n)
        X, E = np.meshgrid(xi, Pi * xi, indexing="ij")
        phi = ring_multiplier(j, np.abs(X))
    cf = np.abs(kinetic_cf(spec.with_times(spec.t - tau, spec.t), X, E - Pi * X))
    return float(np.max(phi * cf)) * np.exp(-spec.lam * tau)


def _kinetic_inner(j, tau, beta, gamma, spec, mode, K, max_points):
    if tau <= 0:
        tau = 1e-300
    plan = _kinetic_node_grid(j, tau, spec, mode, K, max_points)
    if plan is None:
        return None
    grid, Pi = plan.grid, plan.Pi
    xi, eta = grid.freq_mesh()
    if mode == "aniso":
        phi = kinetic_ring(j, xi, eta, spec.alpha)
    else:
        phi = ring_multiplier(j, np.abs(xi))
    mult = np.zeros(grid.shape, dtype=complex)
    on = phi > 0
    sp = spec.with_times(spec.t - tau, spec.t)
    mult[on] = phi[on] * kinetic_cf(sp, xi[on], eta[on] - Pi * xi[on])
    mult *= np.exp(-spec.lam * tau)
    vals = _to_space(mult, grid)
    X, V = grid.mesh()
    w = np.abs(X) ** beta * np.abs(V) ** gamma
    return float(np.sum(w * np.abs(vals)) * grid.cell_volume)


def kinetic_block_integral(j, q, beta, gamma, kspec, mode="aniso", K=(16.0, 16.0),
                           n_near=12, n_panel=8, rel_cut=1e-4, node_cut=1e-8,
                           max_points=2 ** 20):
    """
    ``int_0^t (t-s)^q int |x|^beta |v|^gamma |R_j Gamma_{s,t} p_{s,t}| dx dv ds``.

    Parameters
    ----------
    j : int
        Block index (>= 1).
    q, beta, gamma : float
        Time and space weights, ``q > -1``, ``beta, gamma >= 0``,
        ``beta + gamma < alpha``.
    kspec : KineticKernelSpec
        Constant coefficients; ``kspec.t`` is the horizon.
    mode : {"aniso", "x_only"}
        Anisotropic rings or position-only rings.

    Each time node gets its own grid sized to the ring and to the kernel at
    that lag. The time integral is split at ``t - s = 2^{-alpha j}``; far
    nodes whose multiplier peak is below ``node_cut`` times the peak at
    ``s = t`` are dropped, and the doubling panels stop once one adds less
    than ``rel_cut`` of the total or a node grid would exceed ``max_points``.
    The node grids depend on ``j`` only through the scale ``2^{-j}``, so both
    cut-offs act at the same rescaled lag for every ``j``.

    Returns
    -------
    value, error estimate
    """
    if q <= -1:
        raise ValueError("q must exceed -1")
    if beta < 0 or gamma < 0:
        raise ValueError("beta, gamma must be nonnegative")
    if beta + gamma >= kspec.alpha:
        raise ValueError("beta + gamma must be below alpha")
    if mode not in ("aniso", "x_only"):
        raise ValueError("mode must be 'aniso' or 'x_only'")
    if j < 1:
        raise ValueError("block index must be >= 1")
    if not kspec.is_constant:
        raise ValueError("block integrals use constant coefficients")
    alpha = kspec.alpha
    t = kspec.t - kspec.s
    peak0 = _ring_peak(j, 2.0 ** (-alpha * j) * 1e-3, kspec, mode)

    def inner(tau):
        if _ring_peak(j, tau, kspec, mode) < node_cut * peak0:
            return 0.0
        return _kinetic_inner(j, tau, beta, gamma, kspec, mode, K, max_points)

    val, err, _ = _split_time_integral(inner, t, 2.0 ** (-alpha * j), q, n_near, n_panel,
                                       rel_cut)
    return val, err


# ----------------------------------------------------------------------------
# Commutators

@lru_cache(maxsize=32)
def _partition(idx, grid, jmax, active, check):
    return build_partition(idx, grid, jmax, active=active, check=check)


def _variant_partition(grid, variant, jmax, alpha=None, check=True):
    if variant == "x_block":
        if grid.ndim == 1:
            return _partition(AnisotropyIndex.isotropic(1), grid, jmax, None, check)
        if alpha is None:
            raise ValueError("alpha is required for blocks on an (x, v) grid")
        return _partition(AnisotropyIndex.kinetic(alpha), grid, jmax, (0,), check)
    if variant == "aniso_block":
        if alpha is None or grid.ndim != 2:
            raise ValueError("anisotropic blocks need an (x, v) grid and alpha")
        return _partition(AnisotropyIndex.kinetic(alpha), grid, jmax, None, check)
    raise ValueError("variant must be 'x_block' or 'aniso_block'")


def commutator_field(f, g, j, partition):
    """``[R_j, f] g = R_j(f g) - f R_j g``."""
    if f.grid != g.grid:
        raise ValueError("f and g must share a grid")
    return block_apply(f * g, j, partition) - f * block_apply(g, j, partition)


def commutator_norm(f, g, j, variant="x_block", output="sup", alpha=None, jmax=None,
                    check=True):
    """
    Size of the commutator ``[R_j, f] g``.

    Parameters
    ----------
    variant : {"x_block", "aniso_block"}
    output : "sup" or ("holder", s)
        Grid sup of the commutator field, or its Besov norm of order ``s``
        (``sup_l 2^{s l} ||R_l [R_j, f] g||``).
    """
    if jmax is None:
        jmax = j + 2
    part = _variant_partition(f.grid, variant, jmax, alpha, check)
    c = commutator_field(f, g, j, part)
    if output == "sup":
        return c.sup()
    kind, s = output
    if kind != "holder":
        raise ValueError("output must be 'sup' or ('holder', s)")
    return besov_norm(c, s, part)[0]


def hq2_profile(f, g, js, alpha, beta, check=False):
    """
    Weighted commutator ``max |[R_j, f~] g| / (2^{-j beta} + |x|^{beta/(1+alpha)} + |v|^beta)``
    over the grid, for each ``j`` in ``js``.

    ``f~ = f - f(0,0) - sin(v) d_v f(0,0)`` removes the value and the velocity
    slope at the origin with a periodic function whose slope at 0 is 1.
    """
    grid = f.grid
    part = _variant_partition(grid, "aniso_block", max(js) + 1, alpha, check)
    X, V = grid.mesh()
    i0 = [int(np.argmin(np.abs(grid.axis(a)))) for a in range(2)]
    dv = spectral_derivative(f, 1, 1).values[i0[0], i0[1]]
    ft = f - f.values[i0[0], i0[1]] - np.sin(V) * dv
    out = []
    for j in js:
        c = commutator_field(ft, g, j, part).values
        w = 2.0 ** (-j * beta) + np.abs(X) ** (beta / (1 + alpha)) + np.abs(V) ** beta
        out.append(float(np.max(np.abs(c) / w)))
    return np.array(out)


# ----------------------------------------------------------------------------
# Theta sets

@dataclass(frozen=True)
class ThetaParams:
    """Index set parameters: ``c1 >= 1``, time lag ``t``, block ``j``, ``alpha``."""
    c1: float
    t: float
    j: int
    alpha: float

    def __post_init__(self):
        if self.c1 < 1:
            raise ValueError("c1 must be >= 1")
        if self.t < 0:
            raise ValueError("t must be nonnegative")
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")


def theta_set(params, lmax=None):
    """
    ``{l >= 0 : 2^l <= 16 c1 (2^j + t 2^{(1+alpha) j}),
    2^j <= 16 c1 (2^l + t 2^{(1+alpha) l})}``.

    The first condition bounds ``l``, so the set is finite.
    """
    c1, t, j, a = params.c1, params.t, params.j, params.alpha
    top = 16 * c1 * (2.0 ** j + t * 2.0 ** ((1 + a) * j))
    lim = int(np.floor(np.log2(top))) if lmax is None else lmax
    out = set()
    for l in range(0, lim + 1):
        if 2.0 ** l <= top and 2.0 ** j <= 16 * c1 * (2.0 ** l + t * 2.0 ** ((1 + a) * l)):
            out.add(l)
    return out


def theta_sums(params, beta):
    """
    The two sums ``sum 2^{-beta l}`` and ``sum 2^{beta l}`` over the set,
    divided by ``(2^{-j} + t 2^{(alpha-1) j})^beta`` and
    ``(2^j + t 2^{(1+alpha) j})^beta``.
    """
    th = np.array(sorted(theta_set(params)), dtype=float)
    j, t, a = params.j, params.t, params.alpha
    lo = np.sum(2.0 ** (-beta * th)) / (2.0 ** (-j) + t * 2.0 ** ((a - 1) * j)) ** beta
    hi = np.sum(2.0 ** (beta * th)) / (2.0 ** j + t * 2.0 ** ((1 + a) * j)) ** beta
    return float(lo), float(hi)


def theta_constant(c1, beta):
    """Uniform bound ``(16 c1)^beta / (1 - 2^{-beta})`` for both normalized sums."""
    if beta <= 0:
        raise ValueError("beta must be positive")
    return (16.0 * c1) ** beta / (1.0 - 2.0 ** (-beta))


def theta_j0(c1, alpha, T):
    """Smallest integer ``j0 > log2(16 c1 (2^5 + T 2^{5(1+alpha)}))``."""
    return int(np.floor(np.log2(16 * c1 * (2.0 ** 5 + T * 2.0 ** (5 * (1 + alpha)))))) + 1


def _ortho_grid():
    # x-frequencies are multiples of 4, so shears Pi in Z/4 map the grid to itself
    return GridSpec((np.pi / 4, np.pi), (32, 2048), (0, 1))


def orthogonality_check(j, l, Pi, trials=4, alpha=1.5, grid=None, bands=(32.0, 512.0),
                        seed=0):
    """
    ``max |<R_j f, Gamma R_l g>| / (||f||_2 ||g||_2)`` over random fields.

    Parameters
    ----------
    Pi : float
        Shear; ``Pi * L_v / L_x`` must be an integer so that the shear maps
        grid frequencies to grid frequencies.
    bands : (float, float)
        Spectral box of the random fields. ``band_v + |Pi| band_x`` must stay
        below the velocity Nyquist so that sheared content does not wrap.
    """
    grid = _ortho_grid() if grid is None else grid
    Lx, Lv = grid.half_width
    ratio = Pi * Lv / Lx
    if abs(ratio - round(ratio)) > 1e-12:
        raise ValueError("Pi * L_v / L_x = %g is not an integer" % ratio)
    if bands[1] + abs(Pi) * bands[0] >= grid.nyquist(1):
        raise ValueError("sheared spectrum would wrap around the velocity axis")
    part = _partition(AnisotropyIndex.kinetic(alpha), grid, max(j, l) + 1, None, False)
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        s1, s2 = rng.integers(0, 2 ** 31, 2)
        f = random_bandlimited(grid, bands, seed=int(s1))
        g = random_bandlimited(grid, bands, seed=int(s2))
        rf = block_apply(f, j, part)
        rg = gamma_shift(block_apply(g, l, part), Pi)
        val = abs(rf.inner(rg)) / (f.l2() * g.l2())
        worst = max(worst, val)
    return worst


def orthogonality_pairs(n, alpha=1.5, u=1.0, seed=0, grid=None, jl_max=9,
                        pis=(0.0, 0.25, 0.5, 1.0, 2.0)):
    """
    Random ``(j, l, Pi)`` triples with ``l`` outside the index set of lag
    ``Pi / u`` (``c1 = |u| + 1/|u|``) and both rings carrying grid content.
    """
    grid = _ortho_grid() if grid is None else grid
    c1 = abs(u) + 1 / abs(u)
    cands = []
    for Pi in pis:
        for j in range(1, jl_max + 1):
            th = theta_set(ThetaParams(c1, abs(Pi / u), j, alpha))
            for l in range(0, jl_max + 1):
                if l not in th:
                    cands.append((j, l, Pi))
    if not cands:
        raise ValueError("no pairs outside the index set at these lags")
    rng = np.random.default_rng(seed)
    pick = rng.choice(len(cands), size=n, replace=len(cands) < n)
    return [cands[i] for i in pick], c1


# ----------------------------------------------------------------------------
# Duhamel solutions as plane-wave sums

@dataclass
class DuhamelConfig:
    """
    Model equation ``d_t u = L u + U v d_x u - lam u + f``, ``u(0) = 0``.

    ``source`` is a `PlaneWaveSum`; ``profile`` is an optional scalar time
    factor ``g(s)`` so that ``f(s) = g(s) source``. ``kappa0`` and ``U`` are
    constants; ``n_nodes`` is the Gauss-Legendre order per time panel.
    """
    alpha: float
    lam: float
    T: float
    source: PlaneWaveSum
    kappa0: float = None
    U: float = 1.0
    n_nodes: int = 16
    profile: object = None

    def __post_init__(self):
        if self.lam < 0:
            raise ValueError("lam must be nonnegative")
        if self.T <= 0:
            raise ValueError("T must be positive")
        if self.kappa0 is None:
            self.kappa0 = 1.0 / symbol_constant(self.alpha)

    @property
    def kspec(self):
        return KineticKernelSpec(self.alpha, self.kappa0, self.U, 0.0, 1.0, self.lam)

    def g(self, s):
        return 1.0 if self.profile is None else float(self.profile(s))


def _mode_breakpoints(t, xi, eta, U, rate, vmax):
    pts = {0.0, t}
    # kink of |eta + U tau xi|^alpha
    if U * xi != 0:
        tc = -eta / (U * xi)
        if 0 < tc < t:
            pts.add(tc)
    # geometric grading toward tau = 0 for fast decay
    if rate * t > 1:
        s = 1.0 / rate
        while s < t:
            pts.add(s)
            s *= 2
    pts = np.array(sorted(pts))
    # keep the phase change of U tau xi v below ~2 per panel
    out = [pts[0]]
    osc = abs(U * xi) * vmax + 1e-300
    for a, b in zip(pts[:-1], pts[1:]):
        m = max(1, int(np.ceil((b - a) * osc / 2.0)))
        out.extend(a + (b - a) * np.arange(1, m + 1) / m)
    return np.array(out)


def _shear_power_integral(xi, eta, U, tau, alpha):
    """``int_0^tau |eta + U u xi|^alpha du`` for an array of ``tau``."""
    tau = np.asarray(tau, dtype=float)
    if U * xi == 0:
        return tau * abs(eta) ** alpha
    F = lambda y: np.abs(y) ** alpha * y / (1 + alpha)
    return (F(eta + U * xi * tau) - F(eta)) / (U * xi)


def _damping_horizon(xi, eta, U, alpha, cks, lam, cut=40.0):
    """
    Lag beyond which ``exp(-lam tau - cks int_0^tau |eta + U u xi|^alpha du)``
    is below ``e^{-cut}``, from the lower bound with the zero of the
    linear function centred in the window.
    """
    s = abs(U * xi)
    lo = lambda tau: (lam * tau + cks * abs(eta) ** alpha * tau * (s == 0)
                      + cks * 2 * s ** alpha * (tau / 2) ** (1 + alpha) / (1 + alpha))
    if lam == 0 and s == 0 and eta == 0:
        return np.inf
    hi = 1.0
    while lo(hi) < cut:
        hi *= 2
    lo_t = 0.0
    for _ in range(60):
        m = 0.5 * (lo_t + hi)
        lo_t, hi = (m, hi) if lo(m) < cut else (lo_t, m)
    return hi


def _gl_panels(bps, n):
    x, w = roots_legendre(n)
    a, b = bps[:-1, None], bps[1:, None]
    tau = 0.5 * (b - a) * x + 0.5 * (a + b)
    return tau.ravel(), (0.5 * (b - a) * w).ravel()


@dataclass
class DuhamelSolution:
    """Solution of the model equation, evaluated through its wave expansion."""
    cfg: DuhamelConfig
    vmax: float = 8.0

    def waves(self, t):
        """Plane-wave expansion of ``u(t)``."""
        cfg = self.cfg
        if t == 0:
            return PlaneWaveSum(np.zeros(0), np.zeros(0), np.zeros(0))
        src = cfg.source
        a, U = cfg.alpha, cfg.U
        cks = symbol_constant(a) * cfg.kappa0
        amps, xis, etas = [], [], []
        for A, xi, eta in zip(src.amp, src.xi, src.eta):
            t_end = min(t, _damping_horizon(xi, eta, U, a, cks, cfg.lam))
            rate = cfg.lam + cks * (abs(eta) + abs(U * xi) * t_end) ** a
            bps = _mode_breakpoints(t_end, xi, eta, U, rate, self.vmax)
            tau, w = _gl_panels(bps, cfg.n_nodes)
            expo = cks * _shear_power_integral(xi, eta, U, tau, a) + cfg.lam * tau
            gs = np.array([cfg.g(t - tt) for tt in tau]) if cfg.profile is not None else 1.0
            amps.append(A * w * gs * np.exp(-expo))
            xis.append(np.full(len(tau), float(xi)))
            etas.append(eta + U * tau * xi)
        return PlaneWaveSum(np.concatenate(amps), np.concatenate(xis), np.concatenate(etas))

    def __call__(self, t, x, v):
        return self.waves(t).evaluate(x, v)

    def field(self, t, grid):
        """Samples of ``u(t)`` on a grid (values only; ``u`` is not v-periodic)."""
        X, V = grid.mesh()
        return Field(grid, self(t, X, V))

    def residual(self, t, x, v, h=1e-5):
        """
        ``d_t u - L u - U v d_x u + lam u - f`` at time ``t``.

        The time derivative is a centered difference; ``L`` acts on the wave
        expansion through the quadrature symbol of the jump kernel.
        """
        cfg = self.cfg
        x, v = np.broadcast_arrays(np.asarray(x, float), np.asarray(v, float))
        w = self.waves(t)
        dt = (self(t + h, x, v) - self(t - h, x, v)) / (2 * h)
        Lu = levy_on_waves(w, cfg.alpha, cfg.kappa0).evaluate(x, v)
        dx = PlaneWaveSum(1j * w.xi * w.amp, w.xi, w.eta).evaluate(x, v)
        f = cfg.g(t) * cfg.source.evaluate(x, v)
        return dt - Lu - cfg.U * v * dx + cfg.lam * w.evaluate(x, v) - f


def duhamel_solve(cfg, vmax=8.0):
    """
    Solve the constant-coefficient model equation by Duhamel's formula.

    Each source wave ``e^{i(xi x + eta v)}`` evolves under the sheared kernel
    into waves ``e^{i(xi x + (eta + U tau xi) v)}`` weighted by
    ``e^{-lam tau}`` times the kernel's characteristic function at lag
    ``tau``; the ``tau``-integral is done by Gauss-Legendre panels.
    ``vmax`` bounds ``|v|`` for panel sizing.
    """
    return DuhamelSolution(cfg, vmax)


@lru_cache(maxsize=16)
def _symbol_table(alpha, lo=-4.0, hi=8.0, n=97):
    e = np.logspace(lo, hi, n)
    with warnings.catch_warnings():
        # quad flags roundoff at the largest |eta|; the table error is checked in the tests
        warnings.simplefilter("ignore", integrate.IntegrationWarning)
        m = -levy_multiplier(e, alpha)
    return interpolate.CubicSpline(np.log(e), np.log(m)), 10.0 ** lo, 10.0 ** hi


def levy_on_waves(w, alpha, kappa0=1.0):
    """
    Velocity operator with constant ``kappa0`` applied to a plane-wave sum.

    The symbol comes from the jump-kernel quadrature, tabulated in ``|eta|``
    and interpolated in log-log coordinates.
    """
    spl, lo, hi = _symbol_table(float(alpha))
    e = np.abs(w.eta)
    if np.any((e > hi) | ((e < lo) & (e > 0))):
        raise ValueError("velocity frequency outside the tabulated symbol range")
    m = np.zeros(e.shape)
    nz = e > 0
    m[nz] = -np.exp(spl(np.log(e[nz])))
    return PlaneWaveSum(w.amp * kappa0 * m, w.xi, w.eta)


def plane_wave_sup(w, xr=(-np.pi, np.pi), vr=(-np.pi, np.pi), n=(129, 129)):
    """Grid max of ``|w|`` on a rectangle (the origin is always a node)."""
    x = np.union1d(np.linspace(*xr, n[0]), [0.0])
    v = np.union1d(np.linspace(*vr, n[1]), [0.0])
    X, V = np.meshgrid(x, v, indexing="ij")
    return float(np.max(np.abs(w.evaluate(X, V))))


def periodic_sup(w, n=256, refine=True):
    """
    Sup of a plane-wave sum with integer frequencies over one period,
    by a fine grid search refined with a local optimizer.
    """
    x = np.linspace(-np.pi, np.pi, n, endpoint=False)
    X, V = np.meshgrid(x, x, indexing="ij")
    vals = np.abs(w.evaluate(X, V))
    best = float(vals.max())
    if refine:
        k = np.argsort(vals.ravel())[-4:]
        for i in k:
            z0 = np.array([X.ravel()[i], V.ravel()[i]])
            r = minimize(lambda z: -abs(float(w.evaluate(z[0], z[1]))), z0, method="Nelder-Mead",
                         options=dict(xatol=1e-10, fatol=1e-14))
            best = max(best, -float(r.fun))
    return best


# ----------------------------------------------------------------------------
# Schauder gains

@dataclass
class SchauderReport:
    aniso: SlopeFit
    xdir: SlopeFit
    ratios_aniso: np.ndarray
    ratios_x: np.ndarray
    f_norm_aniso: float
    f_norm_x: float

    @property
    def C_aniso(self):
        return float(np.max(self.ratios_aniso))

    @property
    def C_x(self):
        return float(np.max(self.ratios_x))


def lacunary_waves(alpha, beta, gamma, kmax_v, kmax_x, v_part=True, x_part=True):
    """
    Source with velocity waves ``2^{-beta k} cos(2^k v)`` and position waves
    ``2^{-gamma i/(1+alpha)} cos(2^i x)``, all with zero phase.
    """
    amp, xi, eta = [], [], []
    if v_part:
        for k in range(0, kmax_v + 1):
            amp.append(2.0 ** (-beta * k)); xi.append(0.0); eta.append(2.0 ** k)
    if x_part:
        for i in range(0, kmax_x + 1):
            amp.append(2.0 ** (-gamma * i / (1 + alpha))); xi.append(2.0 ** i); eta.append(0.0)
    return PlaneWaveSum(np.array(amp), np.array(xi), np.array(eta))


def _block_sup(w, j, alpha, kind):
    if kind == "aniso":
        mult = kinetic_ring(j, w.xi, w.eta, alpha)
    else:
        mult = ring_multiplier(j, np.abs(w.xi))
    return plane_wave_sup(PlaneWaveSum(w.amp * mult, w.xi, w.eta),
                          n=(17, 17))


def schauder_report(cfg, beta, gamma, js=range(2, 7), t=None):
    """
    Block decay of the Duhamel solution against the source norms.

    ``s_j(u) 2^{(alpha+beta) j} / ||f||_{B^beta_a}`` over anisotropic rings and
    ``s^x_j(u) 2^{(gamma+alpha) j/(1+alpha)} / ||f||_{B^{gamma/(1+alpha)}_x}``
    over position rings, both at time ``t`` (default the horizon).
    """
    t = cfg.T if t is None else t
    a = cfg.alpha
    js = np.array(list(js))
    u = duhamel_solve(cfg).waves(t)
    f = cfg.source
    s_u = np.array([_block_sup(u, j, a, "aniso") for j in js])
    sx_u = np.array([_block_sup(u, j, a, "x") for j in js])
    jall = range(0, int(max(js)) + 8)
    gnorm = max(abs(cfg.g(s)) for s in np.linspace(0.0, cfg.T, 257))
    fa = max(2.0 ** (beta * j) * _block_sup(f, j, a, "aniso") for j in jall) * gnorm
    fx = max(2.0 ** (gamma / (1 + a) * j) * _block_sup(f, j, a, "x") for j in jall) * gnorm
    fit_a = fit_slope(js, s_u)
    fit_x = fit_slope(js, sx_u) if np.all(sx_u > 0) else None
    ra = s_u * 2.0 ** ((a + beta) * js) / fa
    rx = sx_u * 2.0 ** ((gamma + a) * js / (1 + a)) / fx if fx > 0 else np.full(len(js), np.nan)
    return SchauderReport(fit_a, fit_x, ra, rx, fa, fx)
