"""
Heat kernels and the nonlocal velocity operator.

Gaussian kernels with a time-dependent covariance, the characteristic
function of the kinetic alpha-stable pair ``(int L dr, L)``, its density on a
grid, the shear ``Gamma f(x, v) = f(x + Pi v, v)`` and the operator

    L u(v) = int (u(v + w) + u(v - w) - 2 u(v)) kappa(w) dw / |w|^(d + alpha)

evaluated by quadrature in ``w``.

Grid fields in this module are two-dimensional with position on axis 0 and
velocity on axis 1, one dimension per group.
"""
from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np
from scipy import integrate, special
import scipy.fft as _fft

from .lp_core import Field, GridSpec, fft_workers

__all__ = [
    "GaussianSpec", "KineticKernelSpec", "LevyOpSpec", "gaussian_kernel",
    "symbol_constant", "symbol_constant_closed", "kinetic_cf", "kernel_from_cf",
    "gamma_shift", "apply_levy_op", "levy_multiplier", "moment_integral",
    "kinetic_covariance_alpha2", "scaled_kernel_grid",
]


# ----------------------------------------------------------------------------
# Gaussian kernel

@dataclass
class GaussianSpec:
    """
    Piecewise-constant coefficient path ``a(t)`` and a time window ``s < t``.

    ``times`` are the left ends of the pieces (the first must be ``<= s``);
    ``mats[k]`` holds the coefficient matrix on ``[times[k], times[k+1])``.
    """
    times: np.ndarray
    mats: np.ndarray
    s: float = 0.0
    t: float = 1.0
    c0: float = None

    def __post_init__(self):
        self.times = np.atleast_1d(np.asarray(self.times, dtype=float))
        mats = np.asarray(self.mats, dtype=float)
        if mats.ndim == 0:
            mats = mats.reshape(1, 1, 1)
        elif mats.ndim == 2:
            mats = mats[None]
        self.mats = mats
        if len(self.times) != len(self.mats):
            raise ValueError("one coefficient matrix per piece is required")
        if self.times[0] > self.s:
            raise ValueError("coefficient table starts after s")
        for m in self.mats:
            if not np.allclose(m, m.T):
                raise ValueError("coefficient matrices must be symmetric")
        ev = np.concatenate([np.linalg.eigvalsh(m) for m in self.mats])
        c0 = max(ev.max(), 1.0 / ev.min()) if ev.min() > 0 else np.inf
        if self.c0 is not None and c0 > self.c0:
            raise ValueError("ellipticity bound c0 = %g violated (needs %g)" % (self.c0, c0))
        self.c0 = c0

    @classmethod
    def constant(cls, a, s=0.0, t=1.0):
        a = np.atleast_2d(np.asarray(a, dtype=float))
        return cls(np.array([min(s, 0.0)]), a[None], s, t)

    @property
    def dim(self):
        return self.mats.shape[1]

    def covariance(self, s=None, t=None):
        """``A_{s,t} = int_s^t a(r) dr`` (exact for the piecewise table)."""
        s = self.s if s is None else s
        t = self.t if t is None else t
        ends = np.append(self.times[1:], np.inf)
        lo = np.clip(self.times, s, t)
        hi = np.clip(ends, s, t)
        return np.einsum("k,kij->ij", hi - lo, self.mats)


def gaussian_kernel(spec, x):
    """
    Centered Gaussian density with covariance ``A_{s,t}``.

    The normalizer is ``(2 pi)^(d/2) sqrt(det A)``.
    """
    if spec.t <= spec.s:
        raise ValueError("need t > s")
    A = spec.covariance()
    det = np.linalg.det(A)
    if not det > 0:
        raise ValueError("covariance is singular")
    x = np.asarray(x, dtype=float)
    d = spec.dim
    if d == 1 and (x.ndim == 0 or x.shape[-1] != 1):
        x = x[..., None]
    Ainv = np.linalg.inv(A)
    q = np.einsum("...i,ij,...j->...", x, Ainv, x)
    return np.exp(-q / 2) / ((2 * np.pi) ** (d / 2) * np.sqrt(det))


# ----------------------------------------------------------------------------
# Symbol constant

def symbol_constant_closed(alpha, d=1):
    """
    Closed form of ``c`` in ``int (2 cos(eta.w) - 2) dw / |w|^(d+alpha) = -c |eta|^alpha``.
    """
    if not 0 < alpha < 2:
        raise ValueError("alpha must lie in (0, 2)")
    return (np.pi ** (d / 2) * special.gamma(1 - alpha / 2) * 2.0 ** (2 - alpha)
            / (alpha * special.gamma((d + alpha) / 2)))


@lru_cache(maxsize=None)
def symbol_constant(alpha, d=1):
    """
    Symbol constant ``c_alpha`` of the jump kernel ``dw / |w|^(d+alpha)``.

    In ``d = 1`` it is calibrated once by quadrature of the operator on the
    plane wave ``cos(v)``; other dimensions use the closed form. For
    ``alpha = 2`` the value 1 is returned, so that ``kappa0 = 1`` gives the
    velocity Laplacian.
    """
    alpha = float(alpha)
    if alpha == 2.0:
        return 1.0
    if d != 1:
        return float(symbol_constant_closed(alpha, d))
    return float(-levy_multiplier(np.array([1.0]), alpha)[0])


# ----------------------------------------------------------------------------
# Nonlocal operator

def _const_one(*args):
    return 1.0


@dataclass
class LevyOpSpec:
    """
    Jump kernel ``kappa(t, x, v, w)`` of the velocity operator.

    ``state_dependent=False`` declares ``kappa`` a function of ``w`` only
    (called as ``kappa(w)``); the operator is then an exact Fourier
    multiplier. ``w_range`` restricts the jump sizes, e.g. ``(1, inf)`` for the
    large-jump part.
    """
    alpha: float
    kappa: object = _const_one
    state_dependent: bool = False
    r_inner: float = 1e-2
    r_outer: float = 64.0
    n_inner: int = 16
    n_middle: int = 4096
    w_range: tuple = (0.0, np.inf)
    t: float = 0.0
    c0: float = None

    def kappa_w(self, w):
        return np.broadcast_to(np.asarray(self.kappa(w), dtype=float), np.shape(w))


def _w_only_piece(eta, alpha, kappa, a, b):
    """``int_a^b (cos(eta w) - 1) kappa(w) w^(-1-alpha) dw`` for one ``eta > 0``."""
    opts = dict(limit=800, epsabs=1e-15, epsrel=1e-13)
    total, err = 0.0, 0.0
    if a < 1.0:
        hi = min(b, 1.0)
        # -2 sin^2(eta w / 2) / w^2 is smooth; w^(1-alpha) goes into the weight
        g = lambda w: -0.5 * eta ** 2 * np.sinc(eta * w / (2 * np.pi)) ** 2 * kappa(w)
        if a == 0.0:
            val, e = integrate.quad(g, 0.0, hi, weight="alg", wvar=(1 - alpha, 0.0), **opts)
        else:
            val, e = integrate.quad(lambda w: g(w) * w ** (1 - alpha), a, hi, **opts)
        total, err = total + val, err + e
        a = hi
    if b > a:
        h = lambda w: kappa(w) * w ** (-1 - alpha)
        if np.isinf(b):
            val, e = integrate.quad(h, a, b, weight="cos", wvar=eta, limlst=400)
        else:
            val, e = integrate.quad(h, a, b, weight="cos", wvar=eta, limit=800)
        val2, e2 = integrate.quad(h, a, b, **opts)
        total, err = total + val - val2, err + e + e2
    return total, err


def levy_multiplier(eta, alpha, kappa=None, w_range=(0.0, np.inf), return_error=False):
    """
    Fourier symbol of the velocity operator for a jump kernel ``kappa(w)``.

    ``m(eta) = 2 int_{w_range} (2 cos(eta w) - 2) kappa(w) w^(-1-alpha) dw``
    in one dimension (the factor 2 collects ``w`` and ``-w``).
    """
    kappa = _const_one if kappa is None else kappa
    kap = lambda w: float(np.asarray(kappa(w)))
    eta = np.abs(np.asarray(eta, dtype=float))
    flat = eta.reshape(-1)
    uniq, inv = np.unique(flat, return_inverse=True)
    vals = np.empty(len(uniq))
    errs = np.empty(len(uniq))
    a, b = w_range
    for i, e in enumerate(uniq):
        if e == 0.0:
            vals[i], errs[i] = 0.0, 0.0
            continue
        v, er = _w_only_piece(e, alpha, kap, a, b)
        vals[i], errs[i] = 4.0 * v, 4.0 * er
    out = vals[inv].reshape(eta.shape)
    if return_error:
        return out, errs[inv].reshape(eta.shape)
    return out


def _shifted_second_difference(uhat, eta, w, axis):
    shape = [1] * uhat.ndim
    shape[axis] = -1
    mult = (2 * np.cos(eta * w) - 2).reshape(shape)
    return _fft.ifft(mult * uhat, axis=axis, workers=fft_workers()).real


def apply_levy_op(f, spec, axis=-1, return_error=False):
    """
    Apply the nonlocal velocity operator to a band-limited field.

    Jumps act along ``axis`` (default: last axis). For a ``w``-only kernel the
    operator is applied as its exact Fourier symbol (adaptive quadrature in
    ``w`` per frequency). For a state-dependent kernel the ``w``-integral is
    split into

    * ``[0, r_inner]``: fourth-order Taylor expansion of the second difference,
      Gauss-Jacobi nodes for the weight ``w^(1-alpha)``;
    * ``[r_inner, r_outer]``: log-spaced Gauss-Legendre nodes, each node a
      spectral shift;
    * ``[r_outer, inf)``: kernel frozen at ``r_outer``; the ``-2u`` part is
      integrated exactly, the oscillating part by the symbol of the frozen tail.

    Returns
    -------
    Field, and the error estimate when ``return_error`` is true.
    """
    grid = f.grid
    axis = axis % grid.ndim
    alpha = spec.alpha
    eta = grid.freq(axis)
    uhat = _fft.fft(f.values, axis=axis, workers=fft_workers())
    shape = [1] * grid.ndim
    shape[axis] = -1
    if not spec.state_dependent:
        m, err = levy_multiplier(eta, alpha, spec.kappa_w, spec.w_range, return_error=True)
        out = _fft.ifft(m.reshape(shape) * uhat, axis=axis, workers=fft_workers()).real
        est = float(np.sum(np.abs(err) * np.abs(uhat).max(axis=tuple(
            i for i in range(grid.ndim) if i != axis)) / grid.npoints[axis]))
        res = Field(grid, out)
        return (res, est) if return_error else res

    mesh = grid.mesh()
    lo, hi = spec.w_range
    r_in, r_out = max(spec.r_inner, lo), spec.r_outer
    kap = lambda w: np.asarray(spec.kappa(spec.t, *mesh, w), dtype=float)
    acc = np.zeros(grid.shape)
    est = 0.0
    if lo < spec.r_inner:
        # Taylor part: second difference ~ u'' w^2 + u'''' w^4 / 12
        k2 = (-(eta ** 2)).reshape(shape)
        k4 = (eta ** 4).reshape(shape)
        u2 = _fft.ifft(k2 * uhat, axis=axis).real
        u4 = _fft.ifft(k4 * uhat, axis=axis).real
        x, wt = special.roots_jacobi(spec.n_inner, 0.0, 1.0 - alpha)
        w = r_in * (1 + x) / 2
        wt = wt * (r_in / 2) ** (2 - alpha)  # int_0^r g(w) w^(1-alpha) dw
        for wi, ci in zip(w, wt):
            acc += 2 * ci * kap(wi) * (u2 + u4 * wi ** 2 / 12)
        u6 = np.abs(_fft.ifft((eta ** 6).reshape(shape) * uhat, axis=axis).real).max()
        est += 2 * (spec.c0 or 1.0) * u6 * r_in ** (6 - alpha) / (360 * (6 - alpha))
    a = max(lo, r_in)
    b = min(hi, r_out)
    if b > a:
        x, wt = np.polynomial.legendre.leggauss(16)
        npan = max(1, spec.n_middle // 16)
        edges = np.geomspace(a, b, npan + 1)
        for p in range(npan):
            s0, s1 = np.log(edges[p]), np.log(edges[p + 1])
            ss = (s1 - s0) / 2 * x + (s1 + s0) / 2
            ww = np.exp(ss)
            cc = wt * (s1 - s0) / 2 * ww ** (-alpha)  # dw/w^(1+alpha) = e^{-alpha s} ds
            for wi, ci in zip(ww, cc):
                acc += 2 * ci * kap(wi) * _shifted_second_difference(uhat, eta, wi, axis)
    if hi > r_out:
        kt = kap(r_out)
        tail = levy_multiplier(eta, alpha, None, (r_out, hi))
        tail_u = _fft.ifft(tail.reshape(shape) * uhat, axis=axis).real
        acc += kt * tail_u
        est += 4 * float(np.abs(f.values).max()) * (spec.c0 or 1.0) * r_out ** (-alpha) / alpha * 1e-3
    res = Field(grid, acc)
    return (res, est) if return_error else res


# ----------------------------------------------------------------------------
# Kinetic kernel

@dataclass
class KineticKernelSpec:
    """
    Frozen coefficients of the kinetic stable semigroup.

    ``kappa0`` and ``U`` are constants or callables of time; ``lam`` is the
    damping rate.
    """
    alpha: float
    kappa0: object = 1.0
    U: object = 1.0
    s: float = 0.0
    t: float = 1.0
    lam: float = 0.0
    c0: float = None

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if self.lam < 0:
            raise ValueError("damping must be nonnegative")
        if self.is_constant:
            k = float(self.kappa0)
            if k <= 0:
                raise ValueError("kappa0 must be positive")
            if self.c0 is not None and not (1 / self.c0 <= k <= self.c0):
                raise ValueError("kappa0 outside [1/c0, c0]")

    @classmethod
    def laplacian(cls, alpha, **kw):
        """``kappa0 = 1/c_alpha``: the generator is minus the fractional Laplacian."""
        return cls(alpha, kappa0=1.0 / symbol_constant(alpha), **kw)

    @property
    def is_constant(self):
        return not callable(self.kappa0) and not callable(self.U)

    @property
    def symbol_scale(self):
        """``c_alpha kappa0`` for constant coefficients."""
        return symbol_constant(self.alpha) * float(self.kappa0)

    def Pi(self, r, t=None):
        """``Pi_{r,t} = int_r^t U``."""
        t = self.t if t is None else t
        if not callable(self.U):
            return np.asarray(self.U, dtype=float) * (t - r)
        return integrate.quad_vec(lambda q: np.asarray(self.U(q), dtype=float), r, t)[0]

    def c1(self):
        """Constant ``sup|U| + sup (t-s) |Pi_{s,t}^{-1}|`` (constant ``U``)."""
        U = np.atleast_2d(np.asarray(self.U, dtype=float))
        return float(np.linalg.norm(U, 2) + np.linalg.norm(np.linalg.inv(U), 2))

    def with_times(self, s, t):
        return KineticKernelSpec(self.alpha, self.kappa0, self.U, s, t, self.lam, self.c0)


def _power_integral(eta, xi, tau, alpha):
    """``int_0^tau |eta + u xi|^alpha du``, exact, vectorized."""
    eta, xi = np.broadcast_arrays(np.asarray(eta, dtype=float), np.asarray(xi, dtype=float))
    out = np.empty(eta.shape)
    small = np.abs(xi) * tau <= 1e-8 * np.maximum(np.abs(eta), 1e-300)
    zero = xi == 0
    sel = zero | small
    F = lambda y: np.abs(y) ** alpha * y / (1 + alpha)
    with np.errstate(divide="ignore", invalid="ignore"):
        out[~sel] = (F(eta[~sel] + tau * xi[~sel]) - F(eta[~sel])) / xi[~sel]
    # Taylor in xi for tiny shears
    e, x = eta[sel], xi[sel]
    out[sel] = tau * np.abs(e) ** alpha + alpha * np.abs(e) ** (alpha - 1) * np.sign(e) * x * tau ** 2 / 2
    return out


def _adaptive_simpson(g, a, b, tol, depth=40):
    fa, fm, fb = g(a), g((a + b) / 2), g(b)

    def rec(a, b, fa, fm, fb, whole, tol, depth):
        m = (a + b) / 2
        lm, rm = (a + m) / 2, (m + b) / 2
        flm, frm = g(lm), g(rm)
        left = (m - a) / 6 * (fa + 4 * flm + fm)
        right = (b - m) / 6 * (fm + 4 * frm + fb)
        if depth <= 0 or abs(left + right - whole) <= 15 * tol:
            return left + right + (left + right - whole) / 15
        return (rec(a, m, fa, flm, fm, left, tol / 2, depth - 1)
                + rec(m, b, fm, frm, fb, right, tol / 2, depth - 1))

    return rec(a, b, fa, fm, fb, (b - a) / 6 * (fa + 4 * fm + fb), tol, depth)


def kinetic_cf(spec, xi, eta, tol=1e-10):
    """
    Characteristic function of the kinetic pair at frequencies ``(xi, eta)``.

    ``exp(-c_alpha int_s^t kappa0(r) |eta + Pi_{r,t} xi|^alpha dr)`` with one
    position and one velocity dimension. Constant coefficients use the exact
    antiderivative; otherwise the time integral is computed pointwise by
    adaptive Simpson quadrature with tolerance ``tol``.
    """
    tau = spec.t - spec.s
    if tau <= 0:
        raise ValueError("need t > s")
    if np.size(spec.U) != 1 and not callable(spec.U):
        raise ValueError("kinetic_cf supports one velocity dimension")
    c = symbol_constant(spec.alpha)
    xi, eta = np.broadcast_arrays(np.asarray(xi, dtype=float), np.asarray(eta, dtype=float))
    if spec.is_constant:
        U = float(np.asarray(spec.U).reshape(-1)[0])
        return np.exp(-c * float(spec.kappa0) * _power_integral(eta, U * xi, tau, spec.alpha))
    kap = spec.kappa0 if callable(spec.kappa0) else (lambda r: float(spec.kappa0))
    out = np.empty(xi.shape)
    for k in np.ndindex(xi.shape):
        x0, e0 = xi[k], eta[k]
        g = lambda r: kap(r) * abs(e0 + float(np.asarray(spec.Pi(r)).reshape(-1)[0]) * x0) ** spec.alpha
        out[k] = np.exp(-c * _adaptive_simpson(g, spec.s, spec.t, tol))
    return out


def kinetic_covariance_alpha2(t, s=0.0):
    """Covariance of ``(int V, V)`` for ``dV = sqrt(2) dW`` over ``[s, t]``."""
    tau = t - s
    return np.array([[2 * tau ** 3 / 3, tau ** 2], [tau ** 2, 2 * tau]])


def _cf_grid(spec, grid):
    xi, eta = grid.freq_mesh()
    return kinetic_cf(spec, xi, eta)


def kernel_from_cf(spec, grid, tol=1e-8, check=True, return_spectrum=False):
    """
    Kinetic kernel ``e^{lam(s-t)} p_{s,t}`` on a two-axis grid.

    The periodized density is obtained by an inverse FFT of the
    characteristic function. With ``check`` the grid must resolve the
    spectrum: ``|cf| <= tol`` on the outer frequency frame.
    """
    if grid.ndim != 2:
        raise ValueError("kinetic kernels live on (x, v) grids")
    pc = _cf_grid(spec, grid)
    if check:
        edge = max(np.abs(pc[grid.npoints[0] // 2, :]).max(),
                   np.abs(pc[:, grid.npoints[1] // 2]).max())
        if edge > tol:
            need = _required_points(spec, grid, tol)
            raise ValueError("kernel spectrum not resolved (|cf| = %.2e at Nyquist); "
                             "use at least N = %s" % (edge, need))
    damp = np.exp(spec.lam * (spec.s - spec.t))
    spec_vals = pc * damp
    pv = _to_space(spec_vals, grid)
    f = Field(grid, pv)
    return (f, spec_vals) if return_spectrum else f


def _required_points(spec, grid, tol):
    # the frame maximum sits off the axes, so scan the whole edge row
    need = []
    for ax in range(2):
        k = grid.nyquist(ax)
        other = grid.freq(1 - ax)
        while True:
            edge = kinetic_cf(spec, k, other) if ax == 0 else kinetic_cf(spec, other, k)
            if np.abs(edge).max() <= tol or k > 1e7:
                break
            k *= 2
        n = int(2 ** np.ceil(np.log2(k * 2 * grid.half_width[ax] / np.pi)))
        need.append(max(n, grid.npoints[ax]))
    return tuple(need)


def _to_space(spec_vals, grid):
    # physical samples from continuous-transform values at the grid frequencies
    ph = 1.0
    for ax in range(grid.ndim):
        k = grid.freq(ax)
        sh = [1] * grid.ndim
        sh[ax] = -1
        ph = ph * np.exp(-1j * k * grid.half_width[ax]).reshape(sh)
    vals = _fft.ifftn(spec_vals * ph, workers=fft_workers())
    return vals.real / grid.cell_volume


def gamma_shift(f, Pi, inverse=False):
    """
    Shear ``Gamma f(x, v) = f(x + Pi v, v)`` (position axis 0, velocity axis 1).

    Applied as the modulation ``e^{i xi Pi v}`` of the position spectrum, exact
    for fields band-limited in ``x``.
    """
    Pi = float(np.asarray(Pi).reshape(-1)[0]) * (-1.0 if inverse else 1.0)
    grid = f.grid
    xi = grid.freq(0)[:, None]
    v = grid.axis(1)[None, :]
    fx = _fft.fft(f.values, axis=0, workers=fft_workers())
    nyq = np.zeros(grid.npoints[0], dtype=bool)
    nyq[grid.npoints[0] // 2] = True
    mod = np.where(nyq[:, None], np.cos(xi * Pi * v), np.exp(1j * xi * Pi * v))
    return Field(grid, _fft.ifft(fx * mod, axis=0, workers=fft_workers()).real)


# ----------------------------------------------------------------------------
# Moments

def scaled_kernel_grid(alpha, tau, base=((64.0, 2048), (64.0, 1024))):
    """
    Grid adapted to the kernel at time lag ``tau``: position half-width
    ``Lx tau^(1+1/alpha)``, velocity half-width ``Lv tau^(1/alpha)``.
    """
    (Lx, Nx), (Lv, Nv) = base
    return GridSpec((Lx * tau ** (1 + 1 / alpha), Lv * tau ** (1 / alpha)), (Nx, Nv), (0, 1))


def moment_integral(spec, beta, gamma, n=0, m=0, grid=None, check=True):
    """
    ``int |x|^beta |v|^gamma |d_x^n d_v^m p_{s,t}| dx dv`` by grid quadrature.

    Derivatives are spectral. Without a grid the kernel-adapted grid of
    ``scaled_kernel_grid`` is used.
    """
    if beta < 0 or gamma < 0:
        raise ValueError("moment exponents must be nonnegative")
    if spec.alpha < 2 and beta + gamma >= spec.alpha:
        raise ValueError("beta + gamma = %g >= alpha: moment diverges" % (beta + gamma))
    if n > 2 or m > 2:
        raise ValueError("derivative orders above 2 are not supported")
    tau = spec.t - spec.s
    if grid is None:
        grid = scaled_kernel_grid(spec.alpha, tau)
    _, pc = kernel_from_cf(spec, grid, check=check, return_spectrum=True)
    xi, eta = grid.freq_mesh()
    mult = (1j * xi) ** n * (1j * eta) ** m
    vals = _to_space(pc * mult, grid)
    X, V = grid.mesh()
    w = np.abs(X) ** beta * np.abs(V) ** gamma
    return float(np.sum(w * np.abs(vals)) * grid.cell_volume)
