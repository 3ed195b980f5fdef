"""
Anisotropic Littlewood-Paley calculus on a periodic grid.

The frequency plane is cut into dyadic rings of the anisotropic distance
``|xi|_a = sum_i |xi_i|^(1/a_i)``. Every ring operator is a Fourier multiplier
applied with the discrete Fourier transform, so all identities between blocks
hold to rounding error on band-limited data.

Conventions
-----------
Frequencies are angular (``xi = 2*pi*k / (2L)``). The unitary normalization of
the Fourier transform is used throughout; block operators, paraproducts and
norms are invariant under the choice of normalization.
"""
import os
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.fft as _fft

__all__ = [
    "AnisotropyIndex", "GridSpec", "DyadicPartition", "Field", "BlockSpectrum",
    "anisotropic_distance", "transition", "build_partition", "block_apply",
    "low_freq_cutoff", "besov_norm", "zygmund_norm", "default_hset",
    "difference_op", "bony_decompose", "spectral_derivative", "fft_workers",
    "ring_multiplier", "kinetic_rho", "kinetic_ring", "low_pass",
    "ring_function", "PlaneWaveSum", "block_profile",
]


def fft_workers():
    """Thread count for FFTs, capped by ``LPKINETIC_THREADS`` (default 1)."""
    try:
        return max(1, int(os.environ.get("LPKINETIC_THREADS", "1")))
    except ValueError:
        return 1


@dataclass(frozen=True)
class AnisotropyIndex:
    """Group dimensions ``m`` and scaling exponents ``a`` of the geometry."""
    m: tuple
    a: tuple

    def __post_init__(self):
        m = tuple(int(k) for k in self.m)
        a = tuple(float(s) for s in self.a)
        if len(m) != len(a) or len(m) == 0:
            raise ValueError("m and a must have the same positive length")
        if any(k < 1 for k in m):
            raise ValueError("group dimensions must be >= 1")
        if any(s < 1 for s in a):
            raise ValueError("scaling exponents must be >= 1")
        object.__setattr__(self, "m", m)
        object.__setattr__(self, "a", a)

    @classmethod
    def kinetic(cls, alpha, d=1):
        """Position/velocity index ``m=(d,d)``, ``a=(1+alpha,1)``."""
        return cls((d, d), (1.0 + alpha, 1.0))

    @classmethod
    def isotropic(cls, d=1):
        return cls((d,), (1.0,))

    @property
    def n(self):
        return len(self.m)

    @property
    def dim(self):
        return sum(self.m)

    def group_slices(self):
        out, start = [], 0
        for k in self.m:
            out.append(slice(start, start + k))
            start += k
        return out

    def scale(self, x, t):
        """Return ``t^a x`` for points stored along the last axis."""
        x = np.asarray(x, dtype=float)
        y = np.array(x, copy=True)
        for sl, s in zip(self.group_slices(), self.a):
            y[..., sl] *= t ** s
        return y


def anisotropic_distance(x, idx):
    """
    Anisotropic distance ``|x|_a = sum_i |x_i|^(1/a_i)``.

    Parameters
    ----------
    x : array_like
        Point(s) with the coordinates along the last axis.
    idx : AnisotropyIndex

    Returns
    -------
    float or ndarray
    """
    x = np.asarray(x, dtype=float)
    if x.shape[-1] != idx.dim:
        raise ValueError("point has dimension %d, index expects %d"
                         % (x.shape[-1], idx.dim))
    total = 0.0
    for sl, s in zip(idx.group_slices(), idx.a):
        total = total + np.linalg.norm(x[..., sl], axis=-1) ** (1.0 / s)
    return total


@dataclass(frozen=True)
class GridSpec:
    """
    Periodic grid ``[-L, L)`` per axis with ``N`` points per axis.

    ``groups[i]`` names the anisotropy group of axis ``i``.
    """
    half_width: tuple
    npoints: tuple
    groups: tuple = None

    def __post_init__(self):
        L = tuple(float(v) for v in np.atleast_1d(self.half_width))
        N = tuple(int(v) for v in np.atleast_1d(self.npoints))
        if len(L) != len(N):
            raise ValueError("half_width and npoints differ in length")
        for n in N:
            if n < 2 or n & (n - 1):
                raise ValueError("points per axis must be a power of two, got %d" % n)
        g = tuple(range(len(N))) if self.groups is None else tuple(int(v) for v in self.groups)
        if len(g) != len(N):
            raise ValueError("one group label per axis is required")
        object.__setattr__(self, "half_width", L)
        object.__setattr__(self, "npoints", N)
        object.__setattr__(self, "groups", g)

    @property
    def ndim(self):
        return len(self.npoints)

    @property
    def shape(self):
        return self.npoints

    @property
    def spacing(self):
        return tuple(2 * L / N for L, N in zip(self.half_width, self.npoints))

    @property
    def cell_volume(self):
        return float(np.prod(self.spacing))

    def axis(self, i):
        L, N = self.half_width[i], self.npoints[i]
        return -L + 2 * L / N * np.arange(N)

    def axes(self):
        return [self.axis(i) for i in range(self.ndim)]

    def mesh(self):
        return np.meshgrid(*self.axes(), indexing="ij")

    def freq(self, i):
        return 2 * np.pi * np.fft.fftfreq(self.npoints[i], d=self.spacing[i])

    def freqs(self):
        return [self.freq(i) for i in range(self.ndim)]

    def freq_mesh(self):
        return np.meshgrid(*self.freqs(), indexing="ij")

    def nyquist(self, i):
        return np.pi / self.spacing[i]


class Field:
    """
    Real samples of a function on a periodic grid.

    The discrete Fourier transform is computed on first use and cached.
    """

    def __init__(self, grid, values):
        values = np.asarray(values, dtype=float)
        if values.shape != tuple(grid.shape):
            raise ValueError("values shape %s does not match grid %s"
                             % (values.shape, grid.shape))
        if not np.all(np.isfinite(values)):
            raise ValueError("field values must be finite")
        self.grid = grid
        self.values = values
        self.values.setflags(write=False)

    @cached_property
    def spectrum(self):
        return _fft.fftn(self.values, workers=fft_workers())

    @classmethod
    def from_spectrum(cls, grid, spec):
        vals = _fft.ifftn(spec, workers=fft_workers()).real
        return cls(grid, vals)

    @classmethod
    def from_function(cls, grid, func):
        return cls(grid, func(*grid.mesh()))

    def sup(self):
        return float(np.max(np.abs(self.values)))

    def inner(self, other):
        return float(np.sum(self.values * other.values) * self.grid.cell_volume)

    def l2(self):
        return float(np.sqrt(self.inner(self)))

    def __add__(self, other):
        return Field(self.grid, self.values + _vals(other))

    def __sub__(self, other):
        return Field(self.grid, self.values - _vals(other))

    def __mul__(self, other):
        return Field(self.grid, self.values * _vals(other))

    __rmul__ = __mul__


def _vals(obj):
    return obj.values if isinstance(obj, Field) else obj


def _glue(x):
    out = np.zeros_like(x, dtype=float)
    pos = x > 0
    out[pos] = np.exp(-1.0 / x[pos])
    return out


def transition(r):
    """Smooth cut-off: 1 on ``[0, 1]``, 0 on ``[2, inf)``, C-infinity in between."""
    r = np.asarray(r, dtype=float)
    up, down = _glue(2.0 - r), _glue(r - 1.0)
    return up / (up + down)


# Share of the unit band given up to smoothing each group norm at the origin
# when two or more groups are active; the shares sum to 1/2.
_SMOOTH_SHARE = {2: (0.35, 0.15)}


def _smoothing_shares(n):
    if n in _SMOOTH_SHARE:
        return _SMOOTH_SHARE[n]
    return (0.5 / n,) * n


def low_pass(k, norms, a):
    """
    Multiplier ``phi_0(2^{-a k} xi)`` from per-group Euclidean norms.

    ``norms[g]`` holds ``|xi_g|`` and ``a[g]`` its exponent. With one group the
    bump is ``transition(|xi|_a)``. With several groups each ``|xi_g|^{1/a_g}``
    is replaced by the smooth lower bound
    ``(|xi_g|^2 + d_g^2)^{1/(2 a_g)} - d_g^{1/a_g}`` which loses at most
    ``d_g^{1/a_g}``; the losses sum to 1/2 and the transition is compressed to
    ``[1, 3/2]``, so the bump is still 1 on the unit ball and 0 outside the
    ball of radius 2 while being C-infinity across the coordinate axes.
    """
    if len(norms) == 1:
        return transition(2.0 ** (-k) * np.asarray(norms[0]) ** (1.0 / a[0]))
    shares = _smoothing_shares(len(norms))
    rho = 0.0
    for r, ag, m in zip(norms, a, shares):
        d = m ** ag
        sr = 2.0 ** (-ag * k) * np.asarray(r, dtype=float)
        rho = rho + (sr * sr + d * d) ** (0.5 / ag) - m
    return transition(1.0 + 2.0 * (rho - 1.0))


def ring_function(j, norms, a):
    """Ring function ``phi_j`` from per-group norms (see :func:`low_pass`)."""
    if j == 0:
        return low_pass(0, norms, a)
    return low_pass(j, norms, a) - low_pass(j - 1, norms, a)


@dataclass
class DyadicPartition:
    """
    Dyadic anisotropic partition of unity sampled on the frequency grid.

    ``norms`` holds the Euclidean norm of each active group and ``expo`` its
    exponent; ``rho`` is ``|xi|_a`` over the active groups. ``phi(j)`` returns
    the ring multiplier and ``low(k)`` the multiplier ``phi_0(2^{-a k} xi)``.
    """
    idx: AnisotropyIndex
    grid: GridSpec
    jmax: int
    norms: tuple = field(repr=False)
    expo: tuple = ()

    @cached_property
    def rho(self):
        return sum(r ** (1.0 / a) for r, a in zip(self.norms, self.expo))

    def low(self, k):
        return low_pass(k, self.norms, self.expo)

    def phi(self, j):
        if j < 0 or j > self.jmax:
            raise IndexError("block index %d outside [0, %d]" % (j, self.jmax))
        if j == 0:
            return self.low(0)
        return self.low(j) - self.low(j - 1)

    @cached_property
    def rings(self):
        return np.stack([self.phi(j) for j in range(self.jmax + 1)])


def build_partition(idx, grid, jmax, active=None, check=True):
    """
    Build the dyadic partition of an anisotropic index on a grid.

    Parameters
    ----------
    idx : AnisotropyIndex
    grid : GridSpec
        ``grid.groups[i]`` maps axis ``i`` to a group of ``idx``.
    jmax : int
        Highest ring.
    active : sequence of int, optional
        Groups entering the distance. ``active=(0,)`` on a kinetic index gives
        the position-only blocks.
    check : bool
        Reject grids that do not resolve ring ``jmax`` along every active axis.
    """
    if jmax < 0:
        raise ValueError("jmax must be nonnegative")
    groups = tuple(range(idx.n)) if active is None else tuple(active)
    counts = [grid.groups.count(g) for g in range(idx.n)]
    if tuple(counts) != idx.m:
        raise ValueError("grid axis groups %s do not match group dimensions %s"
                         % (grid.groups, idx.m))
    if check:
        for i, g in enumerate(grid.groups):
            if g in groups:
                resolved = grid.nyquist(i) ** (1.0 / idx.a[g])
                if resolved < 2.0 ** (jmax + 1):
                    raise ValueError(
                        "axis %d resolves |xi|_a up to %.4g < 2^(jmax+1) = %g; "
                        "increase N or lower jmax" % (i, resolved, 2.0 ** (jmax + 1)))
    kmesh = grid.freq_mesh()
    norms = []
    for g in groups:
        sq = sum(kmesh[i] ** 2 for i in range(grid.ndim) if grid.groups[i] == g)
        norms.append(np.sqrt(sq) * np.ones(grid.shape))
    return DyadicPartition(idx, grid, jmax, tuple(norms),
                           tuple(idx.a[g] for g in groups))


def block_apply(f, j, partition):
    """Ring operator ``R_j f = (phi_j * f^)^v``."""
    return Field.from_spectrum(f.grid, partition.phi(j) * f.spectrum)


def low_freq_cutoff(f, k, partition):
    """Low-frequency cut-off ``S_k f = sum_{j<k} R_j f``."""
    if k < 0 or k > partition.jmax + 1:
        raise IndexError("cut-off index %d outside [0, %d]" % (k, partition.jmax + 1))
    if k == 0:
        return Field(f.grid, np.zeros(f.grid.shape))
    return Field.from_spectrum(f.grid, partition.low(k - 1) * f.spectrum)


@dataclass
class BlockSpectrum:
    """Grid sup-norms ``s_j = max |R_j f|`` for ``j = 0..jmax``."""
    sups: np.ndarray

    def log2(self, floor=1e-300):
        return np.log2(np.maximum(self.sups, floor))


def block_profile(f, partition):
    sups = np.empty(partition.jmax + 1)
    for j in range(partition.jmax + 1):
        sups[j] = block_apply(f, j, partition).sup()
    return BlockSpectrum(sups)


def besov_norm(f, s, partition, profile=None):
    """
    Besov norm ``sup_j 2^{s j} ||R_j f||_inf`` and the block profile.

    Returns
    -------
    norm : float
    profile : BlockSpectrum
    """
    if profile is None:
        profile = block_profile(f, partition)
    j = np.arange(partition.jmax + 1)
    return float(np.max(2.0 ** (s * j) * profile.sups)), profile


def _cells(grid, h):
    h = np.asarray(h, dtype=float).reshape(-1)
    if h.size != grid.ndim:
        raise ValueError("displacement has %d components, grid has %d axes"
                         % (h.size, grid.ndim))
    c = h / np.asarray(grid.spacing)
    ci = np.rint(c)
    if np.any(np.abs(c - ci) > 1e-9 * np.maximum(1.0, np.abs(c))):
        raise ValueError("displacement %s is not a whole number of cells" % (h,))
    return ci.astype(int)


def _shift(vals, cells, sign=1):
    # value at x + sign*h
    return np.roll(vals, tuple(-sign * c for c in cells), axis=tuple(range(vals.ndim)))


def difference_op(f, h, order=1, symmetric=False):
    """
    Periodic finite differences.

    ``order`` applications of ``delta_h f = f(. + h) - f``; with
    ``symmetric=True`` the second difference ``f(x+h) + f(x-h) - 2 f(x)`` is
    returned instead.
    """
    cells = _cells(f.grid, h)
    v = f.values
    if symmetric:
        return Field(f.grid, _shift(v, cells) + _shift(v, cells, -1) - 2 * v)
    for _ in range(order):
        v = _shift(v, cells) - v
    return Field(f.grid, v)


def default_hset(grid, seed=0, nrandom=64):
    """
    Displacement set for the Zygmund seminorm, in cells.

    Axis-aligned shifts of ``1, 2, 4, ..., N/4`` cells on every axis, plus
    ``nrandom`` random lattice vectors with entries in ``[-N/4, N/4]``.
    """
    out = []
    for i, N in enumerate(grid.npoints):
        c = 1
        while c <= N // 4:
            e = np.zeros(grid.ndim, dtype=int)
            e[i] = c
            out.append(e)
            c *= 2
    rng = np.random.default_rng(seed)
    hi = np.array([N // 4 for N in grid.npoints])
    while nrandom > 0:
        e = rng.integers(-hi, hi + 1)
        if np.any(e != 0):
            out.append(e)
            nrandom -= 1
    return np.array(out)


def zygmund_norm(f, s, idx, hset=None, seed=0):
    """
    Holder-Zygmund norm ``||f||_inf + sup_h ||delta_h^{[s]+1} f||_inf / |h|_a^s``.

    ``[s]`` is the greatest integer strictly below ``s``. The supremum runs
    over ``hset`` (cells per axis); by default ``default_hset(grid, seed)``.
    """
    if s <= 0:
        raise ValueError("zygmund_norm needs s > 0; use besov_norm for s <= 0")
    grid = f.grid
    if hset is None:
        hset = default_hset(grid, seed)
    order = int(np.ceil(s))
    sp = np.asarray(grid.spacing)
    # reorder displacement components by group for the anisotropic distance
    perm = np.argsort(grid.groups, kind="stable")
    semi = 0.0
    for cells in np.atleast_2d(hset):
        v = f.values
        for _ in range(order):
            v = _shift(v, cells) - v
        dist = anisotropic_distance((cells * sp)[perm], idx)
        semi = max(semi, float(np.max(np.abs(v))) / dist ** s)
    return f.sup() + semi


def spectral_derivative(f, axis, order=1):
    """Spectral derivative along one axis."""
    k = f.grid.freq(axis)
    shape = [1] * f.grid.ndim
    shape[axis] = -1
    mult = (1j * k.reshape(shape)) ** order
    if order % 2 == 1 and f.grid.npoints[axis] % 2 == 0:
        # drop the unpaired Nyquist mode so odd derivatives stay real
        nyq = np.zeros(f.grid.npoints[axis], dtype=bool)
        nyq[f.grid.npoints[axis] // 2] = True
        mult = np.where(nyq.reshape(shape), 0.0, mult)
    return Field.from_spectrum(f.grid, mult * f.spectrum)


def bony_decompose(f, g, partition):
    """
    Bony paraproduct split ``f g = T_f g + T_g f + R(f, g)``.

    ``T_f g = sum_{k>=2} S_{k-1} f R_k g`` and
    ``R(f, g) = sum_{k>=0} sum_{|i|<=1} R_k f R_{k-i} g``. The diagonal sum
    starts at ``k = 0`` so that the three pieces add up to ``f g``.

    Returns
    -------
    Tfg, Tgf, Rfg : Field
    residual : float
        Grid max of ``|f g - Tfg - Tgf - Rfg|``.
    """
    J = partition.jmax
    rf = [block_apply(f, j, partition).values for j in range(J + 1)]
    rg = [block_apply(g, j, partition).values for j in range(J + 1)]
    low_f = np.cumsum([np.zeros(f.grid.shape)] + rf, axis=0)  # low_f[k] = S_k f
    low_g = np.cumsum([np.zeros(g.grid.shape)] + rg, axis=0)
    tfg = np.zeros(f.grid.shape)
    tgf = np.zeros(f.grid.shape)
    rem = np.zeros(f.grid.shape)
    for k in range(2, J + 1):
        tfg += low_f[k - 1] * rg[k]
        tgf += low_g[k - 1] * rf[k]
    for k in range(J + 1):
        for i in (-1, 0, 1):
            if 0 <= k - i <= J:
                rem += rf[k] * rg[k - i]
    resid = float(np.max(np.abs(f.values * g.values - tfg - tgf - rem)))
    return Field(f.grid, tfg), Field(f.grid, tgf), Field(f.grid, rem), resid


def ring_multiplier(j, rho):
    """Ring function ``phi_j`` as a function of ``rho = |xi|_a``."""
    rho = np.asarray(rho, dtype=float)
    if j == 0:
        return transition(rho)
    return transition(rho * 2.0 ** (-j)) - transition(rho * 2.0 ** (1 - j))


def kinetic_rho(xi, eta, alpha, active=(0, 1)):
    """``|(xi, eta)|_a`` for ``a = (1+alpha, 1)``, over the active groups."""
    rho = 0.0
    if 0 in active:
        rho = rho + np.abs(xi) ** (1.0 / (1.0 + alpha))
    if 1 in active:
        rho = rho + np.abs(eta)
    return rho


def kinetic_ring(j, xi, eta, alpha, active=(0, 1)):
    """Kinetic ring function ``phi_j(xi, eta)`` over the active groups."""
    pairs = [(np.abs(xi), 1.0 + alpha), (np.abs(eta), 1.0)]
    sel = [pairs[g] for g in active]
    return ring_function(j, [p[0] for p in sel], [p[1] for p in sel])


@dataclass
class PlaneWaveSum:
    """
    Finite sum ``Re sum_k amp_k exp(i (xi_k x + eta_k v))``.

    Used for fields that are exact superpositions of plane waves but not
    periodic on any fixed box, such as solutions of the kinetic equation with
    transport.
    """
    amp: np.ndarray
    xi: np.ndarray
    eta: np.ndarray

    def __post_init__(self):
        self.amp = np.atleast_1d(np.asarray(self.amp, dtype=complex))
        self.xi, self.eta = (np.broadcast_to(np.atleast_1d(np.asarray(a, dtype=float)),
                                             self.amp.shape).copy() for a in (self.xi, self.eta))

    def __len__(self):
        return len(self.amp)

    def evaluate(self, x, v, chunk=256):
        x, v = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(v, dtype=float))
        out = np.zeros(x.shape)
        for k in range(0, len(self.amp), chunk):
            a = self.amp[k:k + chunk]
            ph = np.multiply.outer(x, self.xi[k:k + chunk]) + np.multiply.outer(v, self.eta[k:k + chunk])
            out += (np.exp(1j * ph) @ a).real
        return out

    def scaled(self, factor):
        return PlaneWaveSum(self.amp * factor, self.xi, self.eta)

    def __add__(self, other):
        return PlaneWaveSum(np.concatenate([self.amp, other.amp]),
                            np.concatenate([self.xi, other.xi]),
                            np.concatenate([self.eta, other.eta]))

    def abs_sum(self):
        """Upper bound ``sum |amp|`` of the sup norm."""
        return float(np.sum(np.abs(self.amp)))
