"""
Sampling of symmetric alpha-stable laws and Levy paths.

The jump measure of the simulated process is ``2 kappa0 dw / |w|^(d+alpha)``,
whose generator is the second-difference operator with constant kernel
``kappa0``. Its characteristic exponent is ``-c_alpha kappa0 |xi|^alpha`` with
``c_alpha`` from :func:`lpkinetic.kernels.symbol_constant`, so samples and
kernels share one normalization. The default ``kappa0 = 1/c_alpha`` makes the
generator the fractional Laplacian (unit scale, cf ``exp(-|xi|^alpha)``);
``kappa0 = 1/2`` gives the jump measure ``dw / |w|^(d+alpha)``.

Randomness is drawn from named streams: a generator is a deterministic
function of ``(seed, stream name, purpose)``.
"""
import zlib
from dataclasses import dataclass, field

import numpy as np
from scipy import special
from scipy.stats import levy_stable

from .kernels import symbol_constant

__all__ = [
    "StableConfig", "StablePath", "stream_rng", "sample_1d_stable",
    "sample_positive_stable", "sample_isotropic_stable",
    "sample_compensated_small_jumps", "sample_large_jumps", "simulate_path",
    "sphere_area",
]


def sphere_area(d):
    """Surface area of the unit sphere in ``R^d`` (2 for ``d = 1``)."""
    return 2.0 * np.pi ** (d / 2) / special.gamma(d / 2)


def stream_rng(seed, stream, purpose=0):
    """Generator for ``(seed, stream, purpose)``; ``stream`` may be a name."""
    if isinstance(stream, str):
        stream = zlib.crc32(stream.encode())
    return np.random.default_rng(np.random.SeedSequence(int(seed), spawn_key=(int(stream), int(purpose))))


@dataclass
class StableConfig:
    """
    Symmetric alpha-stable driving noise.

    Parameters
    ----------
    alpha : float in (0, 2]
    d : int
    kappa0 : float, optional
        Kernel constant; the unit-time law has cf
        ``exp(-c_alpha kappa0 |xi|^alpha)``. Defaults to ``1/c_alpha``.
    scale : float, optional
        ``(c_alpha kappa0)^(1/alpha)``; computed when omitted. Passing it
        overrides ``kappa0``.
    seed : int
    r0 : float in (0, 1]
        Jumps of size ``>= r0`` are recorded individually.
    var_share : float
        Target share of the small-jump variance carried by the Gaussian
        replacement below the series cut-off ``eps``.
    max_rate : float
        Cap on the expected number of simulated jumps per unit time in
        ``(eps, r0)``; ``eps`` is raised when the share target would exceed it.
    """
    alpha: float
    d: int = 1
    kappa0: float = None
    scale: float = None
    seed: int = 0
    r0: float = 1.0
    var_share: float = 0.01
    max_rate: float = 2e5

    def __post_init__(self):
        if not 0 < self.alpha <= 2:
            raise ValueError("alpha must lie in (0, 2]")
        if self.d < 1:
            raise ValueError("dimension must be >= 1")
        if not 0 < self.r0 <= 1:
            raise ValueError("r0 must lie in (0, 1]")
        if self.scale is None and self.kappa0 is None:
            self.kappa0 = 1.0 / symbol_constant(self.alpha, self.d)
        if self.scale is None:
            if self.kappa0 <= 0:
                raise ValueError("kappa0 must be positive")
            self.scale = (symbol_constant(self.alpha, self.d) * self.kappa0) ** (1.0 / self.alpha)
        elif self.scale <= 0:
            raise ValueError("scale must be positive")
        else:
            self.kappa0 = self.scale ** self.alpha / symbol_constant(self.alpha, self.d)

    @property
    def mass(self):
        """Constant ``m`` of the jump measure ``m dw / |w|^(d+alpha)``."""
        return 2.0 * self.kappa0

    def _radial(self):
        return self.mass * sphere_area(self.d)

    def small_jump_variance(self, lo=0.0, hi=None):
        """``int_{lo<|w|<hi} |w|^2 m dw/|w|^(d+alpha)`` per unit time."""
        hi = self.r0 if hi is None else hi
        p = 2.0 - self.alpha
        return self._radial() * (hi ** p - lo ** p) / p

    def rate(self, lo, hi=np.inf):
        """Jump intensity of ``lo <= |w| < hi`` per unit time."""
        top = 0.0 if np.isinf(hi) else hi ** (-self.alpha)
        return self._radial() * (lo ** (-self.alpha) - top) / self.alpha

    @property
    def eps(self):
        """Series cut-off: share target first, then the rate cap."""
        if not 1 < self.alpha < 2:
            raise ValueError("compensated small-jump series needs alpha in (1, 2)")
        e = self.r0 * self.var_share ** (1.0 / (2.0 - self.alpha))
        e_cap = (self.max_rate * self.alpha / self._radial() + self.r0 ** (-self.alpha)) ** (-1.0 / self.alpha)
        return max(e, e_cap)

    @property
    def replacement_share(self):
        """Variance share actually carried by the Gaussian replacement."""
        return (self.eps / self.r0) ** (2.0 - self.alpha)


def sample_1d_stable(alpha, n, rng):
    """``n`` symmetric draws with cf ``exp(-|xi|^alpha)`` (``N(0, 2)`` at ``alpha = 2``)."""
    if not 0 < alpha <= 2:
        raise ValueError("alpha must lie in (0, 2]")
    if alpha == 2:
        return np.sqrt(2.0) * rng.standard_normal(n)
    return levy_stable.rvs(alpha, 0.0, size=n, random_state=rng)


def sample_positive_stable(a, n, rng):
    """``n`` positive draws with Laplace transform ``exp(-lam^a)``, ``a`` in (0, 1)."""
    if not 0 < a < 1:
        raise ValueError("index must lie in (0, 1)")
    return levy_stable.rvs(a, 1.0, scale=np.cos(np.pi * a / 2) ** (1.0 / a), size=n,
                           random_state=rng)


def sample_isotropic_stable(cfg, dt, n, rng):
    """
    ``n`` rotationally invariant increments over a step ``dt``, shape ``(n, d)``.

    ``scale dt^(1/alpha) sqrt(2 S) G`` with ``S`` positive ``alpha/2``-stable
    and ``G`` standard Gaussian; ``alpha = 2`` uses ``sqrt(2) G``.
    """
    g = rng.standard_normal((n, cfg.d))
    if cfg.alpha == 2:
        s = np.ones((n, 1))
    else:
        s = sample_positive_stable(cfg.alpha / 2, n, rng)[:, None]
    return cfg.scale * dt ** (1.0 / cfg.alpha) * np.sqrt(2.0 * s) * g


_CHUNK = 2 ** 21


def _directions(k, d, rng):
    if d == 1:
        return rng.choice([-1.0, 1.0], size=(k, 1))
    u = rng.standard_normal((k, d))
    return u / np.linalg.norm(u, axis=1, keepdims=True)


def _radii(k, lo, hi, alpha, rng):
    # inverse CDF of r^(-1-alpha) on [lo, hi)
    top = 0.0 if np.isinf(hi) else hi ** (-alpha)
    u = rng.random(k)
    return (lo ** (-alpha) - u * (lo ** (-alpha) - top)) ** (-1.0 / alpha)


def sample_compensated_small_jumps(cfg, dt, rng, n=1):
    """
    ``n`` independent increments of ``int int_{|w|<r0} w N~(ds, dw)`` over ``dt``.

    Jumps in ``(eps, r0)`` are summed exactly (the symmetric annulus needs no
    drift correction); the part below ``eps`` is replaced by a centred
    Gaussian of matched variance. Returns shape ``(n, d)``.
    """
    eps = cfg.eps
    lam = cfg.rate(eps, cfg.r0) * dt
    counts = rng.poisson(lam, size=n)
    out = np.zeros((n, cfg.d))
    # sum the jumps in chunks of about `_CHUNK` draws to bound memory
    csum = np.cumsum(counts)
    start = 0
    while start < n:
        base = csum[start - 1] if start else 0
        stop = max(start + 1, int(np.searchsorted(csum, base + _CHUNK, side="right")))
        stop = min(stop, n)
        tot = int(csum[stop - 1] - base)
        if tot:
            w = _radii(tot, eps, cfg.r0, cfg.alpha, rng)[:, None] * _directions(tot, cfg.d, rng)
            owner = np.repeat(np.arange(stop - start), counts[start:stop])
            for i in range(cfg.d):
                out[start:stop, i] = np.bincount(owner, weights=w[:, i], minlength=stop - start)
        start = stop
    sd = np.sqrt(cfg.small_jump_variance(0.0, eps) * dt / cfg.d)
    return out + sd * rng.standard_normal((n, cfg.d))


def sample_large_jumps(cfg, T, rng):
    """Jumps of size ``>= r0`` on ``(0, T]``: sorted times and sizes ``(k, d)``."""
    k = rng.poisson(cfg.rate(cfg.r0) * T)
    times = np.sort(rng.random(k) * T)
    sizes = _radii(k, cfg.r0, np.inf, cfg.alpha, rng)[:, None] * _directions(k, cfg.d, rng)
    return times, sizes


@dataclass
class StablePath:
    """
    Levy path on a uniform grid with the large jumps recorded.

    ``small[i]`` is the compensated small-jump increment over
    ``(grid[i], grid[i+1]]``; ``jump_times``/``jump_sizes`` list the jumps of
    size ``>= r0``. The path value at ``t`` is the sum of small increments on
    grid cells ending at or before ``t`` plus the large jumps at or before ``t``.
    """
    cfg: StableConfig
    grid: np.ndarray
    small: np.ndarray = field(repr=False)
    jump_times: np.ndarray = field(repr=False)
    jump_sizes: np.ndarray = field(repr=False)
    stream: object = 0

    @property
    def T(self):
        return float(self.grid[-1])

    @property
    def n_steps(self):
        return len(self.grid) - 1

    def values(self):
        """Cumulative values on the grid, shape ``(n + 1, d)``."""
        base = np.vstack([np.zeros((1, self.cfg.d)), np.cumsum(self.small, axis=0)])
        return base + self._jumps_upto(self.grid)

    def _jumps_upto(self, t):
        t = np.atleast_1d(np.asarray(t, dtype=float))
        k = np.searchsorted(self.jump_times, t, side="right")
        cs = np.vstack([np.zeros((1, self.cfg.d)), np.cumsum(self.jump_sizes, axis=0)])
        return cs[k]

    def __call__(self, t):
        """Cadlag evaluation at times ``t`` (grid-resolution small-jump part)."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        base = np.vstack([np.zeros((1, self.cfg.d)), np.cumsum(self.small, axis=0)])
        h = self.grid[1] - self.grid[0]
        i = np.clip(np.floor(t / h + 1e-9).astype(int), 0, self.n_steps)
        return base[i] + self._jumps_upto(t)

    def integral(self, t):
        """``int_0^t L_r dr`` at times ``t``, exact for the tabulated path; shape ``(len(t), d)``."""
        t = np.atleast_1d(np.asarray(t, dtype=float))
        h = self.grid[1] - self.grid[0]
        base = np.vstack([np.zeros((1, self.cfg.d)), np.cumsum(self.small, axis=0)])
        # integral of the piecewise-constant small-jump part up to each node
        nodes = np.vstack([np.zeros((1, self.cfg.d)), np.cumsum(base[:-1] * h, axis=0)])
        i = np.clip(np.floor(t / h + 1e-9).astype(int), 0, self.n_steps)
        out = nodes[i] + base[i] * (t - self.grid[i])[:, None]
        if len(self.jump_times):
            lag = np.maximum(t[:, None] - self.jump_times[None, :], 0.0)
            out = out + lag @ self.jump_sizes
        return out

    def coarsen(self, k):
        """Same noise on a grid ``k`` times coarser (identical jump record)."""
        if self.n_steps % k:
            raise ValueError("coarsening factor must divide the number of steps")
        small = self.small.reshape(self.n_steps // k, k, self.cfg.d).sum(axis=1)
        return StablePath(self.cfg, self.grid[::k].copy(), small, self.jump_times,
                          self.jump_sizes, self.stream)

    def to_csv(self, path):
        """Write ``t, value_1..value_d`` on the grid with a comment header."""
        vals = self.values()
        cols = ["t"] + ["value_%d" % (i + 1) for i in range(self.cfg.d)]
        with open(path, "w") as fh:
            fh.write("# alpha=%g d=%d scale=%.17g seed=%d r0=%g stream=%s\n"
                     % (self.cfg.alpha, self.cfg.d, self.cfg.scale, self.cfg.seed,
                        self.cfg.r0, self.stream))
            fh.write(",".join(cols) + "\n")
            np.savetxt(fh, np.column_stack([self.grid, vals]), delimiter=",", fmt="%.17g")


def simulate_path(cfg, T, n_steps, stream=0):
    """
    Path on ``n_steps`` uniform steps of ``(0, T]`` from the named stream.

    Large jumps depend only on ``(seed, stream, T)``, so paths of different
    resolutions drawn from the same stream share their jump record. For
    ``alpha = 2`` the path is Brownian with cf ``exp(-kappa0 |xi|^2 t)``.
    """
    if T <= 0 or n_steps < 1:
        raise ValueError("need T > 0 and n_steps >= 1")
    grid = np.linspace(0.0, T, n_steps + 1)
    dt = T / n_steps
    d = cfg.d
    if cfg.alpha == 2:
        small = np.sqrt(2.0 * cfg.kappa0 * dt) * stream_rng(cfg.seed, stream, 1).standard_normal((n_steps, d))
        return StablePath(cfg, grid, small, np.zeros(0), np.zeros((0, d)), stream)
    times, sizes = sample_large_jumps(cfg, T, stream_rng(cfg.seed, stream, 0))
    if cfg.alpha > 1:
        small = sample_compensated_small_jumps(cfg, dt, stream_rng(cfg.seed, stream, 1), n_steps)
    else:
        # alpha <= 1: the small jumps are summable; draw the whole increment
        # law and subtract nothing (large jumps are then not separated)
        small = sample_isotropic_stable(cfg, dt, n_steps, stream_rng(cfg.seed, stream, 1))
        times, sizes = np.zeros(0), np.zeros((0, d))
    return StablePath(cfg, grid, small, times, sizes, stream)
