"""
Jump map, small-jump Feynman-Kac solver and Picard iteration.

The velocity operator with kernel ``kappa(x, w)`` is split into small jumps
``|w| < 1`` and large jumps ``|w| >= 1``. The small-jump part is generated by
an SDE whose jumps are the images ``Phi(X, w)`` of the jumps of a stable
process with kernel one, where the one-dimensional jump map ``Phi`` pushes the
measure ``dz / |z|^(1+alpha)`` on ``B_1`` forward to
``kappa(x, z) dz / |z|^(1+alpha)``:

    int_{B_1} f(Phi(x, z)) dz/|z|^(1+alpha) = int_{B_1} f(z) kappa(x, z) dz/|z|^(1+alpha).

On ``(0, 1]`` the map matches tail masses, ``N_kappa(x, Phi(x, z)) = N_1(z)``
with ``N_kappa(x, y) = int_y^1 kappa(x, r) r^(-1-alpha) dr``, and it is
extended oddly.

The state ``(x, v)`` lives on the torus ``[-pi, pi)^2``: sources, drifts and
kernels are ``2 pi``-periodic in both variables, and fields are sampled on an
odd ``n x n`` node grid and read as trigonometric interpolants.

Sign convention: ``feynman_kac_solve`` returns
``u(s) = int_s^T e^(-lam (t - s)) E g(t, Z_{s,t}) dt``, which solves
``d_s u + L_small u + b . grad u - lam u = -g`` with ``u(T) = 0``. The
Picard step therefore uses the source ``f + L_large u_{n-1}``.
"""
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, special
from scipy.integrate import IntegrationWarning, quad

from .kernels import LevyOpSpec, apply_levy_op, levy_multiplier
from .lp_core import Field, GridSpec, spectral_derivative
from .stable_sim import StableConfig, _radii, stream_rng

__all__ = [
    "JumpMapSpec", "JumpMapTable", "JumpKernel", "PicardConfig", "PicardResult",
    "FKResult", "PhiPath", "KERNELS", "PICARD_DRIFTS", "SOURCES",
    "TEST_FUNCTIONS", "tail_mass", "jump_map_phi", "jump_map_inverse",
    "jump_map_constant", "jump_map_dz", "change_of_variables", "identity_battery",
    "simulate_phi_sde", "feynman_kac_solve", "picard_solve", "large_jump_apply",
    "picard_residual", "node_grid", "trig_eval",
]

TWO_PI = 2.0 * np.pi


# ----------------------------------------------------------------------------
# Jump map

@dataclass
class JumpMapSpec:
    """
    Kernel ``kappa(x, z)`` on state times ``B_1`` and its tabulation grid.

    Parameters
    ----------
    alpha : float in (0, 2)
    kappa : callable, optional
        Vectorised ``kappa(x, z)``, even in ``z``; defaults to one.
    period : float or None
        Period of ``kappa`` in ``x``; table lookups wrap ``x`` when set and
        clip to the tabulated range otherwise.
    x_grid : array, optional
        Tabulation nodes in ``x``; default 128 nodes over one period
        (or ``[-pi, pi]`` without a period).
    z_min, n_z : float, int
        Log-uniform tabulation of ``|z|`` on ``[z_min, 1]``.
    c0 : float, optional
        Ellipticity bound ``1/c0 <= kappa <= c0``; estimated on the
        tabulation grid when omitted.
    """
    alpha: float
    kappa: object = None
    period: float = TWO_PI
    x_grid: np.ndarray = None
    z_min: float = 1e-6
    n_z: int = 96
    c0: float = None

    def __post_init__(self):
        if not 0 < self.alpha < 2:
            raise ValueError("alpha must lie in (0, 2)")
        if self.kappa is None:
            self.kappa = lambda x, z: np.ones(np.broadcast(np.asarray(x), np.asarray(z)).shape)
        if self.x_grid is None:
            if self.period:
                self.x_grid = -self.period / 2 + self.period * np.arange(128) / 128
            else:
                self.x_grid = np.linspace(-np.pi, np.pi, 129)
        self.x_grid = np.asarray(self.x_grid, dtype=float)
        if self.c0 is None:
            zz = np.concatenate([np.geomspace(self.z_min, 1, 64), [0.0]])
            k = self.k(self.x_grid[:, None], zz[None, :])
            if np.any(k <= 0):
                raise ValueError("kappa must be positive on B_1")
            self.c0 = float(max(k.max(), 1.0 / k.min()))

    def k(self, x, z):
        return np.asarray(self.kappa(x, z), dtype=float)


_GL_X, _GL_W = np.polynomial.legendre.leggauss(16)


def tail_mass(spec, x, z):
    """
    ``N_kappa(x, z) = int_z^1 kappa(x, r) r^(-1-alpha) dr`` for ``0 < z <= 1``.

    Computed as ``z^(-alpha) int_0^{-log z} kappa(x, z e^u) e^(-alpha u) du``
    with 16-point Gauss-Legendre panels of width at most 1.5 in ``u``.
    """
    x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
    if np.any(z <= 0) or np.any(z > 1):
        raise ValueError("tail mass needs 0 < z <= 1")
    a = spec.alpha
    L = -np.log(z)
    npan = max(8, int(np.ceil(L.max() / 1.5)) if L.size else 1)
    h = L / npan
    total = np.zeros(z.shape)
    for p in range(npan):
        u = h[..., None] * (p + (_GL_X + 1) / 2)
        vals = spec.k(x[..., None], z[..., None] * np.exp(u)) * np.exp(-a * u)
        total += (vals * _GL_W).sum(axis=-1) * h / 2
    return z ** (-a) * total


def _unit_tail(alpha, z):
    return (np.asarray(z, dtype=float) ** (-alpha) - 1.0) / alpha


def _unit_tail_inverse(alpha, m):
    return (1.0 + alpha * np.asarray(m, dtype=float)) ** (-1.0 / alpha)


def jump_map_constant(alpha, c, z):
    """Jump map of the constant kernel ``c``: ``(z^(-alpha)/c + 1 - 1/c)^(-1/alpha)``, odd in ``z``."""
    z = np.asarray(z, dtype=float)
    az = np.abs(z)
    with np.errstate(divide="ignore"):
        val = np.where(az > 0, (np.where(az > 0, az, 1.0) ** (-alpha) / c + 1.0 - 1.0 / c) ** (-1.0 / alpha), 0.0)
    return np.sign(z) * val


def _solve_one(spec, x, z):
    a = spec.alpha
    if z >= 1.0:
        return 1.0
    target = float(_unit_tail(a, z))
    g = lambda s: float(tail_mass(spec, x, np.exp(s))) - target
    c = spec.c0 * 1.05
    lo = np.log(_unit_tail_inverse(a, c * target))
    hi = min(0.0, np.log(_unit_tail_inverse(a, target / c)))
    while g(lo) < 0:  # widen on a mis-declared bound
        lo -= 1.0
    if g(hi) > 0:
        hi = 0.0
    return float(np.exp(optimize.brentq(g, lo, hi, xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)))


def _solve_many(spec, x, z):
    """Bracketed Newton-bisection in ``log Phi`` for ``0 < z < 1`` (vectorised)."""
    a = spec.alpha
    target = _unit_tail(a, z)
    c = spec.c0 * 1.05
    lo = np.log(_unit_tail_inverse(a, c * target))
    hi = np.minimum(0.0, np.log(_unit_tail_inverse(a, target / c)))
    s = np.clip(np.log(z), lo, hi)
    for _ in range(100):
        y = np.exp(s)
        g = tail_mass(spec, x, y) - target
        lo = np.where(g > 0, s, lo)
        hi = np.where(g < 0, s, hi)
        new = s + g / (spec.k(x, y) * y ** (-a))  # Newton step, g' = -kappa y^(-alpha)
        new = np.where((new <= lo) | (new >= hi), (lo + hi) / 2, new)
        done = np.abs(new - s) <= 1e-15 * np.maximum(1.0, np.abs(s))
        s = new
        if np.all(done | (hi - lo <= 1e-15)):
            break
    else:
        raise RuntimeError("jump map bracketing did not converge")
    return np.exp(s)


def jump_map_phi(spec, x, z, method="newton"):
    """
    Jump map ``Phi(x, z)`` on ``[-1, 1]`` by monotone bracketing.

    Each value solves ``N_kappa(x, Phi) = N_1(|z|)`` in ``log Phi`` inside
    the bracket given by the constant kernels ``1/c0`` and ``c0``, either by
    vectorised Newton steps safeguarded with bisection (``"newton"``) or by
    Brent's method per value (``"brent"``). ``Phi(x, 0) = 0`` and ``Phi`` is
    odd in ``z``.
    """
    x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
    if np.any(np.abs(z) > 1):
        raise ValueError("z must lie in [-1, 1]")
    az = np.abs(z)
    out = np.where(az >= 1.0, 1.0, 0.0)
    inner = (az > 0) & (az < 1)
    if method == "brent":
        for i in zip(*np.nonzero(inner)):
            out[i] = _solve_one(spec, x[i], az[i])
    elif np.any(inner):
        out[inner] = _solve_many(spec, x[inner], az[inner])
    out = np.sign(z) * out
    return out if out.ndim else float(out)


def jump_map_inverse(spec, x, y):
    """Inverse map ``z = N_1^{-1}(N_kappa(x, |y|))``, odd in ``y`` (explicit)."""
    x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
    ay = np.abs(y)
    safe = np.where(ay > 0, ay, 1.0)
    val = _unit_tail_inverse(spec.alpha, tail_mass(spec, x, safe))
    return np.sign(y) * np.where(ay > 0, val, 0.0)


def jump_map_dz(spec, x, z, phi=None):
    """``d Phi / dz = (Phi / z)^(1+alpha) / kappa(x, Phi)`` for ``z != 0``."""
    phi = jump_map_phi(spec, x, z) if phi is None else phi
    az = np.abs(np.asarray(z, dtype=float))
    return (np.abs(phi) / az) ** (1 + spec.alpha) / spec.k(x, phi)


class JumpMapTable:
    """
    Table of ``q(x, log|z|) = log(Phi(x, z) / |z|)`` for fast lookup.

    ``q`` is bounded and smooth; below ``z_min`` it is frozen at its
    ``z_min`` value (the map is asymptotically linear at the origin). The
    lookup is cubic Hermite in ``log|z|``, with the exact slope
    ``(Phi/z)^alpha / kappa(x, Phi) - 1``, and linear in ``x``. Nodes are
    solved by bracketed Newton iteration on the tail-matching equation.
    """

    def __init__(self, spec):
        self.spec = spec
        self.x = spec.x_grid
        self.lz = np.linspace(np.log(spec.z_min), 0.0, spec.n_z)
        X, LZ = np.meshgrid(self.x, self.lz, indexing="ij")
        Z = np.exp(LZ)
        phi = jump_map_phi(spec, X, Z)
        self.q = np.log(phi) - LZ
        self.dq = (phi / Z) ** spec.alpha / spec.k(X, phi) - 1.0

    def _xcoord(self, x):
        spec = self.spec
        if spec.period:
            x0 = self.x[0]
            u = np.mod(x - x0, spec.period) / (spec.period / len(self.x))
            return u, True
        u = (np.clip(x, self.x[0], self.x[-1]) - self.x[0]) / (self.x[1] - self.x[0])
        return u, False

    def __call__(self, x, z):
        x, z = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(z, dtype=float))
        az = np.abs(z)
        lz = np.log(np.clip(az, self.spec.z_min, 1.0))
        u, periodic = self._xcoord(x)
        nx = len(self.x)
        i0 = np.floor(u).astype(int)
        fx = u - i0
        if periodic:
            i0 %= nx
            i1 = (i0 + 1) % nx
        else:
            i0 = np.clip(i0, 0, nx - 2)
            fx = u - i0
            i1 = i0 + 1
        dz = self.lz[1] - self.lz[0]
        w = (lz - self.lz[0]) / dz
        j0 = np.clip(np.floor(w).astype(int), 0, len(self.lz) - 2)
        fz = w - j0
        t2, t3 = fz * fz, fz * fz * fz
        h00, h10 = 2 * t3 - 3 * t2 + 1, (t3 - 2 * t2 + fz) * dz
        h01, h11 = -2 * t3 + 3 * t2, (t3 - t2) * dz

        def row(i):
            return (h00 * self.q[i, j0] + h10 * self.dq[i, j0]
                    + h01 * self.q[i, j0 + 1] + h11 * self.dq[i, j0 + 1])

        q = (1 - fx) * row(i0) + fx * row(i1)
        return z * np.exp(q)

    def small_variance(self, x, eps, mass=2.0, n=24):
        """``mass * int_{|y| < Phi(x, eps)} y^2 kappa(x, y) dy/|y|^(1+alpha)``."""
        a = self.spec.alpha
        x = np.asarray(x, dtype=float)
        top = self(x, eps)
        t, w = special.roots_jacobi(n, 0.0, 1.0 - a)  # weight (1+t)^(1-alpha)
        y = top[..., None] * (1 + t) / 2
        k = self.spec.k(x[..., None], y)
        return 2 * mass * (k * w).sum(axis=-1) * (top / 2) ** (2 - a)


TEST_FUNCTIONS = {
    "square": lambda z: z ** 2,
    "cube_abs": lambda z: np.abs(z) ** 3,
    "cosine": lambda z: 2.0 * np.sin(1.5 * z) ** 2,
    "smooth_indicator": lambda z: (np.tanh(20 * (np.abs(z) - 0.3)) - np.tanh(20 * (np.abs(z) - 0.7))) / 2 * z ** 2 / 0.09,
    "skew": lambda z: z ** 2 * np.exp(z),
}


def _graded_rule(a, n=20, z_end=1e-9):
    """Nodes and weights for ``int_0^1 g(z) z^(-1-alpha) dz`` with ``g = O(z^2)``."""
    x, w = np.polynomial.legendre.leggauss(n)
    edges = np.concatenate([np.geomspace(z_end, 1 / 32, 60), np.linspace(1 / 32, 1, 32)[1:]])
    nodes, weights = [], []
    for p0, p1 in zip(edges[:-1], edges[1:]):
        z = (p1 - p0) / 2 * x + (p1 + p0) / 2
        nodes.append(z)
        weights.append(w * (p1 - p0) / 2 * z ** (-1 - a))
    # end panel [0, z_end]: Gauss-Jacobi for the weight z^(1-alpha) against g / z^2
    t, wj = special.roots_jacobi(n, 0.0, 1.0 - a)
    z = z_end * (1 + t) / 2
    nodes.append(z)
    weights.append(wj * (z_end / 2) ** (2 - a) / z ** 2)
    return np.concatenate(nodes), np.concatenate(weights)


def change_of_variables(spec, f, x, tol=1e-12):
    """
    Both sides of the change-of-variables identity at state ``x``.

    ``f`` must vanish to second order at the origin. The pushed-forward
    side ``int f(Phi(x, z)) dz/|z|^(1+alpha)`` uses graded Gauss-Legendre
    panels with a Gauss-Jacobi panel at the origin; the weighted side
    ``int f(z) kappa(x, z) dz/|z|^(1+alpha)`` uses adaptive quadrature with
    the algebraic weight ``z^(1-alpha)`` against ``f(z)/z^2``. Returns
    ``(lhs, rhs)``.
    """
    a = spec.alpha
    z, w = _graded_rule(a)
    phi = jump_map_phi(spec, np.full(z.shape, float(x)), z)
    lhs = float(np.sum(w * (f(phi) + f(-phi))))
    rhs = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", IntegrationWarning)
        for sgn in (1.0, -1.0):
            g = lambda r: f(sgn * max(r, 1e-12)) * spec.k(x, sgn * r) / max(r, 1e-12) ** 2
            rhs += quad(g, 0.0, 0.5, weight="alg", wvar=(1 - a, 0.0), epsabs=0.0, epsrel=tol, limit=400)[0]
            h = lambda r: f(sgn * r) * spec.k(x, sgn * r) * r ** (-1 - a)
            rhs += quad(h, 0.5, 1.0, epsabs=0.0, epsrel=tol, limit=400)[0]
    return lhs, rhs


def identity_battery(spec, x=0.3, functions=None):
    """Relative error of the identity for each test function: ``{name: (lhs, rhs, rel)}``."""
    functions = TEST_FUNCTIONS if functions is None else functions
    out = {}
    for name, f in functions.items():
        l, r = change_of_variables(spec, f, x)
        out[name] = (l, r, abs(l - r) / abs(r))
    return out


# ----------------------------------------------------------------------------
# Catalogs

@dataclass(frozen=True)
class JumpKernel:
    """Kernel ``kappa(x, w)``; ``large_jumps=False`` means it vanishes off ``B_1``."""
    name: str
    kappa: object
    large_jumps: bool = True
    text: str = ""


def _modulated(x, w):
    return 1.0 + 0.3 * np.cos(x) * np.exp(-np.asarray(w) ** 2)


KERNELS = {
    "const": JumpKernel("const", lambda x, w: np.ones(np.broadcast(np.asarray(x), np.asarray(w)).shape),
                        text="kappa = 1"),
    "cosine": JumpKernel("cosine", lambda x, w: 1.0 + 0.3 * np.cos(w) + 0 * np.asarray(x),
                         text="kappa = 1 + 0.3 cos(w)"),
    "modulated": JumpKernel("modulated", _modulated,
                            text="kappa = 1 + 0.3 cos(x) exp(-w^2)"),
    "local": JumpKernel("local", _modulated, large_jumps=False,
                        text="modulated kernel restricted to |w| < 1"),
}

PICARD_DRIFTS = {
    "zero": lambda x, v: (0 * x, 0 * v),
    "constant": lambda x, v: (0.5 + 0 * x, 0.25 + 0 * v),
    "periodic": lambda x, v: (0.3 + 0.6 * np.sin(v), -0.4 * np.sin(x)),
}

SOURCES = {
    "zero": lambda t, x, v: 0 * x + 0 * v,
    "const": lambda t, x, v: 1.0 + 0 * x + 0 * v,
    "wave": lambda t, x, v: (1 + 0.5 * t) * (np.cos(x) + 0.5 * np.sin(v)) + 0.3 * np.cos(x + v),
    "mixed": lambda t, x, v: np.sin(2 * x - v) + 0.5 * np.cos(2 * v) * np.cos(t) + 0.25,
}


# ----------------------------------------------------------------------------
# Small-jump SDE

@dataclass
class PicardConfig:
    """
    Parameters of the Feynman-Kac and Picard solvers.

    ``n_grid`` odd nodes per axis on ``[-pi, pi)^2``; ``n_paths`` Monte
    Carlo paths per node (shared by all nodes); ``n_steps`` time steps on
    ``[0, T]``; ``max_rate`` caps the expected number of simulated jumps in
    ``eps <= |w| < 1`` per unit time (the rest is a Gaussian replacement);
    ``ratio_tol`` is the contraction tolerance on the sup-difference ratio.
    """
    alpha: float = 1.5
    lam: float = 2.0
    T: float = 0.5
    n_grid: int = 11
    n_paths: int = 20000
    n_steps: int = 32
    max_iter: int = 8
    ratio_tol: float = 0.8
    kernel: str = "modulated"
    drift: str = "periodic"
    seed: int = 0
    max_rate: float = 64.0
    n_batches: int = 8
    stream: object = "picard"

    def __post_init__(self):
        if not 1 < self.alpha < 2:
            raise ValueError("alpha must lie in (1, 2)")
        if self.lam <= 0 or self.T <= 0:
            raise ValueError("lam and T must be positive")
        if self.n_grid < 3 or self.n_grid % 2 == 0:
            raise ValueError("n_grid must be odd and >= 3")
        if self.n_paths % self.n_batches:
            raise ValueError("n_paths must be a multiple of n_batches")
        if self.kernel not in KERNELS:
            raise ValueError("unknown kernel %r" % self.kernel)
        if self.drift not in PICARD_DRIFTS:
            raise ValueError("unknown drift %r" % self.drift)

    @property
    def dt(self):
        return self.T / self.n_steps

    def noise(self):
        """Unit-kernel stable noise with jump measure ``2 dw/|w|^(1+alpha)`` on ``B_1``."""
        return StableConfig(self.alpha, kappa0=1.0, r0=1.0, seed=self.seed,
                            var_share=1e-6, max_rate=self.max_rate)

    def jump_spec(self):
        return JumpMapSpec(self.alpha, KERNELS[self.kernel].kappa)


class _Engine:
    """Strang-split stepper shared by the path simulator and the solver."""

    def __init__(self, table, noise, drift):
        self.table = table
        self.noise = noise
        self.drift = drift
        self.eps = noise.eps
        self.rate = noise.rate(self.eps, 1.0)
        xs = table.x
        self._var_x = xs
        self._var = table.small_variance(xs, self.eps, mass=noise.mass)

    def variance(self, x):
        spec = self.table.spec
        if spec.period:
            xp = np.concatenate([self._var_x, [self._var_x[0] + spec.period]])
            vp = np.concatenate([self._var, [self._var[0]]])
            return np.interp(np.mod(x - xp[0], spec.period) + xp[0], xp, vp)
        return np.interp(x, self._var_x, self._var)

    def _drift_half(self, X, V, h):
        b1, b2 = self.drift(X, V)
        Xm, Vm = X + h / 2 * b1, V + h / 2 * b2
        b1, b2 = self.drift(Xm, Vm)
        return X + h * b1, V + h * b2

    def step(self, X, V, dt, rng):
        """One step for states ``(S, P)`` driven by noise of shape ``(P,)``."""
        P = X.shape[-1]
        gauss = rng.standard_normal(P)
        counts = rng.poisson(self.rate * dt, size=P)
        X, V = self._drift_half(X, V, dt / 2)
        V = V + np.sqrt(self.variance(X) * dt) * gauss
        for r in range(int(counts.max()) if P else 0):
            idx = np.flatnonzero(counts > r)
            w = _radii(len(idx), self.eps, 1.0, self.noise.alpha, rng) * rng.choice([-1.0, 1.0], size=len(idx))
            V[..., idx] += self.table(X[..., idx], w)
        return self._drift_half(X, V, dt / 2)


@dataclass
class PhiPath:
    """States ``(n_start, n_paths, n_steps + 1, 2)`` on the uniform time grid."""
    times: np.ndarray
    states: np.ndarray = field(repr=False)
    stream: object = 0

    @property
    def final(self):
        return self.states[:, :, -1, :]


def simulate_phi_sde(spec, config, start, stream=0, drift=None, n_paths=None, table=None):
    """
    Paths of ``dZ = int_{B_1} Phi(X_-, w) N~(dt, dw) e_v + b(Z) dt``.

    The jump measure is ``2 dw/|w|^(1+alpha)`` so that the generator is the
    second-difference operator with kernel ``kappa`` on ``B_1``. Jumps with
    ``|w| >= eps`` are mapped through ``Phi``; the rest is a Gaussian with the
    matched state-dependent variance. The noise of path ``p`` is shared by
    every starting point. Deterministic given ``(config.seed, stream)``.

    Parameters
    ----------
    spec : JumpMapSpec
    config : PicardConfig
        Supplies ``alpha``, ``T``, ``n_steps``, ``max_rate``, ``seed`` and the
        default drift and path count.
    start : array ``(2,)`` or ``(n_start, 2)``
    drift : callable ``b(x, v) -> (b1, b2)``, optional
    """
    start = np.atleast_2d(np.asarray(start, dtype=float))
    P = config.n_paths if n_paths is None else n_paths
    drift = PICARD_DRIFTS[config.drift] if drift is None else drift
    table = JumpMapTable(spec) if table is None else table
    eng = _Engine(table, config.noise(), drift)
    rng = stream_rng(config.seed, stream, 7)
    X = np.repeat(start[:, :1], P, axis=1)
    V = np.repeat(start[:, 1:], P, axis=1)
    out = np.empty((len(start), P, config.n_steps + 1, 2))
    out[:, :, 0, 0], out[:, :, 0, 1] = X, V
    for k in range(config.n_steps):
        X, V = eng.step(X, V, config.dt, rng)
        if np.any(~np.isfinite(V)) or np.abs(V).max() > 1e9:
            raise FloatingPointError("path blow-up at step %d" % k)
        out[:, :, k + 1, 0], out[:, :, k + 1, 1] = X, V
    return PhiPath(np.linspace(0, config.T, config.n_steps + 1), out, stream)


# ----------------------------------------------------------------------------
# Grid fields

def node_grid(n):
    """Nodes ``-pi + 2 pi i / n`` of the odd periodic grid."""
    return -np.pi + TWO_PI * np.arange(n) / n


def _modes(n):
    return np.fft.fftfreq(n, d=1.0 / n).astype(int)


def _coefficients(values):
    """Trig coefficients ``a_kl`` with ``g = sum a_kl e^{i(kx + lv)}`` (last two axes)."""
    n = values.shape[-1]
    k = _modes(n)
    phase = np.exp(1j * np.pi * k)  # undo the -pi grid offset
    return np.fft.fft2(values) / n ** 2 * phase[:, None] * phase[None, :]


def trig_eval(values, x, v):
    """Evaluate the trigonometric interpolant of nodal ``values (n, n)`` at points."""
    a = _coefficients(np.asarray(values, dtype=float))
    k = _modes(values.shape[-1])
    x, v = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(v, dtype=float))
    ex = np.exp(1j * x[..., None] * k)
    ev = np.exp(1j * v[..., None] * k)
    return np.einsum("...k,kl,...l->...", ex, a, ev).real


def _ecf_tables(cfg, table, drift, nodes):
    """
    Batch-wise ``E exp(i(k X_tau + l V_tau))`` for every node and lag.

    Shape ``(n_batches, n_steps + 1, n_nodes, n, n)``; common random numbers
    across nodes.
    """
    n = cfg.n_grid
    k = _modes(n)
    P, B = cfg.n_paths, cfg.n_batches
    eng = _Engine(table, cfg.noise(), drift)
    rng = stream_rng(cfg.seed, cfg.stream, 7)
    X = np.repeat(nodes[:, :1], P, axis=1)
    V = np.repeat(nodes[:, 1:], P, axis=1)
    M = np.empty((B, cfg.n_steps + 1, len(nodes), n, n), dtype=complex)
    kmax = int(np.abs(k).max())

    def powers(Y):
        e1 = np.exp(1j * Y)
        pw = np.empty(Y.shape + (n,), dtype=complex)
        cur = np.ones(Y.shape, dtype=complex)
        for m in range(kmax + 1):
            pw[..., m] = cur
            if m:
                pw[..., n - m] = np.conj(cur)
            cur = cur * e1
        return pw

    def record(step, X, V):
        per = P // B
        for b in range(B):
            sl = slice(b * per, (b + 1) * per)
            ex = powers(X[:, sl])
            ev = powers(V[:, sl])
            M[b, step] = np.matmul(ex.transpose(0, 2, 1), ev) / per

    record(0, X, V)
    for s in range(cfg.n_steps):
        X, V = eng.step(X, V, cfg.dt, rng)
        record(s + 1, X, V)
    return M


@dataclass
class FKResult:
    """Solution ``u (n_steps + 1, n, n)`` on the time grid with its standard error."""
    times: np.ndarray
    u: np.ndarray
    stderr: np.ndarray
    batches: np.ndarray = field(repr=False)

    def at(self, j=0):
        return self.u[j]


def _fk_apply(cfg, M, g):
    """``u(s_j) = sum_m w_jm e^{-lam tau_m} E g(s_j + tau_m, Z_tau_m)`` from ecf tables."""
    n, N = cfg.n_grid, cfg.n_steps
    a = _coefficients(g)  # (N+1, n, n)
    u = np.zeros((N + 1, M.shape[1]))
    disc = np.exp(-cfg.lam * cfg.dt * np.arange(N + 1))
    for m in range(N + 1):
        # rows j with j + m <= N; trapezoid weights on [s_j, T]
        E = np.einsum("jkl,nkl->jn", a[m:], M[m]).real  # j = 0..N-m
        w = np.full(N + 1 - m, cfg.dt / 2 if m == 0 else cfg.dt)
        w[-1] = cfg.dt / 2  # row j = N - m ends at T
        u[:N + 1 - m] += (w * disc[m])[:, None] * E
    u[N] = 0.0
    return u.reshape(N + 1, n, n)


def _setup(cfg):
    spec = cfg.jump_spec()
    table = JumpMapTable(spec)
    n = cfg.n_grid
    xs = node_grid(n)
    X, V = np.meshgrid(xs, xs, indexing="ij")
    nodes = np.column_stack([X.ravel(), V.ravel()])
    M = _ecf_tables(cfg, table, PICARD_DRIFTS[cfg.drift], nodes)
    return spec, table, M


def _source_grid(cfg, f):
    xs = node_grid(cfg.n_grid)
    X, V = np.meshgrid(xs, xs, indexing="ij")
    t = np.linspace(0, cfg.T, cfg.n_steps + 1)
    return np.stack([np.broadcast_to(f(ti, X, V), X.shape) for ti in t]).astype(float)


def _fk_batches(cfg, M, g):
    ub = np.stack([_fk_apply(cfg, M[b], g) for b in range(M.shape[0])])
    return ub


def feynman_kac_solve(cfg, f, source_correction=None, tables=None):
    """
    Monte Carlo Feynman-Kac solution of the small-jump equation.

    ``u(s, z) = int_s^T e^(-lam (t - s)) E g(t, Z_{s,t}(z)) dt`` with
    ``g = f + source_correction`` on the node grid, the trapezoid rule in
    time and the trigonometric interpolant of ``g`` in space. Expectations
    come from empirical characteristic functions of paths started at every
    node with shared noise; the standard error is the spread of the batch
    estimates.

    Parameters
    ----------
    cfg : PicardConfig
    f : callable ``f(t, x, v)`` or array ``(n_steps + 1, n, n)``
    source_correction : array ``(n_steps + 1, n, n)``, optional
    tables : precomputed ecf tables (from an earlier solve), optional
    """
    M = _setup(cfg)[2] if tables is None else tables
    g = f if isinstance(f, np.ndarray) else _source_grid(cfg, f)
    if source_correction is not None:
        g = g + source_correction
    ub = _fk_batches(cfg, M, g)
    B = ub.shape[0]
    return FKResult(np.linspace(0, cfg.T, cfg.n_steps + 1), ub.mean(axis=0),
                    ub.std(axis=0, ddof=1) / np.sqrt(B), ub)


# ----------------------------------------------------------------------------
# Large jumps and Picard iteration

def _large_multipliers(cfg, kernel):
    """Per-row symbols of the large-jump operator, shape ``(n_x, n_v)``."""
    n = cfg.n_grid
    xs = node_grid(n)
    eta = _modes(n).astype(float)
    out = np.zeros((n, n))
    if not kernel.large_jumps:
        return out
    for i, x in enumerate(xs):
        out[i] = levy_multiplier(eta, cfg.alpha, lambda w, x=x: kernel.kappa(x, w), (1.0, np.inf))
    return out


def large_jump_apply(cfg, u, mult=None):
    """Apply the large-jump operator along ``v`` to nodal fields ``(..., n, n)``."""
    mult = _large_multipliers(cfg, KERNELS[cfg.kernel]) if mult is None else mult
    uh = np.fft.fft(u, axis=-1)
    return np.fft.ifft(uh * mult, axis=-1).real


@dataclass
class PicardResult:
    """Iterates' history and final field with batch standard errors."""
    times: np.ndarray
    u: np.ndarray
    stderr: np.ndarray
    sup_diff: list
    ratios: list
    batch_ratios: np.ndarray
    noise_level: float
    converged: bool
    config: PicardConfig = None

    def history_rows(self):
        rows = []
        for n, d in enumerate(self.sup_diff, start=1):
            r = self.ratios[n - 2] if n >= 2 else float("nan")
            rows.append((n, d, r))
        return rows

    def to_csv(self, path):
        """Write ``n, sup_diff, ratio`` with a comment header."""
        c = self.config
        with open(path, "w") as fh:
            if c is not None:
                fh.write("# alpha=%g lam=%g T=%g n_grid=%d n_paths=%d kernel=%s drift=%s seed=%d\n"
                         % (c.alpha, c.lam, c.T, c.n_grid, c.n_paths, c.kernel, c.drift, c.seed))
            fh.write("n,sup_diff,ratio\n")
            for n, d, r in self.history_rows():
                fh.write("%d,%.17g,%.17g\n" % (n, d, r))


def _iterate(cfg, M, g, mult, max_iter):
    u_prev = np.zeros_like(g)
    diffs, iterates = [], []
    for _ in range(max_iter):
        u = _fk_apply(cfg, M, g + large_jump_apply(cfg, u_prev, mult))
        diffs.append(float(np.abs(u - u_prev).max()))
        iterates.append(u)
        u_prev = u
        if diffs[-1] < 1e-13 * max(1.0, np.abs(u).max()):
            break
    return iterates, diffs


def picard_solve(cfg, f, tables=None):
    """
    Picard iteration ``u_n = FK(f + L_large u_{n-1})`` from ``u_0 = 0``.

    The large-jump operator acts on each ``x`` row as the exact Fourier
    symbol of the kernel restricted to ``|w| >= 1``. The history records
    ``sup |u_n - u_{n-1}|`` over nodes and times and successive ratios; the
    same iteration on each batch gives standard errors and a batch spread of
    the ratios. ``converged`` is true when every ratio after the second
    iteration is at most ``ratio_tol`` (or the iteration stopped exactly).
    """
    M = _setup(cfg)[2] if tables is None else tables
    g = f if isinstance(f, np.ndarray) else _source_grid(cfg, f)
    mult = _large_multipliers(cfg, KERNELS[cfg.kernel])
    iterates, diffs = _iterate(cfg, M.mean(axis=0), g, mult, cfg.max_iter)
    ratios = [diffs[i + 1] / diffs[i] if diffs[i] > 0 else 0.0 for i in range(len(diffs) - 1)]
    finals, bratios = [], []
    for b in range(M.shape[0]):
        it_b, d_b = _iterate(cfg, M[b], g, mult, len(diffs))
        finals.append(it_b[-1])
        bratios.append([d_b[i + 1] / d_b[i] if d_b[i] > 0 else 0.0 for i in range(len(d_b) - 1)])
    finals = np.stack(finals)
    B = M.shape[0]
    se = finals.std(axis=0, ddof=1) / np.sqrt(B)
    late = ratios[1:]
    conv = all(r <= cfg.ratio_tol for r in late) or (bool(diffs) and diffs[-1] == 0.0)
    return PicardResult(np.linspace(0, cfg.T, cfg.n_steps + 1), iterates[-1], se, diffs, ratios,
                        np.array(bratios) if bratios and len(bratios[0]) else np.zeros((B, 0)),
                        float(se.max()), bool(conv), cfg)


def _resample(values, m):
    """Band-limited resampling of an odd ``n x n`` nodal field to an ``m x m`` grid."""
    n = values.shape[-1]
    a = _coefficients(values)
    k = _modes(n)
    xs = -np.pi + TWO_PI * np.arange(m) / m
    ex = np.exp(1j * np.outer(xs, k))
    return (ex @ a @ ex.T).real


def picard_residual(cfg, result, f, j=None, m=16, spec_overrides=None):
    """
    Pointwise residual of ``d_s u + L u + b . grad u - lam u + f`` at time ``s_j``.

    The full operator (all jump sizes, state-dependent kernel) is applied by
    :func:`lpkinetic.kernels.apply_levy_op` on an ``m x m`` resampling of the
    trigonometric interpolant; ``d_s`` is a centred difference. Returns the
    residual field and ``sup |f(s_j)|``.
    """
    N = cfg.n_steps
    j = N // 2 if j is None else j
    if not 0 < j < N:
        raise ValueError("residual needs an interior time index")
    grid = GridSpec((np.pi, np.pi), (m, m))
    uj = Field(grid, _resample(result.u[j], m))
    du = (_resample(result.u[j + 1], m) - _resample(result.u[j - 1], m)) / (2 * cfg.dt)
    kern = KERNELS[cfg.kernel]
    if kern.large_jumps:
        kap = lambda t, x, v, w: kern.kappa(x, w)
    else:
        kap = lambda t, x, v, w: kern.kappa(x, w) * (np.abs(w) < 1)
    ops = dict(alpha=cfg.alpha, kappa=kap, state_dependent=True, c0=2.0)
    if not kern.large_jumps:
        ops["w_range"] = (0.0, 1.0)
    if spec_overrides:
        ops.update(spec_overrides)
    Lu = apply_levy_op(uj, LevyOpSpec(**ops), axis=1).values
    X, V = grid.mesh()
    b1, b2 = PICARD_DRIFTS[cfg.drift](X, V)
    grad = b1 * spectral_derivative(uj, 0).values + b2 * spectral_derivative(uj, 1).values
    t = cfg.T * j / N
    fj = np.broadcast_to(f(t, X, V), X.shape)
    res = du + Lu + grad - cfg.lam * uj.values + fj
    return res, float(np.abs(fj).max())
