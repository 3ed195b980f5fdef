"""
Degenerate SDEs driven by stable noise, their flows, and random transport.

The kinetic SDE is ``dX = b1(t, X, V) dt``, ``dV = b2(t, X, V) dt + sigma dL``
with ``b1 = v + b1x(t, x)``. It is integrated by a jump-adapted Euler scheme:
drift-only Euler steps between nodes, recorded large jumps applied at their
exact times, and each grid cell's small-jump increment added to ``V`` at the
cell's right end, with ``X`` receiving its trapezoidal share (the increment
spread linearly over the cell). The scheme is a deterministic map of the noise segments it
crosses, so flows started anywhere reuse the same noise.

The random ODE ``dY/dt = b(t, Y) + L_t`` is solved for ``W = Y - int L``,
which removes the rough forcing: ``dW/dt = b(t, W + int_s^t L)`` is then
integrated by Heun's method with the path integral taken exactly from the
tabulated path. Inverse flows integrate the same ODE backwards in time.
"""
import warnings
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

from .lp_core import Field, GridSpec
from .stable_sim import StableConfig, simulate_path

__all__ = [
    "Drift", "DRIFTS", "TransportDrift", "TRANSPORT_DRIFTS", "INITIAL_DATA",
    "smooth_power", "SdeConfig", "FlowSample", "FlowWarning", "simulate_sde",
    "flow_composition_check", "flow_jacobian", "variational_jacobian",
    "pathwise_gaps", "TransportProblem", "solve_random_ode", "solve_transport",
    "transport_residual", "JumpAdjacentError",
]

SMOOTHING = 1e-6
BLOW_UP = 1e9


class FlowWarning(UserWarning):
    """Raised when a finite-difference flow Jacobian is nearly singular."""


class JumpAdjacentError(ValueError):
    """Residual requested within one step of a recorded jump."""

    def __init__(self, t, safe):
        super().__init__("t=%g lies within one step of a recorded jump; nearest safe t is %g"
                         % (t, safe))
        self.safe = safe


def smooth_power(y, p, delta=SMOOTHING):
    """Odd power ``y (y^2 + delta^2)^((p-1)/2)``: Holder of order ``p``, smooth at 0."""
    y = np.asarray(y, dtype=float)
    return y * (y * y + delta * delta) ** ((p - 1.0) / 2.0)


def _dsmooth_power(y, p, delta=SMOOTHING):
    q = y * y + delta * delta
    return q ** ((p - 1.0) / 2.0) + (p - 1.0) * y * y * q ** ((p - 3.0) / 2.0)


# ----------------------------------------------------------------------------
# Drift catalogs

@dataclass(frozen=True)
class Drift:
    """
    Kinetic drift ``b = (v + b1x(t, x), b2(t, x, v))`` with declared regularity.

    ``x_exponent`` is the Holder order of ``b`` in ``x`` and ``v_exponent``
    that of ``b2`` in ``v`` (1 for Lipschitz entries). ``jac`` returns the
    derivatives ``(d b1x/dx, d b2/dx, d b2/dv)`` for smooth entries.
    """
    name: str
    b1x: object
    b2: object
    x_exponent: float = 1.0
    v_exponent: float = 1.0
    holder: bool = False
    jac: object = None

    def __call__(self, t, x, v):
        return v + self.b1x(t, x), self.b2(t, x, v)

    def admissible(self, alpha):
        """Exponents inside the strong well-posedness range for ``alpha``."""
        gam = self.x_exponent * (1 + alpha)
        ok_x = self.x_exponent >= 1 or 1 + alpha / 2 < gam < 1 + alpha
        ok_v = self.v_exponent >= 1 or 1 - alpha / 2 < self.v_exponent < 1
        return ok_x and ok_v


def _zero(t, x, *rest):
    return np.zeros_like(x)


DRIFTS = {
    "zero": Drift("zero", _zero, _zero,
                  jac=lambda t, x, v: (0 * x, 0 * x, 0 * v)),
    "linear": Drift("linear", _zero, lambda t, x, v: -0.5 * x - v,
                    jac=lambda t, x, v: (0 * x, -0.5 + 0 * x, -1.0 + 0 * v)),
    "shear": Drift("shear", lambda t, x: 0.5 * np.sin(x),
                   lambda t, x, v: 0.3 * np.cos(x) - 0.2 * np.sin(v),
                   jac=lambda t, x, v: (0.5 * np.cos(x), -0.3 * np.sin(x), -0.2 * np.cos(v))),
    "holder_v": Drift("holder_v", _zero, lambda t, x, v: -smooth_power(v, 0.6),
                      v_exponent=0.6, holder=True),
    "holder_x": Drift("holder_x", _zero,
                      lambda t, x, v: -smooth_power(x, 0.85) - 0.5 * v,
                      x_exponent=0.85, holder=True),
    "holder_xv": Drift("holder_xv", lambda t, x: 0.5 * smooth_power(x - 0.2, 0.85),
                       lambda t, x, v: smooth_power(0.3 - x, 0.85) - smooth_power(v, 0.6),
                       x_exponent=0.85, v_exponent=0.6, holder=True),
}


@dataclass(frozen=True)
class TransportDrift:
    """Drift ``b(t, x)`` of the random ODE with its Holder order ``gamma`` in ``x``."""
    name: str
    b: object
    gamma: float = 1.0
    holder: bool = False

    def __call__(self, t, x):
        return self.b(t, x)

    def admissible(self, alpha):
        return self.gamma >= 1 or (2 + alpha) / (2 * (1 + alpha)) < self.gamma < 1


TRANSPORT_DRIFTS = {
    "zero": TransportDrift("zero", lambda t, x: np.zeros_like(x)),
    "const": TransportDrift("const", lambda t, x: 0.7 + np.zeros_like(x)),
    "smooth": TransportDrift("smooth", lambda t, x: 0.5 * np.sin(x) * (1 + 0.2 * np.cos(t))),
    "holder": TransportDrift("holder",
                             lambda t, x: -0.6 * smooth_power(x - 0.1, 0.85) * (1 + 0.2 * np.cos(t)),
                             gamma=0.85, holder=True),
}

INITIAL_DATA = {
    "gauss": lambda x: np.exp(-x * x),
    "linear": lambda x: 0.3 + 0.5 * x,
    "const": lambda x: 2.0 + 0.0 * x,
    "wave": lambda x: np.sin(x) + 0.5 * np.cos(2 * x),
}


# ----------------------------------------------------------------------------
# Kinetic SDE

@dataclass
class SdeConfig:
    """
    Kinetic SDE driven by stable noise.

    Parameters
    ----------
    drift : Drift or str
        Catalog entry or name.
    sigma : float, array or callable
        Constant ``d x d`` matrix (scalar allowed) or ``sigma(t, x, v)``.
    dt : float
        Uniform step; the horizon ``T`` must be a multiple of it.
    T : float
    stable : StableConfig
    n_paths : int
    """
    drift: object
    stable: StableConfig
    dt: float = 1.0 / 64
    T: float = 1.0
    sigma: object = 1.0
    n_paths: int = 1

    def __post_init__(self):
        if isinstance(self.drift, str):
            self.drift = DRIFTS[self.drift]
        n = self.T / self.dt
        if abs(n - round(n)) > 1e-9 or n < 1:
            raise ValueError("T must be a positive multiple of dt")
        if self.n_paths < 1:
            raise ValueError("n_paths must be positive")

    @property
    def alpha(self):
        return self.stable.alpha

    @property
    def d(self):
        return self.stable.d

    @property
    def n_steps(self):
        return int(round(self.T / self.dt))

    def path(self, stream):
        return simulate_path(self.stable, self.T, self.n_steps, stream)

    def sig(self, t, x, v):
        if callable(self.sigma):
            return np.atleast_2d(self.sigma(t, x, v))
        return np.atleast_2d(np.asarray(self.sigma, dtype=float)) * np.eye(self.d)


@dataclass
class FlowSample:
    """Trajectory of ``Z = (X, V)`` started at ``(s, z)`` on the jump-adapted nodes."""
    s: float
    z: np.ndarray
    times: np.ndarray
    X: np.ndarray = field(repr=False)
    V: np.ndarray = field(repr=False)
    stream: object = 0

    @property
    def final(self):
        return np.concatenate([self.X[-1], self.V[-1]])

    def at(self, times):
        """States at node times (exact matches), shape ``(len(times), 2d)``."""
        idx = np.searchsorted(self.times, times)
        if np.any(idx >= len(self.times)) or not np.array_equal(self.times[idx], np.asarray(times)):
            raise ValueError("requested times are not trajectory nodes")
        return np.hstack([self.X[idx], self.V[idx]])


def _nodes(path, s, t):
    g = path.grid
    grid_in = g[(g > s) & (g <= t)]
    jt = path.jump_times
    jumps_in = jt[(jt > s) & (jt <= t)]
    nodes = np.union1d(np.union1d(grid_in, jumps_in), [t])
    return nodes


def simulate_sde(cfg, s, z, stream=0, t=None, path=None):
    """
    Jump-adapted Euler trajectory of the kinetic SDE from ``(s, z)`` to ``t``.

    ``z = (x, v)`` has length ``2d``. The noise is the path of ``stream`` (or
    ``path`` when given), so equal streams give identical noise.
    """
    t = cfg.T if t is None else t
    if not 0 <= s <= t <= cfg.T + 1e-12:
        raise ValueError("need 0 <= s <= t <= T")
    path = cfg.path(stream) if path is None else path
    d = cfg.d
    z = np.asarray(z, dtype=float).reshape(2 * d)
    x, v = z[:d].copy(), z[d:].copy()
    nodes = _nodes(path, s, t) if t > s else np.zeros(0)
    g, h0 = path.grid, path.grid[1] - path.grid[0]
    jump_at = {float(tj): k for k, tj in enumerate(path.jump_times)}
    X = np.empty((len(nodes) + 1, d))
    V = np.empty((len(nodes) + 1, d))
    X[0], V[0] = x, v
    tp = s
    for k, tn in enumerate(nodes):
        h = tn - tp
        b1, b2 = cfg.drift(tp, x, v)
        x = x + h * b1
        v = v + h * b2
        j = jump_at.get(float(tn))
        if j is not None:
            v = v + cfg.sig(tn, x, v) @ path.jump_sizes[j]
        i = int(round(tn / h0))
        if i >= 1 and g[i] == tn:
            # the cell's small-jump increment, spread linearly over the cell
            dv = cfg.sig(tn, x, v) @ path.small[i - 1]
            x = x + 0.5 * (tn - max(g[i - 1], s)) * dv
            v = v + dv
        if not (np.all(np.isfinite(x)) and np.all(np.isfinite(v))) or max(
                np.max(np.abs(x)), np.max(np.abs(v))) > BLOW_UP:
            raise RuntimeError("trajectory exceeded %g at t=%g (drift %s, stream %s)"
                               % (BLOW_UP, tn, cfg.drift.name, stream))
        X[k + 1], V[k + 1] = x, v
        tp = tn
    return FlowSample(s, z, np.concatenate([[s], nodes]), X, V, stream)


def flow_composition_check(cfg, s, r, t, z, stream=0):
    """``|Z_{s,t}(z) - Z_{r,t}(Z_{s,r}(z))|`` over the same noise."""
    if not s < r < t:
        raise ValueError("need s < r < t")
    path = cfg.path(stream)
    direct = simulate_sde(cfg, s, z, stream, t, path).final
    mid = simulate_sde(cfg, s, z, stream, r, path).final
    comp = simulate_sde(cfg, r, mid, stream, t, path).final
    return float(np.max(np.abs(direct - comp)))


def flow_jacobian(cfg, s, t, z, stream=0, h=None):
    """
    Central-difference Jacobian of ``z -> Z_{s,t}(z)`` over common noise.

    ``h`` defaults to ``max(1e-5, 1e-3 |z|)``. A determinant below ``1e-8`` in
    absolute value raises a `FlowWarning`.
    """
    z = np.asarray(z, dtype=float)
    h = max(1e-5, 1e-3 * float(np.linalg.norm(z))) if h is None else h
    path = cfg.path(stream)
    n = len(z)
    J = np.empty((n, n))
    for i in range(n):
        e = np.zeros(n)
        e[i] = h
        up = simulate_sde(cfg, s, z + e, stream, t, path).final
        dn = simulate_sde(cfg, s, z - e, stream, t, path).final
        J[:, i] = (up - dn) / (2 * h)
    det = np.linalg.det(J)
    if abs(det) < 1e-8:
        warnings.warn("flow Jacobian determinant %.3g below 1e-8" % det, FlowWarning)
    return J


def variational_jacobian(cfg, s, t, z, stream=0):
    """
    Derivative of the Euler map from the discrete variational equation
    ``J <- (I + h Db) J`` along the trajectory (constant ``sigma`` only).
    """
    if callable(cfg.sigma):
        raise ValueError("variational Jacobian needs a constant sigma")
    if cfg.drift.jac is None:
        raise ValueError("drift %s has no declared derivative" % cfg.drift.name)
    path = cfg.path(stream)
    tr = simulate_sde(cfg, s, z, stream, t, path)
    d = cfg.d
    J = np.eye(2 * d)
    I = np.eye(d)
    for k in range(len(tr.times) - 1):
        tp, h = tr.times[k], tr.times[k + 1] - tr.times[k]
        x, v = tr.X[k], tr.V[k]
        dx1, dx2, dv2 = cfg.drift.jac(tp, x, v)
        Db = np.block([[np.diag(np.broadcast_to(dx1, (d,))), I],
                       [np.diag(np.broadcast_to(dx2, (d,))), np.diag(np.broadcast_to(dv2, (d,)))]])
        J = (np.eye(2 * d) + h * Db) @ J
    return J


def pathwise_gaps(cfg, z, stream=0, levels=5, finest=None):
    """
    Sup-gaps between successive resolutions over one noise realization.

    The noise is drawn once on the finest grid (``cfg.dt / 2^(levels-1)``
    unless ``finest`` steps are given) and coarsened; gap ``k`` compares the
    solutions with steps ``dt/2^k`` and ``dt/2^(k+1)`` on the coarsest grid.
    Returns ``levels - 1`` gaps.
    """
    n0 = cfg.n_steps
    nf = n0 * 2 ** (levels - 1) if finest is None else finest
    fine = simulate_path(cfg.stable, cfg.T, nf, stream)
    coarse_t = fine.grid[:: nf // n0]
    sols = []
    for k in range(levels):
        p = fine.coarsen(2 ** (levels - 1 - k))
        tr = simulate_sde(cfg, 0.0, z, stream, cfg.T, p)
        sols.append(tr.at(coarse_t))
    return np.array([float(np.max(np.abs(sols[k + 1] - sols[k]))) for k in range(levels - 1)])


# ----------------------------------------------------------------------------
# Random ODE and transport

@dataclass
class TransportProblem:
    """
    Random transport ``d_t u + (b(t, x) + L_t) d_x u = 0``, ``u(0) = phi``.

    Parameters
    ----------
    drift : TransportDrift or str
    phi : callable or str
        Initial datum (catalog name allowed).
    stable : StableConfig
        One-dimensional driving noise.
    T : float
    dt : float
        Heun step of the characteristic ODE.
    table_steps : int
        Resolution of the tabulated stable path (must be finer than ``dt``).
    grid : GridSpec
        Evaluation grid in ``x``.
    stream : stream id of the noise.
    """
    drift: object
    phi: object
    stable: StableConfig
    T: float = 1.0
    dt: float = 1.0 / 64
    table_steps: int = 4096
    grid: GridSpec = None
    stream: object = 0

    def __post_init__(self):
        if isinstance(self.drift, str):
            self.drift = TRANSPORT_DRIFTS[self.drift]
        if isinstance(self.phi, str):
            self.phi = INITIAL_DATA[self.phi]
        if self.stable.d != 1:
            raise ValueError("transport is implemented in one dimension")
        if self.T / self.table_steps > self.dt:
            raise ValueError("the path table must be finer than dt")
        if self.grid is None:
            self.grid = GridSpec(4.0, 256)

    @cached_property
    def path(self):
        return simulate_path(self.stable, self.T, self.table_steps, self.stream)

    def Lambda(self, t):
        return self.path.integral(np.atleast_1d(t))[:, 0]

    def L(self, t):
        return self.path(np.atleast_1d(t))[:, 0]


def _ode_nodes(s, t, dt):
    """Nodes from ``s`` to ``t`` on the global ``dt`` lattice (either direction)."""
    lo, hi = min(s, t), max(s, t)
    k0, k1 = np.floor(lo / dt + 1e-9) + 1, np.ceil(hi / dt - 1e-9) - 1
    inner = dt * np.arange(k0, k1 + 1) if k1 >= k0 else np.zeros(0)
    nodes = np.concatenate([[lo], inner, [hi]])
    return nodes if t >= s else nodes[::-1]


def _heun(problem, s, t, y0):
    nodes = _ode_nodes(s, t, problem.dt)
    lam = problem.Lambda(nodes)
    lam = lam - lam[0]
    b = problem.drift
    w = np.array(y0, dtype=float)
    out = [w + lam[0]]
    for k in range(len(nodes) - 1):
        t0, t1 = nodes[k], nodes[k + 1]
        h = t1 - t0
        k1 = b(t0, w + lam[k])
        wp = w + h * k1
        k2 = b(t1, wp + lam[k + 1])
        w = w + 0.5 * h * (k1 + k2)
        out.append(w + lam[k + 1])
    return nodes, np.array(out)


def solve_random_ode(problem, s, x, t=None):
    """
    Solve ``dY/dt = b(t, Y) + L_t``, ``Y_s = x`` forward to ``t`` (default ``T``).

    ``x`` may be an array of starting points. Returns ``(times, Y)`` with
    ``Y[k]`` the state at ``times[k]``.
    """
    t = problem.T if t is None else t
    if not 0 <= s <= t <= problem.T + 1e-12:
        raise ValueError("need 0 <= s <= t <= T")
    return _heun(problem, s, t, x)


def inverse_flow(problem, t, x):
    """``Y_{0,t}^{-1}(x)`` by integrating the ODE backwards from ``(t, x)`` to 0."""
    if t == 0:
        return np.array(x, dtype=float)
    return _heun(problem, t, 0.0, x)[1][-1]


def solve_transport(problem, t):
    """``u(t, .) = phi(Y_{0,t}^{-1}(.))`` on the evaluation grid."""
    x = problem.grid.axis(0)
    return Field(problem.grid, problem.phi(inverse_flow(problem, t, x)))


def _u(problem, t, x):
    return problem.phi(inverse_flow(problem, t, np.asarray(x, dtype=float)))


def transport_residual(problem, t, x, delta=None, h=None, form="integral"):
    """
    Residual of the transport equation at time ``t`` on the points ``x``.

    ``form="integral"`` (default) returns
    ``|(u(t+delta) - u(t)) / delta + (1/delta) int_t^{t+delta} (b + L_s) d_x u ds|``
    with the path average of ``L`` taken exactly from its integral and the
    remaining factors by the trapezoid rule. ``form="pointwise"`` returns
    ``|d+_t u + (b(t, x) + L_t) d_x u|`` with a right difference quotient;
    its error carries the path increment ``L_{t+delta} - L_t`` and so decays
    only like ``delta^(1/alpha)``. Space differences are centred with step
    ``h``. Rejects ``t`` within one ODE step of a recorded jump of the path.
    """
    if form not in ("integral", "pointwise"):
        raise ValueError("form must be 'integral' or 'pointwise'")
    delta = problem.dt / 8 if delta is None else delta
    h = problem.dt / 8 if h is None else h
    jt = problem.path.jump_times
    near = np.abs(jt - t) <= problem.dt + delta
    if np.any(near):
        cands = np.concatenate([jt - 1.5 * problem.dt - delta, jt + 1.5 * problem.dt + delta])
        cands = cands[(cands >= 0) & (cands + delta <= problem.T)]
        ok = [c for c in cands if not np.any(np.abs(jt - c) <= problem.dt + delta)]
        safe = min(ok, key=lambda c: abs(c - t)) if ok else np.nan
        raise JumpAdjacentError(t, safe)
    x = np.atleast_1d(np.asarray(x, dtype=float))
    ut = (_u(problem, t + delta, x) - _u(problem, t, x)) / delta
    ux = (_u(problem, t, x + h) - _u(problem, t, x - h)) / (2 * h)
    if form == "pointwise":
        return np.abs(ut + (problem.drift(t, x) + problem.L(t)) * ux)
    ux1 = (_u(problem, t + delta, x + h) - _u(problem, t + delta, x - h)) / (2 * h)
    lam = problem.Lambda(np.array([t, t + delta]))
    lbar = (lam[1] - lam[0]) / delta
    flux = 0.5 * (problem.drift(t, x) * ux + problem.drift(t + delta, x) * ux1) + lbar * 0.5 * (ux + ux1)
    return np.abs(ut + flux)
