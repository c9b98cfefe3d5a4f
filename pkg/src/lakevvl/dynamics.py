"""Vorticity transport with degenerate viscous forcing, integrated by SSP-RK3.

The evolved quantity is the potential vorticity ``omega = b_eps^-1 curl u`` of
the regularised system (depth ``b + epsilon``). For ``mu > 0`` its tendency is
the curl of the momentum equation divided by the depth:

    d_t omega = -u.grad omega
                + mu (lap omega + 3 grad(ln b_eps).grad omega + G(u, grad u))
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .elliptic import StreamOperator, polar_velocity
from .grid import Bathymetry, Grid, build_grid, check_field, eval_bathymetry

log = logging.getLogger(__name__)

BLOWUP_FACTOR = 10.0


class NumericalAbort(RuntimeError):
    """Time integration produced non-finite or runaway values."""


@dataclass(frozen=True)
class SchemeConfig:
    scheme: str = "ssprk3"
    cfl_advective: float = 0.5
    cfl_diffusive: float = 0.5
    dealias: bool = True
    dt_max: float = 1e-2
    dt: float | None = None

    def __post_init__(self):
        if self.scheme != "ssprk3":
            raise ValueError(f"unknown scheme {self.scheme!r}")
        for name in ("cfl_advective", "cfl_diffusive"):
            v = getattr(self, name)
            if not 0 < v <= 1:
                raise ValueError(f"{name} must lie in (0, 1], got {v}")
        if not self.dt_max > 0:
            raise ValueError("dt_max must be positive")


@dataclass(frozen=True, eq=False)
class SimState:
    t: float
    omega: np.ndarray
    psi: np.ndarray
    u: np.ndarray
    mu: float
    bath: Bathymetry
    u_polar: tuple = field(repr=False, default=None)

    @property
    def grid(self) -> Grid:
        return self.bath.grid


def make_state(omega, t, mu, op):
    """Build a consistent state: impose ``omega = 0`` on ``r = 1`` and recover the velocity."""
    bath = op.bath
    omega = np.array(check_field(omega, bath.grid, name="omega"))
    omega[-1] = 0.0
    psi = op.solve(bath.b_eps * omega)
    ur, ut = polar_velocity(op, psi)
    u = bath.grid.to_cartesian(ur, ut)
    return SimState(float(t), omega, psi, u, float(mu), bath, (ur, ut))


# {{{ initial data


def initial_vorticity(grid, kind, **params):
    """Initial potential vorticity from the scenario library.

    ``radial``  ``1 - r^2``; steady under inviscid flow.
    ``blob``    off-centre Gaussian, drifts along the depth contours.
    ``dipole``  counter-rotating pair that runs into the shore.
    """
    X, Y = grid.X, grid.Y

    def gauss(x0, y0, sigma):
        return np.exp(-((X - x0) ** 2 + (Y - y0) ** 2) / (2 * sigma**2))

    if kind == "radial":
        om = params.get("amplitude", 1.0) * (1.0 - grid.R**2)
    elif kind == "blob":
        om = params.get("amplitude", 5.0) * gauss(
            params.get("x0", 0.35), params.get("y0", 0.0), params.get("sigma", 0.12))
    elif kind == "dipole":
        sep = params.get("separation", 0.3)
        sigma = params.get("sigma", 0.1)
        x0 = params.get("x0", 0.0)
        om = params.get("amplitude", 5.0) * (gauss(x0, sep / 2, sigma) - gauss(x0, -sep / 2, sigma))
    elif kind == "zero":
        om = np.zeros(grid.shape)
    else:
        raise ValueError(f"unknown initial data {kind!r}")
    om = np.array(om, dtype=float)
    om[-1] = 0.0
    return om


def smooth_random_field(grid, rng, degree=4):
    """Random polynomial in ``(x, y)`` of total degree ``degree``, unit max norm."""
    f = np.zeros(grid.shape)
    for i in range(degree + 1):
        for j in range(degree + 1 - i):
            f = f + rng.standard_normal() * grid.X**i * grid.Y**j
    return f / np.max(np.abs(f))


# }}}


def _polar_parts(u, bath):
    g = bath.grid
    ur, ut = g.to_polar(u)
    gu = g.velocity_gradient(u)
    # shear strain D_{r theta} in the rotating polar frame
    er = np.stack([g.cos, g.sin])
    et = np.stack([-g.sin, g.cos])
    ge_t = np.einsum("ij...,j...->i...", gu, et)
    ge_r = np.einsum("ij...,j...->i...", gu, er)
    d_rt = 0.5 * (np.sum(er * ge_t, axis=0) + np.sum(et * ge_r, axis=0))
    return ur, ut, d_rt


def compute_G(u, bath, omega=None):
    """Lower-order viscous forcing ``G``, linear in ``(u, grad u)``.

    For a radial depth, with ``l = ln b_eps`` and primes along ``r``:

        G = (lap b / b_eps + l'^2) omega
            + 2 (l'' - l'/r) D_{r theta} / b_eps
            - l'^2 d_theta(u_r) / (r b_eps)

    The middle term is the curl of the Hessian-strain coupling, the last the
    curl of ``grad l (u . grad l)``. ``omega`` defaults to ``curl u / b_eps``.
    """
    g = bath.grid
    u = check_field(u, g, components=2, name="u")
    lp = bath.dlnb_dr  # raises for a degenerate depth without regularisation
    lpp = bath.d2lnb_dr2
    be = bath.b_eps
    if omega is None:
        omega = g.curl(u) / be
    ur, _, d_rt = _polar_parts(u, bath)
    R = g.R
    return ((bath.lap_b / be + lp * lp) * omega
            + 2.0 * (lpp - lp / R) * d_rt / be
            - lp * lp * g.ddtheta(ur) / (R * be))


def laplacian(grid, f):
    """Finite-volume Laplacian with ``f = 0`` on ``r = 1`` (same stencil as the stream operator)."""
    h, r = grid.h, grid.r_nodes[:-1]
    p = f[:-1]
    faces = np.arange(1, grid.n_r + 1) * h
    upper = faces / h
    upper[-1] *= 2.0
    lower = np.concatenate([[0.0], upper[:-1]])
    up = np.zeros_like(p)
    up[:-1] = p[1:] - p[:-1]
    up[-1] = -p[-1]
    down = np.zeros_like(p)
    down[1:] = p[1:] - p[:-1]
    out = np.zeros(grid.shape)
    out[:-1] = ((upper[:, None] * up - lower[:, None] * down) / (r * h)[:, None]
                + grid.d2dtheta2(p) / (r * r)[:, None])
    return out


def rhs(state, dealias=True):
    """Tendency ``d omega / dt`` on interior rings (boundary row is zero)."""
    g = state.grid
    bath = state.bath
    om = state.omega
    if state.u_polar is not None:
        ur, ut = state.u_polar
    else:
        ur, ut = g.to_polar(state.u)
    R, be = g.R, bath.b_eps

    om_r = g.ddr(om)
    om_t = g.ddtheta(om)
    # skew-symmetric split of u.grad(omega), using div(b u) from the same stencils
    advective = ur * om_r + ut * om_t / R
    flux = (g.ddr(R * be * ur * om) + g.ddtheta(be * ut * om)) / R
    div_bu = (g.ddr(R * be * ur) + g.ddtheta(be * ut)) / R
    transport = 0.5 * (advective + (flux - om * div_bu) / be)
    out = -transport

    if state.mu > 0:
        lp = bath.dlnb_dr
        visc = laplacian(g, om) + 3.0 * lp * om_r + compute_G(state.u, bath, omega=om)
        out = out + state.mu * visc

    out[-1] = 0.0
    out = g.polar_filter(out, dealias=dealias)
    out[-1] = 0.0
    bad = ~np.isfinite(out)
    if bad.any():
        j, k = np.argwhere(bad)[0]
        raise NumericalAbort(f"non-finite tendency at r={g.r_nodes[j]:.4f}, "
                             f"theta={g.theta_nodes[k]:.4f}, t={state.t}")
    return out


def diffusion_constant(bath, mu):
    """Stencil constant ``c_diff`` of the diffusive bound, relative to ``grid.min_spacing``.

    Covers the Laplacian (radial ``4/h^2`` plus filtered angular ``pi^2/h^2``)
    and the zeroth-order forcing rate of ``G``.
    """
    g = bath.grid
    c = 1.0 + 4.0 / np.pi**2
    if mu > 0:
        react = np.max(np.abs(bath.lap_b / bath.b_eps) + bath.dlnb_dr**2)
        c += g.min_spacing**2 * react
    return c


def stability_bound(umax, h, mu, c_diff, cfl_advective, cfl_diffusive, dt_max):
    """``min(cfl_adv h / umax, cfl_diff h^2 / (mu c_diff), dt_max)``, skipping vanishing terms."""
    dt = dt_max
    if umax > 0:
        dt = min(dt, cfl_advective * h / umax)
    if mu > 0:
        dt = min(dt, cfl_diffusive * h * h / (mu * c_diff))
    return dt


def cfl_dt(state, cfg):
    """Stable step from :func:`stability_bound` on ``grid.min_spacing``.

    The speed is ``||u||_inf``, plus the drift ``3 mu |grad ln b_eps|`` when viscous.
    """
    g = state.grid
    umax = float(np.max(np.sqrt(np.sum(state.u**2, axis=0))))
    if not np.isfinite(umax):
        raise NumericalAbort("velocity is not finite")
    speed = umax
    c_diff = 0.0
    if state.mu > 0:
        speed += 3.0 * state.mu * float(np.max(np.abs(state.bath.dlnb_dr)))
        c_diff = diffusion_constant(state.bath, state.mu)
    return stability_bound(speed, g.min_spacing, state.mu, c_diff,
                           cfg.cfl_advective, cfg.cfl_diffusive, cfg.dt_max)


def step(state, dt, cfg, op):
    """One Shu-Osher SSP-RK3 step; boundary value and velocity refreshed after every stage."""
    om0 = state.omega
    t, mu = state.t, state.mu

    def stage(om, tt):
        return make_state(om, tt, mu, op)

    def advance(s, frac):
        return s.omega + frac * dt * rhs(s, cfg.dealias)

    s1 = stage(advance(state, 1.0), t + dt)
    s2 = stage(0.75 * om0 + 0.25 * advance(s1, 1.0), t + 0.5 * dt)
    s3 = stage(om0 / 3.0 + 2.0 / 3.0 * advance(s2, 1.0), t + dt)

    old = float(np.max(np.abs(om0)))
    new = float(np.max(np.abs(s3.omega)))
    if not np.isfinite(new) or new > BLOWUP_FACTOR * old + 1e-300:
        raise NumericalAbort(f"|omega|_inf grew from {old:.3e} to {new:.3e} in one step at t={t}")
    return s3


@dataclass
class Trajectory:
    snapshots: list
    diagnostics: object
    config: object = None

    def at(self, t, tol=1e-12):
        for s in self.snapshots:
            if abs(s.t - t) <= tol:
                return s
        raise KeyError(f"no snapshot at t={t}")


def setup(cfg):
    """Grid, bathymetry, stream operator and initial state for a config."""
    grid = build_grid(cfg.n_r, cfg.n_theta)
    bath = eval_bathymetry(grid, cfg.a, cfg.epsilon)
    op = StreamOperator(bath)
    om0 = cfg.initial_field(grid)
    return grid, bath, op, make_state(om0, 0.0, cfg.mu, op)


def run(cfg, stop_times=(), initial_state=None, on_state=None):
    """Integrate ``cfg`` to ``cfg.T``.

    Snapshots are kept at ``t = 0``, every ``cfg.snapshot_every``, at each
    of ``stop_times`` (steps are shortened to land on them) and at ``T``.
    Diagnostics are recorded after every step.
    """
    from .diagnostics import DiagnosticsSeries

    cfg.validate()
    grid, bath, op, state = setup(cfg)
    if initial_state is not None:
        state = make_state(initial_state, 0.0, cfg.mu, op)

    T = cfg.T
    marks = set(float(t) for t in stop_times if 0 < t <= T)
    if cfg.snapshot_every:
        k = 1
        while k * cfg.snapshot_every < T - 1e-12:
            marks.add(k * cfg.snapshot_every)
            k += 1
    if T > 0:
        marks.add(T)
    marks = sorted(marks)

    series = DiagnosticsSeries(q=cfg.q)
    series.record(state, 0.0)
    snaps = [state]
    if on_state:
        on_state(state)
    scheme = cfg.scheme
    for target in marks:
        while state.t < target - 1e-12 * max(1.0, target):
            limit = cfl_dt(state, scheme)
            if scheme.dt is not None:
                if scheme.dt > limit * (1 + 1e-9):
                    raise NumericalAbort(f"fixed dt={scheme.dt} exceeds the stability bound {limit:.3e}")
                limit = scheme.dt
            dt = min(limit, target - state.t)
            if target - (state.t + dt) < 1e-9 * dt:
                dt = target - state.t
            state = step(state, dt, scheme, op)
            if abs(state.t - target) < 1e-12 * max(1.0, target):
                state = SimState(target, state.omega, state.psi, state.u, state.mu,
                                 state.bath, state.u_polar)
            series.record(state, dt)
            if on_state:
                on_state(state)
        snaps.append(state)
    return Trajectory(snaps, series, cfg)
