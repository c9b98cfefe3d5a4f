"""Polar grid of the unit disk, degenerate bathymetry and discrete operators.

Fields are plain ndarrays. A scalar field has shape ``(n_r + 1, n_theta)``:
rows ``0 .. n_r - 1`` are the staggered interior rings ``r_j = (j + 1/2) h``
and row ``n_r`` is the boundary ring ``r = 1``. A vector field has shape
``(2, n_r + 1, n_theta)`` and holds Cartesian components.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property

import numpy as np

MIN_NODES = 8


def _fd_weights(x0, nodes):
    """First-derivative weights at ``x0`` for a small stencil."""
    nodes = np.asarray(nodes, dtype=float)
    n = len(nodes)
    vander = np.vander(nodes - x0, n, increasing=True).T
    rhs = np.zeros(n)
    rhs[1] = 1.0
    return np.linalg.solve(vander, rhs)


@dataclass(frozen=True, eq=False)
class Grid:
    """Staggered polar mesh of the unit disk.

    Quadrature is the midpoint rule in ``r`` with the area factor ``r``
    and the trapezoid rule in ``theta``; both are exact for the constant.
    """

    n_r: int
    n_theta: int
    h: float = field(init=False)
    dtheta: float = field(init=False)
    r_nodes: np.ndarray = field(init=False, repr=False)
    theta_nodes: np.ndarray = field(init=False, repr=False)
    quad_weights: np.ndarray = field(init=False, repr=False)
    boundary_weights: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        set_ = object.__setattr__
        h = 1.0 / self.n_r
        dtheta = 2.0 * np.pi / self.n_theta
        r = np.append((np.arange(self.n_r) + 0.5) * h, 1.0)
        theta = np.arange(self.n_theta) * dtheta
        w = np.zeros((self.n_r + 1, self.n_theta))
        w[:-1] = (r[:-1] * h * dtheta)[:, None]
        set_(self, "h", h)
        set_(self, "dtheta", dtheta)
        set_(self, "r_nodes", r)
        set_(self, "theta_nodes", theta)
        set_(self, "quad_weights", w)
        set_(self, "boundary_weights", np.full(self.n_theta, dtheta))
        for arr in (r, theta, w, self.boundary_weights):
            arr.setflags(write=False)

    @property
    def shape(self):
        return (self.n_r + 1, self.n_theta)

    @property
    def n_interior(self):
        return self.n_r * self.n_theta

    @property
    def min_spacing(self):
        # angular resolution near the pole is capped by the polar filter
        return self.h / np.pi

    @cached_property
    def R(self):
        return np.broadcast_to(self.r_nodes[:, None], self.shape)

    @cached_property
    def cos(self):
        return np.broadcast_to(np.cos(self.theta_nodes), self.shape)

    @cached_property
    def sin(self):
        return np.broadcast_to(np.sin(self.theta_nodes), self.shape)

    @cached_property
    def X(self):
        return self.R * self.cos

    @cached_property
    def Y(self):
        return self.R * self.sin

    @cached_property
    def wavenumbers(self):
        return np.arange(self.n_theta // 2 + 1, dtype=float)

    @cached_property
    def _edge_weights(self):
        r = self.r_nodes
        return _fd_weights(r[-2], r[-4:]), _fd_weights(1.0, r[-4:])

    @cached_property
    def mode_cutoff(self):
        """Largest angular wavenumber kept on each ring by the polar filter."""
        cut = np.floor(np.pi * self.r_nodes / self.h)
        return np.clip(cut, 1, self.n_theta // 2).astype(int)

    # {{{ derivatives

    def ddtheta(self, f):
        """Spectral derivative along theta (Nyquist mode dropped)."""
        fh = np.fft.rfft(f, axis=-1)
        m = 1j * self.wavenumbers
        if self.n_theta % 2 == 0:
            m[-1] = 0.0
        return np.fft.irfft(fh * m, n=self.n_theta, axis=-1)

    def d2dtheta2(self, f):
        fh = np.fft.rfft(f, axis=-1)
        return np.fft.irfft(-fh * self.wavenumbers**2, n=self.n_theta, axis=-1)

    def ddr(self, f):
        """Radial derivative of a scalar field, all rows.

        Centred on interior rings, reflected through the pole on ring 0
        (``f(-r, theta) = f(r, theta + pi)``). The last ring and the
        boundary ring use four-point stencils on the outermost nodes; near
        the shore ``psi_r`` is divided by a depth as small as ``epsilon``,
        so the third-order edge matters.
        """
        f = np.asarray(f)
        h = self.h
        out = np.empty_like(f, dtype=np.result_type(f, float))
        out[..., 1:-2, :] = (f[..., 2:-1, :] - f[..., :-3, :]) / (2 * h)
        across = np.roll(f[..., 0, :], -(self.n_theta // 2), axis=-1)
        out[..., 0, :] = (f[..., 1, :] - across) / (2 * h)
        last, bnd = self._edge_weights
        tail = f[..., -4:, :]
        out[..., -2, :] = np.tensordot(last, tail, axes=([0], [-2]))
        out[..., -1, :] = np.tensordot(bnd, tail, axes=([0], [-2]))
        return out

    def gradient(self, f):
        """Cartesian gradient of a scalar field, shape ``(2, *grid.shape)``."""
        fr = self.ddr(f)
        ft = self.ddtheta(f) / self.R
        return np.stack([self.cos * fr - self.sin * ft, self.sin * fr + self.cos * ft])

    def to_polar(self, v):
        vr = self.cos * v[0] + self.sin * v[1]
        vt = -self.sin * v[0] + self.cos * v[1]
        return vr, vt

    def to_cartesian(self, vr, vt):
        return np.stack([self.cos * vr - self.sin * vt, self.sin * vr + self.cos * vt])

    def divergence(self, v):
        """``(1/r) d_r(r v_r) + (1/r) d_theta v_theta``; same stencils as :meth:`ddr`."""
        vr, vt = self.to_polar(v)
        return (self.ddr(self.R * vr) + self.ddtheta(vt)) / self.R

    def curl(self, v):
        vr, vt = self.to_polar(v)
        return (self.ddr(self.R * vt) - self.ddtheta(vr)) / self.R

    def velocity_gradient(self, u):
        """Array ``G[i, j] = d_j u_i`` of shape ``(2, 2, *grid.shape)``."""
        return np.stack([self.gradient(u[0]), self.gradient(u[1])])

    def polar_filter(self, f, dealias=False):
        """Drop angular modes the ring cannot resolve; optional 2/3 truncation."""
        cut = self.mode_cutoff
        if dealias:
            cut = np.minimum(cut, self.n_theta // 3)
        fh = np.fft.rfft(f, axis=-1)
        keep = self.wavenumbers[None, :] <= cut[:, None]
        return np.fft.irfft(fh * keep, n=self.n_theta, axis=-1)

    # }}}

    def integrate(self, f):
        return float(np.sum(self.quad_weights * f))

    def inner(self, f, g):
        return self.integrate(f * g)


def build_grid(n_r, n_theta):
    if int(n_r) != n_r or int(n_theta) != n_theta:
        raise ValueError("grid sizes must be integers")
    if n_r < MIN_NODES or n_theta < MIN_NODES:
        raise ValueError(f"grid sizes must be >= {MIN_NODES}, got ({n_r}, {n_theta})")
    if n_theta % 2:
        raise ValueError(f"n_theta must be even, got {n_theta}")
    return Grid(int(n_r), int(n_theta))


# {{{ bathymetry


@dataclass(frozen=True, eq=False)
class Bathymetry:
    """Radial depth profile ``b = (1 - r^2)^a`` plus its regularisation ``b + epsilon``.

    ``const`` replaces the profile by a constant depth; it exists so that
    flat-bottom fixtures share every code path with the degenerate case.
    """

    grid: Grid
    a: float
    epsilon: float
    const: float | None = None

    def profile(self, r):
        """Return ``(b, b', b'')`` at radii ``r`` in closed form."""
        r = np.asarray(r, dtype=float)
        if self.const is not None:
            z = np.zeros_like(r)
            return np.full_like(r, self.const), z, z
        a = self.a
        phi = np.clip(1.0 - r * r, 0.0, None)
        b = phi**a
        db = -2 * a * r * phi ** (a - 1)
        d2b = -2 * a * phi ** (a - 1) + 4 * a * (a - 1) * r * r * phi ** (a - 2)
        return b, db, d2b

    def _ring(self, r=None):
        return self.profile(self.grid.r_nodes if r is None else r)

    def _full(self, ring):
        return np.broadcast_to(ring[:, None], self.grid.shape)

    @cached_property
    def b(self):
        return self._full(self._ring()[0])

    @cached_property
    def b_eps(self):
        return self.b + self.epsilon

    def b_eps_at(self, r):
        return self.profile(r)[0] + self.epsilon

    @cached_property
    def db_dr(self):
        return self._full(self._ring()[1])

    @cached_property
    def grad_b(self):
        g = self.grid
        return np.stack([g.cos * self.db_dr, g.sin * self.db_dr])

    @cached_property
    def lap_b(self):
        b, db, d2b = self._ring()
        return self._full(d2b + db / self.grid.r_nodes)

    def _require_positive(self):
        if np.any(self._ring()[0] + self.epsilon <= 0):
            raise ValueError("ln b_eps terms need b + epsilon > 0 everywhere; use epsilon > 0")

    @cached_property
    def dlnb_dr(self):
        """Radial derivative of ``ln b_eps``."""
        self._require_positive()
        b, db, _ = self._ring()
        return self._full(db / (b + self.epsilon))

    @cached_property
    def d2lnb_dr2(self):
        self._require_positive()
        b, db, d2b = self._ring()
        be = b + self.epsilon
        return self._full(d2b / be - (db / be) ** 2)

    @cached_property
    def grad_ln_b_eps(self):
        g = self.grid
        return np.stack([g.cos * self.dlnb_dr, g.sin * self.dlnb_dr])

    @cached_property
    def kappa(self):
        return np.ones(self.grid.n_theta)


def eval_bathymetry(grid, a, epsilon):
    if not a >= 2:
        raise ValueError(f"a must be >= 2, got {a}")
    if not epsilon >= 0:
        raise ValueError(f"epsilon must be >= 0, got {epsilon}")
    return Bathymetry(grid, float(a), float(epsilon))


def constant_bathymetry(grid, value=1.0):
    """Flat bottom ``b == value`` (Navier-Stokes limit of the lake model)."""
    return Bathymetry(grid, np.nan, 0.0, const=float(value))


# }}}


def check_field(f, grid, components=1, name="field"):
    f = np.asarray(f, dtype=float)
    want = grid.shape if components == 1 else (components, *grid.shape)
    if f.shape != want:
        raise ValueError(f"{name} has shape {f.shape}, expected {want}")
    if not np.all(np.isfinite(f)):
        raise ValueError(f"{name} contains non-finite values")
    return f


def weighted_norm(f, bath, q, s=0.0, regularized=False):
    """``(int b^(s q) |f|^q dA)^(1/q)``; ``q = inf`` gives the max norm over interior nodes."""
    grid = bath.grid
    f = check_field(f, grid)
    if q == np.inf:
        return float(np.max(np.abs(f[:-1])))
    if q < 1:
        raise ValueError(f"q must be >= 1, got {q}")
    depth = bath.b_eps if regularized else bath.b
    integrand = np.abs(f) ** q
    if s:
        integrand = integrand * depth ** (s * q)
    return grid.integrate(integrand) ** (1.0 / q)


def boundary_integral(f, bath, weighted=False):
    """``sum f dS`` over the boundary ring, optionally weighted by ``b_eps`` there."""
    f = np.asarray(f, dtype=float)
    grid = bath.grid
    if f.shape != (grid.n_theta,):
        raise ValueError(f"boundary samples have length {f.shape}, expected {grid.n_theta}")
    if weighted:
        f = f * bath.b_eps[-1]
    return float(np.sum(f * grid.boundary_weights))

