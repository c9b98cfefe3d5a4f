"""Energies, weighted norms and identity residuals computed from states and series."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .elliptic import gradient_norm
from .grid import check_field, weighted_norm

SERIES_COLUMNS = ("t", "E", "enstrophy_q2", "enstrophy_qcfg", "omega_max", "dt")
EXTRA_COLUMNS = ("E_b", "strain", "div_sq", "boundary_drag", "grad_energy", "yudovich_L")
P_MAX = 40


def _depth(bath, regularized):
    return bath.b_eps if regularized else bath.b


def energy(state, regularized=True):
    """``int |u|^2 b_eps dA`` (or with the unregularised depth)."""
    return energy_of(state.u, state.bath, regularized)


def energy_of(u, bath, regularized=True):
    u = check_field(u, bath.grid, components=2, name="u")
    return bath.grid.integrate(np.sum(u * u, axis=0) * _depth(bath, regularized))


def strain_terms(u, bath):
    """Return ``(int Du:Du b_eps, int (div u)^2 b_eps)``."""
    g = bath.grid
    gu = g.velocity_gradient(u)
    D = 0.5 * (gu + np.swapaxes(gu, 0, 1))
    ddu = np.sum(D * D, axis=(0, 1))
    div = gu[0, 0] + gu[1, 1]
    be = bath.b_eps
    return g.integrate(ddu * be), g.integrate(div * div * be)


def boundary_drag(u, bath):
    """``int_{r=1} kappa |u . tau|^2 b_eps dS``."""
    g = bath.grid
    _, ut = g.to_polar(u)
    tang = ut[-1]
    return float(np.sum(bath.kappa * tang * tang * bath.b_eps[-1] * g.boundary_weights))


def grad_energy(u, bath):
    """``int |grad u|^2 b_eps dA`` with the Frobenius norm."""
    g = bath.grid
    gu = g.velocity_gradient(u)
    return g.integrate(np.sum(gu * gu, axis=(0, 1)) * bath.b_eps)


def weighted_enstrophy(omega, bath, q, regularized=False):
    """``|| b^(1/q) omega ||_q`` (``b_eps`` weight with ``regularized``)."""
    return weighted_norm(omega, bath, q, s=1.0 / q, regularized=regularized)


def navier_identity_residual(u, bath):
    """Max over boundary nodes of ``|D(u) n . tau + kappa (u . tau) - curl(u) / 2|``.

    Normal and tangential derivatives at ``r = 1`` come from the one-sided
    radial stencil and the spectral angular derivative.
    """
    g = bath.grid
    u = check_field(u, g, components=2, name="u")
    gu = g.velocity_gradient(u)[:, :, -1]
    c, s = g.cos[-1], g.sin[-1]
    n = np.stack([c, s])
    tau = np.stack([-s, c])
    D = 0.5 * (gu + np.swapaxes(gu, 0, 1))
    dn_tau = np.einsum("i...,ij...,j...->...", tau, D, n)
    curl = gu[1, 0] - gu[0, 1]
    u_tau = np.sum(u[:, -1] * tau, axis=0)
    return float(np.max(np.abs(dn_tau + bath.kappa * u_tau - 0.5 * curl)))


def yudovich_L(u, bath, p_max=P_MAX):
    """``max_{3 <= p <= p_max} ||grad u||_p / p`` over integer ``p``."""
    if p_max < 3:
        raise ValueError(f"p_max must be >= 3, got {p_max}")
    g = bath.grid
    gu = g.velocity_gradient(u)
    frob = np.sqrt(np.sum(gu * gu, axis=(0, 1)))[:-1].ravel()
    w = g.quad_weights[:-1].ravel()
    top = float(np.max(frob))
    if top == 0:
        return 0.0
    x = frob / top  # scaled to avoid overflow in high powers
    best = 0.0
    for p in range(3, int(p_max) + 1):
        best = max(best, top * float(np.sum(w * x**p)) ** (1.0 / p) / p)
    return best


def energy_balance_residual(window, mu):
    """Worst residual of the energy identity over the interior points of a window.

    ``window`` is a :class:`DiagnosticsSeries` (or a slice of one) with at
    least three records. At each interior time the residual is

        | dE/dt / 2 + 2 mu int Du:Du b - mu int (div u)^2 b + 2 mu int kappa |u.tau|^2 b |

    with a centred three-point derivative, normalised by ``mu max(int Du:Du b, 1)``
    (by 1 when ``mu = 0``).
    """
    t = np.asarray(window.times, dtype=float)
    if t.size < 3:
        raise ValueError("energy balance needs a window of at least three records")
    E = np.asarray(window.energy)
    S = np.asarray(window.strain)
    V = np.asarray(window.div_sq)
    B = np.asarray(window.boundary_drag)
    h0 = t[1:-1] - t[:-2]
    h1 = t[2:] - t[1:-1]
    if np.any(h0 <= 0) or np.any(h1 <= 0):
        raise ValueError("times must be strictly increasing")
    dE = (-(h1 / (h0 * (h0 + h1))) * E[:-2]
          + ((h1 - h0) / (h0 * h1)) * E[1:-1]
          + (h0 / (h1 * (h0 + h1))) * E[2:])
    mid = slice(1, -1)
    res = 0.5 * dE + mu * (2.0 * S[mid] - V[mid] + 2.0 * B[mid])
    norm = mu * np.maximum(S[mid], 1.0) if mu > 0 else np.ones_like(res)
    return float(np.max(np.abs(res) / norm))


@dataclass
class DiagnosticsSeries:
    """Per-step records of a run."""

    q: float = 4.0
    times: list = field(default_factory=list)
    dt: list = field(default_factory=list)
    energy: list = field(default_factory=list)
    energy_b: list = field(default_factory=list)
    strain: list = field(default_factory=list)
    div_sq: list = field(default_factory=list)
    boundary_drag: list = field(default_factory=list)
    enstrophy_q2: list = field(default_factory=list)
    enstrophy_q: list = field(default_factory=list)
    omega_max: list = field(default_factory=list)
    grad_energy: list = field(default_factory=list)
    yudovich_L: list = field(default_factory=list)

    def record(self, state, dt):
        if self.times and not state.t > self.times[-1]:
            raise ValueError(f"times must increase: {state.t} after {self.times[-1]}")
        u, bath = state.u, state.bath
        s, v = strain_terms(u, bath)
        row = {
            "times": state.t,
            "dt": dt,
            "energy": energy_of(u, bath, True),
            "energy_b": energy_of(u, bath, False),
            "strain": s,
            "div_sq": v,
            "boundary_drag": boundary_drag(u, bath),
            "enstrophy_q2": weighted_enstrophy(state.omega, bath, 2.0),
            "enstrophy_q": weighted_enstrophy(state.omega, bath, self.q),
            "omega_max": float(np.max(np.abs(state.omega))),
            "grad_energy": grad_energy(u, bath),
            "yudovich_L": yudovich_L(u, bath),
        }
        bad = [k for k, v in row.items() if not np.isfinite(v)]
        if bad:
            raise ValueError(f"non-finite diagnostics: {', '.join(bad)}")
        for k, v in row.items():
            getattr(self, k).append(float(v))

    def __len__(self):
        return len(self.times)

    def window(self, start, stop):
        out = DiagnosticsSeries(q=self.q)
        for name in self.__dataclass_fields__:
            if name != "q":
                setattr(out, name, getattr(self, name)[start:stop])
        return out

    def balance_residuals(self, mu):
        """Residual of the energy identity on each interior record (``None`` at the ends)."""
        n = len(self)
        out = [None] * n
        for k in range(1, n - 1):
            out[k] = energy_balance_residual(self.window(k - 1, k + 2), mu)
        return out

    def rows(self, mu=None):
        bal = self.balance_residuals(mu) if mu is not None and len(self) >= 3 else [None] * len(self)
        for k in range(len(self)):
            yield {
                "t": self.times[k],
                "E": self.energy[k],
                "enstrophy_q2": self.enstrophy_q2[k],
                "enstrophy_qcfg": self.enstrophy_q[k],
                "omega_max": self.omega_max[k],
                "dt": self.dt[k],
                "E_b": self.energy_b[k],
                "strain": self.strain[k],
                "div_sq": self.div_sq[k],
                "boundary_drag": self.boundary_drag[k],
                "grad_energy": self.grad_energy[k],
                "yudovich_L": self.yudovich_L[k],
                "balance_residual": bal[k],
            }


def max_energy_increase(series):
    """Largest one-step increase of the regularised energy (``<= 0`` when monotone)."""
    E = np.asarray(series.energy)
    if E.size < 2:
        return 0.0
    return float(np.max(np.diff(E)))


def gradient_energy_ratio(series, mu, omega0, bath):
    """``mu int_0^T ||sqrt(b) grad u||^2 dt / (||sqrt(b) u0||^2 + ||omega0||^2)`` by the trapezoid rule."""
    t = np.asarray(series.times)
    ge = np.asarray(series.grad_energy)
    if t.size < 2:
        return 0.0
    integral = float(np.sum(0.5 * (ge[1:] + ge[:-1]) * np.diff(t)))
    base = series.energy[0] + weighted_norm(omega0, bath, 2.0) ** 2
    return mu * integral / base if base > 0 else 0.0


def enstrophy_growth_rate(series, mu):
    """Smallest ``K`` with ``||b^(1/q) w(t)||_q <= ||b^(1/q) w0||_q (1 + K mu t)`` along the series."""
    t = np.asarray(series.times)
    z = np.asarray(series.enstrophy_q)
    if z[0] == 0 or t.size < 2:
        return 0.0
    rel = z[1:] / z[0] - 1.0
    if mu == 0:
        return float(np.max(rel, initial=0.0))
    return float(max(0.0, np.max(rel / (mu * t[1:]))))


def divergence_defect(u, bath, resolved=True):
    """``max |div(b_eps u)| / ||u||_inf`` with the grid's stencils, in extended precision.

    ``resolved`` restricts the check to the angular modes each ring keeps
    (the polar filter).
    """
    g = bath.grid
    u = np.asarray(u, dtype=np.longdouble)
    ur, ut = g.to_polar(u)
    be = bath.b_eps
    div = (g.ddr(g.R * be * ur) + g.ddtheta(be * ut)) / g.R
    if resolved:
        div = g.polar_filter(div)
    umax = float(np.max(np.sqrt(np.sum(u * u, axis=0))))
    d = float(np.max(np.abs(div[:-1])))
    return d / umax if umax > 0 else d
