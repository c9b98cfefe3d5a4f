"""Quick invariant suite behind the ``verify`` command.

Constants marked FROZEN were fitted once on the scenarios below (blob,
dipole and radial data, ``mu`` in {1e-2, 1e-3}, grids 32 and 64) and are
now fixed: later runs must stay under them.
"""

from __future__ import annotations

import math

import numpy as np

from . import diagnostics as dg
from . import dynamics, experiment
from .config import SolverConfig
from .elliptic import StreamOperator, velocity_from_vorticity
from .grid import build_grid, constant_bathymetry, eval_bathymetry

# FROZEN: mu int ||sqrt(b) grad u||^2 dt <= C (||sqrt(b) u0||^2 + ||w0||^2); max fitted 2.33e-3
GRAD_ENERGY_C = 3e-3
# FROZEN: ||b^(1/q) w(t)||_q <= ||b^(1/q) w0||_q (1 + K mu t); max fitted 6.37e3
ENSTROPHY_K = 7.5e3

SCENARIOS = (("blob", 1e-2), ("dipole", 1e-2), ("radial", 1e-3))


class Check:
    def __init__(self, name, value, bound, passed):
        self.name, self.value, self.bound, self.passed = name, float(value), float(bound), bool(passed)

    def row(self):
        return {"check": self.name, "value": self.value, "bound": self.bound, "passed": self.passed}


def _le(name, value, bound):
    return Check(name, value, bound, value <= bound)


def _ge(name, value, bound):
    return Check(name, value, bound, value >= bound)


def run_suite(n_r=32, T=0.2):
    """Run every invariant check; returns a list of :class:`Check`."""
    checks = []
    g = build_grid(n_r, 2 * n_r)
    checks.append(_le("quadrature_area", abs(g.quad_weights.sum() - math.pi) / math.pi, 1e-12))
    checks.append(_le("boundary_length", abs(g.boundary_weights.sum() - 2 * math.pi) / (2 * math.pi), 1e-12))

    for a in (2.0, 3.0, 4.0):
        b = eval_bathymetry(g, a, 0.0)
        pos = b.b > 0
        ratio = np.max(np.sum(b.grad_b**2, axis=0)[pos] / b.b[pos])
        checks.append(_le(f"grad_b_bound_a{a:g}", ratio, 4 * a * a + 1e-9))

    bath = eval_bathymetry(g, 2.0, 1e-2)
    op = StreamOperator(bath)
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(g.shape), rng.standard_normal(g.shape)
    x[-1] = y[-1] = 0.0
    ax, ay = op.apply(x), op.apply(y)
    sym = abs(g.inner(ax, y) - g.inner(x, ay)) / max(abs(g.inner(ax, y)), 1e-300)
    checks.append(_le("stream_symmetry", sym, 1e-10))
    checks.append(_le("stream_negative", g.inner(ax, x), 0.0))

    # f = -1 is reproduced exactly; the quartic psi = (1 - r^4) / 4 measures the order
    exact_err, errs = 0.0, []
    for n in (n_r // 2, n_r, 2 * n_r):
        gg = build_grid(n, 2 * n)
        flat = StreamOperator(constant_bathymetry(gg))
        psi = flat.solve(-np.ones(gg.shape))
        exact_err = max(exact_err, math.sqrt(gg.integrate((psi - (1 - gg.R**2) / 4) ** 2)))
        psi = flat.solve(-4 * gg.R**2)
        errs.append(math.sqrt(gg.integrate((psi - (1 - gg.R**4) / 4) ** 2)))
    checks.append(_le("poisson_quadratic_exact", exact_err, 1e-12))
    order = math.log2(errs[-2] / errs[-1])
    checks.append(_ge("poisson_order", order, 1.9))

    om = dynamics.initial_vorticity(g, "blob")
    u = velocity_from_vorticity(om, bath, op)
    checks.append(_le("divergence_defect", dg.divergence_defect(u, bath), 1e-12))

    rot = np.stack([-g.Y, g.X])
    checks.append(_le("navier_identity_rotation", dg.navier_identity_residual(rot, bath), 1e-12))

    gronwall = experiment.osgood_bound(0.3, lambda r: r, 0.7, 1.0)
    checks.append(_le("osgood_gronwall", abs(gronwall - 0.3 * math.exp(0.7)) / (0.3 * math.exp(0.7)), 1e-10))
    env0 = experiment.viscosity_envelope(0.02, 0.01, 0.0, 2.0, 1.0, 1.5)
    checks.append(_le("envelope_t0", abs(env0 - 1.5 * 0.02), 0.0))
    envinf = experiment.viscosity_envelope(0.02, 0.0, 1e4, 2.0, 1.0, 1.5)
    checks.append(_le("envelope_tinf", abs(envinf - 1.5 * 4.0), 0.0))

    radial = dynamics.run(SolverConfig(n_r=n_r, n_theta=2 * n_r, initial="radial", T=T))
    s0, s1 = radial.snapshots[0], radial.snapshots[-1]
    dev = math.sqrt(g.integrate((s1.omega - s0.omega) ** 2) / g.integrate(s0.omega**2))
    checks.append(_le("radial_steadiness", dev, 1e-3))

    for init, mu in SCENARIOS:
        cfg = SolverConfig(n_r=n_r, n_theta=2 * n_r, mu=mu, epsilon=1e-2, initial=init, T=T)
        tr = dynamics.run(cfg)
        d, s0 = tr.diagnostics, tr.snapshots[0]
        tag = f"{init}_mu{mu:g}"
        checks.append(_le(f"energy_monotone_{tag}", dg.max_energy_increase(d), 1e-8 * d.energy[0]))
        checks.append(_le(f"grad_energy_{tag}", dg.gradient_energy_ratio(d, mu, s0.omega, s0.bath), GRAD_ENERGY_C))
        checks.append(_le(f"enstrophy_growth_{tag}", dg.enstrophy_growth_rate(d, mu), ENSTROPHY_K))
    return checks
