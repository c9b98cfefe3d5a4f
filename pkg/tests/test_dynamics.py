import math

import numpy as np
import pytest

from lakevvl import dynamics
from lakevvl.config import SolverConfig
from lakevvl.dynamics import (NumericalAbort, SchemeConfig, cfl_dt, compute_G, initial_vorticity, make_state,
                              rhs, run, stability_bound, step)
from lakevvl.elliptic import StreamOperator
from lakevvl.grid import build_grid, constant_bathymetry, eval_bathymetry
from oracles import radial_profile, rigid_rotation_G, rigid_rotation_G_at_half, viscous_vorticity_oracle

PSI_GENERIC = "(1 - x**2 - y**2)**2 * (x + y**2 / 2 + 1)"


def rotation(g):
    return np.stack([-g.Y, g.X])


class TestComputeG:
    def test_zero(self, lake32):
        g = lake32.grid
        assert np.all(compute_G(np.zeros((2, *g.shape)), lake32) == 0)

    def test_flat_depth_vanishes(self, flat32, rng):
        u = rng.standard_normal((2, *flat32.grid.shape))
        assert np.max(np.abs(compute_G(u, flat32))) < 1e-12

    def test_hand_value_matches_oracle(self):
        assert rigid_rotation_G(2.0, 0.1, 0.5) == pytest.approx(rigid_rotation_G_at_half(), rel=1e-14)

    def test_rigid_rotation(self):
        g = build_grid(64, 32)
        bath = eval_bathymetry(g, 2.0, 0.1)
        G = compute_G(rotation(g), bath)
        exact = rigid_rotation_G(2.0, 0.1, g.r_nodes)[:, None]
        assert np.max(np.abs(G - exact)) < 1e-10 * np.max(np.abs(exact))

    def test_generic_flow_against_momentum_curl(self):
        # G is what is left of the curl of the viscous force after lap + 3 grad(ln b).grad
        ux, uy, om, G = viscous_vorticity_oracle(PSI_GENERIC, 2, 0.1)
        inner, whole = [], []
        for n in (32, 64, 128):
            g = build_grid(n, 64)
            bath = eval_bathymetry(g, 2.0, 0.1)
            u = np.stack([ux(g.X, g.Y), uy(g.X, g.Y)])
            exact = G(g.X, g.Y)
            diff = np.abs(compute_G(u, bath, omega=om(g.X, g.Y)) - exact)
            # G reaches ~1e5 in the shore zone, where the asymptotic rate sets in late
            inner.append(diff[g.r_nodes <= 0.8].max())
            whole.append(diff.max() / np.abs(exact).max())
        assert whole[-1] < 2e-3
        assert math.log2(inner[0] / inner[1]) > 1.9 and math.log2(inner[1] / inner[2]) > 1.9

    def test_needs_regularisation(self):
        g = build_grid(16, 16)
        with pytest.raises(ValueError):
            compute_G(rotation(g), eval_bathymetry(g, 2.0, 0.0))


def straightforward_rhs(state, nodes):
    """Term-by-term tendency at ``(j, k)`` nodes with plain centred differences."""
    g, bath, mu = state.grid, state.bath, state.mu
    h, dth = g.h, g.dtheta
    om = state.omega
    ur, ut = state.u_polar
    b, db, d2b, lap = radial_profile(bath.a)
    out = []
    for j, k in nodes:
        r = g.r_nodes[j]
        kp, km = (k + 1) % g.n_theta, (k - 1) % g.n_theta
        om_r = (om[j + 1, k] - om[j - 1, k]) / (2 * h)
        om_t = (om[j, kp] - om[j, km]) / (2 * dth)
        adv = ur[j, k] * om_r + ut[j, k] * om_t / r
        om_rr = (om[j + 1, k] - 2 * om[j, k] + om[j - 1, k]) / h**2
        om_tt = (om[j, kp] - 2 * om[j, k] + om[j, km]) / dth**2
        lap_om = om_rr + om_r / r + om_tt / r**2
        be = b(r) + bath.epsilon
        lp = db(r) / be
        lpp = d2b(r) / be - lp**2
        ut_r = (ut[j + 1, k] - ut[j - 1, k]) / (2 * h)
        ur_t = (ur[j, kp] - ur[j, km]) / (2 * dth)
        d_rt = 0.5 * (ut_r - ut[j, k] / r + ur_t / r)
        G = ((lap(r) / be + lp**2) * om[j, k] + 2 * (lpp - lp / r) * d_rt / be
             - lp**2 * ur_t / (r * be))
        out.append(-adv + mu * (lap_om + 3 * lp * om_r + G))
    return np.array(out)


class TestRhs:
    def test_radial_inviscid_is_steady(self, lake32):
        op = StreamOperator(lake32)
        s = make_state(initial_vorticity(lake32.grid, "radial"), 0.0, 0.0, op)
        assert np.max(np.abs(rhs(s))) < 1e-10

    def test_zero_state(self, lake32):
        s = make_state(np.zeros(lake32.grid.shape), 0.0, 0.1, StreamOperator(lake32))
        assert np.all(rhs(s) == 0)

    def test_boundary_row_zero(self, lake32):
        s = make_state(initial_vorticity(lake32.grid, "dipole"), 0.0, 0.01, StreamOperator(lake32))
        assert np.all(rhs(s)[-1] == 0)

    def test_independent_term_by_term(self):
        g = build_grid(48, 64)
        bath = eval_bathymetry(g, 2.0, 1e-2)
        s = make_state(1.0 - g.R**2, 0.0, 0.01, StreamOperator(bath))
        pick = np.random.default_rng(2024)
        nodes = list(zip(pick.integers(1, g.n_r - 1, 10), pick.integers(0, g.n_theta, 10)))
        ours = rhs(s)[tuple(np.array(nodes).T)]
        ref = straightforward_rhs(s, nodes)
        assert np.max(np.abs(ours - ref)) < 1e-8

    def test_non_finite_aborts(self, lake32):
        s = make_state(initial_vorticity(lake32.grid, "blob"), 0.0, 0.0, StreamOperator(lake32))
        bad = dynamics.SimState(0.0, s.omega * np.nan, s.psi, s.u, 0.0, s.bath, s.u_polar)
        with pytest.raises(NumericalAbort):
            rhs(bad)


class TestCfl:
    def test_zero_state_uses_dt_max(self, lake32):
        s = make_state(np.zeros(lake32.grid.shape), 0.0, 0.0, StreamOperator(lake32))
        assert cfl_dt(s, SchemeConfig(dt_max=0.02)) == 0.02

    def test_doubling_mu_halves_bound(self, lake32):
        op = StreamOperator(lake32)
        cfg = SchemeConfig(dt_max=1e9)
        a = cfl_dt(make_state(np.zeros(lake32.grid.shape), 0.0, 1e-3, op), cfg)
        b = cfl_dt(make_state(np.zeros(lake32.grid.shape), 0.0, 2e-3, op), cfg)
        assert a == pytest.approx(2 * b, rel=1e-14)

    def test_formula(self):
        assert stability_bound(2.0, 0.01, 0.0, 0.0, 0.5, 0.5, 1.0) == pytest.approx(0.0025, rel=1e-15)

    def test_advective_bound_on_grid(self, lake32):
        s = make_state(initial_vorticity(lake32.grid, "blob"), 0.0, 0.0, StreamOperator(lake32))
        umax = np.max(np.hypot(*s.u))
        assert cfl_dt(s, SchemeConfig(dt_max=1.0)) == pytest.approx(0.5 * lake32.grid.min_spacing / umax, rel=1e-14)

    @pytest.mark.parametrize("kw", [dict(cfl_advective=0.0), dict(cfl_diffusive=1.5), dict(dt_max=-1.0),
                                    dict(scheme="euler")])
    def test_invalid_scheme(self, kw):
        with pytest.raises(ValueError):
            SchemeConfig(**kw)


class TestStep:
    def test_zero_persists(self, lake32):
        op = StreamOperator(lake32)
        s = make_state(np.zeros(lake32.grid.shape), 0.0, 0.01, op)
        for _ in range(3):
            s = step(s, 1e-3, SchemeConfig(), op)
        assert np.all(s.omega == 0) and s.t == pytest.approx(3e-3)

    @pytest.mark.parametrize("mu", [0.0, 1e-2])
    def test_richardson_third_order(self, mu):
        g = build_grid(16, 32)
        bath = eval_bathymetry(g, 2.0, 1e-1)
        op = StreamOperator(bath)
        cfg = SchemeConfig()
        s0 = make_state(initial_vorticity(g, "blob"), 0.0, mu, op)
        dt0 = cfl_dt(s0, cfg)

        def gap(dt):
            one = step(s0, dt, cfg, op)
            two = step(step(s0, dt / 2, cfg, op), dt / 2, cfg, op)
            return np.max(np.abs(one.omega - two.omega))

        ratio = gap(dt0 / 2) / gap(dt0 / 4)
        # local error of a third-order scheme scales like dt^4: ratio near 16, at least 8
        assert ratio > 8, ratio

    def test_blowup_guard(self, lake32):
        op = StreamOperator(lake32)
        s = make_state(initial_vorticity(lake32.grid, "blob"), 0.0, 0.0, op)
        with pytest.raises(NumericalAbort):
            step(s, 50.0, SchemeConfig(), op)


class TestRun:
    def test_zero_horizon(self):
        tr = run(SolverConfig(n_r=16, n_theta=32, T=0.0))
        assert len(tr.snapshots) == 1 and tr.snapshots[0].t == 0.0
        assert len(tr.diagnostics) == 1

    def test_radial_steady(self):
        tr = run(SolverConfig(n_r=32, n_theta=64, initial="radial", T=1.0))
        s0, s1 = tr.snapshots[0], tr.snapshots[-1]
        g = s0.grid
        dev = math.sqrt(g.integrate((s1.omega - s0.omega) ** 2) / g.integrate(s0.omega**2))
        assert dev < 1e-3

    def test_stop_times_and_snapshots(self):
        cfg = SolverConfig(n_r=16, n_theta=32, T=0.3, snapshot_every=0.1)
        tr = run(cfg, stop_times=(0.15,))
        assert [s.t for s in tr.snapshots] == pytest.approx([0.0, 0.1, 0.15, 0.2, 0.3])
        assert tr.at(0.15).t == 0.15
        with pytest.raises(KeyError):
            tr.at(0.123)

    def test_deterministic(self):
        cfg = SolverConfig(n_r=16, n_theta=32, mu=1e-2, epsilon=1e-2, T=0.05)
        a, b = run(cfg), run(cfg)
        assert np.array_equal(a.snapshots[-1].omega, b.snapshots[-1].omega)
        assert a.diagnostics.energy == b.diagnostics.energy

    def test_viscous_difference_shrinks_with_mu(self):
        base = SolverConfig(n_r=32, n_theta=64, epsilon=1e-2, T=0.5)
        ref = run(base).snapshots[-1]
        diffs = []
        for mu in (1e-2, 1e-3):
            u = run(base.replace(mu=mu)).snapshots[-1].u
            diffs.append(ref.grid.integrate(ref.bath.b * np.sum((u - ref.u) ** 2, axis=0)))
        assert 0 < diffs[1] < diffs[0]

    def test_fixed_dt_above_bound_aborts(self):
        cfg = SolverConfig(n_r=16, n_theta=32, T=0.1, scheme=SchemeConfig(dt=0.05))
        with pytest.raises(NumericalAbort, match="stability"):
            run(cfg)

    def test_invalid_config(self):
        with pytest.raises(ValueError):
            run(SolverConfig(n_r=16, n_theta=32, a=1.0))


class TestInitialData:
    @pytest.mark.parametrize("kind", ["radial", "blob", "dipole", "zero"])
    def test_boundary_zero(self, grid32, kind):
        om = initial_vorticity(grid32, kind)
        assert om.shape == grid32.shape and np.all(om[-1] == 0)

    def test_unknown(self, grid32):
        with pytest.raises(ValueError):
            initial_vorticity(grid32, "vortex-sheet")

    def test_smooth_random_field_normalised(self, grid32, rng):
        f = dynamics.smooth_random_field(grid32, rng)
        assert np.max(np.abs(f)) == pytest.approx(1.0)

    def test_constant_depth_stream_velocity(self):
        g = build_grid(32, 64)
        flat = constant_bathymetry(g)
        s = make_state(-np.ones(g.shape), 0.0, 0.0, StreamOperator(flat))
        # omega is forced to zero on the boundary ring before the solve
        assert np.all(s.omega[-1] == 0)
