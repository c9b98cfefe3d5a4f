"""Vanishing-viscosity study: sweeps, Osgood utilities, envelope fits, continuation."""

from __future__ import annotations

import logging
import math
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate, optimize

from . import dynamics

log = logging.getLogger(__name__)

FIT_FLOOR_FACTOR = 100.0
DOMINANCE_MARGIN = 1.05
ALPHA_MAX = 1.05
ALPHA_TREND_TOL = 0.1


class SweepError(RuntimeError):
    """A sweep run failed; ``partial`` maps finished viscosities to their trajectories."""

    def __init__(self, message, partial):
        super().__init__(message)
        self.partial = partial


def max_threads():
    """Worker cap from ``LAKE_THREADS`` (default: CPU count)."""
    raw = os.environ.get("LAKE_THREADS")
    if raw is None or raw == "":
        return os.cpu_count() or 1
    try:
        n = int(raw)
    except ValueError:
        raise ValueError(f"LAKE_THREADS must be a positive integer, got {raw!r}") from None
    if n < 1:
        raise ValueError(f"LAKE_THREADS must be a positive integer, got {raw!r}")
    return n


# {{{ Osgood utilities


def osgood_bound(rho0, modulus, alpha, t):
    """Bound on ``rho(t)`` from ``rho(t) <= rho0 + int_0^t alpha(s) modulus(rho(s)) ds``.

    With ``Omega(x) = int_x^1 dr / modulus(r)`` the bound is
    ``Omega^-1(Omega(rho0) - int_0^t alpha)``, found by monotone inversion.
    ``alpha`` is a callable or a constant rate. Returns ``inf`` when the
    bound escapes to infinity within ``t``.
    """
    if rho0 < 0 or t < 0:
        raise ValueError("rho0 and t must be non-negative")
    if rho0 == 0:
        return 0.0
    if callable(alpha):
        A = integrate.quad(alpha, 0.0, t, limit=200)[0] if t > 0 else 0.0
    else:
        A = float(alpha) * t
    if A == 0:
        return float(rho0)
    if A < 0:
        raise ValueError("integrated rate must be non-negative")

    def inv_mod(r):
        w = modulus(r)
        if not w > 0:
            raise ValueError(f"modulus must be positive, got {w} at r={r}")
        return 1.0 / w

    def Omega(x):
        # r = e^s keeps quad well conditioned over many decades
        val, _ = integrate.quad(lambda s: math.exp(s) * inv_mod(math.exp(s)), math.log(x), 0.0,
                                limit=200, epsabs=0.0, epsrel=1e-13)
        return val

    target = Omega(rho0) - A
    lo, hi = float(rho0), max(2.0 * rho0, 1.0)
    # Omega decreases in x; expand until the root is bracketed
    while Omega(hi) > target:
        lo, hi = hi, 2.0 * hi
        if hi > 1e300:
            return math.inf
    return optimize.brentq(lambda x: Omega(x) - target, lo, hi, xtol=1e-300, rtol=4 * np.finfo(float).eps,
                           maxiter=500)


def viscosity_envelope(gamma0, mu, t, M, Ctilde, C):
    """``C M^(2 (1 - e)) (gamma0 + mu t)^e`` with ``e = exp(-Ctilde t)``."""
    if gamma0 < 0 or mu < 0 or t < 0:
        raise ValueError("gamma0, mu and t must be non-negative")
    if not M > 1 or not Ctilde > 0 or not C > 0:
        raise ValueError("need M > 1, Ctilde > 0, C > 0")
    base = gamma0 + mu * t
    if not base < M * M:
        raise ValueError(f"gamma0 + mu t = {base} must stay below M^2 = {M * M}")
    e = math.exp(-Ctilde * t)
    return C * M ** (2.0 * (1.0 - e)) * base**e


# }}}


def weighted_difference(u1, u2, bath):
    """``||sqrt(b) (u1 - u2)||_2^2`` with the unregularised depth."""
    d = np.asarray(u1) - np.asarray(u2)
    return bath.grid.integrate(bath.b * np.sum(d * d, axis=0))


def sup_velocity(u):
    return float(np.max(np.sqrt(np.sum(np.asarray(u) ** 2, axis=0))))


@dataclass(frozen=True)
class SweepPlan:
    """Viscous runs against one inviscid reference, all on ``config``'s grid and depth."""

    config: object
    mu_list: tuple
    times: tuple

    def __post_init__(self):
        mus = tuple(float(m) for m in self.mu_list)
        times = tuple(sorted(float(t) for t in self.times))
        object.__setattr__(self, "mu_list", mus)
        object.__setattr__(self, "times", times)
        if not mus:
            raise ValueError("mu_list is empty")
        if any(not m > 0 for m in mus):
            raise ValueError("mu_list entries must be positive")
        if any(a < b for a, b in zip(mus, mus[1:])):
            raise ValueError("mu_list must be decreasing")
        if not times or times[0] < 0:
            raise ValueError("comparison times must be non-negative and non-empty")

    @classmethod
    def from_config(cls, cfg, mu_list=None):
        return cls(cfg, tuple(mu_list or cfg.sweep.mu_list), tuple(cfg.sweep.times))


@dataclass
class RateReport:
    mu_list: tuple
    times: tuple
    D: np.ndarray  # D[i, k] for mu_list[i], times[k]
    envelope: np.ndarray
    alpha: dict  # t -> fitted slope (None when fewer than two usable points)
    alpha_residual: dict
    M: float
    Ctilde: float
    C: float
    floor: float
    flags: dict = field(default_factory=dict)

    def rows(self):
        for k, t in enumerate(self.times):
            for i, mu in enumerate(self.mu_list):
                yield {
                    "t": t, "mu": mu, "D": float(self.D[i, k]),
                    "envelope": float(self.envelope[i, k]),
                    "alpha_fit": self.alpha[t], "M_fit": self.M, "Ctilde_fit": self.Ctilde,
                }


def _run_all(configs, stop_times):
    """Run configs concurrently; results keyed by position. Raises :class:`SweepError` on failure."""
    results, errors = {}, {}
    with ThreadPoolExecutor(max_workers=min(max_threads(), len(configs))) as pool:
        futs = {pool.submit(dynamics.run, c, stop_times): k for k, c in enumerate(configs)}
        for fut, k in futs.items():
            try:
                results[k] = fut.result()
            except Exception as exc:  # noqa: BLE001 - reported with partial results
                errors[k] = exc
    if errors:
        k, exc = min(errors.items())
        raise SweepError(f"run {k} (mu={configs[k].mu}) failed: {exc}", results) from exc
    return [results[k] for k in range(len(configs))]


def fit_slope(mus, D, floor):
    """Least-squares slope of ``log D`` against ``log mu`` over points above ``100 floor``."""
    mus, D = np.asarray(mus, float), np.asarray(D, float)
    keep = D > FIT_FLOOR_FACTOR * floor
    if np.count_nonzero(keep) < 2 or np.unique(mus[keep]).size < 2:
        return None, None
    x, y = np.log(mus[keep]), np.log(D[keep])
    coef, res, *_ = np.polyfit(x, y, 1, full=True)
    return float(coef[0]), float(res[0]) if res.size else 0.0


def fit_envelope(mus, times, D, M, gamma0=None):
    """Fit ``(Ctilde, C)`` so the envelope dominates every ``D`` and hugs it in the log mean.

    For a given ``Ctilde`` the smallest admissible ``C >= 1`` is explicit; ``Ctilde``
    is then chosen to minimise the mean squared log gap over the positive entries.
    """
    mus = np.asarray(mus, float)
    times = np.asarray(times, float)
    D = np.asarray(D, float)
    g0 = np.zeros(len(mus)) if gamma0 is None else np.asarray(gamma0, float)
    tiny = np.finfo(float).tiny

    def shape(ct):
        e = np.exp(-ct * times)[None, :]
        base = g0[:, None] + mus[:, None] * times[None, :]
        return M ** (2.0 * (1.0 - e)) * base**e

    def c_for(ct):
        s = shape(ct)
        pos = D > 0
        ratio = np.where(pos, D / np.maximum(s, tiny), 0.0)
        return max(1.0, float(np.max(ratio)))

    def gap(log_ct):
        ct = math.exp(log_ct)
        s = shape(ct) * c_for(ct)
        pos = D > 0
        if not pos.any():
            return 0.0
        return float(np.mean((np.log(s[pos]) - np.log(D[pos])) ** 2))

    sol = optimize.minimize_scalar(gap, bounds=(math.log(1e-3), math.log(1e2)), method="bounded",
                                   options={"xatol": 1e-10})
    ct = math.exp(sol.x)
    return ct, c_for(ct)


def sweep(plan):
    """Run the inviscid reference and each viscous run; measure and fit the rate."""
    cfg = plan.config
    T = max(plan.times)
    stop = tuple(t for t in plan.times if t > 0)
    configs = [cfg.replace(mu=0.0, T=T)] + [cfg.replace(mu=m, T=T) for m in plan.mu_list]
    trajs = _run_all(configs, stop)
    ref = trajs[0]
    bath = ref.snapshots[0].bath

    nm, nt = len(plan.mu_list), len(plan.times)
    D = np.zeros((nm, nt))
    gamma0 = np.zeros(nm)
    M = 0.0
    for i, tr in enumerate(trajs[1:]):
        gamma0[i] = weighted_difference(tr.snapshots[0].u, ref.snapshots[0].u, bath)
        for k, t in enumerate(plan.times):
            a, b = tr.at(t), ref.at(t)
            D[i, k] = weighted_difference(a.u, b.u, bath)
            M = max(M, sup_velocity(a.u) + sup_velocity(b.u))
    if not M > 1:
        # the envelope needs M > 1; the velocity bound is only an upper bound, so raising it is safe
        log.info("velocity scale %.3g below 1, envelope uses M = 1 + 1e-6", M)
        M = max(M, 1.0 + 1e-6)

    E0 = ref.diagnostics.energy[0]
    floor = np.finfo(float).eps * max(E0, np.finfo(float).tiny)
    alpha, alpha_res = {}, {}
    for k, t in enumerate(plan.times):
        alpha[t], alpha_res[t] = fit_slope(plan.mu_list, D[:, k], floor)

    Ctilde, C = fit_envelope(plan.mu_list, plan.times, D, M, gamma0)
    env = np.array([[viscosity_envelope(gamma0[i], mu, t, M, Ctilde, C) for t in plan.times]
                    for i, mu in enumerate(plan.mu_list)])

    flags = {
        "dominated": bool(np.all(D <= DOMINANCE_MARGIN * env)),
        "monotone": bool(np.all(np.diff(D, axis=0) < 0)) if nm > 1 else True,
        "alpha_in_range": all(a is not None and 0 < a <= ALPHA_MAX for a in alpha.values()),
    }
    fitted = [alpha[t] for t in plan.times if alpha[t] is not None]
    flags["alpha_trend"] = len(fitted) < 2 or fitted[0] >= fitted[-1] - ALPHA_TREND_TOL
    return RateReport(plan.mu_list, plan.times, D, env, alpha, alpha_res, M, Ctilde, C, float(floor), flags)


def epsilon_continuation(cfg, epsilon_schedule):
    """Rerun ``cfg`` for each depth regularisation; differences between consecutive levels at ``T``.

    Returns ``(rows, trajectories)`` with rows ``{"eps_a", "eps_b", "diff"}`` where
    ``diff = ||sqrt(b) (u^a - u^b)(T)||_2``.
    """
    sched = [float(e) for e in epsilon_schedule]
    if not sched:
        raise ValueError("epsilon schedule is empty")
    if any(not e > 0 for e in sched) or any(a < b for a, b in zip(sched, sched[1:])):
        raise ValueError("epsilon schedule must be positive and decreasing")
    trajs = _run_all([cfg.replace(epsilon=e) for e in sched], ())
    bath = trajs[-1].snapshots[0].bath
    rows = []
    for (ea, ta), (eb, tb) in zip(zip(sched, trajs), zip(sched[1:], trajs[1:])):
        d = weighted_difference(ta.snapshots[-1].u, tb.snapshots[-1].u, bath)
        rows.append({"eps_a": ea, "eps_b": eb, "diff": math.sqrt(d)})
    return rows, trajs


def perturbation_field(grid):
    """Fixed smooth perturbation shape with unit max norm, zero on the boundary."""
    f = (1.0 - grid.R**2) * (grid.X + 0.5 * grid.Y**2 - 0.3 * grid.X * grid.Y)
    return f / np.max(np.abs(f))


@dataclass
class UniquenessReport:
    times: list
    differences: list  # ||sqrt(b)(u1 - u2)(t)||^2
    envelope: list
    gamma0: float
    passed: bool


def uniqueness_check(cfg, perturbation_scale, M, Ctilde, C, samples=20):
    """Twin inviscid runs from data ``perturbation_scale`` apart, compared to the envelope at ``mu = 0``."""
    if cfg.mu != 0:
        raise ValueError("uniqueness check runs the inviscid system (mu = 0)")
    if not 0 <= perturbation_scale <= 1e-10:
        raise ValueError("perturbation_scale must lie in [0, 1e-10]")
    grid, bath, op, s0 = dynamics.setup(cfg)
    om0 = s0.omega
    om1 = om0 + perturbation_scale * np.max(np.abs(om0)) * perturbation_field(grid)
    step = cfg.T / samples if cfg.T > 0 else None
    run_cfg = cfg.replace(snapshot_every=step)
    t1 = dynamics.run(run_cfg)
    t2 = dynamics.run(run_cfg, initial_state=om1)
    times, diffs, env = [], [], []
    gamma0 = weighted_difference(t1.snapshots[0].u, t2.snapshots[0].u, bath)
    for a, b in zip(t1.snapshots, t2.snapshots):
        times.append(a.t)
        diffs.append(weighted_difference(a.u, b.u, bath))
        env.append(viscosity_envelope(gamma0, 0.0, a.t, M, Ctilde, C))
    passed = all(d <= e for d, e in zip(diffs, env))
    return UniquenessReport(times, diffs, env, gamma0, passed)
