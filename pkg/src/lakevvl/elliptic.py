"""Velocity recovery from vorticity through the degenerate stream-function problem.

With ``b u = grad_perp psi`` the constraint ``div(b u) = 0`` holds identically
and ``curl u = f`` becomes ``div(b_eps^-1 grad psi) = f`` with ``psi = 0`` on
the boundary circle.
"""

from __future__ import annotations

import logging

import numpy as np

from .grid import check_field, weighted_norm

log = logging.getLogger(__name__)


class SolverError(RuntimeError):
    """Stream solve did not reach its residual tolerance."""

    def __init__(self, message, residual):
        super().__init__(f"{message} (relative residual {residual:.3e})")
        self.residual = residual


class StreamOperator:
    """Finite-volume operator ``psi -> div(b_eps^-1 grad psi)``, ``psi = 0`` on ``r = 1``.

    Radial fluxes live on cell faces ``r = j h``; the face at the pole has no
    area and the boundary face sits half a cell from the last ring. The
    angular part is spectral. Because the depth is radial the operator is
    block diagonal in angular Fourier modes, and each block is a symmetric
    tridiagonal matrix in the quadrature inner product.
    """

    def __init__(self, bath, tol=1e-10, max_iter=5):
        grid = bath.grid
        if np.any(bath.b_eps_at(grid.r_nodes) <= 0):
            raise ValueError("stream operator needs b + epsilon > 0 (epsilon > 0 for degenerate depth)")
        self.bath = bath
        self.grid = grid
        self.tol = tol
        self.max_iter = max_iter

        h, r = grid.h, grid.r_nodes[:-1]
        faces = np.arange(1, grid.n_r + 1) * h
        coef = faces / bath.b_eps_at(faces) / h
        # Boundary face, h/2 from the last ring. The one-sided difference
        # misses psi_rr(1) h/4; at r = 1 the equation gives q' + q = f for
        # q = psi_r / b_eps, so the flux is corrected with the boundary
        # value of f (a diagonal change plus a right-hand-side term).
        bb, dbb, _ = bath.profile(np.array([1.0]))
        be1, dbe1 = float(bb[0]) + bath.epsilon, float(dbb[0])
        den = be1 + 0.25 * h * (be1 - dbe1)
        coef[-1] = 2.0 / (h * den)
        self._bnd_gain = 0.25 * h * be1 / den / (r[-1] * h)
        self._upper = coef  # flux coefficient on face j + 1/2
        self._lower = np.concatenate([[0.0], coef[:-1]])
        self._scale = 1.0 / (r * h)
        self._angular = 1.0 / (r * r * bath.b_eps_at(r))
        self._factor()

    def _factor(self):
        # Thomas elimination for every angular mode at once
        m2 = self.grid.wavenumbers**2
        sub = self._scale * self._lower
        sup = self._scale * self._upper
        diag = -(sub + sup)[:, None] - self._angular[:, None] * m2[None, :]
        n = self.grid.n_r
        cp = np.zeros((n, m2.size))
        dp = np.zeros((n, m2.size))
        dp[0] = diag[0]
        cp[0] = sup[0] / dp[0]
        for j in range(1, n):
            dp[j] = diag[j] - sub[j] * cp[j - 1]
            cp[j] = sup[j] / dp[j]
        self._sub, self._cp, self._dp = sub, cp, dp

    def apply(self, psi):
        """Operator applied to a full field; the boundary row of ``psi`` is ignored (taken as 0)."""
        g = self.grid
        p = np.asarray(psi, dtype=float)[:-1]
        up = np.zeros_like(p)
        up[:-1] = p[1:] - p[:-1]
        up[-1] = -p[-1]
        down = np.zeros_like(p)
        down[1:] = p[1:] - p[:-1]
        radial = self._scale[:, None] * (self._upper[:, None] * up - self._lower[:, None] * down)
        out = np.zeros(g.shape)
        out[:-1] = radial + self._angular[:, None] * g.d2dtheta2(p)
        return out

    def _apply_hat(self, ph):
        up = np.zeros_like(ph)
        up[:-1] = ph[1:] - ph[:-1]
        up[-1] = -ph[-1]
        down = np.zeros_like(ph)
        down[1:] = ph[1:] - ph[:-1]
        radial = self._scale[:, None] * (self._upper[:, None] * up - self._lower[:, None] * down)
        return radial - self._angular[:, None] * self.grid.wavenumbers**2 * ph

    def _direct_hat(self, fh):
        n = self.grid.n_r
        y = np.empty_like(fh)
        y[0] = fh[0] / self._dp[0]
        for j in range(1, n):
            y[j] = (fh[j] - self._sub[j] * y[j - 1]) / self._dp[j]
        for j in range(n - 2, -1, -1):
            y[j] -= self._cp[j] * y[j + 1]
        return y

    def _norm_hat(self, zh):
        # Parseval weights of a real transform: interior modes count twice
        w = np.full(zh.shape[-1], 2.0)
        w[0] = 1.0
        if self.grid.n_theta % 2 == 0:
            w[-1] = 1.0
        return float(np.sqrt(np.sum(w * np.abs(zh) ** 2)))

    def effective_rhs(self, f):
        """Interior right-hand side the operator is solved against.

        Equal to ``f`` except on the last ring, which absorbs the boundary
        value of ``f`` through the corrected boundary flux.
        """
        f = np.asarray(f, dtype=float)
        out = np.array(f[:-1])
        out[-1] -= self._bnd_gain * f[-1]
        return out

    def residual(self, psi, f):
        """Relative residual ``||A psi - f|| / ||f||`` on interior rings, evaluated mode by mode."""
        ph = np.fft.rfft(np.asarray(psi, dtype=float)[:-1], axis=-1)
        fh = np.fft.rfft(self.effective_rhs(f), axis=-1)
        return self._residual_hat(ph, fh)

    def _residual_hat(self, ph, fh):
        fn = self._norm_hat(fh)
        rn = self._norm_hat(self._apply_hat(ph) - fh)
        return rn / fn if fn > 0 else rn

    def solve(self, f):
        """Return ``psi`` with ``A psi = effective_rhs(f)`` on interior rings and ``psi = 0`` on the boundary."""
        f = check_field(f, self.grid, name="right-hand side")
        fh = np.fft.rfft(self.effective_rhs(f), axis=-1)
        ph = self._direct_hat(fh)
        res = self._residual_hat(ph, fh)
        it = 0
        while res > self.tol:
            if it >= self.max_iter:
                raise SolverError("stream solve exceeded refinement limit", res)
            ph += self._direct_hat(fh - self._apply_hat(ph))
            res = self._residual_hat(ph, fh)
            it += 1
        self.last_residual = res
        psi = np.zeros(self.grid.shape)
        psi[:-1] = np.fft.irfft(ph, n=self.grid.n_theta, axis=-1)
        return psi


def solve_stream(op, f):
    return op.solve(f)


def polar_velocity(op, psi):
    """``(u_r, u_theta) = b_eps^-1 grad_perp psi`` in polar components.

    The two derivatives of ``psi`` are taken in extended precision so that
    the rounded velocity inherits the exact commutation of the radial
    stencil with the angular transform (``div(b_eps u) = 0``) down to the
    last bit rather than to FFT rounding amplified by ``m / (r h)``.
    """
    g = op.grid
    be = op.bath.b_eps
    p = np.asarray(psi, dtype=np.longdouble)
    ur = (-g.ddtheta(p) / (g.R * be)).astype(float)
    ut = (g.ddr(p) / be).astype(float)
    ur[-1] = 0.0
    return ur, ut


def velocity_from_curl(f, op):
    """Velocity ``v`` with ``curl v = f``, ``div(b_eps v) = 0``, ``b_eps v . n = 0``; returns ``(psi, v)``."""
    psi = op.solve(f)
    ur, ut = polar_velocity(op, psi)
    return psi, op.grid.to_cartesian(ur, ut)


def velocity_from_vorticity(omega, bath, op):
    """Velocity from potential vorticity ``omega = b_eps^-1 curl u``."""
    if op.bath is not bath:
        raise ValueError("stream operator was assembled for a different bathymetry")
    omega = check_field(omega, bath.grid, name="omega")
    return velocity_from_curl(bath.b_eps * omega, op)[1]


def gradient_norm(grid, u, p):
    """``||grad u||_p`` with the pointwise Frobenius norm, over interior nodes."""
    gu = grid.velocity_gradient(u)
    frob = np.sqrt(np.sum(gu**2, axis=(0, 1)))
    if p == np.inf:
        return float(np.max(frob[:-1]))
    return grid.integrate(frob**p) ** (1.0 / p)


def elliptic_estimate_probe(bath, samples, p_list, op=None):
    """Ratios ``||grad v||_p / (||f||_p + ||b v||_2)`` and ``||v||_inf / (...)`` per sample and p.

    Rows for a zero sample are returned with ``None`` ratios (skipped).
    """
    if not samples:
        raise ValueError("probe needs at least one sample field")
    if any(p <= 2 for p in p_list):
        raise ValueError("probe exponents must exceed 2")
    op = op or StreamOperator(bath)
    grid = bath.grid
    rows = []
    for sid, f in enumerate(samples):
        f = check_field(f, grid, name=f"sample {sid}")
        _, v = velocity_from_curl(f, op)
        bv = np.sqrt(grid.integrate(np.sum((bath.b_eps * v) ** 2, axis=0)))
        vmax = float(np.max(np.sqrt(np.sum(v**2, axis=0))))
        for p in p_list:
            denom = weighted_norm(f, bath, p) + bv
            if denom == 0:
                rows.append({"p": p, "sample_id": sid, "ratio_grad": None, "ratio_sup": None})
                continue
            rows.append({
                "p": p,
                "sample_id": sid,
                "ratio_grad": gradient_norm(grid, v, p) / denom,
                "ratio_sup": vmax / denom,
            })
    return rows
