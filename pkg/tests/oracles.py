"""Independent reference values built with sympy or by hand.

Nothing here imports the package's discrete operators; every function maps
node coordinates to exact values of a continuous quantity.
"""

from __future__ import annotations

import functools

import numpy as np
import sympy as sp

x, y, r = sp.symbols("x y r", real=True)


def depth_expr(a, epsilon):
    return (1 - x**2 - y**2) ** a + epsilon


@functools.lru_cache(maxsize=None)
def radial_profile(a):
    """Closed-form ``b, b', b'', lap b`` of ``(1 - r^2)^a`` as numpy callables of ``r``."""
    b = (1 - r**2) ** a
    db = sp.diff(b, r)
    d2b = sp.diff(b, r, 2)
    lap = d2b + db / r
    return tuple(sp.lambdify(r, sp.simplify(e), "numpy") for e in (b, db, d2b, lap))


def _curl(F):
    return sp.diff(F[1], x) - sp.diff(F[0], y)


def _grad(f):
    return sp.Matrix([sp.diff(f, x), sp.diff(f, y)])


@functools.lru_cache(maxsize=None)
def viscous_vorticity_oracle(psi_key, a, epsilon):
    """Exact fields for ``u = b^-1 grad_perp psi`` on depth ``b = (1 - r^2)^a + epsilon``.

    Returns callables of ``(X, Y)`` for ``u_x, u_y, omega`` and for ``G``, where
    ``G`` is what remains of ``b^-1 curl(b^-1 div(2 b D(u) - b div(u) I))``
    after removing ``lap omega + 3 grad(ln b) . grad omega``.
    """
    psi = sp.sympify(psi_key, locals={"x": x, "y": y})
    b = depth_expr(a, epsilon)
    u = sp.Matrix([-sp.diff(psi, y), sp.diff(psi, x)]) / b
    J = u.jacobian([x, y])
    D = (J + J.T) / 2
    divu = J[0, 0] + J[1, 1]
    S = 2 * b * D - b * divu * sp.eye(2)
    force = sp.Matrix([sp.diff(S[0, 0], x) + sp.diff(S[0, 1], y),
                       sp.diff(S[1, 0], x) + sp.diff(S[1, 1], y)]) / b
    omega = _curl(u) / b
    lap_w = sp.diff(omega, x, 2) + sp.diff(omega, y, 2)
    g = _grad(sp.log(b))
    G = _curl(force) / b - lap_w - 3 * (g.T * _grad(omega))[0]
    f = lambda e: sp.lambdify((x, y), e, "numpy")  # noqa: E731
    return f(u[0]), f(u[1]), f(omega), f(G)


def rigid_rotation_G(a, epsilon, rr):
    """``G`` for ``u = (-y, x)``: only the zeroth-order term survives."""
    b, db, d2b, lap = radial_profile(a)
    be = b(rr) + epsilon
    lp = db(rr) / be
    return (lap(rr) / be + lp * lp) * 2.0 / be


def rigid_rotation_G_at_half():
    """Hand evaluation at ``a = 2``, ``epsilon = 0.1``, ``r = 0.5``.

    ``b = 0.5625``, ``b' = -4 r (1 - r^2) = -1.5``, ``b'' = -4 + 12 r^2 = -1``,
    ``lap b = b'' + b' / r = -4``, ``b_eps = 0.6625``.
    """
    be = 0.6625
    lap_b = -1.0 + (-1.5) / 0.5
    lp = -1.5 / be
    return (lap_b / be + lp * lp) * 2.0 / be


def poisson_disk(rr):
    """``psi`` with ``lap psi = -1`` in the unit disk and ``psi = 0`` on its boundary."""
    return (1.0 - rr**2) / 4.0


def rotation_gradient_Lp(p):
    """``||grad u||_p`` for ``u = (-y, x)``: ``|grad u|_F = sqrt(2)`` on an area ``pi``."""
    return np.sqrt(2.0) * np.pi ** (1.0 / p)


def yudovich_rotation():
    return np.sqrt(2.0) / 3.0 * np.pi ** (1.0 / 3.0)


def shear_navier_defect(theta):
    """Residual of the slip identity for ``u = (y, 0)`` on the unit circle.

    ``D(u) n . tau = cos(2 theta) / 2``, ``u . tau = -sin^2 theta``, ``curl u = -1``.
    """
    return np.cos(2 * theta) / 2 - np.sin(theta) ** 2 + 0.5


def stream_velocity(psi_key):
    """``u = grad_perp psi`` (unit depth) as callables of ``(X, Y)``."""
    psi = sp.sympify(psi_key, locals={"x": x, "y": y})
    ux, uy = -sp.diff(psi, y), sp.diff(psi, x)
    return sp.lambdify((x, y), ux, "numpy"), sp.lambdify((x, y), uy, "numpy")
