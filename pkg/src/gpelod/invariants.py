"""Mass, energy, momentum and center-of-mass functionals.

All functionals accept either the fine P1 space or a multiscale space;
anything nonlinear in the state is expanded to the fine grid first and
integrated with the shared 4-point Gauss rule, which is exact for the
quartic term.  The modified energy replaces |u|^4 by the squared L2
projection of the density onto the multiscale space; it is the quantity
the conservative stepper preserves exactly.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from .mesh import eval_p1_at_quad, integrate, p1_gradient


def _quadratic(matrix, u):
    return float(np.real(np.vdot(u, matrix @ u)))


def _beta(space, beta):
    return space.potential.beta if beta is None else float(beta)


def mass(space, u):
    return _quadratic(space.mass, u)


def energy(space, u, beta=None):
    """Energy with the exact quartic term, int |grad u|^2 + V|u|^2 + b/2 |u|^4."""
    beta = _beta(space, beta)
    out = _quadratic(space.stiffness, u) + _quadratic(space.potential_mass, u)
    if beta != 0.0:
        vals = eval_p1_at_quad(space.grid, space.expand(u))
        out += 0.5 * beta * float(integrate(space.grid, np.abs(vals) ** 4))
    return out


def modified_energy(space, u, beta=None):
    """Energy with |u|^4 replaced by the projected density squared."""
    beta = _beta(space, beta)
    out = _quadratic(space.stiffness, u) + _quadratic(space.potential_mass, u)
    if beta != 0.0:
        rho = space.project_density(u)
        out += 0.5 * beta * float(rho @ (space.mass @ rho))
    return out


def momentum(space, u):
    """P[u] = int 2 Im(conj(u) u')."""
    fine = space.expand(u)
    vals = eval_p1_at_quad(space.grid, fine)
    grad = p1_gradient(space.grid, fine)
    return float(integrate(space.grid, 2.0 * np.imag(np.conj(vals) * grad[:, None])))


def center_of_mass(space, u, normalized=False):
    """First moment of the density, optionally divided by the mass."""
    vals = eval_p1_at_quad(space.grid, space.expand(u))
    xc = float(integrate(space.grid, space.grid.quad_points("fine")
                         * np.abs(vals) ** 2))
    return xc / mass(space, u) if normalized else xc


@dataclass
class InvariantRecord:
    t: float
    mass: float
    energy: float
    momentum: float
    x_center: float
    energy_mod: Optional[float] = None


def record(space, u, t=0.0, beta=None):
    """All invariants of a state; the modified energy only where it exists."""
    mod = modified_energy(space, u, beta) if hasattr(space, "project_density") \
        else None
    return InvariantRecord(t=float(t), mass=mass(space, u),
                           energy=energy(space, u, beta),
                           momentum=momentum(space, u),
                           x_center=center_of_mass(space, u),
                           energy_mod=mod)


def invariants_of_function(grid, f, df, potential=None, beta=0.0, t=0.0):
    """Invariants of an analytic function, sampled at the quadrature points.

    f and df receive arrays of positions and must return the function and
    its spatial derivative.  No interpolation onto the grid takes place,
    so the only error is that of the element Gauss rule itself.
    """
    xq = grid.quad_points("fine")
    u = np.asarray(f(xq))
    du = np.asarray(df(xq))
    dens = np.abs(u) ** 2
    e = float(integrate(grid, np.abs(du) ** 2))
    if potential is not None:
        v = potential.v_values(xq)
        if v is not None:
            e += float(integrate(grid, v * dens))
    if beta:
        e += 0.5 * float(beta) * float(integrate(grid, dens ** 2))
    return InvariantRecord(
        t=float(t),
        mass=float(integrate(grid, dens)),
        energy=e,
        momentum=float(integrate(grid, 2.0 * np.imag(np.conj(u) * du))),
        x_center=float(integrate(grid, xq * dens)))
