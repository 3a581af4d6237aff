"""Interval mesh hierarchy and P1 finite element assembly.

Everything lives on a uniform coarse mesh of an interval [a, b] together
with a dyadically refined fine mesh, so coarse hat functions are exactly
representable on the fine grid.  Homogeneous Dirichlet conditions are
imposed throughout by working with interior degrees of freedom only.
All integrals use the same fixed 4-point Gauss rule per element, which is
exact for the polynomial degrees that appear (products of up to four P1
functions).
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import Callable, Optional, Union

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import apply_real_lu

# reference 4-point Gauss-Legendre rule on [-1, 1]
GAUSS_POINTS, GAUSS_WEIGHTS = np.polynomial.legendre.leggauss(4)
# P1 shape functions at the reference quadrature points
SHAPE0 = 0.5 * (1.0 - GAUSS_POINTS)
SHAPE1 = 0.5 * (1.0 + GAUSS_POINTS)

Weight = Union[None, float, Callable[[np.ndarray], np.ndarray]]


class GridHierarchy:
    """Uniform coarse mesh with 2**refine fine elements per coarse element.

    Parameters
    ----------
    a, b : interval end points, a < b
    n_coarse : number of coarse elements (>= 2), H = (b - a)/n_coarse
    refine : dyadic refinement exponent r >= 0, h = H/2**r

    Interior fine nodes carry the fine degrees of freedom; there are
    n_coarse*2**refine - 1 of them.  Coarse node i sits on fine node
    i*2**refine.
    """

    def __init__(self, a, b, n_coarse, refine):
        a, b = float(a), float(b)
        if not b > a:
            raise ValueError("domain must satisfy a < b")
        if n_coarse < 2:
            raise ValueError("need at least two coarse elements")
        if refine < 0:
            raise ValueError("refinement exponent must be >= 0")
        self.a, self.b = a, b
        self.n_coarse = int(n_coarse)
        self.refine = int(refine)
        self.H = (b - a) / self.n_coarse
        self.stride = 2**self.refine          # fine elements per coarse element
        self.n_fine = self.n_coarse * self.stride
        self.h = self.H / self.stride
        self.n_fine_dofs = self.n_fine - 1
        self.n_coarse_dofs = self.n_coarse - 1

    def __repr__(self):
        return (f"GridHierarchy([{self.a}, {self.b}], n_coarse={self.n_coarse}, "
                f"refine={self.refine})")

    @cached_property
    def fine_nodes(self):
        return np.linspace(self.a, self.b, self.n_fine + 1)

    @cached_property
    def coarse_nodes(self):
        return np.linspace(self.a, self.b, self.n_coarse + 1)

    def spacing(self, level):
        return self.h if level == "fine" else self.H

    def n_elements(self, level):
        return self.n_fine if level == "fine" else self.n_coarse

    def quad_points(self, level="fine"):
        """Physical quadrature points, shape (n_elements, 4)."""
        if level == "fine":
            return self._quad_fine
        left = self.coarse_nodes[:-1]
        return left[:, None] + 0.5 * (GAUSS_POINTS + 1.0)[None, :] * self.H

    @cached_property
    def _quad_fine(self):
        left = self.fine_nodes[:-1]
        return left[:, None] + 0.5 * (GAUSS_POINTS + 1.0)[None, :] * self.h

    # --- assembled matrices (interior dofs, CSR) ---------------------------

    @cached_property
    def fine_mass(self):
        return assemble_p1_matrix(self, "fine", "mass")

    @cached_property
    def fine_stiffness(self):
        return assemble_p1_matrix(self, "fine", "stiffness")

    @cached_property
    def coarse_mass(self):
        return assemble_p1_matrix(self, "coarse", "mass")

    @cached_property
    def coarse_stiffness(self):
        return assemble_p1_matrix(self, "coarse", "stiffness")

    @cached_property
    def prolongation(self):
        """Nodal embedding of coarse interior dofs into fine interior dofs."""
        m = self.stride
        rows, cols, vals = [], [], []
        ramp = np.arange(1, m + 1) / m        # 1/m .. 1 climbing over one cell
        for i in range(1, self.n_coarse):
            base = (i - 1) * m                # fine node index (i-1)*m
            # climbing part on coarse cell i-1: fine nodes base+1 .. base+m
            rows.append(base + np.arange(1, m + 1) - 1)
            vals.append(ramp)
            # descending part on coarse cell i: fine nodes i*m+1 .. (i+1)*m-1
            rows.append(i * m + np.arange(1, m) - 1)
            vals.append(ramp[:-1][::-1])
            cols.append(np.full(2 * m - 1, i - 1))
        rows = np.concatenate(rows)
        cols = np.concatenate(cols)
        vals = np.concatenate(vals)
        return sp.csr_matrix((vals, (rows, cols)),
                             shape=(self.n_fine_dofs, self.n_coarse_dofs))

    @cached_property
    def _coarse_mass_solve(self):
        return spla.splu(self.coarse_mass.tocsc())

    @cached_property
    def coarse_moments(self):
        """Matrix of inner products <phi_H_i, phi_h_j> = P^T M_fine."""
        return (self.prolongation.T @ self.fine_mass).tocsr()


def assemble_p1_matrix(grid, level, kind, weight: Weight = None):
    """Assemble a P1 matrix on the requested level (interior dofs, CSR).

    kind is one of "mass", "stiffness", "weighted_mass".  For weighted
    mass the weight is a constant, a callable evaluated at the quadrature
    points, or a precomputed (n_elements, 4) array of point values.
    """
    n_el = grid.n_elements(level)
    dx = grid.spacing(level)
    n_dofs = n_el - 1
    if kind == "mass":
        return sp.diags([np.full(n_dofs - 1, dx / 6.0),
                         np.full(n_dofs, 2.0 * dx / 3.0),
                         np.full(n_dofs - 1, dx / 6.0)],
                        offsets=[-1, 0, 1], format="csr")
    if kind == "stiffness":
        return sp.diags([np.full(n_dofs - 1, -1.0 / dx),
                         np.full(n_dofs, 2.0 / dx),
                         np.full(n_dofs - 1, -1.0 / dx)],
                        offsets=[-1, 0, 1], format="csr")
    if kind != "weighted_mass":
        raise ValueError(f"unknown matrix kind {kind!r}")

    vals = _weight_values(grid, level, weight)
    if vals is None:
        return sp.csr_matrix((n_dofs, n_dofs))
    scale = GAUSS_WEIGHTS * (dx / 2.0)
    # local 2x2 blocks per element from the quadrature values
    w00 = vals @ (scale * SHAPE0 * SHAPE0)
    w01 = vals @ (scale * SHAPE0 * SHAPE1)
    w11 = vals @ (scale * SHAPE1 * SHAPE1)
    n_nodes = n_el + 1
    el = np.arange(n_el)
    rows = np.concatenate([el, el, el + 1, el + 1])
    cols = np.concatenate([el, el + 1, el, el + 1])
    data = np.concatenate([w00, w01, w01, w11])
    full = sp.coo_matrix((data, (rows, cols)), shape=(n_nodes, n_nodes)).tocsr()
    return full[1:-1, 1:-1]


def _weight_values(grid, level, weight: Weight):
    """Quadrature point values of a weight; None means identically zero."""
    if weight is None:
        return None
    if callable(weight):
        return np.asarray(weight(grid.quad_points(level)), dtype=float)
    arr = np.asarray(weight, dtype=float)
    if arr.ndim:
        expected = (grid.n_elements(level), 4)
        if arr.shape != expected:
            raise ValueError(
                f"weight values must have shape {expected}, got {arr.shape}")
        return arr
    w = float(arr)
    if w == 0.0:
        return None
    return np.full((grid.n_elements(level), 4), w)


# --- pointwise evaluation and quadrature -----------------------------------

def eval_p1_at_quad(grid, coeffs, level="fine"):
    """Values of a P1 function (interior dofs) at all quadrature points."""
    u = _padded(grid, coeffs, level)
    return u[:-1, None] * SHAPE0[None, :] + u[1:, None] * SHAPE1[None, :]


def p1_gradient(grid, coeffs, level="fine"):
    """Piecewise constant derivative of a P1 function, one value per element."""
    u = _padded(grid, coeffs, level)
    return np.diff(u) / grid.spacing(level)


def _padded(grid, coeffs, level):
    coeffs = np.asarray(coeffs)
    n = grid.n_elements(level) - 1
    if coeffs.shape != (n,):
        raise ValueError(f"expected {n} interior dofs, got {coeffs.shape}")
    u = np.zeros(n + 2, dtype=coeffs.dtype)
    u[1:-1] = coeffs
    return u

def integrate(grid, values, level="fine"):
    """Integrate quadrature-point values (n_elements, 4) over the interval."""
    scale = GAUSS_WEIGHTS * (grid.spacing(level) / 2.0)
    return (np.asarray(values) @ scale).sum()


def load_from_quad(grid, values, level="fine"):
    """Adjoint of quadrature evaluation: <f, phi_j> for every interior hat.

    values holds f at the quadrature points, shape (n_elements, 4).
    """
    dx = grid.spacing(level)
    values = np.asarray(values)
    left = values @ (GAUSS_WEIGHTS * SHAPE0 * (dx / 2.0))
    right = values @ (GAUSS_WEIGHTS * SHAPE1 * (dx / 2.0))
    n_nodes = grid.n_elements(level) + 1
    full = np.zeros(n_nodes, dtype=values.dtype)
    full[:-1] += left
    full[1:] += right
    return full[1:-1]


def prolong(grid, coarse_coeffs):
    """Nodal embedding of a coarse P1 function into the fine space."""
    return grid.prolongation @ np.asarray(coarse_coeffs)


def l2_project_coarse(grid, fine_coeffs):
    """L2 projection of a fine P1 function onto the coarse space."""
    rhs = grid.coarse_moments @ np.asarray(fine_coeffs)
    return apply_real_lu(grid._coarse_mass_solve, rhs)


# --- problem data ----------------------------------------------------------

@dataclass(frozen=True)
class PotentialSplit:
    """Potential V = V1 + V2 plus the cubic coupling beta.

    V1 enters the bilinear form that defines the multiscale decomposition
    and must be nonnegative; V2 is the remainder, only seen by the time
    stepper.  Either part may be None (zero), a constant, or a callable
    of position.
    """

    v1: Weight = None
    v2: Weight = None
    beta: float = 0.0

    def v1_values(self, x):
        vals = self._values(self.v1, x)
        if vals is not None and np.min(vals) < 0.0:
            raise ValueError("V1 must be nonnegative")
        return vals

    def v2_values(self, x):
        return self._values(self.v2, x)

    def v_values(self, x):
        v1 = self.v1_values(x)
        v2 = self.v2_values(x)
        if v1 is None:
            return v2
        if v2 is None:
            return v1
        return v1 + v2

    @staticmethod
    def _values(part, x):
        if part is None:
            return None
        if callable(part):
            return np.asarray(part(np.asarray(x)), dtype=float)
        val = float(part)
        if val == 0.0:
            return None
        return np.full(np.shape(x), val)

    @property
    def v1_uniform(self):
        """True when V1 is constant, so corrector problems are shift invariant."""
        return self.v1 is None or not callable(self.v1)


ZERO_POTENTIAL = PotentialSplit()


class FineSpace:
    """The fine-grid P1 space itself, wearing the same interface as LodSpace.

    Exposes mass/stiffness/potential matrices over interior fine dofs and
    trivial expand/restrict maps, so invariants and the classical time
    stepper can treat fine-grid and multiscale coordinates uniformly.
    """

    def __init__(self, grid, potential: Optional[PotentialSplit] = None):
        self.grid = grid
        self.potential = potential if potential is not None else ZERO_POTENTIAL
        self.n_dofs = grid.n_fine_dofs

    @cached_property
    def mass(self):
        return self.grid.fine_mass

    @cached_property
    def stiffness(self):
        return self.grid.fine_stiffness

    @cached_property
    def potential_mass(self):
        w = self.potential.v_values(self.grid.quad_points("fine"))
        return assemble_p1_matrix(self.grid, "fine", "weighted_mass", w)

    @cached_property
    def a_matrix(self):
        """Bilinear form of the decomposition: stiffness + V1 mass."""
        w = self.potential.v1_values(self.grid.quad_points("fine"))
        if w is None:
            return self.grid.fine_stiffness
        return self.grid.fine_stiffness + \
            assemble_p1_matrix(self.grid, "fine", "weighted_mass", w)

    def expand(self, coeffs):
        return np.asarray(coeffs)

    def restrict(self, fine_load):
        return np.asarray(fine_load)
