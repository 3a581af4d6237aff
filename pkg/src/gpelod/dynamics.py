"""Crank-Nicolson time steppers for the cubic Schrodinger dynamics.

Both schemes advance i M dU/dt = (A + M_V) U + cubic(U) with the midpoint
average U^{n+1/2}; they differ in the cubic term.  The modified stepper
(multiscale coordinates) uses the projected density

    rho = P[ |u^n|^2 + |u^{n+1}|^2 ]

and conserves mass and the matching modified energy exactly.  The
classical stepper uses the pointwise density average and conserves mass
and the standard discrete energy; on the fine grid it can optionally run
a damped Newton iteration instead of the fixed-point loop.  With
L = M + (i tau / 2)(A + M_V), every step solves

    L U^{n+1} = L^H U^n  - i tau * (cubic terms),

so one factorization of L is reused for all steps and iterations.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import hermitian_adjoint, lu_factor
from .mesh import (FineSpace, GAUSS_WEIGHTS, SHAPE0, SHAPE1, eval_p1_at_quad,
                   load_from_quad)


@dataclass(frozen=True)
class SolverOptions:
    tol: float = 1e-10
    max_iter: int = 200
    newton: bool = False


DEFAULT_OPTIONS = SolverOptions()


@dataclass
class StepperState:
    u: np.ndarray
    n: int = 0
    iterations: int = 0
    residual: float = 0.0


class FixedPointDivergedError(Exception):
    def __init__(self, message, iterations=0, residual=float("nan")):
        super().__init__(message)
        self.iterations = iterations
        self.residual = residual


class _CnStepperBase:
    def __init__(self, space, tau, beta=None, options=None):
        tau = float(tau)
        if tau == 0.0:
            raise ValueError("time step must be nonzero")
        self.space = space
        self.tau = tau
        self.beta = space.potential.beta if beta is None else float(beta)
        self.options = options if options is not None else DEFAULT_OPTIONS
        self._L = (space.mass + 0.5j * tau
                   * (space.stiffness + space.potential_mass)).tocsr()
        self._solve = lu_factor(self._L)
        self._adjoint = hermitian_adjoint(self._L)
        self._mass = space.mass

    def _m_norm(self, v):
        return float(np.sqrt(abs(np.real(np.vdot(v, self._mass @ v)))))

    def _diverged(self, residual):
        raise FixedPointDivergedError(
            f"no convergence to {self.options.tol:.1e} within "
            f"{self.options.max_iter} iterations (last increment {residual:.3e})",
            iterations=self.options.max_iter, residual=residual)


class ModifiedCnStepper(_CnStepperBase):
    """Conservative stepper with the projected-density cubic term."""

    def __init__(self, space, tau, beta=None, options=None):
        if not hasattr(space, "omega"):
            raise TypeError("modified stepper needs a multiscale space")
        super().__init__(space, tau, beta, options)

    def step(self, state):
        u0 = state.u
        lin = self._solve.solve(self._adjoint @ u0)
        if self.beta == 0.0:
            return replace(state, u=lin, n=state.n + 1, iterations=1,
                           residual=0.0)
        omega = self.space.omega
        b0 = omega.density_moments(u0)
        factor = -0.25j * self.tau * self.beta
        u = u0
        residual = float("inf")
        for it in range(1, self.options.max_iter + 1):
            rho = self.space.solve_mass(b0 + omega.density_moments(u))
            u_new = lin + factor * self._solve.solve(omega.contract(rho, u0 + u))
            residual = self._m_norm(u_new - u)
            u = u_new
            if residual <= self.options.tol:
                return replace(state, u=u, n=state.n + 1, iterations=it,
                               residual=residual)
        self._diverged(residual)


class ClassicalCnStepper(_CnStepperBase):
    """Stepper with the pointwise-density cubic term, assembled on the fine grid.

    Works in fine-grid or multiscale coordinates (the latter pays for the
    expansion in every iteration).  options.newton switches the fine-grid
    version to a damped Newton iteration on the same nonlinear system.
    """

    def __init__(self, space, tau, beta=None, options=None):
        super().__init__(space, tau, beta, options)
        if self.options.newton and not isinstance(space, FineSpace):
            raise ValueError("Newton mode is only available on the fine space")

    def _cubic_load(self, q0, d0, u):
        """<(|u0|^2 + |u|^2)/2 * (u0 + u)/2, phi_i> via fine-grid quadrature."""
        q = eval_p1_at_quad(self.space.grid, self.space.expand(u))
        integrand = 0.25 * (d0 + np.abs(q) ** 2) * (q0 + q)
        return self.space.restrict(load_from_quad(self.space.grid, integrand)), q

    def step(self, state):
        if self.options.newton:
            return self._step_newton(state)
        u0 = state.u
        lin = self._solve.solve(self._adjoint @ u0)
        if self.beta == 0.0:
            return replace(state, u=lin, n=state.n + 1, iterations=1,
                           residual=0.0)
        q0 = eval_p1_at_quad(self.space.grid, self.space.expand(u0))
        d0 = np.abs(q0) ** 2
        factor = -1j * self.tau * self.beta
        u = u0
        residual = float("inf")
        for it in range(1, self.options.max_iter + 1):
            load, _ = self._cubic_load(q0, d0, u)
            u_new = lin + factor * self._solve.solve(load)
            residual = self._m_norm(u_new - u)
            u = u_new
            if residual <= self.options.tol:
                return replace(state, u=u, n=state.n + 1, iterations=it,
                               residual=residual)
        self._diverged(residual)

    # --- damped Newton on G(u) = L u - L^H u0 + i tau beta N(u0, u) --------

    def _step_newton(self, state):
        u0 = state.u
        grid = self.space.grid
        target = self._adjoint @ u0
        q0 = eval_p1_at_quad(grid, u0)
        d0 = np.abs(q0) ** 2
        scale = 1j * self.tau * self.beta
        u = self._solve.solve(target)          # linear predictor
        residual = float("inf")
        for it in range(1, self.options.max_iter + 1):
            g, q = self._newton_residual(u, q0, d0, target, scale)
            g_norm = np.linalg.norm(g)
            w1 = np.conj(q) * (q + q0) + np.abs(q) ** 2 + d0
            w2 = q * (q + q0)
            b1 = self._L + (scale / 4.0) * _complex_weighted_mass(grid, w1)
            b2 = (scale / 4.0) * _complex_weighted_mass(grid, w2)
            delta = _solve_real_form(b1, b2, -g)
            lam = 1.0
            for _ in range(12):
                u_try = u + lam * delta
                g_try, _ = self._newton_residual(u_try, q0, d0, target, scale)
                if np.linalg.norm(g_try) <= (1.0 - 1e-4 * lam) * g_norm:
                    break
                lam *= 0.5
            residual = self._m_norm(lam * delta)
            u = u_try
            if residual <= self.options.tol:
                return replace(state, u=u, n=state.n + 1, iterations=it,
                               residual=residual)
        self._diverged(residual)

    def _newton_residual(self, u, q0, d0, target, scale):
        q = eval_p1_at_quad(self.space.grid, u)
        integrand = 0.25 * (d0 + np.abs(q) ** 2) * (q0 + q)
        load = load_from_quad(self.space.grid, integrand)
        return self._L @ u - target + scale * load, q


def _complex_weighted_mass(grid, wvals):
    """Weighted fine mass matrix with complex quadrature-point weights."""
    dx = grid.h
    scale = GAUSS_WEIGHTS * (dx / 2.0)
    w00 = wvals @ (scale * SHAPE0 * SHAPE0)
    w01 = wvals @ (scale * SHAPE0 * SHAPE1)
    w11 = wvals @ (scale * SHAPE1 * SHAPE1)
    n_el = grid.n_fine
    el = np.arange(n_el)
    rows = np.concatenate([el, el, el + 1, el + 1])
    cols = np.concatenate([el, el + 1, el, el + 1])
    data = np.concatenate([w00, w01, w01, w11])
    full = sp.coo_matrix((data, (rows, cols)),
                         shape=(n_el + 1, n_el + 1)).tocsr()
    return full[1:-1, 1:-1]


def _is_tridiagonal(matrix):
    coo = matrix.tocoo()
    return bool(np.all(np.abs(coo.row - coo.col) <= 1))


def _solve_real_form(b1, b2, rhs):
    """Solve B1 x + B2 conj(x) = rhs by interleaving real and imaginary parts.

    Writing x = p + i q, row i splits into a 2x2 real block per matrix
    entry; with tridiagonal operands (the fine-grid case) the interleaved
    system has bandwidth 3 and goes through the LAPACK banded solver,
    otherwise a sparse factorization handles the general pattern.
    """
    n = rhs.size
    flat = np.empty(2 * n)
    flat[0::2] = rhs.real
    flat[1::2] = rhs.imag
    b1 = sp.csr_matrix(b1)
    b2 = sp.csr_matrix(b2)
    if _is_tridiagonal(b1) and _is_tridiagonal(b2):
        ab = np.zeros((7, 2 * n))
        for t in (-1, 0, 1):
            d1 = b1.diagonal(t)
            d2 = b2.diagonal(t)
            blocks = ((0, 0, d1.real + d2.real), (0, 1, -d1.imag + d2.imag),
                      (1, 0, d1.imag + d2.imag), (1, 1, d1.real - d2.real))
            for p, q, comp in blocks:
                # J[2i+p, 2(i+t)+q] = comp; band row is u + row - col
                ab[3 + p - q - 2 * t, (2 * t + q if t >= 0 else q)::2][
                    :comp.size] = comp
        sol = scipy.linalg.solve_banded((3, 3), ab, flat,
                                        overwrite_ab=True, overwrite_b=True)
        return sol[0::2] + 1j * sol[1::2]
    b1 = b1.tocoo()
    b2 = b2.tocoo()
    rows = np.concatenate([2 * b1.row, 2 * b1.row + 1, 2 * b1.row, 2 * b1.row + 1,
                           2 * b2.row, 2 * b2.row + 1, 2 * b2.row, 2 * b2.row + 1])
    cols = np.concatenate([2 * b1.col, 2 * b1.col, 2 * b1.col + 1, 2 * b1.col + 1,
                           2 * b2.col, 2 * b2.col, 2 * b2.col + 1, 2 * b2.col + 1])
    data = np.concatenate([b1.data.real, b1.data.imag, -b1.data.imag, b1.data.real,
                           b2.data.real, b2.data.imag, b2.data.imag, -b2.data.real])
    jac = sp.coo_matrix((data, (rows, cols)), shape=(2 * n, 2 * n)).tocsc()
    sol = spla.splu(jac).solve(flat)
    return sol[0::2] + 1j * sol[1::2]


@dataclass
class Trajectory:
    final: Optional[StepperState]
    iterations: list = field(default_factory=list)
    completed: int = 0
    error: Optional[Exception] = None

    @property
    def ok(self):
        return self.error is None


def evolve(stepper, u0, n_steps, observer: Optional[Callable] = None, stride=1):
    """March n_steps steps, reporting states to an optional observer.

    The observer is called as observer(t, state) at t=0, every `stride`
    steps, and at the final step; stride=0 reports only start and end.
    On a failed step the trajectory carries the last good state and the
    exception.
    """
    state = StepperState(u=np.asarray(u0, dtype=complex))
    if observer is not None:
        observer(0.0, state)
    iterations = []
    for n in range(1, n_steps + 1):
        try:
            state = stepper.step(state)
        except FixedPointDivergedError as exc:
            return Trajectory(final=state, iterations=iterations,
                              completed=n - 1, error=exc)
        iterations.append(state.iterations)
        if observer is not None and ((stride and n % stride == 0)
                                     or n == n_steps):
            observer(n * stepper.tau, state)
    return Trajectory(final=state, iterations=iterations, completed=n_steps)
