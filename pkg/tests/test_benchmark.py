"""Closed-form two-soliton solution, single solitons and drift velocities."""

import numpy as np
import pytest

from gpelod.benchmark import (BenchmarkProblem, drift_velocities, error_norms,
                              exact_solution, exact_solution_dx, initial_value,
                              single_soliton)
from gpelod.mesh import FineSpace, GridHierarchy, integrate

PROB = BenchmarkProblem()


# --- exact solution ---------------------------------------------------------

def test_initial_expression_plain_form():
    # away from the domain ends the exponentials are representable and the
    # closed form can be evaluated without factoring out the largest one
    x = np.linspace(-2.0, 2.0, 41)
    num = 8.0 * (9.0 * np.exp(-4 * x) + 16.0 * np.exp(4 * x)) \
        - 32.0 * (4.0 * np.exp(-2 * x) + 9.0 * np.exp(2 * x))
    den = -128.0 + 4.0 * np.exp(-6 * x) + 16.0 * np.exp(6 * x) \
        + 81.0 * np.exp(-2 * x) + 64.0 * np.exp(2 * x)
    ref = num / den
    got = exact_solution(x, 0.0)
    assert np.max(np.abs(got - ref)) <= 1e-13 * np.max(np.abs(ref))
    assert np.max(np.abs(initial_value(x) - ref)) <= 1e-13 * np.max(np.abs(ref))


def test_solution_period():
    rng = np.random.default_rng(17)
    x = rng.uniform(-18.0, 18.0, 50)
    t = rng.uniform(0.0, 2.0, 50)
    diff = exact_solution(x, t + np.pi / 2.0) - exact_solution(x, t)
    assert np.max(np.abs(diff)) <= 1e-12


def test_density_period():
    rng = np.random.default_rng(18)
    x = rng.uniform(-18.0, 18.0, 50)
    t = rng.uniform(0.0, 2.0, 50)
    diff = np.abs(exact_solution(x, t + np.pi / 6.0)) ** 2 \
        - np.abs(exact_solution(x, t)) ** 2
    assert np.max(np.abs(diff)) <= 1e-12


def test_solution_negligible_at_domain_ends():
    t = np.linspace(0.0, np.pi / 2.0, 101)
    for x in (-20.0, 20.0):
        assert np.max(np.abs(exact_solution(np.full_like(t, x), t))) <= 1e-12


def test_spatial_derivative_matches_finite_differences():
    rng = np.random.default_rng(3)
    x = rng.uniform(-3.0, 3.0, 40)
    t = 0.37
    h = 1e-5
    fd = (-exact_solution(x + 2 * h, t) + 8 * exact_solution(x + h, t)
          - 8 * exact_solution(x - h, t) + exact_solution(x - 2 * h, t)) \
        / (12 * h)
    assert np.max(np.abs(fd - exact_solution_dx(x, t))) <= 1e-9


def test_initial_fine_is_complex_nodal_sample():
    g = GridHierarchy(-20.0, 20.0, 64, 2)
    u0 = PROB.initial_fine(g)
    assert u0.dtype == np.complex128 and u0.shape == (g.n_fine_dofs,)
    assert np.allclose(u0, exact_solution(g.fine_nodes[1:-1], 0.0), atol=1e-14)


# --- single soliton ---------------------------------------------------------

def test_soliton_at_rest():
    x = np.linspace(-5.0, 5.0, 33)
    got = single_soliton(x, 0.0, 4.0, 0.0)
    assert np.max(np.abs(got - 2.0 / np.cosh(2.0 * x))) <= 1e-14


def test_soliton_masses():
    g = GridHierarchy(-20.0, 20.0, 2 ** 12, 0)
    xq = g.quad_points("fine")
    for alpha, ref in ((4.0, 4.0), (16.0, 8.0)):
        dens = np.abs(single_soliton(xq, 0.0, alpha, 0.6)) ** 2
        assert abs(integrate(g, dens) - ref) <= 1e-6 * ref


def test_soliton_solves_the_equation():
    # residual of i psi_t + psi_xx + 2|psi|^2 psi with the time derivative
    # from fourth-order central differences and psi_xx in closed form
    rng = np.random.default_rng(23)
    x = rng.uniform(-3.0, 3.0, 30)
    t = rng.uniform(0.0, 1.0, 30)
    alpha, c = 4.0, 0.8
    h = 1e-5
    psi = single_soliton(x, t, alpha, c)
    psi_t = (-single_soliton(x, t + 2 * h, alpha, c)
             + 8 * single_soliton(x, t + h, alpha, c)
             - 8 * single_soliton(x, t - h, alpha, c)
             + single_soliton(x, t - 2 * h, alpha, c)) / (12 * h)
    z = np.sqrt(alpha) * (x - c * t)
    slope = 0.5j * c - np.sqrt(alpha) * np.tanh(z)
    psi_xx = psi * (slope ** 2 - alpha / np.cosh(z) ** 2)
    residual = 1j * psi_t + psi_xx + 2.0 * np.abs(psi) ** 2 * psi
    assert np.max(np.abs(residual)) <= 1e-9


# --- drift velocities -------------------------------------------------------

def test_drift_velocities_zero_offset():
    assert drift_velocities(0.0) == (0.0, 0.0)


def test_drift_velocities_round_numbers():
    c1, c2 = drift_velocities(6.0)
    assert abs(c1 - 2.0) <= 1e-14 and abs(c2 - 1.0) <= 1e-14


def test_drift_velocities_reported_split():
    c1, _ = drift_velocities(0.0085257)
    assert abs(c1 - 0.0754) <= 5e-4


def test_drift_velocities_momentum_constraint():
    rng = np.random.default_rng(4)
    for eps in rng.uniform(0.0, 10.0, 20):
        c1, c2 = drift_velocities(eps)
        assert abs(c1 - 2.0 * c2) <= 1e-14 * max(1.0, c1)


def test_drift_velocities_reject_negative():
    with pytest.raises(ValueError):
        drift_velocities(-1e-3)


# --- error norms ------------------------------------------------------------

def test_error_norms_vanish_on_nodal_sample():
    g = GridHierarchy(-20.0, 20.0, 2 ** 10, 0)
    fs = FineSpace(g, PROB.potential)
    t = 0.42
    u = exact_solution(g.fine_nodes[1:-1], t)
    l2, h1 = error_norms(fs, u, t)
    assert l2 == 0.0 and h1 == 0.0


def test_error_norms_zero_state():
    g = GridHierarchy(-20.0, 20.0, 2 ** 9, 0)
    fs = FineSpace(g, PROB.potential)
    l2, _ = error_norms(fs, np.zeros(fs.n_dofs, dtype=complex), 0.3)
    assert abs(l2 - 1.0) <= 1e-14
