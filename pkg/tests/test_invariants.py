"""Mass, energy, momentum and center-of-mass functionals."""

import numpy as np
import pytest

from gpelod.benchmark import BenchmarkProblem, single_soliton
from gpelod.invariants import (center_of_mass, energy, invariants_of_function,
                               mass, modified_energy, momentum, record)
from gpelod.lod import build_lod_space, ritz_project
from gpelod.mesh import (FineSpace, GridHierarchy, PotentialSplit,
                         eval_p1_at_quad, integrate)

import oracles

PROB = BenchmarkProblem()


@pytest.fixture(scope="module")
def fine_reference():
    """Exact-function invariants on the reference fine grid."""
    grid = GridHierarchy(-20.0, 20.0, 2 ** 14, 0)
    return grid, PROB.exact_record(grid, 0.0)


@pytest.fixture(scope="module")
def toy_space():
    grid = GridHierarchy(-10.0, 10.0, 16, 3)
    pot = PotentialSplit(beta=-2.0)
    space = build_lod_space(grid, pot, ell=4)
    rng = np.random.default_rng(5)
    u = rng.standard_normal(space.n_dofs) + 1j * rng.standard_normal(space.n_dofs)
    return space, u


# --- mass -------------------------------------------------------------------

def test_mass_zero_state():
    fs = FineSpace(GridHierarchy(0.0, 1.0, 4, 2))
    assert mass(fs, np.zeros(fs.n_dofs, dtype=complex)) == 0.0


def test_mass_of_initial_state(fine_reference):
    _, rec = fine_reference
    assert abs(rec.mass - 12.0) / 12.0 <= 1e-6


def test_single_soliton_mass_antiderivative():
    # antiderivative of 4 sech^2(2x) is 2 tanh(2x)
    g = GridHierarchy(-20.0, 20.0, 2 ** 12, 0)
    dens = np.abs(single_soliton(g.quad_points("fine"), 0.0, 4.0)) ** 2
    ref = 2.0 * np.tanh(40.0) - 2.0 * np.tanh(-40.0)
    assert abs(integrate(g, dens) - ref) <= 1e-6 * ref


# --- energy -----------------------------------------------------------------

def test_energy_reduces_to_stiffness_form():
    fs = FineSpace(GridHierarchy(-1.0, 1.0, 8, 3))
    rng = np.random.default_rng(9)
    u = rng.standard_normal(fs.n_dofs) + 1j * rng.standard_normal(fs.n_dofs)
    quad_form = float(np.real(np.vdot(u, fs.stiffness @ u)))
    assert abs(energy(fs, u, beta=0.0) - quad_form) <= 1e-12 * abs(quad_form)


def test_energy_of_initial_state(fine_reference):
    _, rec = fine_reference
    assert abs(rec.energy + 48.0) <= 1e-4


def test_energy_matches_refined_quadrature():
    g = GridHierarchy(-10.0, 10.0, 2 ** 11, 0)
    pot = PotentialSplit(v2=lambda x: np.cos(0.7 * x) + 1.5, beta=-2.0)
    fs = FineSpace(g, pot)
    rng = np.random.default_rng(2)
    c = rng.standard_normal(6) + 1j * rng.standard_normal(6)
    x = g.fine_nodes[1:-1]
    u = sum(ck * np.exp(1j * (k - 2.5) * 0.4 * x) for k, ck in enumerate(c))
    got = energy(fs, u)
    # independent quadrature with every element split in two
    padded = np.zeros(g.n_fine_dofs + 2, dtype=complex)
    padded[1:-1] = u
    ref = 0.0
    for el in range(g.n_fine):
        xl, xr = g.fine_nodes[el], g.fine_nodes[el + 1]
        slope = (padded[el + 1] - padded[el]) / g.h
        for a, b in ((xl, 0.5 * (xl + xr)), (0.5 * (xl + xr), xr)):
            xs, w = oracles.panel(a, b)
            vals = oracles.p1_interp(g.fine_nodes, padded[1:-1], xs)
            dens = np.abs(vals) ** 2
            ref += w @ (abs(slope) ** 2 * np.ones_like(xs)
                        + (np.cos(0.7 * xs) + 1.5) * dens - dens ** 2)
    assert abs(got - ref) <= 1e-8 * abs(ref)


# --- modified energy --------------------------------------------------------

def test_modified_energy_equals_energy_without_interaction():
    grid = GridHierarchy(-10.0, 10.0, 16, 3)
    space = build_lod_space(grid, PotentialSplit(beta=0.0), ell=4)
    rng = np.random.default_rng(6)
    u = rng.standard_normal(space.n_dofs) + 1j * rng.standard_normal(space.n_dofs)
    e, em = energy(space, u), modified_energy(space, u)
    assert abs(e - em) <= 1e-13 * max(1.0, abs(e))


def test_modified_energy_pythagoras_identity(toy_space):
    # E - E_mod = (beta/2) * ||dens - P(dens)||^2: the density projection is
    # orthogonal, and the quadrature rule integrates both sides exactly
    space, u = toy_space
    g = space.grid
    beta = space.potential.beta
    e = energy(space, u)
    em = modified_energy(space, u)
    dens_q = np.abs(eval_p1_at_quad(g, space.expand(u))) ** 2
    proj_q = eval_p1_at_quad(g, space.expand(space.project_density(u)))
    gap = float(integrate(g, (dens_q - proj_q) ** 2))
    assert abs((e - em) - 0.5 * beta * gap) <= 1e-10 * max(1.0, abs(e))


def test_modified_energy_error_drops_superlinearly():
    errs = {}
    for k in (7, 8):
        g = GridHierarchy(-20.0, 20.0, 2 ** k, 14 - k)
        space = build_lod_space(g, PROB.potential, ell=8)
        u0 = ritz_project(space, PROB.initial_fine(g))
        errs[k] = abs(modified_energy(space, u0) + 48.0)
    assert errs[7] / errs[8] >= 2.0 ** 5


# --- momentum ---------------------------------------------------------------

def test_momentum_of_real_state():
    fs = FineSpace(GridHierarchy(-5.0, 5.0, 8, 4))
    u = 1.0 / np.cosh(fs.grid.fine_nodes[1:-1]) + 0j
    assert momentum(fs, u) == 0.0


def test_momentum_of_initial_state(fine_reference):
    _, rec = fine_reference
    assert abs(rec.momentum) <= 1e-8


def test_momentum_matches_refined_quadrature():
    g = GridHierarchy(-15.0, 15.0, 2 ** 11, 0)
    fs = FineSpace(g)
    x = g.fine_nodes[1:-1]
    u = np.exp(0.5j * 0.8 * x) / np.cosh(x)
    got = momentum(fs, u)
    padded = np.zeros(g.n_fine_dofs + 2, dtype=complex)
    padded[1:-1] = u
    ref = 0.0
    for el in range(g.n_fine):
        xl, xr = g.fine_nodes[el], g.fine_nodes[el + 1]
        slope = (padded[el + 1] - padded[el]) / g.h
        for a, b in ((xl, 0.5 * (xl + xr)), (0.5 * (xl + xr), xr)):
            xs, w = oracles.panel(a, b)
            vals = oracles.p1_interp(g.fine_nodes, padded[1:-1], xs)
            ref += w @ (2.0 * np.imag(np.conj(vals) * slope))
    assert abs(got - ref) <= 1e-8 * max(1.0, abs(ref))


# --- center of mass ---------------------------------------------------------

def test_center_of_mass_even_density():
    fs = FineSpace(GridHierarchy(-8.0, 8.0, 2 ** 8, 0))
    u = 1.0 / np.cosh(fs.grid.fine_nodes[1:-1]) + 0j
    assert abs(center_of_mass(fs, u)) <= 1e-12


def test_center_of_mass_of_initial_state(fine_reference):
    _, rec = fine_reference
    assert abs(rec.x_center + 1.3863) <= 2e-4


def test_center_of_mass_shifted_soliton():
    g = GridHierarchy(-20.0, 20.0, 2 ** 12, 0)
    rec = invariants_of_function(
        g,
        lambda x: single_soliton(x - 1.0, 0.0, 4.0),
        lambda x: -4.0 * np.tanh(2.0 * (x - 1.0))
        / np.cosh(2.0 * (x - 1.0)))
    # unnormalized first moment: mass * shift
    assert abs(rec.x_center - 4.0) <= 1e-6 * 4.0


# --- records and shared properties ------------------------------------------

def test_record_modified_energy_presence(toy_space):
    space, u = toy_space
    assert record(space, u).energy_mod is not None
    fs = FineSpace(space.grid, space.potential)
    assert record(fs, space.expand(u)).energy_mod is None


def test_all_functionals_phase_invariant(toy_space):
    space, u = toy_space
    base = record(space, u)
    for theta in (0.4, 1.9, 5.0):
        rot = record(space, np.exp(1j * theta) * u)
        for field in ("mass", "energy", "energy_mod", "momentum", "x_center"):
            a, b = getattr(base, field), getattr(rot, field)
            assert abs(a - b) <= 1e-12 * max(1.0, abs(a))


def test_lod_functionals_equal_fine_expansion(toy_space):
    space, u = toy_space
    fs = FineSpace(space.grid, space.potential)
    uf = space.expand(u)
    for fn in (mass, energy, momentum, center_of_mass):
        a, b = fn(space, u), fn(fs, uf)
        assert abs(a - b) <= 1e-12 * max(1.0, abs(a))
