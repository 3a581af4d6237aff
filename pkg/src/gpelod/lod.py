"""Localized multiscale space built from element-corrector problems.

The coarse hat functions are enriched by correctors that are orthogonal,
in the bilinear form a(u, v) = (grad u, grad v) + (V1 u, v), to the kernel
of the coarse L2 projection.  Each corrector solves a saddle-point system
on an element patch; for shift-invariant V1 only the patches near the
boundary plus one interior representative need to be solved, the rest
follow by index translation and reflection.  The resulting basis carries
exact (quadrature-consistent) mass, stiffness, potential and triple
overlap tensors used by the conservative time steppers.
"""

from __future__ import annotations

import hashlib
import math
import os
import time
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
import scipy.linalg
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .linalg import SparseTensor3, apply_real_lu
from .mesh import (FineSpace, GAUSS_WEIGHTS, PotentialSplit, SHAPE0, SHAPE1,
                   ZERO_POTENTIAL)

_FORMAT_VERSION = 1


class SingularPatchError(Exception):
    """Raised when a patch saddle-point system cannot be solved."""


def default_layers(H):
    """Default localization depth: round(2 |log H|), at least one layer."""
    return max(1, round(2.0 * abs(math.log(H))))


@dataclass(frozen=True)
class Patch:
    """Contiguous block of coarse elements around element K.

    Stores the coarse element range [coarse_lo, coarse_hi], the window of
    fine interior dofs strictly inside the patch and the coarse interior
    dofs whose hat support meets the patch.
    """

    element: int
    layers: int
    coarse_lo: int
    coarse_hi: int
    dof_lo: int
    dof_hi: int            # inclusive
    hat_lo: int
    hat_hi: int            # inclusive, coarse interior dof indices

    @property
    def dofs(self):
        return np.arange(self.dof_lo, self.dof_hi + 1)

    @property
    def hat_dofs(self):
        return np.arange(self.hat_lo, self.hat_hi + 1)


def build_patch(grid, element, layers):
    if not 0 <= element < grid.n_coarse:
        raise ValueError("coarse element index out of range")
    if layers < 0:
        raise ValueError("layer count must be >= 0")
    lo = max(0, element - layers)
    hi = min(grid.n_coarse - 1, element + layers)
    m = grid.stride
    # fine nodes strictly between the patch end points lo*m and (hi+1)*m
    dof_lo = lo * m
    dof_hi = (hi + 1) * m - 2
    # interior coarse nodes whose hat support overlaps the open patch
    hat_lo = max(1, lo) - 1
    hat_hi = min(grid.n_coarse - 1, hi + 1) - 1
    return Patch(element, layers, lo, hi, dof_lo, dof_hi, hat_lo, hat_hi)


class _CorrectorContext:
    """Shared assembled data for all corrector solves on one grid."""

    def __init__(self, grid, potential):
        self.grid = grid
        self.potential = potential
        self.a_fine = FineSpace(grid, potential).a_matrix.tocsr()
        self.moments = grid.coarse_moments.tocsr()
        self.v1_quad = potential.v1_values(grid.quad_points("fine"))

    def element_a_apply(self, node, element):
        """a_K(hat_node, .) against the fine hats living on coarse element K.

        Returns (first fine node index of K, values on the m+1 local nodes).
        """
        grid = self.grid
        m, h = grid.stride, grid.h
        s = np.arange(m + 1)
        hat = s / m if element == node - 1 else 1.0 - s / m
        r = np.zeros(m + 1)
        d = np.diff(hat) / h
        r[:-1] -= d
        r[1:] += d
        if self.v1_quad is not None:
            w = self.v1_quad[element * m:(element + 1) * m]
            scale = GAUSS_WEIGHTS * (h / 2.0)
            w00 = w @ (scale * SHAPE0 * SHAPE0)
            w01 = w @ (scale * SHAPE0 * SHAPE1)
            w11 = w @ (scale * SHAPE1 * SHAPE1)
            r[:-1] += w00 * hat[:-1] + w01 * hat[1:]
            r[1:] += w01 * hat[:-1] + w11 * hat[1:]
        return element * m, r


def _corrector_window(ctx, node, element, layers):
    """Solve one element-corrector problem; returns (dof_lo, local values)."""
    grid = ctx.grid
    patch = build_patch(grid, element, layers)
    n_w = patch.dof_hi - patch.dof_lo + 1
    if n_w <= 0:
        return patch.dof_lo, np.zeros(0)

    rows = slice(patch.dof_lo, patch.dof_hi + 1)
    sub = ctx.a_fine[rows, rows].tocsr()
    C = ctx.moments[patch.hat_lo:patch.hat_hi + 1, rows].tocsr()
    n_c = C.shape[0]

    rhs = np.zeros(n_w)
    first_node, r = ctx.element_a_apply(node, element)
    nodes = first_node + np.arange(r.size)
    inside = (nodes >= patch.dof_lo + 1) & (nodes <= patch.dof_hi + 1)
    rhs[nodes[inside] - 1 - patch.dof_lo] = -r[inside]

    if n_w <= n_c:
        # tiny patches (r = 0 or 1): the constrained space may be trivial
        null = scipy.linalg.null_space(C.toarray())
        if null.shape[1] == 0:
            return patch.dof_lo, np.zeros(n_w)
        reduced = null.T @ (sub @ null)
        q = null @ np.linalg.solve(reduced, null.T @ rhs)
        return patch.dof_lo, q

    kkt = sp.bmat([[sub, C.T], [C, None]], format="csc")
    try:
        sol = spla.splu(kkt).solve(np.concatenate([rhs, np.zeros(n_c)]))
    except RuntimeError as exc:
        raise SingularPatchError(
            f"patch around element {element} (ell={layers}): {exc}") from exc
    if not np.all(np.isfinite(sol)):
        raise SingularPatchError(
            f"patch around element {element} (ell={layers}): non-finite solve")
    return patch.dof_lo, sol[:n_w]


def solve_corrector(grid, potential, node, element, layers):
    """Corrector of coarse hat `node` for coarse element `element`.

    The element must lie in the support of the hat (element in
    {node-1, node}).  Returns the corrector as a full fine-grid interior
    coefficient vector, supported inside the patch.
    """
    if element not in (node - 1, node):
        raise ValueError("element must lie in the support of the hat")
    if not 1 <= node <= grid.n_coarse - 1:
        raise ValueError("interior coarse node index expected")
    potential = potential if potential is not None else ZERO_POTENTIAL
    ctx = _CorrectorContext(grid, potential)
    dof_lo, q = _corrector_window(ctx, node, element, layers)
    out = np.zeros(grid.n_fine_dofs)
    out[dof_lo:dof_lo + q.size] = q
    return out


@dataclass
class LodBasisFunction:
    """One multiscale basis function stored on its support window.

    values are fine interior dof coefficients for dofs
    dof_start .. dof_start + len(values) - 1.
    """

    node: int
    dof_start: int
    values: np.ndarray

    @property
    def el_lo(self):
        return self.dof_start

    @property
    def el_hi(self):
        """One past the last fine element of the support."""
        return self.dof_start + self.values.size + 1

    def to_full(self, n_fine_dofs):
        out = np.zeros(n_fine_dofs)
        out[self.dof_start:self.dof_start + self.values.size] = self.values
        return out


def _hat_window_values(grid, node, ell):
    """Window bounds and prolonged-hat coefficients for one coarse node."""
    m = grid.stride
    wlo = max(0, node - 1 - ell)
    whi = min(grid.n_coarse - 1, node + ell)
    dof_start = wlo * m
    length = (whi + 1 - wlo) * m - 1
    vals = np.zeros(length)
    ramp = np.arange(1, m + 1) / m
    base = (node - 1) * m - dof_start           # local dof of node (node-1)*m+1, minus 1
    vals[base:base + m] = ramp
    vals[base + m:base + 2 * m - 1] = ramp[:-1][::-1]
    return dof_start, vals


def _solve_basis_function(ctx, node, ell):
    dof_start, vals = _hat_window_values(ctx.grid, node, ell)
    for element in (node - 1, node):
        qlo, q = _corrector_window(ctx, node, element, ell)
        vals[qlo - dof_start:qlo - dof_start + q.size] += q
    return LodBasisFunction(node=node, dof_start=dof_start, values=vals)


def _mirror_basis_function(src, grid):
    n = grid.n_fine_dofs
    length = src.values.size
    return LodBasisFunction(node=grid.n_coarse - src.node,
                            dof_start=n - length - src.dof_start,
                            values=src.values[::-1].copy())


class LodSpace:
    """Multiscale trial space with its assembled operators.

    Carries the basis windows, the sparse interpolation matrix into the
    fine space, mass/stiffness/potential matrices in multiscale
    coordinates, the triple overlap tensor and cached factorizations used
    by projections and time steppers.
    """

    def __init__(self, grid, potential, ell, basis, omega, omega_tol,
                 translation_reuse):
        self.grid = grid
        self.potential = potential
        self.ell = ell
        self.basis = basis
        self.omega = omega
        self.omega_tol = omega_tol
        self.translation_reuse = translation_reuse
        self.n_dofs = len(basis)
        self._fine = FineSpace(grid, potential)

    @cached_property
    def interpolation(self):
        """Sparse (n_fine_dofs, n_dofs) matrix of basis coefficient vectors.

        Each basis function is one column with a contiguous row window, so
        the matrix is assembled directly in CSC form without a COO pass.
        """
        lengths = np.array([bf.values.size for bf in self.basis])
        indptr = np.zeros(self.n_dofs + 1, dtype=np.int64)
        np.cumsum(lengths, out=indptr[1:])
        indices = np.concatenate(
            [np.arange(bf.dof_start, bf.dof_start + bf.values.size,
                       dtype=np.int32) for bf in self.basis])
        data = np.concatenate([bf.values for bf in self.basis])
        return sp.csc_matrix((data, indices, indptr),
                             shape=(self.grid.n_fine_dofs, self.n_dofs))

    def _congruence(self, fine_matrix):
        phi = self.interpolation
        return sp.csr_matrix(phi.T @ (fine_matrix @ phi))

    @cached_property
    def mass(self):
        return self._congruence(self.grid.fine_mass)

    @cached_property
    def stiffness(self):
        return self._congruence(self.grid.fine_stiffness)

    @cached_property
    def potential_mass(self):
        return self._congruence(self._fine.potential_mass)

    @cached_property
    def a_gram(self):
        if self.potential.v1_values(self.grid.quad_points("fine")) is None:
            return self.stiffness
        return self._congruence(self._fine.a_matrix)

    @cached_property
    def _mass_solve(self):
        return spla.splu(self.mass.tocsc())

    @cached_property
    def _a_solve(self):
        return spla.splu(self.a_gram.tocsc())

    def expand(self, coeffs):
        """Fine-grid interior coefficients of a multiscale function."""
        return self.interpolation @ np.asarray(coeffs)

    def restrict(self, fine_load):
        """Adjoint of expand: test a fine load vector against the basis."""
        return self.interpolation.T @ np.asarray(fine_load)

    def project_density(self, coeffs):
        """L2 projection of |u|^2 onto the space, as real coefficients."""
        return self._mass_solve.solve(self.omega.density_moments(coeffs))

    def solve_mass(self, rhs):
        """Solve M x = rhs with the cached mass factorization."""
        return apply_real_lu(self._mass_solve, rhs)

    # --- binary cache ------------------------------------------------------

    def save(self, path):
        np.savez_compressed(
            path,
            version=np.int64(_FORMAT_VERSION),
            meta=np.array([self.grid.a, self.grid.b, self.grid.n_coarse,
                           self.grid.refine, self.ell, self.omega_tol,
                           float(self.translation_reuse)]),
            nodes=np.array([bf.node for bf in self.basis], dtype=np.int64),
            dof_starts=np.array([bf.dof_start for bf in self.basis],
                                dtype=np.int64),
            lengths=np.array([bf.values.size for bf in self.basis],
                             dtype=np.int64),
            coeffs=np.concatenate([bf.values for bf in self.basis]),
            om_k=self.omega.k, om_j=self.omega.j, om_i=self.omega.i,
            om_values=self.omega.values)

    @classmethod
    def load(cls, path, grid, potential):
        with np.load(path) as data:
            if int(data["version"]) != _FORMAT_VERSION:
                raise ValueError("incompatible cache format")
            meta = data["meta"]
            if (meta[0], meta[1]) != (grid.a, grid.b) or \
                    (int(meta[2]), int(meta[3])) != (grid.n_coarse, grid.refine):
                raise ValueError("cached space was built for a different grid")
            offsets = np.concatenate([[0], np.cumsum(data["lengths"])])
            basis = [LodBasisFunction(node=int(n), dof_start=int(s),
                                      values=data["coeffs"][offsets[c]:offsets[c + 1]])
                     for c, (n, s) in enumerate(zip(data["nodes"],
                                                    data["dof_starts"]))]
            omega = SparseTensor3(len(basis), data["om_k"], data["om_j"],
                                  data["om_i"], data["om_values"],
                                  tolerance=float(meta[5]))
            return cls(grid, potential, int(meta[4]), basis, omega,
                       float(meta[5]), bool(meta[6]))


def build_lod_space(grid, potential=None, ell=None, omega_tol=1e-12,
                    reuse=None, cache_dir=None, timings=None):
    """Construct the localized multiscale space for a grid and potential.

    ell defaults to ceil(2 |log2 H|).  reuse=None enables translation and
    reflection reuse of correctors automatically when V1 is constant;
    reuse=False always solves every patch.  cache_dir, when given, stores
    and reloads the basis and overlap tensor keyed by grid, ell, tolerance
    and the sampled values of V1.  Passing a dict as timings collects the
    wall-clock milliseconds of the corrector and overlap-tensor phases.
    """
    potential = potential if potential is not None else ZERO_POTENTIAL
    if ell is None:
        ell = default_layers(grid.H)
    ell = int(ell)
    if ell < 0:
        raise ValueError("layer count must be >= 0")
    if reuse is None:
        reuse = potential.v1_uniform

    cache_path = None
    if cache_dir is not None:
        key = _cache_key(grid, potential, ell, omega_tol)
        cache_path = os.path.join(cache_dir, f"lodspace_{key}.npz")
        if os.path.exists(cache_path):
            return LodSpace.load(cache_path, grid, potential)

    ctx = _CorrectorContext(grid, potential)
    n_h = grid.n_coarse_dofs
    n_c = grid.n_coarse
    m = grid.stride
    basis = [None] * n_h
    trans_range = None
    t_start = time.perf_counter()

    if not reuse:
        for node in range(1, n_h + 1):
            basis[node - 1] = _solve_basis_function(ctx, node, ell)
    elif n_c >= 2 * ell + 4:
        # Node j is translation-generic when both of its element patches
        # [T - ell, T + ell] stay one cell away from the boundary; a patch
        # whose edge coincides with the domain boundary loses the clipped
        # half-hat constraint there and solves a structurally different
        # saddle system.
        rep = ell + 2
        for node in range(1, rep + 1):
            basis[node - 1] = _solve_basis_function(ctx, node, ell)
        for node in range(rep + 1, n_c - ell - 1):
            src = basis[rep - 1]
            basis[node - 1] = LodBasisFunction(
                node=node, dof_start=src.dof_start + (node - rep) * m,
                values=src.values.copy())
        for node in range(max(rep + 1, n_c - ell - 1), n_h + 1):
            basis[node - 1] = _mirror_basis_function(basis[n_c - node - 1], grid)
        trans_range = (rep - 1, n_c - ell - 3)
    else:
        half = (n_h + 1) // 2
        for node in range(1, half + 1):
            basis[node - 1] = _solve_basis_function(ctx, node, ell)
        for node in range(half + 1, n_h + 1):
            basis[node - 1] = _mirror_basis_function(basis[n_c - node - 1], grid)

    t_basis = time.perf_counter()
    omega = _assemble_omega(grid, basis, omega_tol, ell, trans_range)
    if timings is not None:
        timings["correctors_ms"] = 1000.0 * (t_basis - t_start)
        timings["omega_ms"] = 1000.0 * (time.perf_counter() - t_basis)
    space = LodSpace(grid, potential, ell, basis, omega, omega_tol, bool(reuse))
    if cache_path is not None:
        os.makedirs(cache_dir, exist_ok=True)
        space.save(cache_path)
    return space


def _assemble_omega(grid, basis, tol, ell, trans_range=None):
    """Triple products <phi_k phi_j, phi_i> over all overlapping windows.

    trans_range, when given, is the 0-based inclusive index range of basis
    functions that are exact shifted copies of one representative.  A
    tensor row whose participating indices all stay inside that range is
    itself a shifted copy of one anchor row, so only the anchor and the
    boundary-affected rows are integrated directly; the rest follows by
    index translation with bit-identical values.
    """
    n_h = len(basis)
    m = grid.stride
    w_row = GAUSS_WEIGHTS * (grid.h / 2.0)
    windows = [(bf.el_lo, bf.el_hi) for bf in basis]
    quads = {}

    def quad(idx):
        arr = quads.get(idx)
        if arr is None:
            bf = basis[idx]
            padded = np.zeros(bf.values.size + 2)
            padded[1:-1] = bf.values
            arr = (padded[:-1, None] * SHAPE0[None, :]
                   + padded[1:, None] * SHAPE1[None, :])
            quads[idx] = arr
        return arr

    def pair_entries(k, j):
        lo_k, hi_k = windows[k]
        lo_j, hi_j = windows[j]
        lo, hi = max(lo_k, lo_j), min(hi_k, hi_j)
        if lo >= hi:
            return None
        pair = (quad(k)[lo - lo_k:hi - lo_k]
                * quad(j)[lo - lo_j:hi - lo_j] * w_row)
        entry_i, entry_v = [], []
        for i in range(max(0, lo // m - ell - 2), n_h):
            lo_i, hi_i = windows[i]
            olo, ohi = max(lo, lo_i), min(hi, hi_i)
            if olo >= ohi:
                if lo_i >= hi:
                    break
                continue
            val = float(np.dot(pair[olo - lo:ohi - lo].ravel(),
                               quad(i)[olo - lo_i:ohi - lo_i].ravel()))
            if tol == 0.0 or abs(val) > tol:
                entry_i.append(i)
                entry_v.append(val)
        return entry_i, entry_v

    anchor = deep_last = -1
    if trans_range is not None:
        g_lo, g_hi = trans_range
        # every index of the row owned by j lies in [j - 4 ell - 6, j + 2 ell + 3]
        anchor = g_lo + 4 * ell + 6
        deep_last = g_hi - (2 * ell + 3)
        if anchor > deep_last:
            anchor = deep_last = -1

    ks, js, iis, vals = [], [], [], []

    def run_pair(k, j):
        got = pair_entries(k, j)
        if got and got[0]:
            entry_i, entry_v = got
            ks.append(np.full(len(entry_i), k, dtype=np.int64))
            js.append(np.full(len(entry_i), j, dtype=np.int64))
            iis.append(np.array(entry_i, dtype=np.int64))
            vals.append(np.array(entry_v))

    if anchor < 0:
        for k in range(n_h):
            for j in range(k, n_h):
                if windows[j][0] >= windows[k][1]:
                    break                    # windows move right with the node
                run_pair(k, j)
    else:
        direct = list(range(anchor)) + list(range(deep_last + 1, n_h))
        for j in direct:
            for k in range(max(0, j - 2 * ell - 2), j + 1):
                run_pair(k, j)
        row_k, row_i, row_v = [], [], []
        for k in range(max(0, anchor - 2 * ell - 2), anchor + 1):
            got = pair_entries(k, anchor)
            if got and got[0]:
                row_k.append(np.full(len(got[0]), k, dtype=np.int64))
                row_i.append(np.array(got[0], dtype=np.int64))
                row_v.append(np.array(got[1]))
        if row_k:
            row_k = np.concatenate(row_k)
            row_i = np.concatenate(row_i)
            row_v = np.concatenate(row_v)
            shifts = np.arange(deep_last - anchor + 1, dtype=np.int64)
            ks.append((row_k[None, :] + shifts[:, None]).ravel())
            js.append(np.repeat(anchor + shifts, row_k.size))
            iis.append((row_i[None, :] + shifts[:, None]).ravel())
            vals.append(np.tile(row_v, shifts.size))

    if not ks:
        return SparseTensor3(n_h, [], [], [], [], tolerance=tol)
    return SparseTensor3(n_h, np.concatenate(ks), np.concatenate(js),
                         np.concatenate(iis), np.concatenate(vals),
                         tolerance=tol)


def ritz_project(space, fine_coeffs):
    """Projection onto the multiscale space, orthogonal in the a-form."""
    rhs = space.restrict(space._fine.a_matrix @ np.asarray(fine_coeffs))
    return apply_real_lu(space._a_solve, rhs)


def lod_l2_project_density(space, coeffs):
    return space.project_density(coeffs)


def _cache_key(grid, potential, ell, tol):
    digest = hashlib.sha256()
    digest.update(repr((_FORMAT_VERSION, grid.a, grid.b, grid.n_coarse,
                        grid.refine, ell, tol)).encode())
    v1 = potential.v1_values(grid.quad_points("fine"))
    digest.update(b"zero" if v1 is None else v1.tobytes())
    return digest.hexdigest()[:16]
