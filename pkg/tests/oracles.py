"""Independent reference implementations used by the derived tests.

Everything here is written against the mathematical definitions only:
dense Gaussian elimination, hat functions evaluated from their pointwise
formula, per-entry Gauss quadrature, a dense saddle-point solve and a
damped Newton iteration with a finite-difference Jacobian.  Nothing
imports from the package's assembly or stepping code, so agreement with
the library is evidence rather than tautology.
"""

import numpy as np

GQ_X, GQ_W = np.polynomial.legendre.leggauss(4)


# --- dense linear algebra ---------------------------------------------------

def solve_dense(a, b):
    """Gaussian elimination with partial pivoting (complex capable)."""
    a = np.array(a, dtype=complex)
    b = np.array(b, dtype=complex)
    n = a.shape[0]
    for col in range(n):
        p = col + np.argmax(np.abs(a[col:, col]))
        if np.abs(a[p, col]) == 0.0:
            raise ZeroDivisionError("singular matrix in oracle solve")
        if p != col:
            a[[col, p]] = a[[p, col]]
            b[[col, p]] = b[[p, col]]
        for row in range(col + 1, n):
            f = a[row, col] / a[col, col]
            a[row, col:] -= f * a[col, col:]
            b[row] -= f * b[col]
    x = np.zeros(n, dtype=complex)
    for row in range(n - 1, -1, -1):
        x[row] = (b[row] - a[row, row + 1:] @ x[row + 1:]) / a[row, row]
    return x


def contract_dense(tensor, rho, u):
    """Triple-loop contraction sum_kj rho_k u_j T[k, j, i]."""
    n = tensor.shape[0]
    out = np.zeros(n, dtype=complex)
    for i in range(n):
        for k in range(n):
            for j in range(n):
                out[i] += rho[k] * u[j] * tensor[k, j, i]
    return out


# --- quadrature against explicit hat functions ------------------------------

def panel(a, b):
    """4-point Gauss nodes and weights on one interval [a, b]."""
    mid, half = 0.5 * (a + b), 0.5 * (b - a)
    return mid + half * GQ_X, half * GQ_W


def hat(x, center, dx):
    return np.maximum(0.0, 1.0 - np.abs(np.asarray(x) - center) / dx)


def hat_prime(x, center, dx):
    x = np.asarray(x)
    out = np.zeros_like(x, dtype=float)
    out[(x > center - dx) & (x < center)] = 1.0 / dx
    out[(x >= center) & (x < center + dx)] = -1.0 / dx
    return out


def p1_entry(nodes, i, j, kind="mass", weight=None):
    """One interior-dof matrix entry by per-element Gauss quadrature.

    nodes is the full (uniform) node array; i, j are interior dof
    indices, so dof p sits at nodes[p + 1].
    """
    dx = nodes[1] - nodes[0]
    ci, cj = nodes[i + 1], nodes[j + 1]
    total = 0.0
    for el in range(len(nodes) - 1):
        x, w = panel(nodes[el], nodes[el + 1])
        if kind == "stiffness":
            f = hat_prime(x, ci, dx) * hat_prime(x, cj, dx)
        else:
            f = hat(x, ci, dx) * hat(x, cj, dx)
            if weight is not None:
                f = f * weight(x)
        total += float(w @ f)
    return total


def p1_interp(nodes, coeffs, x):
    """Evaluate the P1 function with interior dofs `coeffs` at points x."""
    padded = np.zeros(len(nodes), dtype=np.asarray(coeffs).dtype)
    padded[1:-1] = coeffs
    dx = nodes[1] - nodes[0]
    x = np.asarray(x)
    el = np.clip(((x - nodes[0]) / dx).astype(int), 0, len(nodes) - 2)
    s = (x - nodes[el]) / dx
    return padded[el] * (1.0 - s) + padded[el + 1] * s


def load_vector(nodes, f_at):
    """<f, hat_p> for every interior hat, integrating element by element."""
    dx = nodes[1] - nodes[0]
    n = len(nodes) - 2
    out = np.zeros(n, dtype=complex)
    for p in range(n):
        c = nodes[p + 1]
        for el in (p, p + 1):
            x, w = panel(nodes[el], nodes[el + 1])
            out[p] += w @ (f_at(x) * hat(x, c, dx))
    return out


def triple_product(nodes, ca, cb, cc):
    """Integral of three P1 functions given by interior dof vectors."""
    total = 0.0
    for el in range(len(nodes) - 1):
        x, w = panel(nodes[el], nodes[el + 1])
        total += float(w @ (p1_interp(nodes, ca, x) * p1_interp(nodes, cb, x)
                            * p1_interp(nodes, cc, x)))
    return total


def richardson_trapezoid(f, a, b, n0=1024, levels=6):
    """Composite trapezoid values extrapolated through a Romberg table."""
    table = []
    n = n0
    for _ in range(levels):
        x = np.linspace(a, b, n + 1)
        y = np.asarray(f(x))
        table.append(np.trapezoid(y, x))
        n *= 2
    table = [list(table)]
    for lev in range(1, levels):
        prev = table[-1]
        fac = 4.0 ** lev
        table.append([(fac * prev[idx + 1] - prev[idx]) / (fac - 1.0)
                      for idx in range(len(prev) - 1)])
    return table[-1][0]


# --- dense constrained corrector -------------------------------------------

def dense_a_matrix(nodes, v1=None):
    n = len(nodes) - 2
    a = np.zeros((n, n))
    for i in range(n):
        for j in range(max(0, i - 1), min(n, i + 2)):
            a[i, j] = p1_entry(nodes, i, j, "stiffness")
            if v1 is not None:
                a[i, j] += p1_entry(nodes, i, j, "mass", weight=v1)
    return a


def dense_mass(nodes):
    n = len(nodes) - 2
    m = np.zeros((n, n))
    for i in range(n):
        for j in range(max(0, i - 1), min(n, i + 2)):
            m[i, j] = p1_entry(nodes, i, j, "mass")
    return m


def coarse_fine_moments(coarse_nodes, fine_nodes):
    """<coarse hat_i, fine hat_j> for all interior dof pairs."""
    H = coarse_nodes[1] - coarse_nodes[0]
    dx = fine_nodes[1] - fine_nodes[0]
    nc, nf = len(coarse_nodes) - 2, len(fine_nodes) - 2
    c = np.zeros((nc, nf))
    for i in range(nc):
        for j in range(nf):
            total = 0.0
            for el in range(len(fine_nodes) - 1):
                x, w = panel(fine_nodes[el], fine_nodes[el + 1])
                total += w @ (hat(x, coarse_nodes[i + 1], H)
                              * hat(x, fine_nodes[j + 1], dx))
            c[i, j] = total
    return c


def ideal_corrector(a, c, rhs):
    """Solve min 1/2 q'Aq - rhs'q subject to C q = 0 via the dense KKT system."""
    n, m = a.shape[0], c.shape[0]
    kkt = np.zeros((n + m, n + m))
    kkt[:n, :n] = a
    kkt[:n, n:] = c.T
    kkt[n:, :n] = c
    sol = solve_dense(kkt, np.concatenate([rhs, np.zeros(m)]))
    return sol[:n].real


# --- damped Newton on stacked real/imaginary parts --------------------------

def _stack(u):
    return np.concatenate([u.real, u.imag])


def _unstack(v):
    n = v.size // 2
    return v[:n] + 1j * v[n:]


def newton_solve(residual_fn, u_start, tol=1e-12, max_iter=60, fd_h=1e-7):
    """Damped Newton with a forward-difference Jacobian, for small systems."""
    u = np.asarray(u_start, dtype=complex)
    n2 = 2 * u.size

    def g_stacked(v):
        return _stack(residual_fn(_unstack(v)))

    v = _stack(u)
    for _ in range(max_iter):
        g0 = g_stacked(v)
        norm0 = np.linalg.norm(g0)
        if norm0 <= tol:
            return _unstack(v)
        jac = np.zeros((n2, n2))
        for col in range(n2):
            vp = v.copy()
            step = fd_h * max(1.0, abs(v[col]))
            vp[col] += step
            jac[:, col] = (g_stacked(vp) - g0) / step
        delta = solve_dense(jac, -g0).real
        lam = 1.0
        for _ in range(30):
            if np.linalg.norm(g_stacked(v + lam * delta)) < norm0:
                break
            lam *= 0.5
        v = v + lam * delta
    raise RuntimeError("oracle Newton iteration did not converge")


def modified_cn_step(mass, hamiltonian, omega_dense, beta, tau, u0):
    """One projected-density CN step solved by the dense Newton oracle.

    mass/hamiltonian are dense matrices (M and A + M_V), omega_dense the
    dense triple-product tensor of the same basis.
    """
    m = np.asarray(mass, dtype=float)
    L = m + 0.5j * tau * np.asarray(hamiltonian, dtype=float)
    target = L.conj().T @ u0

    def density_load(v, w):
        return np.einsum("kji,k,j->i", omega_dense, v, np.conj(w)).real

    def residual(u):
        b = density_load(u0, u0) + density_load(u, u)
        rho = solve_dense(m, b).real
        cubic = np.einsum("kji,k,j->i", omega_dense, rho + 0j, u0 + u)
        return L @ u - target + 0.25j * tau * beta * cubic

    return newton_solve(residual, u0)


def classical_cn_step(nodes, v_weight, beta, tau, u0):
    """One pointwise-density CN step on the fine grid, dense Newton oracle."""
    a = dense_a_matrix(nodes)
    m = dense_mass(nodes)
    if v_weight is not None:
        n = m.shape[0]
        for i in range(n):
            for j in range(max(0, i - 1), min(n, i + 2)):
                a[i, j] += p1_entry(nodes, i, j, "mass", weight=v_weight)
    L = m + 0.5j * tau * a
    target = L.conj().T @ u0

    def residual(u):
        def integrand(x):
            q0 = p1_interp(nodes, u0, x)
            q = p1_interp(nodes, u, x)
            return 0.25 * (np.abs(q0) ** 2 + np.abs(q) ** 2) * (q0 + q)

        return L @ u - target + 1j * tau * beta * load_vector(nodes, integrand)

    return newton_solve(residual, u0)
