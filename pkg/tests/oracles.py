"""Independent reference computations used to check the package.

None of these share code with ``diffnet``; each takes a different route to
the same quantity.
"""

import math

import numpy as np
from scipy import integrate
from scipy.special import eval_legendre


def green_legendre(L, D, src, prb, n_terms=400):
    """Ball Dirichlet Green's function from its Legendre expansion.

    g = 1/(4 pi D) * sum_n [r<^n / r>^(n+1) - (r l)^n / L^(2n+1)] P_n(cos angle)
    """
    src, prb = np.asarray(src, float), np.asarray(prb, float)
    rs, rp = np.linalg.norm(src), np.linalg.norm(prb)
    if rs == 0 or rp == 0:
        r = rs + rp
        return (1.0 / r - 1.0 / L) / (4 * math.pi * D)
    c = float(src @ prb) / (rs * rp)
    lo, hi = min(rs, rp), max(rs, rp)
    total = 0.0
    for n in range(n_terms):
        total += ((lo / hi) ** n / hi - (rs * rp / (L * L)) ** n / L) * eval_legendre(n, c)
    return total / (4 * math.pi * D)


def ball_average_inverse_distance(R):
    """Mean of 1/|r| over a ball of radius R, by radial quadrature."""
    val, _ = integrate.quad(lambda r: (1.0 / r) * 4 * math.pi * r * r, 0.0, R)
    return val / (4.0 / 3.0 * math.pi * R**3)


def monte_carlo_self_term(L, D, R, position, n=400_000, seed=0):
    """Ball average of g(., l) over the cell: the singular 1/|r - l| part by
    quadrature, the image part by Monte Carlo sampling of the cell volume."""
    rng = np.random.default_rng(seed)
    l = np.asarray(position, float)
    pts = rng.normal(size=(n, 3))
    pts /= np.linalg.norm(pts, axis=1)[:, None]
    pts *= R * rng.random(n)[:, None] ** (1 / 3)
    p = l + pts
    rl = np.linalg.norm(l)
    if rl == 0:
        image = np.full(n, 1.0 / L)
    else:
        star = (L / rl) ** 2 * l
        image = (L / rl) / np.linalg.norm(p - star, axis=1)
    return (ball_average_inverse_distance(R) - image.mean()) / (4 * math.pi * D)


def gain_by_linear_solve(G, alpha, a_u, gamma_u, V):
    """Steady intracellular signals per unit sender output, by stacking the
    field-consistency and signal-balance equations into one system.

    Unknowns z = [u; nu]:
        (alpha + gamma_u) u - alpha nu = a_u y
        nu - alpha G diag(V) (u - nu)  = 0
    """
    n = G.shape[0]
    V = np.broadcast_to(np.asarray(V, float), (n,))
    B = alpha * G * V[None, :]
    top = np.hstack([(alpha + gamma_u) * np.eye(n), -alpha * np.eye(n)])
    bot = np.hstack([-B, np.eye(n) + B])
    A = np.vstack([top, bot])
    rhs = np.vstack([a_u * np.eye(n), np.zeros((n, n))])
    Z = np.linalg.solve(A, rhs)
    return Z[:n]


def green_matrix_loops(L, D, positions, R):
    """G assembled entry by entry with the image-point formula."""
    pos = np.asarray(positions, float)
    n = len(pos)
    G = np.zeros((n, n))
    for i in range(n):
        for j in range(n):
            if i == j:
                r = np.linalg.norm(pos[i])
                G[i, i] = 3 / (8 * math.pi * D * R) - L / (4 * math.pi * D * (L * L - r * r))
                continue
            s, p = pos[j], pos[i]
            rs = np.linalg.norm(s)
            if rs == 0:
                G[i, j] = (1 / np.linalg.norm(p) - 1 / L) / (4 * math.pi * D)
            else:
                star = (L / rs) ** 2 * s
                G[i, j] = (1 / np.linalg.norm(p - s) - (L / rs) / np.linalg.norm(p - star)) / (4 * math.pi * D)
    return G


def ball_lattice_count(L, h):
    """Lattice nodes h*(i, j, k) with |r| < L, by brute enumeration."""
    n = int(L // h) + 1
    count = 0
    for i in range(-n, n + 1):
        for j in range(-n, n + 1):
            for k in range(-n, n + 1):
                if (i * i + j * j + k * k) * h * h < L * L:
                    count += 1
    return count


def toggle_steady(u, params, x0, t_end=20000.0):
    """Receiver state after a long integration at constant signal u (LSODA)."""
    p = params

    def f(t, x):
        lac, tet = x
        act = u * u / (p.K_u**2 + u * u)
        return [p.a_r1 * p.K_2**2 / (p.K_2**2 + tet * tet) - p.gamma_r1 * lac,
                p.a_r2 * (act + p.K_1**2 / (p.K_1**2 + lac * lac)) - p.gamma_r2 * tet]

    sol = integrate.solve_ivp(f, (0, t_end), x0, method="LSODA", rtol=1e-10, atol=1e-10)
    return sol.y[:, -1]
