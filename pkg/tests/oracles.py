"""Reference computations that share no code with the package.

* ``implicit_gheat``: fully implicit G-heat solve with policy iteration on a
  banded system (the package uses an explicit scheme and a lattice).
* ``enumerate_upper``: brute-force max over explicit probability vectors.
* ``gauss_value``: Gaussian expectation by Gauss-Hermite quadrature.
"""

import math

import numpy as np
from scipy.linalg import solve_banded


def implicit_gheat(phi, t, sigma0, x=0.0, dx=1.0 / 200, steps=2000, half_width=None):
    """``u(t, x)`` for ``u_t = G(u_xx)``, backward Euler in time.

    Each step solves ``u - dt/2 * s2 * D2 u = u_prev`` where ``s2`` is 1 on
    convex nodes and ``sigma0^2`` elsewhere, iterating on ``s2`` until the
    control stops changing (Howard's algorithm, finite for monotone systems).
    """
    hw = half_width or (8.0 * math.sqrt(t) + 2.0 + abs(x))
    k = int(math.ceil(hw / dx))
    xs = x + dx * np.arange(-k, k + 1)
    u = np.asarray(phi(xs), dtype=float)
    n = u.size
    dt = t / steps
    lam = dt / dx**2
    for _ in range(steps):
        prev = u
        s2 = np.ones(n - 2)
        for _it in range(50):
            ab = np.zeros((3, n))
            ab[1, :] = 1.0
            ab[1, 1:-1] += lam * s2
            ab[0, 2:] = -0.5 * lam * s2
            ab[2, :-2] = -0.5 * lam * s2
            new = solve_banded((1, 1), ab, prev)
            d2 = new[2:] - 2.0 * new[1:-1] + new[:-2]
            s2_new = np.where(d2 > 0, 1.0, sigma0**2)
            if np.array_equal(s2_new, s2):
                break
            s2 = s2_new
        u = new
    return float(u[k])


def enumerate_upper(x, measures):
    """``max_P sum_i P_i x_i`` by explicit enumeration."""
    best = -math.inf
    for P in measures:
        s = 0.0
        for p, v in zip(P, x):
            s += p * v
        best = max(best, s)
    return best


def gauss_value(fn, variance, nodes=160):
    """``E[fn(sqrt(variance) Z)]`` by probabilists' Gauss-Hermite."""
    z, w = np.polynomial.hermite_e.hermegauss(nodes)
    return float(np.dot(w, fn(math.sqrt(variance) * z)) / math.sqrt(2.0 * math.pi))
