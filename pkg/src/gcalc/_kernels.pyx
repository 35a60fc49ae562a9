# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops. Mirrors ``gcalc._kernels_py`` operation for operation."""

import numpy as np
cimport numpy as cnp
from libc.math cimport floor

cnp.import_array()


def gheat_steps(double[:, ::1] u, double lam, double s0sq, Py_ssize_t nsteps):
    """Advance each row of ``u`` by ``nsteps`` explicit G-heat steps, in place.

    ``lam = dt / dx**2``. Boundary nodes keep their value (linear ghost cells).
    """
    cdef Py_ssize_t rows = u.shape[0], n = u.shape[1]
    cdef Py_ssize_t r, i, s
    cdef double cup = 0.5 * lam, cdown = 0.5 * lam * s0sq
    cdef double prev, cur, d
    if n < 3:
        return
    with nogil:
        for r in range(rows):
            for s in range(nsteps):
                prev = u[r, 0]
                for i in range(1, n - 1):
                    cur = u[r, i]
                    d = (u[r, i + 1] - 2.0 * cur) + prev
                    if d > 0:
                        u[r, i] = cur + cup * d
                    else:
                        u[r, i] = cur + cdown * d
                    prev = cur


cdef inline double _interp(const double[::1] v, Py_ssize_t n, double pos) noexcept nogil:
    # cell index clamped to the end cells; weight left free -> linear extrapolation
    cdef Py_ssize_t j = <Py_ssize_t>floor(pos)
    cdef double w
    if j < 0:
        j = 0
    elif j > n - 2:
        j = n - 2
    w = pos - j
    return v[j] + w * (v[j + 1] - v[j])


def lattice_steps(double[::1] v, double shift_hi, double shift_lo, Py_ssize_t nsteps):
    """Backward bang-bang lattice recursion on a uniform grid, in place.

    Shifts are in units of the grid spacing. Each step takes, node by node,
    the larger of the two symmetric two-point averages.
    """
    cdef Py_ssize_t n = v.shape[0]
    cdef Py_ssize_t i, s
    cdef double a, b
    cdef double[::1] tmp = np.empty(n)
    cdef double[::1] src = v
    with nogil:
        for s in range(nsteps):
            for i in range(n):
                a = 0.5 * (_interp(src, n, i + shift_hi) + _interp(src, n, i - shift_hi))
                b = 0.5 * (_interp(src, n, i + shift_lo) + _interp(src, n, i - shift_lo))
                tmp[i] = a if a >= b else b
            for i in range(n):
                src[i] = tmp[i]
