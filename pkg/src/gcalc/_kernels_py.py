"""Pure-numpy versions of the compiled kernels in ``_kernels.pyx``."""

import numpy as np


def gheat_steps(u, lam, s0sq, nsteps):
    if u.shape[1] < 3:
        return
    cup = 0.5 * lam
    cdown = 0.5 * lam * s0sq
    inner = u[:, 1:-1]
    for _ in range(nsteps):
        d = (u[:, 2:] - 2.0 * inner) + u[:, :-2]
        inner += np.where(d > 0, cup * d, cdown * d)


def _shifted(v, pos):
    n = v.size
    j = np.clip(np.floor(pos).astype(np.intp), 0, n - 2)
    w = pos - j
    return v[j] + w * (v[j + 1] - v[j])


def lattice_steps(v, shift_hi, shift_lo, nsteps):
    idx = np.arange(v.size, dtype=float)
    for _ in range(nsteps):
        a = 0.5 * (_shifted(v, idx + shift_hi) + _shifted(v, idx - shift_hi))
        b = 0.5 * (_shifted(v, idx + shift_lo) + _shifted(v, idx - shift_lo))
        v[:] = np.where(a >= b, a, b)
