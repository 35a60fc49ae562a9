"""G-heat equation ``u_t - G(u_xx) = 0`` on a truncated line.

Two independent solvers:

* :func:`solve_gheat` -- explicit monotone finite differences,
* :func:`lattice_value` -- backward bang-bang lattice over ``sigma in {sigma0, 1}``.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np

from . import kernels
from .errors import ConfigurationError, ExtrapolationError, ParameterError
from .payoff import Payoff

# domain half-width in standard deviations of the sigma=1 diffusion
WIDTH_SIGMAS = 6.0
KINK_MARGIN = 1.0


@dataclass(frozen=True)
class GParams:
    """Lower volatility bound ``sigma0``; the upper bound is normalized to 1."""

    sigma0: float

    def __post_init__(self) -> None:
        if not (0.0 <= self.sigma0 <= 1.0) or math.isnan(self.sigma0):
            raise ParameterError(f"sigma0 must lie in [0, 1], got {self.sigma0!r}")

    @property
    def s0sq(self) -> float:
        return self.sigma0 * self.sigma0


def g_of(a, params: GParams):
    """``G(a) = (a+ - sigma0^2 a-) / 2``, vectorized."""
    a = np.asarray(a, dtype=float)
    out = 0.5 * (np.maximum(a, 0.0) - params.s0sq * np.maximum(-a, 0.0))
    return float(out) if out.ndim == 0 else out


@dataclass(frozen=True)
class SpaceGrid:
    center: float
    half_width: float
    n_points: int

    def __post_init__(self) -> None:
        if self.n_points < 3 or self.n_points % 2 == 0:
            raise ParameterError(f"n_points must be odd and >= 3, got {self.n_points}")
        if not self.half_width > 0:
            raise ParameterError("half_width must be positive")

    @classmethod
    def from_dx(cls, center: float, half_width: float, dx: float) -> SpaceGrid:
        """Grid with spacing exactly ``dx``; the half-width is rounded up."""
        if not dx > 0:
            raise ParameterError("dx must be positive")
        k = max(1, math.ceil(half_width / dx - 1e-9))
        return cls(float(center), k * dx, 2 * k + 1)

    @property
    def dx(self) -> float:
        return 2.0 * self.half_width / (self.n_points - 1)

    @property
    def nodes(self) -> np.ndarray:
        k = (self.n_points - 1) // 2
        return self.center + np.arange(-k, k + 1) * self.dx

    @property
    def lo(self) -> float:
        return self.center - self.half_width

    @property
    def hi(self) -> float:
        return self.center + self.half_width


@dataclass(frozen=True)
class Resolution:
    """PDE discretization: spacing ``dx``, step ``dt`` (default ``dx**2/2``)."""

    dx: float = 1.0 / 128
    dt: float | None = None
    half_width: float | None = None

    def __post_init__(self) -> None:
        if not self.dx > 0:
            raise ParameterError("dx must be positive")
        if self.dt is not None and self.dt > self.dx**2 * (1 + 1e-12):
            raise ParameterError(f"dt={self.dt} violates the CFL bound dt <= dx^2={self.dx**2}")

    @property
    def step(self) -> float:
        return 0.5 * self.dx**2 if self.dt is None else self.dt


def default_half_width(t: float, phi: Payoff | None = None, center: float = 0.0) -> float:
    """``6 sqrt(t)`` plus a unit margin, widened to include every payoff kink."""
    hw = WIDTH_SIGMAS * math.sqrt(t) + KINK_MARGIN
    if phi is not None:
        for k in phi.kinks:
            hw = max(hw, abs(k - center) + KINK_MARGIN + 2.0 * math.sqrt(t))
    return hw


def make_grid(t: float, phi: Payoff | None, center: float, res: Resolution) -> SpaceGrid:
    hw = res.half_width if res.half_width is not None else default_half_width(t, phi, center)
    return SpaceGrid.from_dx(center, hw, res.dx)


@dataclass
class HeatSolution:
    params: GParams
    grid: SpaceGrid
    times: np.ndarray
    values: np.ndarray
    dt: float = field(default=0.0)

    @property
    def final(self) -> np.ndarray:
        return self.values[-1]


def _check(t: float, grid: SpaceGrid, dt: float) -> None:
    if not t > 0:
        raise ParameterError(f"horizon t must be positive, got {t}")
    if dt > grid.dx**2 * (1 + 1e-12):
        raise ParameterError(f"dt={dt:g} violates the CFL bound dt <= dx^2 = {grid.dx**2:g}")
    if grid.half_width < WIDTH_SIGMAS * math.sqrt(t) * (1 - 1e-12):
        raise ConfigurationError(
            f"half_width={grid.half_width:g} is narrower than {WIDTH_SIGMAS:g}*sqrt(t)"
        )


def _n_steps(t: float, dt: float) -> int:
    return max(1, math.ceil(t / dt - 1e-9))


def solve_gheat(
    phi: Payoff | Callable[[np.ndarray], np.ndarray],
    t: float,
    params: GParams,
    grid: SpaceGrid,
    dt: float | None = None,
    max_levels: int | None = 65,
) -> HeatSolution:
    """Explicit monotone scheme ``u += dt * G(D2 u / dx^2)``.

    The step is shortened to ``t / ceil(t / dt)``. Only ``max_levels`` evenly
    spaced time levels are kept (first and last always); ``None`` keeps all.
    """
    if dt is None:
        dt = 0.5 * grid.dx**2
    _check(t, grid, dt)
    n = _n_steps(t, dt)
    dt = t / n
    lam = dt / grid.dx**2
    if max_levels is None or max_levels >= n + 1:
        marks = np.arange(n + 1)
    else:
        marks = np.unique(np.round(np.linspace(0, n, max(2, max_levels))).astype(int))
    u = np.ascontiguousarray(np.asarray(phi(grid.nodes), dtype=float)[None, :])
    values = np.empty((marks.size, grid.n_points))
    values[0] = u[0]
    for i in range(1, marks.size):
        kernels.gheat_steps(u, lam, params.s0sq, int(marks[i] - marks[i - 1]))
        values[i] = u[0]
    return HeatSolution(params, grid, marks * dt, values, dt)


def advance(u0: np.ndarray, t: float, params: GParams, dx: float, dt: float | None = None) -> np.ndarray:
    """Evolve a batch of initial rows over horizon ``t``; returns the final rows."""
    if dt is None:
        dt = 0.5 * dx**2
    if dt > dx**2 * (1 + 1e-12):
        raise ParameterError(f"dt={dt:g} violates the CFL bound dt <= dx^2")
    n = _n_steps(t, dt)
    u = np.ascontiguousarray(np.atleast_2d(np.asarray(u0, dtype=float))).copy()
    threads = _threads()
    if threads > 1 and u.shape[0] >= 2 * threads:
        from concurrent.futures import ThreadPoolExecutor

        chunks = np.array_split(np.arange(u.shape[0]), threads)
        parts = [np.ascontiguousarray(u[c]) for c in chunks]
        with ThreadPoolExecutor(threads) as pool:
            list(pool.map(lambda p: kernels.gheat_steps(p, (t / n) / dx**2, params.s0sq, n), parts))
        for c, p in zip(chunks, parts):
            u[c] = p
    else:
        kernels.gheat_steps(u, (t / n) / dx**2, params.s0sq, n)
    return u


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("GCALC_THREADS", "1")))
    except ValueError:
        return 1


def evaluate(sol: HeatSolution, time_index: int, x: float) -> float:
    """Linear interpolation of a stored level; raises outside the grid."""
    g = sol.grid
    tol = 1e-12 * max(1.0, abs(g.half_width))
    if x < g.lo - tol or x > g.hi + tol:
        raise ExtrapolationError(f"x={x} outside grid [{g.lo}, {g.hi}]")
    row = sol.values[time_index]
    pos = min(max((x - g.lo) / g.dx, 0.0), g.n_points - 1.0)
    j = min(int(math.floor(pos)), g.n_points - 2)
    w = pos - j
    if w == 0.0:
        return float(row[j])
    return float(row[j] + w * (row[j + 1] - row[j]))


def _lattice_refinement(sqrt_dt: float, dx: float, sigma0: float) -> int:
    """Nodes per ``sqrt(dt)``: at least as fine as ``dx`` and, when possible,
    a multiple that puts the ``sigma0`` branch on nodes too."""
    m0 = max(8, math.ceil(sqrt_dt / dx - 1e-9))
    for m in range(m0, m0 + 64):
        if abs(sigma0 * m - round(sigma0 * m)) < 1e-9:
            return m
    return m0


def lattice_value(
    phi: Payoff | Callable[[np.ndarray], np.ndarray],
    t: float,
    params: GParams,
    grid: SpaceGrid,
    n_steps: int,
) -> float:
    """Value at ``(t, grid.center)`` of the bang-bang lattice.

    Each of ``n_steps`` backward steps takes, pointwise, the larger of
    ``(v(x + s sqrt(dt)) + v(x - s sqrt(dt))) / 2`` over ``s in {sigma0, 1}``,
    with linear interpolation. The lattice spacing is ``sqrt(dt) / m`` with
    ``m`` chosen so both branches land on nodes whenever ``sigma0 * m`` can
    be an integer; ``grid`` supplies only the center and the half-width.
    """
    if n_steps < 1:
        raise ParameterError("n_steps must be >= 1")
    if not t > 0:
        raise ParameterError(f"horizon t must be positive, got {t}")
    if grid.half_width < WIDTH_SIGMAS * math.sqrt(t) * (1 - 1e-12):
        raise ConfigurationError("lattice domain narrower than 6*sqrt(t)")
    sqrt_dt = math.sqrt(t / n_steps)
    m = _lattice_refinement(sqrt_dt, grid.dx, params.sigma0)
    lat = SpaceGrid.from_dx(grid.center, grid.half_width, sqrt_dt / m)
    v = np.ascontiguousarray(np.asarray(phi(lat.nodes), dtype=float))
    kernels.lattice_steps(v, float(m), params.sigma0 * m, n_steps)
    return float(v[(lat.n_points - 1) // 2])


def write_solution_csv(sol: HeatSolution, path: str | os.PathLike, levels: Sequence[int] | None = None) -> None:
    """Write ``t,x,u`` rows for the chosen stored levels (default: all)."""
    idx = range(len(sol.times)) if levels is None else levels
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["t", "x", "u"])
        nodes = sol.grid.nodes
        for i in idx:
            t = sol.times[i]
            for x, u in zip(nodes, sol.values[i]):
                w.writerow([repr(float(t)), repr(float(x)), repr(float(u))])
    os.replace(tmp, path)
