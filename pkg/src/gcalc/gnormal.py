"""The G-normal distribution ``P_t^G`` and its closed-form properties."""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy import integrate

from .errors import NumericError, ParameterError
from .payoff import Payoff, table
from .pde import (
    GParams,
    Resolution,
    SpaceGrid,
    default_half_width,
    evaluate,
    make_grid,
    solve_gheat,
)


@dataclass(frozen=True)
class GNormalQuery:
    payoff: Payoff
    t: float
    params: GParams
    x: float = 0.0
    resolution: Resolution = field(default_factory=Resolution)

    def __post_init__(self) -> None:
        if not self.t > 0:
            raise ParameterError(f"variance scale t must be positive, got {self.t}")


def pg_t(q: GNormalQuery) -> float:
    """``P_t^G(phi)(x)``: the G-heat solution at ``(t, x)``."""
    grid = make_grid(q.t, q.payoff, q.x, q.resolution)
    sol = solve_gheat(q.payoff, q.t, q.params, grid, q.resolution.step, max_levels=2)
    return evaluate(sol, -1, q.x)


def pg(phi: Payoff, t: float, params: GParams, x: float = 0.0, resolution: Resolution | None = None) -> float:
    """Shorthand for :func:`pg_t`."""
    return pg_t(GNormalQuery(phi, t, params, x, resolution or Resolution()))


def gaussian_value(phi: Payoff, variance: float) -> float:
    """``E[phi(X)]`` for ``X ~ N(0, variance)`` by adaptive quadrature.

    The line is cut at the payoff's kinks and at +-40 standard deviations
    (the Gaussian tail beyond is below 1e-300 for every catalog growth rate).
    """
    if variance < 0:
        raise ParameterError("variance must be nonnegative")
    if variance == 0:
        return float(phi(0.0))
    sd = math.sqrt(variance)
    lim = 40.0 * sd
    cuts = sorted({-lim, lim, *[k for k in phi.kinks if -lim < k < lim]})
    norm = 1.0 / math.sqrt(2.0 * math.pi * variance)

    def f(x: float) -> float:
        return float(phi(x)) * math.exp(-0.5 * x * x / variance)

    total = 0.0
    err = 0.0
    for a, b in zip(cuts[:-1], cuts[1:]):
        pts = [p for p in (-sd, 0.0, sd) if a < p < b]
        with warnings.catch_warnings():
            # roundoff notices near epsabs; the returned estimate is checked below
            warnings.simplefilter("ignore", integrate.IntegrationWarning)
            val, e = integrate.quad(f, a, b, points=pts or None, limit=400, epsabs=1e-14, epsrel=1e-12)
        total += val
        err += e
    total *= norm
    err *= norm
    if err > 1e-9 * max(1.0, abs(total)):
        raise NumericError(f"quadrature did not converge (error estimate {err:g})")
    return total


def hermite_value(phi: Payoff, variance: float, nodes: int = 200) -> float:
    """Fixed Gauss-Hermite rule; accurate only for smooth payoffs."""
    if variance == 0:
        return float(phi(0.0))
    x, w = np.polynomial.hermite_e.hermegauss(nodes)
    return float(np.dot(w, phi(math.sqrt(variance) * x)) / math.sqrt(2.0 * math.pi))


def convex_concave_value(phi: Payoff, shape: str, t: float, params: GParams) -> float:
    """Closed form for declared-convex (variance ``t``) or concave (``sigma0^2 t``) payoffs."""
    if shape == "convex":
        return gaussian_value(phi, t)
    if shape == "concave":
        return gaussian_value(phi, params.s0sq * t)
    raise ParameterError(f"shape must be 'convex' or 'concave', got {shape!r}")


def abs_moment(n: float, variance: float) -> float:
    """``E|X|^n`` for ``X ~ N(0, variance)``."""
    return variance ** (n / 2) * 2 ** (n / 2) * math.gamma((n + 1) / 2) / math.sqrt(math.pi)


def moment(n: int, signed: str, t: float, params: GParams) -> float:
    """``E[|X|^n]`` (``plus``) or ``E[-|X|^n]`` (``minus``) for G-normal ``X`` with scale ``t``."""
    if n < 1:
        raise ParameterError("n must be >= 1")
    m = abs_moment(n, t)
    if signed == "plus":
        return m
    if signed == "minus":
        return -(params.sigma0**n) * m
    raise ParameterError(f"signed must be 'plus' or 'minus', got {signed!r}")


def heat_table(phi: Payoff, s: float, params: GParams, center: float, half_width: float, resolution: Resolution) -> Payoff:
    """``P_s^G(phi)`` sampled on a grid, as an interpolating payoff."""
    grid = SpaceGrid.from_dx(center, half_width, resolution.dx)
    sol = solve_gheat(phi, s, params, grid, resolution.step, max_levels=2)
    return table(grid.nodes, sol.final)


def check_chapman(phi: Payoff, s: float, t: float, params: GParams, resolution: Resolution | None = None) -> float:
    """``|P_t(P_s(phi))(0) - P_{t+s}(phi)(0)|``."""
    if not (s > 0 and t > 0):
        raise ParameterError("s and t must be positive")
    res = resolution or Resolution()
    outer = default_half_width(t, None) + default_half_width(s, phi)
    inner = heat_table(phi, s, params, 0.0, outer, res)
    lhs = pg(inner, t, params, 0.0, Resolution(res.dx, res.dt, default_half_width(t, phi)))
    rhs = pg(phi, t + s, params, 0.0, res)
    return abs(lhs - rhs)


def check_symmetry(phi: Payoff, t: float, params: GParams, resolution: Resolution | None = None) -> float:
    """``|P_t(phi(.))(0) - P_t(phi(-.))(0)|`` on a grid symmetric about 0."""
    res = resolution or Resolution()
    mirrored = phi.rescaled(-1.0)
    hw = max(default_half_width(t, phi), default_half_width(t, mirrored))
    r = Resolution(res.dx, res.dt, hw)
    return abs(pg(phi, t, params, 0.0, r) - pg(mirrored, t, params, 0.0, r))


def check_scaling(phi: Payoff, t: float, params: GParams, resolution: Resolution | None = None) -> float:
    """``|u(t, 0) - P_1(phi(sqrt(t) .))(0)|``."""
    if not t > 0:
        raise ParameterError("t must be positive")
    res = resolution or Resolution()
    direct = pg(phi, t, params, 0.0, res)
    if t == 1.0:
        scaled = direct
    else:
        scaled = pg(phi.rescaled(math.sqrt(t)), 1.0, params, 0.0, res)
    return abs(direct - scaled)
