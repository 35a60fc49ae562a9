"""Scenario paths, quadratic variation and stochastic integrals.

Paths are a device for pathwise identities and for lower bounds: each one
fixes a volatility control ``sigma_k in [sigma0, 1]`` and a driver draw, so
``dB_k = sigma_k sqrt(dt) z_k`` and ``<B>`` is known exactly as
``sum sigma_k^2 dt``. Expectations of integrals are computed with the
accumulator DP instead.
"""

from __future__ import annotations

import csv
import math
import os
from dataclasses import dataclass
from typing import Callable, Iterable, Sequence

import numpy as np

from . import payoff as pay
from .errors import ParameterError, ShapeError
from .gexpectation import (
    AccumulatorSpec,
    CylinderRV,
    DPResolution,
    Partition,
    RawTerminal,
    Terminal,
    add_increment,
    add_product,
    add_square,
    expect,
    solve_dp,
)
from .payoff import Payoff
from .pde import GParams

DRIVERS = ("gaussian", "rademacher")


# --------------------------------------------------------------------------
# paths


@dataclass(frozen=True)
class ScenarioPath:
    times: np.ndarray
    sigma: np.ndarray
    dB: np.ndarray
    seed: int = 0

    def __post_init__(self) -> None:
        t = np.asarray(self.times, dtype=float)
        s = np.asarray(self.sigma, dtype=float)
        d = np.asarray(self.dB, dtype=float)
        if t.ndim != 1 or t.size < 2 or s.shape != (t.size - 1,) or d.shape != s.shape:
            raise ShapeError("need n+1 times and n controls and increments")
        for a in (t, s, d):
            a.setflags(write=False)
        object.__setattr__(self, "times", t)
        object.__setattr__(self, "sigma", s)
        object.__setattr__(self, "dB", d)

    @property
    def steps(self) -> int:
        return self.dB.size

    @property
    def T(self) -> float:
        return float(self.times[-1])

    @property
    def dt(self) -> np.ndarray:
        return np.diff(self.times)

    @property
    def dqv(self) -> np.ndarray:
        return self.sigma**2 * self.dt

    @property
    def B(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.dB)])

    @property
    def qv(self) -> np.ndarray:
        return np.concatenate([[0.0], np.cumsum(self.dqv)])

    def coarsen(self, factor: int) -> ScenarioPath:
        """Merge ``factor`` consecutive steps; ``<B>`` and ``B`` are preserved on the coarse grid."""
        if factor < 1 or self.steps % factor:
            raise ShapeError(f"cannot coarsen {self.steps} steps by {factor}")
        n = self.steps // factor
        dB = self.dB.reshape(n, factor).sum(axis=1)
        dq = self.dqv.reshape(n, factor).sum(axis=1)
        times = self.times[::factor]
        return ScenarioPath(times, np.sqrt(dq / np.diff(times)), dB, self.seed)

    def index_of(self, t: float) -> int:
        k = int(round(t / self.T * self.steps))
        if not 0 <= k <= self.steps or abs(self.times[k] - t) > 1e-9 * max(1.0, self.T):
            raise ShapeError(f"time {t} is not on the path grid")
        return k


# policies ----------------------------------------------------------------


@dataclass(frozen=True)
class Policy:
    """Volatility control. ``kind`` is ``constant``, ``random`` or ``bangbang``.

    ``bangbang`` picks 1 where the value function has a positive discrete
    second difference (step ``h``, default ``sqrt(dt)``) at the current
    state and ``sigma0`` otherwise. ``random`` draws a uniform level in
    ``[sigma0, 1]`` and keeps it for ``hold`` steps.
    """

    kind: str
    sigma: float | None = None
    value: Callable[[float, np.ndarray], np.ndarray] | None = None
    h: float | None = None
    hold: int = 1

    def __post_init__(self) -> None:
        if self.kind not in ("constant", "random", "bangbang"):
            raise ParameterError(f"unknown policy {self.kind!r}")
        if self.kind == "constant" and self.sigma is None:
            raise ParameterError("constant policy needs sigma")
        if self.kind == "bangbang" and self.value is None:
            raise ParameterError("bangbang policy needs a value function")


def constant(sigma: float) -> Policy:
    return Policy("constant", sigma=float(sigma))


def random_policy(hold: int = 1) -> Policy:
    if hold < 1:
        raise ParameterError("hold must be >= 1")
    return Policy("random", hold=hold)


def bangbang(value: Payoff | Callable[[float, np.ndarray], np.ndarray], h: float | None = None) -> Policy:
    """Bang-bang control from ``value(t, x)``; a payoff is used as a time-free value."""
    fn = (lambda t, x, _v=value: _v(x)) if isinstance(value, Payoff) else value
    return Policy("bangbang", value=fn, h=h)


def parse_policy(text: str, params: GParams, value: Payoff | None = None) -> Policy:
    """``constant:<s>``, ``sigma0``, ``one``, ``random`` or ``bangbang``."""
    if text.startswith("constant:"):
        return constant(float(text.split(":", 1)[1]))
    if text == "sigma0":
        return constant(params.sigma0)
    if text == "one":
        return constant(1.0)
    if text == "random":
        return random_policy()
    if text == "bangbang":
        return bangbang(value if value is not None else pay.sin(1.0))
    raise ParameterError(f"unknown policy {text!r}")


def simulate_paths(
    policy: Policy,
    T: float,
    steps: int,
    params: GParams,
    seeds: Sequence[int],
    driver: str = "gaussian",
) -> list[ScenarioPath]:
    """One path per seed; each seed owns its stream, so a path does not
    depend on which other seeds are simulated alongside it."""
    if steps < 1:
        raise ParameterError("steps must be >= 1")
    if not T > 0:
        raise ParameterError("T must be positive")
    if driver not in DRIVERS:
        raise ParameterError(f"driver must be one of {DRIVERS}")
    if policy.kind == "constant" and not params.sigma0 - 1e-15 <= policy.sigma <= 1.0 + 1e-15:
        raise ParameterError(f"constant sigma {policy.sigma} outside [sigma0, 1]")
    n = len(seeds)
    z = np.empty((n, steps))
    u = np.empty((n, steps))
    for i, s in enumerate(seeds):
        rng = np.random.default_rng(int(s))
        if driver == "gaussian":
            z[i] = rng.standard_normal(steps)
        else:
            z[i] = rng.choice(np.array([-1.0, 1.0]), size=steps)
        u[i] = rng.uniform(0.0, 1.0, size=steps)
    times = np.linspace(0.0, T, steps + 1)
    dt = T / steps
    sq = math.sqrt(dt)
    if policy.kind == "constant":
        sigma = np.full((n, steps), policy.sigma)
    elif policy.kind == "random":
        held = np.repeat(u[:, :: policy.hold], policy.hold, axis=1)[:, :steps]
        sigma = params.sigma0 + (1.0 - params.sigma0) * held
    else:
        h = policy.h if policy.h is not None else sq
        sigma = np.empty((n, steps))
        x = np.zeros(n)
        for k in range(steps):
            v = policy.value
            d2 = v(times[k], x + h) - 2.0 * v(times[k], x) + v(times[k], x - h)
            sigma[:, k] = np.where(d2 > 0, 1.0, params.sigma0)
            x = x + sigma[:, k] * sq * z[:, k]
    dB = sigma * sq * z
    return [ScenarioPath(times, sigma[i], dB[i], int(seeds[i])) for i in range(n)]


def simulate_path(
    policy: Policy,
    T: float,
    steps: int,
    params: GParams,
    seed: int,
    driver: str = "gaussian",
) -> ScenarioPath:
    return simulate_paths(policy, T, steps, params, [seed], driver)[0]


def write_paths_csv(paths: Iterable[ScenarioPath], path: str | os.PathLike) -> None:
    """Columns ``seed,t,B,qv,sigma`` (sigma of the step starting at t; empty at T)."""
    tmp = f"{os.fspath(path)}.tmp"
    with open(tmp, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["seed", "t", "B", "qv", "sigma"])
        for p in paths:
            B, qv = p.B, p.qv
            for k, t in enumerate(p.times):
                sig = repr(float(p.sigma[k])) if k < p.steps else ""
                w.writerow([p.seed, repr(float(t)), repr(float(B[k])), repr(float(qv[k])), sig])
    os.replace(tmp, path)


# --------------------------------------------------------------------------
# simple processes and pathwise integrals


@dataclass(frozen=True)
class SimpleProcess:
    """``eta_t = xi_j(B_tj)`` on ``[t_j, t_j+1)``; one coefficient per step (or one for all)."""

    partition: Partition
    coefficients: tuple[Payoff, ...]

    def __post_init__(self) -> None:
        c = tuple(self.coefficients)
        if len(c) not in (1, self.partition.m):
            raise ShapeError(f"{len(c)} coefficients for {self.partition.m} steps")
        object.__setattr__(self, "coefficients", c * self.partition.m if len(c) == 1 else c)

    @classmethod
    def uniform(cls, T: float, m: int, coef: Payoff | Sequence[Payoff]) -> SimpleProcess:
        c = (coef,) if isinstance(coef, Payoff) else tuple(coef)
        return cls(Partition.uniform(T, m), c)

    @property
    def m(self) -> int:
        return self.partition.m

    def values(self, path: ScenarioPath) -> tuple[np.ndarray, np.ndarray]:
        """Path indices of the partition and ``xi_j`` on this path."""
        if self.partition.T > path.T + 1e-12:
            raise ShapeError("partition extends past the path horizon")
        idx = np.array([path.index_of(t) for t in self.partition.times])
        B = path.B
        xi = np.array([float(f(B[k])) for f, k in zip(self.coefficients, idx[:-1])])
        return idx, xi


def bochner_integral(eta: SimpleProcess, path: ScenarioPath) -> float:
    _, xi = eta.values(path)
    return float(np.dot(xi, eta.partition.steps))


def ito_integral(eta: SimpleProcess, path: ScenarioPath) -> float:
    idx, xi = eta.values(path)
    return float(np.dot(xi, np.diff(path.B[idx])))


def qv_integral(eta: SimpleProcess, path: ScenarioPath) -> float:
    idx, xi = eta.values(path)
    return float(np.dot(xi, np.diff(path.qv[idx])))


# --------------------------------------------------------------------------
# expectations of integral functionals


def _integral_rv(eta: SimpleProcess, power: int, fn_power: int, coef: Sequence[float] | None = None, terminal: Terminal | None = None) -> CylinderRV:
    """Accumulator ``a0 = B``, ``a1 += c_j xi_j(a0)^fn_power * dB^power``."""
    coef = coef if coef is not None else [1.0] * eta.m
    steps = tuple(
        (add_product(1, 0, fn=f, power=power, coef=c, fn_power=fn_power), add_increment(0))
        for f, c in zip(eta.coefficients, coef)
    )
    term = terminal if terminal is not None else Terminal.of(pay.identity(), 1)
    return CylinderRV(eta.partition, AccumulatorSpec(2, (0.0, 0.0), steps, term))


def ito_rv(eta: SimpleProcess, terminal: Terminal | None = None) -> CylinderRV:
    """``int eta dB`` (component 1) alongside ``B`` (component 0)."""
    return _integral_rv(eta, 1, 1, terminal=terminal)


def qv_form_rv(eta: SimpleProcess, square: bool = True) -> CylinderRV:
    """``sum xi_j^k (dB_j)^2`` with ``k = 2`` (isometry form) or ``k = 1``."""
    return _integral_rv(eta, 2, 2 if square else 1)




def _expect_coef(f: Payoff, t: float, params: GParams, res: DPResolution, mode: str) -> float:
    """``E[xi(B_t)^2]`` (``mode='square'``) or ``E[|xi(B_t)|]`` (``mode='abs'``)."""
    if t == 0.0:
        v = float(f(0.0))
        return v * v if mode == "square" else abs(v)
    if mode == "square":
        term = Terminal(((1.0, ((0, f), (0, f))),))
    else:
        term = RawTerminal(lambda a0, _f=f: np.abs(_f(a0)))
    rv = CylinderRV(Partition((0.0, t)), AccumulatorSpec(1, (0.0,), ((add_increment(),),), term))
    return expect(rv, params, res)


def expect_ito_functionals(eta: SimpleProcess, params: GParams, resolution: DPResolution | None = None) -> dict[str, float]:
    """G-expectations of the Ito integral of ``eta`` and of its isometry partner.

    ``qv_second_form`` is ``E[sum xi_j^2 (dB_j)^2]``, the per-step form of
    ``E[int eta^2 d<B>]``; ``e2_bound`` is ``sum E[xi_j^2] dt_j``.
    """
    res = resolution or DPResolution()
    I = ito_rv(eta)
    sq = ito_rv(eta, Terminal.of(pay.power(2), 1))
    e2 = sum(
        _expect_coef(f, t, params, res, "square") * dt
        for f, t, dt in zip(eta.coefficients, eta.partition.times, eta.partition.steps)
    )
    return {
        "mean": expect(I, params, res),
        "mean_neg": expect(-I, params, res),
        "second_moment": expect(sq, params, res),
        "qv_second_form": expect(qv_form_rv(eta), params, res),
        "e2_bound": float(e2),
    }


def qv_approximant(t: float, K: int, start: float = 0.0, pre_steps: int = 0) -> CylinderRV:
    """``A_K = sum (dB)^2`` over the uniform ``K``-refinement of ``[start, start+t]``.

    With ``pre_steps > 0`` the interval ``[0, start]`` is split into that many
    steps carrying ``B`` in component 0 (component 1 holds ``A_K``).
    """
    if K < 1:
        raise ParameterError("K must be >= 1")
    if not t > 0:
        raise ParameterError("t must be positive")
    if pre_steps == 0:
        if start != 0.0:
            raise ParameterError("a positive start needs pre_steps >= 1")
        part = Partition.uniform(t, K)
        return CylinderRV(part, AccumulatorSpec(1, (0.0,), ((add_square(),),), Terminal.of(pay.identity())))
    pre = [start * k / pre_steps for k in range(pre_steps)]
    post = [start + t * k / K for k in range(K + 1)]
    steps = tuple([(add_increment(0),)] * pre_steps + [(add_increment(0), add_square(1))] * K)
    acc = AccumulatorSpec(2, (0.0, 0.0), steps, Terminal.of(pay.identity(), 1))
    return CylinderRV(Partition(tuple(pre + post)), acc)


def qv_moments(t: float, K: int, params: GParams, resolution: DPResolution | None = None) -> dict[str, float]:
    """``E[A_K]``, ``E[-A_K]`` and ``E[A_K^2]``."""
    res = resolution or DPResolution()
    A = qv_approximant(t, K)
    return {
        "m1": expect(A, params, res),
        "m1_neg": expect(-A, params, res),
        "m2": expect(A.with_terminal(Terminal.of(pay.power(2))), params, res),
    }


def qv_independence_residual(s: float, t: float, K: int, params: GParams, resolution: DPResolution | None = None, power: int = 1) -> float:
    """Spread of ``E[(A_K over [s, s+t])^power | F_s]`` across the visited ``B_s`` values."""
    res = resolution or DPResolution()
    X = qv_approximant(t, K, start=s, pre_steps=1)
    if power != 1:
        X = X.with_terminal(Terminal.of(pay.power(power), 1))
    tables = solve_dp(X, params, res, down_to=0)
    v = tables[1]
    mask = v.core_mask()
    vals = v.values[mask]
    return float(np.abs(vals - float(tables[0].values.reshape(-1)[0])).max())


def _abs_rv(eta: SimpleProcess, power: int) -> CylinderRV:
    """``|sum xi_j(B_tj) c_j|`` with ``c_j = dt_j`` (``power=0``) or ``(dB_j)^2`` (``power=2``)."""
    coef = list(eta.partition.steps) if power == 0 else [1.0] * eta.m
    return _integral_rv(eta, power, 1, coef=coef, terminal=RawTerminal(lambda a0, a1: np.abs(a1)))


def dt_inequality_gap(eta: SimpleProcess, params: GParams, resolution: DPResolution | None = None) -> float:
    """``E[|int eta dt|] - int E[|eta_t|] dt`` (nonpositive up to discretization)."""
    res = resolution or DPResolution()
    rhs = sum(
        _expect_coef(f, t, params, res, "abs") * dt
        for f, t, dt in zip(eta.coefficients, eta.partition.times, eta.partition.steps)
    )
    return expect(_abs_rv(eta, 0), params, res) - rhs


def qv_inequality_gap(eta: SimpleProcess, params: GParams, resolution: DPResolution | None = None) -> float:
    """``E[|sum xi_j (dB_j)^2|] - int E[|eta_s|] ds``."""
    res = resolution or DPResolution()
    rhs = sum(
        _expect_coef(f, t, params, res, "abs") * dt
        for f, t, dt in zip(eta.coefficients, eta.partition.times, eta.partition.steps)
    )
    return expect(_abs_rv(eta, 2), params, res) - rhs


def integral_translation_residual(
    phi: Payoff,
    eta: SimpleProcess,
    r_idx: int,
    s_idx: int,
    params: GParams,
    resolution: DPResolution | None = None,
) -> float:
    """``E[X + int_r^T eta dB | F_s]`` against ``E[X | F_s]`` for ``X = phi(B_r)``, ``s <= r``.

    At ``s = 0`` this is the unconditional statement ``E[X + int_r^T eta dB] = E[X]``.
    Returns the sup gap over visited level-``s`` states.
    """
    if not 0 <= s_idx <= r_idx < eta.m:
        raise ParameterError("need 0 <= s_idx <= r_idx < m")
    res = resolution or DPResolution()
    # a0 = B; a1 picks up phi(B_r) (increment to the power 0) at step r, then int_r eta dB
    steps = []
    for j, f in enumerate(eta.coefficients):
        ops = [add_increment(0)]
        if j == r_idx:
            ops.append(add_product(1, 0, fn=phi, power=0))
        if j >= r_idx:
            ops.append(add_product(1, 0, fn=f))
        steps.append(tuple(ops))
    Z = CylinderRV(eta.partition, AccumulatorSpec(2, (0.0, 0.0), tuple(steps), Terminal.of(pay.identity(), 1)))
    X = CylinderRV(Partition(eta.partition.times[: r_idx + 1]), AccumulatorSpec(1, (0.0,), ((add_increment(),),), Terminal.of(phi))) if r_idx > 0 else None
    vz = solve_dp(Z, params, res, down_to=s_idx)[s_idx]
    if X is None:
        return abs(float(vz.values.reshape(-1)[0]) - float(phi(0.0)))
    vx = solve_dp(X, params, res, down_to=s_idx)[s_idx]
    if s_idx == 0:
        return abs(float(vz.values.reshape(-1)[0]) - float(vx.values.reshape(-1)[0]))
    pts = vx.points[vx.core_mask().reshape(-1)]
    a = np.concatenate([pts, np.zeros_like(pts)], axis=1)
    return float(np.abs(vz(a) - vx(pts)).max())


# --------------------------------------------------------------------------
# Ito formula


@dataclass(frozen=True)
class ItoProcessSpec:
    """``dX = alpha(X) dt + eta(X) d<B> + beta(X) dB`` and a transform ``Phi``."""

    Phi: Payoff
    alpha: Payoff = pay.const(0.0)
    eta: Payoff = pay.const(0.0)
    beta: Payoff = pay.const(1.0)
    x0: float = 0.0


def _dq(path: ScenarioPath, qv_mode: str) -> np.ndarray:
    if qv_mode == "squares":
        return path.dB**2
    if qv_mode == "path":
        return path.dqv
    raise ParameterError("qv_mode must be 'squares' or 'path'")


def ito_process(spec: ItoProcessSpec, path: ScenarioPath, qv_mode: str = "path") -> np.ndarray:
    """``X`` on the path grid by left-point sums; ``d<B>`` increments are
    ``(dB_k)^2`` or the path's exact ``sigma_k^2 dt``."""
    dt, dq, dB = path.dt, _dq(path, qv_mode), path.dB
    X = np.empty(path.steps + 1)
    X[0] = spec.x0
    for k in range(path.steps):
        x = X[k]
        X[k + 1] = x + float(spec.alpha(x)) * dt[k] + float(spec.eta(x)) * dq[k] + float(spec.beta(x)) * dB[k]
    return X


def ito_formula_residual(spec: ItoProcessSpec, path: ScenarioPath, qv_mode: str = "squares") -> float:
    """``|Phi(X_T) - Phi(X_0) - (dB, dt and d<B> integrals)|`` with left-point sums.

    ``qv_mode='squares'`` uses ``(dB_k)^2`` for every ``d<B>`` increment, both
    in building ``X`` and in the formula (pure discretization error);
    ``'path'`` uses ``sigma_k^2 dt`` and adds a martingale term of order
    ``sqrt(dt)``.
    """
    dq = _dq(path, qv_mode)
    X = ito_process(spec, path, qv_mode)
    x = X[:-1]
    d1 = spec.Phi.deriv(x, 1)
    d2 = spec.Phi.deriv(x, 2)
    a, e, b = spec.alpha(x), spec.eta(x), spec.beta(x)
    a, e, b = (np.broadcast_to(v, x.shape) for v in (a, e, b))
    rhs = np.sum(d1 * b * path.dB) + np.sum(d1 * a * path.dt) + np.sum((d1 * e + 0.5 * d2 * b * b) * dq)
    return float(abs(spec.Phi(X[-1]) - spec.Phi(X[0]) - rhs))


def fit_rate(h: Sequence[float], err: Sequence[float]) -> float:
    """Least-squares slope of ``log err`` against ``log h``."""
    slope, _ = np.polyfit(np.log(np.asarray(h)), np.log(np.asarray(err)), 1)
    return float(slope)


def ito_self_convergence(
    spec: ItoProcessSpec,
    params: GParams,
    levels: Sequence[int] = (8, 9, 10, 11, 12),
    seeds: Sequence[int] = tuple(range(32)),
    policy: Policy | None = None,
    qv_mode: str = "squares",
) -> tuple[list[float], list[float], float]:
    """Mean residual on dyadic coarsenings of one fine path per seed; returns ``(dt, err, rate)``.

    The default control is random but constant on the coarsest cells, so every
    level sees the same volatility pattern.
    """
    top = max(levels)
    policy = policy or random_policy(hold=2 ** (top - min(levels)))
    fine = simulate_paths(policy, 1.0, 2**top, params, list(seeds))
    hs, errs = [], []
    for k in levels:
        factor = 2 ** (top - k)
        r = [ito_formula_residual(spec, p.coarsen(factor), qv_mode) for p in fine]
        hs.append(1.0 / 2**k)
        errs.append(float(np.mean(r)))
    return hs, errs, fit_rate(hs, errs)
