"""G-expectation of cylinder random variables by backward dynamic programming.

A cylinder variable ``X = phi(B_t1, B_t2 - B_t1, ..., B_tm - B_tm-1)`` is
represented through a low-dimensional *accumulator*: a state ``a`` that starts
at ``init``, is updated by ``a_j = f_j(a_{j-1}, B_tj - B_tj-1)`` and is mapped
to the payoff by ``X = g(a_m)``. The backward recursion

    v_m = g,    v_{j-1}(a) = P^G_{dt_j}[ y -> v_j(f_j(a, y)) ](0)

then costs one 1-D G-heat solve per (level, state-grid point) rather than a
tensor grid in all ``m`` increments. ``v_j`` evaluated at the realized
accumulator is ``E[X | F_tj]``.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass, field, replace
from typing import Any, Callable, Iterable, Mapping, Sequence

import numpy as np

from . import payoff as pay
from .errors import ConfigurationError, ParameterError, SchemaError, ShapeError
from .payoff import Payoff
from .pde import GParams, Resolution, SpaceGrid, advance, default_half_width
from .sublinear import AxiomReport

EPS_NUM = 2e-2


# --------------------------------------------------------------------------
# partitions and accumulators


@dataclass(frozen=True)
class Partition:
    times: tuple[float, ...]

    def __post_init__(self) -> None:
        t = tuple(float(x) for x in self.times)
        if len(t) < 2:
            raise ParameterError("a partition needs at least two times")
        if t[0] != 0.0:
            raise ParameterError("partitions start at t = 0")
        if any(b <= a for a, b in zip(t[:-1], t[1:])):
            raise ParameterError("partition times must be strictly increasing")
        object.__setattr__(self, "times", t)

    @classmethod
    def uniform(cls, T: float, m: int) -> Partition:
        return cls(tuple(T * k / m for k in range(m + 1)))

    @property
    def m(self) -> int:
        return len(self.times) - 1

    @property
    def T(self) -> float:
        return self.times[-1]

    @property
    def steps(self) -> np.ndarray:
        return np.diff(np.asarray(self.times))

    @property
    def mesh(self) -> float:
        return float(self.steps.max())

    def index(self, t: float) -> int:
        for i, s in enumerate(self.times):
            if abs(s - t) <= 1e-12 * max(1.0, abs(t)):
                return i
        raise ShapeError(f"time {t} is not a partition point")


UPDATE_KINDS = ("hold", "add_increment", "add_square", "add_product", "affine")


@dataclass(frozen=True)
class UpdateOp:
    """One component update. ``add_*`` kinds accumulate into the target;
    ``affine`` overwrites it. All read the state *before* the step.

    * ``add_increment``: ``a[t] += coef * y``
    * ``add_square``: ``a[t] += coef * y**2``
    * ``add_product``: ``a[t] += coef * fn(a[source])**fn_power * y**power``
    * ``affine``: ``a[t] = sum(weights * a) + y_coef * y + y2_coef * y**2 + const``
    """

    kind: str
    target: int = 0
    coef: float = 1.0
    source: int = 0
    fn: Payoff | None = None
    fn_power: int = 1
    power: int = 1
    weights: tuple[float, ...] = ()
    y_coef: float = 0.0
    y2_coef: float = 0.0
    const: float = 0.0

    def __post_init__(self) -> None:
        if self.kind not in UPDATE_KINDS:
            raise SchemaError(f"unknown update kind {self.kind!r}")

    def delta(self, a: np.ndarray, y: np.ndarray) -> np.ndarray:
        if self.kind == "add_increment":
            return self.coef * y
        if self.kind == "add_square":
            return self.coef * y * y
        if self.kind == "add_product":
            src = a[..., self.source]
            f = src if self.fn is None else self.fn(src)
            if self.fn_power != 1:
                f = f**self.fn_power
            return self.coef * f * y**self.power
        raise AssertionError(self.kind)

    def assign(self, a: np.ndarray, y: np.ndarray) -> np.ndarray:
        w = np.asarray(self.weights, dtype=float)
        base = a[..., : w.size] @ w if w.size else np.zeros(np.broadcast(a[..., 0], y).shape)
        return base + self.y_coef * y + self.y2_coef * y * y + self.const

    def shifted(self, offset: int) -> UpdateOp:
        if self.kind == "affine":
            return replace(self, target=self.target + offset, weights=(0.0,) * offset + tuple(self.weights))
        return replace(self, target=self.target + offset, source=self.source + offset)

    def to_dict(self) -> dict[str, Any]:
        d: dict[str, Any] = {"kind": self.kind}
        if self.kind == "hold":
            return d
        d["target"] = self.target
        if self.kind == "affine":
            d.update(weights=list(self.weights), y_coef=self.y_coef, y2_coef=self.y2_coef, const=self.const)
            return d
        d["coef"] = self.coef
        if self.kind == "add_product":
            d.update(source=self.source, power=self.power, fn_power=self.fn_power)
            if self.fn is not None:
                d["fn"] = self.fn.to_dict()
        return d


Step = tuple[UpdateOp, ...]


def apply_step(step: Step, a: np.ndarray, y: np.ndarray) -> np.ndarray:
    """New accumulator for broadcast-compatible ``a[..., dim]`` and ``y[...]``."""
    y = np.asarray(y, dtype=float)
    shape = np.broadcast_shapes(a.shape[:-1], y.shape)
    out = np.array(np.broadcast_to(a, shape + a.shape[-1:]), dtype=float)
    for op in step:
        if op.kind == "hold":
            continue
        if op.kind == "affine":
            out[..., op.target] = op.assign(a, y)
        else:
            out[..., op.target] += op.delta(a, y)
    return out


# convenience op builders
def hold() -> UpdateOp:
    return UpdateOp("hold")


def add_increment(target: int = 0, coef: float = 1.0) -> UpdateOp:
    return UpdateOp("add_increment", target=target, coef=coef)


def add_square(target: int = 0, coef: float = 1.0) -> UpdateOp:
    return UpdateOp("add_square", target=target, coef=coef)


def add_product(target: int, source: int, fn: Payoff | None = None, power: int = 1, coef: float = 1.0, fn_power: int = 1) -> UpdateOp:
    return UpdateOp("add_product", target=target, source=source, fn=fn, power=power, coef=coef, fn_power=fn_power)


def copy_of(target: int, source: int, dim: int) -> UpdateOp:
    """``a[target] = a[source] + y``: snapshot of a running sum including this step."""
    w = [0.0] * dim
    w[source] = 1.0
    return UpdateOp("affine", target=target, weights=tuple(w), y_coef=1.0)


# terminal maps ---------------------------------------------------------------


class TerminalMap:
    """Callable ``g(a)`` over arrays shaped ``(..., dim)``."""

    def __call__(self, a: np.ndarray) -> np.ndarray:  # pragma: no cover - interface
        raise NotImplementedError


@dataclass(frozen=True)
class Terminal(TerminalMap):
    """``g(a) = sum_k w_k * prod_i payoff_ki(a[index_ki])``."""

    terms: tuple[tuple[float, tuple[tuple[int, Payoff], ...]], ...]

    def __call__(self, a: np.ndarray) -> np.ndarray:
        out = np.zeros(a.shape[:-1])
        for w, factors in self.terms:
            prod = np.full(a.shape[:-1], float(w))
            for idx, f in factors:
                prod = prod * f(a[..., idx])
            out = out + prod
        return out

    @classmethod
    def of(cls, phi: Payoff, index: int = 0) -> Terminal:
        return cls(((1.0, ((index, phi),)),))

    @classmethod
    def sum(cls, parts: Iterable[tuple[float, int, Payoff]]) -> Terminal:
        return cls(tuple((float(w), ((i, f),)) for w, i, f in parts))

    def scaled(self, lam: float) -> Terminal:
        return Terminal(tuple((lam * w, fs) for w, fs in self.terms))

    def plus(self, other: Terminal) -> Terminal:
        return Terminal(self.terms + other.terms)

    def lipschitz(self, radius: float) -> float:
        total = 0.0
        for w, factors in self.terms:
            # product rule bound on the box [-radius, radius]^dim
            sizes = [max(abs(float(f(np.array(radius)))), abs(float(f(np.array(-radius)))), abs(float(f(np.array(0.0))))) for _, f in factors]
            for i, (_, f) in enumerate(factors):
                others = math.prod(s for j, s in enumerate(sizes) if j != i)
                total += abs(w) * f.lipschitz(radius) * others
        return total

    def to_dict(self) -> dict[str, Any]:
        return {
            "kind": "terms",
            "terms": [
                {"weight": w, "factors": [{"index": i, "payoff": f.to_dict()} for i, f in fs]}
                for w, fs in self.terms
            ],
        }


@dataclass(frozen=True)
class RawTerminal(TerminalMap):
    """Arbitrary ``phi(x_1, ..., x_m)`` of the raw increments."""

    fn: Callable[..., np.ndarray]

    def __call__(self, a: np.ndarray) -> np.ndarray:
        return np.asarray(self.fn(*[a[..., i] for i in range(a.shape[-1])]), dtype=float)


@dataclass(frozen=True)
class CombinedTerminal(TerminalMap):
    """``sum_k w_k * g_k(a[offset_k : offset_k + width_k])``."""

    parts: tuple[tuple[float, TerminalMap, int, int], ...]

    def __call__(self, a: np.ndarray) -> np.ndarray:
        out = np.zeros(a.shape[:-1])
        for w, g, off, width in self.parts:
            out = out + w * g(a[..., off : off + width])
        return out


# --------------------------------------------------------------------------
# value tables


@dataclass(frozen=True)
class ValueTable(TerminalMap):
    """``v_j`` on a tensor grid of accumulator values (multilinear interpolation).

    Axes with a single node are degenerate: the value does not vary along
    them. Outside the grid the interpolant is extended linearly.
    """

    level: int
    axes: tuple[np.ndarray, ...]
    values: np.ndarray
    core: tuple[tuple[float, float], ...] = ()

    @property
    def dim(self) -> int:
        return len(self.axes)

    @property
    def points(self) -> np.ndarray:
        mesh = np.meshgrid(*self.axes, indexing="ij")
        return np.stack([m.reshape(-1) for m in mesh], axis=-1)

    def core_mask(self) -> np.ndarray:
        """Grid nodes inside the sampled (un-widened) reachable set."""
        pts = self.points
        mask = np.ones(len(pts), dtype=bool)
        for d, (lo, hi) in enumerate(self.core):
            mask &= (pts[:, d] >= lo - 1e-12) & (pts[:, d] <= hi + 1e-12)
        return mask.reshape(self.values.shape)

    def __call__(self, a: np.ndarray) -> np.ndarray:
        a = np.asarray(a, dtype=float)
        if a.shape[-1] != self.dim:
            raise ShapeError(f"table expects {self.dim}-dimensional states, got {a.shape[-1]}")
        lead = a.shape[:-1]
        idx0: list[np.ndarray] = []
        wts: list[np.ndarray | None] = []
        for d, ax in enumerate(self.axes):
            x = a[..., d]
            if ax.size == 1:
                idx0.append(np.zeros(lead, dtype=np.intp))
                wts.append(None)
                continue
            h = (ax[-1] - ax[0]) / (ax.size - 1)
            pos = (x - ax[0]) / h
            near = np.rint(pos)
            pos = np.where(np.abs(pos - near) <= 1e-9, near, pos)  # nodes reproduce stored values exactly
            j = np.clip(np.floor(pos).astype(np.intp), 0, ax.size - 2)
            idx0.append(j)
            wts.append(pos - j)
        out = np.zeros(lead)
        live = [d for d in range(self.dim) if wts[d] is not None]
        for corner in itertools.product((0, 1), repeat=len(live)):
            w = np.ones(lead)
            index = list(idx0)
            for bit, d in zip(corner, live):
                if bit:
                    index[d] = idx0[d] + 1
                    w = w * wts[d]
                else:
                    w = w * (1.0 - wts[d])
            out = out + w * self.values[tuple(index)]
        return out


# --------------------------------------------------------------------------
# cylinder random variables


@dataclass(frozen=True)
class AccumulatorSpec:
    dim: int
    init: tuple[float, ...]
    updates: tuple[Step, ...]
    terminal: TerminalMap

    def __post_init__(self) -> None:
        if not 1 <= self.dim <= 4:
            raise ConfigurationError(f"accumulator dimension must be 1..4, got {self.dim}")
        init = tuple(float(x) for x in self.init)
        if len(init) != self.dim:
            raise ShapeError("init length must equal dim")
        object.__setattr__(self, "init", init)
        steps = tuple(tuple(s) if isinstance(s, (list, tuple)) else (s,) for s in self.updates)
        if not steps:
            raise SchemaError("at least one update is required")
        for s in steps:
            for op in s:
                if op.kind != "hold" and not 0 <= op.target < self.dim:
                    raise ShapeError(f"update target {op.target} outside dim {self.dim}")
                if op.kind == "add_product" and not 0 <= op.source < self.dim:
                    raise ShapeError(f"update source {op.source} outside dim {self.dim}")
        object.__setattr__(self, "updates", steps)


@dataclass(frozen=True)
class CylinderRV:
    partition: Partition
    acc: AccumulatorSpec
    raw_phi: Callable[..., np.ndarray] | None = None

    def __post_init__(self) -> None:
        n = len(self.acc.updates)
        if n not in (1, self.partition.m):
            raise ShapeError(f"{n} updates for {self.partition.m} partition steps")

    @property
    def m(self) -> int:
        return self.partition.m

    @property
    def steps(self) -> tuple[Step, ...]:
        u = self.acc.updates
        return u * self.m if len(u) == 1 else u

    @property
    def dim(self) -> int:
        return self.acc.dim

    # algebra used by the property checks --------------------------------

    def with_terminal(self, terminal: TerminalMap) -> CylinderRV:
        return CylinderRV(self.partition, replace(self.acc, terminal=terminal))

    def __neg__(self) -> CylinderRV:
        return self.scaled(-1.0)

    def scaled(self, lam: float) -> CylinderRV:
        g = self.acc.terminal
        new = g.scaled(lam) if isinstance(g, Terminal) else CombinedTerminal(((lam, g, 0, self.dim),))
        return self.with_terminal(new)

    def shifted(self, c: float) -> CylinderRV:
        g = self.acc.terminal
        const = Terminal.of(pay.const(c))
        if isinstance(g, Terminal):
            return self.with_terminal(g.plus(const))
        return self.with_terminal(CombinedTerminal(((1.0, g, 0, self.dim), (1.0, const, 0, self.dim))))

    def plus(self, other: CylinderRV, weight: float = 1.0) -> CylinderRV:
        """``self + weight * other`` on a concatenated accumulator."""
        if other.partition != self.partition:
            raise ShapeError("sums need a shared partition")
        d1, d2 = self.dim, other.dim
        steps = tuple(s1 + tuple(op.shifted(d1) for op in s2) for s1, s2 in zip(self.steps, other.steps))
        term = CombinedTerminal(((1.0, self.acc.terminal, 0, d1), (weight, other.acc.terminal, d1, d2)))
        acc = AccumulatorSpec(d1 + d2, self.acc.init + other.acc.init, steps, term)
        return CylinderRV(self.partition, acc)

    def truncated(self, j: int, terminal: TerminalMap) -> CylinderRV:
        """Same accumulator stopped at ``t_j`` with a new terminal map."""
        part = Partition(self.partition.times[: j + 1])
        return CylinderRV(part, replace(self.acc, updates=self.steps[:j], terminal=terminal))

    def sample(self, increments: np.ndarray) -> np.ndarray:
        """Pathwise value for increments shaped ``(..., m)``."""
        inc = np.asarray(increments, dtype=float)
        a = np.broadcast_to(np.asarray(self.acc.init), inc.shape[:-1] + (self.dim,)).copy()
        for j, step in enumerate(self.steps):
            a = apply_step(step, a, inc[..., j])
        return self.acc.terminal(a)

    def states(self, increments: np.ndarray, level: int) -> np.ndarray:
        inc = np.asarray(increments, dtype=float)
        a = np.broadcast_to(np.asarray(self.acc.init), inc.shape[:-1] + (self.dim,)).copy()
        for j in range(level):
            a = apply_step(self.steps[j], a, inc[..., j])
        return a


def raw_cylinder(times: Sequence[float], phi: Callable[..., np.ndarray]) -> CylinderRV:
    """Tensor-grid fallback for ``phi(x_1, ..., x_m)`` with ``m <= 3``."""
    part = Partition(tuple(times))
    m = part.m
    if m > 3:
        raise ConfigurationError("raw cylinder payoffs are limited to m <= 3 increments")
    steps = tuple((add_increment(j),) for j in range(m))
    acc = AccumulatorSpec(m, (0.0,) * m, steps, RawTerminal(phi))
    return CylinderRV(part, acc, raw_phi=phi)


def simple_rv(times: Sequence[float], phi: Payoff, step: Step | UpdateOp = None) -> CylinderRV:
    """``phi(a_m)`` for a one-dimensional accumulator (default: ``a = B``)."""
    if step is None:
        step = add_increment()
    steps = (step if isinstance(step, tuple) else (step,),)
    return CylinderRV(Partition(tuple(times)), AccumulatorSpec(1, (0.0,), steps, Terminal.of(phi)))


# --------------------------------------------------------------------------
# dynamic programming


@dataclass(frozen=True)
class DPResolution:
    """Discretization of the accumulator DP.

    ``dx``/``dt`` drive the inner one-step G-heat solves; ``state_step`` is the
    target accumulator grid spacing, capped by ``max_points`` per varying axis
    (1-D) and ``max_states`` nodes per level (several varying axes).
    Reachable boxes come from ``samples`` seeded scenario paths, widened by
    ``widen`` times their range plus ``pad``.
    """

    dx: float = 1.0 / 32
    dt: float | None = None
    state_step: float = 0.05
    max_points: int = 801
    max_states: int = 6561
    samples: int = 4096
    widen: float = 0.25
    pad: float = 0.05
    seed: int = 0
    bounds: tuple[tuple[tuple[float, float], ...], ...] | None = None

    def __post_init__(self) -> None:
        Resolution(self.dx, self.dt)  # CFL validation

    @property
    def step(self) -> float:
        return 0.5 * self.dx**2 if self.dt is None else self.dt


@dataclass(frozen=True)
class LevelBox:
    lo: np.ndarray
    hi: np.ndarray
    core_lo: np.ndarray
    core_hi: np.ndarray


def reachable_boxes(X: CylinderRV, params: GParams, res: DPResolution) -> list[LevelBox]:
    """Per-level accumulator boxes from seeded scenario paths.

    Paths use sigma0, 1 or a fresh uniform volatility per step (one third
    each). Draws are made step by step, so a truncated variable sees the
    same boxes on its common levels.
    """
    rng = np.random.default_rng(res.seed)
    n = res.samples
    kind = rng.integers(0, 3, size=n)
    a = np.broadcast_to(np.asarray(X.acc.init), (n, X.dim)).copy()
    boxes = [LevelBox(a[0].copy(), a[0].copy(), a[0].copy(), a[0].copy())]
    for j, step in enumerate(X.steps):
        dt = X.partition.steps[j]
        s_rand = rng.uniform(params.sigma0, 1.0, size=n)
        z = rng.standard_normal(n)
        sig = np.where(kind == 0, params.sigma0, np.where(kind == 1, 1.0, s_rand))
        a = apply_step(step, a, sig * math.sqrt(dt) * z)
        lo, hi = a.min(axis=0), a.max(axis=0)
        span = hi - lo
        tiny = span <= 1e-12 * np.maximum(1.0, np.abs(hi))
        wl = np.where(tiny, lo, lo - res.widen * span - res.pad)
        wh = np.where(tiny, lo, hi + res.widen * span + res.pad)
        if res.bounds is not None:
            blo = np.array([b[0] for b in res.bounds[j + 1]])
            bhi = np.array([b[1] for b in res.bounds[j + 1]])
            if np.any(lo < blo - 1e-12) or np.any(hi > bhi + 1e-12):
                raise ConfigurationError(
                    f"grid escape at level {j + 1}: reachable states [{lo}, {hi}] leave the box [{blo}, {bhi}]"
                )
            wl, wh = np.where(tiny, lo, blo), np.where(tiny, lo, bhi)
        boxes.append(LevelBox(wl, wh, lo, hi))
    return boxes


def _axes(box: LevelBox, res: DPResolution) -> tuple[np.ndarray, ...]:
    live = [d for d in range(box.lo.size) if box.hi[d] > box.lo[d]]
    if len(live) > 3:
        raise ConfigurationError("more than three varying accumulator coordinates on one level")
    cap = res.max_points if len(live) <= 1 else max(3, int(res.max_states ** (1.0 / len(live))))
    axes = []
    for d in range(box.lo.size):
        if d not in live:
            axes.append(np.array([box.lo[d]]))
            continue
        n = int(min(cap, math.ceil((box.hi[d] - box.lo[d]) / res.state_step) + 1))
        axes.append(np.linspace(box.lo[d], box.hi[d], max(n, 3)))
    return tuple(axes)


def _one_step(
    states: np.ndarray,
    step: Step,
    v_next: TerminalMap,
    dt: float,
    params: GParams,
    res: DPResolution,
    chunk: int = 2048,
) -> np.ndarray:
    """``P^G_dt[y -> v_next(f(a, y))](0)`` for every state row."""
    grid = SpaceGrid.from_dx(0.0, default_half_width(dt), res.dx)
    y = grid.nodes
    mid = (grid.n_points - 1) // 2
    out = np.empty(len(states))
    for s in range(0, len(states), chunk):
        a = states[s : s + chunk, None, :]
        psi = v_next(apply_step(step, a, y[None, :]))
        out[s : s + chunk] = advance(psi, dt, params, res.dx, res.step)[:, mid]
    return out


def solve_dp(X: CylinderRV, params: GParams, res: DPResolution | None = None, down_to: int = 0) -> dict[int, ValueTable]:
    """Value tables for levels ``m`` (terminal, sampled) down to ``down_to``."""
    res = res or DPResolution()
    if not 0 <= down_to <= X.m:
        raise ParameterError(f"level must lie in [0, {X.m}]")
    boxes = reachable_boxes(X, params, res)
    tables: dict[int, ValueTable] = {}
    core = lambda b: tuple(zip(b.core_lo.tolist(), b.core_hi.tolist()))  # noqa: E731
    axes_m = _axes(boxes[X.m], res)
    v_next: TerminalMap = X.acc.terminal
    mesh = ValueTable(X.m, axes_m, np.zeros(tuple(ax.size for ax in axes_m)), core(boxes[X.m]))
    tables[X.m] = replace(mesh, values=X.acc.terminal(mesh.points).reshape(mesh.values.shape))
    steps = X.partition.steps
    for j in range(X.m - 1, down_to - 1, -1):
        if j == 0:
            axes = tuple(np.array([x]) for x in X.acc.init)
        else:
            axes = _axes(boxes[j], res)
        shell = ValueTable(j, axes, np.zeros(tuple(ax.size for ax in axes)), core(boxes[j]))
        vals = _one_step(shell.points, X.steps[j], v_next, float(steps[j]), params, res)
        table = replace(shell, values=vals.reshape(shell.values.shape))
        tables[j] = table
        v_next = table
    return tables


def expect(X: CylinderRV, params: GParams, resolution: DPResolution | None = None) -> float:
    """``E[X]`` under the G-expectation."""
    return float(solve_dp(X, params, resolution)[0].values.reshape(-1)[0])


def conditional(X: CylinderRV, j: int, params: GParams, resolution: DPResolution | None = None) -> ValueTable:
    """``E[X | F_tj]`` as a table over the level-``j`` accumulator."""
    return solve_dp(X, params, resolution, down_to=j)[j]


def check_tower(
    X: CylinderRV,
    s_idx: int,
    t_idx: int,
    params: GParams,
    resolution: DPResolution | None = None,
) -> float:
    """Sup-norm gap between ``E[E[X|F_t]|F_s]`` and ``E[X|F_s]`` on visited nodes."""
    if not 0 <= s_idx <= t_idx <= X.m:
        raise ParameterError("need 0 <= s_idx <= t_idx <= m")
    res = resolution or DPResolution()
    direct = solve_dp(X, params, res, down_to=s_idx)
    inner = direct[t_idx]
    if t_idx == X.m:
        derived = X
    else:
        derived = X.truncated(t_idx, inner)
    again = solve_dp(derived, params, res, down_to=s_idx)[s_idx]
    target = direct[s_idx]
    mask = target.core_mask() if s_idx > 0 else np.ones(target.values.shape, dtype=bool)
    diff = np.abs(again(target.points).reshape(target.values.shape) - target.values)
    return float(diff[mask].max())


def check_special_additivity(
    X: CylinderRV,
    Y: CylinderRV,
    params: GParams,
    resolution: DPResolution | None = None,
) -> float:
    """``|E[X+Y] - E[X] - E[Y]|`` for ``Y`` with ``E[Y] = -E[-Y]``."""
    res = resolution or DPResolution()
    return abs(expect(X.plus(Y), params, res) - expect(X, params, res) - expect(Y, params, res))


def classical_expect(X: CylinderRV, nodes: int | None = None, samples: int = 200_000, seed: int = 0) -> float:
    """Linear expectation under the Wiener measure (sigma = 1).

    Tensor Gauss-Hermite over the increments for ``m <= 4`` (default nodes
    per axis 400, 200, 60, 24, so kinked payoffs stay within ~5e-3); seeded
    Monte Carlo with antithetic pairs beyond that.
    """
    dt = X.partition.steps
    if X.m <= 4:
        nodes = nodes or (400, 200, 60, 24)[X.m - 1]
        z, w = np.polynomial.hermite_e.hermegauss(nodes)
        w = w / w.sum()
        grids = np.meshgrid(*[z * math.sqrt(d) for d in dt], indexing="ij")
        weights = np.ones_like(grids[0])
        for k, wk in enumerate(np.meshgrid(*[w] * X.m, indexing="ij")):
            weights = weights * wk
        inc = np.stack([g.reshape(-1) for g in grids], axis=-1)
        return float(np.dot(weights.reshape(-1), X.sample(inc)))
    rng = np.random.default_rng(seed)
    z = rng.standard_normal((samples // 2, X.m)) * np.sqrt(dt)
    return float(0.5 * (X.sample(z).mean() + X.sample(-z).mean()))


# --------------------------------------------------------------------------
# property checks


@dataclass(frozen=True)
class PropertySample:
    """A payoff pair on ``B`` over ``times`` plus an ``F_t``-measurable multiplier.

    ``phi`` and ``psi`` are applied to ``B_T``; ``eta`` to ``B_t`` with
    ``t = times[t_idx]``; ``bump`` is a nonnegative payoff used for
    monotonicity; ``tail`` is applied to ``B_T - B_t`` for (vii).
    """

    times: tuple[float, ...]
    t_idx: int
    phi: Payoff
    psi: Payoff
    eta: Payoff
    bump: Payoff = field(default_factory=lambda: pay.call(0.0))
    tail: Payoff = field(default_factory=lambda: pay.power(2))


def standard_samples() -> list[PropertySample]:
    times = (0.0, 0.5, 1.0)
    return [
        PropertySample(times, 1, pay.power(2), pay.abs_power(1), pay.sin(1.0)),
        PropertySample(times, 1, pay.call(0.0), -pay.power(2), pay.affine(0.5, -0.25), pay.power(2), pay.abs_power(1)),
        PropertySample(times, 1, pay.sin(1.0), pay.put(0.5), pay.const(2.0), pay.abs_power(1), -pay.power(2)),
    ]


def _b_rv(times: Sequence[float], terminal: Terminal) -> CylinderRV:
    return CylinderRV(Partition(tuple(times)), AccumulatorSpec(1, (0.0,), ((add_increment(),),), terminal))


def _snapshot_rv(times: Sequence[float], t_idx: int, terminal: Terminal) -> CylinderRV:
    """Two coordinates: ``a0 = B``, ``a1 = B_{t}`` frozen after ``t_idx``."""
    m = len(times) - 1
    steps = []
    for j in range(m):
        if j < t_idx:
            steps.append((add_increment(0), add_increment(1)))
        else:
            steps.append((add_increment(0),))
    return CylinderRV(Partition(tuple(times)), AccumulatorSpec(2, (0.0, 0.0), tuple(steps), terminal))


def _after_rv(times: Sequence[float], t_idx: int, phi: Payoff) -> CylinderRV:
    """``a0 = B``, ``a1 = B - B_t``; payoff on ``a1`` only."""
    m = len(times) - 1
    steps = []
    for j in range(m):
        if j < t_idx:
            steps.append((add_increment(0),))
        else:
            steps.append((add_increment(0), add_increment(1)))
    return CylinderRV(Partition(tuple(times)), AccumulatorSpec(2, (0.0, 0.0), tuple(steps), Terminal.of(phi, 1)))


def _diag(table: ValueTable, points: np.ndarray) -> np.ndarray:
    return table(np.stack([points, points], axis=-1))


def check_properties(
    samples: Sequence[PropertySample],
    params: GParams,
    resolution: DPResolution | None = None,
    tol: float = EPS_NUM,
) -> AxiomReport:
    """Conditional-expectation properties (ii), (iii), (v), (vi), (vii) and the
    unconditional axioms on sampled cylinder variables."""
    res = resolution or DPResolution()
    rep = AxiomReport()
    for k, s in enumerate(samples):
        tag = f"sample{k}"
        X = _b_rv(s.times, Terminal.of(s.phi))
        Y = _b_rv(s.times, Terminal.of(s.psi))
        j = s.t_idx
        tx = solve_dp(X, params, res, down_to=0)
        ty = solve_dp(Y, params, res, down_to=0)
        vx, vy = tx[j], ty[j]
        pts = vx.points[:, 0]
        core = vx.core_mask().reshape(-1)
        # (ii) monotonicity: X + bump >= X
        up = solve_dp(_b_rv(s.times, Terminal.sum([(1.0, 0, s.phi), (1.0, 0, s.bump)])), params, res, down_to=j)[j]
        rep.record("P2", "cond_monotonicity", float(np.max((vx.values - up(vx.points))[core.reshape(vx.values.shape)])), tol, tag)
        # (iii) sub-additivity of conditionals
        dxy = solve_dp(_b_rv(s.times, Terminal.sum([(1.0, 0, s.phi), (-1.0, 0, s.psi)])), params, res, down_to=0)
        gap = (vx.values - vy(vx.points).reshape(vx.values.shape)) - dxy[j](vx.points).reshape(vx.values.shape)
        rep.record("P3", "cond_subadditivity", float(gap[core.reshape(gap.shape)].max()), tol, tag)
        # (v) translation by an F_t-measurable eta
        trans = solve_dp(_snapshot_rv(s.times, j, Terminal.sum([(1.0, 0, s.phi), (1.0, 1, s.eta)])), params, res, down_to=j)[j]
        p = pts[core]
        dev = np.abs(_diag(trans, p) - (vx(p[:, None]) + s.eta(p)))
        rep.record("P5", "cond_translation", float(dev.max()), tol, tag)
        # (vi) eta X = eta+ E[X|F_t] + eta- E[-X|F_t]
        prod = Terminal(((1.0, ((0, s.phi), (1, s.eta))),))
        vprod = solve_dp(_snapshot_rv(s.times, j, prod), params, res, down_to=j)[j]
        vneg = solve_dp(-X, params, res, down_to=j)[j]
        e = s.eta(p)
        rhs = np.maximum(e, 0) * vx(p[:, None]) + np.maximum(-e, 0) * vneg(p[:, None])
        rep.record("P6", "cond_homogeneity", float(np.abs(_diag(vprod, p) - rhs).max()), tol, tag)
        # (vii) increments after t are independent of F_t
        Z = _after_rv(s.times, j, s.tail)
        tz = solve_dp(Z, params, res, down_to=0)
        zt = tz[j]
        zpts = zt.points
        zmask = zt.core_mask().reshape(-1) & (np.abs(zpts[:, 1]) < 1e-12)
        ez = float(tz[0].values.reshape(-1)[0])
        rep.record("P7", "cond_independence", float(np.abs(zt.values.reshape(-1)[zmask] - ez).max()), tol, tag)
        # unconditional axioms
        ex, ey = float(tx[0].values.reshape(-1)[0]), float(ty[0].values.reshape(-1)[0])
        rep.record("A1", "monotonicity", ex - expect(_b_rv(s.times, Terminal.sum([(1.0, 0, s.phi), (1.0, 0, s.bump)])), params, res), tol, tag)
        c = 0.75
        rep.record("A2", "constants", abs(expect(_b_rv(s.times, Terminal.of(pay.const(c))), params, res) - c), tol, tag)
        rep.record("A3", "subadditivity", (ex - ey) - float(dxy[0].values.reshape(-1)[0]), tol, tag)
        lam = 2.5
        rep.record("A4", "homogeneity", abs(expect(X.scaled(lam), params, res) - lam * ex), tol, tag)
        rep.record("A5", "translation", abs(expect(X.shifted(c), params, res) - (ex + c)), tol, tag)
        rep.record("A6", "self_domination", -(ex + expect(-X, params, res)), tol, tag)
    return rep


# --------------------------------------------------------------------------
# JSON


def _op_from_dict(d: Mapping[str, Any]) -> UpdateOp:
    if not isinstance(d, Mapping) or "kind" not in d:
        raise SchemaError("each update must be an object with a 'kind'")
    kind = d["kind"]
    if kind not in UPDATE_KINDS:
        raise SchemaError(f"unknown update kind {kind!r}")
    fn = pay.from_dict(d["fn"]) if "fn" in d else None
    try:
        return UpdateOp(
            kind,
            target=int(d.get("target", 0)),
            coef=float(d.get("coef", 1.0)),
            source=int(d.get("source", 0)),
            fn=fn,
            fn_power=int(d.get("fn_power", 1)),
            power=int(d.get("power", 1)),
            weights=tuple(float(w) for w in d.get("weights", ())),
            y_coef=float(d.get("y_coef", 0.0)),
            y2_coef=float(d.get("y2_coef", 0.0)),
            const=float(d.get("const", 0.0)),
        )
    except (TypeError, ValueError) as exc:
        raise SchemaError(f"bad update {d!r}: {exc}") from None


def terminal_from_dict(d: Mapping[str, Any]) -> Terminal:
    if not isinstance(d, Mapping) or "kind" not in d:
        raise SchemaError("terminal must be an object with a 'kind'")
    if d["kind"] == "terms":
        try:
            return Terminal(
                tuple(
                    (
                        float(t.get("weight", 1.0)),
                        tuple((int(f.get("index", 0)), pay.from_dict(f["payoff"])) for f in t["factors"]),
                    )
                    for t in d["terms"]
                )
            )
        except (KeyError, TypeError) as exc:
            raise SchemaError(f"bad terminal terms: {exc}") from None
    if "params" in d:
        phi = pay.from_dict(d)
    else:
        phi = pay.from_dict({"kind": d["kind"], "params": {k: v for k, v in d.items() if k not in ("kind", "index")}})
    return Terminal.of(phi, int(d.get("index", 0)))


def rv_from_dict(d: Mapping[str, Any]) -> CylinderRV:
    """Parse ``{"times": [...], "acc": {"dim", "init", "updates", "terminal"}}``."""
    try:
        times = tuple(float(t) for t in d["times"])
        acc = d["acc"]
        dim = int(acc.get("dim", 1))
        init = tuple(float(x) for x in acc.get("init", [0.0] * dim))
        steps = []
        for u in acc["updates"]:
            ops = u if isinstance(u, list) else [u]
            steps.append(tuple(_op_from_dict(o) for o in ops))
        terminal = terminal_from_dict(acc["terminal"])
    except KeyError as exc:
        raise SchemaError(f"cylinder variable is missing {exc.args[0]!r}") from None
    except (TypeError, AttributeError) as exc:
        raise SchemaError(f"malformed cylinder variable: {exc}") from None
    return CylinderRV(Partition(times), AccumulatorSpec(dim, init, tuple(steps), terminal))


def rv_from_json(text: str) -> CylinderRV:
    try:
        return rv_from_dict(json.loads(text))
    except json.JSONDecodeError as exc:
        raise SchemaError(f"not valid JSON: {exc}") from None


def rv_to_dict(X: CylinderRV) -> dict[str, Any]:
    if not isinstance(X.acc.terminal, Terminal):
        raise SchemaError("only catalog terminals serialize")
    return {
        "times": list(X.partition.times),
        "acc": {
            "dim": X.dim,
            "init": list(X.acc.init),
            "updates": [[op.to_dict() for op in s] for s in X.acc.updates],
            "terminal": X.acc.terminal.to_dict(),
        },
    }
