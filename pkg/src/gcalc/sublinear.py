"""Sublinear expectations on finite outcome spaces.

An :class:`UpperExpectation` is the maximum of finitely many linear
expectations. It satisfies monotonicity, constant preservation,
sub-additivity, positive homogeneity and constant translatability exactly
(up to rounding), which makes it the reference model for the axiom and
inequality checkers used elsewhere in the package.
"""

from __future__ import annotations

import csv
import io
import os
from dataclasses import dataclass, field
from typing import Iterable, Sequence

import numpy as np

from .errors import ParameterError, ShapeError

AXIOM_TOL = 1e-10


@dataclass(frozen=True)
class DiscreteRV:
    """Random variable on an outcome space ``{0, ..., n-1}``."""

    values: np.ndarray

    def __post_init__(self) -> None:
        v = np.array(self.values, dtype=float).reshape(-1)
        if v.size < 1:
            raise ShapeError("a random variable needs at least one outcome")
        if not np.all(np.isfinite(v)):
            raise ParameterError("random variable values must be finite")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)

    @property
    def size(self) -> int:
        return self.values.size

    def _other(self, other: DiscreteRV | float) -> np.ndarray | float:
        if isinstance(other, DiscreteRV):
            if other.size != self.size:
                raise ShapeError(f"outcome spaces differ: {self.size} vs {other.size}")
            return other.values
        return float(other)

    def __add__(self, other):
        return DiscreteRV(self.values + self._other(other))

    __radd__ = __add__

    def __sub__(self, other):
        return DiscreteRV(self.values - self._other(other))

    def __rsub__(self, other):
        return DiscreteRV(self._other(other) - self.values)

    def __mul__(self, other):
        return DiscreteRV(self.values * self._other(other))

    __rmul__ = __mul__

    def __neg__(self):
        return DiscreteRV(-self.values)

    def __abs__(self):
        return DiscreteRV(np.abs(self.values))

    def __pow__(self, p: float):
        return DiscreteRV(self.values**p)


@dataclass(frozen=True)
class UpperExpectation:
    """``E[X] = max_P sum_i P_i X_i`` over a finite set of probability vectors."""

    measures: np.ndarray

    def __post_init__(self) -> None:
        m = np.atleast_2d(np.array(self.measures, dtype=float))
        if m.shape[0] < 1 or m.shape[1] < 1:
            raise ShapeError("need at least one measure on a nonempty space")
        if np.any(m < 0) or np.any(np.abs(m.sum(axis=1) - 1.0) > 1e-12):
            raise ParameterError("each measure must be nonnegative and sum to 1")
        m.setflags(write=False)
        object.__setattr__(self, "measures", m)

    @property
    def size(self) -> int:
        return self.measures.shape[1]

    def __call__(self, X: DiscreteRV | float) -> float:
        return upper_expect(X, self)


def upper_expect(X: DiscreteRV | float, E: UpperExpectation) -> float:
    if not isinstance(X, DiscreteRV):
        X = DiscreteRV(np.full(E.size, float(X)))
    if X.size != E.size:
        raise ShapeError(f"random variable has {X.size} outcomes, expectation {E.size}")
    return float(np.max(E.measures @ X.values))


def lp_norm(X: DiscreteRV, E: UpperExpectation, p: float) -> float:
    """``(E[|X|^p])^(1/p)``."""
    if not p >= 1:
        raise ParameterError(f"p must be >= 1, got {p}")
    return upper_expect(abs(X) ** p, E) ** (1.0 / p)


@dataclass
class AxiomCheck:
    check_id: str
    axiom: str
    worst_violation: float
    tolerance: float
    witness: str = ""

    @property
    def passed(self) -> bool:
        return self.worst_violation <= self.tolerance


@dataclass
class AxiomReport:
    checks: list[AxiomCheck] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks)

    @property
    def worst(self) -> float:
        return max((c.worst_violation for c in self.checks), default=0.0)

    def __getitem__(self, axiom: str) -> AxiomCheck:
        for c in self.checks:
            if c.axiom == axiom:
                return c
        raise KeyError(axiom)

    def record(self, check_id: str, axiom: str, violation: float, tol: float, witness: str = "") -> None:
        """Keep the worst violation seen for ``axiom`` (max-reduction)."""
        violation = max(0.0, float(violation))
        for c in self.checks:
            if c.axiom == axiom:
                if violation > c.worst_violation:
                    c.worst_violation, c.witness = violation, witness
                return
        self.checks.append(AxiomCheck(check_id, axiom, violation, tol, witness))

    def merge(self, other: AxiomReport) -> AxiomReport:
        out = AxiomReport([AxiomCheck(**vars(c)) for c in self.checks])
        for c in other.checks:
            out.record(c.check_id, c.axiom, c.worst_violation, c.tolerance, c.witness)
        return out

    def to_csv(self, path: str | os.PathLike | None = None) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["check_id", "axiom", "worst_violation", "tolerance", "pass", "witness"])
        for c in self.checks:
            w.writerow([c.check_id, c.axiom, repr(c.worst_violation), repr(c.tolerance), str(c.passed).lower(), c.witness])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text


def random_expectation(rng: np.random.Generator, n: int | None = None, k: int | None = None) -> UpperExpectation:
    """Seeded sampler: 2-8 outcomes, 1-5 measures from a flat Dirichlet."""
    n = int(rng.integers(2, 9)) if n is None else n
    k = int(rng.integers(1, 6)) if k is None else k
    return UpperExpectation(rng.dirichlet(np.ones(n), size=k))


def random_rv(rng: np.random.Generator, n: int) -> DiscreteRV:
    return DiscreteRV(rng.uniform(-10.0, 10.0, size=n))


def _fmt(*rvs: DiscreteRV | float) -> str:
    parts = []
    for r in rvs:
        if isinstance(r, DiscreteRV):
            parts.append("(" + " ".join(f"{v:.4g}" for v in r.values) + ")")
        else:
            parts.append(f"{r:.4g}")
    return ";".join(parts)


def check_axioms(E: UpperExpectation, trials: int = 100, seed: int = 0, tol: float = AXIOM_TOL) -> AxiomReport:
    """Sample random inputs and record the worst violation of each axiom."""
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    rep = AxiomReport()
    n = E.size
    rep.record("A0", "zero", abs(E(DiscreteRV(np.zeros(n)))), tol, "0")
    for _ in range(trials):
        X, Y = random_rv(rng, n), random_rv(rng, n)
        c = float(rng.uniform(-10, 10))
        lam = float(rng.uniform(0, 10))
        Z = DiscreteRV(np.maximum(X.values, Y.values))  # Z >= Y
        rep.record("A1", "monotonicity", E(Y) - E(Z), tol, _fmt(Z, Y))
        rep.record("A2", "constants", abs(E(DiscreteRV(np.full(n, c))) - c), tol, _fmt(c))
        rep.record("A3", "subadditivity", (E(X) - E(Y)) - E(X - Y), tol, _fmt(X, Y))
        rep.record("A4", "homogeneity", abs(E(lam * X) - lam * E(X)), tol * max(1.0, lam), _fmt(X, lam))
        rep.record("A5", "translation", abs(E(X + c) - (E(X) + c)), tol, _fmt(X, c))
    return rep


def check_inequalities(E: UpperExpectation, trials: int = 100, seed: int = 0, tol: float = AXIOM_TOL) -> AxiomReport:
    """Random checks of the C_r, Hoelder, Minkowski and L^p-monotonicity inequalities.

    Violations are measured relative to ``max(1, rhs)`` because both sides
    grow like ``10**r`` for the sampled ranges.
    """
    if trials < 1:
        raise ParameterError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    rep = AxiomReport()
    n = E.size
    for _ in range(trials):
        X, Y = random_rv(rng, n), random_rv(rng, n)
        r = float(rng.uniform(0.1, 8.0))
        p = float(rng.uniform(1.0 + 1e-3, 8.0))
        q = p / (p - 1.0)
        c_r = max(1.0, 2.0 ** (r - 1.0))
        lhs = E(abs(X + Y) ** r)
        rhs = c_r * (E(abs(X) ** r) + E(abs(Y) ** r))
        rep.record("I1", "c_r", (lhs - rhs) / max(1.0, rhs), tol, _fmt(X, Y, r))
        # Hoelder is scale invariant; unit sup norms keep |Y|^q finite as p -> 1
        Xn, Yn = X * (1.0 / np.abs(X.values).max()), Y * (1.0 / np.abs(Y.values).max())
        lhs = E(abs(Xn * Yn))
        rhs = lp_norm(Xn, E, p) * lp_norm(Yn, E, q)
        rep.record("I2", "holder", (lhs - rhs) / max(1.0, rhs), tol, _fmt(Xn, Yn, p))
        lhs = lp_norm(X + Y, E, p)
        rhs = lp_norm(X, E, p) + lp_norm(Y, E, p)
        rep.record("I3", "minkowski", (lhs - rhs) / max(1.0, rhs), tol, _fmt(X, Y, p))
        p2 = float(rng.uniform(p, 8.0))
        lhs, rhs = lp_norm(X, E, p), lp_norm(X, E, p2)
        rep.record("I4", "lp_monotone", (lhs - rhs) / max(1.0, rhs), tol, _fmt(X, p, p2))
    return rep


def run_trials(trials: int, seed: int = 0, tol: float = AXIOM_TOL) -> AxiomReport:
    """Axioms and inequalities over ``trials`` freshly sampled expectations."""
    rng = np.random.default_rng(seed)
    rep = AxiomReport()
    for i in range(trials):
        E = random_expectation(rng)
        rep = rep.merge(check_axioms(E, trials=1, seed=seed * 100003 + i, tol=tol))
        rep = rep.merge(check_inequalities(E, trials=1, seed=seed * 100003 + i, tol=tol))
    return rep


def linear(probabilities: Sequence[float]) -> UpperExpectation:
    return UpperExpectation(np.asarray([probabilities], dtype=float))


def from_measures(measures: Iterable[Sequence[float]]) -> UpperExpectation:
    return UpperExpectation(np.asarray(list(measures), dtype=float))
