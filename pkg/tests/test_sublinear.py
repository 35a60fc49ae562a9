import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from gcalc.errors import ParameterError, ShapeError
from gcalc.sublinear import (
    DiscreteRV,
    UpperExpectation,
    check_axioms,
    check_inequalities,
    from_measures,
    linear,
    lp_norm,
    random_expectation,
    run_trials,
    upper_expect,
)
from oracles import enumerate_upper

values = st.floats(-50, 50, allow_nan=False)


@st.composite
def space(draw, n_min=2, n_max=6):
    n = draw(st.integers(n_min, n_max))
    k = draw(st.integers(1, 4))
    raw = draw(arrays(float, (k, n), elements=st.floats(0.01, 1.0)))
    measures = raw / raw.sum(axis=1, keepdims=True)
    x = draw(arrays(float, n, elements=values))
    y = draw(arrays(float, n, elements=values))
    return UpperExpectation(measures), DiscreteRV(x), DiscreteRV(y)


# --- examples -------------------------------------------------------------


def test_constant_is_preserved():
    E = from_measures([[0.2, 0.3, 0.5], [1.0, 0.0, 0.0]])
    assert E(DiscreteRV([1, 1, 1])) == 1.0


def test_max_of_point_masses():
    E = from_measures([[1, 0], [0, 1]])
    assert E(DiscreteRV([0, 2])) == 2.0


def test_two_measures_hand_enumeration():
    E = from_measures([[0.5, 0.5], [0.75, 0.25]])
    # (-1+3)/2 = 1 and -0.75+0.75 = 0
    assert E(DiscreteRV([-1, 3])) == pytest.approx(1.0, abs=1e-15)


def test_linear_case_is_additive():
    E = linear([0.1, 0.6, 0.3])
    X, Y = DiscreteRV([1.0, -2.0, 4.0]), DiscreteRV([3.0, 0.5, -1.0])
    assert E(X + Y) == pytest.approx(E(X) + E(Y), abs=1e-14)
    assert check_axioms(E, trials=50).passed


def test_strict_subadditivity():
    E = from_measures([[1, 0], [0, 1]])
    X, Y = DiscreteRV([1, 0]), DiscreteRV([0, 1])
    assert E(X + Y) == 1.0
    assert E(X) + E(Y) == 2.0


def test_zero_scaling():
    E = from_measures([[0.4, 0.6]])
    assert E(0.0 * DiscreteRV([5.0, -3.0])) == 0.0


def test_lp_norm_examples():
    E = from_measures([[0.5, 0.5], [1.0, 0.0]])
    assert lp_norm(DiscreteRV([1, 2]), E, 2) == pytest.approx(math.sqrt(2.5), abs=1e-14)
    assert lp_norm(DiscreteRV([-3, -3]), E, 4.5) == pytest.approx(3.0, abs=1e-13)
    X = DiscreteRV([-1.5, 2.0])
    assert lp_norm(X, E, 1) == pytest.approx(E(abs(X)), abs=1e-15)


def test_inequalities_trivial_cases():
    E = from_measures([[0.2, 0.8], [0.6, 0.4]])
    X = DiscreteRV([1.0, -2.0])
    assert lp_norm(X + 0.0, E, 3) == pytest.approx(lp_norm(X, E, 3))
    assert E(abs(X * X)) == pytest.approx(lp_norm(X, E, 2) ** 2, rel=1e-14)


# --- errors ---------------------------------------------------------------


def test_shape_mismatch_raises():
    E = from_measures([[0.5, 0.5]])
    with pytest.raises(ShapeError):
        E(DiscreteRV([1, 2, 3]))
    with pytest.raises(ShapeError):
        DiscreteRV([1, 2]) + DiscreteRV([1, 2, 3])


@pytest.mark.parametrize("m", [[[0.5, 0.6]], [[-0.1, 1.1]]])
def test_invalid_measures(m):
    with pytest.raises(ParameterError):
        UpperExpectation(m)


def test_invalid_p_and_values():
    with pytest.raises(ParameterError):
        lp_norm(DiscreteRV([1.0]), linear([1.0]), 0.5)
    with pytest.raises(ParameterError):
        DiscreteRV([np.nan, 1.0])


# --- properties -----------------------------------------------------------


@given(space())
def test_matches_enumeration(case):
    E, X, _ = case
    assert upper_expect(X, E) == pytest.approx(enumerate_upper(X.values, E.measures), abs=1e-12)


@given(space(), st.floats(-20, 20), st.floats(0, 20))
def test_axioms_hold(case, c, lam):
    E, X, Y = case
    Z = DiscreteRV(np.maximum(X.values, Y.values))
    assert E(Z) >= E(Y) - 1e-10
    assert E(X + Y) <= E(X) + E(Y) + 1e-10
    assert E(lam * X) == pytest.approx(lam * E(X), abs=1e-10 * max(1, lam) * 50)
    assert E(X + c) == pytest.approx(E(X) + c, abs=1e-10)
    assert E(DiscreteRV(np.full(E.size, c))) == pytest.approx(c, abs=1e-12)


@given(space(), st.floats(1.01, 6.0), st.floats(0.2, 6.0))
def test_inequalities_hold(case, p, r):
    E, X, Y = case
    q = p / (p - 1)
    cr = max(1.0, 2 ** (r - 1))
    rhs = cr * (E(abs(X) ** r) + E(abs(Y) ** r))
    assert E(abs(X + Y) ** r) <= rhs + 1e-10 * max(1.0, rhs)
    rhs = lp_norm(X, E, p) * lp_norm(Y, E, q)
    assert E(abs(X * Y)) <= rhs + 1e-10 * max(1.0, rhs)
    rhs = lp_norm(X, E, p) + lp_norm(Y, E, p)
    assert lp_norm(X + Y, E, p) <= rhs + 1e-10 * max(1.0, rhs)
    assert lp_norm(X, E, p) <= lp_norm(X, E, p + 1) + 1e-10 * max(1.0, lp_norm(X, E, p + 1))


@given(st.integers(0, 10_000))
def test_checkers_find_no_violation(seed):
    E = random_expectation(np.random.default_rng(seed))
    assert check_axioms(E, trials=5, seed=seed).passed
    assert check_inequalities(E, trials=5, seed=seed).passed


def test_run_trials_report():
    rep = run_trials(200, seed=3)
    assert rep.passed
    names = {c.axiom for c in rep.checks}
    assert {"monotonicity", "subadditivity", "holder", "minkowski", "c_r"} <= names
    text = rep.to_csv()
    assert text.splitlines()[0] == "check_id,axiom,worst_violation,tolerance,pass,witness"


def test_checker_detects_a_broken_expectation():
    class Broken(UpperExpectation):
        def __call__(self, X):
            v = X.values if isinstance(X, DiscreteRV) else np.full(self.size, float(X))
            return float(np.min(self.measures @ v))  # superadditive, not sub

    E = Broken(np.array([[1.0, 0.0], [0.0, 1.0]]))
    assert not check_axioms(E, trials=50).passed
