import math

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcalc import payoff as pay
from gcalc.errors import ParameterError
from gcalc.gnormal import (
    GNormalQuery,
    abs_moment,
    check_chapman,
    check_scaling,
    check_symmetry,
    convex_concave_value,
    gaussian_value,
    hermite_value,
    moment,
    pg,
    pg_t,
)
from gcalc.pde import GParams
from oracles import gauss_value, implicit_gheat

SQ2PI = math.sqrt(2 * math.pi)

# E[B_1^3] by the implicit policy-iteration oracle (dx=1/200, 4000 steps)
X3 = {0.0: 0.63945, 0.25: 0.60268, 0.5: 0.49940, 1.0: 0.0}
GRID5 = (0.0, 0.25, 0.5, 0.75, 1.0)


def test_square_at_t2():
    assert pg(pay.power(2), 2.0, GParams(0.5)) == pytest.approx(2.0, abs=1e-2)
    assert pg(-pay.power(2), 2.0, GParams(0.5)) == pytest.approx(-0.5, abs=1e-2)


def test_call_convex():
    assert pg(pay.call(0.0), 1.0, GParams(0.25)) == pytest.approx(1 / SQ2PI, abs=5e-3)


def test_query_validation():
    with pytest.raises(ParameterError):
        GNormalQuery(pay.power(2), 0.0, GParams(0.5))
    assert pg_t(GNormalQuery(pay.power(2), 1.0, GParams(1.0))) == pytest.approx(1.0, abs=5e-3)


def test_gaussian_value_examples():
    assert gaussian_value(pay.power(2), 0.7) == pytest.approx(0.7, rel=1e-10)
    assert gaussian_value(pay.abs_power(1), 1.0) == pytest.approx(math.sqrt(2 / math.pi), rel=1e-10)
    assert gaussian_value(pay.power(4), 1.7) == pytest.approx(3 * 1.7**2, rel=1e-10)
    assert gaussian_value(pay.call(0.3), 0.0) == 0.0
    with pytest.raises(ParameterError):
        gaussian_value(pay.power(2), -1.0)


SMOOTH = sorted(k for k, v in pay.catalog().items() if not v.kinks)


@pytest.mark.parametrize("name", SMOOTH)
def test_gaussian_value_matches_independent_rule(name):
    phi = pay.catalog()[name]
    assert gaussian_value(phi, 1.3) == pytest.approx(gauss_value(phi, 1.3), abs=1e-9)
    assert hermite_value(phi, 1.3) == pytest.approx(gauss_value(phi, 1.3), abs=1e-9)


def test_convex_concave_examples():
    p = GParams(0.5)
    assert convex_concave_value(pay.call(0.0), "convex", 1.0, p) == pytest.approx(1 / SQ2PI, rel=1e-10)
    assert convex_concave_value(-pay.abs_power(1), "concave", 1.0, p) == pytest.approx(-0.5 * math.sqrt(2 / math.pi), rel=1e-10)
    assert convex_concave_value(-pay.power(2), "concave", 1.0, GParams(0.0)) == 0.0
    with pytest.raises(ParameterError):
        convex_concave_value(pay.call(0.0), "linear", 1.0, p)


def test_moment_examples():
    p = GParams(0.5)
    assert moment(4, "plus", 2.0, p) == pytest.approx(12.0, rel=1e-13)
    assert moment(6, "plus", 1.0, p) == pytest.approx(15.0, rel=1e-13)
    assert moment(8, "plus", 1.0, p) == pytest.approx(105.0, rel=1e-13)
    assert moment(1, "minus", 1.0, p) == pytest.approx(-0.5 * math.sqrt(2 / math.pi), rel=1e-13)
    assert moment(3, "plus", 1.0, p) == pytest.approx(2 * math.sqrt(2) / math.sqrt(math.pi), rel=1e-13)
    assert moment(5, "plus", 1.0, p) == pytest.approx(8 * math.sqrt(2) / math.sqrt(math.pi), rel=1e-13)
    with pytest.raises(ParameterError):
        moment(0, "plus", 1.0, p)
    with pytest.raises(ParameterError):
        moment(2, "both", 1.0, p)


@given(st.floats(1.0, 6.0), st.floats(0.01, 5.0))
def test_abs_moment_matches_quadrature(n, v):
    assert abs_moment(n, v) == pytest.approx(gaussian_value(pay.abs_power(n), v), rel=1e-8)


@pytest.mark.parametrize("s0", GRID5)
@pytest.mark.parametrize("n", [1, 2, 3, 4])
def test_abs_moments_numerically(n, s0):
    p = GParams(s0)
    m = moment(n, "plus", 1.0, p)
    assert abs(pg(pay.abs_power(n), 1.0, p) - m) <= 5e-3 * (1 + m)
    mm = moment(n, "minus", 1.0, p)
    assert abs(pg(-pay.abs_power(n), 1.0, p) - mm) <= 5e-3 * (1 + abs(mm))


@pytest.mark.parametrize("s0", GRID5)
@pytest.mark.parametrize("name", sorted(pay.catalog()))
def test_domination_and_shape_reduction(name, s0):
    phi, p = pay.catalog()[name], GParams(s0)
    v = pg(phi, 1.0, p)
    assert v >= gaussian_value(phi, 1.0) - 5e-3
    if phi.shape == "convex":
        assert abs(v - gaussian_value(phi, 1.0)) <= 5e-3
    elif phi.shape == "concave":
        assert abs(v - gaussian_value(phi, p.s0sq)) <= 5e-3


@pytest.mark.parametrize("s0", sorted(X3))
def test_odd_moment_regression(s0):
    p = GParams(s0)
    up, down = pg(pay.power(3), 1.0, p), pg(-pay.power(3), 1.0, p)
    assert up == pytest.approx(X3[s0], abs=5e-3)
    assert abs(up - down) <= 1e-2
    if s0 < 1:
        assert up > 0


@pytest.mark.parametrize("s0", [0.0, 0.5])
def test_fifth_moment_symmetry(s0):
    p = GParams(s0)
    assert abs(pg(pay.power(5), 1.0, p) - pg(-pay.power(5), 1.0, p)) <= 1e-2


@pytest.mark.slow
@pytest.mark.parametrize("s0", [0.25, 0.5])
def test_odd_moment_constants_reproduce(s0):
    assert implicit_gheat(lambda x: x**3, 1.0, s0, dx=1 / 100, steps=1000) == pytest.approx(X3[s0], abs=5e-4)


# --- semigroup, symmetry, scaling ------------------------------------------


def test_chapman_examples():
    assert check_chapman(pay.power(2), 0.5, 0.5, GParams(0.5)) <= 1e-2
    assert check_chapman(pay.sin(1.0), 0.3, 0.7, GParams(1.0)) <= 1e-2
    assert check_chapman(pay.call(0.5), 0.25, 0.75, GParams(0.5)) <= 1e-2
    with pytest.raises(ParameterError):
        check_chapman(pay.power(2), 0.0, 1.0, GParams(0.5))


@settings(max_examples=8)
@given(st.floats(0.1, 0.9), st.sampled_from(GRID5), st.sampled_from(["x^2", "|x|", "call:0.5", "sin", "mix"]))
def test_chapman_property(s, s0, name):
    assert check_chapman(pay.catalog()[name], s, 1.0 - s, GParams(s0)) <= 1e-2


def test_symmetry_examples():
    p = GParams(0.5)
    assert check_symmetry(pay.sin(1.0), 1.0, p) <= 1e-10
    assert check_symmetry(pay.power(2), 1.0, p) == 0.0
    call_vs_put = abs(pg(pay.call(0.0), 1.0, p) - pg(pay.put(0.0), 1.0, p))
    assert call_vs_put <= 1e-2


def test_scaling_examples():
    assert check_scaling(pay.power(2), 1.0, GParams(0.5)) == 0.0
    assert check_scaling(pay.power(2), 4.0, GParams(0.5)) <= 2e-2
    assert check_scaling(pay.abs_power(1), 0.25, GParams(0.5)) <= 1e-2
    with pytest.raises(ParameterError):
        check_scaling(pay.power(2), -1.0, GParams(0.5))


@settings(max_examples=10)
@given(st.floats(0.2, 3.0), st.sampled_from(GRID5))
def test_scaling_property(t, s0):
    assert check_scaling(pay.sin(1.0), t, GParams(s0)) <= 1e-2
