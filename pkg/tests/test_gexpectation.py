import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcalc import gexpectation as gx
from gcalc import payoff as pay
from gcalc.errors import ConfigurationError, ParameterError, SchemaError, ShapeError
from gcalc.gnormal import gaussian_value, pg
from gcalc.pde import GParams, Resolution
from conftest import SIGMA0_GRID

HALF = (0.0, 0.5, 1.0)
RES32 = Resolution(1 / 32)


def b_rv(phi, times=HALF):
    return gx.simple_rv(times, phi)


def frozen_then_square(xi):
    """``xi(B_0.5) * (B_1 - B_0.5)^2`` on a 2-coordinate accumulator."""
    steps = ((gx.add_increment(0),), (gx.add_square(1),))
    term = gx.Terminal(((1.0, ((0, xi), (1, pay.identity()))),))
    return gx.CylinderRV(gx.Partition(HALF), gx.AccumulatorSpec(2, (0.0, 0.0), steps, term))


def b_sq_minus():
    """``B_1^2 - B_0.5^2`` split as X = (B_1 - B_0.5)^2 and Y = 2 B_0.5 (B_1 - B_0.5)."""
    X = gx.CylinderRV(
        gx.Partition(HALF),
        gx.AccumulatorSpec(1, (0.0,), ((gx.hold(),), (gx.add_square(0),)), gx.Terminal.of(pay.identity())),
    )
    Y = gx.CylinderRV(
        gx.Partition(HALF),
        gx.AccumulatorSpec(2, (0.0, 0.0), ((gx.add_increment(0),), (gx.add_increment(0), gx.add_product(1, 0, coef=2.0))), gx.Terminal.of(pay.identity(), 1)),
    )
    return X, Y


def b_sq_minus_joint():
    """``B_1^2 - B_0.5^2`` on one 2-coordinate accumulator."""
    step1 = (gx.add_increment(0), gx.add_square(1), gx.add_product(1, 0, coef=2.0))
    acc = gx.AccumulatorSpec(2, (0.0, 0.0), ((gx.add_increment(0),), step1), gx.Terminal.of(pay.identity(), 1))
    return gx.CylinderRV(gx.Partition(HALF), acc)


# --- expectation examples --------------------------------------------------


@pytest.mark.parametrize("s0", SIGMA0_GRID)
def test_square_of_b1(s0):
    X = b_rv(pay.power(2), (0.0, 1.0))
    assert gx.expect(X, GParams(s0)) == pytest.approx(1.0, abs=5e-3)
    assert gx.expect(-X, GParams(s0)) == pytest.approx(-(s0**2), abs=5e-3)


@pytest.mark.parametrize("s0", SIGMA0_GRID)
def test_single_level_equals_pde(s0):
    X = b_rv(pay.sin(1.0), (0.0, 1.0))
    assert gx.expect(X, GParams(s0)) == pytest.approx(pg(pay.sin(1.0), 1.0, GParams(s0), resolution=RES32), abs=1e-12)


@pytest.mark.parametrize("s0", SIGMA0_GRID)
def test_qv_approximant_two_steps(s0):
    X = gx.simple_rv(HALF, pay.identity(), gx.add_square())
    assert gx.expect(X, GParams(s0)) == pytest.approx(1.0, abs=1e-2)
    assert gx.expect(-X, GParams(s0)) == pytest.approx(-(s0**2), abs=1e-2)


@pytest.mark.parametrize("s0", SIGMA0_GRID)
def test_frozen_multiplier_of_squared_increment(s0):
    # convex in B_0.5 after the inner step: closed form with variance 0.5
    X = frozen_then_square(pay.identity())
    m = math.sqrt(0.5) / math.sqrt(2 * math.pi)
    expected = 0.5 * m - s0**2 * 0.5 * m
    assert gx.expect(X, GParams(s0)) == pytest.approx(expected, abs=2e-2)


@pytest.mark.parametrize("s0", [0.0, 0.5])
def test_frozen_multiplier_general_xi(s0):
    p = GParams(s0)
    X = frozen_then_square(pay.sin(1.0))
    xs = np.linspace(-8, 8, 4097)
    s = np.sin(xs)
    folded = pay.table(xs, 0.5 * (np.maximum(s, 0) - p.s0sq * np.maximum(-s, 0)))
    assert gx.expect(X, p) == pytest.approx(pg(folded, 0.5, p, resolution=RES32), abs=2e-2)


# --- conditional -----------------------------------------------------------


def test_conditional_terminal_and_base():
    X = b_rv(pay.call(0.2))
    p = GParams(0.5)
    tables = gx.solve_dp(X, p)
    top = tables[X.m]
    assert np.array_equal(top.values.reshape(-1), pay.call(0.2)(top.points[:, 0]))
    assert tables[0].values.size == 1
    assert float(tables[0].values.reshape(-1)[0]) == gx.expect(X, p)


@pytest.mark.parametrize("s0", SIGMA0_GRID)
def test_conditional_example_constant_in_state(s0):
    v = gx.conditional(b_sq_minus_joint(), 1, GParams(s0))
    core = v.core_mask()
    vals = v.values[core]
    assert np.max(np.abs(vals - 0.5)) <= 1e-2


def test_conditional_level_range():
    with pytest.raises(ParameterError):
        gx.conditional(b_rv(pay.power(2)), 5, GParams(0.5))


# --- tower -----------------------------------------------------------------


def test_tower_trivial_and_fourth_power():
    X = b_rv(pay.power(4))
    p = GParams(0.5)
    assert gx.check_tower(X, 1, 1, p) == 0.0
    assert gx.check_tower(X, 0, 1, p) <= 2e-2
    with pytest.raises(ParameterError):
        gx.check_tower(X, 2, 1, p)


def test_tower_classical_case():
    X = b_rv(pay.power(4))
    p = GParams(1.0)
    assert gx.check_tower(X, 0, 1, p) <= 1e-2
    assert gx.expect(X, p) == pytest.approx(gx.classical_expect(X), abs=1e-2)
    assert gx.classical_expect(X) == pytest.approx(3.0, abs=1e-10)


# --- special additivity ----------------------------------------------------


@pytest.mark.parametrize("s0", SIGMA0_GRID)
def test_additivity_with_mean_zero_increment(s0):
    p = GParams(s0)
    X = gx.CylinderRV(gx.Partition(HALF), gx.AccumulatorSpec(1, (0.0,), ((gx.add_increment(),), (gx.hold(),)), gx.Terminal.of(pay.power(2))))
    Y = gx.CylinderRV(gx.Partition(HALF), gx.AccumulatorSpec(1, (0.0,), ((gx.hold(),), (gx.add_increment(),)), gx.Terminal.of(pay.identity())))
    assert abs(gx.expect(Y, p)) <= 2e-2
    assert gx.check_special_additivity(X, Y, p) <= 2e-2
    zero = Y.with_terminal(gx.Terminal.of(pay.const(0.0)))
    assert gx.check_special_additivity(X, zero, p) == pytest.approx(0.0, abs=1e-12)


@pytest.mark.parametrize("s0", SIGMA0_GRID)
def test_additivity_recovers_square_difference(s0):
    X, Y = b_sq_minus()
    p = GParams(s0)
    assert gx.expect(X.plus(Y), p) == pytest.approx(0.5, abs=2e-2)
    assert gx.expect(b_sq_minus_joint(), p) == pytest.approx(0.5, abs=2e-2)


# --- properties --------------------------------------------------------------


@pytest.mark.parametrize("s0", [0.0, 0.5])
def test_property_sweep(s0):
    rep = gx.check_properties(gx.standard_samples(), GParams(s0))
    assert rep.passed, rep.to_csv()


@pytest.mark.parametrize("s0", SIGMA0_GRID)
def test_x_and_minus_x(s0):
    X = b_rv(pay.sin(1.0))
    p = GParams(s0)
    assert gx.expect(X, p) + gx.expect(-X, p) >= -2e-2


@settings(max_examples=10)
@given(st.integers(0, 3), st.floats(-1, 1), st.floats(0.2, 2.0))
def test_classical_reduction_random_rv(k, K, w):
    phi = [pay.call(K), pay.put(K), pay.sin(w), pay.abs_power(1)][k]
    X = gx.simple_rv(HALF, phi, gx.add_increment(coef=w))
    assert gx.expect(X, GParams(1.0)) == pytest.approx(gx.classical_expect(X), abs=1e-2)


@settings(max_examples=10)
@given(st.sampled_from(SIGMA0_GRID), st.floats(-1, 1))
def test_domination(s0, K):
    X = gx.simple_rv(HALF, pay.call(K), gx.add_square())
    assert gx.expect(X, GParams(s0)) >= gx.classical_expect(X) - 2e-2


@given(st.lists(st.floats(-3, 3), min_size=2, max_size=2))
def test_sample_matches_direct_formula(incs):
    X, Y = b_sq_minus()
    b1, b2 = incs
    expected = (b1 + b2) ** 2 - b1**2
    assert X.plus(Y).sample(np.array(incs)) == pytest.approx(expected, abs=1e-12)


# --- schema ------------------------------------------------------------------


SPEC_JSON = {"times": [0, 0.5, 1], "acc": {"dim": 1, "init": [0], "updates": [{"kind": "add_square"}], "terminal": {"kind": "power", "n": 1}}}


def test_spec_json_example():
    X = gx.rv_from_json(json.dumps(SPEC_JSON))
    assert X.m == 2
    assert gx.expect(X, GParams(0.5)) == pytest.approx(1.0, abs=1e-2)


def test_json_round_trip():
    X = b_sq_minus_joint()
    again = gx.rv_from_dict(json.loads(json.dumps(gx.rv_to_dict(X))))
    inc = np.random.default_rng(0).normal(size=(20, 2))
    assert np.array_equal(again.sample(inc), X.sample(inc))


@pytest.mark.parametrize(
    "mutate",
    [
        lambda d: d.pop("times"),
        lambda d: d["acc"].update(updates=[{"kind": "warp"}]),
        lambda d: d["acc"].update(terminal={"kind": "nope"}),
        lambda d: d["acc"].update(terminal=[1]),
    ],
)
def test_schema_errors(mutate):
    d = json.loads(json.dumps(SPEC_JSON))
    mutate(d)
    with pytest.raises(SchemaError):
        gx.rv_from_dict(d)
    with pytest.raises(SchemaError):
        gx.rv_from_json("{not json")


def test_shape_and_configuration_errors():
    with pytest.raises(ConfigurationError):
        gx.AccumulatorSpec(5, (0.0,) * 5, ((gx.hold(),),), gx.Terminal.of(pay.identity()))
    with pytest.raises(ShapeError):
        gx.AccumulatorSpec(1, (0.0,), ((gx.add_increment(2),),), gx.Terminal.of(pay.identity()))
    with pytest.raises(ShapeError):
        gx.CylinderRV(gx.Partition((0, 0.3, 0.6, 1)), gx.AccumulatorSpec(1, (0.0,), ((gx.hold(),), (gx.hold(),)), gx.Terminal.of(pay.identity())))
    with pytest.raises(ConfigurationError):
        gx.raw_cylinder((0, 0.25, 0.5, 0.75, 1.0), lambda *a: a[0])
    with pytest.raises(ParameterError):
        gx.Partition((0.0, 0.5, 0.5))
    with pytest.raises(ParameterError):
        gx.Partition((0.1, 0.5))


def test_explicit_bounds_escape_raises():
    res = gx.DPResolution(bounds=(((-0.1, 0.1),),) * 3)
    with pytest.raises(ConfigurationError):
        gx.expect(b_rv(pay.power(2)), GParams(0.5), res)


def test_raw_cylinder_matches_accumulator():
    p = GParams(0.5)
    raw = gx.raw_cylinder(HALF, lambda x1, x2: (x1 + x2) ** 2)
    assert gx.expect(raw, p) == pytest.approx(gx.expect(b_rv(pay.power(2)), p), abs=1e-2)


def test_seeded_determinism():
    X = gx.simple_rv((0, 0.25, 0.5, 0.75, 1.0), pay.abs_power(1), gx.add_square())
    a = gx.expect(X, GParams(0.25), gx.DPResolution(seed=3))
    b = gx.expect(X, GParams(0.25), gx.DPResolution(seed=3))
    assert a == b
