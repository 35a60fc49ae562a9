import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from gcalc import gpaths as gp
from gcalc import payoff as pay
from gcalc.errors import ParameterError, ShapeError
from gcalc.pde import GParams
from conftest import SIGMA0_GRID

P05 = GParams(0.5)


def path(policy, steps=64, seed=1, s0=0.5, driver="gaussian"):
    return gp.simulate_path(policy, 1.0, steps, GParams(s0), seed, driver)


# --- simulation ---------------------------------------------------------------


def test_constant_controls_give_exact_qv():
    one = path(gp.constant(1.0))
    assert one.qv[-1] == pytest.approx(1.0, abs=1e-14)
    low = path(gp.constant(0.5))
    assert low.qv[-1] == pytest.approx(0.25, abs=1e-14)


def test_bangbang_on_convex_value_is_all_ones():
    p = path(gp.bangbang(pay.power(2)), s0=0.25)
    assert np.all(p.sigma == 1.0)
    p = path(gp.bangbang(-pay.power(2)), s0=0.25)
    assert np.all(p.sigma == 0.25)


def test_rademacher_driver_has_deterministic_squares():
    p = path(gp.constant(1.0), driver="rademacher")
    assert np.allclose(p.dB**2, p.dt, rtol=0, atol=1e-15)


@given(st.integers(0, 2**31 - 1), st.sampled_from(SIGMA0_GRID), st.integers(1, 8))
def test_random_policy_in_band_and_held(seed, s0, hold):
    p = gp.simulate_path(gp.random_policy(hold), 1.0, 32, GParams(s0), seed)
    assert np.all(p.sigma >= s0) and np.all(p.sigma <= 1.0)
    blocks = p.sigma[: 32 - 32 % hold].reshape(-1, hold)
    assert np.all(blocks == blocks[:, :1])


def test_seed_streams_are_independent_of_batch():
    a = gp.simulate_paths(gp.random_policy(), 1.0, 16, P05, [3, 4, 5])
    b = gp.simulate_path(gp.random_policy(), 1.0, 16, P05, 4)
    assert np.array_equal(a[1].dB, b.dB)


def test_simulation_errors():
    with pytest.raises(ParameterError):
        path(gp.constant(0.1), s0=0.5)
    with pytest.raises(ParameterError):
        gp.simulate_path(gp.constant(1.0), 1.0, 0, P05, 1)
    with pytest.raises(ParameterError):
        gp.simulate_path(gp.constant(1.0), 1.0, 8, P05, 1, driver="levy")
    with pytest.raises(ParameterError):
        gp.parse_policy("wild", P05)
    with pytest.raises(ParameterError):
        gp.random_policy(0)


def test_parse_policy():
    assert gp.parse_policy("sigma0", P05).sigma == 0.5
    assert gp.parse_policy("one", P05).sigma == 1.0
    assert gp.parse_policy("constant:0.7", P05).sigma == 0.7
    assert gp.parse_policy("random", P05).kind == "random"
    assert gp.parse_policy("bangbang", P05).kind == "bangbang"


@given(st.integers(0, 1000), st.sampled_from([1, 2, 4, 8]))
def test_coarsen_preserves_b_and_qv(seed, factor):
    p = gp.simulate_path(gp.random_policy(), 1.0, 64, P05, seed)
    c = p.coarsen(factor)
    assert np.allclose(c.B, p.B[::factor], atol=1e-13)
    assert np.allclose(c.qv, p.qv[::factor], atol=1e-13)


def test_coarsen_and_grid_errors():
    p = path(gp.constant(1.0), steps=12)
    with pytest.raises(ShapeError):
        p.coarsen(5)
    with pytest.raises(ShapeError):
        p.index_of(0.3)
    with pytest.raises(ShapeError):
        gp.ScenarioPath(np.array([0.0, 1.0]), np.array([1.0, 1.0]), np.array([0.1]))


def test_paths_csv(tmp_path):
    paths = gp.simulate_paths(gp.constant(1.0), 1.0, 4, P05, [7, 8])
    out = tmp_path / "p.csv"
    gp.write_paths_csv(paths, out)
    lines = out.read_text().splitlines()
    assert lines[0] == "seed,t,B,qv,sigma"
    assert len(lines) == 1 + 2 * 5
    assert lines[5].endswith(",")


# --- pathwise integrals ---------------------------------------------------------


def test_integral_examples():
    p = path(gp.random_policy(), steps=16)
    one = gp.SimpleProcess.uniform(1.0, 16, pay.const(1.0))
    assert gp.bochner_integral(one, p) == pytest.approx(1.0, abs=1e-14)
    assert gp.ito_integral(one, p) == pytest.approx(p.B[-1], abs=1e-14)
    assert gp.qv_integral(one, p) == pytest.approx(p.qv[-1], abs=1e-14)


def test_bochner_unit_steps_arithmetic():
    q = gp.simulate_path(gp.constant(1.0), 4.0, 4, P05, 0)
    eta = gp.SimpleProcess.uniform(4.0, 4, [pay.const(float(j)) for j in range(4)])
    assert gp.bochner_integral(eta, q) == 0 + 1 + 2 + 3


@given(st.integers(0, 10_000))
def test_integrals_match_independent_sums(seed):
    p = gp.simulate_path(gp.random_policy(), 1.0, 32, P05, seed)
    B, qv, t = p.B, p.qv, p.times
    eta = gp.SimpleProcess.uniform(1.0, 32, pay.identity())
    left = sum(B[j] * (t[j + 1] - t[j]) for j in range(32))
    assert gp.bochner_integral(eta, p) == pytest.approx(left, abs=1e-12)
    sq = gp.SimpleProcess.uniform(1.0, 32, pay.power(2))
    assert gp.qv_integral(sq, p) == pytest.approx(sum(B[j] ** 2 * (qv[j + 1] - qv[j]) for j in range(32)), abs=1e-12)
    # discrete identity: 2 int B dB + sum (dB)^2 = B_T^2
    assert 2 * gp.ito_integral(eta, p) + np.sum(p.dB**2) == pytest.approx(B[-1] ** 2, abs=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 7))
def test_additivity_over_subintervals(seed, cut):
    p = gp.simulate_path(gp.random_policy(), 1.0, 8, P05, seed)
    coefs = [pay.sin(1.0 + j) for j in range(8)]
    whole = gp.SimpleProcess(gp.Partition.uniform(1.0, 8), tuple(coefs))
    first = gp.SimpleProcess(gp.Partition(tuple(k / 8 for k in range(cut + 1))), tuple(coefs[:cut]))
    left = gp.ito_integral(first, p)
    right = sum(coefs[j](p.B[j]) * p.dB[j] for j in range(cut, 8))
    assert gp.ito_integral(whole, p) == pytest.approx(left + right, abs=1e-12)


def test_constant_sigma_qv_integral():
    p = path(gp.constant(0.5), steps=16)
    eta = gp.SimpleProcess.uniform(1.0, 16, pay.sin(1.0))
    assert gp.qv_integral(eta, p) == pytest.approx(0.25 * gp.bochner_integral(eta, p), abs=1e-14)


def test_partition_past_horizon():
    p = path(gp.constant(1.0), steps=8)
    eta = gp.SimpleProcess.uniform(2.0, 4, pay.const(1.0))
    with pytest.raises(ShapeError):
        gp.ito_integral(eta, p)


# --- expectations -----------------------------------------------------------------


@pytest.mark.parametrize("s0", SIGMA0_GRID)
def test_unit_integrand(s0):
    f = gp.expect_ito_functionals(gp.SimpleProcess.uniform(1.0, 4, pay.const(1.0)), GParams(s0))
    assert abs(f["mean"]) <= 2e-2 and abs(f["mean_neg"]) <= 2e-2
    assert f["second_moment"] == pytest.approx(1.0, abs=2e-2)


def test_isometry_and_e2_for_b_integrand():
    f = gp.expect_ito_functionals(gp.SimpleProcess.uniform(1.0, 4, pay.identity()), P05)
    assert abs(f["second_moment"] - f["qv_second_form"]) <= 2e-2
    assert f["second_moment"] <= f["e2_bound"] + 2e-2


@pytest.mark.parametrize("s0", SIGMA0_GRID)
@pytest.mark.parametrize("K", [4, 8, 16])
def test_qv_moments(K, s0):
    m = gp.qv_moments(1.0, K, GParams(s0))
    assert m["m1"] == pytest.approx(1.0, abs=2e-2)
    assert m["m1_neg"] == pytest.approx(-(s0**2), abs=2e-2)
    assert abs(m["m2"] - 1.0) <= 3.0 / K + 2e-2
    if s0 == 1.0:
        # chi-square: E[A_K^2] = 1 + 2/K
        assert m["m2"] == pytest.approx(1.0 + 2.0 / K, abs=2e-2)


def test_qv_independence():
    assert gp.qv_independence_residual(0.5, 0.5, 4, P05) <= 2e-2
    assert gp.qv_independence_residual(0.5, 0.5, 4, P05, power=2) <= 2e-2


def test_integral_inequalities():
    eta = gp.SimpleProcess.uniform(1.0, 4, pay.sin(1.0))
    assert gp.dt_inequality_gap(eta, P05) <= 2e-2
    assert gp.qv_inequality_gap(eta, P05) <= 2e-2


def test_integral_translation():
    eta = gp.SimpleProcess.uniform(1.0, 4, pay.sin(1.0))
    assert gp.integral_translation_residual(pay.power(2), eta, 2, 0, P05) <= 2e-2
    assert gp.integral_translation_residual(pay.power(2), eta, 2, 1, P05) <= 2e-2
    with pytest.raises(ParameterError):
        gp.integral_translation_residual(pay.power(2), eta, 1, 2, P05)


def test_qv_approximant_validation():
    with pytest.raises(ParameterError):
        gp.qv_approximant(1.0, 0)
    with pytest.raises(ParameterError):
        gp.qv_approximant(1.0, 4, start=0.5)


# --- Ito formula ---------------------------------------------------------------------


@given(st.integers(0, 10_000), st.sampled_from(SIGMA0_GRID))
def test_square_residual_is_zero(seed, s0):
    p = gp.simulate_path(gp.random_policy(), 1.0, 64, GParams(s0), seed)
    assert gp.ito_formula_residual(gp.ItoProcessSpec(pay.power(2)), p) <= 1e-12


@given(st.integers(0, 10_000), st.floats(-2, 2), st.floats(-1, 1))
def test_affine_phi_residual_is_zero(seed, a, b):
    p = gp.simulate_path(gp.random_policy(), 1.0, 64, P05, seed)
    spec = gp.ItoProcessSpec(pay.affine(a, b), alpha=pay.sin(1.0), eta=pay.const(0.3), beta=pay.affine(0.2, 1.0), x0=0.4)
    for mode in ("squares", "path"):
        assert gp.ito_formula_residual(spec, p, mode) <= 1e-12


def test_ito_process_drift_only():
    p = path(gp.constant(1.0), steps=4)
    spec = gp.ItoProcessSpec(pay.identity(), alpha=pay.const(2.0), beta=pay.const(0.0), x0=1.0)
    assert gp.ito_process(spec, p)[-1] == pytest.approx(3.0, abs=1e-14)
    with pytest.raises(ParameterError):
        gp.ito_process(spec, p, "other")


@pytest.mark.parametrize("phi", [pay.power(3), pay.sin(1.0)], ids=["x3", "sin"])
@pytest.mark.parametrize("s0", [0.0, 1.0])
def test_self_convergence_rate(phi, s0):
    _, err, rate = gp.ito_self_convergence(gp.ItoProcessSpec(phi), GParams(s0))
    assert rate >= 0.45
    assert err[-1] < err[0]


def test_fit_rate_exact_power():
    h = [2.0**-k for k in range(3, 9)]
    assert gp.fit_rate(h, [3 * x**0.5 for x in h]) == pytest.approx(0.5, abs=1e-12)
