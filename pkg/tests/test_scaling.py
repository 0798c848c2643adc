import math

import pytest

from nearcrit import kernels as K
from nearcrit import oracle as O
from nearcrit.connectivity import CrossingQuery
from nearcrit.lattice import AnnulusRegion, LatticeSpec, build_lattice
from nearcrit.sampling import ProbabilityField
from nearcrit.scaling import (INFINITE, EstimatorResult, arm_estimates, box_lattice, characteristic_length,
                              check_charlen_sandwich, check_five_arm_bound, check_length_growth,
                              check_power_bound, check_quasi_multiplicativity, check_rsw_annulus,
                              crossing_probability, estimate_alpha4, fit_loglog, one_arm_envelope, p_for_middle,
                              rectangle_nesting_check, speed_factor, tile_constant, window_condition)


@pytest.fixture(scope="module")
def tri():
    return build_lattice(LatticeSpec.centered("triangular-site", 1.0, 34.0))


@pytest.fixture(scope="module")
def hex15():
    return build_lattice(LatticeSpec.centered("triangular-site", 1.0, 1.5))


def test_speed_factor_arithmetic():
    assert speed_factor(1.0, 1.0) == 1.0
    assert speed_factor(0.5, 0.1) == pytest.approx(2.5)
    with pytest.raises(ValueError):
        speed_factor(0.5, 0.0)


def test_window_condition():
    assert window_condition(0.5, 1.0, 0.01)
    assert not window_condition(0.5, 10.0, 0.06)


def test_underpowered_flag():
    e = EstimatorResult.from_counts(0, 100, 1, 0, "q")
    assert e.underpowered and e.estimate == 0
    assert not EstimatorResult.from_counts(3, 100, 1, 0).underpowered


def test_fit_recovers_exact_power_law():
    x = [8, 16, 32, 64]
    est = [3.0 * v**-1.25 for v in x]
    s, se, icpt = fit_loglog(x, est, [e * 0.01 for e in est])
    assert s == pytest.approx(-1.25, abs=1e-12)
    assert icpt == pytest.approx(math.log(3.0), abs=1e-12)
    with pytest.raises(ValueError, match="underpowered"):
        fit_loglog(x, [0.1, 0.0, 0.1, 0.1], [0.01] * 4)


def test_degenerate_annulus_is_one(tri):
    assert estimate_alpha4(tri, 8.0, 8.0, 10, 1).estimate == 1.0


@pytest.mark.parametrize("pattern,bit", [("one-arm-blue", K.EV_ONE_BLUE), ("four-alternating", K.EV_FOUR),
                                         ("five", K.EV_FIVE)])
def test_tiny_annulus_matches_oracle(hex15, pattern, bit):
    R = hex15.spacing
    exact = O.exact_probability(O.OracleQuery(hex15, ProbabilityField.critical(),
                                              O.Arm(AnnulusRegion((0.0, 0.0), 0.5, R), pattern)))
    est = list(arm_estimates(hex15, 0.5, (R,), 100_000, 3, 0, bit, center=(0.0, 0.0)).values())[0][0]
    assert abs(est.estimate - exact) <= 4 * math.sqrt(exact * (1 - exact) / est.replicates)


def test_crossing_square_near_half():
    lat, Q = box_lattice("triangular-site", 32)
    e = crossing_probability(lat, Q, ProbabilityField.critical(), 4000, 2)
    assert abs(e.estimate - 0.5) < 4 * e.std_error + 0.03


def test_charlen_critical_is_infinite():
    assert characteristic_length("triangular-site", 0.5, 0.2, 64, 100, 1).L == INFINITE


def test_charlen_small_p_is_one():
    lat, Q = box_lattice("triangular-site", 1)
    exact = O.exact_probability(O.OracleQuery(lat, ProbabilityField.uniform_p(0.05), O.Crossing(CrossingQuery(Q))))
    assert exact <= 0.4
    assert characteristic_length("triangular-site", 0.05, 0.4, 64, 1000, 1).L == 1


def test_charlen_nonincreasing_in_epsilon():
    Ls = [characteristic_length("triangular-site", 0.3, e, 128, 2000, 7).L for e in (0.05, 0.1, 0.2, 0.3, 0.4)]
    assert all(b <= a for a, b in zip(Ls, Ls[1:]))


def test_charlen_validation():
    with pytest.raises(ValueError):
        characteristic_length("triangular-site", 0.4, 0.6, 16, 10, 1)


def test_sandwich_vacuous_and_linear():
    r = check_charlen_sandwich("triangular-site", 0.5, 32, 0.07, (0.5, 2, 0.1, 10))
    assert r.status == "vacuous"
    p1 = p_for_middle(32, 0.07, 1.0)
    p2 = p_for_middle(32, 0.07, 2.0)
    m1 = abs(p1 - 0.5) * 32**2 * 0.07
    m2 = abs(p2 - 0.5) * 32**2 * 0.07
    assert m1 == pytest.approx(1.0) and m2 == pytest.approx(2 * m1)


def test_quasi_multiplicativity_small(tri):
    q = check_quasi_multiplicativity(tri, 4.0, 16.0, 20_000, 5)
    assert q.containment_ok
    assert 1.0 <= q.ratio + 4 * q.ratio_se and q.ratio - 4 * q.ratio_se <= 20.0


def test_power_bound_exponent_below_two(tri):
    pb = check_power_bound(tri, [(2.0, 32.0), (4.0, 32.0), (8.0, 32.0)], 20_000, 6)
    assert pb.below_two
    assert 0.5 < pb.exponent < 2.0


def test_rsw_symmetry_and_envelope(tri):
    rep = check_rsw_annulus(tri, 2.0, {"critical": ProbabilityField.critical()}, 50_000, 8)
    (_, _, b), (_, _, y) = rep.rows
    assert b.estimate <= 1 and y.estimate <= 1
    assert abs(b.estimate - y.estimate) <= 4 * math.hypot(b.std_error, y.std_error)
    rows = one_arm_envelope(tri, 2.0, (4.0, 8.0, 16.0), rep.c_hat, 5000, 9)
    assert all(r[-1] for r in rows)


def test_five_arm_bound_small(tri):
    rep = check_five_arm_bound(tri, 1.0, (4.0, 8.0, 16.0), 20_000, 10)
    assert all(rep.product_ok)
    assert all(e5.estimate <= e4.estimate for e5, e4 in zip(rep.alpha5, rep.alpha4))


def test_length_growth_trivial_and_monotone():
    rows1 = check_length_growth("triangular-site", 0.3, 1, [0.3], 128, 2000, 3)
    assert rows1[0].found and rows1[0].epsilon == 0.3
    eps = [check_length_growth("triangular-site", 0.3, k, [0.3], 128, 2000, 3)[0].epsilon for k in (1, 2, 4)]
    assert all(b <= a for a, b in zip(eps, eps[1:]))


def test_rectangle_nesting_never_violated():
    long_, square, viol = rectangle_nesting_check("triangular-site", 0.45, 4, 4, 8, 5000, 1)
    assert viol == 0 and square >= long_
    with pytest.raises(ValueError):
        rectangle_nesting_check("triangular-site", 0.45, 4, 2, 9, 10, 1)


def test_tile_constant_positive():
    c = tile_constant("triangular-site", (8.0, 16.0, 32.0))
    assert 0.1 < c < 1.0
