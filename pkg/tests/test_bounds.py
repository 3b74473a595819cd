import math

import numpy as np
import pytest

from conftest import rand_op
from oracles import scalar_dissipation, scalar_phis
from mfcsim.bounds import (
    NegativeRadicand,
    _sqrt_tr,
    bound_report,
    capital_delta_d,
    delta_d,
    dissipation_at_target,
    innovation_square_at_target,
    phi1,
    phi2,
    target_drift_identity,
    worst_eigenstate,
)
from mfcsim.states import TargetState

SX = np.array([[0, 1], [1, 0]], dtype=complex)
R2 = math.sqrt(2)


# dissipation at target


def test_dissipation_examples(rng):
    assert dissipation_at_target(np.diag([1.0, 2.0, 3.0]), TargetState(2, 3)) == 0
    assert np.isclose(dissipation_at_target(SX, TargetState(1, 2)), -1)
    for _ in range(50):
        n = int(rng.integers(2, 6))
        L = rand_op(rng, n)
        d = int(rng.integers(1, n + 1))
        assert np.isclose(dissipation_at_target(L, TargetState(d, n)), scalar_dissipation(L.tolist(), d), atol=1e-12)


# delta_d


def test_delta_d_examples():
    assert delta_d(np.diag([1.0, -1.0]), TargetState(1, 2)) == 0
    expected = 1.0 / (2 * (2 * R2 + 2) ** 2)
    assert np.isclose(delta_d(SX, TargetState(1, 2)), expected, rtol=1e-14)
    assert np.isclose(delta_d(SX, TargetState(1, 2)), 0.021447, atol=5e-7)
    with pytest.raises(ValueError):
        delta_d(np.zeros((2, 2)), TargetState(1, 2))


def test_delta_d_scale_invariance(rng):
    for _ in range(20):
        n = int(rng.integers(2, 5))
        L = rand_op(rng, n)
        t = TargetState(int(rng.integers(1, n + 1)), n)
        for c in (0.5, 2.0, 10.0, -3.0):
            assert np.isclose(delta_d(c * L, t), delta_d(L, t), rtol=1e-10)
        # phi2 carries the signed term Tr((L + L*) rho_d), so only positive scalings apply
        for c in (0.5, 2.0, 10.0):
            assert np.isclose(capital_delta_d(c * L, t, 0.3), capital_delta_d(L, t, 0.3), rtol=1e-10)


# phi1, phi2


def test_phi_examples():
    t = TargetState(1, 2)
    assert phi1(np.zeros((2, 2)), t) == 0 and phi2(np.zeros((2, 2)), t) == 0
    assert np.isclose(phi1(np.eye(2), t), 2 + 2 * R2)
    assert np.isclose(phi2(np.eye(2), t), 32 + 22 * R2)
    assert np.isclose(phi1(SX, t), 2 + 2 * R2)
    assert np.isclose(phi2(SX, t), 32 + 10 * R2)
    assert np.allclose(scalar_phis(np.eye(2).tolist(), 1), (2 + 2 * R2, 32 + 22 * R2))


def test_phi_dual_route_and_nonnegative(rng):
    for _ in range(100):
        n = int(rng.integers(2, 5))
        L = rand_op(rng, n)
        d = int(rng.integers(1, n + 1))
        t = TargetState(d, n)
        s1, s2 = scalar_phis(L.tolist(), d)
        assert np.isclose(phi1(L, t), s1, rtol=1e-12)
        assert np.isclose(phi2(L, t), s2, rtol=1e-12)
        assert phi1(L, t) >= 0 and phi2(L, t) >= 0


def test_negative_radicand_detection():
    assert _sqrt_tr(np.diag([-5e-13, 0.0])) == 0.0
    with pytest.raises(NegativeRadicand):
        _sqrt_tr(np.diag([-1e-6, 0.0]))


# capital delta


def test_capital_delta_examples():
    t = TargetState(1, 2)
    assert capital_delta_d(SX, t, 1.0) == pytest.approx(0.0, abs=1e-30)
    assert capital_delta_d(np.diag([1.0, -1.0]), t, 0.4) == 0
    num_route = (2 * dissipation_at_target(SX, t) + 0.5 * innovation_square_at_target(SX, t)) ** 2
    assert np.isclose(num_route, 1.0)
    p1, p2 = scalar_phis(SX.tolist(), 1)
    expected = 1.0 / (2 * (2 * p1 + 0.5 * p2) ** 2)
    assert np.isclose(capital_delta_d(SX, t, 0.5), expected, rtol=1e-13)
    assert np.isclose(capital_delta_d(SX, t, 0.5), 4.668e-4, rtol=1e-3)
    assert np.isclose(capital_delta_d(SX, t, 0.5, as_printed=True), -expected, rtol=1e-13)


def test_capital_delta_at_zero_efficiency_is_delta():
    t = TargetState(1, 2)
    assert np.isclose(capital_delta_d(SX, t, 0.0), delta_d(SX, t), rtol=1e-14)


def test_capital_delta_errors():
    t = TargetState(1, 2)
    with pytest.raises(ValueError):
        capital_delta_d(SX, t, 1.2)
    with pytest.raises(ZeroDivisionError):
        capital_delta_d(np.zeros((2, 2)), t, 0.5)


def test_capital_delta_monotone_in_eta(rng):
    grid = np.linspace(0, 1, 21)
    for _ in range(30):
        n = int(rng.integers(2, 5))
        L = rand_op(rng, n)
        t = TargetState(int(rng.integers(1, n + 1)), n)
        vals = [capital_delta_d(L, t, e) for e in grid]
        assert np.all(np.diff(vals) <= 1e-15)
        assert abs(vals[-1]) <= 1e-20


def test_bounds_stay_below_one(rng):
    for _ in range(200):
        n = int(rng.integers(2, 6))
        L = rand_op(rng, n)
        t = TargetState(int(rng.integers(1, n + 1)), n)
        assert 0 <= delta_d(L, t) < 1
        assert 0 <= capital_delta_d(L, t, rng.uniform()) < 1


# identity residual


def test_target_drift_identity(rng):
    for n in (2, 3, 4, 5):
        for _ in range(250):
            L = rand_op(rng, n)
            t = TargetState(int(rng.integers(1, n + 1)), n)
            res = target_drift_identity(L, t, rng.uniform(), rng.uniform(0.1, 3))
            assert res <= 1e-12 * max(1.0, np.abs(L).max() ** 2)
    assert target_drift_identity(SX, TargetState(1, 2), 1.0, 1.0) <= 1e-15
    assert target_drift_identity(np.diag([1.0, 3.0]), TargetState(2, 2), 0.3, 2.0) == 0


def test_eta_one_both_sides_vanish(rng):
    L = rand_op(rng, 3)
    t = TargetState(2, 3)
    lhs = 2 * dissipation_at_target(L, t) + innovation_square_at_target(L, t)
    assert abs(lhs) <= 1e-12


# worst eigenstate and report


def test_worst_eigenstate_examples():
    h0 = np.diag([0.0, 1.0])
    d, rep = worst_eigenstate(np.array([[0, 1], [0, 0]]), h0, 0.5)
    assert d == 2 and not rep.commuting and rep.delta_d > 0
    d, rep = worst_eigenstate(np.diag([1.0, -1.0]), h0, 0.5)
    assert rep.commuting and rep.delta_d == 0 and rep.capital_delta_d == 0
    d, rep = worst_eigenstate(SX, h0, 0.5)
    assert d == 1


def test_bound_report_fields():
    rep = bound_report(SX, TargetState(1, 2), 0.5, 1.0, as_printed=True)
    assert rep.d == 1 and rep.eta == 0.5
    assert rep.capital_delta_d_as_printed < 0 < rep.capital_delta_d
    assert set(rep.to_dict()) >= {"delta_d", "phi1", "phi2", "drift_identity_residual"}
