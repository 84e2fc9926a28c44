import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from dmra.errors import ContractError, SolverError
from dmra.model import LinearCost, QuadraticCost, SystemParams, mining_rate
from conftest import random_slot_problem
from dmra.solver import (
    SlotProblem,
    expand_scalar,
    oracle_grid_search,
    slot_gain,
    solve_miner_bisection,
    solve_miner_closed_form,
    solve_slot,
)

# mpmath.findroot(0.4*u**1.5 - 30) at 40 digits
QUAD_ROOT = 17.784466522450313


def linear_problem(gain, k=20.0, m=0.45, eps=0.5, u_max=200.0):
    return SlotProblem(gain=gain, k=k, u_max=u_max, cost_model=LinearCost(m), epsilon=eps)


@pytest.mark.parametrize("q, expected", [(0, 60.0), (100, 360.0), (1000, 3060.0)])
def test_slot_gain(q, expected):
    assert slot_gain(20.0, 3.0, q, 3) == expected


def test_slot_gain_requires_positive_k():
    with pytest.raises(ContractError):
        slot_gain(0.0, 3.0, 0, 3)


class TestClosedForm:
    def test_interior(self):
        p = linear_problem(60.0)
        u = solve_miner_closed_form(p)
        assert u == pytest.approx(100.0 / 9.0, rel=1e-12)
        assert abs(u - oracle_grid_search(p, 1e-4)) <= 1e-4

    def test_boundary(self):
        p = linear_problem(360.0)
        assert solve_miner_closed_form(p) == 200.0
        assert oracle_grid_search(p, 1e-3) == 200.0

    def test_empty_box(self):
        assert solve_miner_closed_form(linear_problem(60.0, u_max=0.0)) == 0.0

    def test_free_resources(self):
        assert solve_miner_closed_form(linear_problem(60.0, m=0.0)) == 200.0

    def test_requires_linear(self):
        p = SlotProblem(60.0, 20.0, 200.0, QuadraticCost(0.01), 0.5)
        with pytest.raises(ContractError):
            solve_miner_closed_form(p)


class TestBisection:
    def test_agrees_with_closed_form(self):
        p = linear_problem(60.0)
        assert solve_miner_bisection(p, 1e-9) == pytest.approx(100.0 / 9.0, abs=1e-8)

    def test_quadratic(self):
        p = SlotProblem(gain=60.0, k=20.0, u_max=200.0, cost_model=QuadraticCost(0.01),
                        epsilon=0.5)
        assert solve_miner_bisection(p, 1e-10) == pytest.approx(QUAD_ROOT, abs=1e-8)
        assert abs(oracle_grid_search(p, 1e-3) - QUAD_ROOT) <= 1e-3

    def test_zero_gain(self):
        p = SlotProblem(gain=0.0, k=20.0, u_max=200.0, cost_model=QuadraticCost(0.01, 0.1),
                        epsilon=0.5)
        assert solve_miner_bisection(p) == 0.0

    def test_nonconvex_detected(self):
        class Bumpy:
            def value(self, u):
                return np.sin(u)

            def derivative(self, u):
                return math.cos(u) * 50

        p = SlotProblem(gain=5.0, k=1.0, u_max=100.0, cost_model=Bumpy(), epsilon=0.5)
        with pytest.raises(SolverError):
            solve_miner_bisection(p, 1e-9)

    def test_lower_bound_respected(self):
        p = SlotProblem(gain=60.0, k=20.0, u_max=200.0, u_min=50.0,
                        cost_model=LinearCost(0.45), epsilon=0.5)
        assert solve_miner_bisection(p) == 50.0
        assert solve_miner_closed_form(p) == 50.0


class TestOracle:
    def test_zero_gain(self):
        assert oracle_grid_search(linear_problem(0.0), 1e-3) == 0.0

    def test_argmin_property(self):
        rng = np.random.default_rng(4)
        p = linear_problem(200.0, k=7.0, m=0.3, eps=0.6, u_max=150.0)
        u = oracle_grid_search(p, 1e-3)
        pts = rng.uniform(0, p.u_max, 1000)
        assert np.all(p.objective(u) <= p.objective(pts))


class TestExpand:
    def test_full(self):
        p = SystemParams()
        np.testing.assert_array_equal(expand_scalar(183.0, p), [60.0, 3.0])

    def test_zero(self):
        np.testing.assert_array_equal(expand_scalar(0.0, SystemParams()), [0.0, 0.0])

    def test_half(self):
        p = SystemParams()
        theta = expand_scalar(91.5, p)
        np.testing.assert_allclose(theta, [30.0, 1.5], rtol=1e-15)
        assert float(theta @ p.w) == pytest.approx(91.5, rel=1e-15)

    def test_out_of_range(self):
        with pytest.raises(ContractError):
            expand_scalar(200.0, SystemParams())

    @given(st.floats(0.0, 183.0, allow_subnormal=False))
    def test_round_trip(self, u):
        p = SystemParams()
        assert mining_rate(expand_scalar(u, p), p) == pytest.approx(u**0.5, rel=1e-12, abs=1e-300)

    def test_with_floor(self):
        p = SystemParams(theta_min=(40.0, 0.0))
        theta = expand_scalar(150.0, p)
        assert float(theta @ p.w) == pytest.approx(150.0, rel=1e-14)
        assert np.all(theta >= [40.0, 0.0]) and np.all(theta <= [60.0, 3.0])


class TestSolveSlot:
    def test_defaults(self):
        sol = solve_slot(20.0, 0, SystemParams())
        np.testing.assert_allclose(sol.u_star, 100.0 / 9.0, rtol=1e-12)
        assert sol.objective == pytest.approx(-400.0, rel=1e-12)
        assert sol.theta_star.shape == (4, 2)
        np.testing.assert_allclose(sol.theta_star @ SystemParams().w, sol.u_star, rtol=1e-9)

    def test_saturation(self):
        p = SystemParams()
        sol = solve_slot(20.0, 10_000, p)
        np.testing.assert_array_equal(sol.theta_star, np.tile([60.0, 3.0], (4, 1)))

    def test_large_k_limit(self):
        p = SystemParams()
        limit = (p.reward_total * p.epsilon / p.cost_slope) ** (1 / (1 - p.epsilon))
        assert solve_slot(1e6, 0, p).u_star[0] == pytest.approx(limit, rel=1e-12)

    def test_quadratic_model_uses_bisection(self):
        p = SystemParams()
        sol = solve_slot(20.0, 0, p, cost_model=QuadraticCost(0.01))
        assert sol.u_star[0] == pytest.approx(QUAD_ROOT, abs=1e-8)

    def test_optimality_certificate(self):
        rng = np.random.default_rng(8)
        p = SystemParams()
        for _ in range(50):
            k = rng.uniform(1, 100)
            q = int(rng.integers(0, 500))
            sol = solve_slot(k, q, p)
            g = slot_gain(k, p.reward_total, q, p.block_size)
            def obj(us):
                return k * np.sum(p.cost_slope * us) - g * np.sum(us**p.epsilon)
            best = obj(sol.u_star)
            assert best == pytest.approx(sol.objective, rel=1e-9, abs=1e-9)
            for _ in range(100):
                us = rng.uniform(0, p.u_max, p.n_miners)
                assert best <= obj(us) + 1e-9


def test_monotone_in_backlog():
    p = SystemParams()
    us = [solve_slot(20.0, q, p).u_star[0] for q in range(0, 10_001, 10)]
    assert all(b >= a for a, b in zip(us, us[1:]))


def test_monotone_in_k_at_zero_backlog():
    # with Q = 0 the gain is k*(R+M), so u* is the same for every k
    p = SystemParams()
    us = [solve_slot(k, 0, p).u_star[0] for k in np.geomspace(0.1, 1e6, 50)]
    assert all(b <= a + 1e-12 for a, b in zip(us, us[1:]))


def test_closed_form_vs_oracle_randomized():
    rng = np.random.default_rng(2024)
    for _ in range(200):
        p = random_slot_problem(rng)
        cf = solve_miner_closed_form(p)
        assert abs(cf - oracle_grid_search(p, 1e-3)) <= 1e-3 * (1 + p.u_max)
        assert abs(cf - solve_miner_bisection(p, 1e-9)) <= 1e-8
