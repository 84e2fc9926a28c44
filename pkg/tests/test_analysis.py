import math

import numpy as np
import pytest

from dmra.analysis import (
    drift_bound_b,
    min_static_cost,
    optimal_static_cost,
    reference_constants,
    slater_delta,
    cost_bound,
    queue_bound,
    varying_k_gap_bound,
    verify_bounds,
    verify_varying_k,
)
from dmra.errors import ContractError, InfeasibleError
from dmra.model import SystemParams
from dmra.policies import DMRA, DMRAVaryingK, MaxMining, RandMining, decide
from dmra.simulator import Constant, run
from dmra.solver import expand_scalar

# (125/12)**2 and 4*(0.45*u - 3*sqrt(u)) at that point, evaluated with mpmath
U_BIND = 108.50694444444444
P_STAR = 70.3125
# 12*sqrt(183) - 125
DELTA_MAX = 37.33299110162419


def grid_static(params, mean_arrival, step=1e-4):
    """Independent oracle: dense grid over symmetric u, stability filter applied."""
    u = np.arange(0.0, params.u_max + step, step)
    u = u[u <= params.u_max]
    f = params.n_miners * (params.cost_slope * u + params.cost_intercept
                           - params.reward_total * u**params.epsilon)
    feasible = params.n_miners * u**params.epsilon * params.block_size >= mean_arrival
    return f[feasible].min(), f.min()


@pytest.mark.parametrize("a, s, v, expected", [(200, 50, 3, 20000.0), (0, 0, 3, 0.0), (10, 10, 3, 450.0)])
def test_drift_bound(a, s, v, expected):
    assert drift_bound_b(a, s, v) == expected


class TestStaticOptimum:
    def test_reference_binding(self, params):
        p_star, u = optimal_static_cost(params, 125.0)
        assert u == pytest.approx(U_BIND, rel=1e-12)
        assert p_star == pytest.approx(P_STAR, rel=1e-12)
        assert abs(p_star - grid_static(params, 125.0)[0]) <= 1e-3

    def test_no_arrivals(self, params):
        p_star, u = optimal_static_cost(params, 0.0)
        assert u == pytest.approx(100.0 / 9.0, rel=1e-12)
        assert p_star == pytest.approx(-20.0, rel=1e-12)

    def test_infeasible(self, params):
        with pytest.raises(InfeasibleError):
            optimal_static_cost(params, 12 * math.sqrt(183.0) + 1)

    def test_randomized_vs_grid(self):
        rng = np.random.default_rng(17)
        for _ in range(100):
            p = SystemParams(
                n_miners=int(rng.integers(1, 8)),
                epsilon=rng.uniform(0.2, 0.8),
                block_size=int(rng.integers(1, 5)),
                reward_fixed=rng.uniform(0.0, 5.0),
                cost_slope=rng.uniform(0.05, 1.0),
                cost_intercept=rng.uniform(0.0, 2.0),
                theta_max=(rng.uniform(10, 60), rng.uniform(1, 5)),
            )
            cap = p.n_miners * p.u_max**p.epsilon * p.block_size
            mean = rng.uniform(0, cap)
            p_star, _ = optimal_static_cost(p, mean)
            g_star, g_min = grid_static(p, mean)
            assert abs(p_star - g_star) <= 1e-3
            assert abs(min_static_cost(p) - g_min) <= 1e-3
            assert min_static_cost(p) <= p_star + 1e-12


class TestMinStatic:
    def test_defaults(self, params):
        assert min_static_cost(params) == pytest.approx(-20.0, rel=1e-12)
        assert abs(min_static_cost(params) - grid_static(params, 0.0)[1]) <= 1e-3

    def test_no_reward(self):
        assert min_static_cost(SystemParams(reward_fixed=0.0)) == 0.0

    def test_free_resources(self):
        p = SystemParams(cost_slope=0.0)
        assert min_static_cost(p) == pytest.approx(-4 * 3 * math.sqrt(183.0), rel=1e-12)


class TestSlater:
    def test_maxmining(self, params, arrival):
        full = decide(MaxMining(), 0, 0, params)
        assert slater_delta(params, arrival, full) == pytest.approx(DELTA_MAX, rel=1e-12)

    def test_zero(self, params, arrival):
        assert slater_delta(params, arrival, np.zeros((4, 2))) == -125.0

    def test_binding(self, params, arrival):
        alloc = np.tile(expand_scalar(U_BIND, params), (4, 1))
        assert abs(slater_delta(params, arrival, alloc)) < 1e-9


class TestBoundShapes:
    def test_tradeoff_shape(self):
        ks = [1, 5, 10, 20, 40, 100, 1000]
        t1 = [cost_bound(P_STAR, 20000.0, k) for k in ks]
        t2 = [queue_bound(P_STAR, -20.0, 20000.0, k, DELTA_MAX) for k in ks]
        assert all(b < a for a, b in zip(t1, t1[1:]))
        assert all(b > a for a, b in zip(t2, t2[1:]))

    def test_reference_values(self):
        assert cost_bound(P_STAR, 20000.0, 20) == pytest.approx(1070.3125)
        assert cost_bound(P_STAR, 20000.0, 1e6) == pytest.approx(P_STAR + 0.02)

    def test_no_slater_margin(self):
        assert math.isnan(queue_bound(P_STAR, -20.0, 20000.0, 20, 0.0))

    def test_gap_bound(self):
        assert varying_k_gap_bound(20000.0, 20.0, 1000) == pytest.approx(1000 * math.log(1000) / 1000)


class TestVerify:
    def test_reference_constants(self, params, arrival):
        ref = reference_constants(params, arrival)
        assert ref["b_const"] == 20000.0
        assert ref["p_star"] == pytest.approx(P_STAR)
        assert ref["p_min"] == pytest.approx(-20.0)
        assert ref["slater_delta"] == pytest.approx(DELTA_MAX)

    def test_report(self, params, arrival):
        traces = [run(params, arrival, DMRA(20.0), 2000, s) for s in range(3)]
        rep = verify_bounds(traces, params, 20.0, arrival)
        assert rep.n_seeds == 3 and rep.horizon == 2000
        assert rep.cost_bound == pytest.approx(1070.3125)
        assert rep.cost_ok and rep.queue_ok
        assert rep.p_min <= rep.p_star
        text = rep.to_text()
        assert "cost_ok = true" in text and "p_star = " in text
        assert len(rep.csv_row()) == len(rep.csv_header())

    def test_rejects_other_policies(self, params, arrival):
        tr = run(params, arrival, RandMining(), 50, 1)
        with pytest.raises(ContractError):
            verify_bounds(tr, params, 20.0, arrival)
        tr = run(params, arrival, DMRA(10.0), 50, 1)
        with pytest.raises(ContractError):
            verify_bounds(tr, params, 20.0, arrival)

    def test_infeasible_arrivals(self):
        # arrivals beyond full-allocation capacity: no Slater margin, no p*
        p = SystemParams(a_max=300)
        tr = run(p, Constant(150), DMRA(20.0), 50, 1)
        with pytest.raises(InfeasibleError):
            verify_bounds(tr, p, 20.0, Constant(170))

    def test_varying_report(self, params, arrival):
        traces = [run(params, arrival, DMRAVaryingK(20.0), 500, s) for s in range(2)]
        rep = verify_varying_k(traces, params, 20.0, arrival)
        assert rep.gap == pytest.approx(rep.empirical_cost - P_STAR)
        assert rep.tolerance >= 0.02 * P_STAR
        with pytest.raises(ContractError):
            verify_varying_k(traces, params, 10.0, arrival)
