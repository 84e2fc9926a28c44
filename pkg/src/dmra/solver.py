"""Per-slot drift-plus-penalty allocation.

Every slot each miner minimizes ``k * c(u) - gain * u**epsilon`` over
``u in [u_min, u_max]``, where ``u = w . theta`` and
``gain = k * (R + M) + Q[t] * V``.  Miners share one cost model, so the
problem is solved once and replicated.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ContractError, SolverError
from .model import LinearCost, ScalarCost, SystemParams, rate_of_scalar

DEFAULT_TOL = 1e-9


@dataclass(frozen=True)
class SlotProblem:
    gain: float
    k: float
    u_max: float
    cost_model: ScalarCost
    epsilon: float
    u_min: float = 0.0

    def objective(self, u):
        """Per-miner objective; vectorized over ``u``."""
        u = np.asarray(u, dtype=float)
        return self.k * self.cost_model.value(u) - self.gain * np.power(np.maximum(u, 0.0), self.epsilon)


@dataclass(frozen=True)
class SlotSolution:
    u_star: np.ndarray
    theta_star: np.ndarray
    objective: float


def slot_gain(k: float, reward_total: float, backlog: int, block_size: int) -> float:
    if k <= 0:
        raise ContractError("k must be positive")
    return k * reward_total + backlog * block_size


def _stationary_linear(gain, k, slope, epsilon):
    # argmin of k*slope*u - gain*u**eps on (0, inf)
    return (gain * epsilon / (k * slope)) ** (1.0 / (1.0 - epsilon))


def solve_miner_closed_form(p: SlotProblem) -> float:
    """Exact minimizer for a linear cost model."""
    if not isinstance(p.cost_model, LinearCost):
        raise ContractError("closed form requires a LinearCost model")
    return closed_form_u(p.gain, p.k, p.cost_model.slope, p.epsilon, p.u_min, p.u_max)


def closed_form_u(gain: float, k: float, slope: float, epsilon: float,
                  u_min: float, u_max: float) -> float:
    """Scalar core of :func:`solve_miner_closed_form`, free of object overhead."""
    if u_max <= u_min:
        return u_max
    if gain <= 0.0:
        return u_min
    if slope == 0.0:
        # objective strictly decreasing in u
        return u_max
    try:
        u = _stationary_linear(gain, k, slope, epsilon)
    except OverflowError:
        return u_max
    return min(max(u, u_min), u_max)


def solve_miner_bisection(p: SlotProblem, tol: float = DEFAULT_TOL) -> float:
    """Root of ``k*c'(u) - gain*eps*u**(eps-1)`` on the box, by bisection.

    The derivative tends to ``-inf`` at ``u -> 0+`` whenever ``gain > 0``, so
    the lower end of the bracket is only ever used as a bound, never evaluated
    there when it is zero.
    """
    if tol <= 0:
        raise ContractError("tol must be positive")
    lo, hi = p.u_min, p.u_max
    if hi <= lo:
        return hi
    k, g, eps = p.k, p.gain, p.epsilon
    c = p.cost_model

    def deriv(u):
        return k * float(c.derivative(u)) - g * eps * u ** (eps - 1.0)

    if g <= 0.0:
        # objective is k*c(u), nondecreasing
        return lo

    d_hi = deriv(hi)
    if d_hi <= 0.0:
        return hi
    d_lo = -math.inf if lo == 0.0 else deriv(lo)
    if d_lo >= 0.0:
        return lo
    slack = 1e-9 * max(1.0, abs(d_hi))
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        d = deriv(mid)
        if d < d_lo - slack or d > d_hi + slack:
            raise SolverError(
                f"cost derivative is not monotone near u={mid:.6g}; cost model is not convex"
            )
        if d > 0.0:
            hi, d_hi = mid, d
        else:
            lo, d_lo = mid, d
    return 0.5 * (lo + hi)


def oracle_grid_search(p: SlotProblem, step: float) -> float:
    """Brute-force argmin over a uniform grid; test oracle only."""
    if step <= 0:
        raise ContractError("step must be positive")
    if p.u_max <= p.u_min:
        return p.u_max
    n = int(math.floor((p.u_max - p.u_min) / step))
    grid = p.u_min + step * np.arange(n + 1)
    if grid[-1] < p.u_max:
        grid = np.append(grid, p.u_max)
    values = p.objective(grid)
    return float(grid[int(np.argmin(values))])


def expand_scalar(u: float, params: SystemParams) -> np.ndarray:
    """Split a weighted total ``u`` into a resource vector inside the box.

    The vector moves along the segment from ``theta_min`` to ``theta_max``,
    which keeps the resource mix fixed and makes ``w . theta == u``.
    """
    lo, hi = params.u_min, params.u_max
    span = hi - lo
    if u < lo - 1e-12 * max(1.0, hi) or u > hi * (1 + 1e-12) + 1e-12:
        raise ContractError(f"u={u} outside [{lo}, {hi}]")
    if span <= 0.0:
        return params.theta_min_vec
    frac = min(max((u - lo) / span, 0.0), 1.0)
    return params._tmin + frac * (params._tmax - params._tmin)


def slot_problem(k: float, backlog: int, params: SystemParams,
                 cost_model: ScalarCost | None = None) -> SlotProblem:
    return SlotProblem(
        gain=slot_gain(k, params.reward_total, backlog, params.block_size),
        k=k,
        u_max=params.u_max,
        u_min=params.u_min,
        cost_model=params.cost_model if cost_model is None else cost_model,
        epsilon=params.epsilon,
    )


def solve_scalar(p: SlotProblem, tol: float = DEFAULT_TOL) -> float:
    if isinstance(p.cost_model, LinearCost):
        return solve_miner_closed_form(p)
    return solve_miner_bisection(p, tol)


def solve_slot(k: float, backlog: int, params: SystemParams,
               cost_model: ScalarCost | None = None, tol: float = DEFAULT_TOL) -> SlotSolution:
    p = slot_problem(k, backlog, params, cost_model)
    u = solve_scalar(p, tol)
    theta = expand_scalar(u, params)
    N = params.n_miners
    per_miner = k * float(p.cost_model.value(u)) - p.gain * rate_of_scalar(u, p.epsilon)
    return SlotSolution(
        u_star=np.full(N, u),
        theta_star=np.tile(theta, (N, 1)),
        objective=N * per_miner,
    )
