"""Reference optima and performance bounds for DMRA, and checks of traces against them."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass, fields
from typing import Sequence

import numpy as np

from .errors import ContractError, InfeasibleError
from .model import ScalarCost, SystemParams, rate_of_scalar, total_rate
from .policies import DMRA, DMRAVaryingK, MaxMining, decide
from .simulator import ArrivalSpec, Trace, ensemble_stats, time_average_cost, time_average_queue
from .solver import SlotProblem, solve_scalar


def drift_bound_b(a_max: int, s_max: int, block_size: int) -> float:
    """Constant of the one-slot drift bound: ``max(A_max**2, (S_max*V)**2) / 2``."""
    return max(a_max**2, (s_max * block_size) ** 2) / 2.0


def _per_miner_cost(u, params, model):
    return float(model.value(u)) - params.reward_total * rate_of_scalar(u, params.epsilon)


def _unconstrained_u(params: SystemParams, model: ScalarCost) -> float:
    # min c(u) - (R+M) u^eps is the slot problem with k = 1 and zero backlog
    p = SlotProblem(gain=params.reward_total, k=1.0, u_max=params.u_max,
                    u_min=params.u_min, cost_model=model, epsilon=params.epsilon)
    return solve_scalar(p)


def min_static_cost(params: SystemParams, cost_model: ScalarCost | None = None) -> float:
    """Lowest expected slot cost over the box, ignoring stability."""
    model = params.cost_model if cost_model is None else cost_model
    u = _unconstrained_u(params, model)
    return params.n_miners * _per_miner_cost(u, params, model)


def optimal_static_cost(params: SystemParams, mean_arrival: float,
                        cost_model: ScalarCost | None = None) -> tuple[float, float]:
    """Best symmetric static allocation that keeps up with ``mean_arrival``.

    Returns ``(p_star, u)`` where ``u`` is each miner's weighted input.
    Raises :class:`InfeasibleError` when even full allocation cannot serve
    the mean arrival rate.
    """
    model = params.cost_model if cost_model is None else cost_model
    N, V, eps = params.n_miners, params.block_size, params.epsilon
    capacity = N * rate_of_scalar(params.u_max, eps) * V
    if mean_arrival > capacity:
        raise InfeasibleError(
            f"mean arrival {mean_arrival} exceeds service capacity {capacity:.6g}"
        )
    u = _unconstrained_u(params, model)
    if N * rate_of_scalar(u, eps) * V < mean_arrival:
        # convex objective, so the stability constraint binds
        u = min((mean_arrival / (N * V)) ** (1.0 / eps), params.u_max)
    return N * _per_miner_cost(u, params, model), u


def slater_delta(params: SystemParams, arrival: ArrivalSpec, allocations) -> float:
    return total_rate(allocations, params) * params.block_size - arrival.mean


def cost_bound(p_star: float, b_const: float, k: float) -> float:
    return p_star + b_const / k


def queue_bound(p_star: float, p_min: float, b_const: float, k: float, delta: float) -> float:
    if delta <= 0:
        return math.nan
    return (b_const + k * (p_star - p_min)) / delta


def varying_k_gap_bound(b_const: float, k0: float, t: int) -> float:
    return b_const / k0 * math.log(t) / t


@dataclass
class BoundsReport:
    k: float
    n_seeds: int
    horizon: int
    b_const: float
    p_star: float
    p_min: float
    slater_delta: float
    cost_bound: float
    queue_bound: float
    empirical_cost: float
    empirical_cost_se: float
    empirical_queue: float
    empirical_queue_se: float
    cost_ok: bool
    queue_ok: bool | None

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())

    @classmethod
    def csv_header(cls) -> list[str]:
        return [f.name for f in fields(cls)]

    def csv_row(self) -> list[str]:
        return [_fmt(v) for v in asdict(self).values()]


@dataclass
class VaryingKReport:
    k0: float
    n_seeds: int
    horizon: int
    b_const: float
    p_star: float
    empirical_cost: float
    empirical_cost_se: float
    gap: float
    tolerance: float
    gap_bound: float
    converged: bool
    gap_ok: bool

    def to_text(self) -> str:
        return "".join(f"{k} = {_fmt(v)}\n" for k, v in asdict(self).items())


def _fmt(v) -> str:
    if v is None:
        return "n/a"
    if isinstance(v, bool):
        return "true" if v else "false"
    return repr(v)


def _as_list(traces) -> list[Trace]:
    out = [traces] if isinstance(traces, Trace) else list(traces)
    if not out:
        raise ContractError("no traces given")
    return out


def reference_constants(params: SystemParams, arrival: ArrivalSpec) -> dict:
    """B, p*, p_min and the Slater margin certified by full allocation."""
    b = drift_bound_b(params.a_max, params.s_max, params.block_size)
    p_star, u_star = optimal_static_cost(params, arrival.mean)
    full = decide(MaxMining(), 0, 0, params)
    return {
        "b_const": b,
        "p_star": p_star,
        "u_star": u_star,
        "p_min": min_static_cost(params),
        "slater_delta": slater_delta(params, arrival, full),
    }


def verify_bounds(traces: Trace | Sequence[Trace], params: SystemParams, k: float,
                  arrival: ArrivalSpec) -> BoundsReport:
    """Check DMRA(k) traces against the cost and queue-length bounds.

    With several traces (one per seed) the check uses the ensemble mean of
    the time averages plus three standard errors of slack.
    """
    runs = _as_list(traces)
    for tr in runs:
        if not isinstance(tr.policy, DMRA) or tr.policy.k != k:
            raise ContractError(f"trace was produced by {tr.policy!r}, not DMRA(k={k})")
    ref = reference_constants(params, arrival)
    b, p_star, p_min, delta = ref["b_const"], ref["p_star"], ref["p_min"], ref["slater_delta"]
    cost, cost_se = ensemble_stats([time_average_cost(t) for t in runs])
    queue, queue_se = ensemble_stats([time_average_queue(t) for t in runs])
    t1 = cost_bound(p_star, b, k)
    t2 = queue_bound(p_star, p_min, b, k, delta)
    return BoundsReport(
        k=k,
        n_seeds=len(runs),
        horizon=min(len(t) for t in runs),
        b_const=b,
        p_star=p_star,
        p_min=p_min,
        slater_delta=delta,
        cost_bound=t1,
        queue_bound=t2,
        empirical_cost=cost,
        empirical_cost_se=cost_se,
        empirical_queue=queue,
        empirical_queue_se=queue_se,
        cost_ok=bool(cost <= t1 + 3 * cost_se),
        queue_ok=None if delta <= 0 else bool(queue <= t2 + 3 * queue_se),
    )


def verify_varying_k(traces: Trace | Sequence[Trace], params: SystemParams, k0: float,
                     arrival: ArrivalSpec, rel_tol: float = 0.02) -> VaryingKReport:
    """Compare the growing-K schedule's time-average cost with ``p*``."""
    runs = _as_list(traces)
    for tr in runs:
        if not isinstance(tr.policy, DMRAVaryingK) or tr.policy.k0 != k0:
            raise ContractError(f"trace was produced by {tr.policy!r}, not DMRAVaryingK(k0={k0})")
    b = drift_bound_b(params.a_max, params.s_max, params.block_size)
    p_star, _ = optimal_static_cost(params, arrival.mean)
    cost, se = ensemble_stats([time_average_cost(t) for t in runs])
    horizon = min(len(t) for t in runs)
    gap = cost - p_star
    tol = max(rel_tol * abs(p_star), 3 * se)
    bound = varying_k_gap_bound(b, k0, horizon)
    return VaryingKReport(
        k0=k0, n_seeds=len(runs), horizon=horizon, b_const=b, p_star=p_star,
        empirical_cost=cost, empirical_cost_se=se, gap=gap, tolerance=tol,
        gap_bound=bound, converged=bool(abs(gap) <= tol), gap_ok=bool(gap <= bound),
    )


def ensemble_curve(traces: Sequence[Trace], column: str = "running_avg_cost") -> tuple[np.ndarray, np.ndarray]:
    """Per-slot mean and standard error of a running-average column across seeds."""
    stack = np.vstack([getattr(t, column) for t in traces])
    n = stack.shape[0]
    se = stack.std(axis=0, ddof=1) / np.sqrt(n) if n > 1 else np.zeros(stack.shape[1])
    return stack.mean(axis=0), se
