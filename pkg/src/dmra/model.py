"""Physical model of a PoW network seen as a single batch-service queue.

Each miner ``i`` commits a resource vector ``theta_i`` (one entry per
resource type).  Its time-to-block is exponential with rate
``(w . theta_i) ** epsilon``; the race between miners is therefore a Poisson
process of rate ``sum_i lambda_i`` over a unit-length slot.  Every block
removes ``block_size`` transactions from the global backlog.

Allocations are plain float arrays: a single ``ResourceVector`` has shape
``(D,)`` and a slot's allocations have shape ``(N, D)``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Protocol, Sequence

import numpy as np

from .errors import ModelError

ResourceVector = np.ndarray


class ScalarCost(Protocol):
    """Increasing, convex, differentiable cost of the scalar ``u = w . theta``."""

    def value(self, u: float) -> float: ...

    def derivative(self, u: float) -> float: ...


@dataclass(frozen=True)
class LinearCost:
    """``c(u) = slope * u + intercept``."""

    slope: float
    intercept: float = 0.0

    def value(self, u):
        return self.slope * u + self.intercept

    def derivative(self, u):
        return self.slope + 0.0 * u


@dataclass(frozen=True)
class QuadraticCost:
    """``c(u) = a * u**2 + b * u + c`` with ``a, b >= 0``."""

    a: float
    b: float = 0.0
    c: float = 0.0

    def value(self, u):
        return self.a * u * u + self.b * u + self.c

    def derivative(self, u):
        return 2.0 * self.a * u + self.b


def _vec(values, name: str) -> np.ndarray:
    arr = np.asarray(values, dtype=float)
    if arr.ndim != 1:
        raise ModelError(f"{name} must be a 1-D vector, got shape {arr.shape}")
    return arr


@dataclass(frozen=True)
class SystemParams:
    """All model constants.

    ``theta_min`` is a per-resource floor (zeros unless configured); the
    admissible box for every miner is ``[theta_min, theta_max]``.
    """

    n_miners: int = 4
    n_resources: int = 2
    weights: tuple[float, ...] = (3.0, 1.0)
    epsilon: float = 0.5
    block_size: int = 3
    reward_fixed: float = 3.0
    reward_fees: float = 0.0
    theta_max: tuple[float, ...] = (60.0, 3.0)
    cost_slope: float = 0.45
    cost_intercept: float = 0.0
    a_max: int = 200
    s_max: int = 50
    theta_min: tuple[float, ...] | None = None

    # derived vectors, cached for the hot loop
    _w: np.ndarray = field(init=False, repr=False, compare=False)
    _tmax: np.ndarray = field(init=False, repr=False, compare=False)
    _tmin: np.ndarray = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        D = self.n_resources
        if self.n_miners < 1:
            raise ModelError("n_miners must be positive")
        if D < 1:
            raise ModelError("n_resources must be positive")
        w = _vec(self.weights, "weights")
        tmax = _vec(self.theta_max, "theta_max")
        tmin = np.zeros(D) if self.theta_min is None else _vec(self.theta_min, "theta_min")
        for name, arr in (("weights", w), ("theta_max", tmax), ("theta_min", tmin)):
            if arr.shape != (D,):
                raise ModelError(f"{name} has length {arr.shape[0]}, expected n_resources={D}")
        if not np.all(w > 0):
            raise ModelError("all weights must be strictly positive")
        if not 0.0 < self.epsilon < 1.0:
            raise ModelError("epsilon must lie strictly inside (0, 1)")
        if self.block_size < 1:
            raise ModelError("block_size must be a positive integer")
        if self.reward_fixed < 0 or self.reward_fees < 0:
            raise ModelError("rewards must be non-negative")
        if self.cost_slope < 0 or self.cost_intercept < 0:
            raise ModelError("cost coefficients must be non-negative")
        if np.any(tmin < 0) or np.any(tmax < tmin):
            raise ModelError("need 0 <= theta_min <= theta_max componentwise")
        if self.a_max < 1 or self.s_max < 1:
            raise ModelError("a_max and s_max must be positive integers")
        object.__setattr__(self, "weights", tuple(float(x) for x in w))
        object.__setattr__(self, "theta_max", tuple(float(x) for x in tmax))
        object.__setattr__(self, "theta_min", tuple(float(x) for x in tmin))
        object.__setattr__(self, "_w", w)
        object.__setattr__(self, "_tmax", tmax)
        object.__setattr__(self, "_tmin", tmin)

    @property
    def w(self) -> np.ndarray:
        return self._w.copy()

    @property
    def theta_max_vec(self) -> np.ndarray:
        return self._tmax.copy()

    @property
    def theta_min_vec(self) -> np.ndarray:
        return self._tmin.copy()

    @property
    def reward_total(self) -> float:
        return self.reward_fixed + self.reward_fees

    @property
    def u_max(self) -> float:
        return float(self._w @ self._tmax)

    @property
    def u_min(self) -> float:
        return float(self._w @ self._tmin)

    @property
    def cost_model(self) -> LinearCost:
        return LinearCost(self.cost_slope, self.cost_intercept)

    def to_dict(self) -> dict:
        return {
            "n_miners": self.n_miners,
            "n_resources": self.n_resources,
            "weights": list(self.weights),
            "epsilon": self.epsilon,
            "block_size": self.block_size,
            "reward_fixed": self.reward_fixed,
            "reward_fees": self.reward_fees,
            "theta_max": list(self.theta_max),
            "theta_min": list(self.theta_min),
            "cost_slope": self.cost_slope,
            "cost_intercept": self.cost_intercept,
            "a_max": self.a_max,
            "s_max": self.s_max,
        }


@dataclass
class QueueState:
    backlog: int = 0
    slot: int = 0

    def __post_init__(self):
        if self.backlog < 0:
            raise ModelError("backlog must be non-negative")


@dataclass(frozen=True)
class SlotRecord:
    slot: int
    backlog_before: int
    arrivals: int
    blocks_mined: int
    allocations: np.ndarray
    realized_cost: float
    expected_cost: float
    backlog_after: int


def check_resource_vector(theta, params: SystemParams, atol: float = 1e-9) -> np.ndarray:
    """Validate a single miner's allocation against the box; returns it as an array."""
    arr = np.asarray(theta, dtype=float)
    if arr.shape != (params.n_resources,):
        raise ModelError(
            f"resource vector has shape {arr.shape}, expected ({params.n_resources},)"
        )
    tol = atol * np.maximum(1.0, params._tmax)
    if np.any(arr < params._tmin - tol) or np.any(arr > params._tmax + tol):
        raise ModelError(f"resource vector {arr.tolist()} outside the box")
    return arr


def check_allocations(allocations, params: SystemParams) -> np.ndarray:
    arr = np.asarray(allocations, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != params.n_miners:
        raise ModelError(
            f"expected {params.n_miners} allocations, got array of shape {arr.shape}"
        )
    for row in arr:
        check_resource_vector(row, params)
    return arr


def weighted_input(theta, params: SystemParams) -> float:
    arr = np.asarray(theta, dtype=float)
    if arr.shape[-1:] != (params.n_resources,):
        raise ModelError(
            f"dimension mismatch: theta has {arr.shape[-1] if arr.ndim else 0} entries, "
            f"weights have {params.n_resources}"
        )
    return float(arr @ params._w)


def rate_of_scalar(u: float, epsilon: float) -> float:
    """``u ** epsilon`` with the convention ``0 ** epsilon = 0``."""
    return u**epsilon if u > 0.0 else 0.0


def mining_rate(theta, params: SystemParams) -> float:
    """Exponential rate of one miner's time-to-block, ``(w . theta) ** epsilon``."""
    return rate_of_scalar(weighted_input(theta, params), params.epsilon)


def total_rate(allocations, params: SystemParams) -> float:
    """Mean number of blocks per slot for a full set of allocations."""
    arr = np.asarray(allocations, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != params.n_miners:
        raise ModelError(
            f"expected {params.n_miners} allocations, got array of shape {arr.shape}"
        )
    return float(sum(mining_rate(row, params) for row in arr))


def sample_block_count(rate: float, s_max: int, rng: np.random.Generator) -> int:
    """Draw ``S[t] ~ Poisson(rate)`` clamped to ``[0, s_max]``."""
    if rate <= 0.0:
        return 0
    return min(int(rng.poisson(rate)), s_max)


def cost(theta, params: SystemParams, cost_model: ScalarCost | None = None) -> float:
    model = params.cost_model if cost_model is None else cost_model
    return float(model.value(weighted_input(theta, params)))


def _per_miner(allocations, params):
    arr = np.asarray(allocations, dtype=float)
    if arr.ndim != 2 or arr.shape[0] != params.n_miners:
        raise ModelError(
            f"expected {params.n_miners} allocations, got array of shape {arr.shape}"
        )
    return arr @ params._w


def expected_slot_cost(allocations, params: SystemParams,
                       cost_model: ScalarCost | None = None) -> float:
    """Resource cost minus expected block rewards; negative means net profit."""
    model = params.cost_model if cost_model is None else cost_model
    us = _per_miner(allocations, params)
    eps = params.epsilon
    spend = sum(float(model.value(u)) for u in us)
    rate = sum(rate_of_scalar(float(u), eps) for u in us)
    return spend - params.reward_total * rate


def slot_cost(allocations, blocks_mined: int, params: SystemParams,
              cost_model: ScalarCost | None = None) -> float:
    """Realized slot cost: resource cost minus the rewards of the blocks actually mined."""
    model = params.cost_model if cost_model is None else cost_model
    us = _per_miner(allocations, params)
    spend = sum(float(model.value(u)) for u in us)
    return spend - blocks_mined * params.reward_total


def queue_step(q: QueueState, blocks_mined: int, arrivals: int,
               params: SystemParams) -> QueueState:
    if blocks_mined < 0 or arrivals < 0:
        raise ModelError("blocks_mined and arrivals must be non-negative")
    nxt = q.backlog - blocks_mined * params.block_size + arrivals
    return QueueState(backlog=max(nxt, 0), slot=q.slot + 1)
