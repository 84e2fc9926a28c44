"""Allocation policies: DMRA, DMRA with growing K, and the baselines.

Policies are small frozen dataclasses; ``decide`` maps
``(policy, backlog, slot)`` to an ``(N, D)`` allocation array.  Only
``RandMining`` consumes randomness, from the generator handed in.
"""

from __future__ import annotations

import re
from dataclasses import dataclass
from typing import Union

import numpy as np

from .errors import ContractError, ModelError
from .model import SystemParams, check_resource_vector
from .solver import expand_scalar, slot_problem, solve_scalar


@dataclass(frozen=True)
class DMRA:
    k: float

    def __post_init__(self):
        if not self.k > 0:
            raise ContractError("DMRA requires k > 0")

    @property
    def name(self) -> str:
        return "DMRA"


@dataclass(frozen=True)
class DMRAVaryingK:
    """DMRA with the schedule ``K[t] = k0 * (t + 1)``."""

    k0: float

    def __post_init__(self):
        if not self.k0 > 0:
            raise ContractError("DMRAVaryingK requires k0 > 0")

    @property
    def name(self) -> str:
        return "DMRAVaryingK"

    def k_at(self, slot: int) -> float:
        return self.k0 * (slot + 1)


@dataclass(frozen=True)
class MaxMining:
    @property
    def name(self) -> str:
        return "MaxMining"


@dataclass(frozen=True)
class RandMining:
    """Every component drawn uniformly from its box, per miner, every slot."""

    @property
    def name(self) -> str:
        return "RandMining"


@dataclass(frozen=True)
class Static:
    theta: tuple[float, ...]

    def __post_init__(self):
        object.__setattr__(self, "theta", tuple(float(x) for x in self.theta))

    @property
    def name(self) -> str:
        return "Static"


PolicySpec = Union[DMRA, DMRAVaryingK, MaxMining, RandMining, Static]


def policy_k(policy: PolicySpec) -> float | None:
    """The tradeoff parameter reported in outputs (``k0`` for the varying schedule)."""
    if isinstance(policy, DMRA):
        return policy.k
    if isinstance(policy, DMRAVaryingK):
        return policy.k0
    return None


def validate_policy(policy: PolicySpec, params: SystemParams) -> None:
    if isinstance(policy, Static):
        check_resource_vector(policy.theta, params)
    elif not isinstance(policy, (DMRA, DMRAVaryingK, MaxMining, RandMining)):
        raise ContractError(f"unknown policy {policy!r}")


def decide(policy: PolicySpec, backlog: int, slot: int, params: SystemParams,
           rng: np.random.Generator | None = None) -> np.ndarray:
    N = params.n_miners
    if isinstance(policy, (DMRA, DMRAVaryingK)):
        k = policy.k if isinstance(policy, DMRA) else policy.k_at(slot)
        u = solve_scalar(slot_problem(k, backlog, params))
        return np.tile(expand_scalar(u, params), (N, 1))
    if isinstance(policy, MaxMining):
        return np.tile(params._tmax, (N, 1))
    if isinstance(policy, RandMining):
        if rng is None:
            raise ContractError("RandMining needs a random generator")
        lo, hi = params._tmin, params._tmax
        return lo + (hi - lo) * rng.random((N, params.n_resources))
    if isinstance(policy, Static):
        theta = check_resource_vector(policy.theta, params)
        return np.tile(theta, (N, 1))
    raise ContractError(f"unknown policy {policy!r}")


_POLICY_RE = re.compile(r"^\s*([A-Za-z_-]+)\s*(?:\((.*)\))?\s*$")


def parse_policy(text: str) -> PolicySpec:
    """Parse ``dmra(20)``, ``dmra-varying(20)``, ``maxmining``, ``randmining``, ``static(30, 1.5)``."""
    m = _POLICY_RE.match(text)
    if not m:
        raise ModelError(f"cannot parse policy {text!r}")
    name = m.group(1).lower().replace("_", "-")
    args = [a.strip() for a in m.group(2).split(",")] if m.group(2) else []
    try:
        nums = [float(a) for a in args if a]
    except ValueError:
        raise ModelError(f"non-numeric policy argument in {text!r}") from None
    if name == "dmra" and len(nums) == 1:
        return DMRA(nums[0])
    if name in ("dmra-varying", "dmravaryingk", "dmra-varying-k") and len(nums) == 1:
        return DMRAVaryingK(nums[0])
    if name == "maxmining" and not nums:
        return MaxMining()
    if name == "randmining" and not nums:
        return RandMining()
    if name == "static" and nums:
        return Static(tuple(nums))
    raise ModelError(f"cannot parse policy {text!r}")


def format_policy(policy: PolicySpec) -> str:
    """Inverse of :func:`parse_policy`; used for digests and file names."""
    if isinstance(policy, DMRA):
        return f"dmra({policy.k!r})"
    if isinstance(policy, DMRAVaryingK):
        return f"dmra-varying({policy.k0!r})"
    if isinstance(policy, MaxMining):
        return "maxmining"
    if isinstance(policy, RandMining):
        return "randmining"
    if isinstance(policy, Static):
        return "static(" + ", ".join(repr(x) for x in policy.theta) + ")"
    raise ContractError(f"unknown policy {policy!r}")
