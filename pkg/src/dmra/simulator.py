"""Seeded discrete-time engine.

Per slot: observe ``Q[t]``, decide allocations, sample ``S[t]``, take
``A[t]``, apply ``Q[t+1] = max(Q[t] - S[t] V + A[t], 0)``, record.

Randomness comes from three independent substreams derived from the master
seed (``arrivals``, ``blocks``, ``policy``), so switching policies leaves the
arrival sample path untouched.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import zlib
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterator, Sequence, Union

import numpy as np

from .errors import ContractError, ModelError, SolverError
from .model import LinearCost, SlotRecord, SystemParams, rate_of_scalar
from .solver import closed_form_u
from .policies import (
    DMRA,
    DMRAVaryingK,
    MaxMining,
    Static,
    PolicySpec,
    decide,
    format_policy,
    validate_policy,
)

TRACE_COLUMNS = (
    "slot", "backlog_before", "arrivals", "blocks_mined", "u_total",
    "expected_cost", "realized_cost", "backlog_after",
    "running_avg_cost", "running_avg_queue",
)

STREAM_LABELS = ("arrivals", "blocks", "policy")


@dataclass(frozen=True)
class UniformInt:
    lo: int
    hi: int

    def __post_init__(self):
        if not 0 <= self.lo <= self.hi:
            raise ModelError("UniformInt needs 0 <= lo <= hi")

    @property
    def mean(self) -> float:
        return 0.5 * (self.lo + self.hi)

    @property
    def upper(self) -> int:
        return self.hi


@dataclass(frozen=True)
class Constant:
    v: int

    def __post_init__(self):
        if self.v < 0:
            raise ModelError("Constant arrivals must be non-negative")

    @property
    def mean(self) -> float:
        return float(self.v)

    @property
    def upper(self) -> int:
        return self.v


@dataclass(frozen=True)
class BernoulliBatch:
    p: float
    batch: int

    def __post_init__(self):
        if not 0.0 <= self.p <= 1.0 or self.batch < 0:
            raise ModelError("BernoulliBatch needs 0 <= p <= 1 and batch >= 0")

    @property
    def mean(self) -> float:
        return self.p * self.batch

    @property
    def upper(self) -> int:
        return self.batch


ArrivalSpec = Union[UniformInt, Constant, BernoulliBatch]


def arrival_to_dict(spec: ArrivalSpec) -> dict:
    if isinstance(spec, UniformInt):
        return {"kind": "uniform", "lo": spec.lo, "hi": spec.hi}
    if isinstance(spec, Constant):
        return {"kind": "constant", "value": spec.v}
    if isinstance(spec, BernoulliBatch):
        return {"kind": "bernoulli", "p": spec.p, "batch": spec.batch}
    raise ContractError(f"unknown arrival spec {spec!r}")


def sample_arrivals(spec: ArrivalSpec, rng: np.random.Generator, size: int | None = None):
    """One draw of ``A[t]`` (an int), or an int64 array of ``size`` i.i.d. draws."""
    if isinstance(spec, UniformInt):
        out = rng.integers(spec.lo, spec.hi, size=size, endpoint=True)
    elif isinstance(spec, Constant):
        out = spec.v if size is None else np.full(size, spec.v, dtype=np.int64)
    elif isinstance(spec, BernoulliBatch):
        hit = rng.random(size) < spec.p
        out = np.where(hit, spec.batch, 0).astype(np.int64) if size is not None else (
            spec.batch if hit else 0)
    else:
        raise ContractError(f"unknown arrival spec {spec!r}")
    return int(out) if size is None else np.asarray(out, dtype=np.int64)


def substreams(seed: int) -> dict[str, np.random.Generator]:
    """Independent generators keyed by label, all derived from ``seed``."""
    return {
        label: np.random.default_rng(
            np.random.SeedSequence(seed, spawn_key=(zlib.crc32(label.encode()),))
        )
        for label in STREAM_LABELS
    }


def digest_of(obj) -> str:
    blob = json.dumps(obj, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


@dataclass
class Trace:
    """Column-oriented record of one run.

    ``allocations`` has shape ``(horizon, N, D)``; the scalar columns have
    length ``horizon``.
    """

    backlog_before: np.ndarray
    arrivals: np.ndarray
    blocks_mined: np.ndarray
    allocations: np.ndarray
    u_total: np.ndarray
    expected_cost: np.ndarray
    realized_cost: np.ndarray
    backlog_after: np.ndarray
    running_avg_cost: np.ndarray
    running_avg_queue: np.ndarray
    seed: int
    config_digest: str
    policy: PolicySpec
    clamp_count: int = 0
    k_schedule: np.ndarray | None = field(default=None, repr=False)

    def __len__(self) -> int:
        return len(self.backlog_before)

    @property
    def horizon(self) -> int:
        return len(self)

    @property
    def clamp_rate(self) -> float:
        return self.clamp_count / len(self) if len(self) else 0.0

    def record(self, t: int) -> SlotRecord:
        return SlotRecord(
            slot=t,
            backlog_before=int(self.backlog_before[t]),
            arrivals=int(self.arrivals[t]),
            blocks_mined=int(self.blocks_mined[t]),
            allocations=self.allocations[t].copy(),
            realized_cost=float(self.realized_cost[t]),
            expected_cost=float(self.expected_cost[t]),
            backlog_after=int(self.backlog_after[t]),
        )

    @property
    def records(self) -> list[SlotRecord]:
        return [self.record(t) for t in range(len(self))]

    def rows(self) -> Iterator[tuple]:
        for t in range(len(self)):
            yield (
                t,
                int(self.backlog_before[t]),
                int(self.arrivals[t]),
                int(self.blocks_mined[t]),
                float(self.u_total[t]),
                float(self.expected_cost[t]),
                float(self.realized_cost[t]),
                int(self.backlog_after[t]),
                float(self.running_avg_cost[t]),
                float(self.running_avg_queue[t]),
            )

    def to_csv(self, digest: str | None = None) -> str:
        buf = io.StringIO()
        buf.write(f"# config_digest: {digest or self.config_digest}\n")
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(TRACE_COLUMNS)
        for row in self.rows():
            # repr() gives shortest round-trip decimal for floats
            w.writerow([repr(x) for x in row])
        return buf.getvalue()

    def write_csv(self, path: str | Path, digest: str | None = None) -> Path:
        path = Path(path)
        path.write_text(self.to_csv(digest))
        return path


def prefix_mean(values: np.ndarray) -> np.ndarray:
    # cumsum accumulates strictly left to right
    return np.cumsum(np.asarray(values, dtype=float)) / np.arange(1, len(values) + 1)


def run_digest(params: SystemParams, arrival: ArrivalSpec, policy: PolicySpec,
               horizon: int, seed: int) -> str:
    return digest_of({
        "params": params.to_dict(),
        "arrival": arrival_to_dict(arrival),
        "policy": format_policy(policy),
        "horizon": horizon,
        "seed": seed,
    })


def run(params: SystemParams, arrival: ArrivalSpec, policy: PolicySpec,
        horizon: int, seed: int) -> Trace:
    """Simulate ``horizon`` slots from an empty queue."""
    if horizon < 1:
        raise ContractError("horizon must be at least 1")
    if arrival.upper > params.a_max:
        raise ModelError(
            f"arrival support reaches {arrival.upper} but a_max is {params.a_max}"
        )
    validate_policy(policy, params)
    streams = substreams(seed)
    arrivals = sample_arrivals(arrival, streams["arrivals"], size=horizon)
    block_rng = streams["blocks"]
    policy_rng = streams["policy"]

    N, D = params.n_miners, params.n_resources
    w = params._w
    eps = params.epsilon
    V = params.block_size
    s_max = params.s_max
    reward = params.reward_total
    cost_model = params.cost_model

    backlog_before = np.empty(horizon, dtype=np.int64)
    backlog_after = np.empty(horizon, dtype=np.int64)
    blocks = np.empty(horizon, dtype=np.int64)
    u_total = np.empty(horizon)
    exp_cost = np.empty(horizon)
    real_cost = np.empty(horizon)
    k_sched = (policy.k0 * np.arange(1, horizon + 1, dtype=float)
               if isinstance(policy, DMRAVaryingK) else None)
    clamps = 0

    # Symmetric policies skip the per-slot array work; the allocations they
    # produce are identical to decide() and are materialized after the loop.
    if isinstance(policy, (MaxMining, Static)):
        mode = "constant"
        theta0 = decide(policy, 0, 0, params)
        allocs = np.broadcast_to(theta0, (horizon, N, D)).copy()
        us0 = (theta0 @ w).tolist()
        rate0 = sum(rate_of_scalar(u, eps) for u in us0)
        spend0 = sum(cost_model.value(u) for u in us0)
    elif isinstance(policy, (DMRA, DMRAVaryingK)) and isinstance(cost_model, LinearCost):
        mode = "dmra"
        allocs = None
        u_sel = np.empty(horizon)
        lo, hi = params.u_min, params.u_max
        span = hi - lo
        tmin = params._tmin.tolist()
        tdelta = (params._tmax - params._tmin).tolist()
        wl = w.tolist()
        slope, icpt = cost_model.slope, cost_model.intercept
        fixed_k = policy.k if isinstance(policy, DMRA) else None
    else:
        mode = "generic"
        allocs = np.empty((horizon, N, D))

    q = 0
    for t in range(horizon):
        if mode == "constant":
            rate, spend, ut = rate0, spend0, None
        elif mode == "dmra":
            k = fixed_k if fixed_k is not None else policy.k0 * (t + 1)
            u = closed_form_u(k * reward + q * V, k, slope, eps, lo, hi)
            u_sel[t] = u
            frac = min(max((u - lo) / span, 0.0), 1.0) if span > 0.0 else 0.0
            ue = 0.0
            for wk, a0, dk in zip(wl, tmin, tdelta):
                ue += wk * (a0 + frac * dk)
            r1 = rate_of_scalar(ue, eps)
            rate = N * r1
            spend = N * (slope * ue + icpt)
            ut = N * ue
        else:
            try:
                theta = decide(policy, q, t, params, policy_rng)
            except SolverError as exc:
                err = SolverError(f"slot {t}: {exc}")
                err.slot = t
                raise err from exc
            allocs[t] = theta
            us = (theta @ w).tolist()
            rate = 0.0
            spend = 0.0
            for u in us:
                rate += rate_of_scalar(u, eps)
                spend += cost_model.value(u)
            ut = sum(us)
        if rate > 0.0:
            raw = int(block_rng.poisson(rate))
            if raw > s_max:
                clamps += 1
                raw = s_max
        else:
            raw = 0
        nxt = q - raw * V + int(arrivals[t])
        backlog_before[t] = q
        blocks[t] = raw
        if ut is not None:
            u_total[t] = ut
        exp_cost[t] = spend - reward * rate
        real_cost[t] = spend - reward * raw
        q = nxt if nxt > 0 else 0
        backlog_after[t] = q

    if mode == "constant":
        u_total[:] = sum(us0)
    elif mode == "dmra":
        if span > 0.0:
            frac = np.clip((u_sel - lo) / span, 0.0, 1.0)
            one = params._tmin + frac[:, None] * (params._tmax - params._tmin)
        else:
            one = np.broadcast_to(params._tmin, (horizon, D))
        allocs = np.repeat(one[:, None, :], N, axis=1)

    return Trace(
        backlog_before=backlog_before,
        arrivals=arrivals,
        blocks_mined=blocks,
        allocations=allocs,
        u_total=u_total,
        expected_cost=exp_cost,
        realized_cost=real_cost,
        backlog_after=backlog_after,
        running_avg_cost=prefix_mean(exp_cost),
        running_avg_queue=prefix_mean(backlog_before),
        seed=seed,
        config_digest=run_digest(params, arrival, policy, horizon, seed),
        policy=policy,
        clamp_count=clamps,
        k_schedule=k_sched,
    )


def check_trace(trace: Trace, params: SystemParams, horizon: int | None = None) -> None:
    """Re-verify slot count and queue evolution on every record."""
    if horizon is not None and len(trace) != horizon:
        raise ContractError(f"trace has {len(trace)} records, expected {horizon}")
    V = params.block_size
    for t in range(len(trace)):
        before = int(trace.backlog_before[t])
        expect = max(before - int(trace.blocks_mined[t]) * V + int(trace.arrivals[t]), 0)
        if int(trace.backlog_after[t]) != expect:
            raise ContractError(f"queue evolution broken at slot {t}")
        if t + 1 < len(trace) and int(trace.backlog_before[t + 1]) != expect:
            raise ContractError(f"backlog discontinuity at slot {t + 1}")
        if not 0 <= int(trace.blocks_mined[t]) <= params.s_max:
            raise ContractError(f"blocks_mined out of range at slot {t}")
        if not 0 <= int(trace.arrivals[t]) <= params.a_max:
            raise ContractError(f"arrivals out of range at slot {t}")


def time_average_cost(trace: Trace) -> float:
    if len(trace) == 0:
        raise ContractError("empty trace")
    return float(trace.running_avg_cost[-1])


def time_average_queue(trace: Trace) -> float:
    if len(trace) == 0:
        raise ContractError("empty trace")
    return float(trace.running_avg_queue[-1])


def _run_args(args):
    return run(*args)


def run_ensemble(params: SystemParams, arrival: ArrivalSpec, policy: PolicySpec,
                 horizon: int, seeds: Sequence[int], workers: int = 1) -> list[Trace]:
    """One trace per seed, in seed order regardless of worker scheduling."""
    jobs = [(params, arrival, policy, horizon, s) for s in seeds]
    if workers <= 1 or len(jobs) <= 1:
        return [run(*j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_run_args, jobs))


def ensemble_stats(values: Sequence[float]) -> tuple[float, float]:
    """Mean and standard error (0 for a single value)."""
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        raise ContractError("empty ensemble")
    se = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
    return float(arr.mean()), se

