"""Plain-text experiment configuration.

One ``key = value`` per line, keys carry a section prefix
(``model.epsilon = 0.5``), lists are bracketed and comma-separated, ``#``
starts a comment.  Omitted keys take the defaults below, which reproduce the
reference setting: 4 miners, CPU (weight 3, box [0, 60]) plus electricity
(weight 1, box [0, 3]), R = 3, V = 3, m = 0.45, n = 0, epsilon = 0.5,
uniform arrivals on [50, 200], 200 slots.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Any, Callable

from .errors import ConfigError, DMRAError
from .model import SystemParams
from .policies import DMRA, MaxMining, PolicySpec, RandMining, format_policy, parse_policy
from .simulator import ArrivalSpec, BernoulliBatch, Constant, UniformInt, arrival_to_dict, digest_of

OUTPUT_ROOT_ENV = "DMRA_OUTPUT_ROOT"


def default_output_dir() -> Path:
    return Path(os.environ.get(OUTPUT_ROOT_ENV, "dmra-results"))


@dataclass
class ExperimentConfig:
    params: SystemParams = field(default_factory=SystemParams)
    arrival: ArrivalSpec = field(default_factory=lambda: UniformInt(50, 200))
    policies: list[PolicySpec] = field(
        default_factory=lambda: [DMRA(20.0), MaxMining(), RandMining()])
    horizon: int = 200
    seeds: list[int] = field(default_factory=lambda: [1])
    k_sweep: list[float] | None = None
    output_dir: Path = field(default_factory=default_output_dir)
    workers: int = 1

    def __post_init__(self):
        if not self.policies:
            raise ConfigError("at least one policy is required", key="run.policies")
        if not self.seeds:
            raise ConfigError("at least one seed is required", key="run.seeds")
        if self.horizon < 1:
            raise ConfigError("horizon must be >= 1", key="run.horizon")
        if self.workers < 1:
            raise ConfigError("workers must be >= 1", key="run.workers")
        if self.k_sweep is not None:
            ks = self.k_sweep
            if not ks or any(k <= 0 for k in ks) or any(b <= a for a, b in zip(ks, ks[1:])):
                raise ConfigError("entries must be positive and strictly increasing", key="sweep.k")
        if self.arrival.upper > self.params.a_max:
            raise ConfigError(
                f"arrival support reaches {self.arrival.upper} but a_max is {self.params.a_max}",
                key="model.a_max")

    def canonical(self) -> dict:
        """Effective configuration, defaults included; output location and workers excluded."""
        return {
            "params": self.params.to_dict(),
            "arrival": arrival_to_dict(self.arrival),
            "policies": [format_policy(p) for p in self.policies],
            "horizon": self.horizon,
            "seeds": list(self.seeds),
            "k_sweep": None if self.k_sweep is None else list(self.k_sweep),
        }

    @property
    def digest(self) -> str:
        return digest_of(self.canonical())

    def with_overrides(self, *, seeds=None, horizon=None, workers=None, output_dir=None):
        changes: dict[str, Any] = {}
        if seeds is not None:
            changes["seeds"] = list(seeds)
        if horizon is not None:
            changes["horizon"] = horizon
        if workers is not None:
            changes["workers"] = workers
        if output_dir is not None:
            changes["output_dir"] = Path(output_dir)
        return replace(self, **changes)


# ---- value parsing -------------------------------------------------------

def _split_top(text: str) -> list[str]:
    """Split on commas that are not inside parentheses."""
    parts, depth, cur = [], 0, []
    for ch in text:
        if ch == "(":
            depth += 1
        elif ch == ")":
            depth -= 1
        if ch == "," and depth == 0:
            parts.append("".join(cur).strip())
            cur = []
        else:
            cur.append(ch)
    tail = "".join(cur).strip()
    if tail or parts:
        parts.append(tail)
    return parts


def _unquote(s: str) -> str:
    s = s.strip()
    if len(s) >= 2 and s[0] == s[-1] and s[0] in "\"'":
        return s[1:-1]
    return s


def _as_int(s: str) -> int:
    s = _unquote(s)
    try:
        f = float(s)
    except ValueError:
        raise ValueError(f"expected an integer, got {s!r}") from None
    if not f.is_integer():
        raise ValueError(f"expected an integer, got {s!r}")
    return int(f)


def _as_float(s: str) -> float:
    s = _unquote(s)
    try:
        return float(s)
    except ValueError:
        raise ValueError(f"expected a number, got {s!r}") from None


def _as_list(conv: Callable[[str], Any]) -> Callable[[str], list]:
    def parse(s: str) -> list:
        s = s.strip()
        if not (s.startswith("[") and s.endswith("]")):
            raise ValueError(f"expected a bracketed list, got {s!r}")
        inner = s[1:-1].strip()
        return [conv(x) for x in _split_top(inner)] if inner else []
    return parse


def _as_str(s: str) -> str:
    return _unquote(s)


def _as_policy(s: str) -> PolicySpec:
    try:
        return parse_policy(_unquote(s))
    except DMRAError as exc:
        raise ValueError(str(exc)) from None


def _epsilon(s: str) -> float:
    v = _as_float(s)
    if not 0.0 < v < 1.0:
        raise ValueError("epsilon must be in (0,1)")
    return v


def _positive_int(s: str) -> int:
    v = _as_int(s)
    if v < 1:
        raise ValueError("must be a positive integer")
    return v


def _nonneg_float(s: str) -> float:
    v = _as_float(s)
    if v < 0:
        raise ValueError("must be non-negative")
    return v


KEYS: dict[str, Callable[[str], Any]] = {
    "model.n_miners": _positive_int,
    "model.n_resources": _positive_int,
    "model.weights": _as_list(_as_float),
    "model.epsilon": _epsilon,
    "model.block_size": _positive_int,
    "model.reward_fixed": _nonneg_float,
    "model.reward_fees": _nonneg_float,
    "model.theta_max": _as_list(_as_float),
    "model.theta_min": _as_list(_as_float),
    "model.cost_slope": _nonneg_float,
    "model.cost_intercept": _nonneg_float,
    "model.a_max": _positive_int,
    "model.s_max": _positive_int,
    "arrival.kind": _as_str,
    "arrival.lo": _as_int,
    "arrival.hi": _as_int,
    "arrival.value": _as_int,
    "arrival.p": _as_float,
    "arrival.batch": _as_int,
    "run.policies": _as_list(_as_policy),
    "run.horizon": _positive_int,
    "run.seeds": _as_list(_as_int),
    "run.workers": _positive_int,
    "run.output_dir": _as_str,
    "sweep.k": _as_list(_as_float),
}


def parse_config_text(text: str) -> ExperimentConfig:
    values: dict[str, Any] = {}
    lines: dict[str, int] = {}
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", line=lineno)
        key, _, val = line.partition("=")
        key = key.strip()
        if key not in KEYS:
            raise ConfigError("unknown key", key=key, line=lineno)
        if key in values:
            raise ConfigError("duplicate key", key=key, line=lineno)
        try:
            values[key] = KEYS[key](val.strip())
        except ValueError as exc:
            raise ConfigError(str(exc), key=key, line=lineno) from None
        lines[key] = lineno
    return _build(values, lines)


def _build(values: dict[str, Any], lines: dict[str, int]) -> ExperimentConfig:
    model_kw = {k.split(".", 1)[1]: v for k, v in values.items() if k.startswith("model.")}
    for name in ("weights", "theta_max", "theta_min"):
        if name in model_kw:
            model_kw[name] = tuple(model_kw[name])
    if "n_resources" not in model_kw and "weights" in model_kw:
        model_kw["n_resources"] = len(model_kw["weights"])
    try:
        params = SystemParams(**model_kw)
    except DMRAError as exc:
        model_keys = [k for k in lines if k.startswith("model.")]
        key = next((k for k in model_keys if k.split(".", 1)[1] in str(exc)),
                   model_keys[0] if model_keys else None)
        raise ConfigError(str(exc), key=key, line=lines.get(key)) from None

    kind = values.get("arrival.kind", "uniform")
    if kind not in ("uniform", "constant", "bernoulli"):
        raise ConfigError("must be one of uniform, constant, bernoulli",
                          key="arrival.kind", line=lines.get("arrival.kind"))
    try:
        if kind == "uniform":
            arrival: ArrivalSpec = UniformInt(values.get("arrival.lo", 50), values.get("arrival.hi", 200))
        elif kind == "constant":
            arrival = Constant(values.get("arrival.value", 0))
        else:
            arrival = BernoulliBatch(values.get("arrival.p", 0.5), values.get("arrival.batch", 0))
    except DMRAError as exc:
        key = next((k for k in lines if k.startswith("arrival.")), "arrival.kind")
        raise ConfigError(str(exc), key=key, line=lines.get(key)) from None

    kw: dict[str, Any] = {"params": params, "arrival": arrival}
    if "run.policies" in values:
        kw["policies"] = values["run.policies"]
    if "run.horizon" in values:
        kw["horizon"] = values["run.horizon"]
    if "run.seeds" in values:
        kw["seeds"] = values["run.seeds"]
    if "run.workers" in values:
        kw["workers"] = values["run.workers"]
    if "run.output_dir" in values:
        kw["output_dir"] = Path(values["run.output_dir"])
    if "sweep.k" in values:
        kw["k_sweep"] = values["sweep.k"]
    try:
        return ExperimentConfig(**kw)
    except ConfigError as exc:
        if exc.key is not None and exc.line is None and exc.key in lines:
            raise ConfigError(exc.reason, key=exc.key, line=lines[exc.key]) from None
        raise


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc}") from None
    return parse_config_text(text)
