"""Experiment orchestration: cells of (policy, seed), CSV outputs, bounds reports.

Output layout under ``output_dir``::

    traces/<policy>[_k<K>]_seed<seed>.csv   one per cell
    summary.csv                             one row per cell
    ensemble.csv                            mean and standard error per (policy, k)
    bounds.csv, bounds_k<K>.txt             fixed-K DMRA cells only
    varying_k0<K0>.txt                      DMRAVaryingK cells only

Every CSV starts with a ``# config_digest: <sha256>`` line.
"""

from __future__ import annotations

import csv
import io
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

from .analysis import BoundsReport, verify_bounds, verify_varying_k
from .config import ExperimentConfig
from .errors import ConfigError, DMRAError
from .policies import DMRA, DMRAVaryingK, PolicySpec, Static, policy_k
from .simulator import Trace, ensemble_stats, run, time_average_cost, time_average_queue

log = logging.getLogger(__name__)

SUMMARY_COLUMNS = ("policy", "k", "seed", "horizon", "time_avg_cost", "time_avg_queue", "clamp_rate")
ENSEMBLE_COLUMNS = ("policy", "k", "n_seeds", "horizon", "mean_cost", "se_cost",
                    "mean_queue", "se_queue", "mean_clamp_rate")


def _num(x: float) -> str:
    return f"{x:g}".replace("+", "")


def cell_stem(policy: PolicySpec) -> str:
    stem = policy.name.lower()
    k = policy_k(policy)
    if k is not None:
        stem += f"_k{_num(k)}"
    if isinstance(policy, Static):
        stem += "_" + "-".join(_num(x) for x in policy.theta)
    return stem


def trace_filename(policy: PolicySpec, seed: int) -> str:
    return f"{cell_stem(policy)}_seed{seed}.csv"


def cells_for(config: ExperimentConfig, mode: str) -> list[PolicySpec]:
    """Policies to simulate for ``mode`` in {'run', 'sweep', 'verify'}."""
    if mode == "run":
        return list(config.policies)
    if mode in ("sweep", "verify"):
        if mode == "sweep" and config.k_sweep is None:
            raise ConfigError("sweep needs sweep.k", key="sweep.k")
        dmra = [DMRA(k) for k in config.k_sweep] if config.k_sweep else [
            p for p in config.policies if isinstance(p, DMRA)]
        if mode == "verify":
            dmra += [p for p in config.policies if isinstance(p, DMRAVaryingK)]
            if not dmra:
                raise ConfigError("verify needs a DMRA policy or sweep.k", key="run.policies")
            return dmra
        others = [p for p in config.policies if not isinstance(p, DMRA)]
        return dmra + others
    raise ValueError(f"unknown mode {mode!r}")


@dataclass
class CellResult:
    policy: PolicySpec
    seed: int
    trace: Trace | None = None
    error: str | None = None


@dataclass
class ExperimentResult:
    files: list[Path] = field(default_factory=list)
    failures: list[CellResult] = field(default_factory=list)
    bounds: list[BoundsReport] = field(default_factory=list)
    varying: list = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.failures


def _run_cell(args) -> CellResult:
    params, arrival, policy, horizon, seed = args
    try:
        return CellResult(policy, seed, trace=run(params, arrival, policy, horizon, seed))
    except DMRAError as exc:
        return CellResult(policy, seed, error=str(exc))


def _header(digest: str) -> str:
    return f"# config_digest: {digest}\n"


def _csv_text(digest: str, columns, rows) -> str:
    buf = io.StringIO()
    buf.write(_header(digest))
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(columns)
    w.writerows(rows)
    return buf.getvalue()


def _fmt_k(policy: PolicySpec) -> str:
    k = policy_k(policy)
    return "" if k is None else repr(k)


def run_experiment(config: ExperimentConfig, mode: str = "run") -> ExperimentResult:
    policies = cells_for(config, mode)
    out = Path(config.output_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        if mode != "verify":
            (out / "traces").mkdir(exist_ok=True)
    except OSError as exc:
        raise ConfigError(f"output directory not writable: {exc}", key="run.output_dir") from None

    jobs = [(config.params, config.arrival, p, config.horizon, s)
            for p in policies for s in config.seeds]
    if config.workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(_run_cell, jobs))
    else:
        results = [_run_cell(j) for j in jobs]

    digest = config.digest
    result = ExperimentResult()
    by_policy: dict[PolicySpec, list[Trace]] = {}
    summary_rows = []
    for cell in results:
        if cell.error is not None:
            log.error("cell %s seed %d aborted: %s", cell.policy, cell.seed, cell.error)
            result.failures.append(cell)
            continue
        tr = cell.trace
        by_policy.setdefault(cell.policy, []).append(tr)
        if mode != "verify":
            path = out / "traces" / trace_filename(cell.policy, cell.seed)
            tr.write_csv(path, digest)
            result.files.append(path)
        summary_rows.append([
            cell.policy.name, _fmt_k(cell.policy), str(cell.seed), str(config.horizon),
            repr(time_average_cost(tr)), repr(time_average_queue(tr)), repr(tr.clamp_rate),
        ])

    if mode != "verify":
        path = out / "summary.csv"
        path.write_text(_csv_text(digest, SUMMARY_COLUMNS, summary_rows))
        result.files.append(path)

        ens_rows = []
        for pol, traces in by_policy.items():
            mc, sc = ensemble_stats([time_average_cost(t) for t in traces])
            mq, sq = ensemble_stats([time_average_queue(t) for t in traces])
            mr, _ = ensemble_stats([t.clamp_rate for t in traces])
            ens_rows.append([pol.name, _fmt_k(pol), str(len(traces)), str(config.horizon),
                             repr(mc), repr(sc), repr(mq), repr(sq), repr(mr)])
        path = out / "ensemble.csv"
        path.write_text(_csv_text(digest, ENSEMBLE_COLUMNS, ens_rows))
        result.files.append(path)

    bound_rows = []
    for pol, traces in by_policy.items():
        if isinstance(pol, DMRA):
            rep = verify_bounds(traces, config.params, pol.k, config.arrival)
            result.bounds.append(rep)
            bound_rows.append(rep.csv_row())
            path = out / f"bounds_k{_num(pol.k)}.txt"
            path.write_text(f"# config_digest: {digest}\n" + rep.to_text())
            result.files.append(path)
        elif isinstance(pol, DMRAVaryingK):
            rep = verify_varying_k(traces, config.params, pol.k0, config.arrival)
            result.varying.append(rep)
            path = out / f"varying_k0{_num(pol.k0)}.txt"
            path.write_text(f"# config_digest: {digest}\n" + rep.to_text())
            result.files.append(path)
    if bound_rows:
        path = out / "bounds.csv"
        path.write_text(_csv_text(digest, BoundsReport.csv_header(), bound_rows))
        result.files.append(path)
    return result


def read_csv(path: str | Path) -> tuple[str | None, list[dict[str, str]]]:
    """Read one of our CSVs: returns (config digest, rows)."""
    digest = None
    lines = Path(path).read_text().splitlines()
    body = []
    for line in lines:
        if line.startswith("#"):
            if "config_digest:" in line:
                digest = line.split(":", 1)[1].strip()
            continue
        body.append(line)
    return digest, list(csv.DictReader(body))


def gnuplot_script(summary_path: str | Path) -> str:
    """Gnuplot script drawing running averages per cell plus the K tradeoff."""
    summary_path = Path(summary_path)
    _, rows = read_csv(summary_path)
    root = summary_path.parent
    cells = []
    seen = set()
    for r in rows:
        name = r["policy"].lower()
        stem = name + (f"_k{_num(float(r['k']))}" if r["k"] else "")
        if name == "static":
            # static cells carry their vector in the stem; recover it from disk
            matches = sorted((root / "traces").glob(f"static_*_seed{r['seed']}.csv"))
            files = [m.name for m in matches]
        else:
            files = [f"{stem}_seed{r['seed']}.csv"]
        for f in files:
            if f not in seen:
                seen.add(f)
                cells.append(f)

    def plot_lines(col: int) -> str:
        parts = [f"'traces/{f}' using 1:{col} with lines title '{f[:-4]}'" for f in cells]
        return "plot " + ", \\\n     ".join(parts) + "\n"

    s = io.StringIO()
    s.write("# generated by dmra plot\n")
    s.write("set datafile separator ','\nset datafile commentschars '#'\n")
    s.write("set key autotitle columnhead\nset terminal pngcairo size 900,600\n")
    s.write("set xlabel 'slot'\n")
    s.write("set output 'time_avg_cost.png'\nset ylabel 'time-average cost'\n")
    s.write(plot_lines(9))
    s.write("set output 'time_avg_queue.png'\nset ylabel 'time-average queue length'\n")
    s.write(plot_lines(10))
    if (root / "ensemble.csv").exists():
        s.write("set output 'tradeoff.png'\nset xlabel 'K'\nset logscale x\n")
        s.write("set ylabel 'time-average cost'\nset y2label 'time-average queue'\nset y2tics\n")
        s.write("plot '< grep \"^DMRA,\" ensemble.csv' using 2:5:6 with yerrorlines title 'cost', \\\n"
                "     '< grep \"^DMRA,\" ensemble.csv' using 2:7:8 axes x1y2 with yerrorlines title 'queue'\n")
    return s.getvalue()
