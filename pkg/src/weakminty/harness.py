"""Multi-seed experiment execution, aggregation and persistence.

A JSON experiment config names a problem, a list of algorithms, the stepsize
gamma, a schedule, the noise level and the seed/iteration counts.  Running it
produces per-seed trajectories plus per-iteration aggregates (mean, median,
10/90 percentiles) thinned geometrically to at most 2000 output rows, written
as one CSV per (algorithm, metric) and one figure per metric.
"""

from __future__ import annotations

import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .algorithms import AlgorithmSpec, PdhgConfig, PdhgLipschitz, Trajectory, run_batch, validate_pairing
from .problems import Problem, make_problem
from .schedules import Schedule

MAX_OUTPUT_ROWS = 2000


class ConfigError(ValueError):
    """Invalid experiment configuration; message carries the field path."""


@dataclass(frozen=True)
class ExperimentConfig:
    problem_name: str
    problem_params: dict
    algorithms: tuple[AlgorithmSpec, ...]
    schedule: Schedule
    sigma: float
    n_iters: int
    n_seeds: int
    base_seed: int
    metrics: tuple[str, ...]
    z0: tuple[float, ...] | None = None
    label: str = "experiment"
    noise_seed: int = 0

    @classmethod
    def from_dict(cls, raw: dict, *, path: str = "") -> "ExperimentConfig":
        def fail(fieldpath, msg):
            raise ConfigError(f"{path}{fieldpath}: {msg}")

        def need(d, key, typ, fieldpath):
            if key not in d:
                fail(f"{fieldpath}{key}", "missing required field")
            val = d[key]
            if typ is float and isinstance(val, int):
                val = float(val)
            if not isinstance(val, typ):
                fail(f"{fieldpath}{key}", f"expected {typ.__name__}, got {type(val).__name__}")
            return val

        raw = dict(raw)
        prob = need(raw, "problem", dict, "")
        name = need(prob, "name", str, "problem.")
        params = {k: v for k, v in prob.items() if k != "name"}

        gamma = need(raw, "gamma", float, "")
        algs_raw = need(raw, "algorithms", list, "")
        if not algs_raw:
            fail("algorithms", "must name at least one algorithm")
        algs = []
        for i, entry in enumerate(algs_raw):
            if isinstance(entry, str):
                entry = {"name": entry}
            if not isinstance(entry, dict):
                fail(f"algorithms[{i}]", "expected a name or an object")
            aname = need(entry, "name", str, f"algorithms[{i}].")
            agamma = float(entry.get("gamma", gamma))
            pdhg = None
            if "pdhg" in entry or aname == "np-pdeg":
                pcfg = entry.get("pdhg", {})
                theta = float(pcfg.get("theta", 1.0))
                g1 = pcfg.get("gamma1", agamma)
                g2 = pcfg.get("gamma2", agamma)
                dims = pcfg.get("dims")
                if dims is None:
                    fail(f"algorithms[{i}].pdhg.dims", "missing [dim_x, dim_y]")
                lips = PdhgLipschitz(**pcfg["lipschitz"]) if "lipschitz" in pcfg else None
                g1 = np.asarray(g1, dtype=float) * np.eye(dims[0]) if np.isscalar(g1) else np.asarray(g1)
                g2 = np.asarray(g2, dtype=float) * np.eye(dims[1]) if np.isscalar(g2) else np.asarray(g2)
                pdhg = PdhgConfig(gamma1=g1, gamma2=g2, theta=theta, lips=lips)
            try:
                algs.append(AlgorithmSpec(name=aname, gamma=agamma, pdhg=pdhg))
            except ValueError as exc:
                fail(f"algorithms[{i}]", str(exc))

        sched_raw = need(raw, "schedule", dict, "")
        try:
            schedule = Schedule.from_dict(sched_raw)
        except (ValueError, KeyError) as exc:
            fail("schedule", str(exc))

        sigma = float(raw.get("sigma", 0.0))
        if sigma < 0:
            fail("sigma", "must be nonnegative")
        n_iters = need(raw, "n_iters", int, "")
        if n_iters < 1:
            fail("n_iters", "must be >= 1")
        n_seeds = int(raw.get("n_seeds", 20))
        if n_seeds < 1:
            fail("n_seeds", "must be >= 1")
        base_seed = int(raw.get("base_seed", 0))
        metrics = tuple(raw.get("metrics", ()))
        z0 = raw.get("z0")
        if z0 is not None:
            z0 = tuple(float(v) for v in z0)
        label = str(raw.get("label", name))

        known = {
            "problem", "gamma", "algorithms", "schedule", "sigma", "n_iters",
            "n_seeds", "base_seed", "metrics", "z0", "label",
        }
        unknown = sorted(set(raw) - known)
        if unknown:
            fail(unknown[0], "unknown field")
        return cls(
            problem_name=name,
            problem_params=params,
            algorithms=tuple(algs),
            schedule=schedule,
            sigma=sigma,
            n_iters=n_iters,
            n_seeds=n_seeds,
            base_seed=base_seed,
            metrics=metrics,
            z0=z0,
            label=label,
        )

    def build_problem(self) -> Problem:
        problem = make_problem(self.problem_name, **self.problem_params)
        if self.sigma > 0:
            problem = problem.with_gaussian_noise(self.sigma, rng_seed=self.noise_seed)
        return problem

    def schedule_for(self, name: str) -> Schedule:
        """Fixed-stepsize variants run at the base schedule's alpha_0."""
        if name in ("sf-eg+", "sf-peg+"):
            return Schedule.constant(self.schedule.first())
        return self.schedule


@dataclass
class MetricTable:
    ks: np.ndarray
    mean: np.ndarray
    median: np.ndarray
    p10: np.ndarray
    p90: np.ndarray


@dataclass
class AggregateResult:
    config: ExperimentConfig
    tables: dict[str, dict[str, MetricTable]]  # algorithm -> metric -> table
    statuses: dict[str, tuple[str, ...]]
    trajectories: dict[str, list[Trajectory]] = field(default_factory=dict)


def geometric_subsample(n_last: int, max_rows: int = MAX_OUTPUT_ROWS) -> np.ndarray:
    """Geometrically spaced iterate indices including 0 and n_last."""
    if n_last <= 0:
        return np.array([0], dtype=np.int64)
    if n_last + 1 <= max_rows:
        return np.arange(n_last + 1, dtype=np.int64)
    grid = np.geomspace(1.0, float(n_last), max_rows - 1)
    ks = np.unique(np.concatenate([[0], np.round(grid).astype(np.int64)]))
    return np.minimum(ks, n_last)


def _aggregate(trajectories: list[Trajectory], n_iters: int) -> dict[str, MetricTable]:
    names = sorted({m for t in trajectories for m in t.metrics})
    tables = {}
    for name in names:
        limit = n_iters if name == "tz_dist_sq" else n_iters + 1
        ks = geometric_subsample(limit - 1)
        rows_mean, rows_med, rows_p10, rows_p90 = [], [], [], []
        for k in ks:
            vals = np.array([t.metrics[name][k] for t in trajectories if len(t.metrics[name]) > k])
            vals = vals[np.isfinite(vals)]
            if vals.size == 0:
                rows_mean.append(np.nan), rows_med.append(np.nan)
                rows_p10.append(np.nan), rows_p90.append(np.nan)
                continue
            rows_mean.append(float(vals.mean()))
            rows_med.append(float(np.median(vals)))
            rows_p10.append(float(np.percentile(vals, 10)))
            rows_p90.append(float(np.percentile(vals, 90)))
        tables[name] = MetricTable(
            ks=ks,
            mean=np.array(rows_mean),
            median=np.array(rows_med),
            p10=np.array(rows_p10),
            p90=np.array(rows_p90),
        )
    return tables


def _max_workers(n_jobs: int) -> int:
    cap = os.environ.get("WEAKMINTY_THREADS")
    if cap:
        try:
            return max(1, min(n_jobs, int(cap)))
        except ValueError:
            raise ConfigError(f"WEAKMINTY_THREADS={cap!r} is not an integer") from None
    return max(1, min(n_jobs, os.cpu_count() or 1))


def run_experiment(cfg: ExperimentConfig, *, keep_trajectories: bool = True) -> AggregateResult:
    """Run every algorithm of the config over seeds base_seed..base_seed+n-1.

    Seeds advance in lockstep per algorithm; algorithms run in parallel
    threads (capped by WEAKMINTY_THREADS).  Aggregation order is fixed by the
    config, so output is independent of scheduling.
    """
    problem = cfg.build_problem()
    for spec in cfg.algorithms:
        validate_pairing(problem, spec.name)
    metrics = list(cfg.metrics) if cfg.metrics else None
    seeds = [cfg.base_seed + i for i in range(cfg.n_seeds)]

    def job(spec: AlgorithmSpec) -> list[Trajectory]:
        return run_batch(
            problem,
            spec,
            cfg.schedule_for(spec.name),
            cfg.n_iters,
            seeds,
            z0=np.asarray(cfg.z0, dtype=float) if cfg.z0 is not None else None,
            metrics=metrics,
        )

    with ThreadPoolExecutor(max_workers=_max_workers(len(cfg.algorithms))) as pool:
        results = list(pool.map(job, cfg.algorithms))

    tables, statuses, trajs = {}, {}, {}
    for spec, batch in zip(cfg.algorithms, results):
        tables[spec.name] = _aggregate(batch, cfg.n_iters)
        statuses[spec.name] = tuple(t.status for t in batch)
        if keep_trajectories:
            trajs[spec.name] = batch
    return AggregateResult(config=cfg, tables=tables, statuses=statuses, trajectories=trajs)


def _slug(name: str) -> str:
    return name.replace("+", "plus").replace("/", "-")


def write_csv(result: AggregateResult, out_dir) -> list[Path]:
    """One CSV per (algorithm, metric): header k,mean,median,p10,p90 with 12+
    significant digits, rows sorted by k."""
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    if not result.tables or all(not t for t in result.tables.values()):
        raise ValueError("no metrics selected")
    written = []
    for alg, metrics in result.tables.items():
        if not metrics:
            raise ValueError("no metrics selected")
        for metric, table in metrics.items():
            path = out_dir / f"{result.config.label}__{_slug(alg)}__{metric}.csv"
            try:
                with open(path, "w") as fh:
                    fh.write("k,mean,median,p10,p90\n")
                    for i, k in enumerate(table.ks):
                        fh.write(
                            f"{int(k)},{table.mean[i]:.14g},{table.median[i]:.14g},"
                            f"{table.p10[i]:.14g},{table.p90[i]:.14g}\n"
                        )
            except OSError as exc:
                raise OSError(f"failed writing {path}: {exc}") from exc
            written.append(path)
    return written


def read_csv(path) -> MetricTable:
    """Parse back a metric CSV written by write_csv."""
    rows = np.genfromtxt(path, delimiter=",", names=True)
    rows = np.atleast_1d(rows)
    return MetricTable(
        ks=rows["k"].astype(np.int64),
        mean=rows["mean"],
        median=rows["median"],
        p10=rows["p10"],
        p90=rows["p90"],
    )


def load_config(path) -> list[ExperimentConfig]:
    """Load a config file holding one experiment object or a list of panels."""
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"config file not found: {path}")
    with open(path) as fh:
        try:
            raw = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})") from exc
    panels = raw if isinstance(raw, list) else [raw]
    return [ExperimentConfig.from_dict(p, path=f"{path.name}[{i}]." if len(panels) > 1 else "") for i, p in enumerate(panels)]
