"""Experiment orchestration: replicas, comparisons, scaling studies and output files."""

import csv
import json
import math
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .config import ExperimentConfig
from .hsgd import HsgdConfig, default_step, run_hsgd
from .problem import EmpiricalProblem, build_problem, sample_dataset
from .rng import derive_stream
from .sgd import default_stride, run_sgd
from .trajectory import Trajectory
from .volterra import (
    DEFAULT_KERNEL_CHOICE,
    EmpiricalVolterraSolution,
    VolterraSolution,
    forcing_curves,
    limiting_risk,
    solve_empirical_volterra,
    solve_volterra,
    stability_threshold,
)

__all__ = [
    "CSV_HEADER",
    "SUMMARY_KEYS",
    "ComparisonReport",
    "ScalingReport",
    "UnstableStepError",
    "compare_trajectories",
    "fit_exponent",
    "scaling_study",
    "monte_carlo_risk_oracle",
    "initial_point",
    "volterra_trajectory",
    "run_engine",
    "run_experiment",
    "write_csv",
    "write_volterra_csv",
    "figure1_curves",
    "mean_trajectory",
]

CSV_HEADER = ("time", "statistic", "value", "replica", "source")
SUMMARY_KEYS = ("config_hash", "sup_error", "threshold", "exponent", "runtime_seconds")


class UnstableStepError(ValueError):
    """The step-size constant is at or above the stability threshold."""


@dataclass
class ComparisonReport:
    """Pointwise absolute differences of one statistic on ``a``'s time grid."""

    times: np.ndarray
    errors: np.ndarray
    sup_error: float
    statistic: str
    seeds: tuple = ()
    exponent: float = None


def _reference_curve(b, statistic):
    if isinstance(b, (VolterraSolution, EmpiricalVolterraSolution)):
        return b.grid, b.curve(statistic)
    if statistic not in b.values:
        raise KeyError(f"statistic {statistic!r} missing from {b.source} trajectory")
    return b.times, np.real(b.values[statistic])


def compare_trajectories(a, b, statistic):
    """Sup and per-time ``|a - b|`` after interpolating ``b`` linearly onto ``a``'s times.

    Only times of ``a`` inside ``b``'s range are compared.
    """
    if statistic not in a.values:
        raise KeyError(f"statistic {statistic!r} missing from {a.source} trajectory")
    tb, yb = _reference_curve(b, statistic)
    ta = a.times
    tol = 1e-9 * max(1.0, float(tb[-1]))
    mask = (ta >= tb[0] - tol) & (ta <= tb[-1] + tol)
    if not np.any(mask):
        raise ValueError("trajectories do not overlap in time")
    ref = np.interp(ta[mask], tb, yb)
    errors = np.abs(np.real(a.values[statistic])[mask] - ref)
    seeds = tuple(s for s in (a.metadata.get("seed"), getattr(b, "metadata", {}).get("seed")) if s is not None)
    return ComparisonReport(ta[mask], errors, float(np.max(errors)), statistic, seeds)


def mean_trajectory(trajs, statistic):
    """Replica average of one statistic; all trajectories must share a grid."""
    times = trajs[0].times
    for t in trajs[1:]:
        if not np.array_equal(t.times, times):
            raise ValueError("replicas are on different time grids")
    stack = np.stack([np.real(t.values[statistic]) for t in trajs])
    return Trajectory(times, {statistic: stack.mean(axis=0)}, trajs[0].source, -1,
                      {"replicas": len(trajs), "stderr": stack.std(axis=0, ddof=1) / math.sqrt(len(trajs))
                       if len(trajs) > 1 else np.zeros(times.size)})


def fit_exponent(dims, errors):
    """Least-squares slope of ``log(errors)`` against ``log(dims)``."""
    dims = np.asarray(dims, dtype=float)
    errors = np.asarray(errors, dtype=float)
    if np.unique(dims).size < 3:
        raise ValueError("a scaling fit needs at least 3 distinct dimensions")
    slope, _ = np.polyfit(np.log(dims), np.log(errors), 1)
    return float(slope)


@dataclass
class ScalingReport:
    dims: tuple
    medians: np.ndarray
    errors: dict
    exponent: float
    seeds: tuple = ()
    threshold: float = None
    extra: dict = field(default_factory=dict)


def scaling_study(problem_config, dims, replicas, horizon=2.0, master_seed=0, statistic="population_risk",
                  kernel_choice=DEFAULT_KERNEL_CHOICE, x0="zero"):
    """Median sup-error of one-pass SGD against the Volterra curve, for each ``d``.

    The same ``problem_config`` is rebuilt at each dimension; SGD runs
    ``horizon * d`` streamed steps.  Refuses (``UnstableStepError``) if the
    step size is not below the stability threshold.
    """
    dims = tuple(int(d) for d in dims)
    if len(set(dims)) < 3:
        raise ValueError("a scaling study needs at least 3 distinct dimensions")
    errors = {}
    threshold = None
    for d in dims:
        spec = build_problem(dict(problem_config, dim=d))
        threshold = stability_threshold(spec, kernel_choice)
        if spec.gamma >= threshold:
            raise UnstableStepError(f"gamma={spec.gamma} is not below the stability threshold {threshold:.6g}")
        start = initial_point(spec, x0)
        ref = solve_volterra(spec, start, horizon, kernel_choice=kernel_choice)
        steps = int(round(horizon * d))
        errs = []
        for r in range(replicas):
            traj = run_sgd(spec, start, derive_stream(master_seed, f"scaling-sgd-d{d}", r), steps=steps,
                           stats=(statistic,), replica=r, seed=master_seed)
            errs.append(compare_trajectories(traj, ref, statistic).sup_error)
        errors[d] = np.array(errs)
    medians = np.array([np.median(errors[d]) for d in dims])
    return ScalingReport(dims, medians, errors, fit_exponent(dims, medians), (master_seed,), threshold)


def monte_carlo_risk_oracle(spec, x, samples, rng, batch=1 << 16):
    """Fresh-sample estimate of ``0.5 E (a . x - b)^2`` and its standard error.

    Samples are generated in the original coordinates, independently of the
    closed-form risk used by the engines.
    """
    if samples < 100:
        raise ValueError("the oracle needs at least 100 samples")
    x = np.asarray(x, dtype=float)
    root_cov = spec.eigenbasis * spec.sqrt_spectrum  # a = Q sqrt(L) u
    total = 0.0
    total_sq = 0.0
    done = 0
    while done < samples:
        c = min(batch, samples - done)
        a = rng.standard_normal((c, spec.d)) @ root_cov.T
        b = a @ spec.ground_truth + spec.noise_std * rng.standard_normal(c)
        loss = 0.5 * (a @ x - b) ** 2
        total += float(loss.sum())
        total_sq += float(loss @ loss)
        done += c
    mean = total / samples
    var = max(total_sq / samples - mean * mean, 0.0)
    return mean, math.sqrt(var / (samples - 1))


# --- orchestration -------------------------------------------------------------------


def initial_point(spec, x0):
    if x0 is None or (isinstance(x0, str) and x0 == "zero"):
        return np.zeros(spec.d)
    x0 = np.asarray(x0, dtype=float)
    if x0.shape != (spec.d,):
        raise ValueError("run.x0 has the wrong dimension")
    return x0


def volterra_trajectory(sol, source="volterra"):
    if isinstance(sol, EmpiricalVolterraSolution):
        values = {"population_risk": sol.population, "empirical_risk": sol.empirical}
    else:
        values = {"population_risk": sol.psi, "regularized_risk": sol.omega}
    return Trajectory(sol.grid, values, source, 0, {"delta_t": sol.delta_t})


class _Context:
    """Objects shared read-only by the tasks of one experiment."""

    def __init__(self, cfg):
        self.cfg = cfg
        self.spec = build_problem(cfg.problem)
        self.x0 = initial_point(self.spec, cfg.x0)
        self._dataset = None
        self._empirical = None

    @property
    def needs_dataset(self):
        cfg = self.cfg
        return (cfg.strategy != "one_pass" and "sgd" in cfg.engines) or (
            cfg.hsgd_mode == "empirical" and "hsgd" in cfg.engines) or "volterra_empirical" in cfg.engines

    def dataset(self):
        if self._dataset is None:
            n = self.cfg.n if self.cfg.n is not None else self.spec.d
            self._dataset = sample_dataset(self.spec, n, derive_stream(self.cfg.master_seed, "dataset", 0))
        return self._dataset

    def empirical(self):
        if self._empirical is None:
            self._empirical = EmpiricalProblem.from_dataset(self.spec, self.dataset())
        return self._empirical


def _sgd_task(ctx, replica):
    cfg, spec = ctx.cfg, ctx.spec
    steps = int(round(cfg.horizon * spec.d))
    stats = cfg.stats
    if cfg.strategy == "one_pass":
        if cfg.n is not None:
            steps = min(steps, cfg.n)
        data = None
    else:
        data = ctx.dataset()
    return run_sgd(spec, ctx.x0, derive_stream(cfg.master_seed, "sgd", replica), steps=steps, data=data,
                   strategy=cfg.strategy, stats=stats, stride=cfg.stride, replica=replica, seed=cfg.master_seed)


def _hsgd_task(ctx, replica):
    cfg, spec = ctx.cfg, ctx.spec
    source = ctx.empirical() if cfg.hsgd_mode == "empirical" else spec
    h = cfg.hsgd_step if cfg.hsgd_step is not None else default_step(spec)
    stride = cfg.hsgd_stride if cfg.hsgd_stride is not None else max(1, int(round(1.0 / (50 * h))))
    hc = HsgdConfig(h, cfg.horizon, cfg.hsgd_mode, stride)
    stats = tuple(s for s in cfg.stats if s != "empirical_risk" or cfg.hsgd_mode == "empirical")
    return run_hsgd(source, ctx.x0, hc, derive_stream(cfg.master_seed, "hsgd", replica), stats=stats,
                    replica=replica, seed=cfg.master_seed)


def run_engine(ctx, engine, replica=0):
    cfg, spec = ctx.cfg, ctx.spec
    if engine == "sgd":
        return _sgd_task(ctx, replica)
    if engine == "hsgd":
        return _hsgd_task(ctx, replica)
    if engine == "volterra":
        return volterra_trajectory(solve_volterra(spec, ctx.x0, cfg.horizon, cfg.volterra_dt, cfg.kernel_choice))
    if engine == "volterra_empirical":
        sol = solve_empirical_volterra(ctx.empirical(), ctx.x0, cfg.horizon, cfg.volterra_dt)
        return volterra_trajectory(sol, "volterra_empirical")
    if engine == "gradient_flow":
        dt = cfg.volterra_dt or 0.01
        grid = np.arange(int(round(cfg.horizon / dt)) + 1) * dt
        P, R = forcing_curves(spec, ctx.x0, grid)
        return Trajectory(grid, {"population_risk": P, "regularized_risk": R}, "gradient_flow")
    raise ValueError(f"unknown engine {engine!r}")


_STOCHASTIC = ("sgd", "hsgd")


def _fmt(x):
    return repr(float(np.real(x)))


def write_csv(path, trajectories):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_HEADER)
        for traj in trajectories:
            for t, label, value, replica, source in traj.rows():
                w.writerow((_fmt(t), label, _fmt(value), replica, source))
    return path


def write_volterra_csv(path, sol):
    path = Path(path)
    with path.open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("t", "psi", "omega", "forcing_psi", "forcing_omega"))
        for row in zip(sol.grid, sol.psi, sol.omega, sol.forcing_psi, sol.forcing_omega):
            w.writerow(tuple(_fmt(v) for v in row))
    return path


def _json_float(x):
    if x is None:
        return None
    x = float(x)
    return x if math.isfinite(x) else str(x)


def _comparisons(cfg, results):
    out = {}
    for a_name, b_name in cfg.compare_pairs:
        if a_name not in results or b_name not in results:
            raise ValueError(f"compare.pairs references an engine that did not run: {a_name}:{b_name}")
        ref_list = results[b_name]
        per = []
        for i, traj in enumerate(results[a_name]):
            ref = ref_list[i] if len(ref_list) == len(results[a_name]) else ref_list[0]
            per.append(compare_trajectories(traj, ref, cfg.compare_statistic).sup_error)
        entry = {"per_replica": [_json_float(v) for v in per], "median": _json_float(np.median(per)),
                 "max": _json_float(np.max(per))}
        if len(results[a_name]) > 1:
            mean = mean_trajectory(results[a_name], cfg.compare_statistic)
            entry["replica_mean"] = _json_float(compare_trajectories(mean, ref_list[0], cfg.compare_statistic).sup_error)
        out[f"{a_name}:{b_name}"] = entry
    return out


def run_experiment(cfg, out_dir=None, threads=1, timing=False):
    """Run every engine in ``cfg`` and write ``trajectories.csv`` and ``summary.json``.

    Output ordering is by (engine order in the config, replica) regardless
    of ``threads``.  ``runtime_seconds`` is ``null`` unless ``timing`` is set,
    which keeps repeated runs byte-identical.
    """
    if not isinstance(cfg, ExperimentConfig):
        cfg = ExperimentConfig.from_flat(cfg)
    started = time.perf_counter()
    ctx = _Context(cfg)
    if ctx.needs_dataset:
        ctx.dataset()
        if cfg.hsgd_mode == "empirical" or "volterra_empirical" in cfg.engines:
            ctx.empirical()
    tasks = []
    for engine in cfg.engines:
        count = cfg.replicas if engine in _STOCHASTIC else 1
        tasks.extend((engine, r) for r in range(count))
    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            trajs = list(pool.map(lambda task: run_engine(ctx, *task), tasks))
    else:
        trajs = [run_engine(ctx, *task) for task in tasks]
    results = {}
    for (engine, _), traj in zip(tasks, trajs):
        results.setdefault(engine, []).append(traj)

    spec = ctx.spec
    comparisons = _comparisons(cfg, results)
    summary = {
        "config_hash": cfg.config_hash(),
        "spec_hash": spec.spec_hash(),
        "sup_error": {k: v["median"] for k, v in comparisons.items()},
        "comparisons": comparisons,
        "threshold": _json_float(stability_threshold(spec, cfg.kernel_choice)),
        "limiting_risk": _json_float(limiting_risk(spec, kernel_choice=cfg.kernel_choice)),
        "exponent": None,
        "kernel_choice": cfg.kernel_choice,
        "seeds": {"master_seed": cfg.master_seed, "replicas": cfg.replicas,
                  "streams": sorted({f"{e}/{r}" for e, r in tasks if e in _STOCHASTIC})},
        "runtime_seconds": None,
    }
    if timing:
        summary["runtime_seconds"] = time.perf_counter() - started
    out_dir = out_dir or cfg.out_dir
    if out_dir is not None:
        out = Path(out_dir)
        out.mkdir(parents=True, exist_ok=True)
        write_csv(out / "trajectories.csv", trajs)
        if "volterra" in cfg.engines:
            sol = solve_volterra(spec, ctx.x0, cfg.horizon, cfg.volterra_dt, cfg.kernel_choice)
            write_volterra_csv(out / "volterra.csv", sol)
        (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary, trajs


# --- streaming vs multi-pass curves ---------------------------------------------------------


def figure1_curves(spec, dataset_ratios, horizon, master_seed, x0=None, kernel_choice=DEFAULT_KERNEL_CHOICE,
                   stride=None):
    """Streaming vs multi-pass risk curves for a range of dataset sizes.

    Returns trajectories for five families: ``sgd_streaming`` (one long
    one-pass run), ``volterra_streaming`` (its deterministic curve),
    ``sgd_multipass`` and ``volterra_multipass`` (with-replacement SGD and
    the expected multi-pass HSGD risk, one statistic per dataset size), and
    ``streaming_levels`` (the streaming risk after exactly ``n`` samples,
    plotted at ``t = n / d``).
    """
    d = spec.d
    x0 = np.zeros(d) if x0 is None else np.asarray(x0, dtype=float)
    stride = default_stride(d) if stride is None else stride
    steps = int(round(horizon * d))
    sizes = sorted({int(round(r * d)) for r in dataset_ratios})
    # stride 1 near each level so that step n is recorded exactly
    stream = run_sgd(spec, x0, derive_stream(master_seed, "figure1-stream", 0),
                     steps=max(steps, max(sizes)), stats=("population_risk",), stride=1, seed=master_seed)
    levels = np.array([stream.values["population_risk"][n] for n in sizes])
    keep = np.zeros(stream.times.size, dtype=bool)
    keep[::stride] = True
    keep[-1] = True
    stream_thin = Trajectory(stream.times[keep], {"population_risk": stream.values["population_risk"][keep]},
                             "sgd_streaming", 0, stream.metadata)
    vol = solve_volterra(spec, x0, max(horizon, max(sizes) / d), kernel_choice=kernel_choice)
    out = [stream_thin, volterra_trajectory(vol, "volterra_streaming")]
    level_vals = {"population_risk[sgd]": levels,
                  "population_risk[volterra]": np.interp(np.array(sizes) / d, vol.grid, vol.psi)}
    for n in sizes:
        data = sample_dataset(spec, n, derive_stream(master_seed, "figure1-dataset", n))
        mp = run_sgd(spec, x0, derive_stream(master_seed, "figure1-multipass", n), steps=steps, data=data,
                     strategy="with_replacement", stats=("population_risk", "empirical_risk"), stride=stride,
                     seed=master_seed)
        label = f"[n={n}]"
        out.append(Trajectory(mp.times, {f"population_risk{label}": mp.values["population_risk"],
                                         f"empirical_risk{label}": mp.values["empirical_risk"]},
                              "sgd_multipass", 0, mp.metadata))
        emp = solve_empirical_volterra(EmpiricalProblem.from_dataset(spec, data), x0, horizon)
        out.append(Trajectory(emp.grid, {f"population_risk{label}": emp.population,
                                         f"empirical_risk{label}": emp.empirical}, "volterra_multipass"))
    out.append(Trajectory(np.array(sizes) / d, level_vals, "streaming_levels"))
    return out
