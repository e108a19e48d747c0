"""Exact one-pass and multi-pass SGD on the least-squares problem.

The recurrence is run on the offset ``v = x - x~`` in K's eigenbasis with
pre-scaled samples ``m = a / sqrt(d)`` and ``eta = w / sqrt(d)``::

    v_k = (1 - gamma delta / d) v_{k-1} - gamma m (m . v_{k-1} - eta) - (gamma delta / d) x~

which is plain SGD with step ``gamma / d`` on ``f_i``.  Each step costs O(d).
"""

import warnings
from dataclasses import dataclass

import numpy as np

from .problem import stream_samples
from .trajectory import Recorder

__all__ = [
    "STRATEGIES",
    "IndexSchedule",
    "index_schedule",
    "sgd_step",
    "default_stride",
    "run_sgd",
    "check_initialization",
    "stopping_time_monitor",
]

STRATEGIES = ("one_pass", "with_replacement", "single_shuffle", "random_shuffle")


@dataclass(frozen=True)
class IndexSchedule:
    """Which sample each step uses."""

    strategy: str
    total_steps: int
    n: int

    def __post_init__(self):
        if self.strategy not in STRATEGIES:
            raise ValueError(f"unknown strategy {self.strategy!r}")
        if self.n < 1:
            raise ValueError("n must be at least 1")
        if self.total_steps < 0:
            raise ValueError("total_steps must be nonnegative")
        if self.strategy == "one_pass" and self.total_steps > self.n:
            raise ValueError(f"one_pass cannot take {self.total_steps} steps on {self.n} samples")

    def indices(self, rng=None):
        k, n = self.total_steps, self.n
        if self.strategy == "one_pass":
            return np.arange(k)
        if self.strategy == "single_shuffle":
            return np.arange(k) % n
        if self.strategy == "with_replacement":
            return rng.integers(0, n, size=k)
        epochs = -(-k // n)
        if epochs == 0:
            return np.zeros(0, dtype=int)
        return np.concatenate([rng.permutation(n) for _ in range(epochs)])[:k]


def index_schedule(strategy, n, total_steps, rng=None):
    """Iterator over the sample indices for ``total_steps`` steps."""
    return iter(IndexSchedule(strategy, total_steps, n).indices(rng).tolist())


def sgd_step(x, m, eta_k, gamma_step, delta, d, x_tilde):
    """One step of the renormalised recurrence; ``gamma_step = gamma / d``."""
    gamma = gamma_step * d
    v = x - x_tilde
    shrink = gamma * delta / d
    v_new = (1 - shrink) * v - gamma * m * (m @ v) - shrink * x_tilde + gamma * m * eta_k
    return v_new + x_tilde


def default_stride(d):
    return max(1, d // 50)


def check_initialization(x0, allow_large_init):
    """Initial points are expected inside the unit ball."""
    norm = float(np.linalg.norm(x0))
    if norm > 1 + 1e-12:
        if not allow_large_init:
            raise ValueError(f"||x0|| = {norm:.4g} > 1; pass allow_large_init=True to override")
        warnings.warn(f"||x0|| = {norm:.4g} exceeds 1", stacklevel=3)


def _sample_source(spec, rng, steps, data, strategy):
    scale = 1.0 / np.sqrt(spec.d)
    if data is None:
        if strategy != "one_pass":
            raise ValueError(f"{strategy} needs a materialised dataset")
        for rows, w in stream_samples(spec, rng, steps):
            M = rows * scale
            e = w * scale
            for j in range(M.shape[0]):
                yield M[j], e[j]
        return
    M = spec.to_eigen(data.rows) * scale
    e = data.noise * scale
    for i in IndexSchedule(strategy, steps, data.n).indices(rng):
        yield M[i], e[i]


def run_sgd(
    spec,
    x0,
    rng,
    *,
    steps=None,
    data=None,
    strategy="one_pass",
    stats=("population_risk",),
    stride=None,
    replica=0,
    seed=None,
    allow_large_init=False,
    strict=False,
    abort_risk=None,
):
    """Run SGD and record ``stats`` every ``stride`` steps at times ``k / d``.

    Parameters
    ----------
    spec : ProblemSpec
    x0 : array
        Initial point (original coordinates), ``||x0|| <= 1`` unless
        ``allow_large_init``.
    rng : numpy.random.Generator
        Supplies streamed samples (one-pass without ``data``) or sample
        indices (runs on a dataset).
    steps : int, optional
        Number of steps; defaults to ``data.n`` for one-pass on a dataset.
    data : Dataset, optional
        Materialised dataset; required by the multi-pass strategies.
    strategy : str
        One of :data:`STRATEGIES`.
    stats : sequence
        Statistic labels or :class:`QuadraticStatistic` objects.
    stride : int, optional
        Recording stride, default ``max(1, d // 50)``.  Step 0 and the final
        step are always recorded.
    strict : bool
        Stop as soon as ``||x_k - x~|| > d**epsilon``; the step index is
        stored as ``metadata["tau"]``.
    abort_risk : float, optional
        Stop at the first recorded step whose population risk exceeds this.

    Returns
    -------
    Trajectory
    """
    d = spec.d
    x0 = np.asarray(x0, dtype=float)
    check_initialization(x0, allow_large_init)
    if steps is None:
        if data is None:
            raise ValueError("steps is required for streamed runs")
        steps = data.n if strategy == "one_pass" else None
        if steps is None:
            raise ValueError("steps is required for multi-pass runs")
    if data is not None and data.d != d:
        raise ValueError("dataset dimension does not match the problem")
    if data is not None and strategy == "one_pass" and steps > data.n:
        raise ValueError(f"one_pass cannot take {steps} steps on {data.n} samples")
    stride = default_stride(d) if stride is None else int(stride)
    if stride < 1:
        raise ValueError("stride must be positive")

    eig_rows = noise = None
    if data is not None and "empirical_risk" in stats:
        eig_rows, noise = spec.to_eigen(data.rows), data.noise
    rec = Recorder(stats, spec, eig_rows, noise)

    gamma, delta = spec.gamma, spec.delta
    shrink = gamma * delta / d
    xt = spec.truth_eigen
    lam = spec.spectrum
    floor = 0.5 * spec.noise_std**2
    radius_sq = (d**spec.epsilon) ** 2
    v = spec.to_eigen(x0) - xt
    rec.record(0.0, v)
    tau = None
    aborted = False
    if strict and v @ v > radius_sq:
        tau = 0
    k = 0
    if tau is None:
        for k, (m, e) in enumerate(_sample_source(spec, rng, steps, data, strategy), start=1):
            r = m @ v - e
            if shrink:
                v = (1 - shrink) * v - (gamma * r) * m - shrink * xt
            else:
                v = v - (gamma * r) * m
            if strict and v @ v > radius_sq:
                tau = k
                rec.record(k / d, v)
                break
            if k % stride == 0 or k == steps:
                rec.record(k / d, v)
                if abort_risk is not None and 0.5 * float(lam @ (v * v)) + floor > abort_risk:
                    aborted = True
                    break
    meta = dict(
        spec_hash=spec.spec_hash(),
        seed=seed,
        gamma=gamma,
        stride=stride,
        strategy=strategy,
        steps=int(k),
        aborted=aborted,
    )
    if strict:
        meta["tau"] = tau
    return rec.trajectory("sgd", replica, meta)


def stopping_time_monitor(traj, epsilon, d):
    """First step ``k`` with ``||x_k - x~|| > d**epsilon``, or ``None``.

    Uses a live ``tau`` from a strict run when present; otherwise scans the
    recorded ``distance_sq_to_truth`` (exact only at stride 1).
    """
    if traj.metadata.get("tau") is not None:
        return traj.metadata["tau"]
    if "distance_sq_to_truth" not in traj.values:
        raise ValueError("stopping time needs distance_sq_to_truth recorded")
    dist = np.real(traj.values["distance_sq_to_truth"])
    hits = np.flatnonzero(dist > (d**epsilon) ** 2)
    if hits.size == 0:
        return None
    return int(round(traj.times[hits[0]] * d))
