"""Homogenized SGD integrated by Euler-Maruyama.

Population mode integrates

    dX = -gamma grad R(X) dt + gamma sqrt((2/d) P(X) K) dB

and empirical (multi-pass) mode swaps ``P, K, R`` for ``L, A^T A / n, f``.
Gaussian increments are drawn in the eigenbasis of the covariance in use,
where its square root is diagonal.
"""

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .problem import EmpiricalProblem, ProblemSpec
from .sgd import check_initialization
from .stats import statistic_evaluator
from .trajectory import Recorder, Trajectory

__all__ = [
    "MODES",
    "HsgdConfig",
    "default_step",
    "diffusion_factor",
    "hsgd_step",
    "run_hsgd",
    "NormBoundReport",
    "norm_bound_monitor",
]

MODES = ("population", "empirical")
SANITY_BOUND = 0.1


def default_step(spec):
    """``min(0.01, 0.1 / (gamma (||K|| + delta)))``."""
    scale = spec.gamma * (spec.norm_K + spec.delta)
    return 0.01 if scale == 0 else min(0.01, 0.1 / scale)


@dataclass(frozen=True)
class HsgdConfig:
    step_h: float
    horizon_T: float
    mode: str = "population"
    record_stride: int = 1

    def __post_init__(self):
        if self.mode not in MODES:
            raise ValueError(f"mode must be one of {MODES}")
        if not self.step_h > 0:
            raise ValueError("step_h must be positive")
        if self.step_h > self.horizon_T:
            raise ValueError("step_h must not exceed horizon_T")
        if self.record_stride < 1:
            raise ValueError("record_stride must be positive")

    @property
    def n_steps(self):
        return int(round(self.horizon_T / self.step_h))

    def check(self, source, strict=False):
        """Warn (or raise when ``strict``) if ``gamma h (||cov|| + delta) > 0.1``."""
        top = float(np.max(source.spectrum, initial=0.0))
        value = source.gamma * self.step_h * (top + source.delta)
        if value > SANITY_BOUND:
            msg = f"gamma*h*(||K||+delta) = {value:.3g} exceeds {SANITY_BOUND}"
            if strict:
                raise ValueError(msg)
            warnings.warn(msg, stacklevel=3)


def _risk_eigen(source, y):
    if isinstance(source, EmpiricalProblem):
        return source.risk_eigen(y)
    return 0.5 * float(source.spectrum @ (y * y)) + 0.5 * source.noise_std**2


def _coords(source, x):
    """State coordinates: offset from x~ in K's eigenbasis, or U^T x for a dataset."""
    if isinstance(source, EmpiricalProblem):
        return source.to_eigen(x)
    return source.to_eigen(x - source.ground_truth)


def _uncoords(source, y):
    if isinstance(source, EmpiricalProblem):
        return source.from_eigen(y)
    return source.from_eigen(y) + source.ground_truth


def diffusion_factor(source, x):
    """``(gamma * sqrt((2/d) risk(x)), sqrt(eigenvalues))`` of the noise term.

    ``source`` is a :class:`ProblemSpec` (population risk, K) or an
    :class:`EmpiricalProblem` (empirical risk, ``A^T A / n``).
    """
    if not isinstance(source, (ProblemSpec, EmpiricalProblem)):
        raise TypeError("empirical mode needs an EmpiricalProblem built from a dataset")
    risk = _risk_eigen(source, _coords(source, np.asarray(x, dtype=float)))
    scale = source.gamma * math.sqrt(max(2.0 * risk / source.d, 0.0))
    return scale, np.sqrt(source.spectrum)


def _step_eigen(source, y, h, xi, consts, noise_scale=1.0):
    gamma, lam, shift, sqrt_lam = consts
    risk = _risk_eigen(source, y)
    scale = noise_scale * gamma * math.sqrt(max(2.0 * risk / source.d, 0.0) * h)
    # drift = (lam + delta) y + shift, shift = delta x~ (population) or -U^T A^T b / n
    return y - (gamma * h) * (lam * y + shift) + scale * sqrt_lam * xi


def _constants(source):
    if isinstance(source, EmpiricalProblem):
        shift = -source.correlation
    else:
        shift = source.delta * source.truth_eigen
    return source.gamma, source.spectrum + source.delta, shift, np.sqrt(source.spectrum)


def hsgd_step(x, source, h, rng=None, *, size=None, noise=None):
    """One Euler-Maruyama step from ``x`` (original coordinates).

    ``size`` draws that many independent steps from the same ``x`` (result
    shape ``(size, d)``).  ``noise`` supplies the standard normal increments
    in the covariance eigenbasis instead of drawing them from ``rng``.
    """
    if not h > 0:
        raise ValueError("h must be positive")
    y = _coords(source, np.asarray(x, dtype=float))
    if noise is None:
        shape = source.d if size is None else (size, source.d)
        noise = rng.standard_normal(shape)
    return _uncoords(source, _step_eigen(source, y, h, np.asarray(noise), _constants(source)))


def run_hsgd(source, x0, config, rng, *, stats=("population_risk",), replica=0, seed=None,
             allow_large_init=False, strict=False, noise_scale=1.0):
    """Integrate HSGD to ``config.horizon_T`` and record ``stats``.

    ``noise_scale`` multiplies the diffusion coefficient; 0 gives the
    explicit Euler scheme for gradient flow.

    In empirical mode the population statistics are still available: the
    state is mapped to K's eigenbasis at recording times (O(d^2) each).
    ``empirical_risk`` is recorded only in empirical mode.
    """
    x0 = np.asarray(x0, dtype=float)
    check_initialization(x0, allow_large_init)
    empirical = isinstance(source, EmpiricalProblem)
    if empirical != (config.mode == "empirical"):
        raise ValueError(f"mode {config.mode!r} does not match the source type")
    config.check(source, strict=strict)
    spec = source.spec if empirical else source
    consts = _constants(source)
    y = _coords(source, x0)

    if empirical:
        to_pop = source.to_population
        xt = spec.truth_eigen
        evaluators = []
        for s in stats:
            if s == "empirical_risk":
                evaluators.append(("empirical_risk", source.risk_eigen))
            else:
                label, fn = statistic_evaluator(s, spec)
                evaluators.append((label, lambda yy, fn=fn: fn(to_pop @ yy - xt)))
        times, values = [], {label: [] for label, _ in evaluators}

        def record(t, state):
            times.append(t)
            for label, fn in evaluators:
                values[label].append(fn(state))
    else:
        rec = Recorder(stats, spec)
        record = rec.record

    h = config.step_h
    n_steps = config.n_steps
    record(0.0, y)
    for k in range(1, n_steps + 1):
        y = _step_eigen(source, y, h, rng.standard_normal(source.d), consts, noise_scale)
        if k % config.record_stride == 0 or k == n_steps:
            record(k * h, y)

    meta = dict(spec_hash=spec.spec_hash(), seed=seed, gamma=spec.gamma, step_h=h,
                stride=config.record_stride, mode=config.mode)
    if empirical:
        return Trajectory(np.array(times), values, "hsgd", replica, meta)
    return rec.trajectory("hsgd", replica, meta)


@dataclass(frozen=True)
class NormBoundReport:
    max_norm_sq: float
    flagged: bool
    first_flag_time: float = None


def norm_bound_monitor(traj, norm_K, d, C=None, exponent=0.1, threshold_scale=1.0):
    """Check ``||X_t||^2 <= e^{C t} d^{exponent}`` along a recorded path.

    ``C`` defaults to ``10 (1 + ||K||)``.  ``threshold_scale`` multiplies the
    bound (0 makes any nonzero path flag).
    """
    if "norm_sq" not in traj.values:
        raise ValueError("norm bound monitor needs norm_sq recorded")
    C = 10.0 * (1.0 + norm_K) if C is None else C
    norms = np.real(traj.values["norm_sq"])
    bound = threshold_scale * np.exp(C * traj.times) * float(d) ** exponent
    over = np.flatnonzero(norms > bound)
    first = float(traj.times[over[0]]) if over.size else None
    return NormBoundReport(float(np.max(norms)), bool(over.size), first)
