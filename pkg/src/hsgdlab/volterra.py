"""Gradient flow and the convolution Volterra equations for the expected risks.

The expected HSGD risks satisfy

    Psi(t)   = P(X(t)) + int_0^t k(t - s; M_psi)   Psi(s) ds
    Omega(t) = R(X(t)) + int_0^t k(t - s; M_omega) Psi(s) ds

with ``X`` the gradient flow of ``R`` at rate ``gamma`` and
``k(t; M) = (gamma^2 / d) tr(K M exp(-2 gamma t (K + delta I)))``.  Which of
``grad^2 R = K + delta`` and ``grad^2 P = K`` multiplies ``Psi`` in which
row is selectable through ``kernel_choice``:

``"as_printed"``  M_psi = K + delta, M_omega = K
``"swapped"``     M_psi = K,         M_omega = K + delta

Only ``swapped`` reproduces the second moments of the diffusion when
``delta > 0`` (see ``scripts/kernel_choice_study.py``), so it is the default.
The two coincide for ``delta = 0``.
"""

import math
from dataclasses import dataclass

import numpy as np
from scipy import integrate, optimize

from .stats import population_risk, regularized_risk

__all__ = [
    "KERNEL_CHOICES",
    "DEFAULT_KERNEL_CHOICE",
    "StepTooLargeError",
    "KernelSpec",
    "VolterraSolution",
    "EmpiricalVolterraSolution",
    "gradient_flow",
    "flow_offsets",
    "forcing",
    "forcing_curves",
    "kernel",
    "kernel_pair",
    "kernel_integral",
    "kernel_integral_numeric",
    "default_dt",
    "solve_renewal",
    "trapezoid_convolution",
    "solve_volterra",
    "solve_empirical_volterra",
    "stability_threshold",
    "limiting_risk",
]

KERNEL_CHOICES = ("as_printed", "swapped")
DEFAULT_KERNEL_CHOICE = "swapped"
M_KINDS = ("hess_R", "hess_P")
TAIL_TOL = 1e-12


class StepTooLargeError(ValueError):
    """The implicit trapezoid diagonal coefficient is not positive."""


@dataclass(frozen=True)
class KernelSpec:
    """``m_kind`` selects M: ``hess_R`` (K + delta I) or ``hess_P`` (K)."""

    m_kind: str

    def __post_init__(self):
        if self.m_kind not in M_KINDS:
            raise ValueError(f"m_kind must be one of {M_KINDS}")

    def weights(self, spec):
        return spec.spectrum + spec.delta if self.m_kind == "hess_R" else spec.spectrum


def kernel_pair(kernel_choice):
    """``(KernelSpec for Psi, KernelSpec for Omega)``."""
    if kernel_choice == "as_printed":
        return KernelSpec("hess_R"), KernelSpec("hess_P")
    if kernel_choice == "swapped":
        return KernelSpec("hess_P"), KernelSpec("hess_R")
    raise ValueError(f"kernel_choice must be one of {KERNEL_CHOICES}")


@dataclass
class VolterraSolution:
    grid: np.ndarray
    psi: np.ndarray
    omega: np.ndarray
    forcing_psi: np.ndarray
    forcing_omega: np.ndarray
    delta_t: float
    kernel_choice: str

    def curve(self, label):
        if label == "population_risk":
            return self.psi
        if label == "regularized_risk":
            return self.omega
        raise KeyError(f"Volterra solution has no statistic {label!r}")


@dataclass
class EmpiricalVolterraSolution:
    """Expected empirical and population risks of multi-pass HSGD on a fixed dataset."""

    grid: np.ndarray
    empirical: np.ndarray
    population: np.ndarray
    forcing_empirical: np.ndarray
    forcing_population: np.ndarray
    delta_t: float

    def curve(self, label):
        if label == "empirical_risk":
            return self.empirical
        if label == "population_risk":
            return self.population
        raise KeyError(f"empirical Volterra solution has no statistic {label!r}")


# --- gradient flow -------------------------------------------------------------


def _decay_and_target(rates, shift):
    """Per-coordinate fixed point of ``dv/dt = -gamma (rates v + shift)``."""
    target = np.zeros_like(shift)
    np.divide(-shift, rates, out=target, where=rates > 0)
    return target


def flow_offsets(spec, x0, times):
    """Gradient-flow offsets ``v(t) = X(t) - x~`` in K's eigenbasis, shape ``(len(times), d)``.

    Coordinatewise ``v_i(t) = e^{-gamma t (l_i + delta)} v_i(0)
    + (e^{-gamma t (l_i + delta)} - 1) delta x~_i / (l_i + delta)``.
    """
    times = np.atleast_1d(np.asarray(times, dtype=float))
    if np.any(times < 0):
        raise ValueError("t must be nonnegative")
    rates = spec.spectrum + spec.delta
    v0 = spec.to_eigen(np.asarray(x0, dtype=float) - spec.ground_truth)
    target = _decay_and_target(rates, spec.delta * spec.truth_eigen)
    decay = np.exp(-spec.gamma * np.outer(times, rates))
    return decay * (v0 - target) + target


def gradient_flow(spec, x0, t):
    """Gradient flow of the regularised risk at rate ``gamma``, run for time ``t``."""
    if t < 0:
        raise ValueError("t must be nonnegative")
    return spec.from_eigen(flow_offsets(spec, x0, [t])[0]) + spec.ground_truth


def forcing(spec, x0, t):
    """``(P, R)`` at the gradient-flow point after time ``t``."""
    x = gradient_flow(spec, x0, t)
    return population_risk(spec, x), regularized_risk(spec, x)


def forcing_curves(spec, x0, times, chunk=512):
    """Vectorised :func:`forcing` over a grid; O(d) per time."""
    times = np.asarray(times, dtype=float)
    lam = spec.spectrum
    xt = spec.truth_eigen
    floor = 0.5 * spec.noise_std**2
    P = np.empty(times.size)
    R = np.empty(times.size)
    for s in range(0, times.size, chunk):
        v = flow_offsets(spec, x0, times[s:s + chunk])
        P[s:s + chunk] = 0.5 * (v * v) @ lam + floor
        x = v + xt
        R[s:s + chunk] = P[s:s + chunk] + 0.5 * spec.delta * np.einsum("ij,ij->i", x, x)
    return P, R


# --- kernel ----------------------------------------------------------------------


def kernel(spec, kspec, t):
    """``(gamma^2 / d) sum_i l_i m_i exp(-2 gamma t (l_i + delta))`` (vectorised in ``t``)."""
    t = np.asarray(t, dtype=float)
    lam = spec.spectrum
    w = lam * kspec.weights(spec)
    expo = np.exp(-2.0 * spec.gamma * np.multiply.outer(t, lam + spec.delta))
    out = (spec.gamma**2 / spec.d) * (expo @ w)
    return float(out) if out.ndim == 0 else out


def kernel_integral(spec, kspec, gamma=None):
    """Closed form of ``int_0^inf k(t; M) dt = (gamma / 2d) sum l_i m_i / (l_i + delta)``.

    Terms with ``l_i + delta = 0`` vanish identically.  Linear in ``gamma``.
    """
    gamma = spec.gamma if gamma is None else gamma
    lam = spec.spectrum
    w = lam * kspec.weights(spec)
    rates = lam + spec.delta
    ratio = np.zeros_like(w)
    np.divide(w, rates, out=ratio, where=rates > 0)
    return gamma / (2 * spec.d) * float(np.sum(ratio))


def kernel_integral_numeric(spec, kspec, gamma=None):
    """Adaptive quadrature of the kernel; the upper limit doubles until the tail is below 1e-12."""
    s = spec if gamma is None else spec.replace(gamma=gamma)
    lam = s.spectrum
    w = lam * kspec.weights(s)
    rates = lam + s.delta
    active = w > 0
    if not np.any(active):
        return 0.0
    slowest = 2 * s.gamma * float(np.min(rates[active]))
    total_w = (s.gamma**2 / s.d) * float(np.sum(w[active]))

    def tail(L):
        return total_w * math.exp(-slowest * L) / slowest

    upper = 1.0 / slowest
    while tail(upper) > TAIL_TOL:
        upper *= 2
    breaks = np.unique(1.0 / (2 * s.gamma * rates[active]))
    breaks = breaks[breaks < upper][:50]
    val, _ = integrate.quad(lambda t: kernel(s, kspec, t), 0.0, upper, points=breaks if breaks.size else None,
                            limit=500, epsabs=1e-14, epsrel=1e-12)
    return val


# --- discretisation ----------------------------------------------------------------


def default_dt(spec):
    """``min(0.01, 0.05 / (gamma (||K|| + delta)))``."""
    scale = spec.gamma * (spec.norm_K + spec.delta)
    return 0.01 if scale == 0 else min(0.01, 0.05 / scale)


def solve_renewal(F, k, dt):
    """Trapezoidal solve of ``psi(t) = F(t) + int_0^t k(t-s) psi(s) ds`` on a uniform grid.

    The diagonal node is treated implicitly:
    ``psi_n (1 - dt k_0 / 2) = F_n + dt (k_n psi_0 / 2 + sum_{j=1}^{n-1} k_{n-j} psi_j)``.
    """
    F = np.asarray(F, dtype=float)
    k = np.asarray(k, dtype=float)
    diag = 1.0 - 0.5 * dt * k[0]
    if diag <= 0:
        raise StepTooLargeError(f"1 - dt k(0)/2 = {diag:.3g} <= 0; reduce delta_t")
    psi = np.empty_like(F)
    psi[0] = F[0]
    krev = k[::-1].copy()
    N = F.size
    for n in range(1, N):
        # krev[N-n : N-1] == k[n-1], ..., k[1] against psi[1..n-1]
        inner = krev[N - n:N - 1] @ psi[1:n] if n > 1 else 0.0
        psi[n] = (F[n] + dt * (0.5 * k[n] * psi[0] + inner)) / diag
    return psi


def trapezoid_convolution(k, psi, dt):
    """``int_0^{t_n} k(t_n - s) psi(s) ds`` by the trapezoid rule, for every grid point."""
    full = np.convolve(k, psi)[: psi.size]
    return dt * (full - 0.5 * k[: psi.size] * psi[0] - 0.5 * k[0] * psi)


def _grid(T, delta_t):
    if not delta_t > 0:
        raise ValueError("delta_t must be positive")
    if T < delta_t:
        raise ValueError("T must be at least delta_t")
    n = int(round(T / delta_t))
    return np.arange(n + 1) * delta_t


def solve_volterra(spec, x0, T, delta_t=None, kernel_choice=DEFAULT_KERNEL_CHOICE):
    """Solve the coupled system for ``(Psi, Omega)`` on ``[0, T]``."""
    delta_t = default_dt(spec) if delta_t is None else float(delta_t)
    grid = _grid(T, delta_t)
    k_psi, k_omega = kernel_pair(kernel_choice)
    FP, FR = forcing_curves(spec, x0, grid)
    kp = kernel(spec, k_psi, grid)
    psi = solve_renewal(FP, kp, delta_t)
    omega = FR + trapezoid_convolution(kernel(spec, k_omega, grid), psi, delta_t)
    omega[0] = FR[0]
    return VolterraSolution(grid, psi, omega, FP, FR, delta_t, kernel_choice)


def solve_empirical_volterra(problem, x0, T, delta_t=None):
    """Expected risks of multi-pass HSGD conditioned on its dataset.

    With ``mu, U`` the empirical spectrum and basis and ``kappa_i = (U^T K U)_ii``:

        E L(t) = L(Y(t)) + int_0^t (gamma^2/d) sum_i mu_i^2 e^{-2 gamma (t-s)(mu_i+delta)} E L(s) ds
        E P(t) = P(Y(t)) + int_0^t (gamma^2/d) sum_i mu_i kappa_i e^{-2 gamma (t-s)(mu_i+delta)} E L(s) ds

    where ``Y`` is gradient flow on ``f``.
    """
    spec = problem.spec
    scale = spec.gamma * (float(np.max(problem.spectrum)) + spec.delta)
    if delta_t is None:
        delta_t = 0.01 if scale == 0 else min(0.01, 0.05 / scale)
    grid = _grid(T, delta_t)
    mu = problem.spectrum
    rates = mu + spec.delta
    y0 = problem.to_eigen(np.asarray(x0, dtype=float))
    target = problem.minimizer_eigen()
    W = problem.to_population
    kappa = np.einsum("ij,i,ij->j", W, spec.spectrum, W)
    xt = spec.truth_eigen
    floor = 0.5 * spec.noise_std**2

    FL = np.empty(grid.size)
    FP = np.empty(grid.size)
    for s in range(0, grid.size, 256):
        decay = np.exp(-spec.gamma * np.outer(grid[s:s + 256], rates))
        y = decay * (y0 - target) + target
        FL[s:s + 256] = 0.5 * (y * y) @ mu - y @ problem.correlation + problem.label_energy
        v = y @ W.T - xt
        FP[s:s + 256] = 0.5 * (v * v) @ spec.spectrum + floor

    expo = np.exp(-2.0 * spec.gamma * np.outer(grid, rates))
    c = spec.gamma**2 / spec.d
    kL = c * (expo @ (mu * mu))
    kP = c * (expo @ (mu * kappa))
    EL = solve_renewal(FL, kL, delta_t)
    EP = FP + trapezoid_convolution(kP, EL, delta_t)
    EP[0] = FP[0]
    return EmpiricalVolterraSolution(grid, EL, EP, FL, FP, delta_t)


# --- long-time behaviour -------------------------------------------------------------


def stability_threshold(spec, kernel_choice=DEFAULT_KERNEL_CHOICE, tol=1e-12):
    """Largest ``gamma*`` with ``int_0^inf k(t; M_psi) dt < 1`` for all ``gamma < gamma*``.

    The integral is evaluated by adaptive quadrature and the root found by
    bisection; ``math.inf`` when the kernel vanishes identically.
    """
    k_psi, _ = kernel_pair(kernel_choice)
    if kernel_integral(spec, k_psi, 1.0) == 0.0:
        return math.inf

    def excess(g):
        return kernel_integral_numeric(spec, k_psi, g) - 1.0

    hi = 1.0
    while excess(hi) < 0:
        hi *= 2
    lo = 0.0
    return optimize.bisect(lambda g: excess(g) if g > 0 else -1.0, lo, hi, xtol=tol, rtol=4 * np.finfo(float).eps)


def limiting_risk(spec, gamma=None, kernel_choice=DEFAULT_KERNEL_CHOICE):
    """``Psi(inf) = P(X(inf)) / (1 - int k(t; M_psi) dt)``; ``math.inf`` at or above the threshold."""
    s = spec if gamma is None else spec.replace(gamma=gamma)
    k_psi, _ = kernel_pair(kernel_choice)
    mass = kernel_integral(s, k_psi)
    if mass >= 1.0:
        return math.inf
    rates = s.spectrum + s.delta
    v_inf = _decay_and_target(rates, s.delta * s.truth_eigen)
    # coordinates with no decay keep their offset but carry zero weight in P
    p_inf = 0.5 * float(s.spectrum @ (v_inf * v_inf)) + 0.5 * s.noise_std**2
    return p_inf / (1.0 - mass)
