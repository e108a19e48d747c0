"""Quadratic observables, risk functionals and resolvent statistics."""

from dataclasses import dataclass

import numpy as np

__all__ = [
    "QuadraticStatistic",
    "ContourPoint",
    "SingularResolventError",
    "BUILTIN_STATISTICS",
    "norm_sq",
    "eval_quadratic",
    "gradient",
    "c2_norm",
    "population_risk",
    "regularized_risk",
    "empirical_risk",
    "regularized_empirical_risk",
    "population_risk_statistic",
    "contour_radius",
    "contour_point",
    "contour_nodes",
    "resolvent_apply",
    "resolvent_matrix",
    "cauchy_identity",
    "make_resolvent_statistic",
    "RESOLVENT_KINDS",
    "statistic_evaluator",
]

BUILTIN_STATISTICS = ("population_risk", "regularized_risk", "norm_sq", "distance_sq_to_truth", "empirical_risk")
RESOLVENT_KINDS = ("grad_x", "grad_xtilde", "hess_xx", "hess_xxtilde")
SINGULAR_TOL = 1e-12
SYMMETRY_TOL = 1e-12


class SingularResolventError(ValueError):
    """The resolvent was requested at (or within 1e-12 of) an eigenvalue."""


@dataclass(frozen=True, eq=False)
class QuadraticStatistic:
    """``q(x) = 0.5 x^T H x + g^T x + c``.

    ``hessian`` is either a dense symmetric matrix or a 1-d array holding a
    diagonal.  Coefficients may be complex.
    """

    hessian: np.ndarray
    linear: np.ndarray
    constant: complex = 0.0
    label: str = "q"

    def __post_init__(self):
        H = np.asarray(self.hessian)
        g = np.asarray(self.linear)
        if H.ndim == 2:
            if H.shape != (g.size, g.size):
                raise ValueError("hessian and linear term disagree in dimension")
            if np.max(np.abs(H - H.T), initial=0.0) > SYMMETRY_TOL * max(1.0, np.max(np.abs(H), initial=0.0)):
                raise ValueError("hessian must be symmetric")
        elif H.ndim != 1 or H.shape != g.shape:
            raise ValueError("diagonal hessian and linear term disagree in dimension")
        object.__setattr__(self, "hessian", H)
        object.__setattr__(self, "linear", g)

    @property
    def d(self):
        return self.linear.size

    @property
    def diagonal(self):
        return self.hessian.ndim == 1

    def dense_hessian(self):
        return np.diag(self.hessian) if self.diagonal else self.hessian

    def scaled(self, s):
        return QuadraticStatistic(s * self.hessian, s * self.linear, s * self.constant, self.label)

    def __add__(self, other):
        return QuadraticStatistic(
            self.dense_hessian() + other.dense_hessian(),
            self.linear + other.linear,
            self.constant + other.constant,
            f"{self.label}+{other.label}",
        )


def norm_sq(d):
    """``||x||^2`` as a statistic."""
    return QuadraticStatistic(2.0 * np.ones(d), np.zeros(d), 0.0, "norm_sq")


def _hess_apply(q, x):
    return q.hessian * x if q.diagonal else q.hessian @ x


def _check_dim(q, x):
    if x.shape != (q.d,):
        raise ValueError(f"dimension mismatch: statistic has d={q.d}, vector has shape {x.shape}")


def eval_quadratic(q, x):
    x = np.asarray(x)
    _check_dim(q, x)
    val = 0.5 * (x @ _hess_apply(q, x)) + q.linear @ x + q.constant
    return val.item() if np.iscomplexobj(val) else float(val)


def gradient(q, x):
    """``H x + g``."""
    x = np.asarray(x)
    _check_dim(q, x)
    return _hess_apply(q, x) + q.linear


def c2_norm(q):
    """Operator norm of the Hessian plus ``||grad q(0)||`` plus ``|q(0)|``."""
    if q.diagonal:
        op = float(np.max(np.abs(q.hessian), initial=0.0))
    else:
        op = float(np.linalg.norm(q.hessian, 2))
    return op + float(np.linalg.norm(q.linear)) + float(abs(q.constant))


def _vector(spec, x):
    x = np.asarray(x, dtype=float)
    if x.shape != (spec.d,):
        raise ValueError(f"dimension mismatch: problem has d={spec.d}, vector has shape {x.shape}")
    return x


def population_risk(spec, x):
    """``0.5 (x - x~)^T K (x - x~) + eta^2 / 2``, evaluated in the eigenbasis."""
    v = spec.to_eigen(_vector(spec, x) - spec.ground_truth)
    return 0.5 * float(spec.spectrum @ (v * v)) + 0.5 * spec.noise_std**2


def regularized_risk(spec, x):
    x = _vector(spec, x)
    return population_risk(spec, x) + 0.5 * spec.delta * float(x @ x)


def empirical_risk(dataset, x):
    """``||A x - b||^2 / (2n)``."""
    x = np.asarray(x, dtype=float)
    if x.shape != (dataset.d,):
        raise ValueError(f"dimension mismatch: dataset has d={dataset.d}, vector has shape {x.shape}")
    r = dataset.rows @ x - dataset.labels
    return float(r @ r) / (2 * dataset.n)


def regularized_empirical_risk(dataset, delta, x):
    """``L(x) + (delta/2) ||x||^2`` -- the half convention matches the per-sample losses."""
    x = np.asarray(x, dtype=float)
    return empirical_risk(dataset, x) + 0.5 * delta * float(x @ x)


def population_risk_statistic(spec):
    """The population risk as an explicit :class:`QuadraticStatistic`."""
    K = spec.covariance()
    xt = spec.ground_truth
    return QuadraticStatistic(
        K, -K @ xt, 0.5 * float(xt @ K @ xt) + 0.5 * spec.noise_std**2, "population_risk"
    )


# --- resolvent family -------------------------------------------------------


@dataclass(frozen=True)
class ContourPoint:
    """A point on the circle of radius ``max(1, 3||K||)`` around the origin."""

    value: complex
    radius: float

    def __post_init__(self):
        if not np.isclose(abs(self.value), self.radius, rtol=1e-12, atol=0):
            raise ValueError("contour point must lie on its circle")


def contour_radius(spec):
    return max(1.0, 3.0 * spec.norm_K)


def contour_point(spec, angle):
    r = contour_radius(spec)
    return ContourPoint(complex(r * np.exp(1j * angle)), r)


def contour_nodes(spec, count):
    """``count`` equispaced trapezoidal nodes on the contour."""
    return [contour_point(spec, 2 * np.pi * j / count) for j in range(count)]


def _zval(z):
    return z.value if isinstance(z, ContourPoint) else complex(z)


def _check_off_spectrum(spec, z):
    if np.min(np.abs(spec.spectrum - z)) < SINGULAR_TOL:
        raise SingularResolventError(f"z={z} lies on the spectrum of K")


def resolvent_apply(spec, z, v):
    """``(K - z I)^{-1} v``."""
    z = _zval(z)
    _check_off_spectrum(spec, z)
    v = np.asarray(v)
    if v.shape != (spec.d,):
        raise ValueError("dimension mismatch")
    return spec.from_eigen(spec.to_eigen(v) / (spec.spectrum - z))


def resolvent_matrix(spec, z):
    z = _zval(z)
    _check_off_spectrum(spec, z)
    Q = spec.eigenbasis
    return (Q / (spec.spectrum - z)) @ Q.T


def cauchy_identity(spec, nodes):
    """Trapezoidal approximation of ``-(2 pi i)^{-1} \\oint R(y; K) dy``.

    With ``dy = i y dtheta`` this is ``-mean(y_j R(y_j))``; it reproduces the
    identity up to roughly ``(||K|| / radius)^nodes``.
    """
    if isinstance(nodes, int):
        nodes = contour_nodes(spec, nodes)
    acc = np.zeros((spec.d, spec.d), dtype=complex)
    for y in nodes:
        acc += _zval(y) * resolvent_matrix(spec, y)
    return -acc / len(nodes)


def make_resolvent_statistic(q, spec, kind, z, y=None):
    """Member of the resolvent family generated by ``q``, as a complex statistic.

    ``grad_x``: ``grad q(x)^T R(z) x``; ``grad_xtilde``: ``grad q(x)^T R(z) x~``;
    ``hess_xx``: ``x^T R(y) H R(z) x``; ``hess_xxtilde``: ``x^T R(y) H R(z) x~``.
    """
    if kind not in RESOLVENT_KINDS:
        raise ValueError(f"unknown resolvent statistic kind {kind!r}")
    needs_y = kind.startswith("hess")
    if needs_y and y is None:
        raise ValueError(f"{kind} requires a second contour point y")
    d = spec.d
    H = q.dense_hessian()
    g = q.linear
    xt = spec.ground_truth
    Rz = resolvent_matrix(spec, z)
    zero_h = np.zeros((d, d), dtype=complex)
    zero_g = np.zeros(d, dtype=complex)
    label = f"{q.label}:{kind}"
    if kind == "grad_x":
        HR = H @ Rz
        return QuadraticStatistic(HR + HR.T, Rz @ g, 0.0, label)
    if kind == "grad_xtilde":
        Rx = Rz @ xt
        return QuadraticStatistic(zero_h, H @ Rx, complex(g @ Rx), label)
    B = resolvent_matrix(spec, y) @ H @ Rz
    if kind == "hess_xx":
        return QuadraticStatistic(B + B.T, zero_g, 0.0, label)
    return QuadraticStatistic(zero_h, B @ xt, 0.0, label)


# --- fast evaluators used by the engines --------------------------------------


def statistic_evaluator(stat, spec, eigen_rows=None, noise=None):
    """Return ``(label, fn)`` where ``fn(v)`` evaluates ``stat`` at ``x = x~ + v``.

    ``v`` is the offset from the ground truth in K's eigenbasis.  Built-in
    labels cost O(d); ``empirical_risk`` needs the dataset rows (eigenbasis)
    and noise.  A :class:`QuadraticStatistic` is rotated into the eigenbasis
    once.
    """
    lam = spec.spectrum
    xt = spec.truth_eigen
    floor = 0.5 * spec.noise_std**2
    if isinstance(stat, QuadraticStatistic):
        Q = spec.eigenbasis
        H = stat.dense_hessian()
        He = H if spec.identity_basis else Q.T @ H @ Q
        ge = spec.to_eigen(stat.linear)
        qe = QuadraticStatistic(np.diag(He) if stat.diagonal and spec.identity_basis else He, ge, stat.constant)
        return stat.label, lambda v: eval_quadratic(qe, v + xt)
    if stat == "population_risk":
        return stat, lambda v: 0.5 * float(lam @ (v * v)) + floor
    if stat == "regularized_risk":

        def reg(v):
            x = v + xt
            return 0.5 * float(lam @ (v * v)) + floor + 0.5 * spec.delta * float(x @ x)

        return stat, reg
    if stat == "norm_sq":
        return stat, lambda v: float((v + xt) @ (v + xt))
    if stat == "distance_sq_to_truth":
        return stat, lambda v: float(v @ v)
    if stat == "empirical_risk":
        if eigen_rows is None:
            raise ValueError("empirical_risk needs a dataset")
        n = eigen_rows.shape[0]

        def emp(v):
            r = eigen_rows @ v - noise
            return float(r @ r) / (2 * n)

        return stat, emp
    raise ValueError(f"unknown statistic label {stat!r}")
