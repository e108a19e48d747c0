"""Population least-squares problem and Gaussian data generation.

The covariance ``K`` is stored through its spectrum and an orthogonal
eigenbasis (identity by default).  All engines work in the eigenbasis, where
``K`` is diagonal; ``to_eigen``/``from_eigen`` translate between coordinates.
"""

import hashlib
from dataclasses import dataclass, field

import numpy as np

from .rng import derive_stream

__all__ = [
    "ConfigError",
    "SpectrumModel",
    "ProblemSpec",
    "Dataset",
    "EmpiricalProblem",
    "build_problem",
    "sample_dataset",
    "stream_samples",
    "empirical_covariance",
    "flatten_config",
]

# Rows are drawn in fixed-size blocks so that a streamed run and a
# materialised dataset consume a stream identically.
SAMPLE_BLOCK = 1024
ORTHOGONALITY_TOL = 1e-10
EIGEN_CLAMP = 1e-12


class ConfigError(ValueError):
    """Invalid problem or experiment configuration."""


def _frozen(arr, dtype=float):
    out = np.array(arr, dtype=dtype, copy=True)
    out.setflags(write=False)
    return out


@dataclass(frozen=True)
class SpectrumModel:
    """Recipe for the eigenvalues of ``K``.

    ``kind`` is one of ``identity``, ``uniform`` (params ``a, b``: evenly
    spaced between ``b`` and ``a``), ``power_law`` (params ``exponent,
    lambda_max``: ``lambda_max * i**-exponent``) or ``explicit`` (params are
    the eigenvalues).
    """

    kind: str
    params: tuple = ()

    KINDS = ("identity", "uniform", "power_law", "explicit")

    def eigenvalues(self, d):
        p = tuple(float(v) for v in self.params)
        if self.kind == "identity":
            lam = np.ones(d)
        elif self.kind == "uniform":
            if len(p) != 2:
                raise ConfigError("spectrum.params: uniform needs (a, b)")
            lam = np.linspace(max(p), min(p), d)
        elif self.kind == "power_law":
            if len(p) != 2:
                raise ConfigError("spectrum.params: power_law needs (exponent, lambda_max)")
            exponent, lam_max = p
            lam = lam_max * np.arange(1, d + 1, dtype=float) ** (-exponent)
        elif self.kind == "explicit":
            lam = np.asarray(p, dtype=float)
            if lam.shape != (d,):
                raise ConfigError(f"spectrum.params: explicit spectrum has {lam.size} entries, dim is {d}")
        else:
            raise ConfigError(f"spectrum.kind: unknown kind {self.kind!r}")
        if np.any(lam < 0):
            raise ConfigError("spectrum: eigenvalues must be nonnegative")
        return np.sort(lam)[::-1].copy()


@dataclass(frozen=True, eq=False)
class ProblemSpec:
    """The regression problem: covariance, ground truth, noise, regulariser, step size.

    Arrays are copied and made read-only on construction.
    """

    d: int
    spectrum: np.ndarray
    ground_truth: np.ndarray
    noise_std: float
    delta: float
    gamma: float
    epsilon: float = 0.05
    eigenbasis: np.ndarray = None
    identity_basis: bool = field(init=False)

    def __post_init__(self):
        d = int(self.d)
        if d <= 0:
            raise ConfigError("dim must be positive")
        if not self.gamma > 0:
            raise ConfigError("gamma must be positive")
        if self.delta < 0:
            raise ConfigError("delta must be nonnegative")
        if self.noise_std < 0:
            raise ConfigError("noise_std must be nonnegative")
        if not 0 < self.epsilon < 1 / 18:
            raise ConfigError("epsilon must lie in (0, 1/18)")
        lam = np.asarray(self.spectrum, dtype=float)
        if lam.shape != (d,):
            raise ConfigError(f"spectrum must have {d} entries")
        if np.any(lam < 0):
            raise ConfigError("spectrum: eigenvalues must be nonnegative")
        xt = np.asarray(self.ground_truth, dtype=float)
        if xt.shape != (d,):
            raise ConfigError(f"ground_truth must have {d} entries")
        if np.linalg.norm(xt) > d ** self.epsilon * (1 + 1e-12):
            raise ConfigError("ground_truth norm exceeds dim**epsilon")
        basis = np.eye(d) if self.eigenbasis is None else np.asarray(self.eigenbasis, dtype=float)
        if basis.shape != (d, d):
            raise ConfigError("eigenbasis must be a dim x dim matrix")
        if np.max(np.linalg.norm(basis.T @ basis - np.eye(d), axis=0)) > ORTHOGONALITY_TOL:
            raise ConfigError("eigenbasis is not orthogonal")
        set_ = object.__setattr__
        set_(self, "d", d)
        set_(self, "spectrum", _frozen(lam))
        set_(self, "ground_truth", _frozen(xt))
        set_(self, "eigenbasis", _frozen(basis))
        set_(self, "identity_basis", bool(np.array_equal(basis, np.eye(d))))
        set_(self, "noise_std", float(self.noise_std))
        set_(self, "delta", float(self.delta))
        set_(self, "gamma", float(self.gamma))
        set_(self, "epsilon", float(self.epsilon))

    @property
    def norm_K(self):
        return float(np.max(self.spectrum))

    @property
    def trace_K(self):
        return float(np.sum(self.spectrum))

    @property
    def sqrt_spectrum(self):
        return np.sqrt(self.spectrum)

    @property
    def truth_eigen(self):
        return self.to_eigen(self.ground_truth)

    def to_eigen(self, x):
        """Coordinates of ``x`` (vector or row-stacked vectors) in the eigenbasis of K."""
        x = np.asarray(x)
        if self.identity_basis:
            return x.copy()
        return x @ self.eigenbasis

    def from_eigen(self, y):
        y = np.asarray(y)
        if self.identity_basis:
            return y.copy()
        return y @ self.eigenbasis.T

    def covariance(self):
        """Dense ``K``; only for small-d checks."""
        return (self.eigenbasis * self.spectrum) @ self.eigenbasis.T

    def replace(self, **changes):
        fields = dict(
            d=self.d,
            spectrum=self.spectrum,
            ground_truth=self.ground_truth,
            noise_std=self.noise_std,
            delta=self.delta,
            gamma=self.gamma,
            epsilon=self.epsilon,
            eigenbasis=self.eigenbasis,
        )
        fields.update(changes)
        return ProblemSpec(**fields)

    def spec_hash(self):
        h = hashlib.sha256()
        for arr in (self.spectrum, self.ground_truth, self.eigenbasis):
            h.update(np.ascontiguousarray(arr, dtype="<f8").tobytes())
        h.update(repr((self.d, self.noise_std, self.delta, self.gamma, self.epsilon)).encode())
        return h.hexdigest()[:16]


@dataclass(frozen=True, eq=False)
class Dataset:
    """``n`` samples with ``labels = rows @ ground_truth + noise``."""

    rows: np.ndarray
    labels: np.ndarray
    noise: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "rows", _frozen(self.rows))
        object.__setattr__(self, "labels", _frozen(self.labels))
        object.__setattr__(self, "noise", _frozen(self.noise))

    @property
    def n(self):
        return self.rows.shape[0]

    @property
    def d(self):
        return self.rows.shape[1]


def flatten_config(config, prefix=""):
    """Flatten nested mappings into dotted keys (``{"a": {"b": 1}} -> {"a.b": 1}``)."""
    flat = {}
    for key, value in config.items():
        name = f"{prefix}{key}"
        if isinstance(value, dict):
            flat.update(flatten_config(value, name + "."))
        else:
            flat[name] = value
    return flat


def _as_tuple(value):
    if value is None:
        return ()
    if isinstance(value, str):
        return tuple(float(v) for v in value.replace(",", " ").split())
    if np.ndim(value) == 0:
        return (float(value),)
    return tuple(float(v) for v in value)


def _spectrum_model(flat):
    spec = flat.get("spectrum", flat.get("spectrum.kind", "identity"))
    if isinstance(spec, SpectrumModel):
        return spec
    if isinstance(spec, (list, tuple, np.ndarray)):
        return SpectrumModel("explicit", _as_tuple(spec))
    return SpectrumModel(str(spec), _as_tuple(flat.get("spectrum.params")))


def _number(flat, key, default=None, kind=float):
    if key not in flat or flat[key] is None:
        if default is None:
            raise ConfigError(f"{key}: required key missing")
        return kind(default)
    try:
        return kind(flat[key])
    except (TypeError, ValueError):
        raise ConfigError(f"{key}: expected a number, got {flat[key]!r}") from None


def build_problem(config):
    """Validated :class:`ProblemSpec` from a flat (or nested) key-value map.

    Keys: ``dim``, ``spectrum.kind``, ``spectrum.params``, ``gamma``,
    ``delta``, ``noise_std``, ``seed``, ``ground_truth``, ``epsilon``.
    ``d`` is accepted for ``dim``; ``spectrum`` may be a kind name or an
    explicit list.  Without ``ground_truth`` a deterministic unit vector is
    drawn from the seed.
    """
    flat = flatten_config(config)
    if "d" in flat and "dim" not in flat:
        flat["dim"] = flat["d"]
    d = _number(flat, "dim", kind=int)
    if d <= 0:
        raise ConfigError("dim must be positive")
    gamma = _number(flat, "gamma", 1.0)
    if not gamma > 0:
        raise ConfigError("gamma must be positive")
    delta = _number(flat, "delta", 0.0)
    if delta < 0:
        raise ConfigError("delta must be nonnegative")
    noise_std = _number(flat, "noise_std", 0.0)
    if noise_std < 0:
        raise ConfigError("noise_std must be nonnegative")
    epsilon = _number(flat, "epsilon", 0.05)
    seed = _number(flat, "seed", 0, kind=int)
    spectrum = _spectrum_model(flat).eigenvalues(d)

    truth = flat.get("ground_truth")
    if truth is None or (isinstance(truth, str) and truth == "random"):
        g = derive_stream(seed, "ground_truth", 0).standard_normal(d)
        truth = g / np.linalg.norm(g)
    else:
        truth = np.asarray(_as_tuple(truth), dtype=float)
    return ProblemSpec(
        d=d,
        spectrum=spectrum,
        ground_truth=truth,
        noise_std=noise_std,
        delta=delta,
        gamma=gamma,
        epsilon=epsilon,
        eigenbasis=flat.get("eigenbasis"),
    )


def stream_samples(spec, rng, count, block=SAMPLE_BLOCK):
    """Yield ``(rows_eigen, noise)`` blocks totalling ``count`` samples.

    ``rows_eigen`` are the sample vectors expressed in the eigenbasis of K,
    i.e. ``sqrt(lambda) * u`` with ``u`` standard Gaussian.
    """
    sqrt_lam = spec.sqrt_spectrum
    done = 0
    while done < count:
        c = min(block, count - done)
        u = rng.standard_normal((c, spec.d))
        w = rng.standard_normal(c) * spec.noise_std
        yield u * sqrt_lam, w
        done += c


def sample_dataset(spec, n, rng):
    """Draw ``n`` Gaussian samples ``a = sqrt(K) u``, ``b = a . x_tilde + w``."""
    if n < 1:
        raise ConfigError("n must be at least 1")
    eig_rows, noise = [], []
    for r, w in stream_samples(spec, rng, n):
        eig_rows.append(r)
        noise.append(w)
    rows = spec.from_eigen(np.concatenate(eig_rows))
    w = np.concatenate(noise)
    return Dataset(rows=rows, labels=rows @ spec.ground_truth + w, noise=w)


def empirical_covariance(dataset):
    """Descending eigendecomposition of ``A^T A / n``, tiny eigenvalues clamped to zero."""
    cov = dataset.rows.T @ dataset.rows / dataset.n
    vals, vecs = np.linalg.eigh(cov)
    order = np.argsort(vals)[::-1]
    vals = vals[order]
    vals[vals < EIGEN_CLAMP] = 0.0
    return vals, vecs[:, order]


@dataclass(frozen=True, eq=False)
class EmpiricalProblem:
    """A dataset viewed as the finite-sum problem ``f = L + (delta/2)||x||^2``.

    Coordinates ``y`` are taken in the eigenbasis ``U`` of the empirical
    covariance (``x = U y``); ``to_population`` maps ``y`` to the eigenbasis
    of the population ``K``.
    """

    spec: ProblemSpec
    dataset: Dataset
    spectrum: np.ndarray
    basis: np.ndarray
    correlation: np.ndarray  # U^T A^T b / n
    label_energy: float  # ||b||^2 / (2n)
    to_population: np.ndarray  # Q^T U

    @classmethod
    def from_dataset(cls, spec, dataset):
        mu, U = empirical_covariance(dataset)
        corr = U.T @ (dataset.rows.T @ dataset.labels) / dataset.n
        return cls(
            spec=spec,
            dataset=dataset,
            spectrum=mu,
            basis=U,
            correlation=corr,
            label_energy=float(dataset.labels @ dataset.labels / (2 * dataset.n)),
            to_population=spec.eigenbasis.T @ U,
        )

    @property
    def d(self):
        return self.spec.d

    @property
    def gamma(self):
        return self.spec.gamma

    @property
    def delta(self):
        return self.spec.delta

    def to_eigen(self, x):
        return np.asarray(x) @ self.basis

    def from_eigen(self, y):
        return np.asarray(y) @ self.basis.T

    def risk_eigen(self, y):
        """Empirical risk ``L`` at ``x = U y``."""
        return 0.5 * float(self.spectrum @ (y * y)) - float(self.correlation @ y) + self.label_energy

    def minimizer_eigen(self):
        """Limit of gradient flow on ``f`` started at ``y0``: only defined on the range."""
        denom = self.spectrum + self.delta
        out = np.zeros_like(self.correlation)
        np.divide(self.correlation, denom, out=out, where=denom > 0)
        return out
