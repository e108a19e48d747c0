"""Flat ``key = value`` experiment configuration files.

One assignment per line, ``#`` starts a comment.  Values are read as JSON
when possible (numbers, lists, ``true``/``null``); otherwise a
comma-separated value becomes a list and anything else a string::

    dim = 500
    spectrum.kind = identity
    gamma = 1.0
    run.engines = sgd, volterra
"""

import hashlib
import json
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .problem import ConfigError
from .sgd import STRATEGIES
from .stats import BUILTIN_STATISTICS
from .volterra import KERNEL_CHOICES, DEFAULT_KERNEL_CHOICE

__all__ = ["parse_config_text", "load_config", "ExperimentConfig", "ENGINES", "PROBLEM_KEYS"]

PROBLEM_KEYS = ("dim", "spectrum.kind", "spectrum.params", "gamma", "delta", "noise_std",
                "seed", "ground_truth", "epsilon")
ENGINES = ("sgd", "hsgd", "volterra", "volterra_empirical", "gradient_flow")


def _scalar(token):
    token = token.strip()
    try:
        return json.loads(token)
    except ValueError:
        return token


def parse_value(raw):
    raw = raw.strip()
    if raw == "":
        return None
    try:
        return json.loads(raw)
    except ValueError:
        pass
    if "," in raw:
        return [_scalar(t) for t in raw.split(",") if t.strip()]
    return raw


def parse_config_text(text, source="<string>"):
    flat = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected 'key = value'")
        key, raw = line.split("=", 1)
        key = key.strip()
        if not key:
            raise ConfigError(f"{source}:{lineno}: empty key")
        flat[key] = parse_value(raw)
    return flat


def load_config(path):
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    return parse_config_text(text, str(path))


def _listify(value):
    if value is None:
        return ()
    if isinstance(value, (list, tuple)):
        return tuple(value)
    return (value,)


def _pairs(value):
    out = []
    for item in _listify(value):
        if isinstance(item, (list, tuple)):
            a, b = item
        else:
            a, _, b = str(item).partition(":")
        if not a or not b:
            raise ConfigError(f"compare.pairs: cannot read pair {item!r}")
        out.append((str(a).strip(), str(b).strip()))
    return tuple(out)


@dataclass
class ExperimentConfig:
    """Problem block, run block, comparison block and output location."""

    problem: dict
    engines: tuple = ("sgd", "volterra")
    horizon: float = 2.0
    replicas: int = 1
    strategy: str = "one_pass"
    n: int = None
    stats: tuple = ("population_risk",)
    stride: int = None
    x0: object = "zero"
    hsgd_mode: str = "population"
    hsgd_step: float = None
    hsgd_stride: int = None
    volterra_dt: float = None
    kernel_choice: str = DEFAULT_KERNEL_CHOICE
    compare_pairs: tuple = ()
    compare_statistic: str = "population_risk"
    scaling_dims: tuple = ()
    master_seed: int = 0
    out_dir: str = None
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        for e in self.engines:
            if e not in ENGINES:
                raise ConfigError(f"run.engines: unknown engine {e!r}")
        if self.replicas < 1:
            raise ConfigError("run.replicas must be at least 1")
        if self.strategy not in STRATEGIES:
            raise ConfigError(f"run.strategy: unknown strategy {self.strategy!r}")
        if self.kernel_choice not in KERNEL_CHOICES:
            raise ConfigError(f"run.kernel_choice must be one of {KERNEL_CHOICES}")
        for s in self.stats + (self.compare_statistic,):
            if s not in BUILTIN_STATISTICS:
                raise ConfigError(f"statistic label {s!r} does not resolve")
        if "empirical_risk" in self.stats and self.strategy == "one_pass" and self.hsgd_mode == "population":
            raise ConfigError("empirical_risk needs a multi-pass strategy or empirical hsgd mode")
        if not self.horizon > 0:
            raise ConfigError("run.horizon must be positive")

    @classmethod
    def from_flat(cls, flat):
        flat = dict(flat)
        problem = {k: flat.pop(k) for k in list(flat) if k in PROBLEM_KEYS or k == "d"}
        g = flat.pop

        def num(key, kind, default=None):
            v = g(key, None)
            if v is None:
                return default
            try:
                return kind(v)
            except (TypeError, ValueError):
                raise ConfigError(f"{key}: expected a number, got {v!r}") from None

        cfg = cls(
            problem=problem,
            engines=tuple(str(e) for e in _listify(g("run.engines", None))) or ("sgd", "volterra"),
            horizon=num("run.horizon", float, 2.0),
            replicas=num("run.replicas", int, 1),
            strategy=str(g("run.strategy", "one_pass")),
            n=num("run.n", int),
            stats=tuple(str(s) for s in _listify(g("run.stats", None))) or ("population_risk",),
            stride=num("run.stride", int),
            x0=g("run.x0", "zero"),
            hsgd_mode=str(g("run.hsgd_mode", "population")),
            hsgd_step=num("run.hsgd_step", float),
            hsgd_stride=num("run.hsgd_stride", int),
            volterra_dt=num("run.volterra_dt", float),
            kernel_choice=str(g("run.kernel_choice", DEFAULT_KERNEL_CHOICE)),
            compare_pairs=_pairs(g("compare.pairs", None)),
            compare_statistic=str(g("compare.statistic", "population_risk")),
            scaling_dims=tuple(int(v) for v in _listify(g("scaling.dims", None))),
            master_seed=int(problem.get("seed") or 0),
            out_dir=g("output.dir", None),
        )
        unknown = [k for k in flat if not k.startswith("figure1.")]
        if unknown:
            raise ConfigError(f"unknown config keys: {', '.join(sorted(unknown))}")
        cfg.extra = flat
        return cfg

    def with_seed(self, seed):
        problem = dict(self.problem, seed=int(seed))
        return replace(self, problem=problem, master_seed=int(seed))

    @classmethod
    def from_file(cls, path):
        return cls.from_flat(load_config(path))

    def canonical(self):
        data = asdict(self)
        data.pop("out_dir")
        return json.dumps(data, sort_keys=True, default=str)

    def config_hash(self):
        return hashlib.sha256(self.canonical().encode()).hexdigest()[:16]
