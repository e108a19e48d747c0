"""Recorded statistic paths shared by all engines."""

from dataclasses import dataclass, field

import numpy as np

from .stats import statistic_evaluator

__all__ = ["Trajectory", "Recorder", "SOURCES"]

SOURCES = ("sgd", "hsgd", "volterra", "gradient_flow")


@dataclass
class Trajectory:
    """Time-stamped values of statistics along one path.

    ``times`` are in continuum time ``t = k / d``.
    """

    times: np.ndarray
    values: dict
    source: str
    replica: int = 0
    metadata: dict = field(default_factory=dict)

    def __post_init__(self):
        self.times = np.asarray(self.times, dtype=float)
        self.values = {k: np.asarray(v) for k, v in self.values.items()}
        for k, v in self.values.items():
            if v.shape != self.times.shape:
                raise ValueError(f"statistic {k!r} has {v.size} values for {self.times.size} times")
        if self.times.size > 1 and np.any(np.diff(self.times) <= 0):
            raise ValueError("times must be strictly increasing")

    def __getitem__(self, label):
        return self.values[label]

    @property
    def labels(self):
        return list(self.values)

    def rows(self):
        """``(time, statistic, value, replica, source)`` tuples, time-major."""
        labels = self.labels
        for i, t in enumerate(self.times):
            for lab in labels:
                yield t, lab, self.values[lab][i], self.replica, self.source


class Recorder:
    """Accumulates statistic values at chosen steps."""

    def __init__(self, stats, spec, eigen_rows=None, noise=None):
        self.evaluators = [statistic_evaluator(s, spec, eigen_rows, noise) for s in stats]
        self.times = []
        self.values = {label: [] for label, _ in self.evaluators}

    def record(self, t, v):
        self.times.append(t)
        for label, fn in self.evaluators:
            self.values[label].append(fn(v))

    def last(self, label):
        return self.values[label][-1]

    def trajectory(self, source, replica=0, metadata=None):
        return Trajectory(np.array(self.times), self.values, source, replica, dict(metadata or {}))
