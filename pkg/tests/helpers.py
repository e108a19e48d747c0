import numpy as np
from scipy.stats import ortho_group

from hsgdlab import build_problem


def random_spec(d, seed, **overrides):
    """Random problem: uniform spectrum in [0.2, 2], random ground truth and noise."""
    rng = np.random.default_rng(seed)
    cfg = {
        "dim": d,
        "spectrum.kind": "explicit",
        "spectrum.params": list(rng.uniform(0.2, 2.0, d)),
        "gamma": float(rng.uniform(0.2, 1.0)),
        "delta": float(rng.uniform(0.0, 0.5)),
        "noise_std": float(rng.uniform(0.1, 0.8)),
        "seed": seed,
    }
    cfg.update(overrides)
    return build_problem(cfg)


def rotated(spec, seed):
    """Same problem with a random orthogonal eigenbasis; ground truth rotated along."""
    Q = ortho_group.rvs(spec.d, random_state=seed)
    return spec.replace(eigenbasis=Q, ground_truth=Q @ spec.ground_truth), Q
