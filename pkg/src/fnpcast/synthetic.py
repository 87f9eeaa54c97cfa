"""Synthetic epidemic-like seasons for smoke tests and demos."""

import numpy as np


def seasonal_bumps(n_seasons=12, length=33, seed=0, noise=0.15, baseline=1.0,
                   amplitude=(2.0, 5.0), peak_jitter=4.0, width=(3.0, 5.0)):
    """Noisy Gaussian-shaped bumps with jittered peak week, height and width.

    Values are nonnegative, one array of ``length`` weeks per season.
    """
    rng = np.random.default_rng(seed)
    t = np.arange(length, dtype=np.float64)
    center = (length - 1) / 2.0
    seasons = []
    for _ in range(n_seasons):
        peak = center + rng.uniform(-peak_jitter, peak_jitter)
        amp = rng.uniform(*amplitude)
        w = rng.uniform(*width)
        curve = baseline + amp * np.exp(-0.5 * ((t - peak) / w) ** 2)
        seasons.append(np.clip(curve + noise * rng.standard_normal(length), 0.0, None))
    return seasons
