"""Synthetic class-imbalanced sparse datasets.

The generator draws a Gaussian pair (class-conditional means +shift and
-shift) over sparse supports, with an optional block of rare informative
coordinates: features that appear in few instances but carry a strong
label-aligned value when they do.  Rare-but-informative coordinates are
exactly the regime where per-coordinate adaptive learning rates pay off,
so these streams exercise the adaptive/non-adaptive comparison.

All parameter choices here are toolkit constructions for benchmarking,
not values taken from any external source.
"""

from __future__ import annotations

import numpy as np

from .data import Dataset, Instance, SparseVector
from .exceptions import ConfigError

__all__ = ["make_synthetic"]


def _background_rates(
    dim: int, n_informative: int, density: float, informative_rate: float,
    profile: str, zipf_exponent: float,
) -> np.ndarray:
    n_bg = dim - n_informative
    if n_bg <= 0:
        return np.zeros(0)
    want = max(density * dim - n_informative * informative_rate, 0.0)
    base = want / n_bg
    if profile == "uniform":
        return np.clip(np.full(n_bg, base), 0.0, 1.0)
    if profile != "zipf":
        raise ConfigError(f"unknown frequency profile {profile!r}")
    raw = 1.0 / np.arange(1, n_bg + 1, dtype=np.float64) ** zipf_exponent
    rates = np.clip(raw * (want / raw.sum()), 0.0, 1.0)
    # clipping at 1 loses presence mass; water-fill it back into the tail
    for _ in range(50):
        deficit = want - rates.sum()
        if deficit <= 1e-12:
            break
        open_slots = rates < 1.0
        if not open_slots.any():
            break
        rates[open_slots] = np.clip(
            rates[open_slots] * (1.0 + deficit / rates[open_slots].sum()), 0.0, 1.0
        )
    return rates


def make_synthetic(
    n: int,
    dim: int,
    seed: int,
    positive_fraction: float = 0.5,
    density: float = 0.1,
    n_informative: int = 0,
    informative_rate: float = 0.02,
    signal: float = 1.0,
    signal_noise: float = 0.25,
    background_shift: float = 0.0,
    noise_scale: float = 1.0,
    frequency_profile: str = "uniform",
    zipf_exponent: float = 1.1,
    scale_spread: float = 0.0,
    name: str = "synthetic",
) -> Dataset:
    """Generate a sparse binary dataset with exact class counts.

    Coordinates 0 .. n_informative-1 appear with probability
    ``informative_rate`` and take values N(label * signal, signal_noise^2);
    the remaining coordinates follow the chosen frequency profile at an
    average presence rate matching the requested overall ``density`` and
    take values N(label * background_shift, noise_scale^2).

    ``scale_spread`` > 0 additionally multiplies every coordinate by a
    fixed per-coordinate factor drawn log-uniformly from
    10^[-scale_spread, +scale_spread], giving the feature scales a wide
    dynamic range (leave instances unnormalized to keep it).

    The class split is exact: round(n * positive_fraction) positives.  The
    last coordinate is forced to appear at least once so the file
    round-trips at the requested dimension.
    """
    if n < 2:
        raise ConfigError("need at least two instances")
    if dim < 1 or n_informative < 0 or n_informative > dim:
        raise ConfigError("invalid dimension / informative split")
    if not 0.0 < positive_fraction < 1.0:
        raise ConfigError("positive_fraction must be in (0, 1)")

    rng = np.random.default_rng(seed)
    n_pos = int(round(n * positive_fraction))
    n_pos = min(max(n_pos, 1), n - 1)
    labels = np.concatenate([np.ones(n_pos, dtype=np.int64), -np.ones(n - n_pos, dtype=np.int64)])
    rng.shuffle(labels)

    bg_rates = _background_rates(
        dim, n_informative, density, informative_rate, frequency_profile, zipf_exponent
    )
    if scale_spread > 0.0:
        coord_scales = 10.0 ** rng.uniform(-scale_spread, scale_spread, size=dim)
    else:
        coord_scales = None

    rows = []
    seen_last = False
    for y in labels:
        present_inf = np.flatnonzero(rng.random(n_informative) < informative_rate)
        present_bg = n_informative + np.flatnonzero(rng.random(bg_rates.size) < bg_rates)
        vals_inf = y * signal + signal_noise * rng.standard_normal(present_inf.size)
        vals_bg = y * background_shift + noise_scale * rng.standard_normal(present_bg.size)
        idx = np.concatenate([present_inf, present_bg])
        vals = np.concatenate([vals_inf, vals_bg])
        if coord_scales is not None:
            vals = vals * coord_scales[idx]
        keep = vals != 0.0
        idx, vals = idx[keep], vals[keep]
        if idx.size and idx[-1] == dim - 1:
            seen_last = True
        rows.append((int(y), idx, vals))

    if not seen_last:
        y, idx, vals = rows[0]
        filler = noise_scale * rng.standard_normal() or 1e-3
        rows[0] = (y, np.append(idx, dim - 1), np.append(vals, filler))

    instances = [
        Instance(SparseVector(idx, vals, dim), y) for (y, idx, vals) in rows
    ]
    return Dataset(instances, dim, name=name)
