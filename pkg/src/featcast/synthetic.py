"""Deterministic synthetic datasets for demos and the acceptance suite."""

from __future__ import annotations

import numpy as np

from .data import Dataset, TimeSeries
from .rng import substream


def mixture_dataset(
    n_series: int = 20,
    length: int = 256,
    horizon: int = 12,
    m: int = 12,
    noise: float = 0.05,
    seed: int = 0,
) -> Dataset:
    """Series with distinct frequency/trend/waveform mixtures plus noise.

    Each series gets its own period, waveform (sine, sine+harmonic, square,
    sawtooth), and trend slope, so a window classifier has real structure to
    separate.  Noise is `noise` times the signal's standard deviation.
    """
    rng = substream(seed, "synthetic-mixture")
    periods = (6, 8, 12, 16, 24)
    shapes = ("sine", "harmonic", "square", "saw")
    series = []
    t = np.arange(length, dtype=np.float64)
    for i in range(n_series):
        period = periods[i % len(periods)]
        shape = shapes[(i // len(periods)) % len(shapes)]
        trend = 0.02 * (i % 3)  # none / shallow / steeper
        phase = 2.0 * np.pi * t / period
        if shape == "sine":
            signal = np.sin(phase)
        elif shape == "harmonic":
            signal = np.sin(phase) + 0.5 * np.sin(2 * phase)
        elif shape == "square":
            signal = np.sign(np.sin(phase))
        else:
            frac = t / period - np.floor(t / period)
            signal = 2.0 * frac - 1.0
        values = 10.0 + 2.0 * signal + trend * t
        values = values + noise * values.std() * rng.standard_normal(length)
        series.append(TimeSeries(f"S{i + 1:02d}", values, seasonal_period=m))
    return Dataset(series, horizon=horizon, name="synthetic-mixture")


def nn5_like_dataset(
    n_series: int = 111,
    length: int = 791,
    horizon: int = 14,
    seed: int = 7,
) -> Dataset:
    """Daily cash-demand-style surrogate: 111 series of 791 points with a
    strong weekly profile, slow level drift, and positive noise."""
    rng = substream(seed, "synthetic-nn5like")
    t = np.arange(length, dtype=np.float64)
    series = []
    for i in range(n_series):
        level = rng.uniform(15.0, 45.0)
        weekly = rng.uniform(-0.5, 0.5, size=7)
        weekly = weekly - weekly.mean()
        weekly_strength = rng.uniform(0.25, 0.6)
        yearly_amp = rng.uniform(0.0, 0.15)
        yearly_phase = rng.uniform(0, 2 * np.pi)
        drift = rng.uniform(-0.15, 0.25) / length
        profile = weekly[np.arange(length) % 7]
        modulation = 1.0 + yearly_amp * np.sin(2 * np.pi * t / 364.0 + yearly_phase)
        values = level * (1.0 + weekly_strength * profile) * modulation * (1.0 + drift * t)
        values = values * (1.0 + 0.08 * rng.standard_normal(length))
        values = np.maximum(values, 0.5)
        series.append(TimeSeries(f"N{i + 1:03d}", values, seasonal_period=7))
    return Dataset(series, horizon=horizon, name="nn5-like")


def write_one_row_csv(dataset: Dataset, path) -> None:
    """Persist in the `id,v1,v2,...` format with round-trip-exact floats."""
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s in dataset.series:
            fh.write(s.id + "," + ",".join(repr(float(v)) for v in s.values) + "\n")
