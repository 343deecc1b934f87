"""Dataset ingestion, train/test splitting, and labeled sliding windows.

Every series doubles as a class: the window set carries dense integer labels
equal to each series' position in the dataset, which stays stable across
runs.  Windows are z-normalized per window so the classifier sees shape, not
level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .rng import substream

MIN_WINDOW = 4
ZERO_STD = 1e-12


@dataclass
class TimeSeries:
    id: str
    values: np.ndarray
    seasonal_period: int = 1

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 1 or len(self.values) < 2:
            raise ValueError(f"series {self.id!r} must hold at least 2 values")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"series {self.id!r} contains non-finite values")
        if self.seasonal_period < 1:
            raise ValueError(f"series {self.id!r}: seasonal period must be positive")


@dataclass
class Dataset:
    series: list[TimeSeries]
    horizon: int
    name: str = "dataset"

    def __post_init__(self):
        ids = [s.id for s in self.series]
        if len(set(ids)) != len(ids):
            raise ValueError("duplicate series ids in dataset")
        if self.horizon < 1:
            raise ValueError("horizon must be positive")

    def ids(self) -> list[str]:
        return [s.id for s in self.series]

    def class_index(self, series_id: str) -> int:
        return self.ids().index(series_id)


@dataclass
class SplitSeries:
    """Train/test views of one series; the test block is only read at scoring time."""

    id: str
    train: np.ndarray
    test: np.ndarray
    seasonal_period: int


@dataclass
class Window:
    class_index: int
    start: int
    values: np.ndarray
    norm_mean: float
    norm_std: float


@dataclass
class WindowParams:
    length: int
    stride: int
    max_per_series: int = 64

    def __post_init__(self):
        if self.length < MIN_WINDOW:
            raise ValueError(f"window length {self.length} is degenerate; minimum is {MIN_WINDOW}")
        if self.stride < 1:
            raise ValueError("stride must be >= 1")
        if self.max_per_series < 1:
            raise ValueError("max_per_series must be >= 1")


def ingest(path, fmt: str, m: int = 1, horizon: int = 1, name: str | None = None) -> Dataset:
    """Parse a dataset file.

    fmt "long-csv": header `series_id,value`, rows in temporal order per id.
    fmt "one-row-per-series": each line `id,v1,v2,...` with no header.
    Series keep their order of first appearance.
    """
    if fmt not in ("long-csv", "one-row-per-series"):
        raise ValueError(f"unknown dataset format {fmt!r}")
    order: list[str] = []
    values: dict[str, list[float]] = {}
    with open(path, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if fmt == "long-csv":
        if not lines or lines[0].strip() != "series_id,value":
            raise ValueError(f"{path}: long-csv requires the header 'series_id,value'")
        for lineno, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'series_id,value'")
            sid, raw = parts[0].strip(), parts[1].strip()
            try:
                v = float(raw)
            except ValueError:
                raise ValueError(f"{path}:{lineno}: non-numeric value {raw!r}") from None
            if not np.isfinite(v):
                raise ValueError(f"{path}:{lineno}: non-finite value {raw!r}")
            if sid not in values:
                order.append(sid)
                values[sid] = []
            values[sid].append(v)
    else:
        for lineno, line in enumerate(lines, start=1):
            if not line.strip():
                continue
            parts = line.split(",")
            sid = parts[0].strip()
            if sid in values:
                raise ValueError(f"{path}:{lineno}: duplicate series id {sid!r}")
            row = []
            for raw in parts[1:]:
                raw = raw.strip()
                try:
                    v = float(raw)
                except ValueError:
                    raise ValueError(f"{path}:{lineno}: non-numeric value {raw!r}") from None
                if not np.isfinite(v):
                    raise ValueError(f"{path}:{lineno}: non-finite value {raw!r}")
                row.append(v)
            order.append(sid)
            values[sid] = row
    series = []
    for sid in order:
        if len(values[sid]) < 2:
            raise ValueError(f"series {sid!r} has fewer than 2 values")
        series.append(TimeSeries(sid, np.array(values[sid]), seasonal_period=m))
    if not series:
        raise ValueError(f"{path}: no series found")
    return Dataset(series, horizon=horizon, name=name or str(path))


def split(dataset: Dataset) -> list[SplitSeries]:
    """Hold out the last `horizon` points of every series as the test block."""
    h = dataset.horizon
    too_short = [s.id for s in dataset.series if len(s.values) <= h]
    if too_short:
        raise ValueError(f"series not longer than horizon {h}: {', '.join(too_short)}")
    return [
        SplitSeries(s.id, s.values[:-h].copy(), s.values[-h:].copy(), s.seasonal_period)
        for s in dataset.series
    ]


def normalize_window(raw: np.ndarray) -> tuple[np.ndarray, float, float]:
    """Z-normalize one window; a (near-)constant window becomes all zeros."""
    mean = float(raw.mean())
    std = float(raw.std())
    if std < ZERO_STD:
        return np.zeros_like(raw), mean, std
    return (raw - mean) / std, mean, std


def _offsets(n: int, length: int, stride: int) -> list[int]:
    offs = list(range(0, n - length + 1, stride))
    last = n - length
    if offs[-1] != last:
        offs.append(last)
    return offs


def make_windows(
    splits: list[SplitSeries],
    params: WindowParams,
    seed: int,
    class_of: dict[str, int] | None = None,
) -> list[Window]:
    """Slide fixed-length windows over every train region.

    Offsets are {0, stride, 2*stride, ...} plus always the final offset; a
    seeded uniform subsample caps each series at max_per_series windows.
    Series shorter than the window are left-padded with their first value.
    `class_of` optionally maps series ids to shared class indices (several
    series per class); by default each series is its own class.
    """
    rng = substream(seed, "windowing")
    out: list[Window] = []
    for idx, s in enumerate(splits):
        label = class_of[s.id] if class_of is not None else idx
        train = s.train
        if len(train) < params.length:
            train = np.concatenate([np.full(params.length - len(train), train[0]), train])
        offs = _offsets(len(train), params.length, params.stride)
        if len(offs) > params.max_per_series:
            keep = rng.choice(len(offs), size=params.max_per_series, replace=False)
            offs = [offs[i] for i in sorted(keep)]
        for start in offs:
            vals, mean, std = normalize_window(train[start : start + params.length])
            out.append(Window(label, start, vals, mean, std))
    return out


def default_window_length(splits: list[SplitSeries]) -> int:
    """Three seasonal cycles, clamped to [16, shortest train length]."""
    shortest = min(len(s.train) for s in splits)
    m = max(s.seasonal_period for s in splits)
    return min(max(3 * m, 16), shortest)


def default_stride(length: int) -> int:
    return max(1, length // 4)


def windows_tensor(windows: list[Window]) -> tuple[np.ndarray, np.ndarray]:
    """Stack windows into (n, 1, L) inputs and an int label vector."""
    x = np.stack([w.values for w in windows])[:, None, :]
    y = np.array([w.class_index for w in windows], dtype=np.int64)
    return x, y


def load_class_map(path) -> dict[str, int]:
    """Optional mapping file `series_id,class_name`: series sharing a class
    name share a window label (the many-series-per-class case)."""
    names: dict[str, str] = {}
    order: list[str] = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            parts = line.split(",")
            if len(parts) != 2:
                raise ValueError(f"{path}:{lineno}: expected 'series_id,class_name'")
            sid, cname = parts[0].strip(), parts[1].strip()
            if sid in names:
                raise ValueError(f"{path}:{lineno}: duplicate series id {sid!r}")
            names[sid] = cname
            if cname not in order:
                order.append(cname)
    index = {cname: i for i, cname in enumerate(order)}
    return {sid: index[cname] for sid, cname in names.items()}
