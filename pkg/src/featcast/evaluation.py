"""sMAPE metric and the two-phase combination backtest.

Phase 1 carves a validation block off the end of every training region,
scores the base pool there, and pairs those errors with features from an
extractor trained on the inner region only: that is the meta-learner's
training set.  Phase 2 refits everything on the full training region,
predicts weights, and scores base models plus the combination on the held
out test block.  Test values are only ever read in the final scoring step.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .data import Dataset, SplitSeries, WindowParams, default_stride, default_window_length, make_windows, split
from .extractor import NetworkConfig, TrainedExtractor, extract_static_features, train
from .forecasters import MODEL_NAMES, forecast_pool
from .metalearner import GbdtParams, MetaInstance, combine, fit, predict_weights

COMBINED = "combined"
MIN_INNER_TRAIN = 4  # shortest series any base forecaster accepts


@dataclass
class PipelineConfig:
    pool: tuple[str, ...] = MODEL_NAMES
    window_length: int = 0  # 0 = derive from the data
    stride: int = 0  # 0 = length // 4
    max_per_series: int = 64
    n_features: int = 16
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    aggregation: str = "mean"
    meta: GbdtParams = field(default_factory=GbdtParams)


@dataclass
class MetricReport:
    methods: list[str]
    per_series: list[tuple[str, str, float]]  # (series_id, method, smape)
    summary: list[tuple[str, float]]  # (method, mean smape)
    weights: list[tuple[str, str, float]]  # (series_id, model, weight)
    fallbacks: list[str] = field(default_factory=list)
    excluded: list[str] = field(default_factory=list)

    def mean_smape(self, method: str) -> float:
        for name, value in self.summary:
            if name == method:
                return value
        raise KeyError(method)


def smape(actual, forecast) -> float:
    """200/n * sum |y - f| / (|y| + |f|); a term where both sides are zero
    counts as a perfect forecast (0), not the 200 maximum."""
    a = np.asarray(actual, dtype=np.float64)
    f = np.asarray(forecast, dtype=np.float64)
    if a.shape != f.shape or a.ndim != 1:
        raise ValueError(f"length mismatch: actual {a.shape} vs forecast {f.shape}")
    if len(a) < 1:
        raise ValueError("smape needs at least one point")
    if not (np.all(np.isfinite(a)) and np.all(np.isfinite(f))):
        raise ValueError("smape inputs must be finite")
    denom = np.abs(a) + np.abs(f)
    terms = np.zeros(len(a))
    nz = denom > 0
    terms[nz] = np.abs(a[nz] - f[nz]) / denom[nz]
    return float(200.0 / len(a) * terms.sum())


def _window_params(splits: list[SplitSeries], config: PipelineConfig) -> WindowParams:
    length = config.window_length or default_window_length(splits)
    stride = config.stride or default_stride(length)
    return WindowParams(length=length, stride=stride, max_per_series=config.max_per_series)


def _train_extractor(
    splits: list[SplitSeries], params: WindowParams, config: PipelineConfig, seed: int
) -> TrainedExtractor:
    windows = make_windows(splits, params, seed)
    net_config = NetworkConfig(
        n_classes=len(splits), window_length=params.length, n_features=config.n_features
    )
    return train(
        windows,
        net_config,
        epochs=config.epochs,
        batch_size=config.batch_size,
        lr=config.learning_rate,
        seed=seed,
        series_ids=[s.id for s in splits],
    )


def build_meta_training(
    splits: list[SplitSeries],
    horizon: int,
    config: PipelineConfig,
    params: WindowParams,
    seed: int,
) -> tuple[list[MetaInstance], list[str], list[str]]:
    """Inner holdout: fit bases and the extractor before the last `horizon`
    points of each training region, score bases on those points.

    Returns (instances, excluded series ids, fallback notes).
    """
    usable, excluded = [], []
    for s in splits:
        if len(s.train) > 2 * horizon and len(s.train) - horizon >= MIN_INNER_TRAIN:
            usable.append(s)
        else:
            excluded.append(s.id)
    if not usable:
        raise ValueError("no series long enough for the inner validation split")

    inner = [
        SplitSeries(s.id, s.train[:-horizon].copy(), s.train[-horizon:].copy(), s.seasonal_period)
        for s in usable
    ]
    fallbacks: list[str] = []
    errors = np.zeros((len(inner), len(config.pool)))
    for i, s in enumerate(inner):
        fs = forecast_pool(s.id, s.train, s.seasonal_period, horizon, config.pool)
        fallbacks.extend(fs.fallbacks)
        for j, name in enumerate(config.pool):
            errors[i, j] = smape(s.test, fs.forecasts[name])

    extractor = _train_extractor(inner, params, config, seed)
    feats = extract_static_features(extractor, inner, params, config.aggregation, seed)
    instances = [
        MetaInstance(series_id=s.id, x=feats.values[i], c=errors[i]) for i, s in enumerate(inner)
    ]
    return instances, excluded, fallbacks


def run_pipeline(dataset: Dataset, config: PipelineConfig, seed: int) -> MetricReport:
    """Full two-phase backtest; returns the scored report."""
    splits = split(dataset)
    params = _window_params(splits, config)

    instances, excluded, fallbacks = build_meta_training(
        splits, dataset.horizon, config, params, seed
    )
    meta_model = fit(instances, config.pool, config.meta, seed)

    extractor = _train_extractor(splits, params, config, seed)
    feats = extract_static_features(extractor, splits, params, config.aggregation, seed)

    per_series: list[tuple[str, str, float]] = []
    weights_rows: list[tuple[str, str, float]] = []
    sums: dict[str, float] = {name: 0.0 for name in (*config.pool, COMBINED)}
    for i, s in enumerate(splits):
        fs = forecast_pool(s.id, s.train, s.seasonal_period, dataset.horizon, config.pool)
        fallbacks.extend(fs.fallbacks)
        stack = np.stack([fs.forecasts[name] for name in config.pool])
        w = predict_weights(meta_model, feats.values[i])
        combined = combine(w, stack)
        if np.any((s.test == 0) & (combined == 0)):
            fallbacks.append(f"{s.id}: both-zero sMAPE terms counted as 0")
        for j, name in enumerate(config.pool):
            value = smape(s.test, fs.forecasts[name])
            per_series.append((s.id, name, value))
            sums[name] += value
            weights_rows.append((s.id, name, float(w[j])))
        value = smape(s.test, combined)
        per_series.append((s.id, COMBINED, value))
        sums[COMBINED] += value

    n = len(splits)
    methods = [*config.pool, COMBINED]
    summary = [(name, sums[name] / n) for name in methods]
    return MetricReport(
        methods=methods,
        per_series=per_series,
        summary=summary,
        weights=weights_rows,
        fallbacks=fallbacks,
        excluded=excluded,
    )
