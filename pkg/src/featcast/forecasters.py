"""Pool of classical base forecasters whose outputs get combined.

All forecasters are pure functions of (train, m, h) returning an h-step point
forecast plus an optional fallback note (fallbacks are flagged, never
silent).  Parameter choices run on coarse deterministic grids, so every model
is scale-equivariant and reproducible without an optimizer dependency.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

MODEL_NAMES = ("naive2", "seasonal_naive", "rw_drift", "theta", "ets")

SEASONALITY_Z = 1.645  # 90% band, the M4 convention

_SMOOTH_GRID = np.arange(0.05, 0.951, 0.05)
_PHI_GRID = np.arange(0.80, 0.981, 0.02)
_THETA_ALPHA_GRID = np.arange(0.01, 0.991, 0.01)
_SSE_FLOOR = 1e-12


@dataclass
class ForecastSet:
    series_id: str
    horizon: int
    forecasts: dict[str, np.ndarray]
    fallbacks: list[str] = field(default_factory=list)


def _as_train(train) -> np.ndarray:
    arr = np.asarray(train, dtype=np.float64)
    if arr.ndim != 1 or len(arr) < 1:
        raise ValueError("train must be a non-empty 1-D array")
    if not np.all(np.isfinite(arr)):
        raise ValueError("train contains non-finite values")
    return arr


def naive(train, h: int) -> np.ndarray:
    y = _as_train(train)
    return np.full(h, y[-1])


def seasonal_naive(train, m: int, h: int) -> tuple[np.ndarray, str | None]:
    """Repeat the last observed season: y[T+k] = y[T+k-m*ceil(k/m)]."""
    y = _as_train(train)
    if m > len(y):
        return naive(y, h), f"seasonal_naive: m={m} exceeds series length {len(y)}, used naive"
    n = len(y)
    k = np.arange(1, h + 1)
    idx = n + k - m * np.ceil(k / m).astype(int) - 1
    return y[idx], None


def rw_drift(train, h: int) -> tuple[np.ndarray, str | None]:
    """Random walk with drift: extend the line through the first and last point."""
    y = _as_train(train)
    if len(y) < 2:
        raise ValueError("rw_drift needs at least 2 observations")
    drift = (y[-1] - y[0]) / (len(y) - 1)
    return y[-1] + np.arange(1, h + 1) * drift, None


def acf(y: np.ndarray, max_lag: int) -> np.ndarray:
    yc = y - y.mean()
    denom = float(np.dot(yc, yc))
    if denom <= 0:
        return np.zeros(max_lag)
    return np.array([float(np.dot(yc[:-k], yc[k:])) / denom for k in range(1, max_lag + 1)])


def seasonality_test(train, m: int) -> bool:
    """ACF-based 90% test for seasonality at lag m (needs 3 full cycles)."""
    y = _as_train(train)
    if m <= 1 or len(y) < 3 * m:
        return False
    rho = acf(y, m)
    limit = SEASONALITY_Z * np.sqrt((1.0 + 2.0 * np.sum(rho[:-1] ** 2)) / len(y))
    return bool(abs(rho[-1]) > limit)


def seasonal_indices(y: np.ndarray, m: int) -> np.ndarray:
    """Multiplicative classical-decomposition indices, averaging to 1.

    The trend is a centered moving average of order m (half-weights at the
    ends when m is even); index j applies to 0-based positions t = j (mod m).
    """
    n = len(y)
    if m % 2 == 1:
        half = m // 2
        kernel = np.full(m, 1.0 / m)
    else:
        half = m // 2
        kernel = np.full(m + 1, 1.0 / m)
        kernel[0] = kernel[-1] = 0.5 / m
    cma = np.convolve(y, kernel, mode="valid")  # centered at positions half .. n-1-half
    ratios = y[half : n - half] / cma
    sums = np.zeros(m)
    counts = np.zeros(m)
    for i, r in enumerate(ratios):
        j = (i + half) % m
        sums[j] += r
        counts[j] += 1
    if np.any(counts == 0):
        raise ValueError("not enough data for a full set of seasonal indices")
    idx = sums / counts
    return idx * m / idx.sum()


def _deseasonalize(y: np.ndarray, m: int) -> tuple[np.ndarray, np.ndarray | None, str | None]:
    """Return (deseasonalized series, indices or None, fallback note or None)."""
    if not seasonality_test(y, m):
        return y, None, None
    if np.any(y <= 0):
        return y, None, "multiplicative decomposition needs positive values, used unadjusted series"
    idx = seasonal_indices(y, m)
    t = np.arange(len(y))
    return y / idx[t % m], idx, None


def naive2(train, m: int, h: int) -> tuple[np.ndarray, str | None]:
    """Naive on the seasonally adjusted series, re-seasonalized."""
    y = _as_train(train)
    if len(y) < 3:
        raise ValueError("naive2 needs at least 3 observations")
    des, idx, note = _deseasonalize(y, m)
    fc = np.full(h, des[-1])
    if idx is not None:
        t = len(y) + np.arange(h)
        fc = fc * idx[t % m]
        note_out = None
    else:
        note_out = f"naive2: {note}" if note else None
    return fc, note_out


def _ses_grid(x: np.ndarray, alphas: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Run SES for every alpha at once; returns (final levels, SSE)."""
    level = np.full(len(alphas), x[0])
    sse = np.zeros(len(alphas))
    for t in range(1, len(x)):
        e = x[t] - level
        sse += e * e
        level = level + alphas * e
    return level, sse


def theta(train, m: int, h: int) -> tuple[np.ndarray, str | None]:
    """Two-line theta: SES plus half the OLS drift, seasonally adjusted."""
    y = _as_train(train)
    if len(y) < 4:
        raise ValueError("theta needs at least 4 observations")
    des, idx, note = _deseasonalize(y, m)
    levels, sses = _ses_grid(des, _THETA_ALPHA_GRID)
    best = int(np.argmin(sses))
    alpha = float(_THETA_ALPHA_GRID[best])
    level = float(levels[best])
    t = np.arange(len(des), dtype=np.float64)
    slope = float(np.polyfit(t, des, 1)[0]) if np.ptp(des) > 0 else 0.0
    k = np.arange(1, h + 1, dtype=np.float64)
    fc = level + (k - 1.0 + 1.0 / alpha) * (slope / 2.0)
    if idx is not None:
        tt = len(y) + np.arange(h)
        fc = fc * idx[tt % m]
        note_out = None
    else:
        note_out = f"theta: {note}" if note else None
    return fc, note_out


def _holt_grid(x: np.ndarray, alphas: np.ndarray, betas: np.ndarray, phis: np.ndarray | None):
    """Holt / damped-Holt over the full parameter grid; returns per-combo state."""
    if phis is None:
        a, b = np.meshgrid(alphas, betas, indexing="ij")
        a, b = a.ravel(), b.ravel()
        p = np.ones_like(a)
    else:
        a, b, p = np.meshgrid(alphas, betas, phis, indexing="ij")
        a, b, p = a.ravel(), b.ravel(), p.ravel()
    level = np.full(a.shape, x[0])
    trend = np.full(a.shape, x[1] - x[0])
    sse = np.zeros_like(level)
    for t in range(1, len(x)):
        f = level + p * trend
        e = x[t] - f
        sse += e * e
        new_level = a * x[t] + (1.0 - a) * f
        trend = b * (new_level - level) + (1.0 - b) * p * trend
        level = new_level
    return level, trend, p, sse, a, b


def _hw_grid(x: np.ndarray, m: int, alphas: np.ndarray, betas: np.ndarray, gammas: np.ndarray):
    """Additive Holt-Winters over the grid; SSE counts errors from t >= m."""
    a, b, g = np.meshgrid(alphas, betas, gammas, indexing="ij")
    a, b, g = a.ravel(), b.ravel(), g.ravel()
    first = x[:m].mean()
    second = x[m : 2 * m].mean()
    level = np.full(a.shape, first)
    trend = np.full(a.shape, (second - first) / m)
    seas = np.repeat((x[:m] - first)[None, :], len(a), axis=0)  # (combos, m)
    sse = np.zeros_like(level)
    for t in range(len(x)):
        j = t % m
        f = level + trend + seas[:, j]
        e = x[t] - f
        if t >= m:
            sse += e * e
        new_level = a * (x[t] - seas[:, j]) + (1.0 - a) * (level + trend)
        trend = b * (new_level - level) + (1.0 - b) * trend
        seas[:, j] = g * (x[t] - new_level) + (1.0 - g) * seas[:, j]
        level = new_level
    return level, trend, seas, sse, len(x) - m


def _aicc(sse: float, n_err: int, n_params: int) -> float:
    if n_err <= n_params + 1:
        return np.inf
    sse = max(sse, _SSE_FLOOR)
    return n_err * np.log(sse / n_err) + 2 * n_params + 2 * n_params * (n_params + 1) / (n_err - n_params - 1)


def ets(train, m: int, h: int) -> tuple[np.ndarray, str | None]:
    """Exponential-smoothing family chosen by AICc over a coarse grid.

    Candidates: SES, Holt, damped Holt, and additive Holt-Winters when the
    series is long enough for two full seasons.
    """
    y = _as_train(train)
    if len(y) < 2:
        raise ValueError("ets needs at least 2 observations")
    n = len(y)
    candidates: list[tuple[float, np.ndarray]] = []  # (aicc, forecast)

    levels, sses = _ses_grid(y, _SMOOTH_GRID)
    i = int(np.argmin(sses))
    if np.isfinite(sses[i]):
        candidates.append((_aicc(float(sses[i]), n - 1, 2), np.full(h, levels[i])))

    if n >= 3:
        level, trend, _, sse, _, _ = _holt_grid(y, _SMOOTH_GRID, _SMOOTH_GRID, None)
        i = int(np.argmin(sse))
        if np.isfinite(sse[i]):
            fc = level[i] + np.arange(1, h + 1) * trend[i]
            candidates.append((_aicc(float(sse[i]), n - 1, 4), fc))

        level, trend, phi, sse, _, _ = _holt_grid(y, _SMOOTH_GRID, _SMOOTH_GRID, _PHI_GRID)
        i = int(np.argmin(sse))
        if np.isfinite(sse[i]):
            damp = np.cumsum(phi[i] ** np.arange(1, h + 1))
            fc = level[i] + damp * trend[i]
            candidates.append((_aicc(float(sse[i]), n - 1, 5), fc))

    if m > 1 and n >= 2 * m + 2:
        level, trend, seas, sse, n_err = _hw_grid(y, m, _SMOOTH_GRID, _SMOOTH_GRID, _SMOOTH_GRID)
        i = int(np.argmin(sse))
        if np.isfinite(sse[i]):
            k = np.arange(1, h + 1)
            fc = level[i] + k * trend[i] + seas[i, (n + k - 1) % m]
            candidates.append((_aicc(float(sse[i]), n_err, 6), fc))

    finite = [(aicc, fc) for aicc, fc in candidates if np.all(np.isfinite(fc)) and np.isfinite(aicc)]
    if not finite:
        return naive(y, h), "ets: no candidate model could be fit, used naive"
    best = min(range(len(finite)), key=lambda j: finite[j][0])
    return finite[best][1], None


def forecast_pool(
    series_id: str, train, m: int, h: int, models: tuple[str, ...] = MODEL_NAMES
) -> ForecastSet:
    """Run every requested base model on one series."""
    out: dict[str, np.ndarray] = {}
    fallbacks: list[str] = []
    for name in models:
        if name == "naive2":
            fc, note = naive2(train, m, h)
        elif name == "seasonal_naive":
            fc, note = seasonal_naive(train, m, h)
        elif name == "rw_drift":
            fc, note = rw_drift(train, h)
        elif name == "theta":
            fc, note = theta(train, m, h)
        elif name == "ets":
            fc, note = ets(train, m, h)
        else:
            raise ValueError(f"unknown base model {name!r}")
        if len(fc) != h or not np.all(np.isfinite(fc)):
            raise FloatingPointError(f"{name} produced an invalid forecast for series {series_id!r}")
        out[name] = fc
        if note:
            fallbacks.append(f"{series_id}: {note}")
    return ForecastSet(series_id=series_id, horizon=h, forecasts=out, fallbacks=fallbacks)
