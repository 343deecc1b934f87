"""Window-classifier network: train, decapitate, and emit static features.

The classifier treats every series as one class over its sliding windows.
After training, the output head is ignored and the 16-unit dense layer below
it becomes the feature extractor.  Per-series static features are the mean or
medoid of that layer's activations across the series' windows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .adam import Adam
from .data import SplitSeries, Window, WindowParams, make_windows, windows_tensor
from .layers import BatchNorm1d, Conv1d, Dense, GlobalAvgPool, Network, ReLU, sparse_xent
from .netio import load_network, save_network
from .rng import substream

EARLY_STOP_DELTA = 1e-4
EARLY_STOP_PATIENCE = 10


@dataclass
class NetworkConfig:
    n_classes: int
    window_length: int
    n_features: int = 16
    conv_blocks: tuple[tuple[int, int], ...] = ((128, 8), (256, 5), (128, 3))

    def __post_init__(self):
        if self.n_classes < 2:
            raise ValueError("need at least 2 classes")
        if self.n_features < 2:
            raise ValueError("need at least 2 features")


@dataclass
class TrainingReport:
    final_loss: float
    accuracy: float
    epochs_run: int
    seed: int
    log: list[tuple[int, float, float]] = field(default_factory=list)  # (epoch, loss, accuracy)


@dataclass
class TrainedExtractor:
    config: NetworkConfig
    net: Network
    report: TrainingReport
    series_ids: list[str] | None = None

    @property
    def feature_layer_count(self) -> int:
        # all layers except the classification head
        return len(self.net.layers) - 1


@dataclass
class FeatureVector:
    series_id: str
    kind: str  # window | mean | medoid
    values: np.ndarray
    window_offset: int | None = None


@dataclass
class FeatureMatrix:
    ids: list[str]
    values: np.ndarray  # (n_series, n_features)
    method: str


def build_network(config: NetworkConfig, seed: int) -> Network:
    rng = substream(seed, "init")
    layers = []
    ch = 1
    for filters, kernel in config.conv_blocks:
        layers.append(Conv1d(ch, filters, kernel, rng=rng))
        layers.append(BatchNorm1d(filters))
        layers.append(ReLU())
        ch = filters
    layers.append(GlobalAvgPool())
    layers.append(Dense(ch, config.n_features, rng=rng))  # feature layer, linear
    layers.append(Dense(config.n_features, config.n_classes, rng=rng))
    return Network(layers)


def _balanced_epoch_order(labels: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Shuffle window indices, capping each class at the median class count."""
    classes, counts = np.unique(labels, return_counts=True)
    cap = int(np.ceil(np.median(counts)))
    chosen = []
    for c in classes:
        idx = np.flatnonzero(labels == c)
        if len(idx) > cap:
            idx = rng.choice(idx, size=cap, replace=False)
        chosen.append(idx)
    order = np.concatenate(chosen)
    rng.shuffle(order)
    return order


def _batches(order: np.ndarray, batch_size: int):
    n = len(order)
    starts = list(range(0, n, batch_size))
    for i, s in enumerate(starts):
        e = s + batch_size
        # batchnorm needs >= 2 rows, so a trailing singleton joins the previous batch
        if i + 1 == len(starts) and n - s == 1 and s > 0:
            return
        if i + 2 == len(starts) and n - starts[-1] == 1:
            e = n
        yield order[s:e]


def train(
    windows: list[Window],
    config: NetworkConfig,
    epochs: int = 200,
    batch_size: int = 128,
    lr: float = 1e-3,
    seed: int = 0,
    series_ids: list[str] | None = None,
) -> TrainedExtractor:
    """Train the classifier with sparse cross-entropy and Adam.

    Batches are class-balanced per epoch; training stops early once the loss
    has improved by less than 1e-4 for 10 consecutive epochs.
    """
    x, y = windows_tensor(windows)
    present = np.unique(y)
    if len(present) < 2:
        raise ValueError("need windows from at least 2 classes to train")
    if present.min() < 0 or present.max() >= config.n_classes:
        raise ValueError(f"window labels outside [0, {config.n_classes})")
    missing = set(range(config.n_classes)) - set(present.tolist())
    if missing:
        raise ValueError(f"classes without any window: {sorted(missing)}")
    if x.shape[2] != config.window_length:
        raise ValueError(f"window length {x.shape[2]} does not match config length {config.window_length}")

    net = build_network(config, seed)
    opt = Adam(lr=lr)
    rng = substream(seed, "batching")
    log: list[tuple[int, float, float]] = []
    best_loss = np.inf
    stale = 0
    epochs_run = 0
    for epoch in range(1, epochs + 1):
        order = _balanced_epoch_order(y, rng)
        loss_sum = 0.0
        hits = 0
        seen = 0
        for batch_no, idx in enumerate(_batches(order, batch_size), start=1):
            xb, yb = x[idx], y[idx]
            net.zero_grad()
            try:
                logits = net.forward(xb, training=True)
                loss, dlogits = sparse_xent(logits, yb)
                if not np.isfinite(loss):
                    raise FloatingPointError("non-finite training loss")
                net.backward(dlogits)
                opt.step(net.params())
            except FloatingPointError as exc:
                raise FloatingPointError(f"{exc} (epoch {epoch}, batch {batch_no})") from None
            loss_sum += loss * len(idx)
            hits += int((logits.argmax(axis=1) == yb).sum())
            seen += len(idx)
        epoch_loss = loss_sum / seen
        log.append((epoch, epoch_loss, hits / seen))
        epochs_run = epoch
        if epoch_loss < best_loss - EARLY_STOP_DELTA:
            best_loss = epoch_loss
            stale = 0
        else:
            best_loss = min(best_loss, epoch_loss)
            stale += 1
            if stale >= EARLY_STOP_PATIENCE:
                break

    final_acc = _accuracy(net, x, y)
    report = TrainingReport(final_loss=log[-1][1], accuracy=final_acc, epochs_run=epochs_run, seed=seed, log=log)
    return TrainedExtractor(config=config, net=net, report=report, series_ids=list(series_ids) if series_ids else None)


def _accuracy(net: Network, x: np.ndarray, y: np.ndarray, chunk: int = 512) -> float:
    hits = 0
    for s in range(0, len(x), chunk):
        logits = net.forward(x[s : s + chunk], training=False)
        hits += int((logits.argmax(axis=1) == y[s : s + chunk]).sum())
    return hits / len(x)


def window_features(extractor: TrainedExtractor, x: np.ndarray, chunk: int = 512) -> np.ndarray:
    """Feature-layer activations for a (n, 1, L) window stack, inference mode."""
    if x.ndim != 3 or x.shape[1] != 1:
        raise ValueError("expected windows shaped (n, 1, length)")
    if x.shape[2] != extractor.config.window_length:
        raise ValueError(
            f"window length {x.shape[2]} does not match extractor length {extractor.config.window_length}"
        )
    parts = [
        extractor.net.forward_until(x[s : s + chunk], extractor.feature_layer_count)
        for s in range(0, len(x), chunk)
    ]
    return np.concatenate(parts, axis=0)


def extract_window_features(
    extractor: TrainedExtractor, windows: list[Window], ids: list[str]
) -> list[FeatureVector]:
    """Per-window features, one FeatureVector per input window, same order."""
    if len(ids) != len(windows):
        raise ValueError("ids must align with windows")
    x, _ = windows_tensor(windows)
    feats = window_features(extractor, x)
    return [
        FeatureVector(series_id=sid, kind="window", values=feats[i], window_offset=windows[i].start)
        for i, sid in enumerate(ids)
    ]


def aggregate(features: list[FeatureVector], method: str) -> FeatureVector:
    """Collapse one series' window features to a single static vector.

    mean: component-wise average.  medoid: the member minimizing the summed
    Euclidean distance to the others (ties go to the lowest window offset).
    """
    if not features:
        raise ValueError("cannot aggregate an empty feature list")
    if method not in ("mean", "medoid"):
        raise ValueError(f"unknown aggregation method {method!r}")
    sid = features[0].series_id
    stack = np.stack([f.values for f in features])
    if method == "mean":
        return FeatureVector(series_id=sid, kind="mean", values=stack.mean(axis=0))
    ordered = sorted(range(len(features)), key=lambda i: (features[i].window_offset or 0))
    pts = stack[ordered]
    dists = np.sqrt(((pts[:, None, :] - pts[None, :, :]) ** 2).sum(axis=2))
    best = int(np.argmin(dists.sum(axis=1)))
    pick = ordered[best]
    return FeatureVector(
        series_id=sid, kind="medoid", values=features[pick].values.copy(),
        window_offset=features[pick].window_offset,
    )


def save_extractor(path, extractor: TrainedExtractor) -> None:
    meta = {
        "n_classes": str(extractor.config.n_classes),
        "window_length": str(extractor.config.window_length),
        "n_features": str(extractor.config.n_features),
        "conv_blocks": ";".join(f"{f},{k}" for f, k in extractor.config.conv_blocks),
        "final_loss": repr(extractor.report.final_loss),
        "accuracy": repr(extractor.report.accuracy),
        "epochs_run": str(extractor.report.epochs_run),
        "seed": str(extractor.report.seed),
    }
    if extractor.series_ids is not None:
        meta["series_ids"] = ",".join(extractor.series_ids)
    save_network(path, extractor.net, meta)


def load_extractor(path) -> TrainedExtractor:
    net, meta = load_network(path)
    config = NetworkConfig(
        n_classes=int(meta["n_classes"]),
        window_length=int(meta["window_length"]),
        n_features=int(meta["n_features"]),
        conv_blocks=tuple(
            (int(f), int(k)) for f, k in (pair.split(",") for pair in meta["conv_blocks"].split(";"))
        ),
    )
    report = TrainingReport(
        final_loss=float(meta["final_loss"]),
        accuracy=float(meta["accuracy"]),
        epochs_run=int(meta["epochs_run"]),
        seed=int(meta["seed"]),
    )
    ids = meta["series_ids"].split(",") if "series_ids" in meta else None
    return TrainedExtractor(config=config, net=net, report=report, series_ids=ids)


def extract_static_features(
    extractor: TrainedExtractor,
    splits: list[SplitSeries],
    params: WindowParams,
    method: str = "mean",
    seed: int = 0,
    transfer: bool = False,
) -> FeatureMatrix:
    """One static feature row per series, in dataset order."""
    ids = [s.id for s in splits]
    if extractor.series_ids is not None and extractor.series_ids != ids and not transfer:
        raise ValueError(
            "extractor was trained on different series; pass transfer=True to extract anyway"
        )
    windows = make_windows(splits, params, seed)
    win_ids = []
    by_series: dict[str, list[int]] = {sid: [] for sid in ids}
    for i, w in enumerate(windows):
        sid = ids[w.class_index]
        win_ids.append(sid)
        by_series[sid].append(i)
    feats = extract_window_features(extractor, windows, win_ids)
    rows = [aggregate([feats[i] for i in by_series[sid]], method).values for sid in ids]
    return FeatureMatrix(ids=ids, values=np.stack(rows), method=method)
