"""Command-line pipeline: every stage is a subcommand with one shared config.

Configuration precedence is flags > config file > defaults, and the effective
configuration is echoed into `run_manifest.txt` next to sha256 checksums of
every artifact the stage wrote, so any run can be reproduced from its output
directory alone.
"""

from __future__ import annotations

import argparse
import hashlib
import sys
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, fields
from pathlib import Path

import numpy as np

from . import analysis, figures
from .data import WindowParams, default_stride, default_window_length, ingest, load_class_map, make_windows, split
from .evaluation import PipelineConfig, build_meta_training, run_pipeline, smape
from .extractor import (
    NetworkConfig,
    aggregate,
    extract_static_features,
    extract_window_features,
    load_extractor,
    save_extractor,
    train,
)
from .forecasters import MODEL_NAMES, forecast_pool
from .metalearner import GbdtParams, combine, fit, load_model, predict_weights, save_model

SUBCOMMANDS = (
    "ingest-check",
    "train-extractor",
    "extract",
    "base-forecast",
    "train-meta",
    "forecast",
    "evaluate",
    "analyze",
)


@dataclass
class RunConfig:
    data: str = ""
    format: str = "one-row-per-series"
    m: int = 1
    horizon: int = 8
    seed: int = 0
    out: str = "out"
    threads: int = 1
    window_length: int = 0
    stride: int = 0
    max_per_series: int = 64
    n_features: int = 16
    epochs: int = 200
    batch_size: int = 128
    learning_rate: float = 1e-3
    aggregation: str = "mean"
    pool: str = ",".join(MODEL_NAMES)
    meta_rounds: int = 100
    meta_depth: int = 3
    meta_eta: float = 0.1
    meta_lambda: float = 1.0
    meta_min_child: int = 5
    extractor: str = ""
    meta_model: str = ""
    class_map: str = ""
    transfer: int = 0
    analysis_windows: int = 10
    kmeans_k: int = 0
    k_min: int = 2
    k_max: int = 0
    restarts: int = 10
    regions: str = ""

    def pool_tuple(self) -> tuple[str, ...]:
        return tuple(name.strip() for name in self.pool.split(",") if name.strip())

    def pipeline(self) -> PipelineConfig:
        return PipelineConfig(
            pool=self.pool_tuple(),
            window_length=self.window_length,
            stride=self.stride,
            max_per_series=self.max_per_series,
            n_features=self.n_features,
            epochs=self.epochs,
            batch_size=self.batch_size,
            learning_rate=self.learning_rate,
            aggregation=self.aggregation,
            meta=GbdtParams(
                rounds=self.meta_rounds,
                max_depth=self.meta_depth,
                eta=self.meta_eta,
                lam=self.meta_lambda,
                min_child=self.meta_min_child,
            ),
        )


_FIELD_TYPES = {f.name: f.type for f in fields(RunConfig)}


def parse_config_file(path: str) -> dict[str, str]:
    values: dict[str, str] = {}
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        stripped = line.strip()
        if not stripped or stripped.startswith("#"):
            continue
        if "=" not in stripped:
            raise ValueError(f"{path}:{lineno}: expected 'key = value'")
        key, value = (part.strip() for part in stripped.split("=", 1))
        if key not in _FIELD_TYPES:
            raise ValueError(f"{path}:{lineno}: unknown config key {key!r}")
        values[key] = value
    return values


def _coerce(key: str, raw: str):
    kind = _FIELD_TYPES[key]
    if kind == "int":
        return int(raw)
    if kind == "float":
        return float(raw)
    return raw


def effective_config(args: argparse.Namespace) -> RunConfig:
    config = RunConfig()
    if args.config:
        for key, raw in parse_config_file(args.config).items():
            setattr(config, key, _coerce(key, raw))
    for f in fields(RunConfig):
        flag_value = getattr(args, f.name, None)
        if flag_value is not None:
            setattr(config, f.name, flag_value)
    return config


def write_csv(path: Path, header: list[str], rows: list[tuple]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(",".join(header) + "\n")
        for row in rows:
            fh.write(",".join(repr(v) if isinstance(v, float) else str(v) for v in row) + "\n")


def write_lines(path: Path, lines: list[str]) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for line in lines:
            fh.write(line + "\n")


def write_manifest(out: Path, config: RunConfig, extras: dict[str, str]) -> None:
    lines = []
    for f in fields(RunConfig):
        if f.name == "out":
            continue  # the manifest lives there; keep reruns byte-identical across out dirs
        lines.append(f"{f.name} = {getattr(config, f.name)}")
    for key in sorted(extras):
        lines.append(f"{key} = {extras[key]}")
    for artifact in sorted(p for p in out.iterdir() if p.name != "run_manifest.txt"):
        digest = hashlib.sha256(artifact.read_bytes()).hexdigest()
        lines.append(f"artifact.{artifact.name} = {digest}")
    write_lines(out / "run_manifest.txt", lines)


def _load_dataset(config: RunConfig):
    if not config.data:
        raise ValueError("no dataset given: pass --data or set `data` in the config file")
    return ingest(config.data, config.format, m=config.m, horizon=config.horizon)


def _out_dir(config: RunConfig) -> Path:
    out = Path(config.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _window_params(splits, config: RunConfig) -> WindowParams:
    length = config.window_length or default_window_length(splits)
    stride = config.stride or default_stride(length)
    return WindowParams(length=length, stride=stride, max_per_series=config.max_per_series)


def _require_artifact(path: str, what: str, producer: str) -> Path:
    if not path:
        raise ValueError(f"no {what} given: pass --{what.replace(' ', '-')} (produced by `{producer}`)")
    p = Path(path)
    if not p.exists():
        raise ValueError(f"missing {what} {path!r}: run `{producer}` first")
    return p


def _feature_header(n: int) -> list[str]:
    return ["series_id"] + [f"f{i + 1}" for i in range(n)]


def cmd_ingest_check(config: RunConfig) -> None:
    dataset = _load_dataset(config)
    out = _out_dir(config)
    rows = [
        (s.id, len(s.values), float(s.values.min()), float(s.values.max()))
        for s in dataset.series
    ]
    write_csv(out / "dataset_summary.csv", ["series_id", "length", "min", "max"], rows)
    write_manifest(out, config, {"n_series": str(len(dataset.series))})
    print(f"ok: {len(dataset.series)} series parsed from {config.data}")


def _train_on(splits, params: WindowParams, config: RunConfig):
    class_of = load_class_map(config.class_map) if config.class_map else None
    windows = make_windows(splits, params, config.seed, class_of=class_of)
    n_classes = (max(class_of.values()) + 1) if class_of else len(splits)
    net_config = NetworkConfig(
        n_classes=n_classes, window_length=params.length, n_features=config.n_features
    )
    extractor = train(
        windows,
        net_config,
        epochs=config.epochs,
        batch_size=config.batch_size,
        lr=config.learning_rate,
        seed=config.seed,
        series_ids=None if class_of else [s.id for s in splits],
    )
    return extractor, len(windows)


def cmd_train_extractor(config: RunConfig) -> None:
    dataset = _load_dataset(config)
    splits = split(dataset)
    params = _window_params(splits, config)
    extractor, n_windows = _train_on(splits, params, config)
    out = _out_dir(config)
    save_extractor(out / "extractor.txt", extractor)
    write_csv(
        out / "training_log.csv",
        ["epoch", "loss", "accuracy"],
        [(e, float(l), float(a)) for e, l, a in extractor.report.log],
    )
    figures.training_curve(extractor.report.log, out / "training_curve.png")
    write_manifest(
        out,
        config,
        {
            "derived.window_length": str(params.length),
            "derived.stride": str(params.stride),
            "derived.n_windows": str(n_windows),
            "result.final_loss": repr(extractor.report.final_loss),
            "result.accuracy": repr(extractor.report.accuracy),
            "result.epochs_run": str(extractor.report.epochs_run),
        },
    )
    print(
        f"trained extractor: {extractor.report.epochs_run} epochs, "
        f"loss {extractor.report.final_loss:.6f}, accuracy {extractor.report.accuracy:.3f}"
    )


def cmd_extract(config: RunConfig) -> None:
    path = _require_artifact(config.extractor, "extractor", "train-extractor")
    extractor = load_extractor(path)
    dataset = _load_dataset(config)
    splits = split(dataset)
    params = WindowParams(
        length=extractor.config.window_length,
        stride=config.stride or default_stride(extractor.config.window_length),
        max_per_series=config.max_per_series,
    )
    transfer = bool(config.transfer)
    feats = extract_static_features(
        extractor, splits, params, config.aggregation, config.seed, transfer=transfer
    )
    out = _out_dir(config)
    rows = [(feats.ids[i], *[float(v) for v in feats.values[i]]) for i in range(len(feats.ids))]
    write_csv(out / "features.csv", _feature_header(feats.values.shape[1]), rows)
    write_manifest(
        out,
        config,
        {
            "derived.window_length": str(params.length),
            "derived.stride": str(params.stride),
            "derived.transfer": str(int(transfer)),
            "derived.aggregation": config.aggregation,
        },
    )
    print(f"extracted {feats.values.shape[0]}x{feats.values.shape[1]} static features")


def _pool_forecasts(splits, config: RunConfig, horizon: int):
    pool = config.pool_tuple()

    def run(s):
        return forecast_pool(s.id, s.train, s.seasonal_period, horizon, pool)

    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool_exec:
            return list(pool_exec.map(run, splits))
    return [run(s) for s in splits]


def cmd_base_forecast(config: RunConfig) -> None:
    dataset = _load_dataset(config)
    splits = split(dataset)
    sets = _pool_forecasts(splits, config, dataset.horizon)
    out = _out_dir(config)
    rows = []
    fallbacks: list[str] = []
    for fs in sets:
        fallbacks.extend(fs.fallbacks)
        for name in config.pool_tuple():
            for k, value in enumerate(fs.forecasts[name], start=1):
                rows.append((fs.series_id, name, k, float(value)))
    write_csv(out / "base_forecasts.csv", ["series_id", "model", "k", "forecast"], rows)
    write_lines(out / "fallback_log.txt", fallbacks)
    write_manifest(out, config, {"result.n_fallbacks": str(len(fallbacks))})
    print(f"forecast {len(splits)} series x {len(config.pool_tuple())} models, horizon {dataset.horizon}")


def cmd_train_meta(config: RunConfig) -> None:
    dataset = _load_dataset(config)
    splits = split(dataset)
    params = _window_params(splits, config)
    pipeline = config.pipeline()
    instances, excluded, fallbacks = build_meta_training(
        splits, dataset.horizon, pipeline, params, config.seed
    )
    model = fit(instances, pipeline.pool, pipeline.meta, config.seed)
    out = _out_dir(config)
    save_model(out / "meta_model.txt", model)
    header = _feature_header(model.n_features) + [f"err_{name}" for name in pipeline.pool]
    rows = [
        (inst.series_id, *[float(v) for v in inst.x], *[float(v) for v in inst.c])
        for inst in instances
    ]
    write_csv(out / "meta_instances.csv", header, rows)
    write_csv(
        out / "meta_training_log.csv",
        ["round", "loss"],
        [(r + 1, float(l)) for r, l in enumerate(model.train_loss)],
    )
    write_lines(out / "excluded_series.txt", excluded)
    write_lines(out / "fallback_log.txt", fallbacks)
    write_manifest(
        out,
        config,
        {
            "derived.window_length": str(params.length),
            "derived.stride": str(params.stride),
            "result.n_instances": str(len(instances)),
            "result.n_excluded": str(len(excluded)),
            "result.final_loss": repr(model.train_loss[-1]) if model.train_loss else "nan",
        },
    )
    print(f"meta-learner trained on {len(instances)} instances ({len(excluded)} series excluded)")


def cmd_forecast(config: RunConfig) -> None:
    ex_path = _require_artifact(config.extractor, "extractor", "train-extractor")
    meta_path = _require_artifact(config.meta_model, "meta-model", "train-meta")
    extractor = load_extractor(ex_path)
    model = load_model(meta_path)
    dataset = _load_dataset(config)
    splits = split(dataset)
    params = WindowParams(
        length=extractor.config.window_length,
        stride=config.stride or default_stride(extractor.config.window_length),
        max_per_series=config.max_per_series,
    )
    feats = extract_static_features(
        extractor, splits, params, config.aggregation, config.seed, transfer=bool(config.transfer)
    )
    sets = _pool_forecasts(splits, config, dataset.horizon)
    pool = config.pool_tuple()
    if tuple(model.model_names) != pool:
        raise ValueError(
            f"meta-model pool {model.model_names} does not match configured pool {pool}"
        )
    combined_rows = []
    weight_rows = []
    fallbacks: list[str] = []
    for i, fs in enumerate(sets):
        fallbacks.extend(fs.fallbacks)
        w = predict_weights(model, feats.values[i])
        stack = np.stack([fs.forecasts[name] for name in pool])
        fc = combine(w, stack)
        for j, name in enumerate(pool):
            weight_rows.append((fs.series_id, name, float(w[j])))
        for k, value in enumerate(fc, start=1):
            combined_rows.append((fs.series_id, k, float(value)))
    out = _out_dir(config)
    write_csv(out / "combined_forecast.csv", ["series_id", "k", "forecast"], combined_rows)
    write_csv(out / "weights.csv", ["series_id", "model", "weight"], weight_rows)
    write_lines(out / "fallback_log.txt", fallbacks)
    write_manifest(out, config, {"result.n_fallbacks": str(len(fallbacks))})
    print(f"combined forecasts written for {len(sets)} series")


def cmd_evaluate(config: RunConfig) -> None:
    dataset = _load_dataset(config)
    report = run_pipeline(dataset, config.pipeline(), config.seed)
    out = _out_dir(config)
    write_csv(
        out / "per_series_smape.csv",
        ["series_id", "method", "smape"],
        [(sid, method, float(v)) for sid, method, v in report.per_series],
    )
    write_csv(
        out / "summary.csv",
        ["method", "mean_smape"],
        [(name, float(v)) for name, v in report.summary],
    )
    write_csv(
        out / "weights.csv",
        ["series_id", "model", "weight"],
        [(sid, name, float(v)) for sid, name, v in report.weights],
    )
    write_lines(out / "fallback_log.txt", report.fallbacks)
    write_lines(out / "excluded_series.txt", report.excluded)
    figures.smape_summary(report.summary, out / "smape_summary.png")
    write_manifest(
        out,
        config,
        {
            "result.n_excluded": str(len(report.excluded)),
            "result.n_fallbacks": str(len(report.fallbacks)),
            **{f"result.mean_smape.{name}": repr(float(v)) for name, v in report.summary},
        },
    )
    for name, value in report.summary:
        print(f"{name}: mean sMAPE {value:.4f}")


def cmd_analyze(config: RunConfig) -> None:
    path = _require_artifact(config.extractor, "extractor", "train-extractor")
    extractor = load_extractor(path)
    dataset = _load_dataset(config)
    splits = split(dataset)
    params = WindowParams(
        length=extractor.config.window_length,
        stride=config.stride or default_stride(extractor.config.window_length),
        max_per_series=config.analysis_windows,
    )
    windows = make_windows(splits, params, config.seed)
    ids = [s.id for s in splits]
    win_ids = [ids[w.class_index] for w in windows]
    feats = extract_window_features(extractor, windows, win_ids)
    by_series = {sid: [] for sid in ids}
    for fv in feats:
        by_series[fv.series_id].append(fv)

    out = _out_dir(config)
    n_feat = extractor.config.n_features

    # stability of window features
    records = analysis.stability(
        {sid: np.stack([fv.values for fv in group]) for sid, group in by_series.items()}
    )
    write_csv(
        out / "stability.csv",
        ["series_id"] + [f"ratio_f{i + 1}" for i in range(n_feat)] + ["aggregate", "flagged"],
        [
            (
                r.series_id,
                *[float(v) for v in r.ratios],
                float(r.aggregate),
                ";".join(str(i + 1) for i in r.flagged_features),
            )
            for r in records
        ],
    )
    all_ratios = np.concatenate([r.ratios for r in records])
    bins = analysis.histogram_bins(all_ratios)
    write_csv(
        out / "stability_hist.csv",
        ["bin_lo", "bin_hi", "count"],
        [(float(lo), float(hi), c) for lo, hi, c in bins],
    )
    figures.stability_histogram(bins, out / "stability_hist.png")

    # static features for the global diagnostics
    static = np.stack([aggregate(by_series[sid], config.aggregation).values for sid in ids])

    n = len(ids)
    k = config.kmeans_k or max(2, min(8, n - 1))
    report = analysis.kmeans_pp(static, k, restarts=config.restarts, seed=config.seed)
    write_csv(
        out / "cluster_assignments.csv",
        ["series_id", "cluster"],
        [(ids[i], int(report.assignments[i])) for i in range(n)],
    )
    write_csv(
        out / "cluster_profiles.csv",
        ["cluster", "stat"] + [f"f{i + 1}" for i in range(n_feat)],
        [(j, "mean", *[float(v) for v in report.feature_means[j]]) for j in range(k)]
        + [(j, "sd", *[float(v) for v in report.feature_stds[j]]) for j in range(k)],
    )
    figures.cluster_profiles(report.feature_means, report.feature_stds, out / "cluster_profiles.png")

    k_max = config.k_max or min(10, n - 1)
    sweep = analysis.elbow_sweep(
        static, range(config.k_min, k_max + 1), restarts=config.restarts, seed=config.seed
    )
    elbow_rows = [(r.k, float(r.inertia), float(r.silhouette)) for r in sweep]
    write_csv(out / "elbow.csv", ["k", "inertia", "silhouette"], elbow_rows)
    figures.elbow_curve(elbow_rows, out / "elbow.png")

    coords, _, rank_deficient = analysis.pca_2d(static)
    write_csv(
        out / "coords_2d.csv",
        ["series_id", "x", "y"],
        [(ids[i], float(coords[i, 0]), float(coords[i, 1])) for i in range(n)],
    )
    figures.projection_scatter(coords, report.assignments, out / "projection.png")

    closest, farthest = analysis.similarity_extremes(ids, static)
    write_csv(
        out / "extreme_pairs.csv",
        ["kind", "series_a", "series_b", "distance"],
        [("closest", *closest), ("farthest", *farthest)],
    )
    train_of = {s.id: s.train for s in splits}
    figures.extreme_pairs(
        (closest[0], train_of[closest[0]], closest[1], train_of[closest[1]]),
        (farthest[0], train_of[farthest[0]], farthest[1], train_of[farthest[1]]),
        out / "extreme_pairs.png",
    )

    extras = {
        "derived.k": str(k),
        "derived.rank_deficient_projection": str(int(rank_deficient)),
        "derived.window_length": str(params.length),
        "derived.stride": str(params.stride),
    }
    if config.regions:
        centers = np.array(
            [[float(v) for v in part.split(",")] for part in config.regions.split(";")]
        )
        listing = analysis.nearest_series(ids, coords, centers)
        write_csv(
            out / "region_nearest.csv",
            ["region_x", "region_y", "nearest"],
            [
                (float(centers[i, 0]), float(centers[i, 1]), ";".join(listing[i]))
                for i in range(len(centers))
            ],
        )
    write_manifest(out, config, extras)
    print(f"diagnostics written for {n} series (k={k})")


_COMMANDS = {
    "ingest-check": cmd_ingest_check,
    "train-extractor": cmd_train_extractor,
    "extract": cmd_extract,
    "base-forecast": cmd_base_forecast,
    "train-meta": cmd_train_meta,
    "forecast": cmd_forecast,
    "evaluate": cmd_evaluate,
    "analyze": cmd_analyze,
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="featcast",
        description="Static-feature extraction and forecast combination pipeline",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        p = sub.add_parser(name, help=f"run the {name} stage")
        p.add_argument("--config", default="", help="flat key = value config file")
        p.add_argument("--data", help="dataset file")
        p.add_argument("--format", choices=["long-csv", "one-row-per-series"])
        p.add_argument("--m", type=int, help="seasonal period")
        p.add_argument("--horizon", type=int, help="test horizon")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("--out", help="output directory")
        p.add_argument("--threads", type=int, help="cap on per-series parallelism")
        p.add_argument("--window-length", type=int, dest="window_length")
        p.add_argument("--stride", type=int)
        p.add_argument("--max-per-series", type=int, dest="max_per_series")
        p.add_argument("--n-features", type=int, dest="n_features")
        p.add_argument("--epochs", type=int)
        p.add_argument("--batch-size", type=int, dest="batch_size")
        p.add_argument("--learning-rate", type=float, dest="learning_rate")
        p.add_argument("--aggregation", choices=["mean", "medoid"])
        p.add_argument("--pool", help="comma-separated base model names")
        p.add_argument("--meta-rounds", type=int, dest="meta_rounds")
        p.add_argument("--meta-depth", type=int, dest="meta_depth")
        p.add_argument("--meta-eta", type=float, dest="meta_eta")
        p.add_argument("--meta-lambda", type=float, dest="meta_lambda")
        p.add_argument("--meta-min-child", type=int, dest="meta_min_child")
        p.add_argument("--extractor", help="trained extractor file")
        p.add_argument("--meta-model", dest="meta_model", help="trained meta-learner file")
        p.add_argument("--class-map", dest="class_map", help="series_id,class_name mapping file")
        p.add_argument("--transfer", type=int, help="1 to extract for series unseen at training")
        p.add_argument("--analysis-windows", type=int, dest="analysis_windows")
        p.add_argument("--kmeans-k", type=int, dest="kmeans_k")
        p.add_argument("--k-min", type=int, dest="k_min")
        p.add_argument("--k-max", type=int, dest="k_max")
        p.add_argument("--restarts", type=int)
        p.add_argument("--regions", help="2-D region centers 'x,y;x,y' for nearest-series listing")
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        config = effective_config(args)
        _COMMANDS[args.command](config)
    except (ValueError, RuntimeError, FloatingPointError, OSError, KeyError) as exc:
        print(f"featcast {args.command}: {exc}", file=sys.stderr)
        return 1
    return 0


if __name__ == "__main__":
    sys.exit(main())
