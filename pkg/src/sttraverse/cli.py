"""Command-line surface binding the modules into reproducible experiments.

Every artifact-producing command writes into a run directory named by the
hash of its effective configuration (no timestamps), echoes that exact
configuration into ``config.ini``, and refuses to overwrite an existing run
unless ``--force`` is given.  Config files use flat ``key = value`` lines
under ``[section]`` headers; every known key can be overridden with a
``--key value`` flag.

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 numerical
failure.
"""

from __future__ import annotations

import argparse
import configparser
import hashlib
import shutil
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import analysis, data as data_mod
from .checkpoint import load_checkpoint, save_checkpoint
from .errors import (
    ConfigError,
    DataError,
    DivergenceError,
    STTraverseError,
)
from .graph import SpatialGraph, from_edge_list, read_edge_file, write_edge_file
from .model import ABLATIONS, ModelConfig
from .training import (
    DEFAULT_SWEEP_VALUES,
    MetricReport,
    SWEEP_AXES,
    SeriesDataset,
    TrainConfig,
    sweep,
    train,
)

# (key, type, default, help) registries; section order fixes the echo layout.
MODEL_KEYS = [
    ("n_layers", int, 3, "number of traverse layers"),
    ("hidden", int, 64, "hidden feature dimension"),
    ("window", int, 12, "history window size"),
    ("input_len", int, 12, "input sequence length p"),
    ("horizon", int, 12, "forecast length q"),
    ("dropout", float, 0.1, "dropout rate"),
    ("ablation", str, "default", f"one of {', '.join(ABLATIONS)}"),
    ("slope", float, 0.2, "attention logit activation slope"),
    ("precision", int, 64, "float precision: 64 or 32"),
    ("norm_after_residual", bool, True, "apply batch norm after the residual add"),
    ("temporal_stage_first", bool, True, "two-stage ablation order"),
]
TRAIN_KEYS = [
    ("epochs", int, 50, "training epochs"),
    ("lr", float, 1e-3, "learning rate"),
    ("weight_decay", float, 1e-5, "decoupled weight decay"),
    ("batch_size", int, 32, "mini-batch size"),
    ("split", str, "6:2:2", "train:val:test ratio"),
    ("target_feature", int, 0, "forecast feature index"),
    ("mape_threshold", float, 1e-3, "|y| mask threshold for MAPE"),
]
DATA_KEYS = [
    ("series", str, "", "series CSV path"),
    ("edges", str, "", "edge-list file path"),
    ("synth", str, "", "synthetic generator spec path"),
    ("symmetrize", bool, True, "add reverse edges on ingestion"),
    ("missing", str, "strict", "missing-value policy: strict or ffill"),
]
RUN_KEYS = [
    ("seed", int, 0, "base random seed"),
    ("repeats", int, 1, "number of seeded repetitions"),
    ("kmax", int, 12, "maximum lag for correlation analysis"),
]
SECTIONS = {"model": MODEL_KEYS, "train": TRAIN_KEYS, "data": DATA_KEYS, "run": RUN_KEYS}

VARIANT_LABELS = {
    "no_spatial": "w/o spatial info",
    "no_st_traversing": "w/o st traversing",
    "no_attention": "w/o attention",
    "no_residual": "w/o residual",
    "no_norm": "w/o norm",
    "default": "default",
}
ABLATION_ORDER = ["no_spatial", "no_st_traversing", "no_attention",
                  "no_residual", "no_norm", "default"]


class Parser(argparse.ArgumentParser):
    """argparse with usage errors mapped to exit code 1."""

    def error(self, message):
        self.print_usage(sys.stderr)
        sys.stderr.write(f"error: {message}\n")
        raise SystemExit(1)


def _parse_bool(text: str) -> bool:
    low = str(text).strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ConfigError(f"expected a boolean, got {text!r}")


def parse_split(text: str) -> tuple[float, float, float]:
    parts = text.split(":")
    if len(parts) != 3:
        raise ConfigError(f"split must be 'a:b:c', got {text!r}")
    try:
        ratios = tuple(float(p) for p in parts)
    except ValueError:
        raise ConfigError(f"split must be numeric, got {text!r}")
    return ratios


def default_settings() -> dict[str, dict]:
    return {section: {key: default for key, _, default, _ in keys}
            for section, keys in SECTIONS.items()}


def load_config_file(path) -> dict[str, dict]:
    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    if not parser.read(path):
        raise ConfigError(f"cannot read config file {path}")
    out: dict[str, dict] = {}
    for section, keys in SECTIONS.items():
        if section not in parser:
            continue
        known = {key: (typ,) for key, typ, _, _ in keys}
        for key, raw in parser[section].items():
            if key not in known:
                raise ConfigError(f"{path}: unknown key {key!r} in [{section}]")
            typ = known[key][0]
            out.setdefault(section, {})[key] = (
                _parse_bool(raw) if typ is bool else typ(raw))
    return out


def merge_settings(args: argparse.Namespace) -> dict[str, dict]:
    settings = default_settings()
    if getattr(args, "config", None):
        for section, values in load_config_file(args.config).items():
            settings[section].update(values)
    for section, keys in SECTIONS.items():
        for key, typ, _, _ in keys:
            value = getattr(args, key, None)
            if value is not None:
                settings[section][key] = value
    return settings


def render_settings(settings: dict[str, dict], command: str,
                    synth_spec: data_mod.SynthSpec | None = None) -> str:
    """Canonical INI echo of the effective configuration (hash input)."""
    lines = [f"# command: {command}", "[run]", f"command = {command}"]
    for key, _, _, _ in RUN_KEYS:
        lines.append(f"{key} = {settings['run'][key]}")
    for section in ("model", "train", "data"):
        lines.append("")
        lines.append(f"[{section}]")
        for key, _, _, _ in SECTIONS[section]:
            lines.append(f"{key} = {settings[section][key]}")
    if synth_spec is not None:
        lines += ["", "[synth]", f"n_nodes = {synth_spec.n_nodes}",
                  f"length = {synth_spec.length}",
                  f"persistence = {synth_spec.persistence!r}",
                  f"season_period = {synth_spec.season_period!r}",
                  f"season_amp = {synth_spec.season_amp!r}",
                  f"noise = {synth_spec.noise!r}",
                  f"seed = {synth_spec.seed}",
                  "edges = " + "; ".join(f"{u} {v} {lag} {w!r}"
                                         for u, v, lag, w in synth_spec.edges)]
    return "\n".join(lines) + "\n"


def settings_hash(echo_text: str) -> str:
    return hashlib.sha256(echo_text.encode()).hexdigest()[:12]


def prepare_run_dir(out_base: str, command: str, echo_text: str, force: bool) -> Path:
    run_dir = Path(out_base) / f"{command}-{settings_hash(echo_text)}"
    if run_dir.exists():
        if not force:
            raise ConfigError(f"run directory {run_dir} exists; use --force to redo")
        shutil.rmtree(run_dir)
    run_dir.mkdir(parents=True)
    (run_dir / "config.ini").write_text(echo_text)
    return run_dir


def load_run_inputs(settings: dict[str, dict]
                    ) -> tuple[np.ndarray, SpatialGraph, data_mod.SynthSpec | None]:
    """Materialize (series, graph, synth spec) from the data settings."""
    d = settings["data"]
    if d["synth"]:
        spec = data_mod.load_synth_spec(d["synth"])
        dataset, _, _ = data_mod.generate(spec)
        graph = spec.graph(symmetrize=d["symmetrize"])
        return dataset.values, graph, spec
    if d["series"]:
        if not d["edges"]:
            raise ConfigError("a series file needs an --edges file")
        dataset = data_mod.load_series_csv(d["series"], missing=d["missing"])
        graph = read_edge_file(d["edges"], n_nodes=dataset.n_nodes,
                               symmetrize=d["symmetrize"])
        return dataset.values, graph, None
    raise ConfigError("no data source: give --synth or --series/--edges")


def build_configs(settings: dict[str, dict], raw: np.ndarray,
                  seed: int | None = None) -> tuple[ModelConfig, TrainConfig]:
    m, t, r = settings["model"], settings["train"], settings["run"]
    use_seed = r["seed"] if seed is None else seed
    model_cfg = ModelConfig(
        n_nodes=raw.shape[0], input_dim=raw.shape[1], n_layers=m["n_layers"],
        hidden=m["hidden"], window=m["window"], input_len=m["input_len"],
        horizon=m["horizon"], dropout=m["dropout"], ablation=m["ablation"],
        seed=use_seed, slope=m["slope"],
        norm_after_residual=m["norm_after_residual"],
        temporal_stage_first=m["temporal_stage_first"], precision=m["precision"])
    train_cfg = TrainConfig(
        epochs=t["epochs"], lr=t["lr"], weight_decay=t["weight_decay"],
        batch_size=t["batch_size"], split=parse_split(t["split"]),
        seed=use_seed, target_feature=t["target_feature"],
        mape_threshold=t["mape_threshold"])
    return model_cfg, train_cfg


def _write_epoch_log(path: Path, history, log_timing: bool) -> None:
    with open(path, "w") as fh:
        fh.write("epoch,train_mae,val_mae,val_rmse,val_mape,seconds\n")
        for row in history:
            seconds = row.seconds if log_timing else 0.0
            fh.write(f"{row.epoch},{row.train_mae:.6f},{row.val.mae:.6f},"
                     f"{row.val.rmse:.6f},{row.val.mape:.6f},{seconds:.3f}\n")


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    return float(arr.mean()), float(arr.std())


def _format_pm(mean: float, std: float) -> str:
    return f"{mean:.4f} ± {std:.4f}"


def _summarize(reports: list[MetricReport]) -> dict[str, tuple[float, float]]:
    return {
        "mae": _mean_std([r.mae for r in reports]),
        "rmse": _mean_std([r.rmse for r in reports]),
        "mape": _mean_std([r.mape for r in reports]),
    }


# Commands -------------------------------------------------------------------

def cmd_train(args) -> int:
    settings = merge_settings(args)
    raw, graph, synth_spec = load_run_inputs(settings)
    echo = render_settings(settings, "train", synth_spec)
    run_dir = prepare_run_dir(args.out, "train", echo, args.force)

    repeats = settings["run"]["repeats"]
    base_seed = settings["run"]["seed"]
    reports: list[MetricReport] = []
    for r in range(repeats):
        model_cfg, train_cfg = build_configs(settings, raw, seed=base_seed + r)
        dataset = SeriesDataset.build(raw, model_cfg.input_len, model_cfg.horizon,
                                      train_cfg.split, train_cfg.target_feature)
        result = train(model_cfg, train_cfg, dataset, graph)
        reports.append(result.test)
        suffix = "" if repeats == 1 else f"-s{base_seed + r}"
        _write_epoch_log(run_dir / f"epochs{suffix}.csv", result.history,
                         log_timing=not args.no_log_timing)
        save_checkpoint(run_dir / f"checkpoint{suffix}.npz", result.params,
                        train_cfg, result.optimizer_state,
                        scaler_mean=dataset.mean, scaler_std=dataset.std,
                        extra_meta={"best_epoch": result.best_epoch,
                                    "best_val_mae": result.best_val_mae})
        print(f"seed {base_seed + r}: best epoch {result.best_epoch} "
              f"val MAE {result.best_val_mae:.4f} test MAE {result.test.mae:.4f} "
              f"(naive {result.naive_test.mae:.4f})")

    summary = _summarize(reports)
    with open(run_dir / "metrics.csv", "w") as fh:
        fh.write("mae,rmse,mape\n")
        fh.write(f"{summary['mae'][0]:.6f},{summary['rmse'][0]:.6f},"
                 f"{summary['mape'][0]:.6f}\n")
    if repeats > 1:
        with open(run_dir / "metrics_per_seed.csv", "w") as fh:
            fh.write("seed,mae,rmse,mape\n")
            for r, rep in enumerate(reports):
                fh.write(f"{base_seed + r},{rep.as_row()}\n")
    lines = ["test metrics" + (f" over {repeats} seeds (mean ± std)" if repeats > 1 else "")]
    for name in ("mae", "rmse", "mape"):
        mean, std = summary[name]
        lines.append(f"{name.upper()}: " + (_format_pm(mean, std) if repeats > 1
                                            else f"{mean:.4f}"))
    (run_dir / "metrics.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    print(f"run directory: {run_dir}")
    return 0


def cmd_ablate(args) -> int:
    settings = merge_settings(args)
    raw, graph, synth_spec = load_run_inputs(settings)
    echo = render_settings(settings, "ablate", synth_spec)
    run_dir = prepare_run_dir(args.out, "ablate", echo, args.force)
    repeats = settings["run"]["repeats"]
    base_seed = settings["run"]["seed"]

    table: dict[str, dict[str, tuple[float, float]]] = {}
    raw_rows = []
    for variant in ABLATION_ORDER:
        reports = []
        for r in range(repeats):
            model_cfg, train_cfg = build_configs(settings, raw, seed=base_seed + r)
            model_cfg = model_cfg.with_ablation(variant)
            dataset = SeriesDataset.build(raw, model_cfg.input_len, model_cfg.horizon,
                                          train_cfg.split, train_cfg.target_feature)
            result = train(model_cfg, train_cfg, dataset, graph)
            reports.append(result.test)
            raw_rows.append((variant, base_seed + r, result.test))
        table[variant] = _summarize(reports)
        mean, std = table[variant]["mae"]
        print(f"{VARIANT_LABELS[variant]:20s} MAE {_format_pm(mean, std)}")

    header = ["metric"] + [VARIANT_LABELS[v] for v in ABLATION_ORDER]
    with open(run_dir / "ablation.csv", "w") as fh:
        fh.write(",".join(header) + "\n")
        for metric in ("mae", "mape", "rmse"):
            cells = [metric.upper()]
            for variant in ABLATION_ORDER:
                mean, std = table[variant][metric]
                cells.append(_format_pm(mean, std))
            fh.write(",".join(cells) + "\n")
    with open(run_dir / "ablation_raw.csv", "w") as fh:
        fh.write("variant,seed,mae,rmse,mape\n")
        for variant, seed, rep in raw_rows:
            fh.write(f"{variant},{seed},{rep.as_row()}\n")
    print(f"run directory: {run_dir}")
    return 0


def cmd_sweep(args) -> int:
    settings = merge_settings(args)
    raw, graph, synth_spec = load_run_inputs(settings)
    echo = render_settings(settings, f"sweep-{args.axis}", synth_spec)
    run_dir = prepare_run_dir(args.out, f"sweep-{args.axis}", echo, args.force)
    values = ([type(DEFAULT_SWEEP_VALUES[args.axis][0])(v)
               for v in args.values.split(",")] if args.values else None)
    model_cfg, train_cfg = build_configs(settings, raw)
    rows = sweep(model_cfg, train_cfg, raw, graph, args.axis, values=values,
                 repeats=settings["run"]["repeats"],
                 progress=print if args.verbose else None)
    with open(run_dir / "sweep.csv", "w") as fh:
        fh.write("value,mean_val_mae,std_val_mae,argmin\n")
        for row in rows:
            fh.write(f"{row.value:.10g},{row.mean_val_mae:.6f},"
                     f"{row.std_val_mae:.6f},{int(row.is_argmin)}\n")
    for row in rows:
        marker = "  <- argmin" if row.is_argmin else ""
        print(f"{args.axis}={row.value:g}: val MAE "
              f"{_format_pm(row.mean_val_mae, row.std_val_mae)}{marker}")
    print(f"run directory: {run_dir}")
    return 0


def cmd_xcorr(args) -> int:
    settings = merge_settings(args)
    raw, graph, synth_spec = load_run_inputs(settings)
    echo = render_settings(settings, "xcorr", synth_spec)
    run_dir = prepare_run_dir(args.out, "xcorr", echo, args.force)
    k_max = settings["run"]["kmax"]
    feature = settings["train"]["target_feature"]

    if args.pair:
        u, v = args.pair
        curve = analysis.cross_correlation(raw[u, feature], raw[v, feature], k_max,
                                           overlap_normalized=args.overlap_normalized)
        curve.pair = (u, v)
        analysis.write_curve_csv(run_dir / "pair_curve.csv", curve)
        print(f"pair ({u} -> {v}): peak lag {curve.peak_lag} "
              f"(coefficient {curve.coefficients[curve.peak_lag]:.4f})")
    else:
        connected = analysis.peak_lag_distribution(
            graph, raw, k_max, "connected", feature=feature,
            seed=settings["run"]["seed"], overlap_normalized=args.overlap_normalized)
        far = analysis.peak_lag_distribution(
            graph, raw, k_max, "far", feature=feature,
            seed=settings["run"]["seed"], overlap_normalized=args.overlap_normalized)
        with open(run_dir / "curves.csv", "w") as fh:
            fh.write("lag,connected_mean,connected_std,far_mean,far_std\n")
            for i in range(k_max + 1):
                c_m = connected.curves_mean[i] if not connected.empty else float("nan")
                c_s = connected.curves_std[i] if not connected.empty else float("nan")
                f_m = far.curves_mean[i] if not far.empty else float("nan")
                f_s = far.curves_std[i] if not far.empty else float("nan")
                fh.write(f"{i},{c_m:.10g},{c_s:.10g},{f_m:.10g},{f_s:.10g}\n")
        analysis.write_histogram_csv(run_dir / "peaks.csv", connected)
        print(f"connected pairs: {connected.n_pairs}, far pairs: {far.n_pairs}")
        if connected.n_pairs:
            top = int(np.argmax(connected.proportions))
            print(f"most common peak lag among connected pairs: {top} "
                  f"({connected.proportions[top]:.0%})")
    print(f"run directory: {run_dir}")
    return 0


def cmd_synth(args) -> int:
    spec = data_mod.load_synth_spec(args.spec)
    settings = merge_settings(args)
    settings["data"]["synth"] = str(args.spec)
    echo = render_settings(settings, "synth", spec)
    run_dir = prepare_run_dir(args.out, "synth", echo, args.force)
    dataset, graph, lag_table = data_mod.generate(spec)
    data_mod.save_series_csv(run_dir / "series.csv", dataset)
    write_edge_file(run_dir / "edges.txt", graph)
    data_mod.write_lag_table(run_dir / "lags.csv", lag_table)
    print(f"generated {dataset.n_nodes} nodes x {dataset.n_steps} steps "
          f"({len(lag_table)} coupled edges)")
    print(f"run directory: {run_dir}")
    return 0


def cmd_gradcheck(args) -> int:
    from .gradsuite import run_suite

    results = run_suite(n_seeds=args.seeds)
    worst = max(results, key=lambda r: r.max_rel_error)
    for res in sorted(results, key=lambda r: r.name):
        status = "PASS" if res.passed else "FAIL"
        print(f"{res.name:24s} max rel error {res.max_rel_error:.3e}  {status}")
    print(f"worst: {worst.name} {worst.max_rel_error:.3e} "
          f"(tolerance {worst.tolerance:g}, {args.seeds} seeds)")
    if args.report:
        with open(args.report, "w") as fh:
            fh.write("check,max_rel_error,tolerance,passed\n")
            for res in sorted(results, key=lambda r: r.name):
                fh.write(f"{res.name},{res.max_rel_error:.6e},{res.tolerance:g},"
                         f"{int(res.passed)}\n")
    return 0 if all(r.passed for r in results) else 3


def cmd_case_study(args) -> int:
    run_dir_in = Path(args.train_run)
    config_path = run_dir_in / "config.ini"
    if not config_path.exists():
        raise ConfigError(f"{run_dir_in} is not a run directory (no config.ini)")
    checkpoints = sorted(run_dir_in.glob("checkpoint*.npz"))
    if not checkpoints:
        raise DataError(f"{run_dir_in} contains no checkpoint")
    params, train_cfg, _, extras = load_checkpoint(checkpoints[0])

    parser = configparser.ConfigParser(inline_comment_prefixes=("#",))
    parser.read(config_path)
    settings = default_settings()
    for section in settings:
        if section in parser:
            for key, typ, _, _ in SECTIONS[section]:
                if key in parser[section]:
                    raw_val = parser[section][key]
                    settings[section][key] = (_parse_bool(raw_val) if typ is bool
                                              else typ(raw_val))
    if "synth" in parser:
        spec = data_mod.SynthSpec(
            n_nodes=parser["synth"].getint("n_nodes"),
            length=parser["synth"].getint("length"),
            edges=[(int(a), int(b), int(c), float(d)) for a, b, c, d in
                   (chunk.split() for chunk in
                    parser["synth"]["edges"].replace("\n", ";").split(";") if chunk.strip())],
            persistence=parser["synth"].getfloat("persistence"),
            season_period=parser["synth"].getfloat("season_period"),
            season_amp=parser["synth"].getfloat("season_amp"),
            noise=parser["synth"].getfloat("noise"),
            seed=parser["synth"].getint("seed"))
        dataset_raw, _, _ = data_mod.generate(spec)
        raw = dataset_raw.values
        graph = spec.graph(symmetrize=settings["data"]["symmetrize"])
        synth_spec = spec
    else:
        raw, graph, synth_spec = load_run_inputs(settings)

    settings["run"]["seed"] = params.config.seed
    echo = render_settings(settings, f"case-study-{args.pair[0]}-{args.pair[1]}", synth_spec)
    run_dir = prepare_run_dir(args.out, "case-study", echo, args.force)

    tc = train_cfg if train_cfg is not None else TrainConfig()
    dataset = SeriesDataset.build(raw, params.config.input_len, params.config.horizon,
                                  tc.split, tc.target_feature)
    result = analysis.case_study(params, dataset, graph, tuple(args.pair),
                                 k_max=settings["run"]["kmax"], split=args.split)
    analysis.write_heatmap(run_dir / "heatmap.txt", result.heatmap)
    analysis.write_curve_csv(run_dir / "xcorr_pair.csv", result.curve)
    with open(run_dir / "series_pair.csv", "w") as fh:
        fh.write("time,source,target\n")
        for t, (a, b) in enumerate(zip(result.source_series, result.target_series)):
            fh.write(f"{t},{a:.10g},{b:.10g}\n")
    lag_means = result.heatmap.mean(axis=1)
    print(f"pair ({args.pair[0]} -> {args.pair[1]}): xcorr peak lag {result.curve.peak_lag}; "
          f"attention mass peaks at lag {int(np.argmax(lag_means))} "
          f"over {result.n_windows} windows")
    print(f"run directory: {run_dir}")
    return 0


# Parser wiring ---------------------------------------------------------------

def _add_config_options(sub: argparse.ArgumentParser,
                        sections=("model", "train", "data", "run")) -> None:
    sub.add_argument("--config", help="config file ([section] key = value)")
    for section in sections:
        for key, typ, default, help_text in SECTIONS[section]:
            flag = f"--{key}"
            if typ is bool:
                sub.add_argument(flag, default=None,
                                 action=argparse.BooleanOptionalAction, help=help_text)
            else:
                sub.add_argument(flag, type=typ, default=None,
                                 help=f"{help_text} (default {default})")


def _add_common(sub: argparse.ArgumentParser) -> None:
    sub.add_argument("--out", default="runs", help="base output directory")
    sub.add_argument("--force", action="store_true",
                     help="overwrite an existing run directory")


def build_parser() -> Parser:
    parser = Parser(prog="sttraverse",
                    description="Spatial-temporal graph forecasting experiments")
    commands = parser.add_subparsers(dest="command", required=True)

    p_train = commands.add_parser("train", help="train and evaluate", parents=[])
    _add_config_options(p_train)
    _add_common(p_train)
    p_train.add_argument("--no-log-timing", action="store_true",
                         help="write 0.0 in the epoch log seconds column "
                              "(byte-identical reruns)")
    p_train.set_defaults(func=cmd_train)

    p_ablate = commands.add_parser("ablate", help="run all six pipeline variants")
    _add_config_options(p_ablate)
    _add_common(p_ablate)
    p_ablate.set_defaults(func=cmd_ablate)

    p_sweep = commands.add_parser("sweep", help="vary one hyperparameter")
    _add_config_options(p_sweep)
    _add_common(p_sweep)
    p_sweep.add_argument("--axis", required=True, choices=sorted(SWEEP_AXES))
    p_sweep.add_argument("--values", help="comma-separated values (default: paper grid)")
    p_sweep.add_argument("--verbose", action="store_true")
    p_sweep.set_defaults(func=cmd_sweep)

    p_xcorr = commands.add_parser("xcorr", help="cross-correlation lag analysis")
    _add_config_options(p_xcorr)
    _add_common(p_xcorr)
    p_xcorr.add_argument("--pair", nargs=2, type=int, metavar=("U", "V"),
                         help="analyze one directed pair instead of pair groups")
    p_xcorr.add_argument("--overlap-normalized", action="store_true",
                         help="divide sums by the overlap length instead of L")
    p_xcorr.set_defaults(func=cmd_xcorr)

    p_synth = commands.add_parser("synth", help="materialize a synthetic dataset")
    p_synth.add_argument("--spec", required=True, help="generator spec file")
    _add_config_options(p_synth, sections=("run",))
    _add_common(p_synth)
    p_synth.set_defaults(func=cmd_synth)

    p_grad = commands.add_parser("gradcheck", help="finite-difference gradient suite")
    p_grad.add_argument("--seeds", type=int, default=20, help="number of seeds")
    p_grad.add_argument("--report", help="optional CSV report path")
    p_grad.set_defaults(func=cmd_gradcheck)

    p_case = commands.add_parser("case-study",
                                 help="attention heatmap + lag curve for one edge")
    p_case.add_argument("--train-run", required=True,
                        help="run directory of a previous train command")
    p_case.add_argument("--pair", nargs=2, type=int, required=True, metavar=("U", "V"))
    p_case.add_argument("--split", default="test", choices=["train", "val", "test"])
    _add_config_options(p_case, sections=("run",))
    _add_common(p_case)
    p_case.set_defaults(func=cmd_case_study)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except DivergenceError as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return 3
    except DataError as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return 2
    except (ConfigError, STTraverseError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    raise SystemExit(main())
