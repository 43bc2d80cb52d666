"""Command-line harness: ``avaccel gen | train | eval | plot | bench``.

Every verb reads a JSON config (``--config``), with ``--seed`` and
``--out`` overriding the config's seed and output path. Exit codes:
0 success, 2 bad config, 3 data/format problem, 4 numeric abort.
"""

from __future__ import annotations

import argparse
import math
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from .configs import (
    BenchConfig,
    EvalCommandConfig,
    GenConfig,
    PlotConfig,
    TrainCommandConfig,
    load_json,
)
from .datasets import list_tar_dirs, load_dataset, view_for
from .errors import AvaccelError, ConfigError, DataError, NumericError
from .features import fit_norm_stats
from .models import (
    MODEL_KINDS,
    build_advanced,
    build_baseline,
    build_cnn,
    build_cnn_lstm,
    build_cnn_nn,
    load_model,
    save_model,
)
from .plotting import write_loss_svg
from .records import write_segment_file
from .scenario import dataset_stats, generate_synthetic_segment
from .tensor import Rng, fnv1a64
from .training import TrainConfig, evaluate, fit

__all__ = ["main", "MODEL_LABELS"]

MODEL_LABELS = {
    "baseline": "Baseline",
    "cnn": "CNN",
    "cnn_nn": "CNN+NN",
    "cnn_lstm": "CNN+LSTM",
    "advanced": "Advanced",
}

_RESULTS_HEADER = "model,tars,train_mae,val_mae,train_time"
_MASK64 = (1 << 64) - 1


def _builder(kind: str):
    return {"baseline": build_baseline, "cnn": build_cnn, "cnn_nn": build_cnn_nn,
            "cnn_lstm": build_cnn_lstm}[kind]


# ---------------------------------------------------------------------------
# gen


def cmd_gen(cfg: GenConfig) -> int:
    out = Path(cfg.out_dir)
    written = []

    def produce():
        for t in range(cfg.tars):
            tar_dir = out / f"tar_{t:03d}"
            seen = set()
            for s in range(cfg.segments_per_tar):
                seed = (cfg.seed ^ fnv1a64(f"tar{t}/segment{s}")) & _MASK64
                seg = generate_synthetic_segment(cfg.scenario, seed)
                if seg.segment_id in seen:
                    raise DataError(f"segment id collision in tar {t}; "
                                    f"choose a different root seed")
                seen.add(seg.segment_id)
                path = tar_dir / f"{seg.segment_id:020d}.avsg"
                write_segment_file(path, seg)
                written.append(path)
                yield seg

    stats = dataset_stats(produce())
    print(stats.to_text())
    print(f"wrote {len(written)} segments in {cfg.tars} tar(s) under {out}")
    return 0


# ---------------------------------------------------------------------------
# train


def _split_tars(dataset: str, train_tars: int, val_tars: int):
    tars = list_tar_dirs(dataset)
    if train_tars + val_tars > len(tars):
        raise DataError(f"dataset has {len(tars)} tars; cannot split into "
                        f"{train_tars} train + {val_tars} val")
    return tars[:train_tars], tars[-val_tars:]


def _write_loss_csv(path: Path, reports) -> None:
    lines = ["epoch,train_mae,val_mae"]
    lines += [f"{r.epoch},{r.train_mae!r},{r.val_mae!r}" for r in reports]
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")


def _append_result(path: Path, kind: str, tars: int, reports, minutes: float) -> None:
    last = reports[-1]
    row = (f"{MODEL_LABELS[kind]},{tars},{last.train_mae:.4f},"
           f"{last.val_mae:.4f},{round(minutes)} mins")
    new = not path.exists()
    with open(path, "a", encoding="utf-8") as fh:
        if new:
            fh.write(_RESULTS_HEADER + "\n")
        fh.write(row + "\n")


def _train_one(cfg: TrainCommandConfig, kind: str, out_dir: Path,
               train_store, val_store, base=None):
    """Fit one model and write model.avnm + loss.csv; returns (model, reports, minutes)."""
    norm = fit_norm_stats(train_store.stats_features())
    init_rng = Rng(cfg.seed).spawn("init")
    if kind == "advanced":
        model = build_advanced(base, init_rng)
    else:
        model = _builder(kind)(init_rng)
        model.norm_stats = norm
    train_view = view_for(train_store, kind, model.norm_stats)
    val_view = view_for(val_store, kind, model.norm_stats)
    tc = TrainConfig(epochs=cfg.epochs, batch_size=cfg.batch_size, seed=cfg.seed,
                     optimizer=cfg.optimizer, learning_rate=cfg.learning_rate,
                     shuffle=cfg.shuffle)
    t0 = time.monotonic()
    model, reports = fit(model, train_view, val_view, tc)
    minutes = (time.monotonic() - t0) / 60.0
    out_dir.mkdir(parents=True, exist_ok=True)
    save_model(model, out_dir / "model.avnm")
    _write_loss_csv(out_dir / "loss.csv", reports)
    return model, reports, minutes


def cmd_train(cfg: TrainCommandConfig) -> int:
    train_dirs, val_dirs = _split_tars(cfg.dataset, cfg.train_tars, cfg.val_tars)
    train_store = load_dataset(train_dirs)
    val_store = load_dataset(val_dirs)
    out = Path(cfg.out_dir)
    base = None
    if cfg.model == "advanced":
        if cfg.base_model is not None:
            base = load_model(cfg.base_model)
        else:
            print("advanced model: training the image-model base first")
            base, base_reports, _ = _train_one(cfg, "cnn", out / "cnn_base",
                                               train_store, val_store)
            print(f"  base final train/val MAE: {base_reports[-1].train_mae:.4f}"
                  f"/{base_reports[-1].val_mae:.4f}")
    model, reports, minutes = _train_one(cfg, cfg.model, out, train_store,
                                         val_store, base)
    _append_result(out / "results.csv", cfg.model, cfg.train_tars, reports, minutes)
    last = reports[-1]
    print(f"{MODEL_LABELS[cfg.model]} on {cfg.train_tars} tar(s): "
          f"train MAE {last.train_mae:.4f}, val MAE {last.val_mae:.4f} "
          f"after {len(reports)} epoch(s)")
    print(f"artifacts in {out}")
    return 0


# ---------------------------------------------------------------------------
# eval


def cmd_eval(cfg: EvalCommandConfig) -> int:
    model = load_model(cfg.model_path)
    if model.norm_stats is None:
        raise DataError(f"{cfg.model_path} carries no normalization stats")
    train_dirs, val_dirs = _split_tars(cfg.dataset, cfg.train_tars, cfg.val_tars)
    store = load_dataset(train_dirs if cfg.split == "train" else val_dirs)
    view = view_for(store, model.kind, model.norm_stats)
    mae = evaluate(model, view)
    print(f"model: {MODEL_LABELS[model.kind]} ({cfg.model_path})")
    print(f"split: {cfg.split}, samples: {len(view)}")
    print(f"MAE (all steps): {mae!r}")
    if model.windowed:
        last = evaluate(model, view, last_step_only=True)
        print(f"MAE (last step): {last!r}")
    return 0


# ---------------------------------------------------------------------------
# plot


def cmd_plot(cfg: PlotConfig) -> int:
    out = write_loss_svg(cfg.inputs, cfg.out)
    print(f"wrote {out}")
    return 0


# ---------------------------------------------------------------------------
# bench


def _cell_seed(root: int, kind: str, size: int, seed_index: int) -> int:
    return (root ^ fnv1a64(f"{kind}|{size}|{seed_index}")) & _MASK64


def _bench_group(cfg: BenchConfig, stores, val_store, size: int, seed_index: int):
    """Train the five models for one (size, seed) cell group; returns rows."""
    train_store = stores[size]
    norm = fit_norm_stats(train_store.stats_features())
    rows = []
    cnn_model = None
    for kind in MODEL_KINDS:
        seed = _cell_seed(cfg.seed, kind, size, seed_index)
        init_rng = Rng(seed).spawn("init")
        if kind == "advanced":
            model = build_advanced(cnn_model, init_rng)
        else:
            model = _builder(kind)(init_rng)
            model.norm_stats = norm
        train_view = view_for(train_store, kind, model.norm_stats)
        val_view = view_for(val_store, kind, model.norm_stats)
        budget = cfg.step_budgets[kind]
        steps_per_epoch = math.ceil(len(train_view) / cfg.batch_size)
        epochs = max(1, math.ceil(budget / steps_per_epoch))
        tc = TrainConfig(epochs=epochs, batch_size=cfg.batch_size, seed=seed,
                         optimizer=cfg.optimizer, learning_rate=cfg.learning_rate)
        t0 = time.monotonic()
        # scoring every epoch would dwarf the actual training at small sizes
        model, reports = fit(model, train_view, val_view, tc, max_steps=budget,
                             eval_every=max(1, epochs // 4))
        minutes = (time.monotonic() - t0) / 60.0
        if kind == "cnn":
            cnn_model = model
        last = reports[-1]
        val_all = last.val_mae
        if model.windowed:
            val_last = evaluate(model, val_view, last_step_only=True)
        else:
            val_last = val_all
        rows.append({
            "model": kind, "size": size, "seed_index": seed_index,
            "cell_seed": seed, "epochs": last.epoch, "steps": min(
                budget, epochs * steps_per_epoch),
            "train_mae": last.train_mae, "val_mae": val_last,
            "val_mae_all_steps": val_all, "minutes": minutes,
        })
    return rows


def _trend_flags(rows, sizes, n_seeds):
    """The three qualitative claims, each by majority across seeds."""
    by = {(r["model"], r["size"], r["seed_index"]): r["val_mae"] for r in rows}
    lo, hi = min(sizes), max(sizes)
    detail = {}
    per_model = {}
    for kind in MODEL_KINDS:
        wins = [by[(kind, hi, i)] <= by[(kind, lo, i)] for i in range(n_seeds)]
        per_model[kind] = wins
        detail[f"more_data_{kind}"] = wins
    flag_a = all(sum(w) * 3 >= 2 * n_seeds for w in per_model.values())
    fused_wins = [by[("cnn_nn", hi, i)] < min(by[("cnn", hi, i)],
                                              by[("baseline", hi, i)])
                  for i in range(n_seeds)]
    flag_b = sum(fused_wins) * 3 >= 2 * n_seeds
    adv_wins = [by[("advanced", hi, i)] <= min(by[(k, hi, i)]
                                               for k in MODEL_KINDS if k != "advanced")
                for i in range(n_seeds)]
    flag_c = sum(adv_wins) * 3 >= 2 * n_seeds
    detail["fused_beats_parts"] = fused_wins
    detail["advanced_lowest"] = adv_wins
    return {"a_more_data_helps": flag_a, "b_fusion_helps": flag_b,
            "c_advanced_best": flag_c}, detail


def _write_bench_report(out_dir: Path, cfg: BenchConfig, rows, flags, detail):
    out_dir.mkdir(parents=True, exist_ok=True)
    order = {k: i for i, k in enumerate(MODEL_KINDS)}
    rows = sorted(rows, key=lambda r: (order[r["model"]], r["size"], r["seed_index"]))
    lines = ["model,size,seed_index,cell_seed,epochs,steps,train_mae,"
             "val_mae,val_mae_all_steps,minutes"]
    for r in rows:
        lines.append(f'{r["model"]},{r["size"]},{r["seed_index"]},{r["cell_seed"]},'
                     f'{r["epochs"]},{r["steps"]},{r["train_mae"]:.6f},'
                     f'{r["val_mae"]:.6f},{r["val_mae_all_steps"]:.6f},'
                     f'{r["minutes"]:.2f}')
    for kind in MODEL_KINDS:
        for size in cfg.sizes:
            cell = [r for r in rows if r["model"] == kind and r["size"] == size]
            tm = sum(r["train_mae"] for r in cell) / len(cell)
            vm = sum(r["val_mae"] for r in cell) / len(cell)
            va = sum(r["val_mae_all_steps"] for r in cell) / len(cell)
            mins = sum(r["minutes"] for r in cell)
            lines.append(f"{kind},{size},mean,,,,{tm:.6f},{vm:.6f},{va:.6f},{mins:.2f}")
    (out_dir / "bench_report.csv").write_text("\n".join(lines) + "\n",
                                              encoding="utf-8")

    md = ["# Data-size trend report", "",
          f"{len(MODEL_KINDS)} models x sizes {cfg.sizes} (tars) x "
          f"{cfg.seeds} seeds. Every model trains under a fixed optimizer-step "
          "budget, so data size is the only thing a larger cell changes; the "
          "advanced model reuses its cell's trained image model as the frozen "
          "base. Windowed models are scored on the current-frame (last-step) "
          "validation MAE; the all-step mean is also listed.", "",
          "| model | " + " | ".join(f"{s}-tar val MAE" for s in cfg.sizes) + " |",
          "|---" * (1 + len(cfg.sizes)) + "|"]
    for kind in MODEL_KINDS:
        cells = []
        for size in cfg.sizes:
            vals = [r["val_mae"] for r in rows
                    if r["model"] == kind and r["size"] == size]
            cells.append(f"{sum(vals) / len(vals):.4f}")
        md.append(f"| {MODEL_LABELS[kind]} | " + " | ".join(cells) + " |")
    md += ["", "## Trend flags (majority over seeds)", ""]
    names = {"a_more_data_helps": "(a) more data lowers val MAE for every model",
             "b_fusion_helps": "(b) fused image+feature model beats image-only "
                               "and feature-only",
             "c_advanced_best": "(c) the advanced model has the lowest val MAE"}
    for key, label in names.items():
        md.append(f"- {label}: **{'PASS' if flags[key] else 'FAIL'}**")
    md += ["", "### Per-seed detail", ""]
    for key, wins in detail.items():
        md.append(f"- {key}: {['win' if w else 'loss' for w in wins]}")
    (out_dir / "bench_report.md").write_text("\n".join(md) + "\n", encoding="utf-8")


def cmd_bench(cfg: BenchConfig) -> int:
    tars = list_tar_dirs(cfg.dataset)
    need = max(cfg.sizes) + cfg.val_tars
    if need > len(tars):
        raise DataError(f"bench needs {need} tars ({max(cfg.sizes)} train + "
                        f"{cfg.val_tars} val), dataset has {len(tars)}")
    print(f"loading {max(cfg.sizes)}+{cfg.val_tars} tars from {cfg.dataset}")
    stores = {size: load_dataset(tars[:size]) for size in cfg.sizes}
    val_store = load_dataset(tars[-cfg.val_tars:])
    groups = [(size, i) for i in range(cfg.seeds) for size in cfg.sizes]
    rows = []
    t0 = time.monotonic()
    if cfg.workers > 1:
        with ThreadPoolExecutor(max_workers=cfg.workers) as pool:
            futures = [pool.submit(_bench_group, cfg, stores, val_store, size, i)
                       for size, i in groups]
            for fut in futures:
                rows.extend(fut.result())
    else:
        for size, i in groups:
            rows.extend(_bench_group(cfg, stores, val_store, size, i))
            done = len(rows)
            print(f"  {done}/{len(groups) * len(MODEL_KINDS)} cells, "
                  f"{(time.monotonic() - t0) / 60:.1f} min elapsed")
    flags, detail = _trend_flags(rows, cfg.sizes, cfg.seeds)
    out = Path(cfg.out_dir)
    _write_bench_report(out, cfg, rows, flags, detail)
    for key, val in flags.items():
        print(f"{key}: {'PASS' if val else 'FAIL'}")
    print(f"report in {out}")
    return 0


# ---------------------------------------------------------------------------
# argument parsing and dispatch


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="avaccel",
        description="Synthetic driving data, acceleration models, and the "
                    "experiment harness around them.")
    sub = parser.add_subparsers(dest="verb", required=True)
    for verb, blurb in [("gen", "generate a synthetic dataset"),
                        ("train", "train one model and export artifacts"),
                        ("eval", "score a saved model on a dataset split"),
                        ("plot", "render loss CSVs to an SVG"),
                        ("bench", "run the data-size trend sweep")]:
        p = sub.add_parser(verb, help=blurb)
        p.add_argument("--config", help="path to the JSON config")
        p.add_argument("--seed", type=int, default=None,
                       help="override the config's seed")
        p.add_argument("--out", default=None,
                       help="override the config's output path")
        if verb == "plot":
            p.add_argument("csvs", nargs="*", help="loss CSV files to plot")
    return parser


def _dispatch(args) -> int:
    if args.verb == "plot":
        if args.config:
            cfg = PlotConfig.from_dict(load_json(args.config))
            if args.csvs:
                cfg = PlotConfig(inputs=list(args.csvs), out=cfg.out)
        elif args.csvs:
            cfg = PlotConfig(inputs=list(args.csvs))
        else:
            raise ConfigError("plot needs --config or CSV paths")
        if args.out:
            cfg.out = args.out
        return cmd_plot(cfg)
    if not args.config:
        raise ConfigError(f"{args.verb} requires --config")
    data = load_json(args.config)
    if args.verb == "gen":
        cfg = GenConfig.from_dict(data)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out_dir = args.out
        return cmd_gen(cfg)
    if args.verb == "train":
        cfg = TrainCommandConfig.from_dict(data)
        if args.seed is not None:
            cfg.seed = args.seed
        if args.out:
            cfg.out_dir = args.out
        return cmd_train(cfg)
    if args.verb == "eval":
        return cmd_eval(EvalCommandConfig.from_dict(data))
    cfg = BenchConfig.from_dict(data)
    if args.seed is not None:
        cfg.seed = args.seed
    if args.out:
        cfg.out_dir = args.out
    return cmd_bench(cfg)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return _dispatch(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except NumericError as exc:
        print(f"numeric abort: {exc}", file=sys.stderr)
        return 4
    except AvaccelError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
