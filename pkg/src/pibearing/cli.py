"""
``pibearing`` command-line interface.

Every command resolves a YAML config (flags win over the file), writes a run
directory ``<out>/<run-id>/`` holding ``config.frozen``, ``report.json`` and
``report.txt`` plus command-specific artifacts, and exits with

    0 success, 1 usage or config error, 2 data error, 3 numerical failure.

The output root defaults to ``$PIBEARING_OUT`` (else ``./runs``).  Run
directories are never overwritten unless ``--force`` is given.
"""

from __future__ import annotations

import argparse
import csv
import json
import logging
import os
import shutil
import sys
from dataclasses import asdict
from pathlib import Path

import numpy as np

from . import __version__
from .config import ConfigError, ExperimentConfig
from .dataio import (
    ConstantChannelError,
    Label,
    SegmentParseError,
    StratificationError,
    make_split,
    read_csv_channels,
    read_segments,
    segment_stream,
    standardize_array,
    synthesize,
    write_segments,
)
from .evaluation import DegenerateTestError, InsufficientDataError, independent_t_test
from .geometry import parse_condition_label
from .model import TrainedModel, export_embeddings
from .nn import CheckpointError
from .pipeline import Corpus, NumericalError, evaluate, fit, grid_search, train_pipeline, write_grid_csv
from .transfer import TlStrategy, finetune, zero_shot_eval

log = logging.getLogger("pibearing")

OUT_ENV = "PIBEARING_OUT"
EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_NUMERIC = 0, 1, 2, 3


class DataError(RuntimeError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


# --------------------------------------------------------------------------
# helpers
# --------------------------------------------------------------------------


def _load_config(args) -> ExperimentConfig:
    cfg = ExperimentConfig.load(args.config) if args.config else ExperimentConfig.from_dict({})
    overrides = {
        "seed": getattr(args, "seed", None),
        "data.path": getattr(args, "data", None),
        "model.lam": getattr(args, "lam", None),
        "train.max_epochs": getattr(args, "max_epochs", None),
        "tl.strategy": getattr(args, "strategy", None),
        "tl.source_checkpoint": getattr(args, "source", None),
    }
    for key, value in overrides.items():
        if value is not None:
            cfg.override(key, value)
    return cfg


def _run_dir(args, cfg: ExperimentConfig) -> Path:
    root = Path(args.out or os.environ.get(OUT_ENV, "runs"))
    run_id = args.run_id or f"{args.command}-{cfg.digest()[:10]}"
    path = root / run_id
    if path.exists():
        if not args.force:
            raise FileExistsError(f"run directory {path} exists; pass --force to overwrite")
        shutil.rmtree(path)
    path.mkdir(parents=True)
    (path / "config.frozen").write_text(cfg.dump())
    return path


def _write_report(run: Path, payload: dict, text: str) -> None:
    (run / "report.json").write_text(json.dumps(payload, indent=2, sort_keys=True, default=_jsonable))
    (run / "report.txt").write_text(text.rstrip() + "\n")


def _jsonable(value):
    if isinstance(value, np.generic):
        return value.item()
    if isinstance(value, np.ndarray):
        return value.tolist()
    raise TypeError(f"not JSON serializable: {type(value).__name__}")


def load_segments(cfg: ExperimentConfig):
    """Segments described by the ``data`` section."""
    data = cfg.tree["data"]
    if data["path"]:
        if not Path(data["path"]).exists():
            raise DataError(f"data file {data['path']} not found")
        segs = read_segments(data["path"], condition=cfg.condition())
        if not segs:
            raise DataError(f"data file {data['path']} holds no segments")
        return segs
    if data["csv"]:
        segs = []
        for i, entry in enumerate(data["csv"]):
            try:
                cond = parse_condition_label(entry.get("condition") or cfg.tree["model"]["condition"])
            except ValueError as exc:
                raise ConfigError(f"data.csv[{i}].condition", str(exc)) from None
            raw = read_csv_channels(entry["path"])
            segs += segment_stream(raw, data["window"], data["stride"], label=Label.parse(entry["label"]),
                                   condition=cond, sample_rate_hz=data["sample_rate_hz"])
        return segs
    n = cfg.tree["data"]["synthesis"]["n_per_class"]
    return [s for spec in cfg.synthesis_specs() for s in synthesize(spec, n, data["window"])]


def _corpus(cfg: ExperimentConfig) -> Corpus:
    return Corpus.from_segments(load_segments(cfg), cfg.geometry(), cfg.band())


def _split(cfg: ExperimentConfig, corpus: Corpus):
    return make_split(corpus.y, tuple(cfg.tree["data"]["ratios"]), cfg.tree["seed"])


def _source(cfg: ExperimentConfig) -> TrainedModel:
    path = cfg.tree["tl"]["source_checkpoint"]
    if not path:
        raise ConfigError("tl.source_checkpoint", "missing")
    if not Path(path).exists():
        raise DataError(f"source checkpoint {path} not found")
    return TrainedModel.load(path)


def _history_csv(history, path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=["epoch", "train_loss", "val_loss", "val_acc", "best_epoch"])
        w.writeheader()
        for row in history:
            w.writerow(row)


# --------------------------------------------------------------------------
# commands
# --------------------------------------------------------------------------


def cmd_generate(args, cfg):
    segs = load_segments(cfg)
    run = _run_dir(args, cfg)
    write_segments(segs, run / "segments.bseg")
    counts = {lab.name: int(sum(s.label == lab for s in segs)) for lab in Label}
    manifest = {"file": "segments.bseg", "records": len(segs), "counts": counts,
                "window": cfg.tree["data"]["window"], "condition": segs[0].condition.label}
    (run / "manifest.json").write_text(json.dumps(manifest, indent=2))
    _write_report(run, manifest, f"{len(segs)} segments: " + ", ".join(f"{k}={v}" for k, v in counts.items()))
    return run


def cmd_train(args, cfg):
    corpus = _corpus(cfg)
    m = cfg.tree["model"]
    train_cfg = cfg.train_config()
    if train_cfg.max_epochs < 1 and not args.resume:
        raise ConfigError("train.max_epochs", "must be >= 1 unless resuming from a checkpoint")
    if args.resume:
        model = TrainedModel.load(args.resume)
        split = _split(cfg, corpus)
        X = standardize_array(corpus.X, model.stats).astype(np.float32)
        F = model.normalizer(corpus.raw_feats)
        history = []
        if train_cfg.max_epochs > 0:
            model.net.store.reset_optimizer()
            tr, va = split.train, split.validation
            history = fit(model.net, (X[tr], corpus.y[tr], F[tr]), (X[va], corpus.y[va], F[va]),
                          model.loss_cfg, train_cfg)
        t = split.test
        report = evaluate(model, X[t], corpus.y[t], F[t], epochs=len(history))
    else:
        result = train_pipeline(
            corpus, ratios=tuple(cfg.tree["data"]["ratios"]), split_seed=cfg.tree["seed"], arch=cfg.arch(),
            train_cfg=train_cfg, lam=m["lam"], percentile=m["percentile"], gating=m["gating"],
            geometry=cfg.geometry(), band=cfg.band(),
        )
        model, report, history = result.model, result.report, result.history
    run = _run_dir(args, cfg)
    model.save(run / "checkpoint.npz")
    _history_csv(history, run / "training_curve.csv")
    payload = report.to_dict()
    payload["params"] = {"total": model.net.store.count(), "trainable": model.net.store.count(True)}
    _write_report(run, payload, report.to_text())
    return run


def cmd_zero_shot(args, cfg):
    source = _source(cfg)
    corpus = _corpus(cfg)
    split = _split(cfg, corpus)
    report = zero_shot_eval(source, corpus, split.test)
    run = _run_dir(args, cfg)
    _write_report(run, report.to_dict(), report.to_text())
    return run


def cmd_finetune(args, cfg):
    source = _source(cfg)
    corpus = _corpus(cfg)
    split = _split(cfg, corpus)
    strategy = TlStrategy.parse(cfg.tree["tl"]["strategy"], cfg.tree["tl"]["source_checkpoint"])
    result = finetune(source, corpus, split, strategy, cfg.train_config())
    run = _run_dir(args, cfg)
    result.model.save(run / "checkpoint.npz")
    _history_csv(result.history, run / "training_curve.csv")
    payload = result.report.to_dict()
    payload["freeze_plan"] = result.plan.trainable
    _write_report(run, payload, result.report.to_text())
    return run


def cmd_gridsearch(args, cfg):
    corpus = _corpus(cfg)
    g, m = cfg.tree["grid"], cfg.tree["model"]
    rows, errors = grid_search(
        corpus, lambdas=g["lambdas"], percentiles=g["percentiles"], splits=[tuple(s) for s in g["splits"]],
        k=g["k"], master_seed=cfg.tree["seed"], arch=cfg.arch(), train_cfg=cfg.train_config(),
        gating=m["gating"], jobs=args.jobs,
    )
    run = _run_dir(args, cfg)
    write_grid_csv(rows, run / "grid.csv")
    lines = [f"{r['split']:>8} lambda={r['lambda']:<5} pct={r['threshold_pct']:<4} "
             f"acc={r['test_acc']:.4f} f1={r['test_f1']:.4f}" for r in rows]
    _write_report(run, {"rows": rows, "errors": errors, "master_seed": cfg.tree["seed"]},
                  "\n".join(lines + [f"{len(errors)} failed cell(s)"]))
    if errors and len(errors) == len(rows):
        raise NumericalError("every grid cell failed")
    return run


def _read_values(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise DataError(f"cannot read {path}: {exc.strerror}") from None
    try:
        return [float(tok) for tok in text.replace(",", " ").split()]
    except ValueError:
        raise DataError(f"{path}: expected numbers separated by whitespace or commas") from None


def cmd_ttest(args, cfg):
    a, b = _read_values(args.a), _read_values(args.b)
    res = independent_t_test(a, b, cfg.tree["eval"]["ttest_alpha"])
    run = _run_dir(args, cfg)
    payload = {**asdict(res), "n_a": len(a), "n_b": len(b), "mean_a": float(np.mean(a)), "mean_b": float(np.mean(b))}
    verdict = "statistically significant" if res.significant else "not significant"
    _write_report(run, payload, f"t = {res.t_statistic:.6g}, df = {res.df:.4g}, p = {res.p_value:.6g} ({verdict} at "
                                f"alpha = {cfg.tree['eval']['ttest_alpha']})")
    return run


def cmd_export_embeddings(args, cfg):
    if not Path(args.checkpoint).exists():
        raise DataError(f"checkpoint {args.checkpoint} not found")
    model = TrainedModel.load(args.checkpoint)
    segs = load_segments(cfg)
    run = _run_dir(args, cfg)
    emb = export_embeddings(model, segs, run / "embeddings.csv")
    payload = {"segments": len(segs), "width": int(emb.shape[1]), "file": "embeddings.csv"}
    _write_report(run, payload, f"{len(segs)} embeddings of width {emb.shape[1]}")
    return run


COMMANDS = {
    "generate": cmd_generate,
    "train": cmd_train,
    "zero-shot": cmd_zero_shot,
    "finetune": cmd_finetune,
    "gridsearch": cmd_gridsearch,
    "ttest": cmd_ttest,
    "export-embeddings": cmd_export_embeddings,
}


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="pibearing", description="Physics-informed bearing fault diagnosis toolkit.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--config", "-c", help="YAML experiment config")
        p.add_argument("--out", help=f"output root (default ${OUT_ENV} or ./runs)")
        p.add_argument("--run-id", help="run directory name (default: command plus config digest)")
        p.add_argument("--force", action="store_true", help="overwrite an existing run directory")
        p.add_argument("--seed", type=int, help="master seed")
        p.add_argument("-v", "--verbose", action="store_true")
        return p

    common(sub.add_parser("generate", help="write a synthetic segment corpus"))
    p = common(sub.add_parser("train", help="train and evaluate a model"))
    p.add_argument("--data", help="segment file (overrides data.path)")
    p.add_argument("--lam", type=float, help="physics loss weight")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--resume", help="continue from a checkpoint")
    for name, text in (("zero-shot", "evaluate a source model on target data"),
                       ("finetune", "adapt a source model to target data")):
        p = common(sub.add_parser(name, help=text))
        p.add_argument("--data", help="target segment file (overrides data.path)")
        p.add_argument("--source", help="source checkpoint (overrides tl.source_checkpoint)")
        if name == "finetune":
            p.add_argument("--strategy", choices=["tsft", "las", "hfr"])
            p.add_argument("--max-epochs", type=int)
    p = common(sub.add_parser("gridsearch", help="lambda x percentile x split grid"))
    p.add_argument("--data", help="segment file (overrides data.path)")
    p.add_argument("--max-epochs", type=int)
    p.add_argument("--jobs", type=int, default=1, help="worker processes")
    p = common(sub.add_parser("ttest", help="Welch t-test between two result files"))
    p.add_argument("a")
    p.add_argument("b")
    p = common(sub.add_parser("export-embeddings", help="fused activations per segment"))
    p.add_argument("--checkpoint", required=True)
    p.add_argument("--data", help="segment file (overrides data.path)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        cfg = _load_config(args)
        run = COMMANDS[args.command](args, cfg)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except FileExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except NumericalError as exc:
        print(f"numerical error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except (DataError, SegmentParseError, ConstantChannelError, StratificationError, InsufficientDataError,
            DegenerateTestError, CheckpointError, FileNotFoundError, ValueError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    print(run)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
