"""
Training loop and experiment orchestration: split -> standardize -> physics
features -> fit with early stopping -> evaluate, plus the (lambda, threshold
percentile) grid search with stratified k-fold model selection.
"""

from __future__ import annotations

import logging
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace

import numpy as np

from . import dsp
from .dataio import channel_stats, make_folds, make_split, stack_segments, standardize_array
from .evaluation import EvalReport
from .geometry import BearingGeometry, PADERBORN_6203
from .model import (
    SOFT,
    ArchConfig,
    FeatureNormalizer,
    MultimodalNet,
    PhysicsLossConfig,
    TrainedModel,
    corpus_features,
    physics_informed_loss,
    subthreshold_fault_predictions,
)
from .nn import EarlyStopping, adam_step

log = logging.getLogger(__name__)

GRID_COLUMNS = (
    "split", "lambda", "threshold_pct", "fold", "val_acc", "test_acc", "test_f1",
    "auc_healthy", "auc_inner", "auc_outer", "wall_s",
)


class NumericalError(RuntimeError):
    """Loss became NaN or infinite during training."""


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-4
    batch_size: int = 32
    patience: int = 10
    max_epochs: int = 100
    seed: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-7


@dataclass
class Corpus:
    """Stacked raw segments with cached raw physics features."""

    segments: list
    X: np.ndarray  # (N, 3, L) float32, unstandardized
    y: np.ndarray
    raw_feats: np.ndarray  # (N, 2)

    @classmethod
    def from_segments(cls, segments, geometry: BearingGeometry = PADERBORN_6203,
                      band: dsp.BandpassSpec = dsp.BandpassSpec()) -> "Corpus":
        X, y = stack_segments(segments)
        return cls(list(segments), X, y, corpus_features(segments, geometry, band))

    def subset(self, idx) -> "Corpus":
        idx = np.asarray(idx, dtype=int)
        return Corpus([self.segments[i] for i in idx], self.X[idx], self.y[idx], self.raw_feats[idx])

    def __len__(self):
        return len(self.y)


def _batches(n, batch_size, rng):
    order = rng.permutation(n)
    for i in range(0, n, batch_size):
        yield order[i : i + batch_size]


def batch_loss(net, X, y, F, loss_cfg, batch_size=64):
    """Mean loss, accuracy and logits over a whole set without gradient work."""
    logits = net.logits(X, F, batch_size)
    loss, _, _ = physics_informed_loss(logits, y, F, loss_cfg)
    return loss, float((logits.argmax(1) == y).mean()), logits


def fit(net: MultimodalNet, train, val, loss_cfg: PhysicsLossConfig, cfg: TrainConfig = TrainConfig()):
    """Mini-batch Adam with early stopping on validation loss.

    ``train`` and ``val`` are ``(X, y, F)`` tuples of standardized inputs,
    labels and normalized physics features.  The best-epoch weights are
    restored before returning the per-epoch history.
    """
    Xtr, ytr, Ftr = train
    Xva, yva, Fva = val
    if len(ytr) == 0 or len(yva) == 0:
        raise ValueError("empty training or validation set")
    if cfg.max_epochs < 1:
        raise ValueError("max_epochs must be >= 1")
    rng = np.random.default_rng([cfg.seed, 0x5EED])
    store = net.store
    stopper = EarlyStopping(cfg.patience, cfg.max_epochs)
    history = []
    for epoch in range(1, cfg.max_epochs + 1):
        total, count = 0.0, 0
        for idx in _batches(len(ytr), cfg.batch_size, rng):
            store.zero_grad()
            logits = net.forward(Xtr[idx], Ftr[idx])
            loss, grad, _ = physics_informed_loss(logits, ytr[idx], Ftr[idx], loss_cfg)
            if not np.isfinite(loss):
                raise NumericalError(f"non-finite loss {loss} at epoch {epoch}")
            net.backward(grad)
            adam_step(store, None, cfg.lr, cfg.beta1, cfg.beta2, cfg.eps)
            total += loss * len(idx)
            count += len(idx)
        val_loss, val_acc, _ = batch_loss(net, Xva, yva, Fva, loss_cfg)
        if not np.isfinite(val_loss):
            raise NumericalError(f"non-finite validation loss at epoch {epoch}")
        history.append({"epoch": epoch, "train_loss": total / count, "val_loss": val_loss, "val_acc": val_acc})
        if stopper.update(val_loss, store.snapshot):
            break
    store.restore(stopper.best_state)
    for h in history:
        h["best_epoch"] = stopper.best_epoch
    return history


def evaluate(model: TrainedModel, X, y, F, **extra) -> EvalReport:
    """Report on prepared arrays; also counts sub-threshold fault predictions."""
    if len(y) == 0:
        raise ValueError("cannot evaluate an empty set")
    probs = model.net.predict_proba(X, F)
    sub = subthreshold_fault_predictions(probs.argmax(1), F, model.loss_cfg)
    return EvalReport.from_predictions(y, probs, seeds=[model.net.seed], subthreshold_faults=sub, **extra)


def prepare_parts(corpus: Corpus, train_idx, lam=1.0, percentile=10.0, gating=SOFT):
    """Fit standardization, feature normalization and thresholds on ``train_idx``."""
    stats = channel_stats(_SegView(corpus.X, train_idx))
    normalizer = FeatureNormalizer.fit(corpus.raw_feats[train_idx])
    feats = normalizer(corpus.raw_feats)
    loss_cfg = PhysicsLossConfig.from_training(feats[train_idx], corpus.y[train_idx], lam, percentile, gating)
    return stats, normalizer, feats, loss_cfg


class _SegView:
    """Adapter so channel_stats can run over rows of a stacked array."""

    def __init__(self, X, idx):
        self.X, self.idx = X, np.asarray(idx, dtype=int)

    def __len__(self):
        return len(self.idx)

    def __iter__(self):
        for i in self.idx:
            yield _Row(self.X[i])


class _Row:
    def __init__(self, x):
        self._x = x

    def channels(self):
        return self._x


def train_on_indices(corpus: Corpus, train_idx, val_idx, *, arch: ArchConfig = ArchConfig(),
                     train_cfg: TrainConfig = TrainConfig(), lam=1.0, percentile=10.0, gating=SOFT,
                     geometry=PADERBORN_6203, band=dsp.BandpassSpec()):
    stats, normalizer, feats, loss_cfg = prepare_parts(corpus, train_idx, lam, percentile, gating)
    Xs = standardize_array(corpus.X, stats).astype(np.float32)
    net = MultimodalNet(arch, train_cfg.seed)
    history = fit(
        net,
        (Xs[train_idx], corpus.y[train_idx], feats[train_idx]),
        (Xs[val_idx], corpus.y[val_idx], feats[val_idx]),
        loss_cfg,
        train_cfg,
    )
    model = TrainedModel(net, stats, normalizer, loss_cfg, geometry, band)
    return model, history, Xs, feats


@dataclass
class TrainResult:
    model: TrainedModel
    report: EvalReport
    history: list
    split: object
    wall_s: float


def train_pipeline(corpus: Corpus, *, ratios=(0.6, 0.2, 0.2), split_seed=0, arch: ArchConfig = ArchConfig(),
                   train_cfg: TrainConfig = TrainConfig(), lam=1.0, percentile=10.0, gating=SOFT,
                   geometry=PADERBORN_6203, band=dsp.BandpassSpec(), split=None,
                   test_labels=None) -> TrainResult:
    """Split, train with early stopping and evaluate on the held-out test part.

    ``split`` overrides the stratified split; ``test_labels`` (full-length)
    replaces ``corpus.y`` when scoring the test part, for corpora whose
    training annotations differ from the ground truth.
    """
    t0 = time.perf_counter()
    if split is None:
        split = make_split(corpus.y, ratios, split_seed)
    if len(split.validation) == 0:
        raise ValueError("train_pipeline needs a validation ratio > 0")
    model, history, Xs, feats = train_on_indices(
        corpus, split.train, split.validation, arch=arch, train_cfg=train_cfg, lam=lam,
        percentile=percentile, gating=gating, geometry=geometry, band=band,
    )
    t = split.test
    y_test = (corpus.y if test_labels is None else np.asarray(test_labels))[t]
    report = evaluate(model, Xs[t], y_test, feats[t], best_epoch=history[-1]["best_epoch"],
                      epochs=len(history))
    model.info = {"train_cfg": asdict(train_cfg), "ratios": list(ratios), "split_seed": split_seed,
                  "test_accuracy": report.accuracy}
    return TrainResult(model, report, history, split, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# grid search
# --------------------------------------------------------------------------


def split_name(ratios) -> str:
    return "/".join(str(round(r * 100)) for r in ratios)


def _grid_cell(corpus, split, folds, ratios, lam, pct, arch, train_cfg, gating):
    t0 = time.perf_counter()
    best = None
    for f, val_idx in enumerate(folds):
        tr_idx = np.sort(np.concatenate([folds[j] for j in range(len(folds)) if j != f]))
        model, history, Xs, feats = train_on_indices(
            corpus, tr_idx, val_idx, arch=arch, train_cfg=train_cfg, lam=lam, percentile=pct, gating=gating
        )
        _, val_acc, _ = batch_loss(model.net, Xs[val_idx], corpus.y[val_idx], feats[val_idx], model.loss_cfg)
        if best is None or val_acc > best[1]:
            t = split.test
            best = (f, val_acc, evaluate(model, Xs[t], corpus.y[t], feats[t]))
    f, val_acc, rep = best
    return {
        "split": split_name(ratios), "lambda": lam, "threshold_pct": pct, "fold": f, "val_acc": val_acc,
        "test_acc": rep.accuracy, "test_f1": rep.macro_f1, "auc_healthy": rep.auc[0], "auc_inner": rep.auc[1],
        "auc_outer": rep.auc[2], "wall_s": time.perf_counter() - t0,
    }


def _run_cell(args):
    corpus, split, folds, ratios, lam, pct, arch, train_cfg, gating = args
    try:
        return _grid_cell(corpus, split, folds, ratios, lam, pct, arch, train_cfg, gating), None
    except Exception as exc:  # a failed cell is recorded, not fatal
        row = dict.fromkeys(GRID_COLUMNS, float("nan"))
        row.update({"split": split_name(ratios), "lambda": lam, "threshold_pct": pct, "fold": -1})
        return row, f"{type(exc).__name__}: {exc}"


def grid_search(corpus: Corpus, *, lambdas=(0.05, 0.20, 1.00), percentiles=(5, 10, 15),
                splits=((0.8, 0.2), (0.7, 0.3), (0.6, 0.4)), k=5, master_seed=0,
                arch: ArchConfig = ArchConfig(), train_cfg: TrainConfig = TrainConfig(), gating=SOFT, jobs=1):
    """Every (split, lambda, percentile) cell with ``k``-fold model selection.

    The best fold per cell (highest validation accuracy, lowest index on
    ties) is scored on the split's held-out test part.  Rows are ranked by
    test accuracy within each split.  Returns ``(rows, errors)``.
    """
    if not lambdas or not percentiles or not splits:
        raise ValueError("grid must be non-empty")
    seeds = np.random.SeedSequence(master_seed).generate_state(2 * len(splits))
    train_cfg = replace(train_cfg, seed=int(seeds[0]) % (2**31))
    tasks = []
    for s, ratios in enumerate(splits):
        split = make_split(corpus.y, ratios, int(seeds[2 * s]))
        folds = make_folds(split.train, corpus.y, k, int(seeds[2 * s + 1]))
        for lam in lambdas:
            for pct in percentiles:
                tasks.append((corpus, split, folds, ratios, float(lam), float(pct), arch, train_cfg, gating))
    if jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_run_cell, tasks))
    else:
        results = [_run_cell(t) for t in tasks]
    rows, errors = [], []
    for (row, err), task in zip(results, tasks):
        rows.append(row)
        if err is not None:
            log.warning("grid cell %s lambda=%s pct=%s failed: %s", row["split"], task[4], task[5], err)
            errors.append({"split": row["split"], "lambda": task[4], "threshold_pct": task[5], "error": err})
    order = {split_name(r): i for i, r in enumerate(splits)}

    def key(r):
        acc = r["test_acc"]
        return (order[r["split"]], -(acc if acc == acc else -1.0), r["lambda"], r["threshold_pct"])

    rows.sort(key=key)
    return rows, errors


def write_grid_csv(rows, path) -> None:
    import csv

    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=GRID_COLUMNS)
        w.writeheader()
        for r in rows:
            w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in r.items()})
