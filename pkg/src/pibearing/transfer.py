"""
Transfer learning between operating conditions.

Three adaptation strategies are expressed as freeze plans over the tensors of
a ``MultimodalNet``:

* ``tsft`` -- every convolutional branch and the physics branch frozen, the
  fused dense head fine-tuned.
* ``las`` -- only the first conv/pool block of each branch frozen.
* ``hfr`` -- same trainable set as ``tsft``, but the head is re-initialized
  before fine-tuning.  Head re-initialization is the only difference between
  ``tsft`` and ``hfr``.

Fine-tuning keeps the source model's standardization statistics, feature
normalizer and physics thresholds and starts from fresh Adam moments.
"""

from __future__ import annotations

import enum
import time
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from .dataio import DatasetSplit, Label, SynthesisSpec, make_split, standardize_array
from .evaluation import EvalReport
from .geometry import OperatingCondition
from .model import MultimodalNet, TrainedModel
from .nn import CheckpointError
from .pipeline import Corpus, TrainConfig, evaluate, fit


class PlanError(ValueError):
    """A freeze plan does not match the network it is applied to."""


class StrategyKind(str, enum.Enum):
    TSFT = "tsft"
    LAS = "las"
    HFR = "hfr"


@dataclass(frozen=True)
class TlStrategy:
    kind: StrategyKind
    source_checkpoint: str | None = None
    reinit_head: bool | None = None

    def __post_init__(self):
        try:
            kind = StrategyKind(str(getattr(self.kind, "value", self.kind)).lower())
        except ValueError:
            raise ValueError(f"unknown transfer strategy {self.kind!r}; expected tsft, las or hfr") from None
        object.__setattr__(self, "kind", kind)
        expected = kind is StrategyKind.HFR
        if self.reinit_head is None:
            object.__setattr__(self, "reinit_head", expected)
        elif bool(self.reinit_head) != expected:
            raise ValueError(f"reinit_head must be {expected} for {kind.value}")

    @classmethod
    def parse(cls, name: str, source_checkpoint=None) -> "TlStrategy":
        return cls(name, None if source_checkpoint is None else str(source_checkpoint))


@dataclass(frozen=True)
class FreezePlan:
    """Trainable flag for every named tensor of a network."""

    strategy: StrategyKind
    trainable: dict = field(default_factory=dict)
    reinit: tuple = ()

    @property
    def frozen_names(self) -> list[str]:
        return [n for n, t in self.trainable.items() if not t]

    @property
    def trainable_names(self) -> list[str]:
        return [n for n, t in self.trainable.items() if t]

    def trainable_count(self, net: MultimodalNet) -> int:
        return int(sum(net.store[n].size for n in self.trainable_names))

    def apply(self, net: MultimodalNet) -> None:
        """Set freeze bits on ``net``; every tensor must be covered exactly."""
        names = set(net.store)
        planned = set(self.trainable)
        if names != planned:
            missing = sorted(names - planned)
            unknown = sorted(planned - names)
            raise PlanError(f"freeze plan mismatch: missing {missing}, unknown {unknown}")
        for name, flag in self.trainable.items():
            net.store.trainable[name] = bool(flag)


def build_freeze_plan(net: MultimodalNet, strategy: TlStrategy) -> FreezePlan:
    """Freeze plan for ``strategy`` over every tensor of ``net``."""
    names = list(net.store)
    head = set(net.head_params())
    if strategy.kind is StrategyKind.LAS:
        frozen = set(net.first_block_params())
    else:
        frozen = set(names) - head
    unknown = frozen - set(names)
    if unknown:
        raise PlanError(f"unknown tensor names {sorted(unknown)}")
    trainable = {n: n not in frozen for n in names}
    reinit = tuple(n for n in names if n in head) if strategy.reinit_head else ()
    return FreezePlan(strategy.kind, trainable, reinit)


def _load(source) -> TrainedModel:
    if isinstance(source, TrainedModel):
        return source
    return TrainedModel.load(source)


def _clone(model: TrainedModel) -> TrainedModel:
    net = MultimodalNet(model.arch, model.net.seed)
    net.store.restore(model.net.store.snapshot())
    return replace(model, net=net, info=dict(model.info))


def _prepared(model: TrainedModel, corpus: Corpus):
    X = standardize_array(corpus.X, model.stats).astype(np.float32)
    return X, model.normalizer(corpus.raw_feats)


def zero_shot_eval(source, target: Corpus, indices=None) -> EvalReport:
    """Apply a source model to target segments without any parameter update."""
    model = _load(source)
    if indices is not None:
        target = target.subset(indices)
    if len(target) == 0:
        raise ValueError("zero-shot target set is empty")
    X, F = _prepared(model, target)
    return evaluate(model, X, target.y, F)


@dataclass
class FinetuneResult:
    model: TrainedModel
    report: EvalReport
    plan: FreezePlan
    history: list
    trainable_params: int
    wall_s: float


def finetune(source, target: Corpus, split: DatasetSplit, strategy: TlStrategy,
             train_cfg: TrainConfig = TrainConfig()) -> FinetuneResult:
    """Adapt ``source`` to ``target`` under ``strategy`` and score the target test part.

    ``source`` is a ``TrainedModel`` (left untouched) or a checkpoint path.
    The loss is the source model's physics-informed loss with its original
    thresholds and lambda.
    """
    t0 = time.perf_counter()
    src = _load(source)
    if strategy.source_checkpoint is not None and not isinstance(source, TrainedModel):
        expected = TrainedModel.load(strategy.source_checkpoint).arch.hash()
        if expected != src.arch.hash():
            raise CheckpointError("source checkpoint architecture hash mismatch")
    if len(split.train) == 0 or len(split.validation) == 0 or len(split.test) == 0:
        raise ValueError("finetune needs non-empty train, validation and test parts")
    model = _clone(src)
    net = model.net
    plan = build_freeze_plan(net, strategy)
    if plan.reinit:
        net.reinit_head(int(np.random.SeedSequence([train_cfg.seed, 0x4EAD]).generate_state(1)[0]))
    plan.apply(net)
    net.store.reset_optimizer()
    X, F = _prepared(model, target)
    y = target.y
    tr, va, te = split.train, split.validation, split.test
    history = fit(net, (X[tr], y[tr], F[tr]), (X[va], y[va], F[va]), model.loss_cfg, train_cfg)
    n_trainable = plan.trainable_count(net)
    report = evaluate(
        model, X[te], y[te], F[te], strategy=plan.strategy.value, trainable_params=n_trainable,
        total_params=net.store.count(), epochs=len(history), best_epoch=history[-1]["best_epoch"],
    )
    model.info = {**src.info, "finetune": {"strategy": plan.strategy.value, "trainable_params": n_trainable,
                                           "test_accuracy": report.accuracy}}
    return FinetuneResult(model, report, plan, history, n_trainable, time.perf_counter() - t0)


# --------------------------------------------------------------------------
# standard synthetic domain shift
# --------------------------------------------------------------------------

SOURCE_CONDITION = OperatingCondition(1500.0, 0.7, 1000.0, "N15_M07_F10")
TARGET_CONDITION = OperatingCondition(900.0, 0.1, 1000.0, "N09_M01_F10")


def shift_specs(seed: int = 0, source_snr_db: float = 10.0):
    """Source and target synthesis templates for the standard speed shift.

    The target runs at 900 rpm with a different structural resonance and a
    noisier vibration channel, so both the defect rates and the impact shape
    move away from the source domain.
    """
    source = SynthesisSpec(Label.HEALTHY, condition=SOURCE_CONDITION, snr_db=source_snr_db, seed=seed)
    target = replace(source, condition=TARGET_CONDITION, carrier_hz=5500.0, snr_db=source_snr_db - 6.0,
                     seed=seed + 1)
    return source, target


def shift_corpora(n_per_class: int = 100, window: int = 10000, seed: int = 0, ratios=(0.6, 0.2, 0.2)):
    """``(source_corpus, target_corpus, target_split)`` for the standard shift."""
    from .dataio import synthesize

    src_spec, tgt_spec = shift_specs(seed)
    src, tgt = [], []
    for label in Label:
        src += synthesize(replace(src_spec, label=label), n_per_class, window)
        tgt += synthesize(replace(tgt_spec, label=label), n_per_class, window)
    target = Corpus.from_segments(tgt)
    return Corpus.from_segments(src), target, make_split(target.y, ratios, seed)


def load_source(path) -> TrainedModel:
    if not Path(path).exists():
        raise FileNotFoundError(f"source checkpoint {path} not found")
    return TrainedModel.load(path)
