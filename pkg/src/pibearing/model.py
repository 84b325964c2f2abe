"""
Multimodal late-fusion classifier with a physics branch, and the
physics-informed loss.

Three convolutional branches (current A, current B, vibration) and a dense
branch over the normalized BPFO/BPFI envelope amplitudes are concatenated
and passed through a dense head that emits logits for
(Healthy, Inner fault, Outer fault).
"""

from __future__ import annotations

import csv
import hashlib
import json
from dataclasses import asdict, dataclass, field

import numpy as np

from . import dsp
from .dataio import CHANNELS, ChannelStats, Label, SignalSegment, standardize_array
from .geometry import BearingGeometry, OperatingCondition, PADERBORN_6203, bpfi, bpfo, shaft_frequency
from .nn import (
    Conv1D,
    Dense,
    Flatten,
    MaxPool1D,
    ParamStore,
    ReLU,
    Sequential,
    ShapeError,
    StateError,
    load_into,
    read_checkpoint,
    save_checkpoint,
    softmax,
    softmax_cross_entropy,
)

BRANCHES = ("current_a", "current_b", "vibration")
# input channel index of each conv branch
_BRANCH_CHANNEL = {"vibration": 0, "current_a": 1, "current_b": 2}

HARD = "hard"
SOFT = "soft"


# --------------------------------------------------------------------------
# physics features
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PhysicsFeatures:
    a_bpfo: float
    a_bpfi: float


def extract_physics_features(seg: SignalSegment, geom: BearingGeometry = PADERBORN_6203,
                             cond: OperatingCondition | None = None,
                             band: dsp.BandpassSpec = dsp.BandpassSpec(),
                             tolerance_hz: float | None = None) -> PhysicsFeatures:
    """Envelope-spectrum amplitudes at BPFO and BPFI for one segment.

    ``cond`` defaults to the segment's own operating condition.
    """
    cond = seg.condition if cond is None else cond
    f_r = shaft_frequency(cond)
    x = seg.vibration.astype(np.float64)
    if not np.any(x):
        return PhysicsFeatures(0.0, 0.0)
    spec = dsp.envelope_spectrum(dsp.TimeSeries(x, seg.sample_rate_hz), band)
    return PhysicsFeatures(
        dsp.amplitude_at(spec, bpfo(geom, f_r), tolerance_hz),
        dsp.amplitude_at(spec, bpfi(geom, f_r), tolerance_hz),
    )


def corpus_features(segments, geom: BearingGeometry = PADERBORN_6203,
                    band: dsp.BandpassSpec = dsp.BandpassSpec()) -> np.ndarray:
    """Raw (N, 2) array of [a_bpfo, a_bpfi] per segment."""
    out = np.empty((len(segments), 2))
    for i, seg in enumerate(segments):
        f = extract_physics_features(seg, geom, None, band)
        out[i] = f.a_bpfo, f.a_bpfi
    return out


@dataclass(frozen=True)
class FeatureNormalizer:
    """Divide by the training-corpus maximum per feature, clip to [0, 1]."""

    max_bpfo: float
    max_bpfi: float

    @classmethod
    def fit(cls, raw: np.ndarray) -> "FeatureNormalizer":
        m = np.asarray(raw, dtype=np.float64).max(axis=0)
        return cls(float(m[0]) or 1.0, float(m[1]) or 1.0)

    def __call__(self, raw: np.ndarray) -> np.ndarray:
        scale = np.array([self.max_bpfo, self.max_bpfi])
        return np.clip(np.asarray(raw, dtype=np.float64) / scale, 0.0, 1.0)


# --------------------------------------------------------------------------
# physics-informed loss
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class PhysicsLossConfig:
    """Penalty weight, amplitude thresholds (in normalized units) and gating mode."""

    lam: float = 1.0
    t_bpfo: float = 0.0
    t_bpfi: float = 0.0
    threshold_percentile: float = 10.0
    gating: str = SOFT

    def __post_init__(self):
        if self.lam < 0 or self.t_bpfo < 0 or self.t_bpfi < 0:
            raise ValueError("lambda and thresholds must be nonnegative")
        if not 0 < self.threshold_percentile < 100:
            raise ValueError("threshold percentile must lie in (0, 100)")
        if self.gating not in (HARD, SOFT):
            raise ValueError(f"gating must be {HARD!r} or {SOFT!r}, got {self.gating!r}")

    @classmethod
    def from_training(cls, feats: np.ndarray, labels=None, lam=1.0, percentile=10.0,
                      gating=SOFT) -> "PhysicsLossConfig":
        """Thresholds from training-split amplitudes.

        ``T_BPFO`` is the ``percentile``-th percentile of the BPFO amplitude
        over training segments labeled Outer fault, ``T_BPFI`` likewise over
        Inner-fault segments.  Without labels (or with no segment of that
        class) the whole column is used.
        """
        feats = np.asarray(feats)

        def column(col, cls_):
            if labels is not None:
                mask = np.asarray(labels) == cls_
                if mask.any():
                    return feats[mask, col]
            return feats[:, col]

        return cls(
            lam,
            dsp.percentile_threshold(column(0, Label.OUTER), percentile),
            dsp.percentile_threshold(column(1, Label.INNER), percentile),
            percentile,
            gating,
        )


def physics_penalty(pred, feats: PhysicsFeatures, cfg: PhysicsLossConfig) -> float:
    """Penalty for one sample.

    ``pred`` is a class index (hard gating) or a length-3 probability vector.
    With a probability vector and ``cfg.gating == "hard"`` the argmax is used.
    """
    if np.ndim(pred) == 0:
        probs = np.zeros(3)
        probs[int(pred)] = 1.0
    else:
        probs = np.asarray(pred, dtype=np.float64)
    if cfg.gating == HARD or np.ndim(pred) == 0:
        cls = int(np.argmax(probs))
        if cls == Label.OUTER and feats.a_bpfo < cfg.t_bpfo:
            return cfg.t_bpfo - feats.a_bpfo
        if cls == Label.INNER and feats.a_bpfi < cfg.t_bpfi:
            return cfg.t_bpfi - feats.a_bpfi
        return 0.0
    return float(
        probs[Label.OUTER] * max(0.0, cfg.t_bpfo - feats.a_bpfo)
        + probs[Label.INNER] * max(0.0, cfg.t_bpfi - feats.a_bpfi)
    )


def _hinges(feats: np.ndarray, cfg: PhysicsLossConfig) -> np.ndarray:
    """(N, 3) per-class shortfall below threshold; zero for Healthy."""
    h = np.zeros((feats.shape[0], 3))
    h[:, Label.OUTER] = np.maximum(0.0, cfg.t_bpfo - feats[:, 0])
    h[:, Label.INNER] = np.maximum(0.0, cfg.t_bpfi - feats[:, 1])
    return h


def penalty_terms(logits: np.ndarray, feats: np.ndarray, cfg: PhysicsLossConfig):
    """Per-sample penalties ``P_i`` and their gradient with respect to the logits.

    Hard gating picks the hinge of the argmax class and carries no gradient.
    Soft gating weights every class hinge by its softmax probability.
    """
    h = _hinges(np.asarray(feats, dtype=np.float64), cfg)
    n = logits.shape[0]
    if cfg.gating == HARD:
        pred = logits.argmax(axis=1)
        return h[np.arange(n), pred], np.zeros_like(logits)
    p = softmax(logits)
    pen = (p * h).sum(axis=1)
    # d(sum_k p_k h_k)/dz_j = p_j (h_j - sum_k p_k h_k)
    return pen, p * (h - pen[:, None])


def physics_informed_loss(logits, labels, feats, cfg: PhysicsLossConfig):
    """``CE + lam * mean(P_i)``; returns ``(loss, grad_logits, (ce, mean_penalty))``."""
    logits = np.asarray(logits, dtype=np.float64)
    ce, grad = softmax_cross_entropy(logits, labels)
    if cfg.lam == 0.0:
        return ce, grad, (ce, 0.0)
    pen, pen_grad = penalty_terms(logits, feats, cfg)
    n = logits.shape[0]
    mean_pen = float(pen.mean())
    return ce + cfg.lam * mean_pen, grad + (cfg.lam / n) * pen_grad, (ce, mean_pen)


def subthreshold_fault_predictions(pred: np.ndarray, feats: np.ndarray, cfg: PhysicsLossConfig) -> int:
    """Count fault predictions whose characteristic amplitude is below its threshold."""
    pred = np.asarray(pred)
    feats = np.asarray(feats)
    outer = (pred == Label.OUTER) & (feats[:, 0] < cfg.t_bpfo)
    inner = (pred == Label.INNER) & (feats[:, 1] < cfg.t_bpfi)
    return int(outer.sum() + inner.sum())


# --------------------------------------------------------------------------
# architecture
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ConvBlock:
    channels: int
    kernel: int
    stride: int = 1
    pool: int = 2


@dataclass(frozen=True)
class ArchConfig:
    """Layer stacks of the multimodal network.

    The default is the desk-scale network: the same branch layout, fusion
    point and freeze boundaries as the full model at roughly 60K parameters.
    """

    input_len: int = 10000
    conv_blocks: tuple = (ConvBlock(4, 16, 16, 4), ConvBlock(8, 4, 1, 4))
    physics_units: int = 8
    head_units: tuple = (64,)
    n_classes: int = 3

    def __post_init__(self):
        blocks = tuple(b if isinstance(b, ConvBlock) else ConvBlock(**b) for b in self.conv_blocks)
        object.__setattr__(self, "conv_blocks", blocks)
        object.__setattr__(self, "head_units", tuple(int(u) for u in self.head_units))
        if not blocks:
            raise ValueError("at least one conv block is required")

    def to_dict(self) -> dict:
        d = asdict(self)
        d["conv_blocks"] = [asdict(b) for b in self.conv_blocks]
        d["head_units"] = list(self.head_units)
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ArchConfig":
        d = dict(d)
        d["conv_blocks"] = tuple(ConvBlock(**b) for b in d.get("conv_blocks", ()))
        d["head_units"] = tuple(d.get("head_units", ()))
        return cls(**d)

    def hash(self) -> str:
        return hashlib.sha256(json.dumps(self.to_dict(), sort_keys=True).encode()).hexdigest()


class MultimodalNet:
    """Late-fusion network owning its parameters in a ``ParamStore``.

    Parameter names: ``<branch>.conv<i>.{W,b}`` for the conv branches,
    ``physics.dense.{W,b}`` and ``head.fc<i>.{W,b}`` / ``head.out.{W,b}``.
    """

    def __init__(self, arch: ArchConfig = ArchConfig(), seed: int = 0):
        self.arch = arch
        self.seed = seed
        self.store = ParamStore()
        rng = np.random.default_rng(seed)
        self.branches = {}
        width = 0
        for name in BRANCHES:
            layers = []
            shape = (1, arch.input_len)
            for i, block in enumerate(arch.conv_blocks):
                conv = Conv1D(self.store, f"{name}.conv{i}", shape[0], block.channels, block.kernel, block.stride, rng)
                if i == 0:
                    conv.input_grad = False
                pool = MaxPool1D(block.pool)
                shape = pool.output_shape(conv.output_shape(shape))
                layers += [conv, ReLU(), pool]
            layers.append(Flatten())
            self.branches[name] = Sequential(layers)
            width += shape[0] * shape[1]
        self.physics = Sequential([Dense(self.store, "physics.dense", 2, arch.physics_units, rng), ReLU()])
        width += arch.physics_units
        self.fusion_width = width
        self.head = self._build_head(rng)
        self._widths = None

    def _build_head(self, rng) -> Sequential:
        layers = []
        width = self.fusion_width
        for i, units in enumerate(self.arch.head_units):
            name = f"head.fc{i}"
            layers += [Dense(self.store, name, width, units, rng), ReLU()]
            width = units
        layers.append(Dense(self.store, "head.out", width, self.arch.n_classes, rng))
        return Sequential(layers)

    # -- parameter groups ------------------------------------------------
    def conv_params(self) -> list[str]:
        return [p for b in self.branches.values() for p in b.params]

    def first_block_params(self) -> list[str]:
        return [p for b in BRANCHES for p in (f"{b}.conv0.W", f"{b}.conv0.b")]

    def physics_params(self) -> list[str]:
        return list(self.physics.params)

    def head_params(self) -> list[str]:
        return list(self.head.params)

    def reinit_head(self, seed: int) -> None:
        """Replace every head tensor with a fresh Xavier sample (biases zero)."""
        from .nn import xavier_init

        rng = np.random.default_rng(seed)
        for name in self.head_params():
            value = self.store[name]
            new = xavier_init(value.shape, rng) if name.endswith(".W") else np.zeros_like(value)
            self.store.set_value(name, new)
            self.store.m[name].fill(0.0)
            self.store.v[name].fill(0.0)

    # -- computation -----------------------------------------------------
    def forward(self, x: np.ndarray, feats: np.ndarray) -> np.ndarray:
        """Logits for standardized inputs ``x`` (N, 3, L) and normalized features (N, 2)."""
        x = np.asarray(x)
        feats = np.asarray(feats, dtype=np.float64)
        if x.ndim != 3 or x.shape[1] != 3 or x.shape[2] != self.arch.input_len:
            raise ShapeError(f"expected input (N, 3, {self.arch.input_len}), got {x.shape}")
        if feats.shape != (x.shape[0], 2):
            raise ShapeError(f"expected physics features ({x.shape[0]}, 2), got {feats.shape}")
        parts = []
        for name in BRANCHES:
            c = _BRANCH_CHANNEL[name]
            parts.append(self.branches[name].forward(np.ascontiguousarray(x[:, c : c + 1, :], dtype=np.float64)))
        parts.append(self.physics.forward(feats))
        self._widths = [p.shape[1] for p in parts]
        self.fused = np.concatenate(parts, axis=1)
        return self.head.forward(self.fused)

    def backward(self, grad_logits: np.ndarray) -> None:
        if self._widths is None:
            raise StateError("backward called before forward")
        g = self.head.backward(grad_logits)
        splits = np.cumsum(self._widths)[:-1]
        pieces = np.split(g, splits, axis=1)
        for branch, piece in zip([*(self.branches[b] for b in BRANCHES), self.physics], pieces):
            if any(self.store.trainable[p] for p in branch.params):
                branch.backward(piece)
            else:  # fully frozen branch: drop caches, skip the work
                for layer in branch.layers:
                    layer._cache = None
        self._widths = None

    def predict_proba(self, x, feats, batch_size: int = 64) -> np.ndarray:
        return softmax(self.logits(x, feats, batch_size))

    def logits(self, x, feats, batch_size: int = 64) -> np.ndarray:
        out = [self.forward(x[i : i + batch_size], feats[i : i + batch_size]) for i in range(0, len(x), batch_size)]
        self._widths = None
        return np.concatenate(out) if out else np.zeros((0, self.arch.n_classes))

    def embeddings(self, x, feats, batch_size: int = 64) -> np.ndarray:
        """Fused (pre-head) activation vectors, shape (N, fusion_width)."""
        out = []
        for i in range(0, len(x), batch_size):
            self.forward(x[i : i + batch_size], feats[i : i + batch_size])
            out.append(self.fused.copy())
        self._widths = None
        return np.concatenate(out) if out else np.zeros((0, self.fusion_width))


# --------------------------------------------------------------------------
# trained model bundle
# --------------------------------------------------------------------------


@dataclass
class TrainedModel:
    """A network plus everything needed to apply it to raw segments."""

    net: MultimodalNet
    stats: ChannelStats
    normalizer: FeatureNormalizer
    loss_cfg: PhysicsLossConfig
    geometry: BearingGeometry = PADERBORN_6203
    band: dsp.BandpassSpec = dsp.BandpassSpec()
    info: dict = field(default_factory=dict)

    @property
    def arch(self) -> ArchConfig:
        return self.net.arch

    def prepare(self, segments, raw_feats: np.ndarray | None = None):
        """Standardized inputs and normalized physics features for ``segments``."""
        from .dataio import stack_segments

        X, y = stack_segments(segments)
        X = standardize_array(X, self.stats).astype(np.float32)
        if raw_feats is None:
            raw_feats = corpus_features(segments, self.geometry, self.band)
        return X, y, self.normalizer(raw_feats)

    def save(self, path) -> None:
        extra = {
            "arch": self.arch.to_dict(),
            "seed": self.net.seed,
            "stats": {"mean": list(self.stats.mean), "std": list(self.stats.std)},
            "normalizer": asdict(self.normalizer),
            "loss": asdict(self.loss_cfg),
            "geometry": asdict(self.geometry),
            "band": asdict(self.band),
            "info": self.info,
        }
        save_checkpoint(path, self.net.store, self.arch.hash(), extra)

    @classmethod
    def load(cls, path, expected_arch: ArchConfig | None = None) -> "TrainedModel":
        meta, _ = read_checkpoint(path)
        extra = meta["extra"]
        arch = ArchConfig.from_dict(extra["arch"])
        if expected_arch is not None and expected_arch.hash() != meta["arch_hash"]:
            from .nn import CheckpointError

            raise CheckpointError("checkpoint architecture does not match the requested architecture")
        net = MultimodalNet(arch, extra["seed"])
        load_into(path, net.store, arch.hash())
        return cls(
            net,
            ChannelStats(tuple(extra["stats"]["mean"]), tuple(extra["stats"]["std"])),
            FeatureNormalizer(**extra["normalizer"]),
            PhysicsLossConfig(**extra["loss"]),
            BearingGeometry(**extra["geometry"]),
            dsp.BandpassSpec(**extra["band"]),
            extra.get("info", {}),
        )


def export_embeddings(model: TrainedModel, segments, path, raw_feats=None, ids=None) -> np.ndarray:
    """Write ``segment_id, label, condition, e0..e{W-1}`` rows of fused activations."""
    X, y, F = model.prepare(segments, raw_feats)
    emb = model.net.embeddings(X, F)
    ids = range(len(segments)) if ids is None else ids
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["segment_id", "label", "condition"] + [f"e{i}" for i in range(emb.shape[1])])
        for sid, seg, row in zip(ids, segments, emb):
            w.writerow([sid, seg.label.name, seg.condition.label] + [repr(float(v)) for v in row])
    return emb
