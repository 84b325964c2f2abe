"""
Segment ingestion, standardization, stratified splitting and the synthetic
bearing-signal generator.

Binary segment file layout (little-endian)::

    b"BSEG" | version u16 | window_len u32 | sample_rate f64
    | label_len u16 | condition label (UTF-8)
    then per record: class u8 | vibration f32[window_len]
                     | current_a f32[window_len] | current_b f32[window_len]
"""

from __future__ import annotations

import csv
import enum
import math
import struct
from dataclasses import dataclass, field, replace

import numpy as np

from .geometry import (
    BearingGeometry,
    InvalidInputError,
    OperatingCondition,
    PADERBORN_6203,
    bpfi,
    bpfo,
    parse_condition_label,
    shaft_frequency,
)

CHANNELS = ("vibration", "current_a", "current_b")
MAGIC = b"BSEG"
FORMAT_VERSION = 1


class Label(enum.IntEnum):
    HEALTHY = 0
    INNER = 1
    OUTER = 2

    @classmethod
    def parse(cls, value) -> "Label":
        if isinstance(value, Label):
            return value
        if isinstance(value, str):
            key = value.strip().upper().replace("FAULT", "").replace("_", "")
            aliases = {"HEALTHY": cls.HEALTHY, "INNER": cls.INNER, "OUTER": cls.OUTER, "IR": cls.INNER, "OR": cls.OUTER}
            if key in aliases:
                return aliases[key]
            raise ValueError(f"unknown class label {value!r}")
        return cls(int(value))


class SegmentParseError(ValueError):
    """Malformed segment file; ``record`` is the failing record index (None for the header)."""

    def __init__(self, message, record=None):
        super().__init__(message if record is None else f"record {record}: {message}")
        self.record = record


class ConstantChannelError(ValueError):
    def __init__(self, channel):
        super().__init__(f"channel {channel!r} has zero standard deviation")
        self.channel = channel


class StratificationError(ValueError):
    pass


class InvalidSynthesisSpec(ValueError):
    pass


@dataclass
class SignalSegment:
    vibration: np.ndarray
    current_a: np.ndarray
    current_b: np.ndarray
    label: Label
    condition: OperatingCondition
    sample_rate_hz: float
    # generator annotations (not persisted), e.g. {"mimic": Label.OUTER}
    tags: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        self.vibration = np.asarray(self.vibration, dtype=np.float32)
        self.current_a = np.asarray(self.current_a, dtype=np.float32)
        self.current_b = np.asarray(self.current_b, dtype=np.float32)
        self.label = Label.parse(self.label)
        n = self.vibration.shape
        if len(n) != 1 or self.current_a.shape != n or self.current_b.shape != n:
            raise ValueError(
                f"channel lengths differ: {self.vibration.shape}, {self.current_a.shape}, {self.current_b.shape}"
            )
        if not self.sample_rate_hz > 0:
            raise ValueError("sample rate must be positive")

    @property
    def window_len(self) -> int:
        return self.vibration.size

    def channels(self) -> np.ndarray:
        """(3, window_len) float32 array in CHANNELS order."""
        return np.stack([self.vibration, self.current_a, self.current_b])


# --------------------------------------------------------------------------
# windowing and standardization
# --------------------------------------------------------------------------


def segment_stream(raw, window: int, stride: int, *, label, condition: OperatingCondition,
                   sample_rate_hz: float) -> list[SignalSegment]:
    """Cut a (3, length) recording into overlapping windows.

    Segment ``i`` covers samples ``[i*stride, i*stride + window)``.
    """
    raw = np.asarray(raw)
    if raw.ndim != 2 or raw.shape[0] != 3:
        raise InvalidInputError(f"expected a (3, length) multichannel array, got shape {raw.shape}")
    length = raw.shape[1]
    if window < 1 or stride < 1:
        raise InvalidInputError("window and stride must be positive")
    if window > length:
        raise InvalidInputError(f"window {window} exceeds recording length {length}")
    count = (length - window) // stride + 1
    out = []
    for i in range(count):
        s = i * stride
        chunk = raw[:, s : s + window]
        out.append(SignalSegment(chunk[0], chunk[1], chunk[2], label, condition, sample_rate_hz))
    return out


@dataclass(frozen=True)
class ChannelStats:
    mean: tuple
    std: tuple

    def as_arrays(self):
        return np.asarray(self.mean, dtype=np.float64), np.asarray(self.std, dtype=np.float64)


def channel_stats(segments) -> ChannelStats:
    """Per-channel mean and std pooled over every sample of ``segments``."""
    if len(segments) == 0:
        raise InvalidInputError("cannot compute statistics of an empty segment list")
    sums = np.zeros(3)
    sq = np.zeros(3)
    count = 0
    for seg in segments:
        x = seg.channels().astype(np.float64)
        sums += x.sum(axis=1)
        count += x.shape[1]
    mean = sums / count
    for seg in segments:
        x = seg.channels().astype(np.float64)
        sq += ((x - mean[:, None]) ** 2).sum(axis=1)
    std = np.sqrt(sq / count)
    return ChannelStats(tuple(mean.tolist()), tuple(std.tolist()))


def standardize_array(x: np.ndarray, stats: ChannelStats) -> np.ndarray:
    """Apply ``(x - mean) / std`` channelwise to an (..., 3, L) array."""
    mean, std = stats.as_arrays()
    for name, s in zip(CHANNELS, std):
        if not s > 0:
            raise ConstantChannelError(name)
    return (np.asarray(x, dtype=np.float64) - mean[:, None]) / std[:, None]


def standardize(seg: SignalSegment, stats: ChannelStats) -> SignalSegment:
    z = standardize_array(seg.channels(), stats)
    return replace(seg, vibration=z[0], current_a=z[1], current_b=z[2])


# --------------------------------------------------------------------------
# splitting
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class DatasetSplit:
    train: np.ndarray
    validation: np.ndarray
    test: np.ndarray
    seed: int

    def parts(self):
        return self.train, self.validation, self.test


def _allocate(count: int, ratios) -> list[int]:
    # largest remainder; ties go to the earlier part
    exact = [count * r for r in ratios]
    alloc = [math.floor(e + 1e-9) for e in exact]
    rest = count - sum(alloc)
    order = sorted(range(len(ratios)), key=lambda i: (-(exact[i] - alloc[i]), i))
    for i in order[:rest]:
        alloc[i] += 1
    return alloc


def make_split(labels, ratios, seed: int) -> DatasetSplit:
    """Stratified split into train/validation/test index arrays.

    ``ratios`` is ``(train, val, test)`` or ``(train, test)``; it must sum to 1.
    """
    labels = np.asarray(labels)
    ratios = tuple(float(r) for r in ratios)
    if len(ratios) == 2:
        ratios = (ratios[0], 0.0, ratios[1])
    if len(ratios) != 3 or any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise ValueError(f"ratios must be nonnegative and sum to 1, got {ratios}")
    n_parts = sum(r > 0 for r in ratios)
    rng = np.random.default_rng(seed)
    parts = [[], [], []]
    for cls in np.unique(labels):
        idx = np.flatnonzero(labels == cls)
        if idx.size < n_parts:
            raise StratificationError(f"class {cls} has {idx.size} segments, fewer than {n_parts} parts")
        idx = rng.permutation(idx)
        start = 0
        for part, k in zip(parts, _allocate(idx.size, ratios)):
            part.append(idx[start : start + k])
            start += k
    train, val, test = (np.sort(np.concatenate(p)) if p else np.array([], dtype=int) for p in parts)
    return DatasetSplit(train, val, test, seed)


def make_folds(train_indices, labels, k: int, seed: int) -> list[np.ndarray]:
    """Partition ``train_indices`` into ``k`` stratified folds.

    Classes are dealt round-robin; the dealing position carries over between
    classes so total fold sizes also differ by at most one.
    """
    if k < 2:
        raise ValueError("need at least 2 folds")
    train_indices = np.asarray(train_indices)
    labels = np.asarray(labels)
    sub = labels[train_indices]
    rng = np.random.default_rng(seed)
    folds = [[] for _ in range(k)]
    pos = 0
    for cls in np.unique(sub):
        idx = train_indices[sub == cls]
        if idx.size < k:
            raise StratificationError(f"class {cls} has {idx.size} segments, fewer than {k} folds")
        for i in rng.permutation(idx):
            folds[pos % k].append(i)
            pos += 1
    return [np.sort(np.asarray(f, dtype=int)) for f in folds]


# --------------------------------------------------------------------------
# synthetic generator
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class SynthesisSpec:
    """Parameters of the synthetic bearing-signal model.

    Fault classes: exponentially decaying ``carrier_hz`` bursts repeating at
    BPFO/BPFI with uniform timing jitter of ``jitter_pct`` percent of the
    period, plus white noise at ``snr_db`` relative to the impact-train power.
    Current channels carry a mains tone with sidebands at ``mains ± f_fault``.
    """

    label: Label
    geometry: BearingGeometry = PADERBORN_6203
    condition: OperatingCondition = field(default_factory=lambda: OperatingCondition(1500, 0.7, 1000, "N15_M07_F10"))
    carrier_hz: float = 3000.0
    impact_decay_s: float = 0.0015
    snr_db: float = 10.0
    jitter_pct: float = 1.0
    seed: int = 0
    sample_rate_hz: float = 64000.0
    mains_hz: float = 50.0
    sideband_amp: float = 0.2
    current_noise: float = 0.05
    inner_am_depth: float = 0.5
    # fraction of segments whose vibration impacts are attenuated to
    # ``weak_gain`` (faint defects); healthy segments ignore this
    weak_fraction: float = 0.0
    weak_gain: float = 0.1
    # fraction of healthy segments carrying a fault-like current sideband
    current_mimic_fraction: float = 0.0

    def __post_init__(self):
        object.__setattr__(self, "label", Label.parse(self.label))
        if not 0 < self.carrier_hz < self.sample_rate_hz / 2:
            raise InvalidSynthesisSpec(
                f"carrier {self.carrier_hz} Hz must lie in (0, {self.sample_rate_hz / 2}) Hz"
            )
        if not 0 <= self.jitter_pct < 10:
            raise InvalidSynthesisSpec(f"jitter_pct must lie in [0, 10), got {self.jitter_pct}")
        if not self.impact_decay_s > 0:
            raise InvalidSynthesisSpec("impact_decay_s must be positive")
        if not 0 <= self.weak_fraction <= 1 or not 0 <= self.current_mimic_fraction <= 1:
            raise InvalidSynthesisSpec("fractions must lie in [0, 1]")

    def fault_frequency(self, label: Label | None = None) -> float:
        label = self.label if label is None else label
        f_r = shaft_frequency(self.condition)
        if label == Label.INNER:
            return bpfi(self.geometry, f_r)
        return bpfo(self.geometry, f_r)


def _impulse_response(spec: SynthesisSpec) -> np.ndarray:
    fs = spec.sample_rate_hz
    n = max(2, int(math.ceil(8 * spec.impact_decay_s * fs)))
    tau = np.arange(n) / fs
    return np.exp(-tau / spec.impact_decay_s) * np.sin(2 * np.pi * spec.carrier_hz * tau)


def _impact_train(spec, f_char, n, rng, f_r, am_depth, h):
    fs = spec.sample_rate_hz
    period = 1.0 / f_char
    lead = len(h) / fs
    t0 = rng.uniform(0.0, period) - lead
    count = int(math.ceil((n / fs + lead) / period)) + 1
    times = t0 + period * np.arange(count)
    times = times + rng.uniform(-1, 1, count) * (spec.jitter_pct / 100.0) * period
    amps = 1.0 + 0.05 * rng.standard_normal(count)
    if am_depth:
        amps = amps * (1.0 + am_depth * np.cos(2 * np.pi * f_r * times + rng.uniform(0, 2 * np.pi)))
    offset = len(h)
    pulses = np.zeros(n + offset)
    idx = np.round(times * fs).astype(int) + offset
    keep = (idx >= 0) & (idx < n + offset)
    np.add.at(pulses, idx[keep], amps[keep])
    return np.convolve(pulses, h)[offset : offset + n]


def _segment_rng(spec: SynthesisSpec, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence([int(spec.seed) & 0xFFFFFFFF, int(spec.label), index]))


def synthesize_one(spec: SynthesisSpec, index: int, window: int) -> SignalSegment:
    """Generate segment ``index``; depends only on (spec, index, window)."""
    rng = _segment_rng(spec, index)
    fs = spec.sample_rate_hz
    f_r = shaft_frequency(spec.condition)
    t = np.arange(window) / fs
    h = _impulse_response(spec)
    # noise referenced to the power of a unit-amplitude train at the class rate
    ref_rate = spec.fault_frequency()
    signal_power = ref_rate * float(np.sum(h**2)) / fs
    noise_std = math.sqrt(signal_power / 10 ** (spec.snr_db / 10.0))

    vib = noise_std * rng.standard_normal(window)
    vib += 0.5 * noise_std * np.sin(2 * np.pi * f_r * t + rng.uniform(0, 2 * np.pi))
    weak = rng.uniform() < spec.weak_fraction
    mimic = rng.uniform() < spec.current_mimic_fraction
    sideband_rate = None
    if spec.label != Label.HEALTHY:
        gain = spec.weak_gain if weak else 1.0
        am = spec.inner_am_depth if spec.label == Label.INNER else 0.0
        vib += gain * _impact_train(spec, ref_rate, window, rng, f_r, am, h)
        sideband_rate = ref_rate
    elif mimic:
        mimic_label = Label.OUTER if rng.uniform() < 0.5 else Label.INNER
        sideband_rate = spec.fault_frequency(mimic_label)

    currents = []
    phase0 = rng.uniform(0, 2 * np.pi)
    for shift in (0.0, -2 * np.pi / 3):
        w = 2 * np.pi * spec.mains_hz * t + phase0 + shift
        i = np.cos(w)
        if sideband_rate is not None:
            dw = 2 * np.pi * sideband_rate * t
            i += spec.sideband_amp * (np.cos(w - dw) + np.cos(w + dw))
        i += spec.current_noise * rng.standard_normal(window)
        currents.append(i)
    tags = {}
    if weak and spec.label != Label.HEALTHY:
        tags["weak"] = True
    if sideband_rate is not None and spec.label == Label.HEALTHY:
        tags["mimic"] = mimic_label
    return SignalSegment(vib, currents[0], currents[1], spec.label, spec.condition, fs, tags)


def synthesize(spec: SynthesisSpec, n_segments: int, window: int) -> list[SignalSegment]:
    if n_segments < 0 or window < 2:
        raise InvalidSynthesisSpec("n_segments must be >= 0 and window >= 2")
    return [synthesize_one(spec, i, window) for i in range(n_segments)]


# --------------------------------------------------------------------------
# file formats
# --------------------------------------------------------------------------

_HEADER = struct.Struct("<4sHIdH")


def write_segments(segments, path) -> None:
    """Write segments sharing one window length, sample rate and condition."""
    segments = list(segments)
    if segments:
        first = segments[0]
        window, fs, cond_label = first.window_len, first.sample_rate_hz, first.condition.label
        for i, s in enumerate(segments):
            if s.window_len != window or s.sample_rate_hz != fs or s.condition.label != cond_label:
                raise ValueError(f"segment {i} differs in window, sample rate or condition from segment 0")
    else:
        window, fs, cond_label = 0, 1.0, ""
    label_bytes = cond_label.encode("utf-8")
    with open(path, "wb") as fh:
        fh.write(_HEADER.pack(MAGIC, FORMAT_VERSION, window, fs, len(label_bytes)))
        fh.write(label_bytes)
        for s in segments:
            fh.write(struct.pack("<B", int(s.label)))
            fh.write(s.channels().astype("<f4").tobytes())


def read_segments(path, condition: OperatingCondition | None = None) -> list[SignalSegment]:
    """Read a segment file.

    The operating condition is rebuilt from its stored label unless
    ``condition`` is given explicitly.
    """
    with open(path, "rb") as fh:
        data = fh.read()
    if len(data) < _HEADER.size:
        raise SegmentParseError("file shorter than header")
    magic, version, window, fs, label_len = _HEADER.unpack_from(data, 0)
    if magic != MAGIC:
        raise SegmentParseError(f"bad magic {magic!r}")
    if version != FORMAT_VERSION:
        raise SegmentParseError(f"unsupported format version {version}")
    pos = _HEADER.size
    if len(data) < pos + label_len:
        raise SegmentParseError("truncated condition label")
    try:
        cond_label = data[pos : pos + label_len].decode("utf-8")
    except UnicodeDecodeError as exc:
        raise SegmentParseError(f"condition label is not UTF-8: {exc}") from None
    pos += label_len
    if condition is None:
        if pos == len(data):
            return []
        try:
            condition = parse_condition_label(cond_label)
        except InvalidInputError as exc:
            raise SegmentParseError(f"{exc}; pass condition= explicitly") from None
    if not fs > 0:
        raise SegmentParseError(f"invalid sample rate {fs}")
    rec_size = 1 + 3 * 4 * window
    out = []
    index = 0
    while pos < len(data):
        if window == 0:
            raise SegmentParseError("records present but window length is 0", index)
        if pos + rec_size > len(data):
            raise SegmentParseError(f"truncated: {len(data) - pos} of {rec_size} bytes present", index)
        code = data[pos]
        if code > 2:
            raise SegmentParseError(f"unknown class code {code}", index)
        arr = np.frombuffer(data, dtype="<f4", count=3 * window, offset=pos + 1).reshape(3, window)
        arr = arr.astype(np.float32)
        out.append(SignalSegment(arr[0], arr[1], arr[2], Label(code), condition, fs))
        pos += rec_size
        index += 1
    return out


def read_csv_channels(path) -> np.ndarray:
    """Read a per-sample CSV with columns ``vib, ia, ib`` into a (3, length) array."""
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"vib", "ia", "ib"} - set(reader.fieldnames or ())
        if missing:
            raise SegmentParseError(f"CSV missing columns {sorted(missing)}")
        rows = []
        for i, row in enumerate(reader):
            try:
                rows.append((float(row["vib"]), float(row["ia"]), float(row["ib"])))
            except (TypeError, ValueError):
                raise SegmentParseError(f"non-numeric value in row {row}", i) from None
    return np.asarray(rows, dtype=np.float64).T.reshape(3, -1)


def annotated_labels(segments) -> np.ndarray:
    """Labels an annotator would assign from the current signature alone.

    Healthy segments tagged with a mimicked fault sideband get that fault
    label; every other segment keeps its true label.
    """
    return np.asarray([int(s.tags.get("mimic", s.label)) for s in segments], dtype=np.int64)


def stack_segments(segments):
    """Return (X, y): X is (N, 3, L) float32 and y the int64 class codes."""
    if not segments:
        raise InvalidInputError("no segments")
    X = np.stack([s.channels() for s in segments])
    y = np.asarray([int(s.label) for s in segments], dtype=np.int64)
    return X, y
