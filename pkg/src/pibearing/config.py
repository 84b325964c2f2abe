"""
Experiment configuration: a YAML tree with ``data``, ``model``, ``train``,
``tl``, ``eval`` and ``grid`` sections, merged over defaults and validated
into typed objects.  Validation errors name the offending field path, e.g.
``model.geometry.pitch_diameter_mm``.
"""

from __future__ import annotations

import copy
import hashlib
import json
from dataclasses import asdict, dataclass, fields
from pathlib import Path

import yaml

from . import dsp
from .dataio import Label, SynthesisSpec
from .geometry import BearingGeometry, InvalidGeometryError, InvalidInputError, parse_condition_label
from .model import HARD, SOFT, ArchConfig, ConvBlock
from .pipeline import TrainConfig

_GEOMETRY_FIELDS = ("rolling_element_count", "element_diameter_mm", "pitch_diameter_mm", "contact_angle_rad")

DEFAULTS = {
    "seed": 0,
    "data": {
        "path": None,  # BSEG segment file; synthetic corpus when unset
        "csv": [],  # raw streams: [{path, label, condition}]
        "window": 10000,
        "stride": 5000,
        "sample_rate_hz": 64000.0,
        "ratios": [0.6, 0.2, 0.2],
        "synthesis": {
            "n_per_class": 300,
            "classes": ["healthy", "inner", "outer"],
            "carrier_hz": 3000.0,
            "snr_db": 10.0,
            "jitter_pct": 1.0,
            "impact_decay_s": 0.0015,
            "mains_hz": 50.0,
            "sideband_amp": 0.2,
            "current_noise": 0.05,
            "inner_am_depth": 0.5,
            "weak_fraction": 0.0,
            "weak_gain": 0.1,
            "current_mimic_fraction": 0.0,
        },
    },
    "model": {
        "geometry": {
            "rolling_element_count": 8,
            "element_diameter_mm": 6.75,
            "pitch_diameter_mm": 28.55,
            "contact_angle_rad": 0.0,
        },
        "condition": "N15_M07_F10",
        "gating": SOFT,
        "lam": 1.0,
        "percentile": 10.0,
        "band": {"low_cut_hz": 1000.0, "high_cut_hz": 10000.0, "order": 4},
        "arch": {
            "conv_blocks": [[4, 16, 16, 4], [8, 4, 1, 4]],
            "physics_units": 8,
            "head_units": [64],
        },
    },
    "train": {"lr": 1e-4, "batch_size": 32, "patience": 10, "max_epochs": 100},
    "tl": {"strategy": "las", "source_checkpoint": None},
    "eval": {"alpha": 0.05, "n_runs": 10, "ttest_alpha": 0.01},
    "grid": {
        "lambdas": [0.05, 0.20, 1.00],
        "percentiles": [5, 10, 15],
        "splits": [[0.8, 0.2], [0.7, 0.3], [0.6, 0.4]],
        "k": 5,
    },
}


class ConfigError(ValueError):
    """Invalid configuration; ``path`` is the dotted field name."""

    def __init__(self, path: str, message: str):
        super().__init__(f"{path}: {message}")
        self.path = path


def _merge(base, override, path=""):
    if not isinstance(override, dict):
        raise ConfigError(path or "<root>", f"expected a mapping, got {type(override).__name__}")
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else str(key)
        if key not in base:
            raise ConfigError(where, "unknown field")
        if key == "geometry":
            # a geometry is a physical object: it must be given in full
            if not isinstance(value, dict):
                raise ConfigError(where, "expected a mapping of bearing dimensions")
            missing = [f for f in _GEOMETRY_FIELDS[:3] if f not in value]
            if missing:
                raise ConfigError(where, f"missing field(s) {', '.join(missing)}")
            out[key] = _merge(base[key], value, where)
        elif isinstance(base[key], dict):
            out[key] = _merge(base[key], value if value is not None else {}, where)
        else:
            out[key] = value
    return out


def _num(tree, path, kind=float, positive=False, lo=None, hi=None):
    node = tree
    for part in path.split("."):
        node = node[part]
    if isinstance(node, bool) or not isinstance(node, (int, float)):
        raise ConfigError(path, f"expected a number, got {node!r}")
    if kind is int and int(node) != node:
        raise ConfigError(path, f"expected an integer, got {node!r}")
    value = kind(node)
    if positive and value <= 0:
        raise ConfigError(path, f"must be positive, got {value}")
    if lo is not None and value < lo or hi is not None and value > hi:
        raise ConfigError(path, f"must lie in [{lo}, {hi}], got {value}")
    return value


@dataclass
class ExperimentConfig:
    """Resolved configuration tree plus typed views of its sections."""

    tree: dict

    @classmethod
    def from_dict(cls, user: dict | None = None) -> "ExperimentConfig":
        cfg = cls(_merge(DEFAULTS, user or {}))
        cfg.validate()
        return cfg

    @classmethod
    def load(cls, path) -> "ExperimentConfig":
        try:
            text = Path(path).read_text()
        except OSError as exc:
            raise ConfigError("<file>", f"cannot read {path}: {exc.strerror}") from None
        try:
            user = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError("<file>", f"invalid YAML: {exc}") from None
        return cls.from_dict(user or {})

    def override(self, dotted: str, value) -> None:
        """Set ``a.b.c`` to ``value`` (command-line flags win over the file)."""
        node = self.tree
        parts = dotted.split(".")
        for part in parts[:-1]:
            node = node[part]
        if parts[-1] not in node:
            raise ConfigError(dotted, "unknown field")
        node[parts[-1]] = value
        self.validate()

    # -- validation --------------------------------------------------------
    def validate(self) -> None:
        t = self.tree
        _num(t, "seed", int, lo=0)
        _num(t, "data.window", int, positive=True)
        _num(t, "data.stride", int, positive=True)
        _num(t, "data.sample_rate_hz", positive=True)
        ratios = t["data"]["ratios"]
        if not isinstance(ratios, list) or len(ratios) != 3 or abs(sum(ratios) - 1.0) > 1e-9 or min(ratios) <= 0:
            raise ConfigError("data.ratios", f"expected three positive fractions summing to 1, got {ratios!r}")
        for i, entry in enumerate(t["data"]["csv"] or []):
            for key in ("path", "label"):
                if not isinstance(entry, dict) or key not in entry:
                    raise ConfigError(f"data.csv[{i}].{key}", "missing")
        _num(t, "data.synthesis.n_per_class", int, positive=True)
        for i, c in enumerate(t["data"]["synthesis"]["classes"]):
            try:
                Label.parse(c)
            except ValueError:
                raise ConfigError(f"data.synthesis.classes[{i}]", f"unknown class {c!r}") from None
        self.synthesis_specs()
        self.geometry()
        self.condition()
        self.band()
        self.arch()
        if t["model"]["gating"] not in (HARD, SOFT):
            raise ConfigError("model.gating", f"expected 'hard' or 'soft', got {t['model']['gating']!r}")
        _num(t, "model.lam", lo=0.0)
        _num(t, "model.percentile", lo=0.0, hi=100.0)
        self.train_config()
        strategy = t["tl"]["strategy"]
        if str(strategy).lower() not in ("tsft", "las", "hfr"):
            raise ConfigError("tl.strategy", f"expected tsft, las or hfr, got {strategy!r}")
        _num(t, "eval.alpha", lo=1e-12, hi=0.5)
        _num(t, "eval.ttest_alpha", lo=1e-12, hi=0.5)
        _num(t, "eval.n_runs", int, positive=True)
        g = t["grid"]
        if not g["lambdas"] or not g["percentiles"] or not g["splits"]:
            raise ConfigError("grid", "lambdas, percentiles and splits must be non-empty")
        for i, s in enumerate(g["splits"]):
            if not isinstance(s, list) or len(s) not in (2, 3) or abs(sum(s) - 1) > 1e-9:
                raise ConfigError(f"grid.splits[{i}]", f"expected fractions summing to 1, got {s!r}")
        _num(t, "grid.k", int, lo=2)

    # -- typed views -------------------------------------------------------
    def geometry(self) -> BearingGeometry:
        g = self.tree["model"]["geometry"]
        if not isinstance(g, dict):
            raise ConfigError("model.geometry", "missing")
        try:
            return BearingGeometry(
                int(g["rolling_element_count"]), float(g["element_diameter_mm"]),
                float(g["pitch_diameter_mm"]), float(g.get("contact_angle_rad", 0.0)),
            )
        except (InvalidGeometryError, TypeError, ValueError) as exc:
            raise ConfigError("model.geometry", str(exc)) from None

    def condition(self):
        try:
            return parse_condition_label(self.tree["model"]["condition"])
        except (InvalidInputError, TypeError) as exc:
            raise ConfigError("model.condition", str(exc)) from None

    def band(self) -> dsp.BandpassSpec:
        b = self.tree["model"]["band"]
        spec = dsp.BandpassSpec(float(b["low_cut_hz"]), float(b["high_cut_hz"]), int(b["order"]))
        try:
            spec.validate(float(self.tree["data"]["sample_rate_hz"]))
        except dsp.InvalidSpecError as exc:
            raise ConfigError("model.band", str(exc)) from None
        return spec

    def arch(self) -> ArchConfig:
        a = self.tree["model"]["arch"]
        try:
            blocks = tuple(ConvBlock(*map(int, b)) for b in a["conv_blocks"])
            return ArchConfig(int(self.tree["data"]["window"]), blocks, int(a["physics_units"]),
                              tuple(int(u) for u in a["head_units"]))
        except (TypeError, ValueError) as exc:
            raise ConfigError("model.arch", str(exc)) from None

    def train_config(self, seed: int | None = None) -> TrainConfig:
        t = self.tree
        return TrainConfig(
            lr=_num(t, "train.lr", positive=True),
            batch_size=_num(t, "train.batch_size", int, positive=True),
            patience=_num(t, "train.patience", int, positive=True),
            max_epochs=_num(t, "train.max_epochs", int, lo=0),
            seed=self.tree["seed"] if seed is None else seed,
        )

    def synthesis_specs(self) -> list[SynthesisSpec]:
        s = self.tree["data"]["synthesis"]
        common = {f.name: s[f.name] for f in fields(SynthesisSpec) if f.name in s}
        try:
            cond = parse_condition_label(self.tree["model"]["condition"])
        except (InvalidInputError, TypeError) as exc:
            raise ConfigError("model.condition", str(exc)) from None
        specs = []
        for c in s["classes"]:
            try:
                specs.append(SynthesisSpec(
                    Label.parse(c), geometry=self.geometry(), condition=cond, seed=int(self.tree["seed"]),
                    sample_rate_hz=float(self.tree["data"]["sample_rate_hz"]), **common,
                ))
            except (ValueError, TypeError) as exc:
                if isinstance(exc, ConfigError):
                    raise
                raise ConfigError("data.synthesis", str(exc)) from None
        return specs

    # -- persistence -------------------------------------------------------
    def dump(self) -> str:
        return yaml.safe_dump(self.tree, sort_keys=True)

    def digest(self) -> str:
        return hashlib.sha256(json.dumps(self.tree, sort_keys=True).encode()).hexdigest()


def arch_to_tree(arch: ArchConfig) -> dict:
    return {
        "conv_blocks": [list(asdict(b).values()) for b in arch.conv_blocks],
        "physics_units": arch.physics_units,
        "head_units": list(arch.head_units),
    }
