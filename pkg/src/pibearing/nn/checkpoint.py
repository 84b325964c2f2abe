"""
Checkpoint container: a numpy ``.npz`` archive holding every named tensor,
its Adam moments, and a JSON metadata record with the format version, freeze
flags, optimizer step, architecture hash and caller-supplied extras
(standardization and feature-normalization statistics, loss config).
"""

from __future__ import annotations

import io
import json

import numpy as np

from .params import ParamStore

CHECKPOINT_VERSION = 1


class CheckpointError(ValueError):
    pass


def save_checkpoint(path, store: ParamStore, arch_hash: str, extra: dict | None = None) -> None:
    meta = {
        "version": CHECKPOINT_VERSION,
        "arch_hash": arch_hash,
        "names": list(store.values),
        "trainable": {k: bool(v) for k, v in store.trainable.items()},
        "step": store.step,
        "extra": extra or {},
    }
    arrays = {"__meta__": np.frombuffer(json.dumps(meta, sort_keys=True).encode(), dtype=np.uint8)}
    for i, name in enumerate(store.values):
        arrays[f"p{i}"] = store.values[name]
        arrays[f"m{i}"] = store.m[name]
        arrays[f"v{i}"] = store.v[name]
    buf = io.BytesIO()
    np.savez(buf, **arrays)
    with open(path, "wb") as fh:
        fh.write(buf.getvalue())


def read_checkpoint(path) -> tuple[dict, dict]:
    """Return ``(meta, tensors)`` where tensors maps name -> (value, m, v)."""
    try:
        with np.load(path, allow_pickle=False) as z:
            meta = json.loads(bytes(z["__meta__"]).decode())
            if meta.get("version") != CHECKPOINT_VERSION:
                raise CheckpointError(f"unsupported checkpoint version {meta.get('version')}")
            tensors = {
                name: (z[f"p{i}"].copy(), z[f"m{i}"].copy(), z[f"v{i}"].copy())
                for i, name in enumerate(meta["names"])
            }
    except (OSError, KeyError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}") from exc
    return meta, tensors


def load_into(path, store: ParamStore, arch_hash: str) -> dict:
    """Load tensors, freeze flags and optimizer state into ``store``.

    Rejects a checkpoint written for a different architecture.  Returns the
    ``extra`` metadata.
    """
    meta, tensors = read_checkpoint(path)
    if meta["arch_hash"] != arch_hash:
        raise CheckpointError(
            f"architecture hash mismatch: checkpoint {meta['arch_hash'][:12]}, model {arch_hash[:12]}"
        )
    if set(tensors) != set(store.values):
        raise CheckpointError("checkpoint tensor names do not match the model")
    for name, (value, m, v) in tensors.items():
        store.set_value(name, value)
        store.m[name][...] = m
        store.v[name][...] = v
        store.trainable[name] = bool(meta["trainable"][name])
    store.step = int(meta["step"])
    return meta["extra"]
