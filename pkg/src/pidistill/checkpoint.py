"""Parameter checkpoints in the same manifest + float32 blob container
used for datasets, so teachers are reloadable for distillation and runs
can be inspected offline.

Checkpoint arrays round-trip through float32; a stored checkpoint is the
canonical form of a model, and distillation always consumes that rounded
form whether the teacher arrives from memory or from disk.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import LoadError

CHECKPOINT_VERSION = 1


def round_to_storage(arr: np.ndarray) -> np.ndarray:
    """Apply the float32 round-trip a save/load cycle would apply."""
    return arr.astype("<f4").astype(np.float64)


@dataclass
class Checkpoint:
    """Frozen model parameters plus the selection metadata.

    ``val_auc`` is the validation AUC at save time; the training loop
    guarantees it equals the best per-epoch value seen so far.
    Parameters are stored already rounded to float32 resolution.
    """

    params: dict[str, np.ndarray]
    epoch: int
    val_auc: float
    config_fingerprint: str
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        self.params = {name: round_to_storage(np.asarray(a, dtype=np.float64))
                       for name, a in self.params.items()}


def config_fingerprint(config: dict) -> str:
    """Stable short hash of a JSON-serializable config mapping."""
    canonical = json.dumps(config, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode()).hexdigest()[:16]


def save_checkpoint(ckpt: Checkpoint, manifest_path, blob_path) -> None:
    chunks: list[bytes] = []
    tensors = []
    offset = 0
    for name in sorted(ckpt.params):
        arr32 = ckpt.params[name].astype("<f4")
        tensors.append({"name": name, "offset": offset,
                        "rows": int(arr32.shape[0]),
                        "cols": int(arr32.shape[1])})
        chunks.append(arr32.tobytes(order="C"))
        offset += arr32.size
    blob = b"".join(chunks)
    manifest = {
        "format_version": CHECKPOINT_VERSION,
        "kind": "checkpoint",
        "tensors": tensors,
        "epoch": int(ckpt.epoch),
        "val_auc": float(ckpt.val_auc),
        "config_fingerprint": ckpt.config_fingerprint,
        "meta": dict(ckpt.meta),
        "checksum": {"algorithm": "sha256",
                     "value": hashlib.sha256(blob).hexdigest()},
    }
    Path(blob_path).write_bytes(blob)
    Path(manifest_path).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def load_checkpoint(manifest_path, blob_path) -> Checkpoint:
    try:
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"cannot parse checkpoint manifest: {exc}") from exc
    if manifest.get("kind") != "checkpoint":
        raise LoadError(f"not a checkpoint manifest: kind={manifest.get('kind')!r}")
    if manifest.get("format_version") != CHECKPOINT_VERSION:
        raise LoadError(
            f"unsupported checkpoint version {manifest.get('format_version')!r}")
    try:
        blob = Path(blob_path).read_bytes()
    except OSError as exc:
        raise LoadError(f"cannot read checkpoint blob: {exc}") from exc
    checksum = manifest.get("checksum", {})
    actual = hashlib.sha256(blob).hexdigest()
    if checksum.get("algorithm") != "sha256" or checksum.get("value") != actual:
        raise LoadError("checkpoint blob checksum mismatch")
    flat = np.frombuffer(blob, dtype="<f4")
    params: dict[str, np.ndarray] = {}
    for spec in manifest["tensors"]:
        name, off = spec["name"], spec["offset"]
        rows, cols = spec["rows"], spec["cols"]
        end = off + rows * cols
        if not 0 <= off <= end <= flat.shape[0]:
            raise LoadError(f"tensor {name!r} outside checkpoint blob")
        params[name] = flat[off:end].astype(np.float64).reshape(rows, cols)
    if not params:
        raise LoadError("checkpoint holds no tensors")
    return Checkpoint(params=params, epoch=manifest["epoch"],
                      val_auc=manifest["val_auc"],
                      config_fingerprint=manifest["config_fingerprint"],
                      meta=manifest.get("meta", {}))
