"""Embedding dataset container: on-disk format, grouped splits, balancing.

On disk a dataset is a JSON manifest plus one binary blob of little-endian
IEEE-754 float32 values. Each record's token matrices are stored contiguously
row-major, image tokens and text tokens as separate segments addressed by
float-element offsets. The manifest records a sha256 checksum of the blob;
loads verify it. In memory all tokens are widened to float64.

Splits are grouped by ``group_id`` so no subject leaks across the
train/validation boundary, and fractional training subsets are nested
prefixes of a per-seed shuffle.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import ConfigError, DataError, LoadError
from .rng import fisher_yates, stream

FORMAT_VERSION = 1
CHECKSUM_ALGORITHM = "sha256"


@dataclass
class Record:
    """One sample: image tokens, optional text tokens, label, subject id."""

    image: np.ndarray
    text: np.ndarray | None
    label: int
    group_id: str


class EmbeddingDataset:
    """Immutable in-memory dataset of per-sample token embeddings."""

    def __init__(self, records: list[Record], n_classes: int,
                 has_cls: dict[str, bool] | None = None,
                 provenance: dict[str, str] | None = None):
        if not records:
            raise DataError("empty dataset")
        if n_classes < 2:
            raise DataError(f"need >= 2 classes, got {n_classes}")
        self.records = list(records)
        self.n_classes = int(n_classes)
        self.has_cls = dict(has_cls or {"image": False, "text": False})
        self.provenance = dict(provenance or {})
        self._validate()

    def _validate(self):
        first = self.records[0]
        self.d_image = int(first.image.shape[1])
        self.d_text = 0 if first.text is None else int(first.text.shape[1])
        for i, rec in enumerate(self.records):
            img = np.asarray(rec.image, dtype=np.float64)
            if img.ndim != 2 or img.shape[0] < 1 or img.shape[1] != self.d_image:
                raise DataError(
                    f"sample {i}: image tokens must be n x {self.d_image}, "
                    f"got {img.shape}")
            if not np.isfinite(img).all():
                raise DataError(f"sample {i}: non-finite image token values")
            rec.image = np.ascontiguousarray(img)
            if (rec.text is None) != (self.d_text == 0):
                raise DataError(
                    f"sample {i}: text presence differs from sample 0")
            if rec.text is not None:
                txt = np.asarray(rec.text, dtype=np.float64)
                if txt.ndim != 2 or txt.shape[0] < 1 or txt.shape[1] != self.d_text:
                    raise DataError(
                        f"sample {i}: text tokens must be n x {self.d_text}, "
                        f"got {txt.shape}")
                if not np.isfinite(txt).all():
                    raise DataError(f"sample {i}: non-finite text token values")
                rec.text = np.ascontiguousarray(txt)
            if not 0 <= rec.label < self.n_classes:
                raise DataError(
                    f"sample {i}: label {rec.label} outside [0, {self.n_classes})")
            if not isinstance(rec.group_id, str) or not rec.group_id:
                raise DataError(f"sample {i}: group_id must be a non-empty string")

    def __len__(self) -> int:
        return len(self.records)

    @property
    def n_samples(self) -> int:
        return len(self.records)

    @property
    def labels(self) -> np.ndarray:
        return np.array([r.label for r in self.records], dtype=np.int64)

    @property
    def group_ids(self) -> list[str]:
        return [r.group_id for r in self.records]

    @property
    def has_text(self) -> bool:
        return self.d_text > 0


# ---------------------------------------------------------------------------
# on-disk format


def _blob_checksum(blob: bytes) -> str:
    return hashlib.sha256(blob).hexdigest()


def write_dataset(dataset: EmbeddingDataset, manifest_path, blob_path) -> None:
    """Serialize to canonical manifest JSON + float32 little-endian blob."""
    chunks: list[bytes] = []
    records_meta = []
    offset = 0  # in float32 elements
    for i, rec in enumerate(dataset.records):
        if not np.isfinite(rec.image).all():
            raise DataError(f"sample {i}: refusing to write non-finite tokens")
        image32 = rec.image.astype("<f4")
        if not np.isfinite(image32).all():
            raise DataError(f"sample {i}: image tokens overflow float32")
        meta = {
            "image_offset": offset,
            "image_n_tokens": int(rec.image.shape[0]),
            "label": int(rec.label),
            "group_id": rec.group_id,
        }
        chunks.append(image32.tobytes(order="C"))
        offset += image32.size
        if rec.text is not None:
            if not np.isfinite(rec.text).all():
                raise DataError(f"sample {i}: refusing to write non-finite tokens")
            text32 = rec.text.astype("<f4")
            if not np.isfinite(text32).all():
                raise DataError(f"sample {i}: text tokens overflow float32")
            meta["text_offset"] = offset
            meta["text_n_tokens"] = int(rec.text.shape[0])
            chunks.append(text32.tobytes(order="C"))
            offset += text32.size
        else:
            meta["text_offset"] = 0
            meta["text_n_tokens"] = 0
        records_meta.append(meta)
    blob = b"".join(chunks)
    manifest = {
        "format_version": FORMAT_VERSION,
        "n_samples": dataset.n_samples,
        "n_classes": dataset.n_classes,
        "d_image": dataset.d_image,
        "d_text": dataset.d_text,
        "has_cls": {"image": bool(dataset.has_cls.get("image", False)),
                    "text": bool(dataset.has_cls.get("text", False))},
        "records": records_meta,
        "provenance": dict(dataset.provenance),
        "checksum": {"algorithm": CHECKSUM_ALGORITHM,
                     "value": _blob_checksum(blob)},
    }
    Path(blob_path).write_bytes(blob)
    # canonical serialization so round-trips are byte-identical
    Path(manifest_path).write_text(
        json.dumps(manifest, sort_keys=True, indent=2) + "\n", encoding="utf-8")


def _require(condition: bool, message: str) -> None:
    if not condition:
        raise LoadError(message)


def load_dataset(manifest_path, blob_path) -> EmbeddingDataset:
    """Parse, checksum, bounds-check, and widen a stored dataset."""
    try:
        manifest = json.loads(Path(manifest_path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise LoadError(f"cannot parse manifest: {exc}") from exc
    _require(isinstance(manifest, dict), "manifest must be a JSON object")
    version = manifest.get("format_version")
    _require(version == FORMAT_VERSION,
             f"unsupported format_version {version!r} (expected {FORMAT_VERSION})")
    for key in ("n_samples", "n_classes", "d_image", "d_text", "records",
                "checksum"):
        _require(key in manifest, f"manifest missing field {key!r}")
    n_samples = manifest["n_samples"]
    n_classes = manifest["n_classes"]
    d_image = manifest["d_image"]
    d_text = manifest["d_text"]
    records_meta = manifest["records"]
    _require(isinstance(records_meta, list), "records must be a list")
    _require(n_samples == len(records_meta),
             f"n_samples {n_samples} != record count {len(records_meta)}")
    _require(n_samples >= 1, "empty dataset")
    _require(isinstance(d_image, int) and d_image >= 1,
             f"d_image must be a positive integer, got {d_image!r}")
    _require(isinstance(d_text, int) and d_text >= 0,
             f"d_text must be a non-negative integer, got {d_text!r}")

    try:
        blob = Path(blob_path).read_bytes()
    except OSError as exc:
        raise LoadError(f"cannot read blob: {exc}") from exc
    _require(len(blob) % 4 == 0,
             f"blob length {len(blob)} is not a multiple of 4 bytes")
    checksum = manifest["checksum"]
    _require(isinstance(checksum, dict) and "algorithm" in checksum
             and "value" in checksum, "manifest checksum block malformed")
    _require(checksum["algorithm"] == CHECKSUM_ALGORITHM,
             f"unsupported checksum algorithm {checksum['algorithm']!r}")
    actual = _blob_checksum(blob)
    _require(actual == checksum["value"],
             f"blob checksum mismatch: manifest {checksum['value'][:12]}..., "
             f"blob {actual[:12]}...")
    flat = np.frombuffer(blob, dtype="<f4")
    n_floats = flat.shape[0]

    segments: list[tuple[int, int, int]] = []  # (start, end, sample index)
    records: list[Record] = []
    for i, meta in enumerate(records_meta):
        _require(isinstance(meta, dict), f"sample {i}: record must be an object")
        for key in ("image_offset", "image_n_tokens", "text_offset",
                    "text_n_tokens", "label", "group_id"):
            _require(key in meta, f"sample {i}: record missing {key!r}")
        img_off, img_tok = meta["image_offset"], meta["image_n_tokens"]
        txt_off, txt_tok = meta["text_offset"], meta["text_n_tokens"]
        _require(isinstance(img_tok, int) and img_tok >= 1,
                 f"sample {i}: image_n_tokens must be >= 1")
        img_len = img_tok * d_image
        _require(isinstance(img_off, int) and 0 <= img_off
                 and img_off + img_len <= n_floats,
                 f"sample {i}: image segment [{img_off}, {img_off}+{img_len}) "
                 f"outside blob of {n_floats} floats")
        segments.append((img_off, img_off + img_len, i))
        image = flat[img_off: img_off + img_len].astype(
            np.float64).reshape(img_tok, d_image)
        if d_text == 0:
            _require(txt_tok == 0 and txt_off == 0,
                     f"sample {i}: text segment present but d_text=0")
            text = None
        else:
            _require(isinstance(txt_tok, int) and txt_tok >= 1,
                     f"sample {i}: text_n_tokens must be >= 1 when d_text > 0")
            txt_len = txt_tok * d_text
            _require(isinstance(txt_off, int) and 0 <= txt_off
                     and txt_off + txt_len <= n_floats,
                     f"sample {i}: text segment [{txt_off}, {txt_off}+{txt_len}) "
                     f"outside blob of {n_floats} floats")
            segments.append((txt_off, txt_off + txt_len, i))
            text = flat[txt_off: txt_off + txt_len].astype(
                np.float64).reshape(txt_tok, d_text)
        if not np.isfinite(image).all():
            raise LoadError(f"sample {i}: non-finite image token values")
        if text is not None and not np.isfinite(text).all():
            raise LoadError(f"sample {i}: non-finite text token values")
        records.append(Record(image=image, text=text, label=meta["label"],
                              group_id=meta["group_id"]))

    segments.sort()
    for (s0, e0, i0), (s1, _e1, i1) in zip(segments, segments[1:]):
        _require(s1 >= e0,
                 f"overlapping blob segments for samples {i0} and {i1}")

    try:
        dataset = EmbeddingDataset(
            records, n_classes=n_classes,
            has_cls=manifest.get("has_cls"),
            provenance=manifest.get("provenance"))
    except DataError as exc:
        raise LoadError(str(exc)) from exc
    _require(dataset.d_image == d_image,
             f"manifest d_image {d_image} != data {dataset.d_image}")
    _require(dataset.d_text == d_text,
             f"manifest d_text {d_text} != data {dataset.d_text}")
    return dataset


# ---------------------------------------------------------------------------
# splits


@dataclass(frozen=True)
class SplitPlan:
    """Train/validation index sets for one (seed, fraction) cell."""

    seed: int
    fraction: float
    validation_share: float
    train: tuple[int, ...]
    validation: tuple[int, ...]
    grouped: bool = True
    pool_size: int = 0

    def __post_init__(self):
        if set(self.train) & set(self.validation):
            raise DataError("split has overlapping train/validation indices")


def split_hash(plan: SplitPlan) -> str:
    """Short stable fingerprint of the exact index sets."""
    text = f"train:{','.join(map(str, plan.train))}" \
           f"|val:{','.join(map(str, plan.validation))}"
    return hashlib.sha256(text.encode()).hexdigest()[:12]


def make_split(dataset: EmbeddingDataset, seed: int, fraction: float,
               validation_share: float = 0.1,
               per_image: bool = False) -> SplitPlan:
    """Grouped split: shuffle group ids by seed, carve validation, prefix-cut.

    The shuffled group order depends only on (dataset, seed), the validation
    block only additionally on validation_share, so validation indices are
    identical across fractions and smaller fractions are strict prefixes
    (nested subsets) of larger ones. ``per_image=True`` treats every sample
    as its own group.
    """
    if not 0.0 < fraction <= 1.0:
        raise ConfigError(f"fraction must be in (0, 1], got {fraction}")
    if not 0.0 < validation_share < 1.0:
        raise ConfigError(
            f"validation_share must be in (0, 1), got {validation_share}")
    if per_image:
        members: dict[str, list[int]] = {
            f"sample:{i:09d}": [i] for i in range(len(dataset))}
    else:
        members = {}
        for i, gid in enumerate(dataset.group_ids):
            members.setdefault(gid, []).append(i)
    group_order = fisher_yates(sorted(members), stream(seed, "split"))
    n_groups = len(group_order)
    if n_groups < 2:
        raise DataError("need at least 2 groups to split")
    n_val_groups = int(np.floor(validation_share * n_groups + 0.5))
    n_val_groups = min(max(n_val_groups, 1), n_groups - 1)
    val_groups = group_order[:n_val_groups]
    validation = tuple(sorted(i for g in val_groups for i in members[g]))
    pool = [i for g in group_order[n_val_groups:] for i in sorted(members[g])]
    n_train = int(np.floor(fraction * len(pool)))
    if n_train < 1:
        raise ConfigError(
            f"fraction {fraction} of a {len(pool)}-sample pool yields 0 samples")
    return SplitPlan(seed=seed, fraction=fraction,
                     validation_share=validation_share,
                     train=tuple(pool[:n_train]), validation=validation,
                     grouped=not per_image, pool_size=len(pool))


def balance_by_label(dataset: EmbeddingDataset, indices, seed: int
                     ) -> tuple[int, ...]:
    """Subsample the majority class to the minority count, then reshuffle."""
    if dataset.n_classes != 2:
        raise ConfigError(
            f"balancing is defined for binary tasks, got {dataset.n_classes} classes")
    idx = list(indices)
    labels = dataset.labels
    pos = [i for i in idx if labels[i] == 1]
    neg = [i for i in idx if labels[i] == 0]
    if not pos or not neg:
        raise DataError(
            f"cannot balance: {len(pos)} positives, {len(neg)} negatives")
    rng = stream(seed, "balance")
    minority, majority = (pos, neg) if len(pos) <= len(neg) else (neg, pos)
    kept = fisher_yates(majority, rng)[: len(minority)]
    return tuple(fisher_yates(sorted(kept + minority), rng))
