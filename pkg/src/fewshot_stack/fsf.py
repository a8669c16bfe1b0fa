"""FSF feature files: one frozen backbone's pooled embeddings per file.

Binary layout (all integers little-endian):

    bytes 0-3   magic ``FSF1`` (ASCII)
    u32         version (currently 1)
    u16         backbone name length, then UTF-8 bytes
    u32         number of classes; per class: u16 name length + UTF-8 bytes
    u32         feature dimension D
    u32         number of records; per record:
                    u32 class_index, u32 image_id, D x f32 (IEEE-754 LE)

Stores are immutable once loaded and are matched across backbones by the
key ``(class_index, image_id)``; :func:`join` concatenates the per-backbone
vectors of every key present in all stores.
"""

from __future__ import annotations

import struct
import warnings
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BadMagicError,
    FsfError,
    JoinError,
    NonFiniteValueError,
    TruncatedFileError,
    UnsupportedVersionError,
    ValidationError,
)

MAGIC = b"FSF1"
VERSION = 1


@dataclass(frozen=True)
class FeatureRecord:
    """One backbone's embedding of one image."""

    class_index: int
    image_id: int
    features: np.ndarray  # (D,) float32

    @property
    def key(self) -> tuple[int, int]:
        return (self.class_index, self.image_id)


@dataclass(frozen=True)
class FeatureStore:
    """All embeddings one backbone produced for one labelled image set."""

    backbone_name: str
    dim: int
    class_names: tuple[str, ...]
    records: tuple[FeatureRecord, ...]

    def validate(self) -> None:
        if self.dim <= 0:
            raise ValidationError(f"feature dim must be positive, got {self.dim}")
        if not self.class_names:
            raise ValidationError("store has no classes")
        seen: set[tuple[int, int]] = set()
        for rec in self.records:
            if rec.class_index < 0 or rec.class_index >= len(self.class_names):
                raise ValidationError(
                    f"class_index {rec.class_index} out of range "
                    f"(store has {len(self.class_names)} classes)"
                )
            if rec.image_id < 0:
                raise ValidationError(f"negative image_id {rec.image_id}")
            if rec.key in seen:
                raise ValidationError(f"duplicate record key {rec.key}")
            seen.add(rec.key)
            if rec.features.ndim != 1 or rec.features.shape[0] != self.dim:
                raise ValidationError(
                    f"record {rec.key}: feature length {rec.features.shape} "
                    f"!= declared dim {self.dim}"
                )
            if not np.all(np.isfinite(rec.features)):
                raise ValidationError(f"record {rec.key}: non-finite feature value")

    def by_key(self) -> dict[tuple[int, int], np.ndarray]:
        return {rec.key: rec.features for rec in self.records}


@dataclass(frozen=True)
class JoinedDataset:
    """Key-aligned concatenation of several stores, sorted by key."""

    backbone_names: tuple[str, ...]
    dims: tuple[int, ...]
    class_names: tuple[str, ...]
    class_index: np.ndarray  # (M,) int64
    image_id: np.ndarray  # (M,) int64
    features: np.ndarray  # (M, sum(dims)) float32
    _class_rows: dict[int, np.ndarray] = field(default_factory=dict, repr=False)

    @property
    def dim(self) -> int:
        return int(self.features.shape[1])

    def __len__(self) -> int:
        return int(self.features.shape[0])

    def items(self):
        for i in range(len(self)):
            yield (int(self.class_index[i]), int(self.image_id[i]), self.features[i])

    def rows_of_class(self, class_idx: int) -> np.ndarray:
        """Row indices of one class (cached; rows are key-sorted)."""
        if class_idx not in self._class_rows:
            self._class_rows[class_idx] = np.flatnonzero(self.class_index == class_idx)
        return self._class_rows[class_idx]


def _pack_str(text: str) -> bytes:
    raw = text.encode("utf-8")
    if len(raw) > 0xFFFF:
        raise ValidationError(f"name too long to encode: {text[:32]!r}...")
    return struct.pack("<H", len(raw)) + raw


def write_fsf(store: FeatureStore, path) -> None:
    """Serialize a validated store; refuses to write an invalid one."""
    store.validate()
    out = bytearray()
    out += MAGIC
    out += struct.pack("<I", VERSION)
    out += _pack_str(store.backbone_name)
    out += struct.pack("<I", len(store.class_names))
    for name in store.class_names:
        out += _pack_str(name)
    out += struct.pack("<I", store.dim)
    out += struct.pack("<I", len(store.records))
    for rec in store.records:
        out += struct.pack("<II", rec.class_index, rec.image_id)
        out += np.ascontiguousarray(rec.features, dtype="<f4").tobytes()
    with open(path, "wb") as fh:
        fh.write(out)


class _Reader:
    def __init__(self, buf: bytes):
        self.buf = buf
        self.pos = 0

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.buf):
            raise TruncatedFileError(
                f"need {n} bytes at offset {self.pos}, file has {len(self.buf)}"
            )
        chunk = self.buf[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u16(self) -> int:
        return struct.unpack("<H", self.take(2))[0]

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        n = self.u16()
        try:
            return self.take(n).decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FsfError(f"invalid UTF-8 in name field: {exc}") from exc


def read_fsf(path) -> FeatureStore:
    """Parse and validate an FSF file, raising a distinct error per defect."""
    with open(path, "rb") as fh:
        buf = fh.read()
    r = _Reader(buf)
    magic = r.take(4)
    if magic != MAGIC:
        raise BadMagicError(f"bad magic {magic!r}, expected {MAGIC!r}")
    version = r.u32()
    if version != VERSION:
        raise UnsupportedVersionError(f"unsupported FSF version {version}")
    backbone_name = r.string()
    n_classes = r.u32()
    class_names = tuple(r.string() for _ in range(n_classes))
    dim = r.u32()
    n_records = r.u32()
    records = []
    for _ in range(n_records):
        class_index = r.u32()
        image_id = r.u32()
        feat = np.frombuffer(r.take(4 * dim), dtype="<f4").copy()
        if not np.all(np.isfinite(feat)):
            raise NonFiniteValueError(
                f"record ({class_index}, {image_id}) holds NaN/Inf"
            )
        records.append(FeatureRecord(class_index, image_id, feat))
    if r.pos != len(buf):
        raise FsfError(f"{len(buf) - r.pos} trailing bytes after last record")
    store = FeatureStore(backbone_name, dim, class_names, tuple(records))
    try:
        store.validate()
    except ValidationError as exc:
        raise FsfError(f"file violates store invariants: {exc}") from exc
    return store


def join(stores, mode: str = "strict") -> JoinedDataset:
    """Concatenate stores over the keys shared by all of them.

    Vectors are concatenated in store order, so the joined dimension is the
    sum of the per-store dims. ``mode="strict"`` raises if any store holds a
    key the others lack; ``mode="lenient"`` drops such keys with a warning.
    """
    stores = list(stores)
    if not stores:
        raise JoinError("need at least one store to join")
    if mode not in ("strict", "lenient"):
        raise ValueError(f"unknown join mode {mode!r}")
    first = stores[0]
    for st in stores[1:]:
        if st.class_names != first.class_names:
            raise JoinError(
                f"class names differ: {st.backbone_name!r} has {list(st.class_names)}, "
                f"{first.backbone_name!r} has {list(first.class_names)}"
            )
    maps = [st.by_key() for st in stores]
    shared = set(maps[0])
    for m in maps[1:]:
        shared &= set(m)
    if not shared:
        raise JoinError("stores share no (class_index, image_id) keys")
    dropped = set().union(*maps) - shared
    if dropped:
        if mode == "strict":
            example = sorted(dropped)[0]
            raise JoinError(
                f"{len(dropped)} keys are not present in every store "
                f"(e.g. {example}); use lenient mode to drop them"
            )
        warnings.warn(f"join dropped {len(dropped)} keys not present in every store")
    keys = sorted(shared)
    features = np.empty((len(keys), sum(st.dim for st in stores)), dtype=np.float32)
    for row, key in enumerate(keys):
        features[row] = np.concatenate([m[key] for m in maps])
    return JoinedDataset(
        backbone_names=tuple(st.backbone_name for st in stores),
        dims=tuple(st.dim for st in stores),
        class_names=first.class_names,
        class_index=np.array([k[0] for k in keys], dtype=np.int64),
        image_id=np.array([k[1] for k in keys], dtype=np.int64),
        features=features,
    )
