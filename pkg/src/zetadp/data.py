"""Complex dataset container, the ZDPC binary format and synthetic
desk-scale task generators.

ZDPC layout (little-endian):

    magic   "ZDPC"           4 bytes
    version u16 = 1
    count   u64              number of examples
    classes u16              class count C (labels live in [0, C))
    rank    u8
    dims    u64 * rank
    labels  u16 * count
    payload count * prod(dims) complex scalars as (re: f64, im: f64) pairs

Round trips are bit-exact: the payload is the raw little-endian memory of a
row-major complex128 array.
"""

from __future__ import annotations

import math
import struct
from dataclasses import dataclass

import numpy as np

from .ctensor import Rng, dft_1d, sample_circular_gaussian
from .errors import DomainError, FormatError

ZDPC_MAGIC = b"ZDPC"
ZDPC_VERSION = 1
MAX_RANK = 32
MAX_ELEMENTS = 1 << 40  # refuse to allocate payloads beyond ~16 TiB


@dataclass(frozen=True)
class ComplexDataset:
    examples: np.ndarray  # [n, *shape] complex128
    labels: np.ndarray    # [n] integer labels in [0, classes)
    classes: int

    def __post_init__(self):
        examples = np.asarray(self.examples, dtype=np.complex128)
        labels = np.asarray(self.labels, dtype=np.int64)
        if examples.shape[0] != labels.shape[0]:
            raise DomainError(
                f"{examples.shape[0]} examples but {labels.shape[0]} labels")
        if self.classes < 2:
            raise DomainError(f"class count must be >= 2, got {self.classes}")
        if labels.size and (labels.min() < 0 or labels.max() >= self.classes):
            raise DomainError("labels out of range")
        object.__setattr__(self, "examples", examples)
        object.__setattr__(self, "labels", labels)

    def __len__(self) -> int:
        return int(self.labels.shape[0])

    @property
    def example_shape(self) -> tuple[int, ...]:
        return tuple(self.examples.shape[1:])


def save_zdpc(path, tensors: np.ndarray, labels, classes: int | None = None):
    """Serialize examples with a common shape plus labels; bit-exact round trip."""
    tensors = np.ascontiguousarray(np.asarray(tensors, dtype=np.complex128))
    labels = np.asarray(labels, dtype=np.int64)
    if tensors.ndim < 2:
        raise DomainError("tensors must be [count, *dims]")
    if tensors.shape[0] != labels.shape[0]:
        raise DomainError("label count does not match example count")
    if classes is None:
        classes = int(labels.max()) + 1 if labels.size else 2
    classes = max(int(classes), 2)
    if classes > 0xFFFF:
        raise DomainError("class count exceeds the u16 field")
    if labels.size and (labels.min() < 0 or labels.max() >= classes):
        raise DomainError("labels out of range for the declared class count")
    count = tensors.shape[0]
    dims = tensors.shape[1:]
    with open(path, "wb") as fh:
        fh.write(ZDPC_MAGIC)
        fh.write(struct.pack("<HQHB", ZDPC_VERSION, count, classes, len(dims)))
        fh.write(struct.pack(f"<{len(dims)}Q", *dims))
        fh.write(labels.astype("<u2").tobytes())
        fh.write(tensors.astype("<c16").tobytes())


def load_zdpc(path) -> ComplexDataset:
    with open(path, "rb") as fh:
        blob = fh.read()
    return parse_zdpc(blob)


def parse_zdpc(blob: bytes) -> ComplexDataset:
    offset = 0

    def take(n: int, what: str) -> bytes:
        nonlocal offset
        if offset + n > len(blob):
            raise FormatError(f"truncated while reading {what}",
                              category="truncated", offset=offset)
        out = blob[offset:offset + n]
        offset += n
        return out

    if len(blob) < 4 or blob[:4] != ZDPC_MAGIC:
        raise FormatError(f"bad magic {blob[:4]!r}", category="bad_magic", offset=0)
    take(4, "magic")
    version, = struct.unpack("<H", take(2, "version"))
    if version != ZDPC_VERSION:
        raise FormatError(f"unsupported version {version}",
                          category="bad_version", offset=4)
    count, = struct.unpack("<Q", take(8, "example count"))
    classes, = struct.unpack("<H", take(2, "class count"))
    if classes < 2:
        raise FormatError(f"class count must be >= 2, got {classes}",
                          category="class_count", offset=offset - 2)
    rank, = struct.unpack("<B", take(1, "rank"))
    if rank == 0 or rank > MAX_RANK:
        raise FormatError(f"rank {rank} outside [1, {MAX_RANK}]",
                          category="size_overflow", offset=offset - 1)
    dims_off = offset
    dims = struct.unpack(f"<{rank}Q", take(8 * rank, "dims"))
    if any(d == 0 for d in dims):
        raise FormatError(f"zero dimension in {dims}",
                          category="size_overflow", offset=dims_off)
    per_example = math.prod(dims)
    if per_example * max(count, 1) > MAX_ELEMENTS:
        raise FormatError(f"declared payload of {per_example * count} scalars",
                          category="size_overflow", offset=dims_off)
    labels_off = offset
    labels = np.frombuffer(take(2 * count, "labels"), dtype="<u2").astype(np.int64)
    if labels.size and labels.max() >= classes:
        raise FormatError(f"label {labels.max()} >= class count {classes}",
                          category="label_range", offset=labels_off)
    payload = take(16 * count * per_example, "payload")
    if offset != len(blob):
        raise FormatError(f"{len(blob) - offset} trailing bytes",
                          category="truncated", offset=offset)
    tensors = np.frombuffer(payload, dtype="<c16").astype(np.complex128)
    tensors = tensors.reshape((count,) + tuple(dims))
    return ComplexDataset(examples=tensors, labels=labels, classes=classes)


def split_per_class(dataset: ComplexDataset, train_per_class: int
                    ) -> tuple[ComplexDataset, ComplexDataset]:
    """Deterministic held-out split taking the first `train_per_class`
    examples of every class for training and the rest for evaluation."""
    train_idx = []
    test_idx = []
    for c in range(dataset.classes):
        members = np.flatnonzero(dataset.labels == c)
        if members.size < train_per_class:
            raise DomainError(
                f"class {c} has {members.size} examples, need > {train_per_class}")
        train_idx.append(members[:train_per_class])
        test_idx.append(members[train_per_class:])
    train_idx = np.concatenate(train_idx)
    test_idx = np.concatenate(test_idx)
    make = lambda idx: ComplexDataset(dataset.examples[idx], dataset.labels[idx],
                                      dataset.classes)
    return make(train_idx), make(test_idx)


# --------------------------------------------------------------------------
# Synthetic task generators
# --------------------------------------------------------------------------

PAIRED_CLASSES = 10


def paired_prototypes(dim: int = 16, amplitude: float = 3.0) -> np.ndarray:
    """Fixed orthogonal real prototype vectors, one per digit class."""
    if dim < PAIRED_CLASSES:
        raise DomainError(f"need dim >= {PAIRED_CLASSES}, got {dim}")
    protos = np.zeros((PAIRED_CLASSES, dim))
    protos[np.arange(PAIRED_CLASSES), np.arange(PAIRED_CLASSES)] = amplitude
    return protos


def gen_paired_prototypes(n_per_class: int, noise_std: float, rng: Rng,
                          dim: int = 16) -> ComplexDataset:
    """Ten-class task whose real part clusters near prototype P_c and whose
    imaginary part clusters near the complementary prototype P_(9-c); the
    label is c. Mirrors pairing each class with its digit complement."""
    if noise_std < 0:
        raise DomainError("noise_std must be >= 0")
    protos = paired_prototypes(dim)
    examples = []
    labels = []
    noise = rng.normal(2 * dim * n_per_class * PAIRED_CLASSES).reshape(
        PAIRED_CLASSES, n_per_class, 2, dim) * noise_std
    for c in range(PAIRED_CLASSES):
        re = protos[c][None, :] + noise[c, :, 0, :]
        im = protos[PAIRED_CLASSES - 1 - c][None, :] + noise[c, :, 1, :]
        examples.append(re + 1j * im)
        labels.extend([c] * n_per_class)
    return ComplexDataset(np.concatenate(examples, axis=0),
                          np.asarray(labels), PAIRED_CLASSES)


def gen_complex_blobs(n_per_class: int, classes: int, dim: int,
                      separation: float, rng: Rng) -> ComplexDataset:
    """Class means drawn on a complex sphere of radius `separation`; samples
    are mean + circular unit noise (total variance 1 per coordinate)."""
    if separation < 0:
        raise DomainError("separation must be >= 0")
    if classes < 2 or dim < 1 or n_per_class < 1:
        raise DomainError("need classes >= 2, dim >= 1, n_per_class >= 1")
    examples = []
    labels = []
    for c in range(classes):
        direction = np.asarray(sample_circular_gaussian((dim,), 1.0, rng))
        norm = np.linalg.norm(direction)
        mean = separation * direction / norm if norm > 0 else direction * 0
        noise = np.asarray(sample_circular_gaussian((n_per_class, dim), 1.0, rng))
        examples.append(mean[None, :] + noise)
        labels.extend([c] * n_per_class)
    return ComplexDataset(np.concatenate(examples, axis=0),
                          np.asarray(labels), classes)


FOURIER_BASE_FREQS = (2, 5)
FOURIER_NOISE_BAND = 0.35  # high-frequency noise starts at this fraction of N


def gen_fourier_signals(n_per_class: int, length: int, keep: int, rng: Rng,
                        noise_amplitude: float = 1.0) -> ComplexDataset:
    """Binary task over truncated DFT features of 1-D signals.

    Class k mixes a low-frequency base tone (2 or 5 cycles) with a weak
    harmonic; broadband high-frequency noise sits above FOURIER_NOISE_BAND * N
    and therefore outside any kept band with keep <= N/4.
    """
    if keep > length:
        raise DomainError(f"keep {keep} exceeds signal length {length}")
    if n_per_class < 1:
        raise DomainError("n_per_class must be >= 1")
    t = np.arange(length)
    examples = []
    labels = []
    hf_lo = int(FOURIER_NOISE_BAND * length)
    for c, base in enumerate(FOURIER_BASE_FREQS):
        for _ in range(n_per_class):
            u = rng.uniform(4)
            phase = 2 * np.pi * u[0]
            amp = 1.0 + 0.25 * u[1]
            signal = amp * np.sin(2 * np.pi * base * t / length + phase)
            signal += 0.3 * np.sin(2 * np.pi * (base + 1) * t / length + 2 * np.pi * u[2])
            if noise_amplitude > 0:
                hf_freq = hf_lo + int(u[3] * (length // 2 - hf_lo))
                hf = rng.normal(length) * 0.15 + np.sin(
                    2 * np.pi * hf_freq * t / length) * 0.5
                signal = signal + noise_amplitude * hf
            feats = dft_1d(signal.astype(np.complex128), keep)
            examples.append(np.asarray(feats))
            labels.append(c)
    return ComplexDataset(np.stack(examples), np.asarray(labels), 2)
