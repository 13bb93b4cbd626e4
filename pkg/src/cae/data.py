"""Datasets: IDX/amat/CIFAR loaders, the rect generator and the patch pipeline."""
from __future__ import annotations

import gzip
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .model import sigmoid
from .numerics import make_rng, symmetric_eigh

IDX_IMAGE_MAGIC = 0x00000803
IDX_LABEL_MAGIC = 0x00000801
CIFAR_RECORD = 1 + 3072
GRAY_WEIGHTS = (0.3, 0.59, 0.11)


class DataFormatError(ValueError):
    pass


@dataclass
class Dataset:
    features: np.ndarray
    labels: np.ndarray | None = None
    name: str = "dataset"

    def __post_init__(self):
        self.features = np.array(self.features, dtype=np.float64, ndmin=2)
        if self.labels is not None:
            self.labels = np.asarray(self.labels, dtype=np.int64).ravel()
            if self.labels.shape[0] != self.features.shape[0]:
                raise DataFormatError(
                    f"{self.features.shape[0]} feature rows but {self.labels.shape[0]} labels")

    def __len__(self) -> int:
        return self.features.shape[0]

    @property
    def dim(self) -> int:
        return self.features.shape[1]

    @property
    def num_classes(self) -> int:
        return int(self.labels.max()) + 1 if self.labels is not None and len(self.labels) else 0

    def subset(self, index, name: str | None = None) -> "Dataset":
        labels = None if self.labels is None else self.labels[index]
        return Dataset(self.features[index], labels, name or self.name)

    def split(self, *sizes: int) -> list["Dataset"]:
        """Consecutive, non-overlapping slices of the given sizes."""
        if sum(sizes) > len(self):
            raise ValueError(f"split sizes {sizes} exceed {len(self)} examples")
        out, start = [], 0
        for s in sizes:
            out.append(self.subset(slice(start, start + s), f"{self.name}[{start}:{start + s}]"))
            start += s
        return out


def _validate(ds: Dataset) -> Dataset:
    f = ds.features
    if not np.all(np.isfinite(f)):
        raise DataFormatError("non-finite feature value")
    if f.size and (f.min() < 0.0 or f.max() > 1.0):
        raise DataFormatError("feature values outside [0, 1]")
    if ds.labels is not None and ds.labels.size and ds.labels.min() < 0:
        raise DataFormatError("negative label")
    return ds


def _be32(buf: bytes, offset: int, what: str) -> int:
    if len(buf) < offset + 4:
        raise DataFormatError(f"truncated IDX header: missing {what} at offset {offset}")
    return struct.unpack_from(">I", buf, offset)[0]


def parse_idx_images(buf: bytes) -> np.ndarray:
    """uint8 IDX image file -> (n, rows*cols) float array in [0, 1]."""
    magic = _be32(buf, 0, "magic")
    if magic != IDX_IMAGE_MAGIC:
        raise DataFormatError(f"bad image magic 0x{magic:08x} at offset 0")
    n, rows, cols = (_be32(buf, off, name) for off, name in
                     ((4, "count"), (8, "row count"), (12, "column count")))
    need = 16 + n * rows * cols
    if len(buf) != need:
        kind = "truncated" if len(buf) < need else "trailing bytes in"
        raise DataFormatError(f"{kind} image data: expected {need} bytes, data ends at offset {len(buf)}")
    pixels = np.frombuffer(buf, dtype=np.uint8, offset=16)
    return pixels.reshape(n, rows * cols).astype(np.float64) / 255.0


def parse_idx_labels(buf: bytes) -> np.ndarray:
    magic = _be32(buf, 0, "magic")
    if magic != IDX_LABEL_MAGIC:
        raise DataFormatError(f"bad label magic 0x{magic:08x} at offset 0")
    n = _be32(buf, 4, "count")
    if len(buf) != 8 + n:
        kind = "truncated" if len(buf) < 8 + n else "trailing bytes in"
        raise DataFormatError(f"{kind} label data: expected {8 + n} bytes, data ends at offset {len(buf)}")
    return np.frombuffer(buf, dtype=np.uint8, offset=8).astype(np.int64)


def _read_maybe_gzip(path) -> bytes:
    raw = Path(path).read_bytes()
    if str(path).endswith(".gz"):
        try:
            return gzip.decompress(raw)
        except (OSError, EOFError) as exc:
            raise DataFormatError(f"bad gzip stream: {exc}") from None
    return raw


def load_idx(images_path, labels_path=None, name: str | None = None) -> Dataset:
    images = parse_idx_images(_read_maybe_gzip(images_path))
    labels = None
    if labels_path is not None:
        labels = parse_idx_labels(_read_maybe_gzip(labels_path))
        if labels.shape[0] != images.shape[0]:
            raise DataFormatError(
                f"count mismatch: {images.shape[0]} images vs {labels.shape[0]} labels (offset 4)")
    return _validate(Dataset(images, labels, name or Path(images_path).stem))


def write_idx(path, images: np.ndarray, rows: int, cols: int) -> None:
    """Write uint8 images (n, rows*cols) as an IDX file."""
    images = np.asarray(images, dtype=np.uint8).reshape(-1, rows * cols)
    header = struct.pack(">IIII", IDX_IMAGE_MAGIC, images.shape[0], rows, cols)
    Path(path).write_bytes(header + images.tobytes())


def write_idx_labels(path, labels) -> None:
    labels = np.asarray(labels, dtype=np.uint8)
    Path(path).write_bytes(struct.pack(">II", IDX_LABEL_MAGIC, labels.shape[0]) + labels.tobytes())


def parse_amat(text: str, name: str = "amat") -> Dataset:
    rows, width = [], None
    for lineno, line in enumerate(text.splitlines(), start=1):
        tokens = line.split()
        if not tokens:
            continue
        try:
            values = [float(t) for t in tokens]
        except ValueError:
            bad = next(t for t in tokens if not _is_float(t))
            raise DataFormatError(f"line {lineno}: non-numeric token {bad!r}") from None
        if not all(np.isfinite(values)):
            raise DataFormatError(f"line {lineno}: non-finite value")
        if width is None:
            width = len(values)
            if width < 2:
                raise DataFormatError(f"line {lineno}: need at least one feature and a label")
        elif len(values) != width:
            raise DataFormatError(f"line {lineno}: ragged row, {len(values)} columns instead of {width}")
        rows.append(values)
    if not rows:
        raise DataFormatError("empty dataset")
    arr = np.array(rows, dtype=np.float64)
    labels = np.rint(arr[:, -1])
    if labels.min() < 0 or labels.max() > np.iinfo(np.int32).max:
        raise DataFormatError("label out of range")
    return _validate(Dataset(np.clip(arr[:, :-1], 0.0, 1.0), labels.astype(np.int64), name))


def _is_float(token: str) -> bool:
    try:
        float(token)
        return True
    except ValueError:
        return False


def load_amat(path) -> Dataset:
    try:
        text = Path(path).read_text()
    except UnicodeDecodeError as exc:
        raise DataFormatError(f"not a text file: {exc}") from None
    return parse_amat(text, Path(path).stem)


def save_amat(path, ds: Dataset) -> None:
    labels = ds.labels if ds.labels is not None else np.zeros(len(ds), dtype=np.int64)
    with open(path, "w") as fh:
        for row, label in zip(ds.features, labels):
            fh.write(" ".join(repr(float(v)) for v in row) + f" {int(label)}\n")


def gen_rect(n: int, side: int = 28, seed: int = 0) -> Dataset:
    """White filled rectangles on black; label 1 when taller than wide."""
    if side < 8:
        raise ValueError("side must be >= 8")
    rng = make_rng(seed)
    lo, hi = max(1, side // 8), side - 2
    images = np.zeros((n, side, side))
    labels = np.zeros(n, dtype=np.int64)
    for i in range(n):
        while True:
            height, width = rng.integers(lo, hi + 1, size=2)
            if height != width:
                break
        top = rng.integers(0, side - height + 1)
        left = rng.integers(0, side - width + 1)
        images[i, top:top + height, left:left + width] = 1.0
        labels[i] = int(height > width)
    return Dataset(images.reshape(n, side * side), labels, f"rect{side}")


def load_cifar_binary(path) -> tuple[np.ndarray, np.ndarray]:
    """CIFAR-10 binary batch -> (uint8 images (n, 32, 32, 3), labels)."""
    buf = Path(path).read_bytes()
    if not buf or len(buf) % CIFAR_RECORD:
        raise DataFormatError(f"file size {len(buf)} is not a multiple of {CIFAR_RECORD}")
    recs = np.frombuffer(buf, dtype=np.uint8).reshape(-1, CIFAR_RECORD)
    images = recs[:, 1:].reshape(-1, 3, 32, 32).transpose(0, 2, 3, 1)
    return images, recs[:, 0].astype(np.int64)


def to_grayscale(images) -> np.ndarray:
    """(n, H, W, 3) RGB in 0..255 -> (n, H, W) gray in [0, 1]."""
    return np.asarray(images, dtype=np.float64) @ np.array(GRAY_WEIGHTS) / 255.0


@dataclass
class PatchPipelineConfig:
    patch_size: int = 8
    patch_count: int = 160_000
    source_images: int = 10_000
    drop_components: int = 2
    keep_components: int = 80
    epsilon: float = 1e-8  # contrast-normalization guard
    whiten_epsilon: float = 1e-8
    whiten: str = "sqrt"  # "sqrt": divide by sqrt(eigenvalue); "literal": by the eigenvalue

    def __post_init__(self):
        if self.whiten not in ("sqrt", "literal"):
            raise ValueError(f"unknown whitening mode {self.whiten!r}")


def extract_patches(images, cfg: PatchPipelineConfig, rng: np.random.Generator) -> np.ndarray:
    """Random square patches, flattened row-major (channels last)."""
    images = np.asarray(images, dtype=np.float64)
    if images.ndim == 3:
        images = images[..., None]
    n, h, w, _ = images.shape
    p = cfg.patch_size
    if h < p or w < p:
        raise ValueError(f"images of {h}x{w} are smaller than {p}x{p} patches")
    src = rng.integers(0, min(n, cfg.source_images), size=cfg.patch_count)
    top = rng.integers(0, h - p + 1, size=cfg.patch_count)
    left = rng.integers(0, w - p + 1, size=cfg.patch_count)
    rows = top[:, None] + np.arange(p)[None, :]
    cols = left[:, None] + np.arange(p)[None, :]
    patches = images[src[:, None, None], rows[:, :, None], cols[:, None, :]]
    return patches.reshape(cfg.patch_count, -1)


def contrast_normalize(patches, epsilon: float = 1e-8) -> np.ndarray:
    patches = np.asarray(patches, dtype=np.float64)
    centered = patches - patches.mean(axis=1, keepdims=True)
    return centered / (patches.std(axis=1, keepdims=True) + epsilon)


@dataclass
class PatchTransform:
    """Fitted contrast-normalize -> PCA -> whiten -> logistic map."""
    mean: np.ndarray
    components: np.ndarray  # D x keep, columns in descending-eigenvalue order
    eigenvalues: np.ndarray
    epsilon: float = 1e-8
    whiten_epsilon: float = 1e-8
    whiten: str = "sqrt"
    kind: str = field(default="patch_transform", init=False)

    def whitened(self, patches) -> np.ndarray:
        proj = (contrast_normalize(patches, self.epsilon) - self.mean) @ self.components
        scale = self.eigenvalues + self.whiten_epsilon
        return proj / (np.sqrt(scale) if self.whiten == "sqrt" else scale)

    def apply(self, patches) -> np.ndarray:
        return sigmoid(self.whitened(patches))

    def to_dict(self) -> dict:
        return {
            "format_version": 1,
            "kind": self.kind,
            "mean": self.mean.tolist(),
            "components": self.components.tolist(),
            "eigenvalues": self.eigenvalues.tolist(),
            "epsilon": self.epsilon,
            "whiten_epsilon": self.whiten_epsilon,
            "whiten": self.whiten,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "PatchTransform":
        return cls(np.array(d["mean"]), np.array(d["components"]), np.array(d["eigenvalues"]),
                   d["epsilon"], d["whiten_epsilon"], d["whiten"])

    def save(self, path) -> None:
        Path(path).write_text(json.dumps(self.to_dict()))

    @classmethod
    def load(cls, path) -> "PatchTransform":
        return cls.from_dict(json.loads(Path(path).read_text()))


def fit_patch_transform(patches, cfg: PatchPipelineConfig) -> PatchTransform:
    x = contrast_normalize(patches, cfg.epsilon)
    dim = x.shape[1]
    if cfg.keep_components > dim - cfg.drop_components:
        raise ValueError(f"cannot keep {cfg.keep_components} of {dim} components "
                         f"after dropping {cfg.drop_components}")
    mean = x.mean(axis=0)
    cov = (x - mean).T @ (x - mean) / x.shape[0]
    vals, vecs = symmetric_eigh(cov)
    sel = slice(cfg.drop_components, cfg.drop_components + cfg.keep_components)
    return PatchTransform(mean, vecs[:, sel], np.maximum(vals[sel], 0.0),
                          cfg.epsilon, cfg.whiten_epsilon, cfg.whiten)


def cifar_patch_pipeline(images, cfg: PatchPipelineConfig, rng: np.random.Generator):
    """Extract patches, fit the transform on them, return (patch Dataset, transform)."""
    patches = extract_patches(images, cfg, rng)
    transform = fit_patch_transform(patches, cfg)
    return Dataset(transform.apply(patches), None, "patches"), transform


def encode_dataset(f, data: Dataset) -> Dataset:
    """Map every row through feature map `f`; labels are carried over."""
    return Dataset(f.encode(data.features), data.labels, data.name)
