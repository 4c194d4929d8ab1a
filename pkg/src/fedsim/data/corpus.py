"""Dataset construction: synthetic rendering, folder ingestion, augmentation, split."""
from __future__ import annotations

import hashlib
import warnings
from dataclasses import dataclass

import numpy as np

from ..errors import ConfigurationError, DataError
from .images import color_jitter, hflip, resize_to, rotate, vflip


@dataclass
class LabeledImage:
    """One record: float32 (H, W, 3) pixels in [0, 1], class label, source tag."""

    pixels: np.ndarray
    label: int
    source: str


@dataclass
class DatasetSource:
    records: list[LabeledImage]
    n_classes: int
    sources: tuple[str, ...]

    def __len__(self) -> int:
        return len(self.records)


@dataclass(frozen=True)
class AugmentationPolicy:
    """Six derived variants per original: hflip, vflip, rotation, jitter,
    hflip+rotation, vflip+jitter. Expansion factor is therefore fixed at 7."""

    rotation_degrees: float = 30.0
    brightness_jitter: float = 0.10
    contrast_jitter: float = 0.10

    @property
    def expansion_factor(self) -> int:
        return 7


def _largest_remainder(total: int, weights: np.ndarray) -> np.ndarray:
    """Integer allocation of `total` by `weights`, remainders to largest fractions."""
    quotas = total * weights / weights.sum()
    base = np.floor(quotas).astype(np.int64)
    short = total - int(base.sum())
    if short:
        frac = quotas - base
        order = np.argsort(-frac, kind="stable")
        base[order[:short]] += 1
    return base


def _class_color(label: int, n_classes: int) -> np.ndarray:
    a = 2.0 * np.pi * label / n_classes
    return 0.55 + 0.4 * np.array([np.sin(a), np.sin(a + 2.0 * np.pi / 3), np.sin(a + 4.0 * np.pi / 3)])


def generate_synthetic(
    n_classes: int,
    per_class: int,
    source_tags: tuple[str, ...] = ("A", "B"),
    class_source_skew: float = 0.0,
    seed: int = 0,
    side: int = 128,
) -> DatasetSource:
    """Render a labeled image set where each class is a distinctive texture.

    A class is an oriented stripe pattern (angle and frequency depend on the
    label) under a class-specific color, with a per-record random phase and
    pixel noise. Source tags model separate acquisition sites: each source
    adds a small constant brightness shift, and `class_source_skew` controls
    how classes spread over sources (0 = every class split evenly across all
    sources, 1 = every class confined to a single source).
    """
    if n_classes < 2:
        raise ConfigurationError(f"need at least 2 classes, got {n_classes}")
    if per_class < 1:
        raise ConfigurationError(f"per_class must be positive, got {per_class}")
    if not 0.0 <= class_source_skew <= 1.0:
        raise ConfigurationError(f"class_source_skew must be in [0, 1], got {class_source_skew}")
    tags = tuple(source_tags)
    if not tags or len(set(tags)) != len(tags):
        raise ConfigurationError(f"source tags must be non-empty and unique, got {tags!r}")

    n_sources = len(tags)
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(
        np.linspace(0.0, 1.0, side, endpoint=False),
        np.linspace(0.0, 1.0, side, endpoint=False),
        indexing="ij",
    )
    if n_sources > 1:
        tints = 0.05 * (2.0 * np.arange(n_sources) / (n_sources - 1) - 1.0)
    else:
        tints = np.zeros(1)

    records: list[LabeledImage] = []
    for label in range(n_classes):
        theta = np.pi * label / n_classes
        freq = 2.0 + (label % 4)
        proj = np.cos(theta) * xx + np.sin(theta) * yy
        color = _class_color(label, n_classes)

        home = label % n_sources
        weights = np.full(n_sources, (1.0 - class_source_skew) / n_sources)
        weights[home] += class_source_skew
        counts = _largest_remainder(per_class, weights)
        tag_seq = [tags[s] for s in range(n_sources) for _ in range(counts[s])]

        for tag in tag_seq:
            phase = rng.uniform(0.0, 2.0 * np.pi)
            stripes = 0.5 + 0.35 * np.sin(2.0 * np.pi * freq * proj + phase)
            img = stripes[..., None] * color
            img = img + tints[tags.index(tag)] + rng.normal(0.0, 0.05, img.shape)
            records.append(LabeledImage(np.clip(img, 0.0, 1.0).astype(np.float32), label, tag))

    present = tuple(t for t in tags if any(r.source == t for r in records))
    return DatasetSource(records, n_classes, present)


def ingest_image_folder(root, side: int = 128) -> DatasetSource:
    """Load `root/<source>/<class>/*` into a DatasetSource.

    Class ids follow sorted class-name order across all sources. Every file is
    decoded as 8-bit RGB, scaled to [0, 1], and resized to side x side.
    """
    from pathlib import Path

    from PIL import Image

    rootp = Path(root)
    if not rootp.is_dir():
        raise DataError(f"dataset root {root!r} is not a directory")
    source_dirs = sorted(
        d for d in rootp.iterdir() if d.is_dir() and not d.name.startswith(".")
    )
    if not source_dirs:
        raise DataError(f"dataset root {root!r} contains no source directories")

    class_names = sorted(
        {c.name for src in source_dirs for c in src.iterdir() if c.is_dir() and not c.name.startswith(".")}
    )
    if not class_names:
        raise DataError(f"no class directories found under {root!r}")
    class_ids = {name: i for i, name in enumerate(class_names)}

    records: list[LabeledImage] = []
    for src in source_dirs:
        for cls in class_names:
            cdir = src / cls
            if not cdir.is_dir():
                continue
            for f in sorted(p for p in cdir.iterdir() if p.is_file() and not p.name.startswith(".")):
                try:
                    with Image.open(f) as im:
                        raw = np.asarray(im.convert("RGB"), dtype=np.uint8)
                except Exception as exc:
                    raise DataError(f"cannot decode image file {f}: {exc}") from exc
                pixels = resize_to(raw.astype(np.float32) / 255.0, side)
                records.append(LabeledImage(pixels, class_ids[cls], src.name))

    for name in class_names:
        if not any(r.label == class_ids[name] for r in records):
            raise DataError(f"class {name!r} has no images under any source")
    if not records:
        raise DataError(f"no images found under {root!r}")
    return DatasetSource(records, len(class_names), tuple(s.name for s in source_dirs))


def augment(ds: DatasetSource, policy: AugmentationPolicy = AugmentationPolicy(), seed: int = 0) -> DatasetSource:
    """Expand every record into itself plus six transformed variants.

    Per original, in order: original, hflip, vflip, rotation, jitter,
    hflip+rotation, vflip+jitter. Rotation angles are uniform within
    +/- rotation_degrees; jitter factors are uniform within the policy's
    brightness/contrast bounds. Labels and source tags carry over.
    """
    rng = np.random.default_rng(seed)
    out: list[LabeledImage] = []
    for rec in ds.records:
        angle_a = rng.uniform(-policy.rotation_degrees, policy.rotation_degrees)
        angle_b = rng.uniform(-policy.rotation_degrees, policy.rotation_degrees)
        jb_a = rng.uniform(-policy.brightness_jitter, policy.brightness_jitter)
        jc_a = rng.uniform(-policy.contrast_jitter, policy.contrast_jitter)
        jb_b = rng.uniform(-policy.brightness_jitter, policy.brightness_jitter)
        jc_b = rng.uniform(-policy.contrast_jitter, policy.contrast_jitter)
        x = rec.pixels
        variants = [
            x.copy(),
            hflip(x),
            vflip(x),
            rotate(x, angle_a),
            color_jitter(x, jb_a, jc_a),
            rotate(hflip(x), angle_b),
            color_jitter(vflip(x), jb_b, jc_b),
        ]
        out.extend(LabeledImage(v, rec.label, rec.source) for v in variants)
    return DatasetSource(out, ds.n_classes, ds.sources)


def split_train_test(ds: DatasetSource, train_fraction: float = 0.8, seed: int = 0):
    """Stratified split: per class, floor(train_fraction * count) records to train.

    A class with a single record goes to train with a warning.
    """
    if not 0.0 < train_fraction < 1.0:
        raise ConfigurationError(f"train_fraction must be in (0, 1), got {train_fraction}")
    if not ds.records:
        raise DataError("cannot split an empty dataset")
    rng = np.random.default_rng(seed)
    train_idx: list[int] = []
    test_idx: list[int] = []
    by_class: dict[int, list[int]] = {}
    for i, rec in enumerate(ds.records):
        by_class.setdefault(rec.label, []).append(i)
    for label in sorted(by_class):
        idx = np.array(by_class[label])
        if len(idx) == 1:
            warnings.warn(f"class {label} has a single record; assigning it to train")
            train_idx.extend(idx.tolist())
            continue
        perm = rng.permutation(len(idx))
        cut = int(np.floor(train_fraction * len(idx)))
        train_idx.extend(idx[perm[:cut]].tolist())
        test_idx.extend(idx[perm[cut:]].tolist())

    def subset(indices: list[int]) -> DatasetSource:
        recs = [ds.records[i] for i in indices]
        present = tuple(t for t in ds.sources if any(r.source == t for r in recs))
        return DatasetSource(recs, ds.n_classes, present)

    return subset(train_idx), subset(test_idx)


def dataset_arrays(ds: DatasetSource, indices=None):
    """Stack (a subset of) a dataset into (images (N, H, W, 3), labels (N,))."""
    recs = ds.records if indices is None else [ds.records[i] for i in indices]
    if not recs:
        raise DataError("empty record selection")
    images = np.stack([r.pixels for r in recs]).astype(np.float32, copy=False)
    labels = np.array([r.label for r in recs], dtype=np.int64)
    return images, labels


def fingerprint(ds: DatasetSource) -> str:
    """Content hash of the dataset, stable across process runs."""
    h = hashlib.sha256()
    h.update(str(ds.n_classes).encode())
    for rec in ds.records:
        h.update(str(rec.label).encode())
        h.update(rec.source.encode())
        h.update(np.ascontiguousarray(rec.pixels, dtype="<f4").tobytes())
    return h.hexdigest()
