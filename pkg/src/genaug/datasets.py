"""Dataset model and construction: augmentation mixing, long-tail and few-shot
subsets, adversarial injection, holdout splitting, and manifest round-trips.

A dataset is categories of image records; pixels live on disk and the manifest
is the single source of truth. All builders return new datasets, sample with
explicit seeds, and leave real images untouched, so every construction is
reproducible from (manifest, seed).
"""

from __future__ import annotations

import json
from dataclasses import dataclass, replace
from fractions import Fraction
from pathlib import Path
from typing import Callable, Iterable, Mapping, Sequence

import numpy as np
from PIL import Image

from .errors import ConfigError
from .imagegen import ImageSpec
from .textgen import LabelSpec

PROVENANCES = ("real", "synthetic", "adversarial")
MANIFEST_FORMAT = "genaug-manifest-v1"


def round_half_up(value: Fraction | float | int) -> int:
    """Round to nearest integer, halves away from zero (for nonnegative input)."""
    f = value if isinstance(value, Fraction) else Fraction(str(value))
    return int(f + Fraction(1, 2)) if f >= 0 else -int(-f + Fraction(1, 2))


def as_ratio(value) -> Fraction:
    """Normalize a ratio given as int/float/str/Fraction to an exact Fraction.

    Floats go through their decimal string form, so 0.2 means exactly 1/5.
    """
    if isinstance(value, Fraction):
        return value
    if isinstance(value, float):
        return Fraction(str(value))
    return Fraction(value)


@dataclass(frozen=True)
class ImageRecord:
    """One image reference in a dataset manifest."""

    path: str
    class_id: int
    label_text: str
    provenance: str = "real"
    split: str = "train"
    domain: str | None = None

    def __post_init__(self):
        if not self.path:
            raise ValueError("path must be non-empty")
        if self.provenance not in PROVENANCES:
            raise ValueError(f"provenance must be one of {PROVENANCES}")
        if self.split not in ("train", "val", "test"):
            raise ValueError("split must be train, val, or test")

    def sort_key(self):
        return (self.split, self.class_id, self.provenance, self.path)


@dataclass(frozen=True)
class Category:
    """All images of one class, partitioned by provenance."""

    label: LabelSpec
    real_images: tuple[ImageRecord, ...] = ()
    synthetic_images: tuple[ImageRecord, ...] = ()
    adversarial_images: tuple[ImageRecord, ...] = ()

    def __post_init__(self):
        for provenance, records in (
            ("real", self.real_images),
            ("synthetic", self.synthetic_images),
            ("adversarial", self.adversarial_images),
        ):
            for i, r in enumerate(records):
                if r.class_id != self.label.class_id:
                    raise ValueError(
                        f"{provenance} image {i} has class_id {r.class_id}, "
                        f"category is {self.label.class_id}"
                    )
                if r.provenance != provenance:
                    raise ValueError(
                        f"{provenance} image {i} carries provenance tag {r.provenance!r}"
                    )

    def records(self) -> tuple[ImageRecord, ...]:
        return self.real_images + self.synthetic_images + self.adversarial_images

    def real_train(self) -> tuple[ImageRecord, ...]:
        return tuple(r for r in self.real_images if r.split == "train")


@dataclass(frozen=True)
class Dataset:
    """An image classification dataset: ordered categories plus image shape."""

    name: str
    categories: tuple[Category, ...]
    image_spec: ImageSpec
    domain: str | None = None

    def __post_init__(self):
        ids = [c.label.class_id for c in self.categories]
        if ids != list(range(len(ids))):
            raise ValueError("category class_ids must be 0..n-1 without gaps")
        texts = [c.label.label_text for c in self.categories]
        if len(set(texts)) != len(texts):
            raise ValueError("label_text must be unique across categories")

    @property
    def num_classes(self) -> int:
        return len(self.categories)

    def labels(self) -> list[LabelSpec]:
        return [c.label for c in self.categories]

    def records(self) -> list[ImageRecord]:
        out = []
        for c in self.categories:
            out.extend(c.records())
        return out


@dataclass(frozen=True)
class AugmentationPlan:
    """Mixing recipe: synthetic count per category = round(ratio * real count)."""

    ratio: Fraction
    prompt_source: str = "label"
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "ratio", as_ratio(self.ratio))
        if self.ratio < 0:
            raise ValueError("ratio must be >= 0")
        if self.prompt_source not in ("label", "description"):
            raise ValueError("prompt_source must be 'label' or 'description'")


def synthetic_count(plan: AugmentationPlan, real_count: int) -> int:
    """Per-category synthetic image count under a plan (half-up rounding)."""
    return round_half_up(plan.ratio * real_count)


def _category_rng(seed: int, class_id: int) -> np.random.Generator:
    return np.random.default_rng((seed, class_id))


def _sample_keep(records: Sequence[ImageRecord], keep: int, rng: np.random.Generator):
    """Seeded uniform sample without replacement, original order preserved."""
    idx = sorted(rng.choice(len(records), size=keep, replace=False).tolist())
    kept = tuple(records[i] for i in idx)
    dropped = tuple(records[i] for i in range(len(records)) if i not in set(idx))
    return kept, dropped


def augment_category(cat: Category, synth: Sequence[ImageRecord]) -> Category:
    """Append synthetic images to a category; real images are untouched."""
    for i, r in enumerate(synth):
        if r.class_id != cat.label.class_id:
            raise ValueError(
                f"synthetic image {i} has class_id {r.class_id}, "
                f"category is {cat.label.class_id}"
            )
    return replace(cat, synthetic_images=cat.synthetic_images + tuple(synth))


def build_augmented_dataset(
    ds: Dataset,
    plan: AugmentationPlan,
    gen: Callable[[Category, int], Sequence[ImageRecord]],
) -> Dataset:
    """Augment every category with round(ratio * m_i) provider-supplied images.

    m_i counts the category's real train images. The provider must yield
    exactly the requested count per category; shortfalls (or surpluses) abort
    with a per-category deficit report.
    """
    new_categories = []
    deficits = []
    for cat in ds.categories:
        want = synthetic_count(plan, len(cat.real_train()))
        if want == 0:
            new_categories.append(cat)
            continue
        got = list(gen(cat, want))
        if len(got) != want:
            deficits.append((cat.label.label_text, want, len(got)))
            continue
        new_categories.append(augment_category(cat, got))
    if deficits:
        detail = "; ".join(f"{name}: wanted {w}, got {g}" for name, w, g in deficits)
        raise ConfigError(f"synthetic image provider shortfall: {detail}")
    return replace(ds, categories=tuple(new_categories))


def make_long_tail(ds: Dataset, seed: int = 0) -> Dataset:
    """Keep max(1, floor(i * m_i / n)) train images of category i (1-based i).

    Membership is a seeded uniform sample without replacement; category order
    is preserved and non-train records pass through unchanged.
    """
    n = ds.num_classes
    new_categories = []
    for cat in ds.categories:
        i = cat.label.class_id + 1
        train = cat.real_train()
        rest = tuple(r for r in cat.real_images if r.split != "train")
        m = len(train)
        keep = max(1, (i * m) // n)
        kept, _ = _sample_keep(train, keep, _category_rng(seed, cat.label.class_id))
        new_categories.append(replace(cat, real_images=kept + rest))
    return replace(ds, categories=tuple(new_categories))


def make_few_shot(ds: Dataset, per_class: int, seed: int = 0) -> Dataset:
    """Keep exactly per_class seeded-uniform train images in every category."""
    if per_class < 1:
        raise ValueError("per_class must be >= 1")
    new_categories = []
    for cat in ds.categories:
        train = cat.real_train()
        if per_class > len(train):
            raise ConfigError(
                f"per_class {per_class} exceeds category "
                f"{cat.label.label_text!r} size {len(train)}"
            )
        rest = tuple(r for r in cat.real_images if r.split != "train")
        kept, _ = _sample_keep(train, per_class, _category_rng(seed, cat.label.class_id))
        new_categories.append(replace(cat, real_images=kept + rest))
    return replace(ds, categories=tuple(new_categories))


def inject_adversarial(
    ds: Dataset, adv: Mapping[int, Sequence[str | Path | ImageRecord]]
) -> Dataset:
    """Append adversarial-tagged train images to the named categories."""
    known = {c.label.class_id for c in ds.categories}
    unknown = sorted(set(adv) - known)
    if unknown:
        raise ConfigError(f"adversarial images reference unknown class_ids: {unknown}")
    by_class = {}
    for class_id, items in adv.items():
        label = ds.categories[class_id].label
        records = []
        for item in items:
            if isinstance(item, ImageRecord):
                records.append(item)
            else:
                records.append(
                    ImageRecord(
                        path=str(item),
                        class_id=class_id,
                        label_text=label.label_text,
                        provenance="adversarial",
                        split="train",
                        domain=ds.domain,
                    )
                )
        by_class[class_id] = tuple(records)
    new_categories = [
        replace(cat, adversarial_images=cat.adversarial_images + by_class.get(cat.label.class_id, ()))
        for cat in ds.categories
    ]
    return replace(ds, categories=tuple(new_categories))


def split_holdout(ds: Dataset, fraction, seed: int = 0) -> tuple[Dataset, Dataset]:
    """Move round(fraction * m) real train images per category to a val set.

    Only real images are eligible; synthetic and adversarial images stay in
    the train dataset. The input must not already contain val records.
    """
    frac = as_ratio(fraction)
    if not (0 < frac < 1):
        raise ValueError("fraction must be strictly between 0 and 1")
    if any(r.split == "val" for r in ds.records()):
        raise ConfigError("dataset already contains a val split")

    train_categories = []
    val_categories = []
    for cat in ds.categories:
        train = cat.real_train()
        if len(train) < 2:
            raise ConfigError(
                f"category {cat.label.label_text!r} has {len(train)} real train "
                "image(s); need at least 2 to split"
            )
        rest = tuple(r for r in cat.real_images if r.split != "train")
        n_val = round_half_up(frac * len(train))
        moved, kept = _sample_keep(train, n_val, _category_rng(seed, cat.label.class_id))
        val_records = tuple(replace(r, split="val") for r in moved)
        train_categories.append(replace(cat, real_images=kept + rest))
        val_categories.append(
            Category(label=cat.label, real_images=val_records)
        )
    train_ds = replace(ds, categories=tuple(train_categories))
    val_ds = Dataset(
        name=f"{ds.name}-val",
        categories=tuple(val_categories),
        image_spec=ds.image_spec,
        domain=ds.domain,
    )
    return train_ds, val_ds


def merge(ds_a: Dataset, ds_b: Dataset) -> Dataset:
    """Combine two datasets over the same label space into one manifest view."""
    if [c.label for c in ds_a.categories] != [c.label for c in ds_b.categories]:
        raise ConfigError("cannot merge datasets with different label spaces")
    cats = []
    for ca, cb in zip(ds_a.categories, ds_b.categories):
        cats.append(
            Category(
                label=ca.label,
                real_images=ca.real_images + cb.real_images,
                synthetic_images=ca.synthetic_images + cb.synthetic_images,
                adversarial_images=ca.adversarial_images + cb.adversarial_images,
            )
        )
    return replace(ds_a, categories=tuple(cats))


def transform_augment(image: np.ndarray, ops: Sequence[str], seed: int = 0) -> np.ndarray:
    """Minimal deterministic baseline transforms, composed left to right.

    hflip mirrors horizontally; rotate90 rotates once counterclockwise;
    crop_pad4 pads 4 edge pixels then takes a seeded crop at original size.
    """
    out = image
    for op in ops:
        if op == "hflip":
            out = out[:, ::-1].copy()
        elif op == "rotate90":
            out = np.rot90(out).copy()
        elif op == "crop_pad4":
            rng = np.random.default_rng((seed, 4))
            padded = np.pad(out, ((4, 4), (4, 4), (0, 0)), mode="edge")
            dy, dx = int(rng.integers(0, 9)), int(rng.integers(0, 9))
            out = padded[dy : dy + out.shape[0], dx : dx + out.shape[1]].copy()
        else:
            raise ValueError(f"unknown transform op: {op!r}")
    return out


def _canonical_records(ds: Dataset) -> list[ImageRecord]:
    return sorted(ds.records(), key=ImageRecord.sort_key)


def manifest_bytes(ds: Dataset) -> bytes:
    """Serialize a dataset manifest; stable under re-serialization."""
    header = {
        "format": MANIFEST_FORMAT,
        "name": ds.name,
        "image_spec": [ds.image_spec.height, ds.image_spec.width, ds.image_spec.channels],
        "labels": [[l.class_id, l.label_text] for l in ds.labels()],
    }
    lines = [json.dumps(header, sort_keys=True, separators=(",", ":"))]
    for r in _canonical_records(ds):
        lines.append(
            json.dumps(
                {
                    "path": r.path,
                    "class_id": r.class_id,
                    "label_text": r.label_text,
                    "provenance": r.provenance,
                    "split": r.split,
                    "domain": r.domain,
                },
                sort_keys=True,
                separators=(",", ":"),
            )
        )
    return ("\n".join(lines) + "\n").encode("utf-8")


def save_manifest(ds: Dataset, path: str | Path) -> Path:
    """Write the manifest; record paths should be relative to its directory."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(manifest_bytes(ds))
    return path


def load_manifest(path: str | Path, check_files: bool = True) -> Dataset:
    """Load a manifest written by save_manifest.

    Relative record paths are resolved against the manifest's directory when
    checking existence; missing files abort with the full list of paths.
    """
    path = Path(path)
    if not path.exists():
        raise ConfigError(f"manifest not found: {path}")
    lines = path.read_text(encoding="utf-8").splitlines()
    if not lines:
        raise ConfigError(f"{path}: empty manifest")
    try:
        header = json.loads(lines[0])
    except json.JSONDecodeError as e:
        raise ConfigError(f"{path}: bad manifest header: {e.msg}") from e
    if header.get("format") != MANIFEST_FORMAT:
        raise ConfigError(f"{path}: not a {MANIFEST_FORMAT} manifest")

    spec_hwc = header["image_spec"]
    image_spec = ImageSpec(width=spec_hwc[1], height=spec_hwc[0], channels=spec_hwc[2])
    labels = [LabelSpec(class_id=c, label_text=t) for c, t in header["labels"]]

    by_class: dict[int, dict[str, list[ImageRecord]]] = {
        l.class_id: {"real": [], "synthetic": [], "adversarial": []} for l in labels
    }
    domains = set()
    records = []
    for lineno, line in enumerate(lines[1:], 2):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            record = ImageRecord(
                path=obj["path"],
                class_id=obj["class_id"],
                label_text=obj["label_text"],
                provenance=obj["provenance"],
                split=obj["split"],
                domain=obj.get("domain"),
            )
        except (json.JSONDecodeError, KeyError, ValueError) as e:
            raise ConfigError(f"{path}: bad record at line {lineno}: {e}") from e
        if record.class_id not in by_class:
            raise ConfigError(f"{path}: line {lineno} references unknown class_id {record.class_id}")
        records.append(record)
        domains.add(record.domain)
        by_class[record.class_id][record.provenance].append(record)

    if check_files:
        missing = []
        for r in records:
            p = Path(r.path)
            if not p.is_absolute():
                p = path.parent / p
            if not p.exists():
                missing.append(r.path)
        if missing:
            raise ConfigError(f"{path}: missing image files: {', '.join(sorted(missing))}")

    domains.discard(None)
    if len(domains) > 1:
        raise ConfigError(f"{path}: mixed domains in one manifest: {sorted(domains)}")

    categories = tuple(
        Category(
            label=l,
            real_images=tuple(by_class[l.class_id]["real"]),
            synthetic_images=tuple(by_class[l.class_id]["synthetic"]),
            adversarial_images=tuple(by_class[l.class_id]["adversarial"]),
        )
        for l in labels
    )
    return Dataset(
        name=header.get("name", path.stem),
        categories=categories,
        image_spec=image_spec,
        domain=next(iter(domains)) if domains else None,
    )


def dataset_from_directory(
    root: str | Path, name: str, image_spec: ImageSpec, domain: str | None = None
) -> Dataset:
    """Build a train-split dataset from a class-per-subdirectory image tree.

    Subdirectory names become label texts (sorted); record paths are relative
    to root, so save the manifest under root.
    """
    root = Path(root)
    class_dirs = sorted(d for d in root.iterdir() if d.is_dir())
    if not class_dirs:
        raise ConfigError(f"no class subdirectories under {root}")
    categories = []
    for class_id, d in enumerate(class_dirs):
        label = LabelSpec(class_id=class_id, label_text=d.name)
        files = sorted(p for p in d.iterdir() if p.suffix.lower() == ".png")
        records = tuple(
            ImageRecord(
                path=str(p.relative_to(root)),
                class_id=class_id,
                label_text=d.name,
                provenance="real",
                split="train",
                domain=domain,
            )
            for p in files
        )
        categories.append(Category(label=label, real_images=records))
    return Dataset(name=name, categories=tuple(categories), image_spec=image_spec, domain=domain)


def load_arrays(
    ds: Dataset, split: str, base_dir: str | Path
) -> tuple[np.ndarray, np.ndarray]:
    """Load pixel data for one split: (images uint8 NxHxWx3, labels int64).

    Records are read in canonical order; every image must match the dataset's
    image_spec exactly.
    """
    base_dir = Path(base_dir)
    records = [r for r in _canonical_records(ds) if r.split == split]
    spec = ds.image_spec
    images = np.zeros((len(records), spec.height, spec.width, 3), dtype=np.uint8)
    labels = np.zeros(len(records), dtype=np.int64)
    for i, r in enumerate(records):
        p = Path(r.path)
        if not p.is_absolute():
            p = base_dir / p
        with Image.open(p) as im:
            arr = np.asarray(im.convert("RGB"))
        if arr.shape != (spec.height, spec.width, 3):
            raise ConfigError(
                f"{r.path}: image shape {arr.shape} does not match spec "
                f"({spec.height}, {spec.width}, 3)"
            )
        images[i] = arr
        labels[i] = r.class_id
    return images, labels


def dataset_stats(ds: Dataset) -> dict:
    """Summary counts in the shape of the statistics report: total/classes/per-class."""
    per_class = [len(c.records()) for c in ds.categories]
    by_provenance = {p: 0 for p in PROVENANCES}
    by_split = {"train": 0, "val": 0, "test": 0}
    for r in ds.records():
        by_provenance[r.provenance] += 1
        by_split[r.split] += 1
    return {
        "name": ds.name,
        "domain": ds.domain,
        "total": sum(per_class),
        "classes": ds.num_classes,
        "per_class_min": min(per_class) if per_class else 0,
        "per_class_max": max(per_class) if per_class else 0,
        "by_provenance": by_provenance,
        "by_split": by_split,
    }
