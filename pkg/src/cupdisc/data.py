"""Dataset ingestion for the two supported fundus collections.

Both datasets are normalized into the same sample/manifest model: a
manifest lists per-image file records plus split assignments, and samples
are materialized on demand as image + 3-class label map pairs.

Expected directory layouts
--------------------------

DRISHTI-style tree (soft expert-average boundaries)::

    root/
      images/<id>.png
      gt/<id>_od_soft.png      grayscale, 0..255 mapped to [0, 1]
      gt/<id>_cup_soft.png

RIM-ONE-style tree (binary expert masks, diagnosis by subdirectory)::

    root/
      healthy/<id>.png  <id>_disc.png  <id>_cup.png
      glaucoma/<id>.png <id>_disc.png  <id>_cup.png

Label maps use 0 background, 1 disc rim, 2 cup; masks written to disk are
palette PNGs whose pixel values are exactly those class indices.
"""

from __future__ import annotations

import os
from dataclasses import dataclass, field, replace

import numpy as np
from PIL import Image, UnidentifiedImageError

from .metrics import LABEL_CUP, LABEL_RIM

DEFAULT_THRESHOLD = 0.5
DIAGNOSES = ("healthy", "glaucoma", "unknown")
SPLITS = ("train", "val", "test")
AUGMENT_OPS = ("hflip", "vflip", "rotate90")

# palette for stored masks: background near-black, rim green, cup red
MASK_PALETTE = [20, 20, 20, 60, 180, 75, 230, 25, 75] + [0] * (256 * 3 - 9)


class DataError(Exception):
    """Dataset layout, content, or manifest problem."""


@dataclass(frozen=True)
class FundusSample:
    """One fundus image with its 3-class label map."""

    id: str
    image: np.ndarray  # H x W x 3 uint8
    labels: np.ndarray  # H x W uint8, values in {0, 1, 2}
    source: str = "unknown"
    diagnosis: str = "unknown"

    def __post_init__(self):
        if self.image.ndim != 3 or self.image.shape[2] != 3:
            raise DataError(f"sample {self.id}: image must be HxWx3, got {self.image.shape}")
        if self.labels.shape != self.image.shape[:2]:
            raise DataError(
                f"sample {self.id}: labels {self.labels.shape} do not match "
                f"image {self.image.shape[:2]}"
            )
        if self.labels.size and int(self.labels.max()) > 2:
            raise DataError(f"sample {self.id}: labels outside {{0,1,2}}")
        if self.diagnosis not in DIAGNOSES:
            raise DataError(f"sample {self.id}: unknown diagnosis {self.diagnosis!r}")


@dataclass(frozen=True)
class SampleRecord:
    """Manifest row: where a sample's files live and what is known about it."""

    id: str
    image_path: str  # all paths relative to the manifest root
    disc_path: str
    cup_path: str
    diagnosis: str = "unknown"
    split: str = ""


@dataclass
class DatasetManifest:
    """Ordered sample records plus split bookkeeping."""

    source: str
    root: str
    records: list[SampleRecord] = field(default_factory=list)
    seed: int | None = None
    ratios: tuple[float, float, float] | None = None
    skipped: list[tuple[str, str]] = field(default_factory=list)

    def __len__(self):
        return len(self.records)

    def __iter__(self):
        return iter(self.records)

    def ids(self) -> list[str]:
        return [r.id for r in self.records]

    def record(self, sample_id: str) -> SampleRecord:
        for r in self.records:
            if r.id == sample_id:
                return r
        raise DataError(f"id {sample_id!r} not in manifest")

    def subset(self, split: str) -> list[SampleRecord]:
        if split not in SPLITS:
            raise DataError(f"unknown split {split!r}; expected one of {SPLITS}")
        return [r for r in self.records if r.split == split]

    def diagnosis_counts(self) -> dict[str, int]:
        counts = {d: 0 for d in DIAGNOSES}
        for r in self.records:
            counts[r.diagnosis] += 1
        return counts

    # -- serialization: line-oriented text, one record per line

    def save(self, path) -> None:
        lines = ["cupdisc-manifest v1", f"source {self.source}", f"root {self.root}"]
        lines.append(f"seed {self.seed if self.seed is not None else '-'}")
        if self.ratios is None:
            lines.append("ratios -")
        else:
            lines.append("ratios {} {} {}".format(*(repr(r) for r in self.ratios)))
        for r in self.records:
            lines.append(
                f"record {r.id} {r.image_path} {r.disc_path} {r.cup_path} "
                f"{r.diagnosis} {r.split or '-'}"
            )
        for sid, reason in self.skipped:
            lines.append(f"skip {sid} {reason}")
        with open(path, "w") as fh:
            fh.write("\n".join(lines) + "\n")

    @staticmethod
    def load(path, root: str | None = None) -> "DatasetManifest":
        with open(path) as fh:
            lines = [ln.strip() for ln in fh if ln.strip() and not ln.startswith("#")]
        if not lines or lines[0] != "cupdisc-manifest v1":
            raise DataError(f"{path}: not a cupdisc-manifest v1 file")
        manifest = DatasetManifest(source="unknown", root="")
        for ln in lines[1:]:
            parts = ln.split()
            try:
                if parts[0] == "source":
                    manifest.source = parts[1]
                elif parts[0] == "root":
                    manifest.root = parts[1]
                elif parts[0] == "seed":
                    manifest.seed = None if parts[1] == "-" else int(parts[1])
                elif parts[0] == "ratios":
                    if parts[1] != "-":
                        manifest.ratios = (float(parts[1]), float(parts[2]), float(parts[3]))
                elif parts[0] == "record":
                    split = "" if parts[6] == "-" else parts[6]
                    manifest.records.append(
                        SampleRecord(parts[1], parts[2], parts[3], parts[4], parts[5], split)
                    )
                elif parts[0] == "skip":
                    manifest.skipped.append((parts[1], " ".join(parts[2:])))
                else:
                    raise DataError(f"{path}: unknown directive {parts[0]!r}")
            except (IndexError, ValueError) as err:
                raise DataError(f"{path}: malformed line {ln!r}") from err
        if root is not None:
            manifest.root = root
        return manifest


# --------------------------------------------------------------------------
# loaders

def _verify_image(path: str) -> str | None:
    """Return an error string when the file is unreadable, else None."""
    try:
        with Image.open(path) as im:
            im.verify()
        return None
    except (UnidentifiedImageError, OSError, SyntaxError) as err:
        return str(err)


def load_drishti(root) -> DatasetManifest:
    """Scan a DRISHTI-style tree into a manifest.

    Every image must have both soft ground-truth maps; missing files abort
    with all offending ids listed.  Unreadable images are recorded under
    ``manifest.skipped`` and do not abort the scan.
    """
    root = str(root)
    images_dir = os.path.join(root, "images")
    gt_dir = os.path.join(root, "gt")
    if not os.path.isdir(images_dir) or not os.path.isdir(gt_dir):
        raise DataError(f"dataset not found: {root} has no images/ and gt/ directories")

    ids = sorted(
        os.path.splitext(name)[0]
        for name in os.listdir(images_dir)
        if name.lower().endswith(".png")
    )
    if not ids:
        raise DataError(f"dataset not found: no images under {images_dir}")

    manifest = DatasetManifest(source="drishti", root=root)
    missing = []
    for sid in ids:
        image_rel = f"images/{sid}.png"
        disc_rel = f"gt/{sid}_od_soft.png"
        cup_rel = f"gt/{sid}_cup_soft.png"
        absent = [rel for rel in (disc_rel, cup_rel) if not os.path.isfile(os.path.join(root, rel))]
        if absent:
            missing.append(f"{sid} (missing {', '.join(absent)})")
            continue
        err = _verify_image(os.path.join(root, image_rel))
        if err is not None:
            manifest.skipped.append((sid, f"unreadable image: {err}"))
            continue
        manifest.records.append(SampleRecord(sid, image_rel, disc_rel, cup_rel, "unknown"))
    if missing:
        raise DataError(f"incomplete ground truth for {len(missing)} id(s): " + "; ".join(missing))
    return manifest


def load_rimone(root) -> DatasetManifest:
    """Scan a RIM-ONE-style tree (diagnosis folders with binary masks)."""
    root = str(root)
    present = [d for d in ("healthy", "glaucoma") if os.path.isdir(os.path.join(root, d))]
    if not present:
        raise DataError(f"dataset not found: {root} has no healthy/ or glaucoma/ directories")

    manifest = DatasetManifest(source="rimone", root=root)
    missing = []
    for diagnosis in ("glaucoma", "healthy"):
        sub = os.path.join(root, diagnosis)
        if not os.path.isdir(sub):
            continue
        ids = sorted(
            os.path.splitext(name)[0]
            for name in os.listdir(sub)
            if name.lower().endswith(".png")
            and not name.endswith(("_disc.png", "_cup.png"))
        )
        for sid in ids:
            image_rel = f"{diagnosis}/{sid}.png"
            disc_rel = f"{diagnosis}/{sid}_disc.png"
            cup_rel = f"{diagnosis}/{sid}_cup.png"
            absent = [
                rel for rel in (disc_rel, cup_rel) if not os.path.isfile(os.path.join(root, rel))
            ]
            if absent:
                missing.append(f"{sid} (missing {', '.join(absent)})")
                continue
            err = _verify_image(os.path.join(root, image_rel))
            if err is not None:
                manifest.skipped.append((sid, f"unreadable image: {err}"))
                continue
            manifest.records.append(SampleRecord(sid, image_rel, disc_rel, cup_rel, diagnosis))
    if missing:
        raise DataError(f"incomplete ground truth for {len(missing)} id(s): " + "; ".join(missing))
    if not manifest.records and not manifest.skipped:
        raise DataError(f"dataset not found: no images under {root}")
    manifest.records.sort(key=lambda r: r.id)
    return manifest


# --------------------------------------------------------------------------
# mask encoding and sample IO

def encode_mask(disc_soft: np.ndarray, cup_soft: np.ndarray, threshold: float = DEFAULT_THRESHOLD) -> np.ndarray:
    """Threshold soft disc/cup maps into the 3-class label map.

    Pixels at exactly the threshold are included.  Cup pixels falling
    outside the thresholded disc promote the disc to cover them, so the
    nesting invariant holds whatever the soft maps say.
    """
    disc_soft = np.asarray(disc_soft, dtype=np.float64)
    cup_soft = np.asarray(cup_soft, dtype=np.float64)
    if disc_soft.shape != cup_soft.shape:
        raise DataError(f"soft map shapes differ: {disc_soft.shape} vs {cup_soft.shape}")
    if not 0.0 < threshold < 1.0:
        raise DataError(f"threshold must be in (0, 1), got {threshold}")
    cup = cup_soft >= threshold
    disc = (disc_soft >= threshold) | cup
    labels = np.zeros(disc_soft.shape, dtype=np.uint8)
    labels[disc] = LABEL_RIM
    labels[cup] = LABEL_CUP
    return labels


def _read_soft_map(path: str) -> np.ndarray:
    with Image.open(path) as im:
        arr = np.asarray(im.convert("L"), dtype=np.float64)
    return arr / 255.0


def _read_image(path: str) -> np.ndarray:
    with Image.open(path) as im:
        return np.asarray(im.convert("RGB"), dtype=np.uint8)


def load_sample(
    manifest: DatasetManifest,
    record: SampleRecord | str,
    side: int | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    cache_dir=None,
) -> FundusSample:
    """Materialize one manifest record as a FundusSample.

    ``side`` resizes to side x side (must be divisible by 32).  With
    ``cache_dir`` the prepared arrays are stored keyed by (id, side,
    threshold) and reused on later calls.
    """
    if isinstance(record, str):
        record = manifest.record(record)

    cache_path = None
    if cache_dir is not None:
        os.makedirs(cache_dir, exist_ok=True)
        cache_path = os.path.join(
            str(cache_dir), f"{record.id}_s{side or 0}_t{threshold:g}.npz"
        )
        if os.path.isfile(cache_path):
            with np.load(cache_path) as bundle:
                return FundusSample(
                    record.id, bundle["image"], bundle["labels"],
                    source=manifest.source, diagnosis=record.diagnosis,
                )

    image = _read_image(os.path.join(manifest.root, record.image_path))
    disc_soft = _read_soft_map(os.path.join(manifest.root, record.disc_path))
    cup_soft = _read_soft_map(os.path.join(manifest.root, record.cup_path))
    if disc_soft.shape != image.shape[:2]:
        raise DataError(
            f"sample {record.id}: mask shape {disc_soft.shape} does not match "
            f"image {image.shape[:2]}"
        )
    labels = encode_mask(disc_soft, cup_soft, threshold)
    sample = FundusSample(
        record.id, image, labels, source=manifest.source, diagnosis=record.diagnosis
    )
    if side is not None:
        sample = resize_sample(sample, side)
    if cache_path is not None:
        np.savez_compressed(cache_path, image=sample.image, labels=sample.labels)
    return sample


def load_split(
    manifest: DatasetManifest,
    split: str,
    side: int | None = None,
    threshold: float = DEFAULT_THRESHOLD,
    cache_dir=None,
) -> list[FundusSample]:
    records = manifest.subset(split)
    return [load_sample(manifest, r, side, threshold, cache_dir) for r in records]


def resize_sample(sample: FundusSample, side: int) -> FundusSample:
    """Resize to side x side: bilinear for the image, nearest-neighbor for
    labels so no new class values appear."""
    if side <= 0 or side % 32 != 0:
        raise DataError(f"side must be a positive multiple of 32, got {side}")
    if sample.image.shape[:2] == (side, side):
        return sample
    image = np.asarray(
        Image.fromarray(sample.image).resize((side, side), Image.BILINEAR), dtype=np.uint8
    )
    labels = np.asarray(
        Image.fromarray(sample.labels).resize((side, side), Image.NEAREST), dtype=np.uint8
    )
    return replace(sample, image=image, labels=labels)


def save_labelmap(labels: np.ndarray, path) -> None:
    """Write a label map as a palette PNG whose pixel values are the class
    indices 0/1/2 (palette only affects display)."""
    labels = np.asarray(labels, dtype=np.uint8)
    im = Image.fromarray(labels, mode="P")
    im.putpalette(MASK_PALETTE)
    im.save(path)


def load_labelmap(path) -> np.ndarray:
    with Image.open(path) as im:
        if im.mode != "P":
            im = im.convert("L")
        labels = np.asarray(im, dtype=np.uint8)
    if labels.size and int(labels.max()) > 2:
        raise DataError(f"{path}: mask values outside {{0,1,2}}")
    return labels


# --------------------------------------------------------------------------
# splitting and augmentation

def split(
    manifest: DatasetManifest,
    ratios: tuple[float, float, float],
    seed: int,
) -> DatasetManifest:
    """Assign train/val/test deterministically, stratified by diagnosis.

    Within each diagnosis group (ids sorted, then shuffled by the seeded
    generator) the first floor(n * train) ids go to train, the next
    floor(n * val) to val, and the remainder to test.  Ratios must be
    non-negative and sum to 1.
    """
    if len(ratios) != 3 or any(r < 0 for r in ratios):
        raise DataError(f"ratios must be three non-negative numbers, got {ratios}")
    if abs(sum(ratios) - 1.0) > 1e-9:
        raise DataError(f"ratios must sum to 1, got {ratios} (sum {sum(ratios)})")

    rng = np.random.default_rng(seed)
    assignment: dict[str, str] = {}
    groups = sorted({r.diagnosis for r in manifest.records})
    for diagnosis in groups:
        ids = sorted(r.id for r in manifest.records if r.diagnosis == diagnosis)
        order = rng.permutation(len(ids))
        shuffled = [ids[i] for i in order]
        n = len(shuffled)
        n_train = int(n * ratios[0])
        n_val = int(n * ratios[1])
        for i, sid in enumerate(shuffled):
            if i < n_train:
                assignment[sid] = "train"
            elif i < n_train + n_val:
                assignment[sid] = "val"
            else:
                assignment[sid] = "test"

    records = [replace(r, split=assignment[r.id]) for r in manifest.records]
    return DatasetManifest(
        source=manifest.source,
        root=manifest.root,
        records=records,
        seed=seed,
        ratios=tuple(float(r) for r in ratios),
        skipped=list(manifest.skipped),
    )


def augment(
    sample: FundusSample,
    ops,
    seed: int | None = None,
) -> FundusSample:
    """Apply geometric ops to image and labels together.

    ``ops`` is any subset of {hflip, vflip, rotate90}.  Without a seed each
    listed op is applied exactly once, in that canonical order (so augment
    with {"hflip"} twice is the identity).  With a seed each listed op is
    applied independently with probability 1/2.
    """
    ops = set(ops)
    unknown = ops - set(AUGMENT_OPS)
    if unknown:
        raise DataError(f"unsupported augment op(s): {sorted(unknown)}")

    rng = np.random.default_rng(seed) if seed is not None else None
    image, labels = sample.image, sample.labels
    for op in AUGMENT_OPS:
        if op not in ops:
            continue
        if rng is not None and rng.random() >= 0.5:
            continue
        if op == "hflip":
            image, labels = image[:, ::-1], labels[:, ::-1]
        elif op == "vflip":
            image, labels = image[::-1], labels[::-1]
        else:
            image, labels = np.rot90(image), np.rot90(labels)
    return replace(sample, image=np.ascontiguousarray(image), labels=np.ascontiguousarray(labels))
