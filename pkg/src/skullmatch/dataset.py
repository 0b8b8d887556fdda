"""Corpus handling: manifests, preprocessing, registration, augmentation,
five-fold protocol planning, and a synthetic paired-domain generator.

A corpus is a JSON manifest listing face and skull records plus the image
files they point to.  Labeled records come in subject pairs (one face, one
skull); unlabeled skulls carry no face mate; extended-gallery faces are
distractor identities that only ever appear in galleries.

The synthetic generator builds identity patterns from oriented Gabor-like
components and derives each mated skull by a fixed degradation (blur,
contrast compression toward mid-gray, gradient-magnitude emphasis), so the
two domains share geometry but differ in appearance the same way for every
subject.
"""

from __future__ import annotations

import io
import json
import os
from dataclasses import dataclass

import numpy as np
from PIL import Image
from scipy.ndimage import gaussian_filter, map_coordinates

from .errors import ArgumentError, DataError, ProtocolError
from .serialize import to_json

MODALITIES = ("face", "skull")
PROTOCOLS = ("P1", "P2")
N_FOLDS = 5
CANONICAL_SIZE = 64

REQUIRED_KEYS = ("sample_id", "subject_id", "modality", "path", "labeled")
OPTIONAL_KEYS = ("split_hint", "extended_gallery")


@dataclass(frozen=True)
class ManifestRecord:
    sample_id: str
    subject_id: str
    modality: str
    path: str
    labeled: bool
    split_hint: str | None = None
    extended_gallery: bool = False

    def __post_init__(self):
        for name in ("sample_id", "subject_id", "path"):
            v = getattr(self, name)
            if not isinstance(v, str) or not v:
                raise DataError(f"{name} must be a nonempty string, got {v!r}")
        if self.modality not in MODALITIES:
            raise DataError(f"modality must be one of {MODALITIES}, got {self.modality!r}")
        if not isinstance(self.labeled, bool):
            raise DataError(f"labeled must be a boolean, got {self.labeled!r}")
        if self.split_hint is not None and not isinstance(self.split_hint, str):
            raise DataError("split_hint must be a string when present")
        if not isinstance(self.extended_gallery, bool):
            raise DataError("extended_gallery must be a boolean")


@dataclass(frozen=True)
class AugmentationSpec:
    """Gallery augmentation: optional y-axis flip plus brightness rescales."""

    flip_y: bool = True
    brightness_factors: tuple = (0.8, 1.2)

    def __post_init__(self):
        factors = tuple(float(f) for f in self.brightness_factors)
        if any(f <= 0.0 for f in factors):
            raise ArgumentError("brightness factors must be positive")
        object.__setattr__(self, "brightness_factors", factors)

    @property
    def multiplicity(self) -> int:
        per_orig = 1 + len(self.brightness_factors)
        return per_orig * (2 if self.flip_y else 1)


@dataclass(frozen=True)
class FoldPlan:
    """Seeded five-fold partition of the labeled subjects.

    folds holds per-fold test subject_ids; under P2 extended_gallery lists
    the distractor face sample_ids appended to every fold's gallery.
    """

    protocol: str
    folds: tuple
    extended_gallery: tuple
    seed: int

    def __post_init__(self):
        if self.protocol not in PROTOCOLS:
            raise ArgumentError(f"protocol must be one of {PROTOCOLS}")
        folds = tuple(tuple(f) for f in self.folds)
        all_subjects = [s for f in folds for s in f]
        if len(set(all_subjects)) != len(all_subjects):
            raise ArgumentError("folds must be pairwise disjoint")
        object.__setattr__(self, "folds", folds)
        object.__setattr__(self, "extended_gallery", tuple(self.extended_gallery))


def load_manifest(path) -> list[ManifestRecord]:
    """Read and validate a manifest; image paths are resolved and checked."""
    try:
        with open(path, "r") as fh:
            raw = json.load(fh)
    except OSError as e:
        raise DataError(f"cannot read manifest {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"manifest {path} is not valid JSON: {e}") from e
    if not isinstance(raw, list):
        raise DataError(f"manifest {path} must be a JSON array")

    base = os.path.dirname(os.path.abspath(path))
    records = []
    seen = set()
    for i, entry in enumerate(raw):
        if not isinstance(entry, dict):
            raise DataError(f"manifest entry {i} is not an object")
        missing = [k for k in REQUIRED_KEYS if k not in entry]
        if missing:
            raise DataError(f"manifest entry {i} missing keys {missing}")
        unknown = [k for k in entry if k not in REQUIRED_KEYS + OPTIONAL_KEYS]
        if unknown:
            raise DataError(f"manifest entry {i} has unknown keys {unknown}")
        rec = ManifestRecord(
            sample_id=entry["sample_id"],
            subject_id=entry["subject_id"],
            modality=entry["modality"],
            path=os.path.join(base, entry["path"]),
            labeled=entry["labeled"],
            split_hint=entry.get("split_hint"),
            extended_gallery=entry.get("extended_gallery", False),
        )
        if rec.sample_id in seen:
            raise DataError(f"duplicate sample_id {rec.sample_id!r}")
        seen.add(rec.sample_id)
        if not os.path.isfile(rec.path):
            raise DataError(f"record {rec.sample_id!r}: missing image file {rec.path}")
        records.append(rec)

    check_pairing(records)
    return records


def check_pairing(records) -> None:
    """Every labeled subject must have exactly one face and one skull."""
    by_subject: dict[str, list[ManifestRecord]] = {}
    for r in records:
        if r.labeled:
            by_subject.setdefault(r.subject_id, []).append(r)
    for subject, group in by_subject.items():
        faces = sum(1 for r in group if r.modality == "face")
        skulls = sum(1 for r in group if r.modality == "skull")
        if (faces, skulls) != (1, 1):
            raise DataError(
                f"dangling pair: labeled subject {subject!r} has "
                f"{faces} face and {skulls} skull records (need exactly 1 + 1)"
            )


def labeled_pairs(records) -> list[tuple[ManifestRecord, ManifestRecord]]:
    """(face, skull) record pairs for all labeled subjects, sorted by subject."""
    faces = {r.subject_id: r for r in records if r.labeled and r.modality == "face"}
    skulls = {r.subject_id: r for r in records if r.labeled and r.modality == "skull"}
    return [(faces[s], skulls[s]) for s in sorted(faces) if s in skulls]


def preprocess(data, size: int = CANONICAL_SIZE) -> np.ndarray:
    """Decode to grayscale [0,1], center-crop square, bilinear-resize.

    data may be a file path or raw encoded bytes.  RGB collapses by the luma
    weights 0.299 R + 0.587 G + 0.114 B.  Resizing maps output pixel centers
    to (i + 0.5) * side / size - 0.5 on the crop, so a size-matched input
    passes through unchanged apart from the [0,1] scaling.
    """
    src = io.BytesIO(bytes(data)) if isinstance(data, (bytes, bytearray)) else data
    try:
        with Image.open(src) as im:
            im.load()
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            else:
                rgb = np.asarray(im.convert("RGB"), dtype=np.float64)
                arr = (0.299 * rgb[..., 0] + 0.587 * rgb[..., 1]
                       + 0.114 * rgb[..., 2]) / 255.0
    except (OSError, SyntaxError) as e:
        raise DataError(f"cannot decode image: {e}") from e

    H, W = arr.shape
    side = min(H, W)
    top, left = (H - side) // 2, (W - side) // 2
    crop = arr[top:top + side, left:left + side]

    if side != size:
        c = (np.arange(size) + 0.5) * (side / size) - 0.5
        yy, xx = np.meshgrid(c, c, indexing="ij")
        crop = map_coordinates(crop, [yy, xx], order=1, mode="nearest")
    return np.clip(crop, 0.0, 1.0)


def warp(img, dy: float, dx: float, scale: float = 1.0) -> np.ndarray:
    """Scale about the image center, then shift content by (+dy, +dx).

    Output pixel (y, x) samples the input at ((y - cy)/scale + cy - dy, ...),
    bilinear with replicate borders.
    """
    img = np.asarray(img, dtype=np.float64)
    H, W = img.shape
    if scale == 1.0 and float(dy).is_integer() and float(dx).is_integer():
        ys = np.clip(np.arange(H) - int(dy), 0, H - 1)
        xs = np.clip(np.arange(W) - int(dx), 0, W - 1)
        return img[np.ix_(ys, xs)]
    cy, cx = (H - 1) / 2.0, (W - 1) / 2.0
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    sy = (yy - cy) / scale + cy - dy
    sx = (xx - cx) / scale + cx - dx
    return map_coordinates(img, [sy, sx], order=1, mode="nearest")


def _ncc(a, b) -> float:
    a = a - a.mean()
    b = b - b.mean()
    denom = np.linalg.norm(a) * np.linalg.norm(b)
    if denom < 1e-12:
        return float("-inf")
    return float(np.sum(a * b) / denom)


def estimate_alignment(img, reference, max_shift: int = 2, scales=(1.0,)):
    """Best (dy, dx, scale, ncc) over the exhaustive candidate grid.

    The identity candidate is scored first and replaced only by a strictly
    better correlation, so degenerate inputs fall back to no warp.
    """
    img = np.asarray(img, dtype=np.float64)
    reference = np.asarray(reference, dtype=np.float64)
    if img.shape != reference.shape:
        raise ArgumentError(f"image {img.shape} vs reference {reference.shape}")
    if not 0 <= int(max_shift) <= 8:
        raise ArgumentError("max_shift must be in [0, 8]")
    scales = tuple(float(s) for s in scales)
    if any(not 0.9 <= s <= 1.1 for s in scales):
        raise ArgumentError("scales must lie within [0.9, 1.1]")

    best = (0, 0, 1.0, _ncc(img, reference))
    for s in scales:
        for dy in range(-max_shift, max_shift + 1):
            for dx in range(-max_shift, max_shift + 1):
                if (dy, dx, s) == (0, 0, 1.0):
                    continue
                score = _ncc(warp(img, dy, dx, s), reference)
                if score > best[3]:
                    best = (dy, dx, s, score)
    return best


def register(img, reference, max_shift: int = 2, scales=(1.0,)) -> np.ndarray:
    """Warp img onto the reference by the best-correlated candidate."""
    dy, dx, s, _ = estimate_alignment(img, reference, max_shift, scales)
    return warp(img, dy, dx, s)


def augment(images, spec: AugmentationSpec) -> list[np.ndarray]:
    """Per-image copies in a fixed order: original, flip, brightness scales
    of the original, then brightness scales of the flip."""
    out = []
    for img in images:
        img = np.asarray(img, dtype=np.float64)
        variants = [img.copy()]
        if spec.flip_y:
            variants.append(img[:, ::-1].copy())
        for f in spec.brightness_factors:
            variants.append(np.clip(img * f, 0.0, 1.0))
        if spec.flip_y:
            for f in spec.brightness_factors:
                variants.append(np.clip(img[:, ::-1] * f, 0.0, 1.0))
        out.extend(variants)
    return out


def plan_folds(records, protocol: str, seed: int) -> FoldPlan:
    """Seeded shuffle of the labeled subjects split into five test folds."""
    if protocol not in PROTOCOLS:
        raise ArgumentError(f"protocol must be one of {PROTOCOLS}")
    subjects = sorted({r.subject_id for r in records if r.labeled})
    if len(subjects) < N_FOLDS:
        raise ArgumentError(f"need at least {N_FOLDS} labeled subjects, have {len(subjects)}")
    check_pairing(records)

    order = np.array(subjects, dtype=object)
    np.random.default_rng(seed).shuffle(order)
    folds = tuple(tuple(part.tolist()) for part in np.array_split(order, N_FOLDS))

    extended: tuple = ()
    if protocol == "P2":
        extended = tuple(r.sample_id for r in records
                         if r.extended_gallery and r.modality == "face")
        if not extended:
            raise ProtocolError("P2 requires extended_gallery face records in the manifest")
    return FoldPlan(protocol=protocol, folds=folds, extended_gallery=extended, seed=seed)


def _by_id(records) -> dict[str, ManifestRecord]:
    return {r.sample_id: r for r in records}


def gallery_records(plan: FoldPlan, records, fold: int) -> list[ManifestRecord]:
    """Mated faces of the test fold, plus extended-gallery faces under P2."""
    faces = {r.subject_id: r for r in records if r.labeled and r.modality == "face"}
    out = [faces[s] for s in plan.folds[fold]]
    ids = _by_id(records)
    out.extend(ids[sid] for sid in plan.extended_gallery)
    return out


def probe_records(plan: FoldPlan, records, fold: int) -> list[ManifestRecord]:
    skulls = {r.subject_id: r for r in records if r.labeled and r.modality == "skull"}
    return [skulls[s] for s in plan.folds[fold]]


def training_pairs(plan: FoldPlan, records, fold: int):
    """Labeled (face, skull) pairs from the four non-test folds."""
    held_out = set(plan.folds[fold])
    return [(f, s) for f, s in labeled_pairs(records) if f.subject_id not in held_out]


def unlabeled_skulls(records) -> list[ManifestRecord]:
    return [r for r in records if not r.labeled and r.modality == "skull"]


def plan_to_json(plan: FoldPlan, records) -> str:
    """FoldPlan export: protocol, seed, subject folds, per-fold id lists."""
    payload = {
        "protocol": plan.protocol,
        "seed": plan.seed,
        "folds": [list(f) for f in plan.folds],
        "extended_gallery": list(plan.extended_gallery),
        "fold_details": [
            {
                "gallery": [r.sample_id for r in gallery_records(plan, records, i)],
                "probes": [r.sample_id for r in probe_records(plan, records, i)],
            }
            for i in range(len(plan.folds))
        ],
    }
    return to_json(payload)


def _gabor_pattern(rng: np.random.Generator, size: int = CANONICAL_SIZE) -> np.ndarray:
    yy, xx = np.mgrid[0:size, 0:size].astype(np.float64)
    acc = np.zeros((size, size))
    for _ in range(4):
        theta = rng.uniform(0.0, np.pi)
        freq = rng.uniform(0.06, 0.20)
        phase = rng.uniform(0.0, 2.0 * np.pi)
        cy, cx = rng.uniform(size * 0.2, size * 0.8, size=2)
        sig = rng.uniform(6.0, 14.0)
        amp = rng.uniform(0.5, 1.0)
        u = (xx - cx) * np.cos(theta) + (yy - cy) * np.sin(theta)
        r2 = (xx - cx) ** 2 + (yy - cy) ** 2
        acc += amp * np.exp(-r2 / (2.0 * sig**2)) * np.cos(2.0 * np.pi * freq * u + phase)
    lo, hi = acc.min(), acc.max()
    return (acc - lo) / (hi - lo + 1e-12)


def degrade_to_skull(pattern) -> np.ndarray:
    """Fixed cross-domain appearance gap applied to an identity pattern:
    blur, contrast compression toward mid-gray, and a 50/50 blend with the
    normalized gradient magnitude."""
    blur = gaussian_filter(np.asarray(pattern, dtype=np.float64), sigma=2.0,
                           mode="nearest")
    contrast = 0.5 + 0.5 * (blur - 0.5)
    P = np.pad(blur, 1, mode="edge")
    gy = (P[2:, 1:-1] - P[:-2, 1:-1]) / 2.0
    gx = (P[1:-1, 2:] - P[1:-1, :-2]) / 2.0
    grad = np.hypot(gy, gx)
    grad = grad / (grad.max() + 1e-12)
    return np.clip(0.5 * contrast + 0.5 * grad, 0.0, 1.0)


def synth_paired(n_subjects: int, per_subject_noise: float, seed: int,
                 n_distractors: int = 0):
    """Synthetic two-domain corpus: (records, images keyed by sample_id).

    Per subject: one face (identity pattern plus noise) and one mated skull
    (degraded pattern plus noise).  2 * n_subjects unlabeled skulls come from
    fresh identities; n_distractors extra faces are flagged for the extended
    gallery and belong to fresh identities as well.
    """
    if n_subjects < N_FOLDS:
        raise ArgumentError(f"need at least {N_FOLDS} subjects")
    if per_subject_noise < 0.0:
        raise ArgumentError("noise level must be nonnegative")
    rng = np.random.default_rng(seed)
    records: list[ManifestRecord] = []
    images: dict[str, np.ndarray] = {}

    def noisy(img):
        return np.clip(img + per_subject_noise * rng.standard_normal(img.shape), 0.0, 1.0)

    def add(sample_id, subject_id, modality, labeled, img, extended=False):
        records.append(ManifestRecord(
            sample_id=sample_id, subject_id=subject_id, modality=modality,
            path=f"images/{sample_id}.png", labeled=labeled,
            extended_gallery=extended))
        images[sample_id] = img

    for i in range(n_subjects):
        subject = f"s{i:03d}"
        pattern = _gabor_pattern(rng)
        add(f"face_{subject}", subject, "face", True, noisy(pattern))
        add(f"skull_{subject}", subject, "skull", True, noisy(degrade_to_skull(pattern)))

    for j in range(2 * n_subjects):
        subject = f"u{j:03d}"
        add(f"skull_{subject}", subject, "skull", False,
            noisy(degrade_to_skull(_gabor_pattern(rng))))

    for j in range(n_distractors):
        subject = f"d{j:03d}"
        add(f"face_{subject}", subject, "face", False, noisy(_gabor_pattern(rng)),
            extended=True)

    return records, images


def write_corpus(outdir, records, images) -> str:
    """Write PNGs plus manifest.json; returns the manifest path."""
    outdir = str(outdir)
    os.makedirs(os.path.join(outdir, "images"), exist_ok=True)
    for r in records:
        img = images[r.sample_id]
        data = np.clip(np.round(np.asarray(img) * 255.0), 0, 255).astype(np.uint8)
        Image.fromarray(data, mode="L").save(os.path.join(outdir, r.path))
    entries = []
    for r in records:
        entry = {
            "sample_id": r.sample_id,
            "subject_id": r.subject_id,
            "modality": r.modality,
            "path": r.path,
            "labeled": r.labeled,
        }
        if r.split_hint is not None:
            entry["split_hint"] = r.split_hint
        if r.extended_gallery:
            entry["extended_gallery"] = True
        entries.append(entry)
    manifest_path = os.path.join(outdir, "manifest.json")
    with open(manifest_path, "w") as fh:
        fh.write(to_json(entries) + "\n")
    return manifest_path
