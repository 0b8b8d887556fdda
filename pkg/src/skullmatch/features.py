"""Feature extraction front ends: raw pixels, HOG, LBP, dense SIFT.

All extractors take a 2-d grayscale image with values in [0, 1] and return a
1-d float64 descriptor.  Descriptor length is a deterministic function of the
config and the image size, and every extractor is pure: identical input gives
bit-identical output.

Gradients everywhere use central differences with replicate borders, i.e. the
image is edge-padded by one pixel and g = (I[.+1] - I[.-1]) / 2 on the padded
array.  Histogram-style descriptors use linear interpolation between adjacent
bins (circular for orientations) so mass varies continuously with the input.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError

NORM_GUARD = 1e-12


@dataclass(frozen=True)
class HogConfig:
    """Histogram-of-oriented-gradients parameters (unsigned orientations)."""

    cell_size: int = 8
    block: int = 2
    block_stride: int = 1
    bins: int = 9
    l2_clip: float = 0.2

    def __post_init__(self):
        for name in ("cell_size", "block", "block_stride", "bins"):
            if int(getattr(self, name)) <= 0:
                raise ArgumentError(f"{name} must be positive")
        if not 0.0 < self.l2_clip <= 1.0:
            raise ArgumentError(f"l2_clip must be in (0, 1], got {self.l2_clip}")


@dataclass(frozen=True)
class LbpConfig:
    """Local-binary-pattern parameters: 8 neighbors on a radius-1 circle."""

    radius: float = 1.0
    neighbors: int = 8
    grid: int = 8

    def __post_init__(self):
        if self.radius <= 0:
            raise ArgumentError("radius must be positive")
        if self.neighbors != 8:
            raise ArgumentError("only 8-neighbor codes are supported")
        if self.grid <= 0:
            raise ArgumentError("grid must be positive")


@dataclass(frozen=True)
class DsiftConfig:
    """Dense-SIFT parameters: 4x4 spatial bins times 8 orientations = 128-d."""

    step: int = 8
    patch: int = 16
    spatial_bins: int = 4
    orient_bins: int = 8
    l2_clip: float = 0.2

    def __post_init__(self):
        for name in ("step", "patch", "spatial_bins", "orient_bins"):
            if int(getattr(self, name)) <= 0:
                raise ArgumentError(f"{name} must be positive")
        if self.patch % self.spatial_bins != 0:
            raise ArgumentError("patch must be a multiple of spatial_bins")
        if not 0.0 < self.l2_clip <= 1.0:
            raise ArgumentError(f"l2_clip must be in (0, 1], got {self.l2_clip}")


KINDS = ("pixels", "hog", "lbp", "dsift")


@dataclass(frozen=True)
class FeatureConfig:
    """Which extractor to run, plus its parameters.

    standardize toggles per-feature zero-mean unit-variance scaling inside
    batch_extract; statistics come from the batch itself unless the caller
    passes stats fitted on a training split.
    """

    kind: str = "pixels"
    standardize: bool = False
    hog: HogConfig = field(default_factory=HogConfig)
    lbp: LbpConfig = field(default_factory=LbpConfig)
    dsift: DsiftConfig = field(default_factory=DsiftConfig)

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ArgumentError(f"kind must be one of {KINDS}, got {self.kind!r}")


@dataclass(frozen=True)
class FeatureStats:
    """Per-feature mean and standard deviation, fitted on a training matrix."""

    mean: np.ndarray
    std: np.ndarray


def _as_image(img) -> np.ndarray:
    img = np.asarray(img, dtype=np.float64)
    if img.ndim != 2:
        raise ArgumentError(f"image must be 2-d, got shape {img.shape}")
    if not np.all(np.isfinite(img)):
        raise ArgumentError("image contains non-finite values")
    if img.size and (img.min() < 0.0 or img.max() > 1.0):
        raise ArgumentError("image values must lie in [0, 1]")
    return img


def gradients(img) -> tuple[np.ndarray, np.ndarray]:
    """Central-difference gradients (gy, gx) with replicate borders."""
    img = _as_image(img)
    P = np.pad(img, 1, mode="edge")
    gy = (P[2:, 1:-1] - P[:-2, 1:-1]) / 2.0
    gx = (P[1:-1, 2:] - P[1:-1, :-2]) / 2.0
    return gy, gx


def _orientation_split(theta, n_bins: int, period: float):
    # circular linear interpolation: each angle feeds its two nearest bin
    # centers k * period / n_bins
    t = np.mod(theta, period) * (n_bins / period)
    k0 = np.floor(t).astype(np.intp)
    frac = t - k0
    k0 = np.mod(k0, n_bins)
    k1 = np.mod(k0 + 1, n_bins)
    return k0, k1, frac


def _l2_clip_renorm(v, clip: float) -> np.ndarray:
    v = v / (np.linalg.norm(v) + NORM_GUARD)
    v = np.minimum(v, clip)
    return v / (np.linalg.norm(v) + NORM_GUARD)


def extract_pixels(img) -> np.ndarray:
    """Row-major flattening of the image, values unchanged."""
    return _as_image(img).ravel().copy()


def hog_length(cfg: HogConfig, shape) -> int:
    H, W = shape
    cy, cx = H // cfg.cell_size, W // cfg.cell_size
    by = (cy - cfg.block) // cfg.block_stride + 1
    bx = (cx - cfg.block) // cfg.block_stride + 1
    return by * bx * cfg.block * cfg.block * cfg.bins


def extract_hog(img, cfg: HogConfig | None = None) -> np.ndarray:
    """Unsigned-orientation HOG with per-block L2 normalization.

    Blocks of block x block cells slide with the configured stride; each block
    vector is L2-normalized, clipped at l2_clip, renormalized, and the blocks
    are concatenated in row-major order.  64x64 with defaults gives
    7 * 7 * 4 * 9 = 1764 entries.
    """
    if cfg is None:
        cfg = HogConfig()
    img = _as_image(img)
    H, W = img.shape
    cy, cx = H // cfg.cell_size, W // cfg.cell_size
    if cy < cfg.block or cx < cfg.block:
        raise ArgumentError(
            f"image {img.shape} smaller than one {cfg.block}x{cfg.block} block "
            f"of {cfg.cell_size}px cells"
        )
    Hc, Wc = cy * cfg.cell_size, cx * cfg.cell_size
    gy, gx = gradients(img[:Hc, :Wc])
    mag = np.hypot(gy, gx)
    theta = np.arctan2(gy, gx)
    k0, k1, frac = _orientation_split(theta, cfg.bins, np.pi)

    cell_y = (np.arange(Hc) // cfg.cell_size)[:, None] * np.ones(Wc, dtype=np.intp)
    cell_x = np.ones((Hc, 1), dtype=np.intp) * (np.arange(Wc) // cfg.cell_size)[None, :]
    hist = np.zeros((cy, cx, cfg.bins))
    np.add.at(hist, (cell_y.ravel(), cell_x.ravel(), k0.ravel()),
              (mag * (1.0 - frac)).ravel())
    np.add.at(hist, (cell_y.ravel(), cell_x.ravel(), k1.ravel()),
              (mag * frac).ravel())

    blocks = []
    for by in range(0, cy - cfg.block + 1, cfg.block_stride):
        for bx in range(0, cx - cfg.block + 1, cfg.block_stride):
            v = hist[by:by + cfg.block, bx:bx + cfg.block, :].ravel()
            blocks.append(_l2_clip_renorm(v, cfg.l2_clip))
    return np.concatenate(blocks)


def _bilinear_sample(img, ys, xs) -> np.ndarray:
    # replicate-border bilinear lookup at fractional coordinates
    H, W = img.shape
    ys = np.clip(ys, 0.0, H - 1.0)
    xs = np.clip(xs, 0.0, W - 1.0)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, H - 1)
    x1 = np.minimum(x0 + 1, W - 1)
    wy = ys - y0
    wx = xs - x0
    # nested lerp form: exact (no rounding drift) when the four corners agree
    top = img[y0, x0] + wx * (img[y0, x1] - img[y0, x0])
    bot = img[y1, x0] + wx * (img[y1, x1] - img[y1, x0])
    return top + wy * (bot - top)


def _neighbor_offsets(cfg: LbpConfig) -> np.ndarray:
    # neighbor k sits at angle 2 pi k / 8 on the circle, k = 0 pointing right,
    # angles increasing toward increasing row index; near-integer offsets are
    # snapped so cardinal neighbors are exact lookups
    k = np.arange(cfg.neighbors)
    ang = 2.0 * np.pi * k / cfg.neighbors
    offs = np.stack([cfg.radius * np.sin(ang), cfg.radius * np.cos(ang)], axis=1)
    snapped = np.round(offs)
    offs = np.where(np.abs(offs - snapped) < 1e-9, snapped, offs)
    return offs


def lbp_codes(img, cfg: LbpConfig | None = None) -> np.ndarray:
    """Per-pixel 8-bit codes: bit k set when neighbor k >= center."""
    if cfg is None:
        cfg = LbpConfig()
    img = _as_image(img)
    H, W = img.shape
    yy, xx = np.mgrid[0:H, 0:W].astype(np.float64)
    codes = np.zeros((H, W), dtype=np.intp)
    for k, (dy, dx) in enumerate(_neighbor_offsets(cfg)):
        nb = _bilinear_sample(img, yy + dy, xx + dx)
        codes |= (nb >= img).astype(np.intp) << k
    return codes


def lbp_length(cfg: LbpConfig) -> int:
    return cfg.grid * cfg.grid * 256


def extract_lbp(img, cfg: LbpConfig | None = None) -> np.ndarray:
    """Cell-wise 256-bin LBP histograms, each L1-normalized, concatenated."""
    if cfg is None:
        cfg = LbpConfig()
    img = _as_image(img)
    H, W = img.shape
    if H < cfg.grid or W < cfg.grid:
        raise ArgumentError(f"image {img.shape} cannot cover a {cfg.grid}x{cfg.grid} grid")
    codes = lbp_codes(img, cfg)
    # cell boundaries by even split; trailing remainder pixels join the last cell
    y_edges = (np.arange(cfg.grid + 1) * H) // cfg.grid
    x_edges = (np.arange(cfg.grid + 1) * W) // cfg.grid
    out = []
    for i in range(cfg.grid):
        for j in range(cfg.grid):
            cell = codes[y_edges[i]:y_edges[i + 1], x_edges[j]:x_edges[j + 1]]
            h = np.bincount(cell.ravel(), minlength=256).astype(np.float64)
            out.append(h / cell.size)
    return np.concatenate(out)


def dsift_grid(cfg: DsiftConfig, shape) -> tuple[int, int]:
    H, W = shape
    if cfg.patch > H or cfg.patch > W:
        raise ArgumentError(f"patch {cfg.patch} larger than image {shape}")
    return (H - cfg.patch) // cfg.step + 1, (W - cfg.patch) // cfg.step + 1


def dsift_length(cfg: DsiftConfig, shape) -> int:
    gy, gx = dsift_grid(cfg, shape)
    return gy * gx * cfg.spatial_bins * cfg.spatial_bins * cfg.orient_bins


def _spatial_weights(cfg: DsiftConfig) -> np.ndarray:
    # rows: patch pixels (row-major), cols: spatial bins (row-major); Gaussian
    # window folded in, sigma = patch / 2 centered mid-patch
    p, nb = cfg.patch, cfg.spatial_bins
    side = p // nb
    coords = np.arange(p, dtype=np.float64)
    u = (coords + 0.5) / side - 0.5
    b0 = np.floor(u).astype(np.intp)
    frac = u - b0
    w1d = np.zeros((p, nb))
    for i in range(p):
        if 0 <= b0[i] < nb:
            w1d[i, b0[i]] += 1.0 - frac[i]
        if 0 <= b0[i] + 1 < nb:
            w1d[i, b0[i] + 1] += frac[i]
    sigma = p / 2.0
    g = np.exp(-((coords - (p - 1) / 2.0) ** 2) / (2.0 * sigma**2))
    # separable Gaussian: one factor per axis
    w = w1d * g[:, None]
    S = np.einsum("ia,jb->ijab", w, w)
    return S.reshape(p * p, nb * nb)


def extract_dsift(img, cfg: DsiftConfig | None = None) -> np.ndarray:
    """Dense SIFT on a fixed grid, descriptors concatenated row-major.

    Each patch yields a spatial_bins^2 x orient_bins descriptor built from
    Gaussian-weighted gradient magnitudes with bilinear spatial and circular
    orientation interpolation, then L2-normalized with clipping at l2_clip
    and renormalization.  64x64 with defaults gives 7 * 7 * 128 = 6272.
    """
    if cfg is None:
        cfg = DsiftConfig()
    img = _as_image(img)
    ny, nx = dsift_grid(cfg, img.shape)
    gy, gx = gradients(img)
    mag = np.hypot(gy, gx)
    theta = np.arctan2(gy, gx)
    k0, k1, frac = _orientation_split(theta, cfg.orient_bins, 2.0 * np.pi)
    w0 = mag * (1.0 - frac)
    w1 = mag * frac

    S = _spatial_weights(cfg)
    p = cfg.patch
    n_spatial = cfg.spatial_bins * cfg.spatial_bins
    n_orient = cfg.orient_bins
    rows = np.arange(p * p)
    out = np.empty((ny, nx, n_spatial * n_orient))
    for iy in range(ny):
        for ix in range(nx):
            y0, x0 = iy * cfg.step, ix * cfg.step
            sl = np.s_[y0:y0 + p, x0:x0 + p]
            O = np.zeros((p * p, n_orient))
            O[rows, k0[sl].ravel()] = w0[sl].ravel()
            np.add.at(O, (rows, k1[sl].ravel()), w1[sl].ravel())
            desc = (S.T @ O).ravel()
            out[iy, ix] = _l2_clip_renorm(desc, cfg.l2_clip)
    return out.ravel()


_EXTRACTORS = {
    "pixels": lambda img, cfg: extract_pixels(img),
    "hog": lambda img, cfg: extract_hog(img, cfg.hog),
    "lbp": lambda img, cfg: extract_lbp(img, cfg.lbp),
    "dsift": lambda img, cfg: extract_dsift(img, cfg.dsift),
}


def feature_stats(F) -> FeatureStats:
    F = np.asarray(F, dtype=np.float64)
    return FeatureStats(mean=F.mean(axis=1), std=F.std(axis=1))


def apply_stats(F, stats: FeatureStats) -> np.ndarray:
    F = np.asarray(F, dtype=np.float64)
    return (F - stats.mean[:, None]) / (stats.std[:, None] + NORM_GUARD)


def batch_extract(images, cfg: FeatureConfig, stats: FeatureStats | None = None):
    """Extract one descriptor per image and stack them as matrix columns.

    With cfg.standardize, features are shifted and scaled per row; the
    statistics default to this batch but a training-split FeatureStats can be
    supplied so probe batches reuse training moments.
    """
    if not isinstance(cfg, FeatureConfig):
        raise ArgumentError("batch_extract needs a FeatureConfig")
    images = list(images)
    if not images:
        raise ArgumentError("no images to extract")
    shapes = {np.asarray(im).shape for im in images}
    if len(shapes) != 1:
        raise ArgumentError(f"mixed image sizes: {sorted(shapes)}")
    extract = _EXTRACTORS[cfg.kind]
    F = np.column_stack([extract(im, cfg) for im in images])
    if cfg.standardize:
        F = apply_stats(F, stats if stats is not None else feature_stats(F))
    return F
