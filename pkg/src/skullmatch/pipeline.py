"""Five-fold skull-to-face identification runs.

One run fixes a protocol (P1 closed gallery, P2 distractor-extended), a
method, and an EvalConfig, then loops over the folds: register every image
to the fold's mean training face, augment the gallery copies, extract
features, fit whatever the method learns on training-side data only, score
probes against the gallery, and fuse per identity.  Distractor faces never
enter any fit, so extending the gallery can only remove rank-1 hits.

Feature handling per method family:
  raw        pixels / hog / lbp / dsift matched by Euclidean distance;
             pixel vectors are centered and scaled per sample first since
             they carry no built-in photometric normalization
  dl         OMP codes over a dictionary fitted to training-fold face
             descriptors, matched by Euclidean distance
  ustl/sstl  per-sample normalization, per-domain centering, a joint
             principal subspace shared by both domains, then learned
             sparsifying transforms; codes matched per the coupled model

Everything is seeded and closed-form, so a rerun writes byte-identical
reports.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import cdist

from . import dataset, features, metrics
from .coupled import DomainBatch, MatchScoreMatrix, fit_sstl, fit_ustl, match
from .dataset import AugmentationSpec, N_FOLDS
from .dictbase import dl_features, fit_dictionary
from .errors import ArgumentError, DataError, SkullMatchError
from .transform import TransformParams, sparse_code

METHODS = (
    "pixels", "hog", "lbp", "dsift", "dl",
    "ustl_pixels", "sstl_pixels", "ustl_hog", "sstl_hog",
)

# method -> (feature kind, model family); the dictionary baseline codes
# gradient-orientation descriptors, which keep OMP support selection stable
# across the two domains
_METHOD_PLAN = {
    "pixels": ("pixels", "raw"),
    "hog": ("hog", "raw"),
    "lbp": ("lbp", "raw"),
    "dsift": ("dsift", "raw"),
    "dl": ("hog", "dl"),
    "ustl_pixels": ("pixels", "ustl"),
    "sstl_pixels": ("pixels", "sstl"),
    "ustl_hog": ("hog", "ustl"),
    "sstl_hog": ("hog", "sstl"),
}


@dataclass(frozen=True)
class EvalConfig:
    """Run parameters; defaults are tuned for 64x64 corpora.

    tl_lam scales with the energy of the projected training matrix at fit
    time so the transform penalty tracks corpus size.  rho (the ridge of
    the cross-domain map) defaults to rho_scale times the mean row energy
    of the warm-start face codes; heavy shrinkage is deliberate because W
    is solved from few labeled pairs.
    """

    seed: int = 0
    register_max_shift: int = 2
    register_scales: tuple = (1.0,)
    augment: AugmentationSpec = field(default_factory=AugmentationSpec)
    tl_dim: int = 48
    tl_lam: float = 5e-3
    tl_eps: float = 1.0
    tl_tau: int = 40
    tl_iters: int = 30
    tl_tol: float = 1e-6
    gamma: float = 4.0
    rho: float | None = None
    rho_scale: float = 0.5
    sup_iters: int = 3
    dl_atoms: int = 24
    dl_sparsity: int = 8
    dl_iters: int = 15

    def __post_init__(self):
        object.__setattr__(self, "register_scales",
                           tuple(float(s) for s in self.register_scales))
        if self.tl_dim < 1:
            raise ArgumentError("tl_dim must be positive")
        if not isinstance(self.augment, AugmentationSpec):
            raise ArgumentError("augment must be an AugmentationSpec")


def _plain(obj):
    """JSON-plain copy: dataclasses and tuples become dicts and lists."""
    if dataclasses.is_dataclass(obj) and not isinstance(obj, type):
        return {f.name: _plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: _plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_plain(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer)):
        return obj.item()
    return obj


def config_echo(config: EvalConfig, protocol: str, method: str) -> dict:
    return {"protocol": protocol, "method": method, "seed": config.seed,
            "n_folds": N_FOLDS, "config": _plain(config)}


def load_images(records) -> dict:
    """Decode and preprocess every record's file, keyed by sample id."""
    return {r.sample_id: dataset.preprocess(r.path) for r in records}


class _Stage:
    """Context manager that prefixes escaping toolkit errors with the
    pipeline stage, preserving the error type and exit-code mapping."""

    def __init__(self, name: str):
        self.name = name

    def __enter__(self):
        return self

    def __exit__(self, exc_type, exc, tb):
        if exc is not None and isinstance(exc, SkullMatchError):
            raise type(exc)(f"[{self.name}] {exc}") from exc
        return False


def normalize_columns(F) -> np.ndarray:
    """Center each column and scale it to unit Euclidean norm."""
    F = np.asarray(F, dtype=np.float64)
    F = F - F.mean(axis=0, keepdims=True)
    return F / np.maximum(np.linalg.norm(F, axis=0, keepdims=True), 1e-12)


# ---------------------------------------------------------------------------
# shared linear projection for the transform methods

@dataclass(frozen=True)
class DomainProjection:
    """Joint principal subspace with per-domain centering.

    The face and skull training clouds are centered at their own means, a
    single basis is fitted to the pooled centered data (component signs
    pinned so the fit is BLAS-order independent), and projected vectors are
    rescaled to unit RMS then re-normalized per sample.  Both domains land
    in one coordinate system with their first-order offset removed.
    """

    mean_face: np.ndarray
    mean_skull: np.ndarray
    components: np.ndarray
    scale: float

    @property
    def dim(self) -> int:
        return self.components.shape[0]

    def faces(self, F) -> np.ndarray:
        return self._project(F, self.mean_face)

    def skulls(self, F) -> np.ndarray:
        return self._project(F, self.mean_skull)

    def _project(self, F, mean) -> np.ndarray:
        Y = self.components @ (normalize_columns(F) - mean) / self.scale
        return normalize_columns(Y)


def fit_domain_projection(F_faces, F_skulls, dim: int) -> DomainProjection:
    Ff = normalize_columns(F_faces)
    Fs = normalize_columns(F_skulls)
    if Ff.shape[1] < 2 or Fs.shape[1] < 2:
        raise ArgumentError("projection needs >= 2 columns per domain")
    mf = Ff.mean(axis=1, keepdims=True)
    ms = Fs.mean(axis=1, keepdims=True)
    C = np.column_stack([Ff - mf, Fs - ms])
    U, s, _ = np.linalg.svd(C, full_matrices=False)
    rank = int(np.sum(s > 1e-10 * max(s[0], 1e-300)))
    dim = max(1, min(dim, rank, C.shape[0], C.shape[1] - 1))
    comps = U[:, :dim].T.copy()
    for row in comps:
        peak = np.argmax(np.abs(row))
        if row[peak] < 0:
            row *= -1.0
    scale = float(np.sqrt(np.mean((comps @ C) ** 2)))
    return DomainProjection(mean_face=mf, mean_skull=ms, components=comps,
                            scale=max(scale, 1e-12))


# ---------------------------------------------------------------------------
# per-fold data

class _FoldData:
    """Registered images for one fold, gallery already augmented."""

    def __init__(self, plan, records, images, fold: int, config: EvalConfig):
        pairs = dataset.training_pairs(plan, records, fold)
        if not pairs:
            raise DataError(f"fold {fold} has no training pairs")
        gal = dataset.gallery_records(plan, records, fold)
        probes = dataset.probe_records(plan, records, fold)
        unlab = dataset.unlabeled_skulls(records)

        def img(rec):
            try:
                return images[rec.sample_id]
            except KeyError:
                raise DataError(f"no image for sample {rec.sample_id!r}") from None

        reference = np.mean([img(f) for f, _ in pairs], axis=0)

        def reg(rec):
            return dataset.register(img(rec), reference,
                                    max_shift=config.register_max_shift,
                                    scales=config.register_scales)

        self.train_faces = [reg(f) for f, _ in pairs]
        self.train_skulls = [reg(s) for _, s in pairs]
        self.unlabeled = [reg(r) for r in unlab]
        gallery_base = [reg(r) for r in gal]
        self.gallery_images = dataset.augment(gallery_base, config.augment)
        mult = config.augment.multiplicity
        self.gallery_ids = [r.subject_id for r in gal for _ in range(mult)]
        self.probe_images = [reg(r) for r in probes]
        self.probe_ids = [r.subject_id for r in probes]

    def extract(self, kind: str) -> dict:
        cfg = features.FeatureConfig(kind=kind)
        groups = {
            "train_faces": self.train_faces,
            "train_skulls": self.train_skulls,
            "gallery": self.gallery_images,
            "probe": self.probe_images,
        }
        out = {name: features.batch_extract(imgs, cfg)
               for name, imgs in groups.items()}
        out["unlabeled"] = (features.batch_extract(self.unlabeled, cfg)
                            if self.unlabeled else
                            np.empty((out["probe"].shape[0], 0)))
        if kind == "pixels":
            # raw intensities carry no photometric normalization of their
            # own, so remove per-sample brightness and contrast here
            out = {name: normalize_columns(F) if F.size else F
                   for name, F in out.items()}
        return out


def _skull_stack(feats: dict) -> np.ndarray:
    return np.column_stack([feats["unlabeled"], feats["train_skulls"]])


def _transform_params(config: EvalConfig, dim: int, X_f, X_s) -> TransformParams:
    energy = 0.5 * (float(np.sum(X_f * X_f)) + float(np.sum(X_s * X_s)))
    return TransformParams(
        lam=config.tl_lam * max(energy, 1e-12),
        eps=config.tl_eps,
        tau=min(config.tl_tau, dim),
        max_iters=config.tl_iters,
        tol=config.tl_tol,
        seed=config.seed,
    )


def _score_fold(fold_data: _FoldData, feats: dict, family: str,
                config: EvalConfig) -> MatchScoreMatrix:
    F_gal, F_probe = feats["gallery"], feats["probe"]
    if family == "raw":
        scores = cdist(F_probe.T, F_gal.T, metric="euclidean")
        return MatchScoreMatrix(scores, fold_data.probe_ids, fold_data.gallery_ids)

    if family == "dl":
        X = feats["train_faces"]
        k = min(config.dl_atoms, X.shape[1])
        s = min(config.dl_sparsity, k, X.shape[0])
        dico = fit_dictionary(X, k=k, s=s, iters=config.dl_iters, seed=config.seed)
        Z_gal = dl_features(dico, F_gal)
        Z_probe = dl_features(dico, F_probe)
        scores = cdist(Z_probe.T, Z_gal.T, metric="euclidean")
        return MatchScoreMatrix(scores, fold_data.probe_ids, fold_data.gallery_ids)

    proj = fit_domain_projection(feats["train_faces"], _skull_stack(feats),
                                 config.tl_dim)
    X_f = proj.faces(feats["train_faces"])
    X_s = proj.skulls(_skull_stack(feats))
    params = _transform_params(config, proj.dim, X_f, X_s)
    if family == "ustl":
        model = fit_ustl(X_f, X_s, params)
    elif family == "sstl":
        X_s_lab = proj.skulls(feats["train_skulls"])
        rho = config.rho
        if rho is None:
            # ridge for W from the warm-start face codes; the semi-
            # supervised fit recomputes the same warm start internally
            warm = fit_ustl(X_f, X_s, params)
            Z_f = sparse_code(warm.T_f, X_f, params.tau)
            rho = config.rho_scale * float(np.trace(Z_f @ Z_f.T)) / proj.dim
        model = fit_sstl(DomainBatch(X_f, X_s),
                         DomainBatch(X_f, X_s_lab, paired=True),
                         params, gamma=config.gamma, rho=max(rho, 1e-12),
                         sup_iters=config.sup_iters)
    else:
        raise ArgumentError(f"unknown model family {family!r}")
    return match(model, proj.faces(F_gal), proj.skulls(F_probe),
                 gallery_ids=fold_data.gallery_ids,
                 probe_ids=fold_data.probe_ids)


def _fold_result(fold_data: _FoldData, feats: dict, family: str,
                 config: EvalConfig) -> metrics.FoldResult:
    with _Stage("score"):
        M = _score_fold(fold_data, feats, family, config)
    with _Stage("metrics"):
        fused = metrics.fuse_scores(M)
        rankings = metrics.identify(M, fusion="min_per_identity")
        acc = metrics.cmc(rankings, fold_data.probe_ids)
        genuine, impostor = metrics.score_split(fused, fold_data.probe_ids)
    return metrics.FoldResult(tuple(acc), tuple(genuine), tuple(impostor))


# ---------------------------------------------------------------------------
# entry points

def run_protocols(records, images, protocol: str, methods,
                  config: EvalConfig | None = None) -> dict:
    """Evaluate several methods over the same folds, sharing registration
    and feature extraction.  Returns {method: EvalReport}."""
    config = config or EvalConfig()
    methods = list(methods)
    for m in methods:
        if m not in _METHOD_PLAN:
            raise ArgumentError(f"unknown method {m!r}; choose from {METHODS}")
    with _Stage("folds"):
        plan = dataset.plan_folds(records, protocol, config.seed)
    per_method = {m: [] for m in methods}
    for fold in range(len(plan.folds)):
        with _Stage(f"fold {fold} data"):
            fold_data = _FoldData(plan, records, images, fold, config)
        kind_feats: dict = {}
        for m in methods:
            kind, family = _METHOD_PLAN[m]
            if kind not in kind_feats:
                with _Stage(f"fold {fold} features {kind}"):
                    kind_feats[kind] = fold_data.extract(kind)
            with _Stage(f"fold {fold} {m}"):
                per_method[m].append(
                    _fold_result(fold_data, kind_feats[kind], family, config))
    return {m: metrics.build_report(per_method[m], config_echo(config, protocol, m))
            for m in methods}


def run_protocol(records, images, protocol: str, method: str,
                 config: EvalConfig | None = None) -> metrics.EvalReport:
    """Evaluate one method under one protocol; see run_protocols."""
    return run_protocols(records, images, protocol, [method], config)[method]
