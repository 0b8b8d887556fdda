"""Cross-domain skull-to-face identification toolkit.

Learns sparsifying transforms over face and skull image descriptors,
optionally coupled through a learned code-space mapping, and evaluates
closed-set identification under five-fold protocols with an extended
gallery variant.  Baselines: raw descriptors (pixels, hog, lbp, dsift)
and a sparse dictionary coder.
"""

from .coupled import (CoupledModel, DomainBatch, MatchScoreMatrix,
                      fit_sstl, fit_ustl, joint_objective, match, update_W)
from .dataset import (AugmentationSpec, FoldPlan, ManifestRecord, augment,
                      labeled_pairs, load_manifest, plan_folds, plan_to_json,
                      preprocess, register, synth_paired, training_pairs,
                      unlabeled_skulls, write_corpus)
from .dictbase import dl_features, fit_dictionary, omp
from .errors import (ArgumentError, DataError, NumericalError, ProtocolError,
                     SkullMatchError)
from .features import (FeatureConfig, batch_extract, extract_dsift,
                       extract_hog, extract_lbp, extract_pixels)
from .metrics import (EvalReport, FoldResult, build_report, cmc, emit_report,
                      fuse_scores, identify, load_report, score_split)
from .pipeline import (EvalConfig, METHODS, run_protocol, run_protocols)
from .serialize import (load_coupled, load_dictionary, load_feature_matrix,
                        load_transform, save_coupled, save_dictionary,
                        save_feature_matrix, save_transform, to_json)
from .transform import (TransformModel, TransformParams, encode,
                        fit_transform, objective, sparse_code,
                        update_transform)

__version__ = "0.1.0"

__all__ = [
    "ArgumentError", "AugmentationSpec", "CoupledModel", "DataError",
    "DomainBatch", "EvalConfig", "EvalReport", "FeatureConfig", "FoldPlan",
    "FoldResult", "METHODS", "ManifestRecord", "MatchScoreMatrix",
    "NumericalError", "ProtocolError", "SkullMatchError", "TransformModel",
    "TransformParams", "augment", "batch_extract", "build_report", "cmc",
    "dl_features", "emit_report", "encode", "extract_dsift", "extract_hog",
    "extract_lbp", "extract_pixels", "fit_dictionary",
    "fit_sstl", "fit_transform", "fit_ustl", "fuse_scores", "identify",
    "joint_objective", "labeled_pairs", "load_coupled", "load_dictionary",
    "load_feature_matrix", "load_manifest", "load_report", "load_transform",
    "match", "objective", "omp", "plan_folds", "plan_to_json", "preprocess",
    "register", "run_protocol", "run_protocols", "save_coupled",
    "save_dictionary", "save_feature_matrix", "save_transform", "score_split",
    "sparse_code", "synth_paired", "to_json", "training_pairs",
    "unlabeled_skulls", "update_W", "update_transform", "write_corpus",
]
