"""Command-line entry points.

Subcommands: synth (generate a paired corpus), folds (plan protocol
splits), extract (dump descriptors), train (fit and save a model), eval
(run a full protocol and emit reports), report (summarize results.json).

Exit codes: 0 success, 2 bad arguments, 3 data or protocol problems,
4 numerical failures.
"""

from __future__ import annotations

import argparse
import json
import sys

import numpy as np

from . import dataset, features, pipeline, serialize
from .coupled import DomainBatch, fit_sstl, fit_ustl
from .dictbase import fit_dictionary
from .errors import ArgumentError, DataError, NumericalError
from .metrics import emit_report, load_report
from .transform import sparse_code

_FEATURE_KINDS = ("pixels", "hog", "lbp", "dsift")
_TRAIN_METHODS = ("ustl", "sstl", "dl")


def _build_parser() -> argparse.ArgumentParser:
    top = argparse.ArgumentParser(prog="skullmatch",
                                  description="skull-to-face identification toolkit")
    sub = top.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate a synthetic paired corpus")
    p.add_argument("--out", required=True, help="output directory")
    p.add_argument("--subjects", type=int, default=35)
    p.add_argument("--noise", type=float, default=0.05)
    p.add_argument("--distractors", type=int, default=0,
                   help="extra extended-gallery faces for P2")
    p.add_argument("--seed", type=int, required=True)

    p = sub.add_parser("folds", help="plan cross-validation folds")
    p.add_argument("--manifest", required=True)
    p.add_argument("--protocol", choices=dataset.PROTOCOLS, default="P1")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", help="write the plan JSON here instead of stdout")

    p = sub.add_parser("extract", help="extract descriptors for every sample")
    p.add_argument("--manifest", required=True)
    p.add_argument("--kind", choices=_FEATURE_KINDS, default="hog")
    p.add_argument("--out", required=True,
                   help=".csv for text output, anything else for binary")

    p = sub.add_parser("train", help="fit a model on a manifest's training data")
    p.add_argument("--manifest", required=True)
    p.add_argument("--method", choices=_TRAIN_METHODS, required=True)
    p.add_argument("--kind", choices=("pixels", "hog"), default="hog")
    p.add_argument("--out", required=True, help="model file path")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--tl-dim", type=int, default=None)
    p.add_argument("--tl-tau", type=int, default=None)
    p.add_argument("--tl-iters", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)

    p = sub.add_parser("eval", help="run a five-fold protocol and emit reports")
    p.add_argument("--manifest", required=True)
    p.add_argument("--protocol", choices=dataset.PROTOCOLS, default="P1")
    p.add_argument("--method", choices=pipeline.METHODS, required=True)
    p.add_argument("--out", required=True, help="report directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--tl-dim", type=int, default=None)
    p.add_argument("--tl-tau", type=int, default=None)
    p.add_argument("--tl-iters", type=int, default=None)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--sup-iters", type=int, default=None)
    p.add_argument("--max-shift", type=int, default=None)

    p = sub.add_parser("report", help="summarize an emitted results.json")
    p.add_argument("--results", required=True, help="path to results.json")
    p.add_argument("--out", help="re-emit the full report set to this directory")

    return top


def _eval_config(args) -> pipeline.EvalConfig:
    overrides = {"seed": args.seed}
    for attr, key in (("tl_dim", "tl_dim"), ("tl_tau", "tl_tau"),
                      ("tl_iters", "tl_iters"), ("gamma", "gamma"),
                      ("sup_iters", "sup_iters"),
                      ("max_shift", "register_max_shift")):
        val = getattr(args, attr, None)
        if val is not None:
            overrides[key] = val
    return pipeline.EvalConfig(**overrides)


def _cmd_synth(args) -> int:
    if args.subjects < dataset.N_FOLDS:
        raise ArgumentError(f"need at least {dataset.N_FOLDS} subjects")
    if args.noise < 0:
        raise ArgumentError("noise must be non-negative")
    records, images = dataset.synth_paired(args.subjects, args.noise, args.seed,
                                           n_distractors=args.distractors)
    manifest = dataset.write_corpus(args.out, records, images)
    print(manifest)
    return 0


def _cmd_folds(args) -> int:
    records = dataset.load_manifest(args.manifest)
    plan = dataset.plan_folds(records, args.protocol, args.seed)
    text = dataset.plan_to_json(plan, records)
    if args.out:
        try:
            with open(args.out, "w", newline="\n") as fh:
                fh.write(text + "\n")
        except OSError as e:
            raise DataError(f"cannot write {args.out}: {e}") from e
        print(args.out)
    else:
        print(text)
    return 0


def _cmd_extract(args) -> int:
    records = dataset.load_manifest(args.manifest)
    images = pipeline.load_images(records)
    ids = [r.sample_id for r in records]
    F = features.batch_extract([images[i] for i in ids],
                               features.FeatureConfig(kind=args.kind))
    if args.out.endswith(".csv"):
        serialize.export_features_csv(args.out, F, ids)
    else:
        serialize.save_feature_matrix(args.out, F)
    print(f"{args.out}: {F.shape[0]} features x {F.shape[1]} samples")
    return 0


def _cmd_train(args) -> int:
    records = dataset.load_manifest(args.manifest)
    images = pipeline.load_images(records)
    pairs = dataset.labeled_pairs(records)
    if not pairs:
        raise DataError("manifest has no labeled face-skull pairs")
    unlab = dataset.unlabeled_skulls(records)
    cfg = _eval_config(args)
    fcfg = features.FeatureConfig(kind=args.kind)
    F_faces = features.batch_extract([images[f.sample_id] for f, _ in pairs], fcfg)
    F_skulls = features.batch_extract([images[s.sample_id] for _, s in pairs], fcfg)
    if args.kind == "pixels":
        F_faces = pipeline.normalize_columns(F_faces)
        F_skulls = pipeline.normalize_columns(F_skulls)
    if unlab:
        F_unlab = features.batch_extract([images[r.sample_id] for r in unlab], fcfg)
        if args.kind == "pixels":
            F_unlab = pipeline.normalize_columns(F_unlab)
        F_skull_all = np.column_stack([F_unlab, F_skulls])
    else:
        F_skull_all = F_skulls

    if args.method == "dl":
        k = min(cfg.dl_atoms, F_faces.shape[1])
        s = min(cfg.dl_sparsity, k, F_faces.shape[0])
        dico = fit_dictionary(F_faces, k=k, s=s, iters=cfg.dl_iters, seed=args.seed)
        serialize.save_dictionary(args.out, dico)
        print(args.out)
        return 0

    proj = pipeline.fit_domain_projection(F_faces, F_skull_all, cfg.tl_dim)
    X_f = proj.faces(F_faces)
    X_s = proj.skulls(F_skull_all)
    params = pipeline._transform_params(cfg, proj.dim, X_f, X_s)
    if args.method == "ustl":
        model = fit_ustl(X_f, X_s, params)
    else:
        rho = cfg.rho
        if rho is None:
            warm = fit_ustl(X_f, X_s, params)
            Z_f = sparse_code(warm.T_f, X_f, params.tau)
            rho = cfg.rho_scale * float(np.trace(Z_f @ Z_f.T)) / proj.dim
        model = fit_sstl(DomainBatch(X_f, X_s),
                         DomainBatch(X_f, proj.skulls(F_skulls), paired=True),
                         params, gamma=cfg.gamma, rho=max(rho, 1e-12),
                         sup_iters=cfg.sup_iters)
    serialize.save_coupled(args.out, model)
    proj_path = args.out + ".projection.json"
    payload = {
        "kind": args.kind,
        "mean_face": proj.mean_face[:, 0].tolist(),
        "mean_skull": proj.mean_skull[:, 0].tolist(),
        "components": proj.components.tolist(),
        "scale": proj.scale,
    }
    try:
        with open(proj_path, "w", newline="\n") as fh:
            fh.write(serialize.to_json(payload) + "\n")
    except OSError as e:
        raise DataError(f"cannot write {proj_path}: {e}") from e
    print(args.out)
    print(proj_path)
    return 0


def _cmd_eval(args) -> int:
    records = dataset.load_manifest(args.manifest)
    images = pipeline.load_images(records)
    cfg = _eval_config(args)
    report = pipeline.run_protocol(records, images, args.protocol, args.method, cfg)
    paths = emit_report(report, args.out)
    print(f"mean rank-1 {report.mean_rank1:.2f}%  mean rank-5 {report.mean_rank5:.2f}%")
    print(paths["results"])
    return 0


def _cmd_report(args) -> int:
    report = load_report(args.results)
    cfg = report.config_echo
    print(f"protocol {cfg.get('protocol', '?')}  method {cfg.get('method', '?')}  "
          f"seed {cfg.get('seed', '?')}")
    print(f"mean rank-1 {report.mean_rank1:.2f}%  mean rank-5 {report.mean_rank5:.2f}%")
    for i, fr in enumerate(report.per_fold):
        acc = fr.rank_accuracies
        r1 = 100.0 * acc[0]
        r5 = 100.0 * acc[min(4, len(acc) - 1)]
        print(f"fold {i + 1}: rank-1 {r1:6.2f}%  rank-5 {r5:6.2f}%  "
              f"({len(fr.genuine_scores)} genuine / {len(fr.impostor_scores)} impostor)")
    if args.out:
        paths = emit_report(report, args.out)
        print(paths["results"])
    return 0


_COMMANDS = {
    "synth": _cmd_synth,
    "folds": _cmd_folds,
    "extract": _cmd_extract,
    "train": _cmd_train,
    "eval": _cmd_eval,
    "report": _cmd_report,
}


def main(argv=None) -> int:
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
        return _COMMANDS[args.command](args)
    except ArgumentError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except NumericalError as e:
        print(f"numerical failure: {e}", file=sys.stderr)
        return 4
    except DataError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3
    except json.JSONDecodeError as e:
        print(f"data error: {e}", file=sys.stderr)
        return 3


def entry() -> None:
    raise SystemExit(main())


if __name__ == "__main__":
    entry()
