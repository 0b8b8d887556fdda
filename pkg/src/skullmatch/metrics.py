"""Identification metrics and report emission.

Scores are probe-by-gallery Euclidean distances.  Galleries may contain
several entries per identity (augmented copies, under the same gallery id);
min_per_identity fusion collapses them to the identity's best distance
before ranking.  Ties rank in lexicographic gallery-id order so results are
total-ordered and reproducible.

Reports serialize deterministically: floats at 17 significant digits, keys
in fixed insertion order, so a rerun with the same inputs is byte-identical.
"""

from __future__ import annotations

import os
from dataclasses import dataclass

import numpy as np

from .coupled import MatchScoreMatrix
from .errors import ArgumentError, DataError, ProtocolError
from .serialize import format_float, to_json

FUSIONS = ("none", "min_per_identity")


def fuse_scores(scores: MatchScoreMatrix) -> MatchScoreMatrix:
    """Collapse duplicate gallery ids to their per-probe minimum distance.

    Fused columns are in sorted id order; a matrix with unique ids comes
    back with identical values (columns re-sorted)."""
    ids = list(scores.gallery_ids)
    uniq = sorted(set(ids))
    cols = {u: [] for u in uniq}
    for j, g in enumerate(ids):
        cols[g].append(j)
    fused = np.column_stack([scores.scores[:, cols[u]].min(axis=1) for u in uniq])
    return MatchScoreMatrix(fused, list(scores.probe_ids), uniq)


def identify(scores: MatchScoreMatrix, fusion: str = "min_per_identity"):
    """Per-probe gallery ids sorted by ascending distance.

    Ties break lexicographically on the gallery id.  With min_per_identity
    fusion the ranked lists contain each identity once.
    """
    if fusion not in FUSIONS:
        raise ArgumentError(f"fusion must be one of {FUSIONS}")
    if len(scores.gallery_ids) == 0:
        raise ArgumentError("empty gallery")
    if not np.all(np.isfinite(scores.scores)):
        raise ArgumentError("scores contain non-finite values")
    M = fuse_scores(scores) if fusion == "min_per_identity" else scores
    ids = list(M.gallery_ids)
    rankings = []
    for row in M.scores:
        order = sorted(range(len(ids)), key=lambda j: (row[j], ids[j]))
        rankings.append([ids[j] for j in order])
    return rankings


def cmc(rankings, true_ids) -> np.ndarray:
    """Cumulative match curve: entry r-1 = fraction of probes whose true
    identity appears within the top r ranks."""
    if len(rankings) != len(true_ids):
        raise ArgumentError(f"{len(rankings)} rankings for {len(true_ids)} probes")
    if not rankings:
        raise ArgumentError("no probes")
    depth = len(rankings[0])
    if any(len(r) != depth for r in rankings):
        raise ArgumentError("rankings have mixed depths")
    hits = np.zeros(depth)
    for ranked, true in zip(rankings, true_ids):
        try:
            pos = ranked.index(true)
        except ValueError:
            raise ProtocolError(f"mated identity {true!r} missing from gallery") from None
        hits[pos] += 1
    return np.cumsum(hits) / len(rankings)


def score_split(scores: MatchScoreMatrix, true_ids):
    """Genuine (mated) and impostor (non-mated) distance lists.

    Expects an identity-level matrix (one column per gallery identity, fuse
    first when augmented); counts satisfy genuine + impostor = probes x
    gallery identities.
    """
    if len(true_ids) != len(scores.probe_ids):
        raise ArgumentError(f"{len(true_ids)} labels for {len(scores.probe_ids)} probes")
    col = {g: j for j, g in enumerate(scores.gallery_ids)}
    if len(col) != len(scores.gallery_ids):
        raise ArgumentError("duplicate gallery ids; fuse before splitting scores")
    genuine, impostor = [], []
    for i, true in enumerate(true_ids):
        if true not in col:
            raise ProtocolError(f"mated identity {true!r} missing from gallery")
        for j in range(len(scores.gallery_ids)):
            (genuine if j == col[true] else impostor).append(float(scores.scores[i, j]))
    return genuine, impostor


@dataclass(frozen=True)
class FoldResult:
    rank_accuracies: tuple
    genuine_scores: tuple
    impostor_scores: tuple

    def __post_init__(self):
        acc = tuple(float(v) for v in self.rank_accuracies)
        if any(b < a - 1e-12 for a, b in zip(acc, acc[1:])):
            raise ArgumentError("rank accuracies must be non-decreasing")
        if acc and abs(acc[-1] - 1.0) > 1e-12:
            raise ArgumentError("terminal rank accuracy must be 1.0")
        object.__setattr__(self, "rank_accuracies", acc)
        object.__setattr__(self, "genuine_scores",
                           tuple(float(v) for v in self.genuine_scores))
        object.__setattr__(self, "impostor_scores",
                           tuple(float(v) for v in self.impostor_scores))


@dataclass(frozen=True)
class EvalReport:
    """Five-fold evaluation summary: per-fold CMC vectors and score lists,
    fold-averaged rank-1/rank-5 percentages, and the full configuration."""

    per_fold: tuple
    mean_rank1: float
    mean_rank5: float
    config_echo: dict

    def __post_init__(self):
        object.__setattr__(self, "per_fold", tuple(self.per_fold))
        for v in (self.mean_rank1, self.mean_rank5):
            if not 0.0 <= v <= 100.0:
                raise ArgumentError(f"mean rank accuracy {v} outside [0, 100]")


def rank_percent(fold_results, rank: int) -> float:
    """Fold-averaged accuracy (percent) at the given 1-based rank; folds
    shorter than the rank contribute their terminal value."""
    vals = []
    for fr in fold_results:
        acc = fr.rank_accuracies
        vals.append(acc[min(rank, len(acc)) - 1])
    return 100.0 * float(np.mean(vals))


def build_report(fold_results, config_echo: dict) -> EvalReport:
    fold_results = tuple(fold_results)
    return EvalReport(
        per_fold=fold_results,
        mean_rank1=rank_percent(fold_results, 1),
        mean_rank5=rank_percent(fold_results, 5),
        config_echo=dict(config_echo),
    )


def report_to_obj(report: EvalReport) -> dict:
    return {
        "mean_rank1": report.mean_rank1,
        "mean_rank5": report.mean_rank5,
        "config": report.config_echo,
        "per_fold": [
            {
                "rank_accuracies": list(fr.rank_accuracies),
                "genuine_scores": list(fr.genuine_scores),
                "impostor_scores": list(fr.impostor_scores),
            }
            for fr in report.per_fold
        ],
    }


def report_from_obj(obj: dict) -> EvalReport:
    folds = tuple(
        FoldResult(
            rank_accuracies=tuple(f["rank_accuracies"]),
            genuine_scores=tuple(f["genuine_scores"]),
            impostor_scores=tuple(f["impostor_scores"]),
        )
        for f in obj["per_fold"]
    )
    return EvalReport(per_fold=folds, mean_rank1=float(obj["mean_rank1"]),
                      mean_rank5=float(obj["mean_rank5"]),
                      config_echo=obj["config"])


def load_report(path) -> EvalReport:
    import json

    try:
        with open(path, "r") as fh:
            obj = json.load(fh)
    except OSError as e:
        raise DataError(f"cannot read report {path}: {e}") from e
    except json.JSONDecodeError as e:
        raise DataError(f"report {path} is not valid JSON: {e}") from e
    try:
        return report_from_obj(obj)
    except (KeyError, TypeError) as e:
        raise DataError(f"report {path} has unexpected structure: {e}") from e


def emit_report(report: EvalReport, out_dir) -> dict:
    """Write results.json, cmc.csv, scores.csv, runconfig.json.

    cmc.csv has one row per rank up to the deepest fold (short folds leave
    blanks, the mean averages the folds present); scores.csv lists fold-major
    genuine then impostor values.  Returns the written paths.
    """
    out_dir = str(out_dir)
    try:
        os.makedirs(out_dir, exist_ok=True)
        paths = {
            "results": os.path.join(out_dir, "results.json"),
            "cmc": os.path.join(out_dir, "cmc.csv"),
            "scores": os.path.join(out_dir, "scores.csv"),
            "runconfig": os.path.join(out_dir, "runconfig.json"),
        }
        with open(paths["results"], "w", newline="\n") as fh:
            fh.write(to_json(report_to_obj(report)) + "\n")

        depth = max(len(fr.rank_accuracies) for fr in report.per_fold)
        with open(paths["cmc"], "w", newline="\n") as fh:
            folds = [f"fold_{i + 1}" for i in range(len(report.per_fold))]
            fh.write(",".join(["rank"] + folds + ["mean"]) + "\n")
            for r in range(depth):
                cells = [str(r + 1)]
                present = []
                for fr in report.per_fold:
                    if r < len(fr.rank_accuracies):
                        v = fr.rank_accuracies[r]
                        cells.append(format_float(v))
                        present.append(v)
                    else:
                        cells.append("")
                cells.append(format_float(float(np.mean(present))))
                fh.write(",".join(cells) + "\n")

        with open(paths["scores"], "w", newline="\n") as fh:
            fh.write("label,value\n")
            for fr in report.per_fold:
                for v in fr.genuine_scores:
                    fh.write(f"genuine,{format_float(v)}\n")
                for v in fr.impostor_scores:
                    fh.write(f"impostor,{format_float(v)}\n")

        with open(paths["runconfig"], "w", newline="\n") as fh:
            fh.write(to_json(report.config_echo) + "\n")
    except OSError as e:
        raise DataError(f"cannot write report under {out_dir}: {e}") from e
    return paths
