"""Two-domain matching on top of transform learning.

Two matchers are provided for pairing a probe domain (skull images)
against a gallery domain (face images):

  * Unsupervised: one transform per domain, fitted independently on
    unlabeled corpora; the skull fit is warm-started from the converged
    face transform.  Matching is the Euclidean distance between the two
    sparse codes.

  * Semi-supervised: the two single-domain objectives are joined with a
    coupling term gamma * ||W Z_f - Z_s||_F^2 that learns a linear map W
    aligning face codes to skull codes on labeled pairs.  Training starts
    from the unsupervised solution with W = all-ones and cycles through
    coupled sparse coding of both domains, the closed-form transform
    updates, and a ridge solve for W.  The coding step is a ridge solve
    followed by hard thresholding (exact only when tau = d), so the joint
    objective is guarded: a cycle that raises it beyond rounding rolls
    back and stops.

Matching with gamma = 0 falls back to the plain Euclidean rule, which
makes every coupled operation bitwise-equivalent to its single-domain
counterpart in that limit.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve
from scipy.spatial.distance import cdist

from .errors import ArgumentError, NumericalError
from .transform import (
    TransformModel,
    TransformParams,
    _as_matrix,
    fit_transform,
    objective,
    sparse_code,
    update_transform,
)

__all__ = [
    "DomainBatch",
    "CoupledModel",
    "MatchScoreMatrix",
    "fit_ustl",
    "joint_objective",
    "update_W",
    "coupled_sparse_code_f",
    "coupled_sparse_code_s",
    "fit_sstl",
    "match",
]

# Tolerated relative rise of the joint objective before a cycle rolls back.
ROLLBACK_SLACK = 1e-6


@dataclass(frozen=True)
class DomainBatch:
    """Face and skull feature matrices, optionally in column-wise pairs."""

    X_f: np.ndarray
    X_s: np.ndarray
    paired: bool = False

    def __post_init__(self):
        X_f = _as_matrix(self.X_f, "X_f")
        X_s = _as_matrix(self.X_s, "X_s")
        object.__setattr__(self, "X_f", X_f)
        object.__setattr__(self, "X_s", X_s)
        if X_f.shape[0] != X_s.shape[0]:
            raise ArgumentError(
                f"face and skull feature dimensions differ: {X_f.shape[0]} vs {X_s.shape[0]}"
            )
        if self.paired and X_f.shape[1] != X_s.shape[1]:
            raise ArgumentError(
                "paired batch needs equal column counts, "
                f"got {X_f.shape[1]} and {X_s.shape[1]}"
            )

    @property
    def pair_index(self):
        """Identity pairing: column i of X_f mates column i of X_s."""
        return list(range(self.X_f.shape[1])) if self.paired else None


@dataclass(frozen=True)
class CoupledModel:
    """Pair of domain transforms plus the coupling map W.

    gamma = 0 marks an unsupervised model: W is the all-ones placeholder
    and scoring ignores it.
    """

    face: TransformModel
    skull: TransformModel
    W: np.ndarray
    gamma: float
    rho: float
    joint_trace: list = field(default_factory=list)

    def __post_init__(self):
        if self.face.dim != self.skull.dim:
            raise ArgumentError("face and skull transforms must share a dimension")
        W = _as_matrix(self.W, "W")
        if W.shape != (self.face.dim, self.face.dim):
            raise ArgumentError(f"W must be {self.face.dim}x{self.face.dim}")
        object.__setattr__(self, "W", W)

    @property
    def T_f(self) -> np.ndarray:
        return self.face.T

    @property
    def T_s(self) -> np.ndarray:
        return self.skull.T

    @property
    def params(self) -> TransformParams:
        return self.face.params


@dataclass(frozen=True)
class MatchScoreMatrix:
    """Probe-by-gallery Euclidean distances; lower is better."""

    scores: np.ndarray
    probe_ids: list
    gallery_ids: list

    def __post_init__(self):
        S = _as_matrix(self.scores, "scores")
        object.__setattr__(self, "scores", S)
        if S.shape != (len(self.probe_ids), len(self.gallery_ids)):
            raise ArgumentError(
                f"score matrix {S.shape} does not match "
                f"{len(self.probe_ids)} probes x {len(self.gallery_ids)} gallery entries"
            )


def fit_ustl(
    unlabeled_faces, unlabeled_skulls, params: TransformParams
) -> CoupledModel:
    """Fit the unsupervised two-domain model.

    The face transform is learned first; the skull fit is initialized from
    it so both domains start from the same sparsifying basis.  The
    returned model has gamma = 0 and an all-ones W placeholder.
    """
    X_f = _as_matrix(unlabeled_faces, "unlabeled_faces")
    X_s = _as_matrix(unlabeled_skulls, "unlabeled_skulls")
    if X_f.shape[0] != X_s.shape[0]:
        raise ArgumentError(
            f"face and skull feature dimensions differ: {X_f.shape[0]} vs {X_s.shape[0]}"
        )
    face = fit_transform(X_f, params)
    skull = fit_transform(X_s, params, T_init=face.T)
    d = face.dim
    return CoupledModel(
        face=face,
        skull=skull,
        W=np.ones((d, d)),
        gamma=0.0,
        rho=0.0,
        joint_trace=[],
    )


def joint_objective(model: CoupledModel, batch: DomainBatch, Z_f, Z_s) -> float:
    """Joint objective over a paired batch.

    Sum of the two single-domain objectives plus the coupling term
    gamma * ||W Z_f - Z_s||_F^2.
    """
    if not batch.paired:
        raise ArgumentError("joint objective requires a paired batch")
    Z_f = _as_matrix(Z_f, "Z_f")
    Z_s = _as_matrix(Z_s, "Z_s")
    lam, eps = model.params.lam, model.params.eps
    value = objective(model.T_f, batch.X_f, Z_f, lam, eps)
    value += objective(model.T_s, batch.X_s, Z_s, lam, eps)
    if model.gamma != 0.0:
        resid = model.W @ Z_f - Z_s
        value += model.gamma * float(np.sum(resid * resid))
    return value


def update_W(Z_f, Z_s, rho: float) -> np.ndarray:
    """Ridge least-squares coupling update.

    Minimizes ||W Z_f - Z_s||_F^2 + rho * ||W||_F^2, i.e.
    W = Z_s Z_f^T (Z_f Z_f^T + rho I)^{-1}.  With rho = 0 the normal
    equations must be nonsingular.
    """
    Z_f = _as_matrix(Z_f, "Z_f")
    Z_s = _as_matrix(Z_s, "Z_s")
    if Z_f.shape[1] != Z_s.shape[1]:
        raise ArgumentError("Z_f and Z_s must have equal column counts")
    if rho < 0:
        raise ArgumentError("rho must be nonnegative")
    d = Z_f.shape[0]
    G = Z_f @ Z_f.T + rho * np.eye(d)
    try:
        cf = cho_factor(G, lower=True)
    except np.linalg.LinAlgError as exc:
        raise NumericalError("singular normal equations; increase rho") from exc
    # W G = Z_s Z_f^T  <=>  G W^T = Z_f Z_s^T (G symmetric)
    W = cho_solve(cf, Z_f @ Z_s.T).T
    if not np.all(np.isfinite(W)):
        raise NumericalError("singular normal equations; increase rho")
    return W


def _threshold_columns(V: np.ndarray, tau: int) -> np.ndarray:
    d = V.shape[0]
    if tau == d:
        return V
    order = np.argsort(-np.abs(V), axis=0, kind="stable")
    Z = np.zeros_like(V)
    cols = np.arange(V.shape[1])
    keep = order[:tau, :]
    Z[keep, cols] = V[keep, cols]
    return Z


def coupled_sparse_code_f(T_f, X_f, Z_s, W, gamma: float, tau: int) -> np.ndarray:
    """Face-side coding under the coupling term.

    Per column solves (I + gamma W^T W) z = T_f x + gamma W^T z_s, then
    hard-thresholds to the tau largest magnitudes.  Exact when tau = d;
    with gamma = 0 this short-circuits to the plain sparse coder.
    """
    if gamma < 0:
        raise ArgumentError("gamma must be nonnegative")
    if gamma == 0.0:
        return sparse_code(T_f, X_f, tau)
    T_f = _as_matrix(T_f, "T_f")
    X_f = _as_matrix(X_f, "X_f")
    Z_s = _as_matrix(Z_s, "Z_s")
    W = _as_matrix(W, "W")
    d = T_f.shape[0]
    tau = int(tau)
    if tau < 1 or tau > d:
        raise ArgumentError(f"tau must satisfy 1 <= tau <= d={d}")
    A = np.eye(d) + gamma * (W.T @ W)
    B = T_f @ X_f + gamma * (W.T @ Z_s)
    V = np.linalg.solve(A, B)
    return _threshold_columns(V, tau)


def coupled_sparse_code_s(T_s, X_s, Z_f, W, gamma: float, tau: int) -> np.ndarray:
    """Skull-side coding: ridge target (T_s x + gamma W z_f) / (1 + gamma)."""
    if gamma < 0:
        raise ArgumentError("gamma must be nonnegative")
    if gamma == 0.0:
        return sparse_code(T_s, X_s, tau)
    T_s = _as_matrix(T_s, "T_s")
    X_s = _as_matrix(X_s, "X_s")
    Z_f = _as_matrix(Z_f, "Z_f")
    W = _as_matrix(W, "W")
    d = T_s.shape[0]
    tau = int(tau)
    if tau < 1 or tau > d:
        raise ArgumentError(f"tau must satisfy 1 <= tau <= d={d}")
    V = (T_s @ X_s + gamma * (W @ Z_f)) / (1.0 + gamma)
    return _threshold_columns(V, tau)


def default_rho(Z_f, d: int) -> float:
    """Ridge stabilizer scaled to the code energy: 1e-6 * tr(Z_f Z_f^T) / d."""
    Z_f = np.asarray(Z_f, dtype=np.float64)
    return 1e-6 * float(np.sum(Z_f * Z_f)) / d


def fit_sstl(
    unlabeled: DomainBatch,
    labeled: DomainBatch,
    params: TransformParams,
    gamma: float = 1.0,
    rho: Optional[float] = None,
    sup_iters: int = 10,
) -> CoupledModel:
    """Semi-supervised fit: unsupervised warm start, then coupled refinement.

    Step 1 fits the unsupervised model on the unlabeled batch.  Step 2
    initializes W with ones.  Step 3 runs up to ``sup_iters`` cycles on
    the labeled pairs; each cycle codes both domains under the coupling,
    applies the closed-form transform updates, and re-solves W.  The
    joint objective is recorded after every completed cycle
    (joint_trace[0] is the starting value); a cycle that raises it by more
    than ROLLBACK_SLACK relative rolls back and stops.

    With gamma = 0 the W update is skipped (W stays all-ones) and the
    cycles reduce exactly to independent single-domain alternation on the
    labeled data.  ``rho`` defaults to 1e-6 * tr(Z_f Z_f^T) / d computed
    from the initial labeled face codes.
    """
    if not labeled.paired:
        raise ArgumentError("labeled batch must be paired")
    if gamma < 0:
        raise ArgumentError("gamma must be nonnegative")
    if sup_iters < 0:
        raise ArgumentError("sup_iters must be nonnegative")
    if unlabeled.X_f.shape[0] != labeled.X_f.shape[0]:
        raise ArgumentError("unlabeled and labeled feature dimensions differ")

    base = fit_ustl(unlabeled.X_f, unlabeled.X_s, params)
    d = base.face.dim
    lam, eps, tau = params.lam, params.eps, params.tau

    T_f, T_s = base.T_f, base.T_s
    W = np.ones((d, d))
    X_f, X_s = labeled.X_f, labeled.X_s
    Z_f = sparse_code(T_f, X_f, tau)
    Z_s = sparse_code(T_s, X_s, tau)
    if rho is None:
        rho = default_rho(Z_f, d)

    def state_model(T_f, T_s, W, trace):
        return CoupledModel(
            face=TransformModel(T=T_f, params=params,
                                objective_trace=list(base.face.objective_trace)),
            skull=TransformModel(T=T_s, params=params,
                                 objective_trace=list(base.skull.objective_trace)),
            W=W,
            gamma=gamma,
            rho=rho,
            joint_trace=trace,
        )

    trace = [joint_objective(state_model(T_f, T_s, W, []), labeled, Z_f, Z_s)]
    for _ in range(sup_iters):
        prev = (T_f, T_s, W, Z_f, Z_s)
        Z_f = coupled_sparse_code_f(T_f, X_f, Z_s, W, gamma, tau)
        Z_s = coupled_sparse_code_s(T_s, X_s, Z_f, W, gamma, tau)
        T_f = update_transform(X_f, Z_f, lam, eps)
        T_s = update_transform(X_s, Z_s, lam, eps)
        if gamma > 0.0:
            W = update_W(Z_f, Z_s, rho)
        value = joint_objective(state_model(T_f, T_s, W, []), labeled, Z_f, Z_s)
        if value > trace[-1] + ROLLBACK_SLACK * (1.0 + abs(trace[-1])):
            T_f, T_s, W, Z_f, Z_s = prev
            break
        trace.append(value)
    return state_model(T_f, T_s, W, trace)


def match(
    model: CoupledModel,
    gallery_faces,
    probe_skulls,
    gallery_ids: Optional[Sequence] = None,
    probe_ids: Optional[Sequence] = None,
) -> MatchScoreMatrix:
    """Score probe skulls against gallery faces.

    Both sides are coded with their domain transform.  Unsupervised models
    (gamma = 0) use score(i, j) = ||Z_s[:, i] - Z_f[:, j]||_2; supervised
    models score in the aligned space, ||Z_s[:, i] - (W Z_f)[:, j]||_2.
    """
    G = _as_matrix(gallery_faces, "gallery_faces")
    P = _as_matrix(probe_skulls, "probe_skulls")
    d = model.face.dim
    if G.shape[0] != d or P.shape[0] != d:
        raise ArgumentError(
            f"feature dimension mismatch: model is {d}-dimensional, "
            f"gallery has {G.shape[0]} rows, probes have {P.shape[0]}"
        )
    Z_f = sparse_code(model.T_f, G, model.params.tau)
    Z_s = sparse_code(model.T_s, P, model.params.tau)
    if model.gamma != 0.0:
        Z_f = model.W @ Z_f
    scores = cdist(Z_s.T, Z_f.T, metric="euclidean")
    if gallery_ids is None:
        gallery_ids = [str(j) for j in range(G.shape[1])]
    if probe_ids is None:
        probe_ids = [str(i) for i in range(P.shape[1])]
    return MatchScoreMatrix(
        scores=scores, probe_ids=list(probe_ids), gallery_ids=list(gallery_ids)
    )
