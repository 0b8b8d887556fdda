"""Sparsifying transform learning.

Learns a square analysis transform T such that T X is approximately
sparse, by alternating minimization of

    min_{T,Z} ||T X - Z||_F^2 + lambda * (eps * ||T||_F^2 - log|det T|)
    s.t. each column of Z has at most tau nonzeros,

where X is d x n with one sample per column.  The Frobenius penalty
balances the scale of T and the log-determinant keeps it away from
degenerate (rank-deficient) solutions.  Both alternation steps are exact
minimizers:

  * Z-step: hard-threshold T X to the tau largest magnitudes per column.
  * T-step: closed form via a symmetric factorization of X X^T + lambda*eps*I
    and an SVD (see :func:`update_transform`).

The sparsity budget tau is applied per column, so samples are coded
independently and the Z-step stays separable.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.linalg import solve_triangular

from .errors import ArgumentError, NumericalError

__all__ = [
    "TransformParams",
    "TransformModel",
    "objective",
    "sparse_code",
    "update_transform",
    "fit_transform",
    "encode",
]


@dataclass(frozen=True)
class TransformParams:
    """Hyperparameters of a transform fit.

    lam       weight of the regularizer (eps*||T||_F^2 - log|det T|)
    eps       scale-balance weight inside the regularizer
    tau       per-column sparsity budget, 1 <= tau <= d
    max_iters cap on alternation rounds
    tol       stop when |obj_k - obj_{k-1}| < tol * (1 + |obj_{k-1}|)
    seed      rng seed, used only by the random initialization
    init      "identity" or "random" (seeded random orthonormal)
    """

    lam: float
    eps: float
    tau: int
    max_iters: int = 50
    tol: float = 1e-6
    seed: int = 0
    init: str = "identity"

    def __post_init__(self):
        if self.lam < 0:
            raise ArgumentError("lam must be nonnegative")
        if self.eps <= 0:
            raise ArgumentError("eps must be positive")
        if self.tau < 1:
            raise ArgumentError("tau must be a positive integer")
        if self.max_iters < 1:
            raise ArgumentError("max_iters must be a positive integer")
        if self.tol <= 0:
            raise ArgumentError("tol must be positive")
        if self.init not in ("identity", "random"):
            raise ArgumentError(f"unknown init {self.init!r}")


@dataclass(frozen=True)
class TransformModel:
    """A fitted transform: square matrix T plus the fit diagnostics."""

    T: np.ndarray
    params: TransformParams
    objective_trace: list = field(default_factory=list)

    @property
    def dim(self) -> int:
        return self.T.shape[0]


def _as_matrix(X, name: str) -> np.ndarray:
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ArgumentError(f"{name} must be a 2-d array, got shape {X.shape}")
    if not np.all(np.isfinite(X)):
        raise ArgumentError(f"{name} contains non-finite entries")
    return X


def objective(T, X, Z, lam: float, eps: float) -> float:
    """Evaluate ||T X - Z||_F^2 + lam * (eps * ||T||_F^2 - log|det T|).

    The log-determinant is taken of |det T| so the value stays defined for
    negative-determinant transforms reachable during iteration.  Raises
    :class:`NumericalError` when T is singular.
    """
    T = _as_matrix(T, "T")
    X = _as_matrix(X, "X")
    Z = _as_matrix(Z, "Z")
    d = T.shape[0]
    if T.shape != (d, d):
        raise ArgumentError(f"T must be square, got {T.shape}")
    if X.shape[0] != d or Z.shape != X.shape:
        raise ArgumentError(
            f"dimension mismatch: T {T.shape}, X {X.shape}, Z {Z.shape}"
        )
    sign, logabsdet = np.linalg.slogdet(T)
    if sign == 0 or not np.isfinite(logabsdet):
        raise NumericalError("log-det undefined: T is singular")
    resid = T @ X - Z
    value = float(
        np.sum(resid * resid) + lam * (eps * np.sum(T * T) - logabsdet)
    )
    if not np.isfinite(value):
        raise NumericalError("objective is not finite")
    return value


def sparse_code(T, X, tau: int) -> np.ndarray:
    """Exact Z-step: keep the tau largest-magnitude entries of each column of T X.

    Ties are broken by retaining the lowest row index, which makes the
    output deterministic.  This is the exact minimizer of ||T X - Z||_F^2
    under the per-column budget.
    """
    T = _as_matrix(T, "T")
    X = _as_matrix(X, "X")
    if T.shape[1] != X.shape[0]:
        raise ArgumentError(f"T {T.shape} and X {X.shape} do not align")
    d = T.shape[0]
    tau = int(tau)
    if tau < 1 or tau > d:
        raise ArgumentError(f"tau must satisfy 1 <= tau <= d={d}, got {tau}")
    TX = T @ X
    if tau == d:
        return TX
    # Stable sort on -|.| keeps the lowest row index first among ties.
    order = np.argsort(-np.abs(TX), axis=0, kind="stable")
    Z = np.zeros_like(TX)
    cols = np.arange(TX.shape[1])
    keep = order[:tau, :]
    Z[keep, cols] = TX[keep, cols]
    return Z


def update_transform(X, Z, lam: float, eps: float) -> np.ndarray:
    """Closed-form T-step.

    Returns the global minimizer of

        ||T X - Z||_F^2 + lam * (eps * ||T||_F^2 - log|det T|)

    over square T.  With A = X X^T + lam*eps*I = L L^T and the full SVD
    L^{-1} X Z^T = Q S R^T, the minimizer is

        T = 0.5 * R (S + (S^2 + 2*lam*I)^{1/2}) Q^T L^{-1}.

    Any factor L with L L^T = A yields the same T; Cholesky is used here.
    Requires lam > 0 (the closed form degenerates otherwise) and eps > 0.
    """
    X = _as_matrix(X, "X")
    Z = _as_matrix(Z, "Z")
    if X.shape != Z.shape:
        raise ArgumentError(f"X {X.shape} and Z {Z.shape} must have equal shapes")
    if lam <= 0:
        raise ArgumentError("closed form requires lam > 0")
    if eps <= 0:
        raise ArgumentError("eps must be positive")
    d = X.shape[0]
    A = X @ X.T + (lam * eps) * np.eye(d)
    try:
        L = np.linalg.cholesky(A)
    except np.linalg.LinAlgError as exc:  # pragma: no cover - lam*eps>0 guards this
        raise NumericalError("X X^T + lam*eps*I is not positive definite") from exc
    M = solve_triangular(L, X @ Z.T, lower=True)
    Q, sig, Rt = np.linalg.svd(M)
    gamma = 0.5 * (sig + np.sqrt(sig * sig + 2.0 * lam))
    core = (Rt.T * gamma) @ Q.T
    # T = core @ L^{-1}  <=>  L^T T^T = core^T
    T = solve_triangular(L, core.T, lower=True, trans="T").T
    return T


def _initial_transform(d: int, params: TransformParams) -> np.ndarray:
    if params.init == "identity":
        return np.eye(d)
    rng = np.random.default_rng(params.seed)
    Q, _ = np.linalg.qr(rng.standard_normal((d, d)))
    return Q


def fit_transform(X, params: TransformParams, T_init=None) -> TransformModel:
    """Alternate the exact Z- and T-steps until the objective stalls.

    The trace records the objective of the coherent state (T, Z) with
    Z = sparse_code(T, X, tau): entry 0 at initialization, then one entry
    per completed round.  Both substeps are exact minimizers, so the trace
    is non-increasing up to floating-point rounding.
    """
    X = _as_matrix(X, "X")
    d, n = X.shape
    if n < 1:
        raise ArgumentError("X must contain at least one column")
    if params.tau > d:
        raise ArgumentError(f"tau={params.tau} exceeds feature dimension d={d}")
    if T_init is not None:
        T = _as_matrix(T_init, "T_init").copy()
        if T.shape != (d, d):
            raise ArgumentError(f"T_init must be {d}x{d}, got {T.shape}")
    else:
        T = _initial_transform(d, params)

    Z = sparse_code(T, X, params.tau)
    trace = [objective(T, X, Z, params.lam, params.eps)]
    for _ in range(params.max_iters):
        T = update_transform(X, Z, params.lam, params.eps)
        Z = sparse_code(T, X, params.tau)
        value = objective(T, X, Z, params.lam, params.eps)
        trace.append(value)
        if abs(trace[-2] - value) < params.tol * (1.0 + abs(trace[-2])):
            break
    return TransformModel(T=T, params=params, objective_trace=trace)


def encode(model: TransformModel, X) -> np.ndarray:
    """Code new samples with a fitted model: sparse_code(model.T, X, tau)."""
    X = _as_matrix(X, "X")
    if X.shape[0] != model.dim:
        raise ArgumentError(
            f"X has {X.shape[0]} rows but the model expects {model.dim}"
        )
    return sparse_code(model.T, X, model.params.tau)
