"""Dictionary-learning baseline: OMP sparse coding plus alternating fits.

The dictionary is a d x k matrix of unit-norm atoms.  Coding is orthogonal
matching pursuit with a least-squares refit on the growing support, so the
residual stays orthogonal to every selected atom.  Fitting alternates full
OMP coding with a ridge-stabilized least-squares dictionary update followed
by column renormalization; dead atoms are replaced by the worst-reconstructed
training column so the atom count never effectively shrinks.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ArgumentError, NumericalError

RIDGE = 1e-8


@dataclass(frozen=True)
class Dictionary:
    """Unit-column atom matrix plus the sparsity budget used for coding."""

    D: np.ndarray
    sparsity: int
    train_error_trace: list = field(default_factory=list)

    def __post_init__(self):
        D = np.asarray(self.D, dtype=np.float64)
        if D.ndim != 2 or D.shape[1] < 1:
            raise ArgumentError(f"dictionary must be d x k with k >= 1, got {D.shape}")
        if not np.all(np.isfinite(D)):
            raise ArgumentError("dictionary contains non-finite entries")
        norms = np.linalg.norm(D, axis=0)
        if np.any(np.abs(norms - 1.0) > 1e-9):
            raise ArgumentError("dictionary columns must have unit L2 norm")
        s = int(self.sparsity)
        if not 1 <= s <= min(D.shape):
            raise ArgumentError(
                f"sparsity {s} out of range for a {D.shape[0]}x{D.shape[1]} dictionary"
            )
        object.__setattr__(self, "D", D)
        object.__setattr__(self, "sparsity", s)

    @property
    def n_atoms(self) -> int:
        return self.D.shape[1]


def _omp_column(D: np.ndarray, x: np.ndarray, s: int) -> np.ndarray:
    k = D.shape[1]
    z = np.zeros(k)
    r = x.astype(np.float64, copy=True)
    x_norm = np.linalg.norm(x)
    if x_norm == 0.0:
        return z
    support: list[int] = []
    for _ in range(s):
        if np.linalg.norm(r) <= 1e-12 * x_norm:
            break
        corr = np.abs(D.T @ r)
        corr[support] = -1.0
        j = int(np.argmax(corr))
        support.append(j)
        coef, *_ = np.linalg.lstsq(D[:, support], x, rcond=None)
        r = x - D[:, support] @ coef
    z[support] = coef
    return z


def omp(dico: Dictionary, x, s: int | None = None) -> np.ndarray:
    """Greedy s-sparse code of x; zero input yields a zero code."""
    x = np.asarray(x, dtype=np.float64).ravel()
    if x.shape[0] != dico.D.shape[0]:
        raise ArgumentError(
            f"vector of length {x.shape[0]} against a {dico.D.shape[0]}-row dictionary"
        )
    s = dico.sparsity if s is None else int(s)
    if not 1 <= s <= min(dico.D.shape):
        raise ArgumentError(f"sparsity {s} out of range")
    return _omp_column(dico.D, x, s)


def _code_all(D: np.ndarray, X: np.ndarray, s: int) -> np.ndarray:
    return np.column_stack([_omp_column(D, X[:, j], s) for j in range(X.shape[1])])


def _recon_sq_error(X: np.ndarray, D: np.ndarray, Z: np.ndarray) -> float:
    return float(np.sum((X - D @ Z) ** 2))


def _init_atoms(X: np.ndarray, k: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    norms = np.linalg.norm(X, axis=0)
    usable = np.flatnonzero(norms > 1e-12)
    if usable.size < k:
        raise ArgumentError(f"only {usable.size} nonzero columns for {k} atoms")
    picks = rng.choice(usable, size=k, replace=False)
    return X[:, picks] / norms[picks]


def fit_dictionary(X, k: int, s: int, iters: int, seed: int = 0) -> Dictionary:
    """Alternating OMP coding and least-squares dictionary updates.

    train_error_trace holds the Frobenius reconstruction error twice per
    iteration: after the coding step and after the (pre-normalization)
    dictionary update.  The update solves a ridge-stabilized least-squares
    problem, so up to the tiny ridge term it cannot increase the error for
    fixed codes; that bound is checked every iteration.
    """
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ArgumentError("training matrix must be 2-d")
    if not np.all(np.isfinite(X)):
        raise ArgumentError("training matrix contains non-finite entries")
    d, n = X.shape
    if k > n:
        raise ArgumentError(f"{k} atoms from only {n} training columns")
    if not 1 <= s <= min(d, k):
        raise ArgumentError(f"sparsity {s} out of range for d={d}, k={k}")
    if iters < 0:
        raise ArgumentError("iters must be nonnegative")

    D = _init_atoms(X, k, seed)
    trace: list[float] = []
    for _ in range(iters):
        Z = _code_all(D, X, s)
        err_a = _recon_sq_error(X, D, Z)
        trace.append(np.sqrt(err_a))

        G = Z @ Z.T + RIDGE * np.eye(k)
        D_new = np.linalg.solve(G.T, (X @ Z.T).T).T
        err_b = _recon_sq_error(X, D_new, Z)
        # exact least-squares property, modulo the ridge trade-off
        slack = RIDGE * max(0.0, float(np.sum(D**2) - np.sum(D_new**2)))
        if err_b > err_a + slack + 1e-9 * (1.0 + err_a):
            raise NumericalError("dictionary update increased the fit error")
        trace.append(np.sqrt(err_b))

        norms = np.linalg.norm(D_new, axis=0)
        dead = norms <= 1e-12
        if np.any(dead):
            col_err = np.linalg.norm(X - D_new @ Z, axis=0)
            worst = X[:, int(np.argmax(col_err))]
            D_new[:, dead] = (worst / np.linalg.norm(worst))[:, None]
            norms = np.linalg.norm(D_new, axis=0)
        D = D_new / norms
    return Dictionary(D=D, sparsity=s, train_error_trace=trace)


def dl_features(dico: Dictionary, X) -> np.ndarray:
    """Column-wise OMP codes of X, used directly as match representations."""
    X = np.asarray(X, dtype=np.float64)
    if X.ndim != 2:
        raise ArgumentError("feature matrix must be 2-d")
    if X.shape[0] != dico.D.shape[0]:
        raise ArgumentError(
            f"{X.shape[0]}-row features against a {dico.D.shape[0]}-row dictionary"
        )
    return _code_all(dico.D, X, dico.sparsity)
