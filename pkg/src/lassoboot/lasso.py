"""Lasso on the unnormalized scale, solved by cyclic coordinate descent.

The criterion is ``sum_i (y_i - x_i't)^2 + lam * sum_j |t_j|``.  Everything
here works in Gram form: with ``A = X'X`` and ``b = X'y`` the criterion is
``t'At - 2b't + lam*|t|_1`` plus the constant ``y'y``, so a bootstrap replicate
that only changes the response costs one matrix-vector product and a
``p``-dimensional solve.  The batched kernel ``cd_gram`` runs many such
problems at once, which is what the bootstrap and cross-validation code use.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np


@dataclass(frozen=True)
class Dataset:
    """Regression sample: ``X`` is ``n x p``, ``y`` has length ``n``."""

    X: np.ndarray
    y: np.ndarray

    def __post_init__(self) -> None:
        X = np.asarray(self.X, dtype=np.float64)
        y = np.asarray(self.y, dtype=np.float64)
        if X.ndim != 2:
            raise ValueError(f"X must be 2-d, got shape {X.shape}")
        if y.ndim != 1 or y.shape[0] != X.shape[0]:
            raise ValueError(f"y must have length {X.shape[0]}, got shape {y.shape}")
        n, p = X.shape
        if n < 2 or p < 1:
            raise ValueError(f"need n >= 2 and p >= 1, got n={n}, p={p}")
        if not (np.all(np.isfinite(X)) and np.all(np.isfinite(y))):
            raise ValueError("X and y must be finite")
        norms = np.einsum("ij,ij->j", X, X)
        bad = np.flatnonzero(~(norms > 0) | ~np.isfinite(norms))
        if bad.size:
            raise ValueError(f"columns {bad.tolist()} of X have zero (or non-finite) norm")
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def p(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class SolverOptions:
    max_sweeps: int = 10000
    # max per-sweep coefficient change, measured as |dt_j| * ||X_j|| / sqrt(n)
    tol: float = 1e-10
    kkt_tol: float = 1e-8

    def __post_init__(self) -> None:
        if int(self.max_sweeps) < 1:
            raise ValueError("max_sweeps must be >= 1")
        if not (self.tol >= 0 and self.kkt_tol >= 0):
            raise ValueError("tolerances must be >= 0")


@dataclass(frozen=True)
class LassoFit:
    beta: np.ndarray
    lam: float
    objective: float
    kkt_gap: float
    iterations: int
    converged: bool

    def to_dict(self) -> dict:
        return {
            "beta": [float(b) for b in self.beta],
            "lambda": float(self.lam),
            "objective": float(self.objective),
            "kkt_gap": float(self.kkt_gap),
            "iterations": int(self.iterations),
            "converged": bool(self.converged),
        }


def soft_threshold(z: float, gamma: float) -> float:
    """Proximal map of ``gamma*|.|``: ``sign(z) * max(|z| - gamma, 0)``."""
    z = float(z)
    gamma = float(gamma)
    if not (math.isfinite(z) and math.isfinite(gamma)):
        raise ValueError("soft_threshold needs finite inputs")
    if gamma < 0:
        raise ValueError(f"gamma must be >= 0, got {gamma}")
    if z > gamma:
        return z - gamma
    if z < -gamma:
        return z + gamma
    return 0.0


def _soft(z: np.ndarray, gamma) -> np.ndarray:
    return np.sign(z) * np.maximum(np.abs(z) - gamma, 0.0) + 0.0


def lasso_objective(data: Dataset, lam: float, beta: np.ndarray) -> float:
    r = data.y - data.X @ beta
    return float(r @ r + lam * np.abs(beta).sum())


def kkt_violation(grad: np.ndarray, beta: np.ndarray, penalty) -> np.ndarray:
    """Per-coordinate subgradient violation given ``grad = 2 X'(y - X beta)``.

    Broadcasts over leading batch dimensions; ``penalty`` may be a scalar, a
    per-problem column or a per-coordinate array.
    """
    penalty = np.asarray(penalty, dtype=np.float64)
    at_zero = np.maximum(np.abs(grad) - penalty, 0.0)
    off_zero = np.abs(grad - penalty * np.sign(beta))
    return np.where(beta == 0.0, at_zero, off_zero)


def kkt_gap(data: Dataset, lam: float, beta) -> float:
    """Largest KKT violation of ``beta`` for the criterion with penalty ``lam``."""
    beta = np.asarray(beta, dtype=np.float64)
    if beta.shape != (data.p,):
        raise ValueError(f"beta must have shape ({data.p},), got {beta.shape}")
    if lam < 0:
        raise ValueError("lambda must be >= 0")
    grad = 2.0 * data.X.T @ (data.y - data.X @ beta)
    return float(kkt_violation(grad, beta, lam).max())


def cd_gram(A, b, penalty, t0=None, *, n_obs=None, opts: SolverOptions | None = None, trace=None):
    """Batched coordinate descent for ``t'At - 2b't + sum_j penalty_j |t_j|``.

    Parameters
    ----------
    A : (p, p) or (K, p, p) array
        Gram matrices, shared across the batch or one per problem.
    b : (K, p) array
        Linear terms (``X'y`` for a least-squares criterion).
    penalty : scalar, (K,), (1, p) or (K, p)
        Penalty weights.  A 1-d array of length K is read as one scalar per
        problem; pass shape (1, p) for per-coordinate weights.
    t0 : (K, p) array, optional
        Warm start.
    n_obs : int, optional
        Sample size used to standardize the coefficient-change criterion.
    trace : list, optional
        If given, the per-problem objective (without the constant) after
        every sweep is appended to it.

    Returns
    -------
    t, gaps, sweeps, converged
        Solutions (K, p), per-problem KKT gaps (K,), sweeps used, and a
        per-problem convergence mask (K,).
    """
    opts = opts or SolverOptions()
    A = np.asarray(A, dtype=np.float64)
    b = np.atleast_2d(np.asarray(b, dtype=np.float64))
    K, p = b.shape
    pen = np.asarray(penalty, dtype=np.float64)
    if pen.ndim == 1:
        pen = pen[:, None]
    pen = np.broadcast_to(pen, (K, p))
    if np.any(pen < 0):
        raise ValueError("penalty must be >= 0")
    shared = A.ndim == 2
    diag = np.diagonal(A, axis1=-2, axis2=-1)
    diag = np.broadcast_to(diag, (K, p))
    if np.any(diag < 0):
        raise ValueError("Gram matrix has a negative diagonal entry")
    # a zero-norm column leaves its coordinate pinned at 0
    live = diag > 0
    inv_diag = np.where(live, 1.0 / np.where(live, diag, 1.0), 0.0)
    n_scale = float(n_obs) if n_obs else 1.0
    scale = np.sqrt(diag / n_scale)
    half_pen = 0.5 * pen

    t = np.zeros((K, p)) if t0 is None else np.array(np.broadcast_to(t0, (K, p)), dtype=np.float64)

    def gradient(t):
        At = t @ A if shared else np.einsum("kij,kj->ki", A, t)
        return 2.0 * (b - At)

    converged = np.zeros(K, dtype=bool)
    sweeps = 0
    for sweeps in range(1, int(opts.max_sweeps) + 1):
        max_change = np.zeros(K)
        for j in range(p):
            if shared:
                row = A[j]
                r = b[:, j] - t @ row + row[j] * t[:, j]
            else:
                r = b[:, j] - np.einsum("kp,kp->k", t, A[:, j, :]) + A[:, j, j] * t[:, j]
            new = _soft(r, half_pen[:, j]) * inv_diag[:, j]
            np.maximum(max_change, np.abs(new - t[:, j]) * scale[:, j], out=max_change)
            t[:, j] = new
        if trace is not None:
            At = t @ A if shared else np.einsum("kij,kj->ki", A, t)
            trace.append(np.einsum("kp,kp->k", t, At) - 2.0 * np.einsum("kp,kp->k", b, t)
                         + np.einsum("kp,kp->k", pen, np.abs(t)))
        if np.all(max_change < opts.tol) or sweeps % 10 == 0:
            gaps = kkt_violation(gradient(t), t, pen).max(axis=1)
            converged = (max_change < opts.tol) & (gaps <= opts.kkt_tol)
            if converged.all():
                break
    gaps = kkt_violation(gradient(t), t, pen).max(axis=1)
    converged = converged & (gaps <= opts.kkt_tol)
    return t, gaps, sweeps, converged


def fit_lasso(data: Dataset, lam: float, warm_start=None, opts: SolverOptions | None = None) -> LassoFit:
    """Minimize ``||y - Xt||^2 + lam*||t||_1`` by cyclic coordinate descent.

    Non-convergence is reported through ``converged=False`` rather than
    raised; the caller decides what to do with it.
    """
    opts = opts or SolverOptions()
    lam = float(lam)
    if not (lam >= 0 and math.isfinite(lam)):
        raise ValueError(f"lambda must be finite and >= 0, got {lam}")
    if warm_start is not None:
        warm_start = np.asarray(warm_start, dtype=np.float64)
        if warm_start.shape != (data.p,):
            raise ValueError(f"warm_start must have shape ({data.p},)")
    A = data.X.T @ data.X
    b = data.X.T @ data.y
    t, _, sweeps, conv = cd_gram(A, b[None, :], lam, None if warm_start is None else warm_start[None, :],
                                 n_obs=data.n, opts=opts)
    beta = t[0]
    # certify against the data directly, not the Gram shortcut
    gap = kkt_gap(data, lam, beta)
    converged = bool(conv[0]) and gap <= opts.kkt_tol
    return LassoFit(beta=beta, lam=lam, objective=lasso_objective(data, lam, beta),
                    kkt_gap=gap, iterations=sweeps, converged=converged)


def lambda_max(data: Dataset) -> float:
    """Smallest penalty whose solution is exactly zero."""
    return float(2.0 * np.abs(data.X.T @ data.y).max())


def default_lambda_grid(data: Dataset, size: int = 50, ratio: float = 1e-3) -> np.ndarray:
    lmax = lambda_max(data)
    return np.geomspace(lmax, ratio * lmax, size)


def cross_validate_lambda(data: Dataset, grid=None, folds: int = 10, rng=None,
                          opts: SolverOptions | None = None) -> float:
    """K-fold choice of ``lam`` on the unnormalized scale.

    Folds come from one permutation drawn from ``rng``.  The score is the
    pooled out-of-fold mean squared prediction error; exact ties go to the
    larger penalty.
    """
    grid = default_lambda_grid(data) if grid is None else np.asarray(grid, dtype=np.float64).ravel()
    if grid.size == 0:
        raise ValueError("lambda grid is empty")
    if np.any(grid < 0) or not np.all(np.isfinite(grid)):
        raise ValueError("lambda grid entries must be finite and >= 0")
    folds = int(folds)
    if not 2 <= folds <= data.n:
        raise ValueError(f"folds must lie in [2, n={data.n}], got {folds}")
    rng = np.random.default_rng(rng)
    opts = opts or SolverOptions()

    perm = rng.permutation(data.n)
    sse = np.zeros(grid.size)
    for test_idx in np.array_split(perm, folds):
        mask = np.ones(data.n, dtype=bool)
        mask[test_idx] = False
        Xtr, ytr = data.X[mask], data.y[mask]
        A = Xtr.T @ Xtr
        if np.any(np.diagonal(A) <= 0):
            raise ValueError("a training fold has a zero-norm column")
        b = np.broadcast_to(Xtr.T @ ytr, (grid.size, data.p))
        t, _, _, _ = cd_gram(A, b, grid, n_obs=int(mask.sum()), opts=opts)
        resid = data.y[test_idx][:, None] - data.X[test_idx] @ t.T
        sse += np.einsum("ik,ik->k", resid, resid)
    score = sse / data.n
    best = score.min()
    return float(grid[score == best].max())
