"""Sampling from the asymptotic law of ``sqrt(n) (beta_hat - beta)``.

The limit is ``argmin_v  v'Cv - 2 v'W + lam0 * (sum_{active} sign_j v_j + sum_{zero} |v_j|)``
with ``W ~ N(0, Sigma)``; replacing ``Sigma`` by ``s^2 C`` gives the limit of
the residual bootstrap, which differs whenever the errors are heteroscedastic.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .bootstrap import ThresholdedEstimate
from .lasso import Dataset, LassoFit, SolverOptions, cd_gram

MIN_EIGENVALUE = 1e-8


@dataclass(frozen=True)
class LimitObjective:
    C: np.ndarray
    Sigma: np.ndarray
    lambda0: float
    signs: np.ndarray
    s2C: np.ndarray | None = None

    def __post_init__(self) -> None:
        C = np.asarray(self.C, dtype=np.float64)
        S = np.asarray(self.Sigma, dtype=np.float64)
        p = C.shape[0]
        if C.shape != (p, p) or S.shape != (p, p):
            raise ValueError("C and Sigma must be square and of equal size")
        if not (np.allclose(C, C.T) and np.allclose(S, S.T)):
            raise ValueError("C and Sigma must be symmetric")
        if np.linalg.eigvalsh(C).min() <= 0:
            raise ValueError("C must be positive definite")
        if np.linalg.eigvalsh(S).min() < -1e-12 * max(1.0, np.abs(S).max()):
            raise ValueError("Sigma must be positive semidefinite")
        signs = np.asarray(self.signs, dtype=np.float64)
        if signs.shape != (p,) or not np.all(np.isin(signs, (-1.0, 0.0, 1.0))):
            raise ValueError("signs must be a vector in {-1, 0, 1}^p")
        p0 = int(np.count_nonzero(signs))
        if np.any(signs[:p0] == 0):
            raise ValueError("nonzero signs must occupy the leading positions")
        if not (self.lambda0 >= 0 and math.isfinite(self.lambda0)):
            raise ValueError("lambda0 must be finite and >= 0")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "Sigma", S)
        object.__setattr__(self, "signs", signs)
        if self.s2C is not None:
            object.__setattr__(self, "s2C", np.asarray(self.s2C, dtype=np.float64))

    @property
    def p(self) -> int:
        return self.C.shape[0]

    @property
    def p0(self) -> int:
        return int(np.count_nonzero(self.signs))


def estimate_limit_matrices(data: Dataset, residuals) -> tuple[np.ndarray, np.ndarray, float]:
    """Sample versions of ``C``, ``Sigma`` and ``s^2`` from residuals."""
    r = np.asarray(residuals, dtype=np.float64)
    if r.shape != (data.n,):
        raise ValueError(f"residuals must have length {data.n}")
    X = data.X
    C = X.T @ X / data.n
    Sigma = (X * (r**2)[:, None]).T @ X / data.n
    s2 = float(np.mean(r**2))
    if np.linalg.eigvalsh(C).min() < MIN_EIGENVALUE:
        warnings.warn("sample Gram matrix is nearly singular", stacklevel=2)
    return C, Sigma, s2


def limit_objective_from_fit(data: Dataset, fit: LassoFit, est: ThresholdedEstimate) -> LimitObjective:
    """Plug-in objective: residuals around ``beta_tilde``, ``lam0 = lam / sqrt(n)``."""
    resid = data.y - data.X @ est.beta_tilde
    C, Sigma, s2 = estimate_limit_matrices(data, resid)
    return LimitObjective(C=C, Sigma=Sigma, lambda0=fit.lam / math.sqrt(data.n),
                          signs=np.sign(est.beta_tilde), s2C=s2 * C)


def _factor(M: np.ndarray) -> np.ndarray:
    try:
        return np.linalg.cholesky(M)
    except np.linalg.LinAlgError:
        # semidefinite: symmetric square root instead
        w, V = np.linalg.eigh(M)
        return V * np.sqrt(np.clip(w, 0.0, None))


def sample_limit_argmin(obj: LimitObjective, use_s2C: bool = False, rng=None, draws: int = 1000,
                        W=None) -> np.ndarray:
    """``draws`` independent minimizers of the limit objective.

    ``W`` may be supplied directly (shape ``(draws, p)``) to bypass sampling.
    """
    if W is None:
        if int(draws) < 1:
            raise ValueError("draws must be >= 1")
        if use_s2C:
            if obj.s2C is None:
                raise ValueError("objective carries no s^2 C matrix")
            cov = obj.s2C
        else:
            cov = obj.Sigma
        rng = np.random.default_rng(rng)
        W = rng.standard_normal((int(draws), obj.p)) @ _factor(cov).T
    W = np.atleast_2d(np.asarray(W, dtype=np.float64))
    active = obj.signs != 0
    # active coordinates: linear term folded into W, no penalty
    b = W - 0.5 * obj.lambda0 * obj.signs
    penalty = np.where(active, 0.0, obj.lambda0)[None, :]
    opts = SolverOptions(max_sweeps=100000, tol=1e-13, kkt_tol=1e-10)
    v, _, _, conv = cd_gram(obj.C, b, penalty, opts=opts)
    if not conv.all():
        raise RuntimeError(f"{int((~conv).sum())} limit draws did not reach the KKT tolerance")
    return v
