"""Bootstrap replicates of the Lasso.

Four schemes share one output type, ``BootstrapDraws``, whose rows are
``sqrt(n) * (beta*_b - beta_tilde)`` with ``beta_tilde`` the hard-thresholded
Lasso fit:

* ``perturbation`` -- random weights on a mix of the observed and the fitted
  least-squares criteria.  Equivalent to a plain Lasso on the pseudo-responses
  ``z_i = y~_i + e~_i (G_i - mu) / mu`` with the original penalty.
* ``naive`` -- random weights on the observed criterion only.  Kept as a
  diagnostic: its score term is not centered.
* ``residual`` -- resampled centered residuals around ``X beta_tilde``.
* ``paired`` -- resampled ``(x_i, y_i)`` rows (Freedman's scheme, unmodified).

Every scheme reuses the original penalty ``lam`` and solves all ``B``
replicates as one batch of Gram-form problems.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum

import numpy as np

from .lasso import Dataset, LassoFit, SolverOptions, cd_gram


class Scheme(str, Enum):
    PERTURBATION = "perturbation"
    NAIVE = "naive"
    RESIDUAL = "residual"
    PAIRED = "paired"


class BootstrapError(RuntimeError):
    """Too many replicates failed to produce a certified fit."""


# fraction of flagged replicates a run tolerates
MAX_FLAGGED_FRACTION = 0.01
PAIRED_MAX_REDRAWS = 10


@dataclass(frozen=True)
class WeightDistribution:
    """Law of the perturbation weights; must satisfy ``variance == mean**2``.

    Use the ``exponential`` and ``beta`` constructors.  For the beta family the
    second shape parameter is tied to the first by
    ``b = a (1 + a) / (1 - a)``, ``0 < a < 1``.
    """

    family: str
    params: tuple[float, ...]

    def __post_init__(self) -> None:
        if self.family == "exponential":
            (rate,) = self.params
            if not (rate > 0 and math.isfinite(rate)):
                raise ValueError(f"exponential rate must be positive, got {rate}")
        elif self.family == "beta":
            a, b = self.params
            if not 0 < a < 1:
                raise ValueError(f"beta alpha must lie in (0, 1), got {a}")
            tied = a * (1 + a) / (1 - a)
            if not math.isclose(b, tied, rel_tol=1e-12):
                raise ValueError(f"beta parameters must satisfy b = a(1+a)/(1-a) = {tied}, got {b}")
        else:
            raise ValueError(f"unknown weight family {self.family!r}")
        if not math.isclose(self.sigma2, self.mu**2, rel_tol=1e-12):
            raise ValueError("weight law must have variance equal to squared mean")

    @classmethod
    def exponential(cls, rate: float = 1.0) -> WeightDistribution:
        return cls("exponential", (float(rate),))

    @classmethod
    def beta(cls, alpha: float, beta: float | None = None) -> WeightDistribution:
        alpha = float(alpha)
        if beta is None:
            if not 0 < alpha < 1:
                raise ValueError(f"beta alpha must lie in (0, 1), got {alpha}")
            beta = alpha * (1 + alpha) / (1 - alpha)
        return cls("beta", (alpha, float(beta)))

    @property
    def mu(self) -> float:
        if self.family == "exponential":
            return 1.0 / self.params[0]
        a, b = self.params
        return a / (a + b)

    @property
    def sigma2(self) -> float:
        if self.family == "exponential":
            return 1.0 / self.params[0] ** 2
        a, b = self.params
        return a * b / ((a + b) ** 2 * (a + b + 1))

    def to_dict(self) -> dict:
        keys = ("rate",) if self.family == "exponential" else ("alpha", "beta")
        return {"family": self.family, **dict(zip(keys, self.params))}

    @classmethod
    def from_dict(cls, d: dict) -> WeightDistribution:
        family = d.get("family", "exponential")
        if family == "exponential":
            return cls.exponential(d.get("rate", 1.0))
        if family == "beta":
            return cls.beta(d["alpha"], d.get("beta"))
        raise ValueError(f"unknown weight family {family!r}")


@dataclass(frozen=True)
class ThresholdedEstimate:
    beta_tilde: np.ndarray
    a_n: float
    support: np.ndarray
    signs: np.ndarray


@dataclass(frozen=True)
class BootstrapDraws:
    scheme: Scheme
    T_star: np.ndarray
    beta_star: np.ndarray
    center: np.ndarray
    lam: float
    n: int
    seed: int | None
    flagged: np.ndarray = field(repr=False)

    @property
    def B(self) -> int:
        return self.T_star.shape[0]


def default_threshold(n: int, scale: float = 1.0) -> float:
    """``scale * n**(-1/4)``: tends to zero slower than ``log(n)/sqrt(n)``."""
    if n < 2:
        raise ValueError(f"n must be >= 2, got {n}")
    if not scale > 0:
        raise ValueError(f"scale must be positive, got {scale}")
    return float(scale) * float(n) ** -0.25


def threshold_estimate(fit: LassoFit, a_n: float) -> ThresholdedEstimate:
    if not (a_n > 0 and math.isfinite(a_n)):
        raise ValueError(f"a_n must be positive and finite, got {a_n}")
    beta = np.asarray(fit.beta, dtype=np.float64)
    beta_tilde = np.where(np.abs(beta) > a_n, beta, 0.0)
    support = np.flatnonzero(beta_tilde)
    return ThresholdedEstimate(beta_tilde=beta_tilde, a_n=float(a_n), support=support,
                               signs=np.sign(beta_tilde[support]))


def _generator(rng) -> np.random.Generator:
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


def _seed_of(rng) -> int | None:
    return int(rng) if isinstance(rng, (int, np.integer)) else None


def draw_weights(dist: WeightDistribution, n: int, rng) -> np.ndarray:
    """``n`` i.i.d. nonnegative weights from ``dist``."""
    rng = _generator(rng)
    if dist.family == "exponential":
        return rng.exponential(scale=1.0 / dist.params[0], size=n)
    a, b = dist.params
    return rng.beta(a, b, size=n)


def pseudo_responses(data: Dataset, est: ThresholdedEstimate, weights, mu: float) -> np.ndarray:
    """Responses whose plain Lasso fit is the perturbation-bootstrap replicate.

    ``weights`` may be a vector of length ``n`` or a ``(B, n)`` matrix, in
    which case one row of pseudo-responses is returned per weight row.
    """
    weights = np.asarray(weights, dtype=np.float64)
    if weights.shape[-1] != data.n or weights.ndim > 2:
        raise ValueError(f"weights must have trailing length n={data.n}, got shape {weights.shape}")
    if not mu > 0:
        raise ValueError("mu must be positive")
    fitted = data.X @ est.beta_tilde
    resid = data.y - fitted
    return fitted + resid * (weights - mu) / mu


def centered_residuals(data: Dataset, est: ThresholdedEstimate) -> np.ndarray:
    resid = data.y - data.X @ est.beta_tilde
    return resid - resid.mean()


def _finish(scheme, data, fit, est, t, converged, rng) -> BootstrapDraws:
    flagged = ~converged
    if flagged.mean() > MAX_FLAGGED_FRACTION:
        raise BootstrapError(f"{scheme.value}: {int(flagged.sum())} of {flagged.size} replicates did not converge")
    T = math.sqrt(data.n) * (t - est.beta_tilde)
    if not np.all(np.isfinite(T)):
        raise BootstrapError(f"{scheme.value}: non-finite replicate statistics")
    return BootstrapDraws(scheme=scheme, T_star=T, beta_star=t, center=est.beta_tilde.copy(),
                          lam=float(fit.lam), n=data.n, seed=_seed_of(rng), flagged=flagged)


def _check_B(B: int) -> int:
    if int(B) < 1:
        raise ValueError(f"B must be >= 1, got {B}")
    return int(B)


def lasso_responses(X: np.ndarray, Z: np.ndarray, lam: float, t0=None, opts=None):
    """Lasso fits of every row of ``Z`` (shape ``(B, n)``) on the shared design ``X``."""
    A = X.T @ X
    b = Z @ X
    t, _, _, conv = cd_gram(A, b, lam, t0, n_obs=X.shape[0], opts=opts)
    return t, conv


def weighted_lasso(X: np.ndarray, y: np.ndarray, W: np.ndarray, lam: float, t0=None, opts=None):
    """Lasso fits of ``sum_i W_bi (y_i - x_i't)^2 + lam |t|_1`` for each row of ``W``."""
    n, p = X.shape
    W = np.atleast_2d(W)
    outer = (X[:, :, None] * X[:, None, :]).reshape(n, p * p)
    A = (W @ outer).reshape(-1, p, p)
    b = W @ (X * y[:, None])
    t, _, _, conv = cd_gram(A, b, lam, t0, n_obs=n, opts=opts)
    return t, conv


def _perturbation_from_weights(data, fit, est, G, mu, opts):
    Z = pseudo_responses(data, est, G, mu)
    return lasso_responses(data.X, Z, fit.lam, est.beta_tilde, opts)


def perturbation_bootstrap(data: Dataset, fit: LassoFit, est: ThresholdedEstimate,
                           dist: WeightDistribution | None = None, B: int = 1200, rng=None,
                           opts: SolverOptions | None = None) -> BootstrapDraws:
    """Modified perturbation bootstrap, solved through its pseudo-response form."""
    B = _check_B(B)
    dist = dist or WeightDistribution.exponential()
    gen = _generator(rng)
    G = np.stack([draw_weights(dist, data.n, gen) for _ in range(B)])
    t, conv = _perturbation_from_weights(data, fit, est, G, dist.mu, opts)
    return _finish(Scheme.PERTURBATION, data, fit, est, t, conv, rng)


def naive_perturbation_bootstrap(data: Dataset, fit: LassoFit, est: ThresholdedEstimate,
                                 dist: WeightDistribution | None = None, B: int = 1200, rng=None,
                                 opts: SolverOptions | None = None) -> BootstrapDraws:
    """Weighted Lasso on the observed responses, penalty kept at ``fit.lam``."""
    B = _check_B(B)
    dist = dist or WeightDistribution.exponential()
    gen = _generator(rng)
    G = np.stack([draw_weights(dist, data.n, gen) for _ in range(B)])
    t, conv = weighted_lasso(data.X, data.y, G, fit.lam, est.beta_tilde, opts)
    return _finish(Scheme.NAIVE, data, fit, est, t, conv, rng)


def residual_bootstrap(data: Dataset, fit: LassoFit, est: ThresholdedEstimate, B: int = 1200,
                       rng=None, opts: SolverOptions | None = None) -> BootstrapDraws:
    B = _check_B(B)
    gen = _generator(rng)
    r = centered_residuals(data, est)
    fitted = data.X @ est.beta_tilde
    Z = fitted + np.stack([r[gen.integers(0, data.n, size=data.n)] for _ in range(B)])
    t, conv = lasso_responses(data.X, Z, fit.lam, est.beta_tilde, opts)
    return _finish(Scheme.RESIDUAL, data, fit, est, t, conv, rng)


def paired_counts(X: np.ndarray, B: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Row multiplicities of ``B`` with-replacement resamples.

    A resample in which some column of ``X`` is identically zero is redrawn,
    at most ``PAIRED_MAX_REDRAWS`` times; replicates still degenerate after
    that are returned with ``bad`` set.
    """
    gen = _generator(rng)
    n = X.shape[0]
    nonzero = X != 0
    counts = np.empty((B, n))
    bad = np.zeros(B, dtype=bool)
    for k in range(B):
        for _ in range(PAIRED_MAX_REDRAWS):
            c = np.bincount(gen.integers(0, n, size=n), minlength=n)
            if np.all((c[:, None] * nonzero).any(axis=0)):
                break
        else:
            bad[k] = True
        counts[k] = c
    return counts, bad


def paired_bootstrap(data: Dataset, fit: LassoFit, est: ThresholdedEstimate, B: int = 1200,
                     rng=None, opts: SolverOptions | None = None) -> BootstrapDraws:
    """Plain paired (row) bootstrap; not Camponovo's modified version."""
    B = _check_B(B)
    counts, bad = paired_counts(data.X, B, _generator(rng))
    t, conv = weighted_lasso(data.X, data.y, counts, fit.lam, est.beta_tilde, opts)
    return _finish(Scheme.PAIRED, data, fit, est, t, conv & ~bad, rng)


def run_scheme(scheme: Scheme | str, data: Dataset, fit: LassoFit, est: ThresholdedEstimate, B: int,
               rng=None, dist: WeightDistribution | None = None,
               opts: SolverOptions | None = None) -> BootstrapDraws:
    scheme = Scheme(scheme)
    if scheme is Scheme.PERTURBATION:
        return perturbation_bootstrap(data, fit, est, dist, B, rng, opts)
    if scheme is Scheme.NAIVE:
        return naive_perturbation_bootstrap(data, fit, est, dist, B, rng, opts)
    if scheme is Scheme.RESIDUAL:
        return residual_bootstrap(data, fit, est, B, rng, opts)
    return paired_bootstrap(data, fit, est, B, rng, opts)
