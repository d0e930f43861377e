"""Heteroscedastic regression design and Monte Carlo coverage experiments.

Random streams
--------------
All randomness derives from ``scenario.seed`` through ``numpy.random.SeedSequence``
spawn keys, so each stream depends only on its key and never on scheduling:

* ``(0,)``                   -- the design matrix in fixed-design mode;
* ``(1, m, 0)``              -- design of replicate ``m`` (random-design mode);
* ``(1, m, 1)``              -- errors of replicate ``m``;
* ``(1, m, 2)``              -- cross-validation folds of replicate ``m``;
* ``(1, m, 3, scheme_id)``   -- bootstrap draws of one scheme in replicate ``m``.

Replicate ``m`` can therefore be rerun alone and reproduces its results exactly.
"""

from __future__ import annotations

import logging
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from enum import Enum

import numpy as np

from .bootstrap import (
    BootstrapError,
    Scheme,
    WeightDistribution,
    default_threshold,
    run_scheme,
    threshold_estimate,
)
from .inference import (
    CoverageReport,
    IntervalEstimate,
    Side,
    coverage_tally,
    percentile_interval,
    sup_norm_region,
)
from .lasso import Dataset, SolverOptions, cross_validate_lambda, default_lambda_grid, fit_lasso

log = logging.getLogger(__name__)

SCHEME_IDS = {Scheme.PERTURBATION: 0, Scheme.NAIVE: 1, Scheme.RESIDUAL: 2, Scheme.PAIRED: 3}
MAX_FAILED_FRACTION = 0.02


class DesignMode(str, Enum):
    FIXED = "fixed"
    RANDOM = "random"


class ErrorCase(str, Enum):
    CHI2 = "I"
    NORMAL = "II"


class ExperimentError(RuntimeError):
    pass


@dataclass(frozen=True)
class SimulationScenario:
    n: int = 1000
    p: int = 10
    p0: int = 6
    design: DesignMode = DesignMode.FIXED
    error_case: ErrorCase = ErrorCase.CHI2
    M: int = 200
    B: int = 300
    level: float = 0.9
    seed: int = 0
    # False replaces s_i by 1 (homoscedastic variant of the design)
    heteroscedastic: bool = True
    threshold_scale: float = 3.0
    folds: int = 10
    grid_size: int = 50
    weights: WeightDistribution = field(default_factory=WeightDistribution.exponential)

    def __post_init__(self) -> None:
        object.__setattr__(self, "design", DesignMode(self.design))
        object.__setattr__(self, "error_case", ErrorCase(self.error_case))
        if isinstance(self.weights, dict):
            object.__setattr__(self, "weights", WeightDistribution.from_dict(self.weights))
        if not 0 <= self.p0 <= self.p:
            raise ValueError(f"need 0 <= p0 <= p, got p0={self.p0}, p={self.p}")
        if self.p < 1 or self.n <= self.p:
            raise ValueError(f"need n > p >= 1, got n={self.n}, p={self.p}")
        if self.M < 1 or self.B < 1:
            raise ValueError("M and B must be >= 1")
        if not 0 < self.level < 1:
            raise ValueError("level must lie in (0, 1)")
        if not self.threshold_scale > 0:
            raise ValueError("threshold_scale must be positive")
        if not 2 <= self.folds <= self.n:
            raise ValueError("folds must lie in [2, n]")

    @property
    def tag(self) -> str:
        s = f"n{self.n}_p{self.p}_p0{self.p0}_{self.design.value}_case{self.error_case.value}"
        return s if self.heteroscedastic else s + "_homosk"

    def to_dict(self) -> dict:
        d = asdict(self)
        d["design"] = self.design.value
        d["error_case"] = self.error_case.value
        d["weights"] = self.weights.to_dict()
        return d

    @classmethod
    def from_dict(cls, d: dict) -> SimulationScenario:
        known = set(cls.__dataclass_fields__)
        unknown = set(d) - known
        if unknown:
            raise ValueError(f"unknown scenario keys: {sorted(unknown)}")
        return cls(**d)


@dataclass(frozen=True)
class ScenarioDraw:
    dataset: Dataset
    beta_true: np.ndarray
    s: np.ndarray
    epsilon: np.ndarray


def true_beta(p: int, p0: int) -> np.ndarray:
    """``0.75 + 0.25 j`` for the first ``p0`` coordinates, zero after."""
    if not 0 <= p0 <= p:
        raise ValueError(f"need 0 <= p0 <= p, got p0={p0}, p={p}")
    beta = np.zeros(p)
    beta[:p0] = 0.75 + 0.25 * np.arange(1, p0 + 1)
    return beta


def design_covariance(p: int, p0: int) -> np.ndarray:
    """Unit variances; ``0.3**|j-k|`` between distinct active covariates, 0 otherwise."""
    idx = np.arange(p)
    cov = 0.3 ** np.abs(idx[:, None] - idx[None, :])
    active = idx < p0
    cov = np.where(active[:, None] & active[None, :], cov, 0.0)
    np.fill_diagonal(cov, 1.0)
    return cov


def gen_design(scenario: SimulationScenario, rng) -> np.ndarray:
    cov = design_covariance(scenario.p, scenario.p0)
    chol = np.linalg.cholesky(cov)  # raises if not PD, which the 0.3 decay rules out
    rng = np.random.default_rng(rng)
    return rng.standard_normal((scenario.n, scenario.p)) @ chol.T


def heteroscedasticity_scale(X: np.ndarray) -> np.ndarray:
    """``s_i = sqrt(mean_j |X_ij|^5)``."""
    return np.sqrt(np.mean(np.abs(X) ** 5, axis=1))


def gen_errors(scenario: SimulationScenario, X: np.ndarray, rng) -> tuple[np.ndarray, np.ndarray]:
    X = np.asarray(X, dtype=np.float64)
    if X.shape[0] != scenario.n:
        raise ValueError(f"X must have {scenario.n} rows, got {X.shape[0]}")
    rng = np.random.default_rng(rng)
    n = X.shape[0]
    if scenario.error_case is ErrorCase.CHI2:
        # chi-square(2) as a sum of two squared normals, centered
        eta = (rng.standard_normal((n, 2)) ** 2).sum(axis=1) - 2.0
    else:
        eta = rng.standard_normal(n)
    s = heteroscedasticity_scale(X) if scenario.heteroscedastic else np.ones(n)
    if not np.all(s > 0):
        raise ValueError("heteroscedasticity scale must be positive for every row")
    return s * eta, s


def _stream(seed: int, *key: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=key))


def stream_seed(seed: int, *key: int) -> int:
    """Integer seed for the substream ``key`` of ``seed``."""
    return int(np.random.SeedSequence(seed, spawn_key=key).generate_state(1, np.uint64)[0])


def fixed_design(scenario: SimulationScenario) -> np.ndarray:
    return gen_design(scenario, _stream(scenario.seed, 0))


def draw_scenario(scenario: SimulationScenario, m: int, X: np.ndarray | None = None) -> ScenarioDraw:
    """Data set of Monte Carlo replicate ``m``."""
    if X is None:
        if scenario.design is DesignMode.FIXED:
            X = fixed_design(scenario)
        else:
            X = gen_design(scenario, _stream(scenario.seed, 1, m, 0))
    eps, s = gen_errors(scenario, X, _stream(scenario.seed, 1, m, 1))
    beta = true_beta(scenario.p, scenario.p0)
    return ScenarioDraw(Dataset(X, X @ beta + eps), beta, s, eps)


@dataclass
class ReplicateResult:
    """Interval endpoints from one Monte Carlo data set, per scheme."""

    m: int
    lam: float
    beta_hat: np.ndarray
    beta_tilde: np.ndarray
    two_sided: dict = field(default_factory=dict)   # scheme -> (lower, upper) arrays
    one_sided: dict = field(default_factory=dict)   # scheme -> upper array
    region: dict = field(default_factory=dict)      # scheme -> radius
    error: str | None = None


def run_replicate(scenario: SimulationScenario, methods, m: int, X: np.ndarray | None = None,
                  opts: SolverOptions | None = None) -> ReplicateResult:
    draw = draw_scenario(scenario, m, X)
    data = draw.dataset
    lam = cross_validate_lambda(data, default_lambda_grid(data, scenario.grid_size), scenario.folds,
                                _stream(scenario.seed, 1, m, 2), opts)
    fit = fit_lasso(data, lam, opts=opts)
    if not fit.converged:
        raise BootstrapError(f"replicate {m}: original fit did not converge")
    est = threshold_estimate(fit, default_threshold(data.n, scenario.threshold_scale))
    res = ReplicateResult(m=m, lam=lam, beta_hat=fit.beta, beta_tilde=est.beta_tilde)
    for scheme in methods:
        scheme = Scheme(scheme)
        draws = run_scheme(scheme, data, fit, est, scenario.B,
                           rng=stream_seed(scenario.seed, 1, m, 3, SCHEME_IDS[scheme]),
                           dist=scenario.weights, opts=opts)
        two = [percentile_interval(draws, fit, j, scenario.level, Side.TWO_SIDED) for j in range(data.p)]
        one = [percentile_interval(draws, fit, j, scenario.level, Side.RIGHT_SIDED) for j in range(data.p)]
        res.two_sided[scheme.value] = (np.array([iv.lower for iv in two]), np.array([iv.upper for iv in two]))
        res.one_sided[scheme.value] = np.array([iv.upper for iv in one])
        res.region[scheme.value] = sup_norm_region(draws, fit, scenario.level).radius
    return res


def _safe_replicate(args) -> ReplicateResult:
    scenario, methods, m, X, opts = args
    try:
        return run_replicate(scenario, methods, m, X, opts)
    except (BootstrapError, ValueError, np.linalg.LinAlgError) as exc:
        return ReplicateResult(m=m, lam=math.nan, beta_hat=np.array([]), beta_tilde=np.array([]),
                               error=f"{type(exc).__name__}: {exc}")


@dataclass
class SchemeSummary:
    """Coverage of one scheme over the Monte Carlo replicates."""

    scheme: Scheme
    two_sided: CoverageReport
    one_sided: CoverageReport
    region_hits: int
    region_count: int
    mean_region_radius: float

    @property
    def region_coverage(self) -> float:
        return self.region_hits / self.region_count


@dataclass
class ExperimentResult:
    scenario: SimulationScenario
    beta_true: np.ndarray
    summaries: dict           # Scheme -> SchemeSummary
    replicates: list          # successful ReplicateResult objects, in replicate order
    failures: list            # (m, message)

    def __getitem__(self, scheme) -> SchemeSummary:
        return self.summaries[Scheme(scheme)]


def summarize(scenario: SimulationScenario, methods, replicates, beta_true) -> dict:
    out = {}
    for scheme in methods:
        scheme = Scheme(scheme)
        key = scheme.value
        two, one = [], []
        radii, region_hits = [], 0
        for r in replicates:
            lo, hi = r.two_sided[key]
            up = r.one_sided[key]
            for j in range(scenario.p):
                two.append(IntervalEstimate(j, scenario.level, Side.TWO_SIDED, float(lo[j]), float(hi[j])))
                one.append(IntervalEstimate(j, scenario.level, Side.RIGHT_SIDED, -math.inf, float(up[j])))
            radius = r.region[key]
            radii.append(radius)
            region_hits += bool(np.max(np.abs(beta_true - r.beta_hat)) <= radius)
        out[scheme] = SchemeSummary(
            scheme=scheme,
            two_sided=coverage_tally(two, beta_true, key, scenario.tag),
            one_sided=coverage_tally(one, beta_true, key, scenario.tag),
            region_hits=region_hits,
            region_count=len(replicates),
            mean_region_radius=float(np.mean(radii)),
        )
    return out


def run_coverage_experiment(scenario: SimulationScenario, methods, threads: int = 1,
                            opts: SolverOptions | None = None, replicates=None) -> ExperimentResult:
    """Monte Carlo coverage of every scheme in ``methods`` under ``scenario``.

    ``threads`` sets the number of worker processes; results do not depend
    on it.  ``replicates`` restricts the run to a subset of replicate indices.
    """
    methods = [Scheme(s) for s in dict.fromkeys(methods)]
    if not methods:
        raise ValueError("no bootstrap schemes requested")
    indices = list(range(scenario.M)) if replicates is None else list(replicates)
    X = fixed_design(scenario) if scenario.design is DesignMode.FIXED else None
    jobs = [(scenario, methods, m, X, opts) for m in indices]
    if threads > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_safe_replicate, jobs, chunksize=max(1, len(jobs) // (4 * threads))))
    else:
        results = [_safe_replicate(job) for job in jobs]
    ok = [r for r in results if r.error is None]
    failures = [(r.m, r.error) for r in results if r.error is not None]
    for m, msg in failures:
        log.warning("replicate %d failed: %s", m, msg)
    if len(failures) > MAX_FAILED_FRACTION * len(results):
        raise ExperimentError(f"{len(failures)} of {len(results)} replicates failed; first: {failures[0][1]}")
    beta_true = true_beta(scenario.p, scenario.p0)
    return ExperimentResult(scenario, beta_true, summarize(scenario, methods, ok, beta_true), ok, failures)


def homoscedastic(scenario: SimulationScenario) -> SimulationScenario:
    return replace(scenario, heteroscedastic=False)
