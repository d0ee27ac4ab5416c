"""Streaming moments, goodness-of-fit tests, and the statistical experiments
(hydrostatic profile, independence of the hidden-temperature components)."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass
from typing import Callable, Sequence

import numpy as np
from scipy import stats as sps
from scipy.integrate import trapezoid

from .exact import mean_profile, solve_second_moments, tilde_correlations

# Asymptotic one-sample KS critical values c(alpha), D_crit = c / sqrt(n).
KS_CRITICAL = {0.05: 1.3581, 0.01: 1.6276}


class MomentAccumulator:
    """Running mean and co-moment matrix of vector observations.

    Batches are folded in with the pairwise (Chan et al.) update, so merging two
    accumulators agrees with accumulating the concatenated data.
    """

    def __init__(self, dim: int):
        self.dim = dim
        self.count = 0
        self.mean = np.zeros(dim)
        self.comoment = np.zeros((dim, dim))

    def update(self, x) -> "MomentAccumulator":
        x = np.atleast_2d(np.asarray(x, dtype=float))
        if x.shape[1] != self.dim:
            raise ValueError(f"expected {self.dim} columns, got {x.shape[1]}")
        other = MomentAccumulator(self.dim)
        other.count = x.shape[0]
        if other.count:
            other.mean = x.mean(axis=0)
            d = x - other.mean
            other.comoment = d.T @ d
        return self.merge(other)

    def merge(self, other: "MomentAccumulator") -> "MomentAccumulator":
        if other.count == 0:
            return self
        n = self.count + other.count
        delta = other.mean - self.mean
        self.comoment = self.comoment + other.comoment + np.outer(delta, delta) * (self.count * other.count / n)
        self.mean = self.mean + delta * (other.count / n)
        self.count = n
        return self

    @property
    def covariance(self) -> np.ndarray:
        if self.count < 2:
            return np.full((self.dim, self.dim), np.nan)
        return self.comoment / (self.count - 1)

    @property
    def variance(self) -> np.ndarray:
        return np.diag(self.covariance).copy()

    @property
    def mean_se(self) -> np.ndarray:
        return np.sqrt(self.variance / self.count)


def covariance_with_se(samples: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Sample covariance matrix and a delta-method standard error per entry."""
    x = np.asarray(samples, dtype=float)
    n = x.shape[0]
    d = x - x.mean(axis=0)
    cov = d.T @ d / (n - 1)
    prod_sq = (d ** 2).T @ (d ** 2) / n
    se = np.sqrt(np.maximum(prod_sq - (d.T @ d / n) ** 2, 0.0) / n)
    return cov, se


@dataclass(frozen=True)
class KSResult:
    D: float
    n: int
    critical_05: float
    critical_01: float

    @property
    def reject_05(self) -> bool:
        return self.D > self.critical_05

    @property
    def reject_01(self) -> bool:
        return self.D > self.critical_01

    def to_dict(self) -> dict:
        return {**asdict(self), "reject_05": self.reject_05, "reject_01": self.reject_01}


def ks_statistic(samples, cdf: Callable[[np.ndarray], np.ndarray]) -> KSResult:
    """One-sample Kolmogorov-Smirnov distance against a continuous CDF."""
    x = np.sort(np.asarray(samples, dtype=float))
    n = len(x)
    if n < 30:
        raise ValueError(f"KS test needs at least 30 samples, got {n}")
    F = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    D = float(max(np.max(i / n - F), np.max(F - (i - 1) / n)))
    root = math.sqrt(n)
    return KSResult(D, n, KS_CRITICAL[0.05] / root, KS_CRITICAL[0.01] / root)


def ks_two_sample(a, b) -> float:
    """p-value of the two-sample KS test."""
    return float(sps.ks_2samp(a, b).pvalue)


def _pooled_bins(weights: np.ndarray, min_expected: float) -> list[tuple[int, int]]:
    # merge integer cells left to right until each carries enough expected mass
    bins, start, acc = [], 0, 0.0
    for k, w in enumerate(weights):
        acc += w
        if acc >= min_expected:
            bins.append((start, k))
            start, acc = k + 1, 0.0
    if start < len(weights):
        if bins:
            bins[-1] = (bins[-1][0], len(weights) - 1)
        else:
            bins.append((start, len(weights) - 1))
    return bins


def chi2_two_sample(a, b, min_expected: float = 5.0) -> float:
    """p-value of a chi-square homogeneity test between two integer samples."""
    a = np.asarray(a, dtype=np.int64)
    b = np.asarray(b, dtype=np.int64)
    top = int(max(a.max(), b.max()))
    ca = np.bincount(a, minlength=top + 1)
    cb = np.bincount(b, minlength=top + 1)
    total = ca + cb
    expected_small = total * min(len(a), len(b)) / (len(a) + len(b))
    bins = _pooled_bins(expected_small, min_expected)
    table = np.array([[ca[s:e + 1].sum() for s, e in bins], [cb[s:e + 1].sum() for s, e in bins]])
    if table.shape[1] < 2:
        return 1.0
    return float(sps.chi2_contingency(table, correction=False)[1])


def chi2_goodness_of_fit(samples, pmf: np.ndarray, min_expected: float = 5.0) -> float:
    """p-value of a chi-square test of integer samples against ``pmf`` on 0..len-1
    (the last cell absorbs the upper tail)."""
    x = np.asarray(samples, dtype=np.int64)
    n = len(x)
    probs = np.asarray(pmf, dtype=float).copy()
    top = len(probs) - 1
    probs[top] = max(0.0, 1.0 - probs[:top].sum())
    counts = np.bincount(np.minimum(x, top), minlength=top + 1)
    bins = _pooled_bins(probs * n, min_expected)
    obs = np.array([counts[s:e + 1].sum() for s, e in bins])
    exp = np.array([probs[s:e + 1].sum() for s, e in bins]) * n
    if len(obs) < 2:
        return 1.0
    exp *= obs.sum() / exp.sum()
    return float(sps.chisquare(obs, exp).pvalue)


def mixture_exponential_cdf(means: np.ndarray) -> Callable[[np.ndarray], np.ndarray]:
    """CDF of an exponential whose mean is drawn from the empirical ``means``."""
    s = np.asarray(means, dtype=float)

    def cdf(x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        out = np.empty_like(x)
        pos = s > 0
        for k, xv in enumerate(x):
            if xv < 0:
                out[k] = 0.0
                continue
            vals = np.ones_like(s)
            vals[pos] = -np.expm1(-xv / s[pos])
            out[k] = vals.mean()
        return out

    return cdf


def mixture_geometric_pmf(means: np.ndarray, kmax: int) -> np.ndarray:
    """P(K=k), k=0..kmax, for a geometric whose mean is drawn from ``means``."""
    s = np.asarray(means, dtype=float)[:, None]
    k = np.arange(kmax + 1)[None, :]
    return (np.power(s / (s + 1.0), k) / (s + 1.0)).mean(axis=0)


# --- hydrostatic profile -----------------------------------------------------

PSI_LIBRARY: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "one": lambda x: np.ones_like(x),
    "x": lambda x: x,
    "bump": lambda x: x * (1.0 - x),
}


def tabulate_psi(psi, n: int) -> np.ndarray:
    """Test function values at k/N, k = 0..N, from a name, callable, or table."""
    if isinstance(psi, str):
        psi = PSI_LIBRARY[psi]
    if callable(psi):
        return np.asarray(psi(np.arange(n + 1) / n), dtype=float)
    psi = np.asarray(psi, dtype=float)
    if psi.shape != (n + 1,):
        raise ValueError(f"tabulated psi needs {n + 1} values")
    return psi


def pair_empirical(config, psi: np.ndarray) -> np.ndarray | float:
    """(1/N) sum_k psi(k/N) O_k; rows of a 2-D input are separate configurations."""
    config = np.asarray(config, dtype=float)
    n = config.shape[-1] - 1
    out = config @ np.asarray(psi, dtype=float) / n
    return out if np.ndim(out) else float(out)


def hydrostatic_bound(n: int, t_minus: float, t_plus: float, psi: np.ndarray, eps: float = 1.0) -> float:
    """Chebyshev-side bound built from the modified covariances, summed over k, l = 1..N."""
    C = tilde_correlations(n, t_minus, t_plus)[1:, 1:]
    p = np.asarray(psi, dtype=float)[1:]
    return float(p @ C @ p) / (n * n * eps * eps)


@dataclass
class HydrostaticRow:
    n: int
    replicas: int
    mean: float
    mean_se: float
    expected_mean: float
    limit_mean: float
    variance: float
    variance_se: float
    exact_variance: float
    bound: float

    @property
    def mean_ok(self) -> bool:
        return abs(self.mean - self.expected_mean) <= 3.0 * self.mean_se

    @property
    def variance_below_bound(self) -> bool:
        return self.variance <= self.bound + 3.0 * self.variance_se


def hydrostatic_experiment(ns: Sequence[int], replicas: int, psi, t_minus: float, t_plus: float,
                           seed: int, workers: int = 1) -> list[HydrostaticRow]:
    from .graph import path_graph
    from .opinion import stationary_opinion_samples

    ns = list(ns)
    if ns != sorted(ns) or len(set(ns)) != len(ns):
        raise ValueError("lattice sizes must be strictly increasing")
    rows = []
    for n in ns:
        p = tabulate_psi(psi, n)
        samples = stationary_opinion_samples(path_graph(n, t_minus, t_plus), replicas, seed=seed, key=n,
                                             workers=workers)
        y = pair_empirical(samples, p)
        m = float(y.mean())
        # identical replicas (constant boundary) must give exactly zero
        var = float(y.var(ddof=1)) if replicas > 1 and np.ptp(y) > 0 else 0.0
        m4 = float(np.mean((y - m) ** 4))
        var_se = math.sqrt(max(m4 - var * var, 0.0) / replicas)
        xs = np.linspace(0.0, 1.0, 20001)
        limit = float(trapezoid(tabulate_psi(psi, 20000) * (t_minus + xs * (t_plus - t_minus)), xs))
        C = solve_second_moments(n, t_minus, t_plus).covariance
        rows.append(HydrostaticRow(
            n=n, replicas=replicas, mean=m, mean_se=math.sqrt(var / replicas),
            expected_mean=pair_empirical(mean_profile(n, t_minus, t_plus), p), limit_mean=limit,
            variance=var, variance_se=var_se, exact_variance=max(float(p @ C @ p) / (n * n), 0.0),
            bound=hydrostatic_bound(n, t_minus, t_plus, p),
        ))
    return rows


# --- independence of X and T -------------------------------------------------

TRANSFORMS: dict[str, Callable[[np.ndarray], np.ndarray]] = {
    "exp": lambda x: np.exp(-x),
    "ratio": lambda x: x / (1.0 + np.abs(x)),
}


@dataclass
class IndependenceReport:
    replicas: int
    vertices: list[int]
    transform: str
    correlations: np.ndarray
    band: float

    @property
    def consistent(self) -> bool:
        return bool(np.all(np.abs(self.correlations) <= self.band))

    def to_dict(self) -> dict:
        return {"replicas": self.replicas, "vertices": self.vertices, "transform": self.transform,
                "correlations": self.correlations.tolist(), "band": self.band,
                "verdict": "consistent" if self.consistent else "not consistent"}


def independence_report(X: np.ndarray, T: np.ndarray, vertices: Sequence[int], transform: str = "exp",
                        sigmas: float = 3.0) -> IndependenceReport:
    """Correlation of f(X_i) with f(T_i) per listed vertex, against a
    ``sigmas / sqrt(R)`` band (the null standard error of a correlation)."""
    X = np.asarray(X, dtype=float)
    T = np.asarray(T, dtype=float)
    R = X.shape[0]
    if R < 3:
        raise ValueError("need at least 3 replicas")
    f = TRANSFORMS[transform]
    out = []
    for v in vertices:
        a, b = f(X[:, v]), f(T[:, v])
        if a.std() == 0 or b.std() == 0:
            out.append(0.0)  # a constant is independent of everything
            continue
        out.append(float(np.corrcoef(a, b)[0, 1]))
    return IndependenceReport(R, list(vertices), transform, np.array(out), sigmas / math.sqrt(R))
