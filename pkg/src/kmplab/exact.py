"""Exact stationary moments of the one-dimensional opinion process.

First moments solve a discrete harmonic problem (linear profile).  Second
moments solve a sparse system on the triangle ``0 <= k <= l <= N`` coming
from the two-particle absorbed dual walk.  The modified model (noisy
boundary agents) has a closed-form solution that dominates the true one.
"""

from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import scipy.sparse as sp
from scipy.linalg import solve_banded
from scipy.sparse.linalg import spsolve

log = logging.getLogger(__name__)

RESIDUAL_TOL = 1e-10


class SingularSystemError(RuntimeError):
    pass


@dataclass
class MomentTable:
    n: int
    t_minus: float
    t_plus: float
    first: np.ndarray
    second: np.ndarray                 # full symmetric (N+1, N+1)
    provenance: str                    # "exact-solve" | "analytic" | "monte-carlo"
    second_se: np.ndarray | None = None
    residual: float | None = None
    meta: dict = field(default_factory=dict)

    @property
    def covariance(self) -> np.ndarray:
        return self.second - np.outer(self.first, self.first)

    def write_csv(self, path: str | Path, extra: dict[str, np.ndarray] | None = None) -> None:
        """Rows ``k, l, M, C`` over the triangle k <= l, plus any extra matrices."""
        extra = extra or {}
        C = self.covariance
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["k", "l", "M", "C", *extra])
            for k in range(self.n + 1):
                for l in range(k, self.n + 1):
                    w.writerow([k, l, f"{self.second[k, l]:.17g}", f"{C[k, l]:.17g}",
                                *(f"{X[k, l]:.17g}" for X in extra.values())])

    def to_dict(self) -> dict:
        return {
            "n": self.n, "t_minus": self.t_minus, "t_plus": self.t_plus,
            "provenance": self.provenance, "residual": self.residual,
            "first": self.first.tolist(), "second": self.second.tolist(),
            "covariance": self.covariance.tolist(), **self.meta,
        }

    def write_json(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(self.to_dict(), indent=1))


def _check_n(n: int, *temps: float) -> None:
    if n < 2:
        raise ValueError("lattice size must be at least 2")
    if not all(math.isfinite(t) for t in temps):
        raise ValueError("boundary temperatures must be finite")


def mean_profile(n: int, t_minus: float, t_plus: float) -> np.ndarray:
    _check_n(n, t_minus, t_plus)
    k = np.arange(n + 1)
    m = t_minus + k * (t_plus - t_minus) / n
    m[n] = t_plus  # avoid rounding at the right end
    return m


def mean_profile_solve(n: int, t_minus: float, t_plus: float) -> np.ndarray:
    """Same profile from the tridiagonal harmonic system (cross-check)."""
    _check_n(n)
    inner = n - 1
    ab = np.zeros((3, inner))
    ab[0, 1:] = -0.5
    ab[1, :] = 1.0
    ab[2, :-1] = -0.5
    rhs = np.zeros(inner)
    rhs[0] += 0.5 * t_minus
    rhs[-1] += 0.5 * t_plus
    return np.concatenate([[t_minus], solve_banded((1, 1), ab, rhs), [t_plus]])


def triangle_index(n: int) -> dict[tuple[int, int], int]:
    idx = {}
    for k in range(n + 1):
        for l in range(k, n + 1):
            idx[(k, l)] = len(idx)
    return idx


def _key(a: int, b: int) -> tuple[int, int]:
    return (a, b) if a <= b else (b, a)


def assemble_second_moment_system(n: int, t_minus: float, t_plus: float, corners: tuple[float, float] | None = None):
    """Sparse system ``A x = b`` over the triangle; returns ``(A, b, index)``.

    Boundary lines are identity rows.  ``corners`` overrides the two corner
    values ``(M_00, M_NN)``; by default they are ``t_minus**2`` and ``t_plus**2``.
    """
    _check_n(n)
    idx = triangle_index(n)
    m = mean_profile(n, t_minus, t_plus)
    rows, cols, vals = [], [], []
    b = np.zeros(len(idx))

    def put(r: int, pair: tuple[int, int], v: float) -> None:
        rows.append(r)
        cols.append(idx[_key(*pair)])
        vals.append(v)

    for (k, l), r in idx.items():
        put(r, (k, l), 1.0)
        if k == 0 or l == n:
            if (k, l) == (0, 0) and corners is not None:
                b[r] = corners[0]
            elif (k, l) == (n, n) and corners is not None:
                b[r] = corners[1]
            elif k == 0:
                b[r] = t_minus * m[l]
            else:
                b[r] = m[k] * t_plus
            continue
        if k == l:
            for pair in ((k - 1, k - 1), (k - 1, k), (k + 1, k + 1), (k, k + 1)):
                put(r, pair, -0.25)
        elif l == k + 1:
            for pair in ((l - 2, l), (l - 1, l + 1)):
                put(r, pair, -0.3)
            for pair in ((l - 1, l - 1), (l, l)):
                put(r, pair, -0.2)
        else:
            for pair in ((k - 1, l), (k + 1, l), (k, l - 1), (k, l + 1)):
                put(r, pair, -0.25)
    A = sp.csr_matrix((vals, (rows, cols)), shape=(len(idx), len(idx)))
    return A, b, idx


def _to_matrix(x: np.ndarray, idx: dict, n: int) -> np.ndarray:
    M = np.empty((n + 1, n + 1))
    for (k, l), r in idx.items():
        M[k, l] = M[l, k] = x[r]
    return M


def solve_second_moments(n: int, t_minus: float, t_plus: float,
                         corners: tuple[float, float] | None = None) -> MomentTable:
    A, b, idx = assemble_second_moment_system(n, t_minus, t_plus, corners)
    x = spsolve(A.tocsc(), b)
    resid = float(np.max(np.abs(A @ x - b))) if np.all(np.isfinite(x)) else np.inf
    scale = max(1.0, float(np.max(np.abs(b))))
    if not resid <= RESIDUAL_TOL * scale:
        raise SingularSystemError(f"second-moment solve failed for N={n}: residual {resid:.3g}")
    return MomentTable(n, t_minus, t_plus, mean_profile(n, t_minus, t_plus), _to_matrix(x, idx, n),
                       "exact-solve", residual=resid)


def modified_variance(n: int, t_minus: float, t_plus: float) -> float:
    return (t_plus - t_minus) ** 2 / (2.0 * n * (n + 1))


def tilde_coefficients(n: int, t_minus: float, t_plus: float) -> dict[str, float]:
    d = t_plus - t_minus
    sig2 = modified_variance(n, t_minus, t_plus)
    return {
        "A": d * (t_plus + n * t_minus) / (n * (n + 1)),
        "B": t_minus * d / n,
        "C": d * d / (n * (n + 1)),
        "D": t_minus ** 2,
        "E": sig2 + t_minus ** 2,
    }


def tilde_moments(n: int, t_minus: float, t_plus: float) -> MomentTable:
    """Closed-form second moments of the modified model."""
    _check_n(n)
    c = tilde_coefficients(n, t_minus, t_plus)
    k = np.arange(n + 1, dtype=float)
    K, L = np.meshgrid(k, k, indexing="ij")
    lo, hi = np.minimum(K, L), np.maximum(K, L)
    M = c["A"] * lo + c["B"] * hi + c["C"] * lo * hi + c["D"]
    diag = c["C"] * k ** 2 + (c["A"] + c["B"]) * k + c["E"]
    M[np.diag_indices(n + 1)] = diag
    return MomentTable(n, t_minus, t_plus, mean_profile(n, t_minus, t_plus), M, "analytic", meta={"coefficients": c})


def tilde_correlations(n: int, t_minus: float, t_plus: float) -> np.ndarray:
    """Closed-form covariance bound (covariances of the modified model)."""
    _check_n(n)
    k = np.arange(n + 1, dtype=float)
    K, L = np.meshgrid(k, k, indexing="ij")
    lo, hi = np.minimum(K, L), np.maximum(K, L)
    C = (t_plus - t_minus) ** 2 / (n + 1) * (lo / n) * (1.0 - hi / n)
    C[np.diag_indices(n + 1)] += modified_variance(n, t_minus, t_plus)
    return C


def modified_corner_values(n: int, t_minus: float, t_plus: float) -> tuple[float, float, float]:
    """Terminal function of the modified model at absorbed pairs:
    ``(F(0,0), F(N,N), F(0,N))``."""
    _check_n(n)
    s2 = modified_variance(n, t_minus, t_plus)
    return s2 + t_minus ** 2, s2 + t_plus ** 2, t_minus * t_plus


def corner_function(n: int, t_minus: float, t_plus: float) -> np.ndarray:
    """F as a 2x2 array over boundary positions (index 0 is vertex 0, index 1 is vertex N)."""
    f00, fnn, f0n = modified_corner_values(n, t_minus, t_plus)
    return np.array([[f00, f0n], [f0n, fnn]])
