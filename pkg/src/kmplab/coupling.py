"""Coupling of continuous and discrete KMP through Poisson points on energy intervals.

Each vertex carries an energy ``zeta_i`` and a sorted set of points in
``[0, zeta_i]``; the point counts evolve as the discrete KMP while the
energies evolve as the continuous one, on the same event marks.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .events import MarkedEvent
from .graph import Graph
from .kmp import NuSampler, sample_stationary_energy


@dataclass(frozen=True)
class PointedEnergyConfig:
    """Energies plus either materialised points (``kappa``) or bare counts."""

    zeta: np.ndarray
    kappa: tuple[np.ndarray, ...] | None = None
    counts: np.ndarray | None = None

    def __post_init__(self):
        if (self.kappa is None) == (self.counts is None):
            raise ValueError("give exactly one of kappa and counts")

    @property
    def K(self) -> np.ndarray:
        if self.kappa is not None:
            return np.array([len(p) for p in self.kappa], dtype=np.int64)
        return self.counts.copy()

    def check(self) -> None:
        if self.kappa is None:
            return
        for i, pts in enumerate(self.kappa):
            if len(pts) and (pts[0] < 0 or pts[-1] > self.zeta[i]):
                raise ValueError(f"point outside [0, zeta] at vertex {i}")


def poissonize(zeta: np.ndarray, rng: np.random.Generator, counts_only: bool = False) -> PointedEnergyConfig:
    """Rate-one Poisson points on each ``[0, zeta_i]``."""
    zeta = np.asarray(zeta, dtype=float)
    n = rng.poisson(zeta)
    if counts_only:
        return PointedEnergyConfig(zeta.copy(), counts=n.astype(np.int64))
    kappa = tuple(np.sort(rng.random(k) * z) for k, z in zip(n, zeta))
    return PointedEnergyConfig(zeta.copy(), kappa=kappa)


def step_coupled(config: PointedEnergyConfig, event: MarkedEvent, graph: Graph) -> PointedEnergyConfig:
    i, j = graph.edges[event.edge]
    u = event.U
    zeta = config.zeta.copy()
    s = config.zeta[i] + config.zeta[j]
    zeta[i] = u * s
    boundary = bool(graph.is_boundary_edge[event.edge])
    if boundary:
        zeta[j] = event.B * graph.temps[j]
    else:
        zeta[j] = (1.0 - u) * s

    if config.counts is not None:
        K = config.counts.copy()
        m = int(K[i] + K[j])
        K[i] = event.binomial(m, u)
        K[j] = event.poisson_count(zeta[j]) if boundary else m - K[i]
        return PointedEnergyConfig(zeta, counts=K)

    kappa = list(config.kappa)
    m = len(kappa[i]) + len(kappa[j])
    pts = event.remix_points(m) * s
    cut = u * s
    k = int(np.searchsorted(pts, cut, side="right"))
    kappa[i] = pts[:k]
    if boundary:
        kappa[j] = event.fresh_poisson(zeta[j])
    else:
        # the clamp only matters at the last ulp
        kappa[j] = np.minimum(pts[k:] - cut, zeta[j])
    return PointedEnergyConfig(zeta, kappa=tuple(kappa))


def sample_coupled_stationary(graph: Graph, nu_sampler: NuSampler, rng: np.random.Generator,
                              counts_only: bool = False) -> PointedEnergyConfig:
    return poissonize(sample_stationary_energy(graph, nu_sampler, rng), rng, counts_only)


def run_coupled_counts(Z: np.ndarray, K: np.ndarray, graph: Graph, n_events: int, rng: np.random.Generator) -> None:
    """Counts-only coupled dynamics, vectorised over replica rows (in place)."""
    rows = np.arange(Z.shape[0])
    n = len(rows)
    for _ in range(n_events):
        edge = rng.integers(0, graph.n_edges, size=n)
        u = rng.random(n)
        b = rng.standard_exponential(n)
        i, j = graph.edge_i[edge], graph.edge_j[edge]
        bnd = graph.is_boundary_edge[edge]
        s = Z[rows, i] + Z[rows, j]
        m = K[rows, i] + K[rows, j]
        zj = np.where(bnd, b * graph.temps[j], (1.0 - u) * s)
        ki = rng.binomial(m, u)
        fresh = rng.poisson(zj)
        Z[rows, i] = u * s
        Z[rows, j] = zj
        K[rows, i] = ki
        K[rows, j] = np.where(bnd, fresh, m - ki)


def write_intervals_csv(config: PointedEnergyConfig, path: str | Path) -> None:
    """One row per point (``vertex, zeta, point``); empty vertices get a blank point."""
    if config.kappa is None:
        raise ValueError("interval dumps need materialised points")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["vertex", "zeta", "point"])
        for v, (z, pts) in enumerate(zip(config.zeta, config.kappa)):
            if len(pts) == 0:
                w.writerow([v, f"{z:.17g}", ""])
            for p in pts:
                w.writerow([v, f"{z:.17g}", f"{p:.17g}"])
