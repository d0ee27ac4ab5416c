"""Disagreement (spiking-edge) process: edge indicators of unequal opinions.

A configuration is a uint8 array indexed by edge id.  Legal configurations
have every boundary edge at 1, and their zero edges are interior and pairwise
non-adjacent.
"""

from __future__ import annotations

import csv
import logging
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import numpy as np
from numba import njit
from scipy import stats as sps

from .events import MarkedEvent, substream
from .graph import Graph

log = logging.getLogger(__name__)


class IllegalEtaError(ValueError):
    pass


def legality_problem(eta: np.ndarray, graph: Graph) -> str | None:
    eta = np.asarray(eta)
    if eta.shape != (graph.n_edges,):
        return f"expected {graph.n_edges} edge values, got shape {eta.shape}"
    if not np.all((eta == 0) | (eta == 1)):
        return "values must be 0 or 1"
    if np.any(eta[graph.is_boundary_edge] != 1):
        return "boundary edges must be 1"
    for e in np.flatnonzero(eta == 0):
        nb = graph.edge_neighbors[e]
        if np.any(eta[nb] == 0):
            return f"edge {e} and a neighbouring edge are both 0"
    return None


def is_legal(eta: np.ndarray, graph: Graph) -> bool:
    return legality_problem(eta, graph) is None


def eta_from_opinion(config: np.ndarray, graph: Graph) -> np.ndarray:
    # exact comparison on purpose: coalesced opinions are bitwise equal
    return (config[graph.edge_i] != config[graph.edge_j]).astype(np.uint8)


def step_eta(eta: np.ndarray, event: MarkedEvent, graph: Graph, check: bool = True) -> np.ndarray:
    if check:
        problem = legality_problem(eta, graph)
        if problem:
            raise IllegalEtaError(problem)
    e = event.edge
    out = eta.copy()
    if eta[e] == 0:
        return out
    out[graph.edge_neighbors[e]] = 1
    if not graph.is_boundary_edge[e]:
        out[e] = 0
    return out


def ranks_to_order(ranks: Sequence[int]) -> list[int]:
    """Convert rank labels written under the edges into a processing order.

    ``ranks[e]`` is the (1-based) position of edge ``e`` in the order; the
    result lists 0-based edge ids, first processed first.
    """
    ranks = [int(r) for r in ranks]
    n = len(ranks)
    if sorted(ranks) != list(range(1, n + 1)):
        raise ValueError(f"ranks must be a permutation of 1..{n}")
    order = [0] * n
    for e, r in enumerate(ranks):
        order[r - 1] = e
    return order


def perfect_sim_eta(graph: Graph, order: Sequence[int]) -> np.ndarray:
    """Exact draw from the stationary law, given a uniformly random order.

    Edges are visited in ``order`` (0-based ids, most recent clock ring first).
    A visited edge fixes every still-unexplored neighbour to 1; an interior edge
    that is still unexplored when visited becomes 0.
    """
    order = [int(e) for e in order]
    if sorted(order) != list(range(graph.n_edges)):
        raise ValueError(f"order must be a permutation of the {graph.n_edges} edge ids")
    eta = np.ones(graph.n_edges, dtype=np.uint8)
    explored = graph.is_boundary_edge.copy()
    remaining = int((~explored).sum())
    for e in order:
        if remaining == 0:
            break
        if not explored[e]:
            eta[e] = 0
            explored[e] = True
            remaining -= 1
        for f in graph.edge_neighbors[e]:
            if not explored[f]:
                explored[f] = True
                remaining -= 1
    return eta


def perfect_sim_samples(graph: Graph, n_samples: int, seed: int) -> np.ndarray:
    rng = substream(seed, 0x7A)
    out = np.empty((n_samples, graph.n_edges), dtype=np.uint8)
    for r in range(n_samples):
        out[r] = perfect_sim_eta(graph, rng.permutation(graph.n_edges))
    return out


def edge_marginal_stationary(graph: Graph, edge) -> float:
    """Stationary probability that ``edge`` is 0 (equal endpoint opinions)."""
    e = graph.edge_id(edge)
    if graph.is_boundary_edge[e]:
        return 0.0
    return 1.0 / (len(graph.edge_neighbors[e]) + 1)


def _csr_neighbors(graph: Graph) -> tuple[np.ndarray, np.ndarray]:
    ptr = np.zeros(graph.n_edges + 1, dtype=np.int64)
    ptr[1:] = np.cumsum([len(nb) for nb in graph.edge_neighbors])
    idx = np.concatenate(graph.edge_neighbors).astype(np.int64) if graph.n_edges else np.zeros(0, np.int64)
    return ptr, idx


@njit(cache=True)
def _eta_kernel(eta, ptr, idx, bnd, ev_edge, ev_dt, track, zero_time, holds, hold_states, n_holds, current):
    # zero_time[e] accumulates the time edge e spends at 0 (time before each
    # event is charged to the state held before it).  ``current`` is the
    # running holding time of the tracked edge.
    n_e = eta.shape[0]
    for k in range(ev_edge.shape[0]):
        dt = ev_dt[k]
        for f in range(n_e):
            if eta[f] == 0:
                zero_time[f] += dt
        current += dt
        e = ev_edge[k]
        if eta[e] == 0:
            continue
        before = eta[track]
        for p in range(ptr[e], ptr[e + 1]):
            eta[idx[p]] = 1
        if not bnd[e]:
            eta[e] = 0
        if eta[track] != before:
            if n_holds < holds.shape[0]:
                holds[n_holds] = current
                hold_states[n_holds] = before
                n_holds += 1
            current = 0.0
    return n_holds, current


@dataclass
class EtaRun:
    final: np.ndarray
    total_time: float
    zero_fraction: np.ndarray   # time-average of 1{eta_e = 0}, per edge
    tracked_edge: int
    holding_times: np.ndarray   # completed sojourns of the tracked edge
    holding_states: np.ndarray  # state during each sojourn


def run_eta(graph: Graph, eta0: np.ndarray, n_events: int, seed: int, track: int = 0,
            burn_in: int = 0, chunk: int = 1 << 18) -> EtaRun:
    """Long run of the spiking-edge dynamics with holding-time bookkeeping."""
    problem = legality_problem(eta0, graph)
    if problem:
        raise IllegalEtaError(problem)
    rng = substream(seed, 0xE7)
    eta = np.array(eta0, dtype=np.uint8)
    ptr, idx = _csr_neighbors(graph)
    bnd = graph.is_boundary_edge.astype(np.bool_)
    rate = float(graph.n_edges)
    scratch_zero = np.zeros(graph.n_edges)
    scratch_h = np.zeros(1)
    scratch_s = np.zeros(1, dtype=np.uint8)
    done = 0
    while done < burn_in:
        k = min(chunk, burn_in - done)
        _eta_kernel(eta, ptr, idx, bnd, rng.integers(0, graph.n_edges, size=k),
                    rng.standard_exponential(k) / rate, track, scratch_zero, scratch_h, scratch_s, 1, 0.0)
        done += k
    zero_time = np.zeros(graph.n_edges)
    holds = np.zeros(n_events + 1)
    states = np.zeros(n_events + 1, dtype=np.uint8)
    n_holds, current, total, done = 0, 0.0, 0.0, 0
    while done < n_events:
        k = min(chunk, n_events - done)
        dts = rng.standard_exponential(k) / rate
        n_holds, current = _eta_kernel(eta, ptr, idx, bnd, rng.integers(0, graph.n_edges, size=k), dts,
                                       track, zero_time, holds, states, n_holds, current)
        total += float(dts.sum())
        done += k
    # the first sojourn is censored at its start; drop it
    start = 1 if n_holds else 0
    return EtaRun(eta, total, zero_time / total if total > 0 else zero_time, track,
                  holds[start:n_holds].copy(), states[start:n_holds].copy())


def markov_fit_report(run: EtaRun, graph: Graph) -> dict:
    """Goodness of fit of the tracked edge's sojourns to a two-state chain
    leaving 0 at rate n and 1 at rate 1 (KS per state, exponential laws)."""
    n = len(graph.edge_neighbors[run.tracked_edge])
    out = {"edge": run.tracked_edge, "n": n}
    for state, rate in ((0, float(n)), (1, 1.0)):
        h = run.holding_times[run.holding_states == state]
        if len(h) < 30:
            out[f"state{state}"] = {"count": int(len(h)), "pvalue": None}
            continue
        res = sps.kstest(h, "expon", args=(0, 1.0 / rate))
        out[f"state{state}"] = {"count": int(len(h)), "mean": float(h.mean()), "expected_mean": 1.0 / rate,
                                "D": float(res.statistic), "pvalue": float(res.pvalue)}
    return out


def write_spacetime_csv(times: Sequence[float], etas: Sequence[np.ndarray], path: str | Path) -> None:
    """Rows ``time, edge, eta`` for every recorded configuration."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "edge", "eta"])
        for t, eta in zip(times, etas):
            for e, v in enumerate(eta):
                w.writerow([f"{t:.17g}", e, int(v)])
