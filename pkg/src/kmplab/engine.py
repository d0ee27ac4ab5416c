"""Drivers: single-trajectory simulation over an event stream, and a
replica-vectorised ensemble engine for the Monte Carlo experiments."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from typing import Any, Callable

import numpy as np

from .events import EventStream, MarkedEvent, substream
from .graph import Graph

log = logging.getLogger(__name__)

KINDS = ("kmp", "kmp-original", "joint", "opinion", "gossip", "modified-opinion",
         "discrete", "absorbed", "eta", "coupled")


def _step_for(kind: str, graph: Graph) -> Callable[[Any, MarkedEvent, Graph], Any]:
    from . import coupling, disagreement, kmp, kmp_discrete, opinion

    if kind == "modified-opinion":
        n = graph.n_vertices - 1
        return lambda c, e, g: opinion.step_modified_opinion(c, e, g, n)
    table = {
        "kmp": kmp.step_kmp,
        "kmp-original": kmp.step_kmp_original,
        "joint": kmp.step_joint,
        "opinion": opinion.step_opinion,
        "gossip": opinion.step_gossip,
        "discrete": kmp_discrete.step_discrete,
        "absorbed": kmp_discrete.step_absorbed,
        "eta": disagreement.step_eta,
        "coupled": coupling.step_coupled,
    }
    try:
        return table[kind]
    except KeyError:
        raise ValueError(f"unknown process kind {kind!r}; choose from {', '.join(KINDS)}") from None


@dataclass
class Trajectory:
    final: Any
    n_events: int
    sample_times: list[float] = field(default_factory=list)
    samples: list[Any] = field(default_factory=list)


def simulate(kind: str, graph: Graph, initial, stream: EventStream, horizon: float | None = None,
             n_events: int | None = None, sample_times=None) -> Trajectory:
    """Apply ``kind``'s step function to every event up to ``horizon`` (or for
    ``n_events`` events).

    Samples are taken at ``sample_times`` with the right-continuous
    convention: the configuration reported at time s includes every event at
    time <= s.
    """
    if (horizon is None) == (n_events is None):
        raise ValueError("give exactly one of horizon and n_events")
    if (kind == "kmp-original") != stream.boundary_refresh:
        raise ValueError("kmp-original needs a stream with boundary refresh clocks (and only it does)")
    step = _step_for(kind, graph)
    times = sorted(float(s) for s in (() if sample_times is None else sample_times))
    if horizon is not None and times and times[-1] > horizon:
        raise ValueError("sample times beyond the horizon")
    traj = Trajectory(initial, 0, times, [])
    config = initial
    next_sample = 0

    def record_until(t: float) -> None:
        nonlocal next_sample
        while next_sample < len(times) and times[next_sample] < t:
            traj.samples.append(config)
            next_sample += 1

    if horizon is not None:
        events = stream.events_until(horizon)
    else:
        events = (stream.next_event() for _ in range(n_events))
    count = 0
    for ev in events:
        record_until(ev.time)
        config = step(config, ev, graph)
        count += 1
    record_until(np.inf)
    traj.final = config
    traj.n_events = count
    return traj


# ---------------------------------------------------------------------------
# Replica-vectorised engine.  State arrays have shape (replicas, vertices); on
# each pass every still-active replica consumes one event.  All replicas share
# one generator, so results depend on (seed, replicas) jointly.

def ensemble_step_kmp(Z: np.ndarray, rows, edge, u, b, graph: Graph) -> None:
    i, j = graph.edge_i[edge], graph.edge_j[edge]
    bnd = graph.is_boundary_edge[edge]
    s = Z[rows, i] + Z[rows, j]
    Z[rows, i] = u * s
    Z[rows, j] = np.where(bnd, b * graph.temps[j], (1.0 - u) * s)


def ensemble_step_opinion(O: np.ndarray, rows, edge, v, graph: Graph) -> None:
    i, j = graph.edge_i[edge], graph.edge_j[edge]
    bnd = graph.is_boundary_edge[edge]
    a, c = O[rows, i], O[rows, j]
    w = np.where(a == c, a, v * a + (1.0 - v) * c)
    O[rows, i] = w
    O[rows, j] = np.where(bnd, c, w)


def ensemble_step_modified_opinion(O: np.ndarray, rows, edge, v, aux, graph: Graph, sd: float) -> None:
    i, j = graph.edge_i[edge], graph.edge_j[edge]
    bnd = graph.is_boundary_edge[edge]
    a, c = O[rows, i], O[rows, j]
    emitted = np.where(bnd, c + np.where(aux < 0.5, sd, -sd), c)
    w = np.where(a == emitted, a, v * a + (1.0 - v) * emitted)
    O[rows, i] = w
    O[rows, j] = np.where(bnd, c, w)


def ensemble_step_joint(X: np.ndarray, T: np.ndarray, Z: np.ndarray, rows, edge, u, b, graph: Graph) -> None:
    i, j = graph.edge_i[edge], graph.edge_j[edge]
    bnd = graph.is_boundary_edge[edge]
    xi, xj = X[rows, i], X[rows, j]
    xs = xi + xj
    with np.errstate(invalid="ignore", divide="ignore"):
        v = np.where(xs > 0, xi / xs, 0.5)
    temp = v * T[rows, i] + (1.0 - v) * T[rows, j]
    zs = Z[rows, i] + Z[rows, j]
    X[rows, i] = u * xs
    T[rows, i] = temp
    Z[rows, i] = u * zs
    X[rows, j] = np.where(bnd, b, (1.0 - u) * xs)
    T[rows, j] = np.where(bnd, T[rows, j], temp)
    Z[rows, j] = np.where(bnd, b * graph.temps[j], (1.0 - u) * zs)


def _active_rows(counts: np.ndarray):
    order = np.argsort(-counts, kind="stable")
    sorted_counts = counts[order]
    for step in range(int(counts.max(initial=0))):
        # rows still active are a prefix of ``order``
        yield order[: np.searchsorted(-sorted_counts, -step, side="left")]


def event_counts(rng: np.random.Generator, graph: Graph, replicas: int, t: float | None = None,
                 n_events: int | None = None) -> np.ndarray:
    if (t is None) == (n_events is None):
        raise ValueError("give exactly one of t and n_events")
    if t is not None:
        if t < 0:
            raise ValueError("time horizon must be nonnegative")
        return rng.poisson(graph.n_edges * t, size=replicas)
    return np.full(replicas, int(n_events))


def run_ensemble(kind: str, graph: Graph, initial, seed: int, t: float | None = None,
                 n_events: int | None = None, stream_key: int = 0):
    """Evolve every replica row of ``initial`` independently.

    ``initial`` is a (replicas, vertices) array, or an ``(X, T)`` pair for
    ``kind="joint"`` (returned as ``(X, T, zeta)``).  With ``t`` each replica
    runs a Poisson(|E| t) number of events; with ``n_events`` a fixed number.
    """
    from .kmp_discrete import ensemble_step_absorbed, ensemble_step_discrete

    rng = substream(seed, 0xE5, stream_key)
    if kind == "joint":
        X, T = (np.array(a, dtype=float) for a in initial)
        Z = X * T
        replicas = X.shape[0]
    else:
        dtype = np.int64 if kind in ("discrete", "absorbed") else float
        S = np.array(initial, dtype=dtype)
        if S.ndim != 2 or S.shape[1] != graph.n_vertices:
            raise ValueError("initial must have shape (replicas, vertices)")
        replicas = S.shape[0]
    if kind == "modified-opinion":
        from .opinion import modified_noise_sd

        sd = modified_noise_sd(graph.n_vertices - 1, graph.t_min, graph.t_max)
    counts = event_counts(rng, graph, replicas, t, n_events)
    for rows in _active_rows(counts):
        n = len(rows)
        edge = rng.integers(0, graph.n_edges, size=n)
        u = rng.random(n)
        if kind == "kmp":
            ensemble_step_kmp(S, rows, edge, u, rng.standard_exponential(n), graph)
        elif kind == "opinion":
            ensemble_step_opinion(S, rows, edge, u, graph)
        elif kind == "modified-opinion":
            ensemble_step_modified_opinion(S, rows, edge, u, rng.random(n), graph, sd)
        elif kind == "joint":
            ensemble_step_joint(X, T, Z, rows, edge, u, rng.standard_exponential(n), graph)
        elif kind == "discrete":
            ensemble_step_discrete(S, rows, edge, u, rng.random(n), graph)
        elif kind == "absorbed":
            ensemble_step_absorbed(S, rows, edge, u, graph)
        else:
            raise ValueError(f"kind {kind!r} has no ensemble engine")
    if kind == "joint":
        return X, T, Z
    return S
