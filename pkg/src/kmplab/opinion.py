"""Opinion (random averaging) process with stubborn boundary agents.

Includes the arc-sine law of the one-agent case, the backward dual walks,
an exact stationary sampler by coupling from the past, and the modified
process whose boundary agents emit noisy opinions.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from ._kernels import extend_into_past
from .events import MarkedEvent, substream
from .graph import Graph

# Interior-source weight below which the affine state counts as coalesced.  The
# output then differs from the infinite-past limit by at most tol * span / 2.
COALESCENCE_TOL = 1e-12


def step_opinion(config: np.ndarray, event: MarkedEvent, graph: Graph) -> np.ndarray:
    i, j = graph.edges[event.edge]
    out = config.copy()
    a, b = config[i], config[j]
    if a == b:
        # keeps agreement exact; v*a + (1-v)*a may round away from a
        return out
    w = event.V * a + (1.0 - event.V) * b
    out[i] = w
    if not graph.is_boundary_edge[event.edge]:
        out[j] = w
    return out


def step_gossip(config: np.ndarray, event: MarkedEvent, graph: Graph) -> np.ndarray:
    """Mean-averaging variant: both endpoints move to the midpoint."""
    i, j = graph.edges[event.edge]
    out = config.copy()
    a, b = config[i], config[j]
    if a == b:
        return out
    w = 0.5 * (a + b)
    out[i] = w
    if not graph.is_boundary_edge[event.edge]:
        out[j] = w
    return out


def modified_noise_sd(n: int, t_minus: float, t_plus: float) -> float:
    return abs(t_plus - t_minus) / math.sqrt(2.0 * n * (n + 1))


def step_modified_opinion(config: np.ndarray, event: MarkedEvent, graph: Graph, n: int) -> np.ndarray:
    """Boundary agents emit ``T_j +/- sd`` (sign from the ``aux`` mark) instead of ``T_j``.

    The two-point law matches the required mean ``T_j`` and variance
    ``(T_+ - T_-)^2 / (2N(N+1))``; only those two moments enter the
    second-moment equations.  The stored boundary coordinate stays ``T_j``.
    """
    if not graph.is_boundary_edge[event.edge]:
        return step_opinion(config, event, graph)
    i, j = graph.edges[event.edge]
    sd = modified_noise_sd(n, graph.t_min, graph.t_max)
    emitted = graph.temps[j] + (sd if event.aux < 0.5 else -sd)
    out = config.copy()
    out[i] = event.V * config[i] + (1.0 - event.V) * emitted
    return out


def arcsine_density(y, t_minus: float, t_plus: float):
    """Arc-sine density on (t_minus, t_plus); ``inf`` at the endpoints, 0 outside."""
    if not t_minus < t_plus:
        raise ValueError("need t_minus < t_plus")
    y = np.asarray(y, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        d = 1.0 / (np.pi * np.sqrt((y - t_minus) * (t_plus - y)))
    d = np.where((y < t_minus) | (y > t_plus), 0.0, d)
    d = np.where((y == t_minus) | (y == t_plus), np.inf, d)
    return d if d.ndim else float(d)


def arcsine_cdf(y, t_minus: float, t_plus: float):
    if not t_minus < t_plus:
        raise ValueError("need t_minus < t_plus")
    y = np.asarray(y, dtype=float)
    u = np.clip((y - t_minus) / (t_plus - t_minus), 0.0, 1.0)
    c = 2.0 / np.pi * np.arcsin(np.sqrt(u))
    return c if c.ndim else float(c)


def dual_walk_step(position: int, event: MarkedEvent, graph: Graph) -> int:
    """One backward step of a dual walk through the event's edge."""
    i, j = graph.edges[event.edge]
    if position not in (i, j) or graph.is_boundary_vertex[position]:
        return position
    return i if event.Uprime < event.V else j


class AffineState:
    """Row-stochastic map from sources to current opinions.

    ``weights[k, s]`` is the coefficient of source ``s`` (an interior vertex's
    value at the window start, or a boundary temperature) in vertex ``k``'s
    current opinion.  Boundary rows are point masses on themselves.
    """

    def __init__(self, graph: Graph):
        self.graph = graph
        self.weights = np.eye(graph.n_vertices)

    def advance(self, edge: int, v: float) -> None:
        """Apply an event forward in time (row averaging)."""
        i, j = self.graph.edges[edge]
        row = v * self.weights[i] + (1.0 - v) * self.weights[j]
        self.weights[i] = row
        if not self.graph.is_boundary_edge[edge]:
            self.weights[j] = row

    def prepend(self, edge: int, v: float) -> None:
        """Insert an event before the window start (column split)."""
        i, j = self.graph.edges[edge]
        P = self.weights
        if self.graph.is_boundary_edge[edge]:
            moved = (1.0 - v) * P[:, i]
            P[:, i] = v * P[:, i]
            P[:, j] += moved
            P[j, :] = 0.0
            P[j, j] = 1.0
        else:
            a = P[:, i] + P[:, j]
            P[:, i] = v * a
            P[:, j] = (1.0 - v) * a

    def interior_mass(self) -> np.ndarray:
        return self.weights[:, self.graph.interior_ids].sum(axis=1)

    def opinions(self) -> np.ndarray:
        """Opinions with the unresolved interior sources set to the middle of
        the boundary range; exact once :meth:`interior_mass` is negligible."""
        return _opinions_from_weights(self.weights, self.interior_mass(), self.graph)


def _opinions_from_weights(W: np.ndarray, mass: np.ndarray, graph: Graph) -> np.ndarray:
    lo, span = graph.t_min, graph.t_max - graph.t_min
    b = graph.boundary_ids
    out = lo + W[:, b] @ (graph.temps[b] - lo) + mass * (0.5 * span)
    out[b] = graph.temps[b]
    return out


def _check_sampler_graph(graph: Graph) -> None:
    if len(graph.boundary_ids) == 0:
        raise ValueError("stationary opinion sampling needs at least one boundary vertex")


def sample_stationary_opinion(
    graph: Graph,
    rng: np.random.Generator,
    tol: float = COALESCENCE_TOL,
    max_events: int = 10**9,
    min_events: int = 0,
) -> np.ndarray:
    """Stationary opinion configuration by coupling from the past.

    Events are generated backwards in time from 0 and prepended to an
    :class:`AffineState` until every interior row's weight on the unknown
    interior past is at most ``tol``.  ``min_events`` forces a longer
    backward window before the coalescence check starts counting.
    """
    _check_sampler_graph(graph)
    if graph.t_min == graph.t_max:
        return np.full(graph.n_vertices, graph.t_min)
    rows = graph.interior_ids
    n_e = graph.n_edges
    Q = np.zeros((graph.n_vertices, len(rows)))
    Q[rows, np.arange(len(rows))] = 1.0
    mass = np.ones(len(rows))
    used = 0
    chunk = max(64, 8 * n_e)
    if min_events:
        edges = rng.integers(0, n_e, size=min_events)
        vs = rng.random(min_events)
        extend_into_past(Q, mass, graph.edge_i, graph.edge_j, graph.is_boundary_edge, edges, vs, -1.0)
        used = min_events
        mass[:] = Q[rows].sum(axis=0)
    while mass.max() > tol:
        if used >= max_events:
            raise RuntimeError(
                f"no coalescence after {used} events (max interior weight {mass.max():.3g}); "
                "is every interior vertex connected to the boundary?"
            )
        edges = rng.integers(0, n_e, size=chunk)
        vs = rng.random(chunk)
        k, done = extend_into_past(Q, mass, graph.edge_i, graph.edge_j, graph.is_boundary_edge, edges, vs, tol)
        used += k
        chunk = min(chunk * 2, 1 << 20)
        if done:
            break
    W = np.zeros((graph.n_vertices, graph.n_vertices))
    W[rows] = Q.T
    full_mass = np.zeros(graph.n_vertices)
    full_mass[rows] = mass
    return _opinions_from_weights(W, full_mass, graph)


def sample_stationary_opinion_doubling(
    graph: Graph,
    rng: np.random.Generator,
    tol: float = COALESCENCE_TOL,
    window: float = 1.0,
    max_doublings: int = 40,
) -> np.ndarray:
    """Textbook CFTP: windows ``[-W, 0]`` with ``W`` doubling, the event
    realisation reused on overlaps, and the affine state replayed forward.

    Slower than :func:`sample_stationary_opinion`; kept as an independent route.
    """
    _check_sampler_graph(graph)
    if graph.t_min == graph.t_max:
        return np.full(graph.n_vertices, graph.t_min)
    rate = float(graph.n_edges)
    edges: list[int] = []
    vs: list[float] = []
    t = 0.0
    pending = rng.standard_exponential() / rate
    for _ in range(max_doublings):
        # rings are generated backwards from time 0; older windows reuse them
        while t + pending <= window:
            t += pending
            edges.append(int(rng.integers(0, graph.n_edges)))
            vs.append(float(rng.random()))
            pending = rng.standard_exponential() / rate
        state = AffineState(graph)
        for e, v in zip(reversed(edges), reversed(vs)):
            state.advance(e, v)
        if state.interior_mass().max() <= tol:
            return state.opinions()
        window *= 2.0
    raise RuntimeError(f"no coalescence within {max_doublings} window doublings")


def stationary_opinion_samples(
    graph: Graph,
    n_samples: int,
    seed: int,
    tol: float = COALESCENCE_TOL,
    workers: int = 1,
    first_replica: int = 0,
    min_events: int = 0,
    key: int = 0,
) -> np.ndarray:
    """``n_samples`` independent CFTP draws; replica ``r`` uses substream ``(seed, key, r)``."""

    def one(r: int) -> np.ndarray:
        return sample_stationary_opinion(graph, substream(seed, key, r), tol=tol, min_events=min_events)

    reps = range(first_replica, first_replica + n_samples)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            rows = list(pool.map(one, reps))
    else:
        rows = [one(r) for r in reps]
    return np.array(rows).reshape(n_samples, graph.n_vertices)


def opinion_nu_sampler(graph: Graph, tol: float = COALESCENCE_TOL):
    """Parameter-measure sampler (for the mixture samplers) drawing from the stationary opinion law."""
    return lambda rng: sample_stationary_opinion(graph, rng, tol=tol)
