"""Finite graphs with an interior/boundary split and boundary temperatures.

Vertices are dense integer ids ``0..n-1``.  Every boundary edge is stored as
``(interior, boundary)`` so downstream code can rely on "second endpoint is
boundary" to recognise boundary edges.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterable, Mapping, Sequence

import numpy as np


class GraphError(ValueError):
    """Raised when graph data violates the structural rules."""


@dataclass(frozen=True)
class Graph:
    vertices: tuple[int, ...]
    interior: frozenset[int]
    boundary: frozenset[int]
    edges: tuple[tuple[int, int], ...]
    boundary_temps: Mapping[int, float] = field(hash=False)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    @property
    def n_edges(self) -> int:
        return len(self.edges)

    @cached_property
    def edge_index(self) -> dict[tuple[int, int], int]:
        return {e: k for k, e in enumerate(self.edges)}

    @cached_property
    def edge_i(self) -> np.ndarray:
        return np.array([e[0] for e in self.edges], dtype=np.int64)

    @cached_property
    def edge_j(self) -> np.ndarray:
        return np.array([e[1] for e in self.edges], dtype=np.int64)

    @cached_property
    def is_boundary_vertex(self) -> np.ndarray:
        mask = np.zeros(self.n_vertices, dtype=bool)
        mask[list(self.boundary)] = True
        return mask

    @cached_property
    def is_boundary_edge(self) -> np.ndarray:
        return self.is_boundary_vertex[self.edge_j]

    @cached_property
    def interior_ids(self) -> np.ndarray:
        return np.flatnonzero(~self.is_boundary_vertex)

    @cached_property
    def boundary_ids(self) -> np.ndarray:
        return np.flatnonzero(self.is_boundary_vertex)

    @cached_property
    def temps(self) -> np.ndarray:
        """Temperature per vertex; interior entries are 0 and meaningless."""
        t = np.zeros(self.n_vertices)
        for j, tj in self.boundary_temps.items():
            t[j] = tj
        return t

    @cached_property
    def t_min(self) -> float:
        return min(self.boundary_temps.values())

    @cached_property
    def t_max(self) -> float:
        return max(self.boundary_temps.values())

    @cached_property
    def edge_neighbors(self) -> tuple[np.ndarray, ...]:
        """For each edge, the other edges sharing exactly one interior vertex with it."""
        incident: dict[int, list[int]] = {v: [] for v in self.vertices}
        for k, (i, j) in enumerate(self.edges):
            incident[i].append(k)
            incident[j].append(k)
        out = []
        for k, (i, j) in enumerate(self.edges):
            nb = set()
            for v in (i, j):
                if v in self.boundary:
                    continue
                nb.update(incident[v])
            nb.discard(k)
            out.append(np.array(sorted(nb), dtype=np.int64))
        return tuple(out)

    @cached_property
    def is_path(self) -> bool:
        """True for graphs produced by :func:`path_graph` (vertices 0..N, boundary {0, N})."""
        n = self.n_vertices - 1
        return n >= 2 and self.edges == _path_edges(n) and self.boundary == frozenset({0, n})

    def edge_id(self, edge: int | tuple[int, int]) -> int:
        if isinstance(edge, (int, np.integer)):
            if not 0 <= edge < self.n_edges:
                raise GraphError(f"unknown edge id {edge}")
            return int(edge)
        key = (int(edge[0]), int(edge[1]))
        if key in self.edge_index:
            return self.edge_index[key]
        if key[::-1] in self.edge_index:
            return self.edge_index[key[::-1]]
        raise GraphError(f"unknown edge {edge}")

    def to_dict(self) -> dict:
        return {
            "vertices": list(self.vertices),
            "interior": sorted(self.interior),
            "edges": [list(e) for e in self.edges],
            "boundary_temps": {str(j): t for j, t in sorted(self.boundary_temps.items())},
        }

    @classmethod
    def from_dict(cls, data: Mapping) -> "Graph":
        temps = {int(j): float(t) for j, t in data["boundary_temps"].items()}
        return build_graph(data["vertices"], data["interior"], data["edges"], temps)


def build_graph(
    vertices: Iterable[int],
    interior: Iterable[int],
    edges: Iterable[Sequence[int]],
    boundary_temps: Mapping[int, float],
) -> Graph:
    """Validate raw graph data and return a :class:`Graph`.

    Boundary edges given as ``(boundary, interior)`` are flipped.  Duplicate
    edges (in either orientation), boundary-boundary edges, self loops, and
    missing or invalid temperatures raise :class:`GraphError`.
    """
    verts = tuple(sorted(int(v) for v in vertices))
    if not verts:
        raise GraphError("empty vertex set")
    if verts != tuple(range(len(verts))):
        raise GraphError("vertices must be the dense ids 0..n-1")
    vset = set(verts)
    inner = frozenset(int(v) for v in interior)
    if not inner <= vset:
        raise GraphError("interior contains unknown vertices")
    bnd = frozenset(vset - inner)

    temps: dict[int, float] = {}
    for j, t in boundary_temps.items():
        j = int(j)
        if j not in bnd:
            raise GraphError(f"temperature given for non-boundary vertex {j}")
        t = float(t)
        # zero is allowed: a frozen reservoir at T=0 is used throughout the 1D examples
        if not math.isfinite(t) or t < 0:
            raise GraphError(f"invalid temperature {t} at vertex {j}")
        temps[j] = t
    missing = bnd - temps.keys()
    if missing:
        raise GraphError(f"missing temperature for boundary vertices {sorted(missing)}")

    seen: set[frozenset[int]] = set()
    out: list[tuple[int, int]] = []
    for e in edges:
        i, j = (int(x) for x in e)
        if i not in vset or j not in vset:
            raise GraphError(f"edge {(i, j)} has an unknown endpoint")
        if i == j:
            raise GraphError(f"self loop at {i}")
        if i in bnd and j in bnd:
            raise GraphError(f"edge {(i, j)} joins two boundary vertices")
        key = frozenset((i, j))
        if key in seen:
            raise GraphError(f"duplicate edge {(i, j)}")
        seen.add(key)
        if i in bnd:
            i, j = j, i
        out.append((i, j))
    if not out:
        raise GraphError("graph has no edges")
    return Graph(verts, inner, bnd, tuple(out), temps)


def _path_edges(n: int) -> tuple[tuple[int, int], ...]:
    return ((1, 0),) + tuple((k, k + 1) for k in range(1, n))


def path_graph(n: int, t_minus: float, t_plus: float) -> Graph:
    """Vertices 0..n, boundary {0, n}, edges (1,0), (1,2), ..., (n-1,n)."""
    if n < 2:
        raise GraphError("path_graph needs n >= 2 (at least one interior vertex)")
    return build_graph(range(n + 1), range(1, n), _path_edges(n), {0: t_minus, n: t_plus})


def star_graph(n_interior_leaves: int, n_boundary_leaves: int, temps: Sequence[float]) -> Graph:
    """Interior centre 0 joined to interior leaves and to boundary leaves.

    ``temps`` gives one temperature per boundary leaf.
    """
    if len(temps) != n_boundary_leaves or n_boundary_leaves < 1:
        raise GraphError("need one temperature per boundary leaf, and at least one")
    n = 1 + n_interior_leaves + n_boundary_leaves
    edges = [(0, v) for v in range(1, n)]
    bleaves = range(1 + n_interior_leaves, n)
    return build_graph(range(n), range(0, 1 + n_interior_leaves), edges, dict(zip(bleaves, temps)))


def grid_graph(rows: int, cols: int, t_left: float, t_right: float) -> Graph:
    """Interior ``rows x cols`` grid; each row gets a left and a right reservoir vertex."""
    if rows < 1 or cols < 1:
        raise GraphError("grid needs positive dimensions")
    cell = lambda r, c: r * cols + c  # noqa: E731
    n_int = rows * cols
    edges = []
    for r in range(rows):
        for c in range(cols):
            if c + 1 < cols:
                edges.append((cell(r, c), cell(r, c + 1)))
            if r + 1 < rows:
                edges.append((cell(r, c), cell(r + 1, c)))
    temps = {}
    for r in range(rows):
        left, right = n_int + 2 * r, n_int + 2 * r + 1
        edges.append((cell(r, 0), left))
        edges.append((cell(r, cols - 1), right))
        temps[left], temps[right] = t_left, t_right
    return build_graph(range(n_int + 2 * rows), range(n_int), edges, temps)


def edge_neighbor_count(graph: Graph, edge: int | tuple[int, int]) -> int:
    """Number of other edges sharing exactly one interior vertex with ``edge``."""
    return len(graph.edge_neighbors[graph.edge_id(edge)])
