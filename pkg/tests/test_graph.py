import numpy as np
import pytest
from hypothesis import given, strategies as st

from kmplab.graph import (Graph, GraphError, build_graph, edge_neighbor_count, grid_graph, path_graph,
                          star_graph)


def test_minimal_graph():
    g = build_graph([0, 1, 2], [1], [(1, 0), (1, 2)], {0: 1.0, 2: 1.0})
    assert g.interior == {1} and g.boundary == {0, 2}
    assert g.edges == ((1, 0), (1, 2))
    assert list(g.is_boundary_edge) == [True, True]


def test_duplicate_interior_edge_rejected():
    with pytest.raises(GraphError, match="duplicate"):
        build_graph(range(4), [1, 2], [(1, 0), (1, 2), (2, 1), (2, 3)], {0: 1.0, 3: 1.0})


def test_boundary_boundary_edge_rejected():
    with pytest.raises(GraphError, match="boundary"):
        build_graph(range(3), [1], [(1, 0), (0, 2)], {0: 1.0, 2: 1.0})


@pytest.mark.parametrize("temps, msg", [({0: 1.0}, "missing"), ({0: 1.0, 2: -1.0}, "invalid"),
                                        ({0: 1.0, 2: float("nan")}, "invalid")])
def test_bad_temperatures(temps, msg):
    with pytest.raises(GraphError, match=msg):
        build_graph(range(3), [1], [(1, 0), (1, 2)], temps)


def test_zero_temperature_allowed():
    g = path_graph(3, 0.0, 1.0)
    assert g.temps[0] == 0.0


def test_boundary_edges_flipped_toward_boundary():
    g = build_graph(range(3), [1], [(0, 1), (2, 1)], {0: 1.0, 2: 2.0})
    assert g.edges == ((1, 0), (1, 2))


def test_other_errors():
    with pytest.raises(GraphError):
        build_graph([0, 2], [0], [(0, 2)], {2: 1.0})  # non-dense ids
    with pytest.raises(GraphError):
        build_graph(range(2), [0, 1], [(0, 0)], {})
    with pytest.raises(GraphError):
        build_graph(range(2), [0], [(0, 5)], {1: 1.0})
    with pytest.raises(GraphError):
        build_graph(range(2), [0], [(0, 1)], {0: 1.0, 1: 1.0})


def test_path_graph_layout():
    g = path_graph(3, 1.0, 2.0)
    assert g.vertices == (0, 1, 2, 3)
    assert g.edges == ((1, 0), (1, 2), (2, 3))
    assert dict(g.boundary_temps) == {0: 1.0, 3: 2.0}
    assert g.is_path


def test_path_graph_smallest_and_error():
    g = path_graph(2, 1.0, 1.0)
    assert g.interior == {1}
    assert all(g.is_boundary_edge)
    with pytest.raises(GraphError):
        path_graph(1, 1.0, 2.0)


@pytest.mark.parametrize("n", [2, 3, 7, 20])
def test_path_edge_counts(n):
    g = path_graph(n, 1.0, 2.0)
    assert int(g.is_boundary_edge.sum()) == 2
    assert int((~g.is_boundary_edge).sum()) == n - 2


def test_edge_neighbor_counts():
    assert edge_neighbor_count(path_graph(5, 1, 1), (2, 3)) == 2
    assert edge_neighbor_count(path_graph(2, 1, 1), (1, 0)) == 1
    star = star_graph(0, 4, [1.0] * 4)
    assert edge_neighbor_count(star, (0, 1)) == 3
    with pytest.raises(GraphError):
        edge_neighbor_count(path_graph(5, 1, 1), (0, 4))


def test_grid_graph_shape():
    g = grid_graph(3, 3, 0.0, 1.0)
    assert g.n_vertices == 9 + 6
    assert g.n_edges == 12 + 6
    assert int(g.is_boundary_edge.sum()) == 6


@st.composite
def random_graphs(draw):
    n_int = draw(st.integers(1, 6))
    n_bnd = draw(st.integers(1, 3))
    n = n_int + n_bnd
    pairs = [(a, b) for a in range(n_int) for b in range(a + 1, n)]
    chosen = draw(st.lists(st.sampled_from(pairs), min_size=1, unique=True))
    temps = {j: draw(st.floats(0.1, 10.0)) for j in range(n_int, n)}
    return build_graph(range(n), range(n_int), chosen, temps)


@given(random_graphs())
def test_round_trip(g):
    again = build_graph(g.vertices, g.interior, g.edges, g.boundary_temps)
    assert again == g
    assert Graph.from_dict(g.to_dict()) == g


@given(random_graphs(), st.randoms())
def test_neighbor_count_invariant_under_relabeling(g, rnd):
    # relabel interior and boundary vertices separately
    interior = sorted(g.interior)
    boundary = sorted(g.boundary)
    pi = interior[:]
    pb = boundary[:]
    rnd.shuffle(pi)
    rnd.shuffle(pb)
    relabel = dict(zip(interior + boundary, pi + pb))
    h = build_graph(g.vertices, [relabel[v] for v in interior],
                    [(relabel[i], relabel[j]) for i, j in g.edges],
                    {relabel[j]: t for j, t in g.boundary_temps.items()})
    for i, j in g.edges:
        assert edge_neighbor_count(g, (i, j)) == edge_neighbor_count(h, (relabel[i], relabel[j]))


@given(random_graphs())
def test_boundary_edges_point_to_boundary(g):
    for k, (i, j) in enumerate(g.edges):
        assert g.is_boundary_edge[k] == (j in g.boundary)
        assert i in g.interior
