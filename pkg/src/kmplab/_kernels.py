"""Compiled inner loops.  Each kernel mirrors a pure-numpy reference elsewhere
in the package and is tested against it on identical inputs."""

import numpy as np
from numba import njit


@njit(cache=True, nogil=True)
def extend_into_past(Q, mass, edge_i, edge_j, edge_bnd, ev_edge, ev_v, tol):
    """Prepend events (newest first) to an affine state stored column-major.

    ``Q[s, r]`` is the weight of source vertex ``s`` in interior output row
    ``r``.  ``mass[r]`` tracks the interior-source weight of row ``r``
    incrementally and is re-summed exactly before declaring coalescence.
    Returns ``(events_used, converged)``.
    """
    n_src, n_rows = Q.shape
    is_bnd_src = np.zeros(n_src, dtype=np.bool_)
    for e in range(edge_j.shape[0]):
        if edge_bnd[e]:
            is_bnd_src[edge_j[e]] = True
    for k in range(ev_edge.shape[0]):
        e = ev_edge[k]
        v = ev_v[k]
        i = edge_i[e]
        j = edge_j[e]
        if edge_bnd[e]:
            worst = 0.0
            for r in range(n_rows):
                p = Q[i, r]
                moved = (1.0 - v) * p
                Q[i, r] = v * p
                Q[j, r] += moved
                mass[r] -= moved
                if mass[r] > worst:
                    worst = mass[r]
            if worst <= tol:
                worst = 0.0
                for r in range(n_rows):
                    m = 0.0
                    for s in range(n_src):
                        if not is_bnd_src[s]:
                            m += Q[s, r]
                    mass[r] = m
                    if m > worst:
                        worst = m
                if worst <= tol:
                    return k + 1, True
        else:
            for r in range(n_rows):
                a = Q[i, r] + Q[j, r]
                Q[i, r] = v * a
                Q[j, r] = (1.0 - v) * a
    return ev_edge.shape[0], False
