"""Continuous boundary-driven KMP energies and the hidden-temperature process.

Configurations are float arrays indexed by vertex id.  Step functions are
pure: they return a new array and leave the input untouched.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .events import MarkedEvent
from .graph import Graph

log = logging.getLogger(__name__)

NuSampler = Callable[[np.random.Generator], np.ndarray]


def check_energy(zeta: np.ndarray, graph: Graph) -> np.ndarray:
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape != (graph.n_vertices,):
        raise ValueError(f"energy config has shape {zeta.shape}, expected ({graph.n_vertices},)")
    if not np.all(np.isfinite(zeta)) or np.any(zeta < 0):
        raise ValueError("energies must be finite and nonnegative")
    return zeta


def step_kmp(zeta: np.ndarray, event: MarkedEvent, graph: Graph) -> np.ndarray:
    i, j = graph.edges[event.edge]
    out = zeta.copy()
    s = zeta[i] + zeta[j]
    out[i] = event.U * s
    if graph.is_boundary_edge[event.edge]:
        out[j] = event.B * graph.temps[j]
    else:
        out[j] = (1.0 - event.U) * s
    return out


def step_kmp_original(zeta: np.ndarray, event: MarkedEvent, graph: Graph) -> np.ndarray:
    """Original boundary mechanism: boundary edges split like interior ones,
    and separate vertex clocks refresh the reservoirs."""
    out = zeta.copy()
    if event.edge < 0:
        j = event.refresh
        out[j] = event.B * graph.temps[j]
        return out
    i, j = graph.edges[event.edge]
    s = zeta[i] + zeta[j]
    out[i] = event.U * s
    out[j] = (1.0 - event.U) * s
    return out


@dataclass(frozen=True)
class JointConfig:
    """State of the triple (X, T, zeta).

    ``zeta`` is carried alongside X and T and updated with the
    ``U * (X_i T_i + X_j T_j)`` form, so it matches :func:`step_kmp` bit for bit.
    """

    x: np.ndarray
    t: np.ndarray
    zeta: np.ndarray

    @classmethod
    def from_xt(cls, x: np.ndarray, t: np.ndarray) -> "JointConfig":
        x = np.asarray(x, dtype=float)
        t = np.asarray(t, dtype=float)
        return cls(x, t, x * t)


def step_joint(config: JointConfig, event: MarkedEvent, graph: Graph) -> JointConfig:
    i, j = graph.edges[event.edge]
    x, t, z = config.x.copy(), config.t.copy(), config.zeta.copy()
    xs = config.x[i] + config.x[j]
    if xs > 0:
        v = config.x[i] / xs
    else:
        log.warning("X_i + X_j = 0 on edge %s; using V = 1/2", (i, j))
        v = 0.5
    temp = v * config.t[i] + (1.0 - v) * config.t[j]
    zs = config.zeta[i] + config.zeta[j]
    x[i] = event.U * xs
    t[i] = temp
    z[i] = event.U * zs
    if graph.is_boundary_edge[event.edge]:
        x[j] = event.B
        z[j] = event.B * graph.temps[j]
    else:
        x[j] = (1.0 - event.U) * xs
        t[j] = temp
        z[j] = (1.0 - event.U) * zs
    return JointConfig(x, t, z)


def zeta_of(config: JointConfig) -> np.ndarray:
    return config.zeta.copy()


def pin_boundary(values: np.ndarray, graph: Graph) -> np.ndarray:
    out = np.array(values, dtype=float)
    out[graph.boundary_ids] = graph.temps[graph.boundary_ids]
    return out


def sample_stationary_energy(graph: Graph, nu_sampler: NuSampler, rng: np.random.Generator) -> np.ndarray:
    """Draw s from the parameter measure, then independent exponentials with means s."""
    s = pin_boundary(nu_sampler(rng), graph)
    return s * rng.standard_exponential(graph.n_vertices)


def point_mass(values: np.ndarray) -> NuSampler:
    values = np.asarray(values, dtype=float)
    return lambda rng: values.copy()
