"""Seedable marked Poisson event streams (Harris graphical construction).

The per-edge rate-one clocks are realised by superposition: a global clock of
rate ``|E|`` (plus ``|boundary|`` when vertex refresh clocks are attached)
whose rings pick a uniform clock.  Marks are drawn in fixed-size blocks, one
array per mark kind in the order ``dt, clock, U, B, V, U', aux``, so two
streams built from the same ``(graph, seed, replica)`` are bitwise identical
and every process reading the same stream sees the same ``(N, U, B)``.

Marks that only the coupling module needs (remix points and fresh Poisson
points) come from a separate substream and are drawn lazily, so consuming
them never shifts the eager marks.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable

import numpy as np

from .graph import Graph

BLOCK = 4096


def parse_seed(text: str | int) -> int:
    """Accept a decimal or ``0x``-prefixed hexadecimal seed."""
    if isinstance(text, (int, np.integer)):
        seed = int(text)
    else:
        seed = int(str(text).strip(), 0)
    if seed < 0 or seed >= 2**64:
        raise ValueError(f"seed {text!r} outside the 64-bit range")
    return seed


def substream(seed: int, *key: int) -> np.random.Generator:
    """Independent generator for ``(seed, *key)``; no coordination needed between keys."""
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(seed, spawn_key=key)))


@dataclass(slots=True)
class MarkedEvent:
    """One clock ring.

    ``edge`` is ``-1`` for a boundary-vertex refresh event, in which case
    ``refresh`` holds the boundary vertex.  ``B`` is ``None`` off boundary edges.
    """

    time: float
    edge: int
    U: float
    B: float | None
    V: float
    Uprime: float
    aux: float
    refresh: int = -1
    _extra_rng: np.random.Generator | None = field(default=None, repr=False, compare=False)
    _cache: dict = field(default_factory=dict, repr=False, compare=False)

    def remix_points(self, n: int) -> np.ndarray:
        """The event's Gamma(n): n iid uniform points on [0, 1], sorted."""
        key = ("gamma", n)
        if key not in self._cache:
            rng = self._extras()
            self._cache[key] = np.sort(rng.random(n))
        return self._cache[key]

    def fresh_poisson(self, length: float) -> np.ndarray:
        """Points of a fresh rate-1 Poisson process restricted to [0, length)."""
        key = ("poisson", length)
        if key not in self._cache:
            rng = self._extras()
            n = rng.poisson(length)
            pts = np.sort(rng.random(n) * length)
            self._cache[key] = pts[pts < length]
        return self._cache[key]

    def binomial(self, m: int, p: float) -> int:
        key = ("binomial", m, p)
        if key not in self._cache:
            self._cache[key] = int(self._extras().binomial(m, p))
        return self._cache[key]

    def poisson_count(self, mean: float) -> int:
        key = ("poisson_count", mean)
        if key not in self._cache:
            self._cache[key] = int(self._extras().poisson(mean))
        return self._cache[key]

    def _extras(self) -> np.random.Generator:
        if self._extra_rng is None:
            raise RuntimeError("event was not produced by an EventStream; no extra marks available")
        return self._extra_rng


@dataclass(frozen=True)
class EventBlock:
    """Raw arrays for a run of consecutive events (fast loops read these)."""

    time: np.ndarray
    edge: np.ndarray
    U: np.ndarray
    B: np.ndarray
    V: np.ndarray
    Uprime: np.ndarray
    aux: np.ndarray
    refresh: np.ndarray

    def __len__(self) -> int:
        return len(self.time)


class EventStream:
    """Unbounded marked event stream for one replica.

    ``boundary_refresh=True`` attaches an extra rate-one clock to every
    boundary vertex (the original KMP boundary mechanism).
    """

    def __init__(self, graph: Graph, seed: int, replica: int = 0, boundary_refresh: bool = False):
        self.graph = graph
        self.seed = parse_seed(seed)
        self.replica = int(replica)
        self.boundary_refresh = boundary_refresh
        root = np.random.SeedSequence(self.seed, spawn_key=(self.replica,))
        main, extra = root.spawn(2)
        self._rng = np.random.Generator(np.random.PCG64(main))
        self._extra_rng = np.random.Generator(np.random.PCG64(extra))
        self._n_clocks = graph.n_edges + (len(graph.boundary_ids) if boundary_refresh else 0)
        self.rate = float(self._n_clocks)
        self.cursor = 0.0
        self._last_time = 0.0
        self._buf: EventBlock | None = None
        self._pos = 0

    def _refill(self) -> None:
        rng = self._rng
        dt = rng.standard_exponential(BLOCK) / self.rate
        clock = rng.integers(0, self._n_clocks, size=BLOCK)
        U = rng.random(BLOCK)
        B = rng.standard_exponential(BLOCK)
        V = rng.random(BLOCK)
        Up = rng.random(BLOCK)
        aux = rng.random(BLOCK)
        times = self._last_time + np.cumsum(dt)
        self._last_time = float(times[-1])
        n_e = self.graph.n_edges
        is_refresh = clock >= n_e
        edge = np.where(is_refresh, -1, clock)
        if self.boundary_refresh:
            bids = self.graph.boundary_ids
            refresh = np.where(is_refresh, bids[np.clip(clock - n_e, 0, len(bids) - 1)], -1)
        else:
            refresh = np.full(BLOCK, -1, dtype=np.int64)
        self._buf = EventBlock(times, edge, U, B, V, Up, aux, refresh)
        self._pos = 0

    def _ensure(self) -> EventBlock:
        if self._buf is None or self._pos >= len(self._buf):
            self._refill()
        return self._buf

    def peek_time(self) -> float:
        buf = self._ensure()
        return float(buf.time[self._pos])

    def next_event(self) -> MarkedEvent:
        buf = self._ensure()
        k = self._pos
        self._pos += 1
        e = int(buf.edge[k])
        boundary_mark = e < 0 or self.graph.is_boundary_edge[e]
        ev = MarkedEvent(
            time=float(buf.time[k]),
            edge=e,
            U=float(buf.U[k]),
            B=float(buf.B[k]) if boundary_mark else None,
            V=float(buf.V[k]),
            Uprime=float(buf.Uprime[k]),
            aux=float(buf.aux[k]),
            refresh=int(buf.refresh[k]),
            _extra_rng=self._extra_rng,
        )
        self.cursor = ev.time
        return ev

    def take(self, n: int) -> EventBlock:
        """The next ``n`` events as raw arrays (same sequence as ``next_event``)."""
        if n <= 0:
            buf = self._ensure()
            return EventBlock(*(getattr(buf, f)[:0] for f in EventBlock.__dataclass_fields__))
        parts = []
        need = n
        while need > 0:
            buf = self._ensure()
            k = min(need, len(buf) - self._pos)
            sl = slice(self._pos, self._pos + k)
            parts.append(EventBlock(*(getattr(buf, f)[sl] for f in EventBlock.__dataclass_fields__)))
            self._pos += k
            need -= k
        block = EventBlock(*(np.concatenate([getattr(p, f) for p in parts]) for f in EventBlock.__dataclass_fields__))
        self.cursor = float(block.time[-1])
        return block

    def events_until(self, horizon: float) -> list[MarkedEvent]:
        """All remaining events with time <= horizon; the cursor moves to ``horizon``."""
        if not math.isfinite(horizon):
            raise ValueError("horizon must be finite")
        if horizon < self.cursor:
            raise ValueError(f"horizon {horizon} is before the stream cursor {self.cursor}")
        out = []
        while self.peek_time() <= horizon:
            out.append(self.next_event())
        self.cursor = float(horizon)
        return out


def write_trace_csv(events: Iterable[MarkedEvent], path: str | Path) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["time", "edge", "U", "B", "V"])
        for ev in events:
            w.writerow([f"{ev.time:.17g}", ev.edge, f"{ev.U:.17g}", "" if ev.B is None else f"{ev.B:.17g}", f"{ev.V:.17g}"])


def make_event(edge: int, U: float = 0.5, B: float | None = None, V: float = 0.5,
               Uprime: float = 0.5, aux: float = 0.5, time: float = 0.0, refresh: int = -1,
               rng: np.random.Generator | None = None) -> MarkedEvent:
    """Hand-built event, mainly for tests and worked examples."""
    return MarkedEvent(time, edge, U, B, V, Uprime, aux, refresh, rng)
