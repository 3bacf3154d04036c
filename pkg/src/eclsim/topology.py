"""Undirected communication graphs (ring, torus, complete)."""
from __future__ import annotations

from collections import deque
from dataclasses import dataclass, field

import numpy as np


class InvalidSizeError(ValueError):
    pass


@dataclass(frozen=True)
class Graph:
    """Undirected simple graph on nodes 0..n-1.

    Edges are canonical (min, max) pairs. Neighbor sets are derived once
    at construction and never mutated.
    """

    n: int
    edges: frozenset
    _nbrs: tuple = field(init=False, repr=False, compare=False)

    def __post_init__(self):
        if self.n < 1:
            raise InvalidSizeError(f"graph needs at least one node, got n={self.n}")
        canon = set()
        for i, j in self.edges:
            i, j = int(i), int(j)
            if i == j:
                raise ValueError(f"self-loop at node {i}")
            if not (0 <= i < self.n and 0 <= j < self.n):
                raise ValueError(f"edge ({i}, {j}) out of range for n={self.n}")
            e = (min(i, j), max(i, j))
            if e in canon:
                raise ValueError(f"duplicate edge {e}")
            canon.add(e)
        object.__setattr__(self, "edges", frozenset(canon))
        nbrs = [[] for _ in range(self.n)]
        for i, j in canon:
            nbrs[i].append(j)
            nbrs[j].append(i)
        object.__setattr__(self, "_nbrs", tuple(tuple(sorted(a)) for a in nbrs))

    @classmethod
    def from_edges(cls, n: int, edges) -> "Graph":
        return cls(n, frozenset(tuple(e) for e in edges))

    def neighbors(self, i: int) -> tuple:
        return self._nbrs[i]

    def degree(self, i: int) -> int:
        return len(self._nbrs[i])

    def degrees(self) -> np.ndarray:
        return np.array([len(a) for a in self._nbrs], dtype=np.int64)

    def sorted_edges(self) -> list:
        return sorted(self.edges)

    def adjacency(self) -> np.ndarray:
        a = np.zeros((self.n, self.n))
        for i, j in self.edges:
            a[i, j] = a[j, i] = 1.0
        return a

    def is_connected(self) -> bool:
        seen = {0}
        queue = deque([0])
        while queue:
            i = queue.popleft()
            for j in self._nbrs[i]:
                if j not in seen:
                    seen.add(j)
                    queue.append(j)
        return len(seen) == self.n


def build_ring(n: int) -> Graph:
    if n < 3:
        raise InvalidSizeError(f"ring needs n >= 3, got {n}")
    return Graph.from_edges(n, [(i, (i + 1) % n) for i in range(n)])


def build_torus(rows: int, cols: int) -> Graph:
    # with a dimension of 2 the two wrap-around neighbors coincide
    if rows < 3 or cols < 3:
        raise InvalidSizeError(f"torus needs rows, cols >= 3, got {rows}x{cols}")
    edges = []
    for r in range(rows):
        for c in range(cols):
            k = r * cols + c
            edges.append((k, ((r + 1) % rows) * cols + c))
            edges.append((k, r * cols + (c + 1) % cols))
    return Graph.from_edges(rows * cols, edges)


def build_complete(n: int) -> Graph:
    if n < 2:
        raise InvalidSizeError(f"complete graph needs n >= 2, got {n}")
    return Graph.from_edges(n, [(i, j) for i in range(n) for j in range(i + 1, n)])


def regularity(g: Graph) -> int | None:
    """Common degree k if the graph is k-regular, else None."""
    degs = g.degrees()
    if np.all(degs == degs[0]):
        return int(degs[0])
    return None


def parse_topology(spec: str, n: int | None = None) -> Graph:
    """Build a graph from a name: ``ring``, ``complete`` or ``torus:RxC``.

    ``ring`` and ``complete`` take their size from ``n``; a bare ``torus``
    with a perfect-square ``n`` becomes the square torus.
    """
    name, _, arg = spec.strip().partition(":")
    name = name.lower()
    if name == "ring":
        return build_ring(_need_n(spec, n))
    if name == "complete":
        return build_complete(_need_n(spec, n))
    if name == "torus":
        if arg:
            rows, _, cols = arg.lower().partition("x")
            g = build_torus(int(rows), int(cols))
        else:
            side = int(round(np.sqrt(_need_n(spec, n))))
            if side * side != n:
                raise InvalidSizeError(f"bare 'torus' needs a square node count, got n={n}")
            g = build_torus(side, side)
        if n is not None and g.n != n:
            raise InvalidSizeError(f"{spec} has {g.n} nodes but n={n}")
        return g
    raise ValueError(f"unknown topology {spec!r}")


def _need_n(spec, n):
    if n is None:
        raise ValueError(f"topology {spec!r} needs a node count")
    return n
