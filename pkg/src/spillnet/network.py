"""Directed spillover graphs and their centrality, centralization and stability metrics."""

from __future__ import annotations

import math
from collections import deque
from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class SpilloverNetwork:
    """Directed graph of significant causalities for one rolling window.

    ``tests`` and ``skipped`` carry per-pair audit information and do not take
    part in equality.
    """

    window_end: str
    vertices: tuple
    edges: frozenset
    tests: dict = field(default_factory=dict, compare=False, repr=False)
    skipped: dict = field(default_factory=dict, compare=False, repr=False)
    level: float = math.nan

    def __post_init__(self):
        vs = set(self.vertices)
        if len(vs) != len(self.vertices):
            raise ValueError("duplicate vertices")
        for a, b in self.edges:
            if a == b:
                raise ValueError(f"loop on {a}")
            if a not in vs or b not in vs:
                raise ValueError(f"edge ({a}, {b}) references an unknown vertex")
        object.__setattr__(self, "edges", frozenset(self.edges))

    @property
    def n(self) -> int:
        return len(self.vertices)

    def adjacency(self) -> np.ndarray:
        pos = {v: i for i, v in enumerate(self.vertices)}
        A = np.zeros((self.n, self.n), dtype=int)
        for a, b in self.edges:
            A[pos[a], pos[b]] = 1
        return A

    @classmethod
    def from_adjacency(cls, A, vertices=None, window_end: str = "") -> "SpilloverNetwork":
        A = np.asarray(A)
        vertices = tuple(vertices) if vertices is not None else tuple(range(A.shape[0]))
        edges = {(vertices[i], vertices[j]) for i, j in zip(*np.nonzero(A)) if i != j}
        return cls(window_end, vertices, frozenset(edges))


def degrees(g: SpilloverNetwork) -> dict:
    """Per-vertex (out-degree, in-degree)."""
    out = {v: 0 for v in g.vertices}
    inn = {v: 0 for v in g.vertices}
    for a, b in g.edges:
        out[a] += 1
        inn[b] += 1
    return {v: (out[v], inn[v]) for v in g.vertices}


def _successors(g: SpilloverNetwork, incoming: bool) -> dict:
    nbrs = {v: [] for v in g.vertices}
    for a, b in g.edges:
        if incoming:
            nbrs[b].append(a)
        else:
            nbrs[a].append(b)
    return nbrs


def harmonic_centrality(g: SpilloverNetwork, incoming: bool = False) -> dict:
    """H(i) = sum over reachable j != i of 1 / d(i, j), by breadth-first search.

    Distances follow edge direction away from ``i``; ``incoming=True`` uses
    paths into ``i`` instead.
    """
    nbrs = _successors(g, incoming)
    H = {}
    for src in g.vertices:
        dist = {src: 0}
        queue = deque([src])
        total = 0.0
        while queue:
            u = queue.popleft()
            for w in nbrs[u]:
                if w not in dist:
                    dist[w] = dist[u] + 1
                    total += 1.0 / dist[w]
                    queue.append(w)
        H[src] = total
    return H


def density(g: SpilloverNetwork) -> float:
    if g.n < 2:
        raise ValueError("density needs at least two vertices")
    return len(g.edges) / (g.n * (g.n - 1))


def _too_small(k):
    raise ValueError(f"metric needs at least {k} vertices")


def mean_degree_centrality(g: SpilloverNetwork) -> float:
    """Standardized average out/in degree; identical to the density."""
    if g.n < 2:
        _too_small(2)
    return sum(d[0] for d in degrees(g).values()) / (g.n * (g.n - 1))


def mean_harmonic_centrality(g: SpilloverNetwork, incoming: bool = False) -> float:
    if g.n < 1:
        _too_small(1)
    return sum(harmonic_centrality(g, incoming).values()) / g.n


def degree_centralization(g: SpilloverNetwork, direction: str = "out") -> float:
    """sum_i (max_j deg(j) - deg(i)) / ((n - 2)(n - 1)).

    With this denominator an out-star scores (n - 1)/(n - 2), slightly above 1.
    """
    if g.n < 3:
        _too_small(3)
    if direction not in ("out", "in"):
        raise ValueError("direction must be 'out' or 'in'")
    k = 0 if direction == "out" else 1
    deg = [d[k] for d in degrees(g).values()]
    top = max(deg)
    return sum(top - d for d in deg) / ((g.n - 2) * (g.n - 1))


def survival_ratio(networks, t: int, s: int = 1) -> float:
    """|E_t & E_{t-1} & ... & E_{t-s}| / |E_{t-s}|; NaN when E_{t-s} is empty."""
    if s < 1 or t - s < 0 or t >= len(networks):
        raise ValueError(f"need 0 <= t - s and t < {len(networks)} (t={t}, s={s})")
    base = networks[t - s].edges
    if not base:
        return math.nan
    common = set(base)
    for j in range(t - s + 1, t + 1):
        common &= networks[j].edges
    return len(common) / len(base)


def survival_matrix(networks, max_steps: int) -> np.ndarray:
    """Rows are windows t, columns steps s = 1..max_steps; NaN where undefined."""
    out = np.full((len(networks), max_steps), np.nan)
    for t in range(len(networks)):
        for s in range(1, min(max_steps, t) + 1):
            out[t, s - 1] = survival_ratio(networks, t, s)
    return out


def degree_correlation(g) -> float:
    """Pearson correlation of out- and in-degrees across vertices; NaN if undefined.

    Accepts a network or a :class:`CentralityReport`.
    """
    if isinstance(g, CentralityReport):
        d = np.array([(g.out_degree[v], g.in_degree[v]) for v in g.out_degree], dtype=float)
    else:
        d = np.array(list(degrees(g).values()), dtype=float)
    if len(d) < 3:
        return math.nan
    x, y = d[:, 0] - d[:, 0].mean(), d[:, 1] - d[:, 1].mean()
    sxx, syy = np.dot(x, x), np.dot(y, y)
    if sxx == 0 or syy == 0:
        return math.nan
    return float(np.dot(x, y) / math.sqrt(sxx * syy))


@dataclass(frozen=True)
class CentralityReport:
    window_end: str
    out_degree: dict
    in_degree: dict
    harmonic: dict
    mean_degree_centrality: float
    mean_harmonic_centrality: float
    out_centralization: float
    in_centralization: float
    density: float
    degree_correlation: float
    n_edges: int


def centrality_report(g: SpilloverNetwork, incoming: bool = False) -> CentralityReport:
    deg = degrees(g)
    H = harmonic_centrality(g, incoming)
    return CentralityReport(
        window_end=g.window_end,
        out_degree={v: d[0] for v, d in deg.items()},
        in_degree={v: d[1] for v, d in deg.items()},
        harmonic=H,
        mean_degree_centrality=mean_degree_centrality(g),
        mean_harmonic_centrality=sum(H.values()) / g.n,
        out_centralization=degree_centralization(g, "out") if g.n >= 3 else math.nan,
        in_centralization=degree_centralization(g, "in") if g.n >= 3 else math.nan,
        density=density(g),
        degree_correlation=degree_correlation(g),
        n_edges=len(g.edges),
    )
