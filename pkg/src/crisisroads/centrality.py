"""Edge betweenness centrality on undirected road graphs.

Scores are raw pair counts: every unordered node pair {i, j} contributes
the fraction of its shortest paths that use the edge, once. Disconnected
pairs contribute nothing.
"""
from __future__ import annotations

import heapq
import math
from collections import Counter, deque
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Mapping, Sequence

import numpy as np
from scipy import stats

TIE_RTOL = 1e-12


@dataclass
class Graph:
    """Undirected simple graph over nodes 0..n-1 with edges indexed by position."""

    n: int
    edges: list[tuple[int, int]]
    edge_ids: list[str] = field(default_factory=list)
    node_ids: list[str] = field(default_factory=list)
    adjacency: list[list[tuple[int, int]]] = field(init=False, repr=False)

    def __post_init__(self):
        if not self.edge_ids:
            self.edge_ids = [str(i) for i in range(len(self.edges))]
        if not self.node_ids:
            self.node_ids = [str(i) for i in range(self.n)]
        self.adjacency = [[] for _ in range(self.n)]
        for idx, (u, v) in enumerate(self.edges):
            if u == v:
                raise ValueError(f"self-loop on node {u}")
            self.adjacency[u].append((v, idx))
            self.adjacency[v].append((u, idx))

    @property
    def m(self) -> int:
        return len(self.edges)

    @classmethod
    def from_network(cls, net) -> "Graph":
        node_ids = list(net.nodes)
        index = {nid: i for i, nid in enumerate(node_ids)}
        edges = [(index[e.u], index[e.v]) for e in net.edges]
        return cls(len(node_ids), edges, [e.edge_id for e in net.edges], node_ids)


@dataclass
class BCResult:
    edge_ids: list[str]
    scores: np.ndarray

    def as_dict(self) -> dict[str, float]:
        return dict(zip(self.edge_ids, self.scores.tolist()))

    def __getitem__(self, edge_id: str) -> float:
        return float(self.scores[self.edge_ids.index(edge_id)])


def _accumulate_bfs(graph: Graph, sources: Sequence[int]) -> np.ndarray:
    bc = np.zeros(graph.m)
    adj = graph.adjacency
    n = graph.n
    for s in sources:
        dist = [-1] * n
        sigma = [0] * n
        preds: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        dist[s] = 0
        sigma[s] = 1
        order = []
        queue = deque([s])
        while queue:
            v = queue.popleft()
            order.append(v)
            dv = dist[v] + 1
            for w, e in adj[v]:
                if dist[w] < 0:
                    dist[w] = dv
                    queue.append(w)
                if dist[w] == dv:
                    sigma[w] += sigma[v]
                    preds[w].append((v, e))
        delta = [0.0] * n
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w]
            for v, e in preds[w]:
                c = sigma[v] * coeff
                bc[e] += c
                delta[v] += c
    return bc


def _close(a: float, b: float) -> bool:
    return abs(a - b) <= TIE_RTOL * max(abs(a), abs(b))


def _accumulate_dijkstra(graph: Graph, costs: Sequence[float], sources: Sequence[int]) -> np.ndarray:
    bc = np.zeros(graph.m)
    adj = graph.adjacency
    n = graph.n
    for s in sources:
        dist = [math.inf] * n
        sigma = [0] * n
        preds: list[list[tuple[int, int]]] = [[] for _ in range(n)]
        done = [False] * n
        dist[s] = 0.0
        sigma[s] = 1
        order = []
        heap = [(0.0, s)]
        while heap:
            d, v = heapq.heappop(heap)
            if done[v]:
                continue
            done[v] = True
            order.append(v)
            for w, e in adj[v]:
                if done[w]:
                    continue
                alt = d + costs[e]
                dw = dist[w]
                if dw != math.inf and _close(alt, dw):
                    sigma[w] += sigma[v]
                    preds[w].append((v, e))
                    if alt < dw:
                        dist[w] = alt
                elif alt < dw:
                    dist[w] = alt
                    sigma[w] = sigma[v]
                    preds[w] = [(v, e)]
                    heapq.heappush(heap, (alt, w))
        delta = [0.0] * n
        for w in reversed(order):
            coeff = (1.0 + delta[w]) / sigma[w]
            for v, e in preds[w]:
                c = sigma[v] * coeff
                bc[e] += c
                delta[v] += c
    return bc


def _run(graph: Graph, costs, workers: int) -> np.ndarray:
    sources = list(range(graph.n))
    if workers <= 1 or graph.n < 2 * workers:
        chunks = [sources]
    else:
        size = math.ceil(graph.n / workers)
        chunks = [sources[i : i + size] for i in range(0, graph.n, size)]
    if len(chunks) == 1:
        parts = [_accumulate_bfs(graph, sources) if costs is None else _accumulate_dijkstra(graph, costs, sources)]
    else:
        with ProcessPoolExecutor(max_workers=workers) as pool:
            if costs is None:
                futs = [pool.submit(_accumulate_bfs, graph, c) for c in chunks]
            else:
                futs = [pool.submit(_accumulate_dijkstra, graph, list(costs), c) for c in chunks]
            parts = [f.result() for f in futs]
    total = np.zeros(graph.m)
    for p in parts:  # fixed order keeps the sum reproducible
        total += p
    # each unordered pair was visited from both ends
    return total / 2.0


def _normalise(bc: np.ndarray, n: int) -> np.ndarray:
    pairs = n * (n - 1) / 2
    return bc / pairs if pairs > 0 else bc


def edge_bc_unweighted(graph: Graph, normalize: bool = False, workers: int = 1) -> BCResult:
    """Hop-count edge betweenness via Brandes' BFS accumulation."""
    if graph.m == 0:
        return BCResult([], np.zeros(0))
    bc = _run(graph, None, workers)
    return BCResult(list(graph.edge_ids), _normalise(bc, graph.n) if normalize else bc)


def edge_bc_costs(graph: Graph, costs: Sequence[float], normalize: bool = False, workers: int = 1) -> BCResult:
    """Edge betweenness over least-cost paths (Dijkstra per source).

    Paths whose totals agree within a relative 1e-12 count as ties.
    """
    costs = [float(c) for c in costs]
    if len(costs) != graph.m:
        raise ValueError("need one cost per edge")
    for c in costs:
        if not math.isfinite(c) or c <= 0:
            raise ValueError(f"edge costs must be finite and positive, got {c}")
    if graph.m == 0:
        return BCResult([], np.zeros(0))
    bc = _run(graph, costs, workers)
    return BCResult(list(graph.edge_ids), _normalise(bc, graph.n) if normalize else bc)


def weight_to_cost(w: float, epsilon: float = 1e-6) -> float:
    """High-weight (negatively perceived) edges become cheap to traverse."""
    return (1.0 - w) + epsilon


def edge_bc_weighted(
    graph: Graph,
    weights: Mapping[str, float] | Sequence[float],
    epsilon: float = 1e-6,
    normalize: bool = False,
    workers: int = 1,
) -> BCResult:
    """Sentiment-weighted edge betweenness with cost (1 - w) + epsilon."""
    if isinstance(weights, Mapping):
        w = [weights[e] for e in graph.edge_ids]
    else:
        w = list(weights)
    for x in w:
        if not math.isfinite(x):
            raise ValueError(f"non-finite edge weight {x}")
    return edge_bc_costs(graph, [weight_to_cost(x, epsilon) for x in w], normalize, workers)


def node_strength(graph: Graph, weights: Mapping[str, float] | Sequence[float]) -> np.ndarray:
    """Sum of incident edge weights per node (row sums of A * W)."""
    if isinstance(weights, Mapping):
        w = [weights[e] for e in graph.edge_ids]
    else:
        w = list(weights)
    out = np.zeros(graph.n)
    for (u, v), x in zip(graph.edges, w):
        out[u] += x
        out[v] += x
    return out


# --- rank comparison ------------------------------------------------------


def top_k(scores: Mapping[str, float], k: int, rtol: float = 1e-9) -> set[str]:
    """The k highest-scoring ids plus any tying with the k-th score."""
    if k <= 0 or not scores:
        return set()
    ordered = sorted(scores.items(), key=lambda kv: -kv[1])
    if k >= len(ordered):
        return set(scores)
    kth = ordered[k - 1][1]
    cutoff = kth - rtol * max(1.0, abs(kth))
    return {e for e, s in ordered if s >= cutoff}


@dataclass
class RankShift:
    kendall_tau: float
    topk_jaccard: float
    k: int
    topk_a: list[str]
    topk_b: list[str]
    class_counts_a: dict[str, int]
    class_counts_b: dict[str, int]

    def class_share(self, fclass: str, which: str = "a") -> float:
        counts = self.class_counts_a if which == "a" else self.class_counts_b
        total = sum(counts.values())
        return counts.get(fclass, 0) / total if total else 0.0

    def to_json(self) -> dict:
        def share(counts):
            total = sum(counts.values())
            return {c: float(f"{n / total:.9g}") if total else 0.0 for c, n in sorted(counts.items())}

        tau = None if math.isnan(self.kendall_tau) else float(f"{self.kendall_tau:.9g}")
        return {
            "kendall_tau_b": tau,
            "topk_jaccard": float(f"{self.topk_jaccard:.9g}"),
            "k": self.k,
            "topk_size_unweighted": len(self.topk_a),
            "topk_size_weighted": len(self.topk_b),
            "topk_unweighted": self.topk_a,
            "topk_weighted": self.topk_b,
            "fclass_counts_unweighted": dict(sorted(self.class_counts_a.items())),
            "fclass_counts_weighted": dict(sorted(self.class_counts_b.items())),
            "fclass_share_unweighted": share(self.class_counts_a),
            "fclass_share_weighted": share(self.class_counts_b),
        }


def rank_shift(
    bc_a: Mapping[str, float],
    bc_b: Mapping[str, float],
    fclass: Mapping[str, str],
    k: int = 20,
) -> RankShift:
    """Compare two edge rankings: Kendall tau-b, top-k overlap, class mix."""
    if set(bc_a) != set(bc_b):
        raise ValueError("rankings cover different edge sets")
    ids = sorted(bc_a)
    a = np.array([bc_a[e] for e in ids])
    b = np.array([bc_b[e] for e in ids])
    if len(ids) < 2:
        tau = math.nan
    else:
        tau = float(stats.kendalltau(a, b, variant="b").statistic)
    ta, tb = top_k(bc_a, k), top_k(bc_b, k)
    union = ta | tb
    jac = len(ta & tb) / len(union) if union else 1.0

    def ordered(s, scores):
        return sorted(s, key=lambda e: (-scores[e], e))

    return RankShift(
        tau,
        jac,
        k,
        ordered(ta, bc_a),
        ordered(tb, bc_b),
        dict(Counter(fclass[e] for e in ta)),
        dict(Counter(fclass[e] for e in tb)),
    )
