"""Synthetic hazard scenarios and brute-force oracles for testing.

The oracles deliberately avoid the main modules' geometry and graph code:
they work from plain coordinates, edge lists and numbers.

Random streams come from :class:`StableRng`, which draws only raw 64-bit
words from numpy's PCG64 bit generator and derives every variate itself.
numpy guarantees the PCG64 word stream for a given seed across releases,
whereas its ``Generator`` distribution methods may change; deriving the
variates locally freezes scenarios across numpy upgrades.
"""
from __future__ import annotations

import heapq
import itertools
import json
import math
from dataclasses import dataclass, field
from datetime import datetime, timedelta, timezone
from fractions import Fraction
from pathlib import Path
from typing import Sequence

import numpy as np

from .geo import EARTH_RADIUS_M, LocalFrame
from .ingest import GeoPost, StudyRegion, write_posts_ndjson
from .roadnet import RoadEdge, RoadNetwork, RoadNode, write_network
from .tessellate import ClassBreaks
from .textproc import _data_path

OKC_CENTER = (-97.5164, 35.4676)
POOL_FILES = ("very_negative", "negative", "neutral", "positive", "very_positive")
NEUTRAL_POOL = 2
STORM_START = datetime(2020, 10, 26, tzinfo=timezone.utc)
STORM_DAYS = 7


class StableRng:
    """Seeded PCG64 stream with locally derived variates."""

    def __init__(self, seed: int):
        self._bits = np.random.PCG64(int(seed))

    def _raw(self, n: int) -> np.ndarray:
        return np.asarray(self._bits.random_raw(n), dtype=np.uint64)

    def uniform(self, n: int, low: float = 0.0, high: float = 1.0) -> np.ndarray:
        # top 53 bits -> [0, 1)
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * 2.0**-53
        return low + (high - low) * u

    def normal(self, n: int, sd: float = 1.0) -> np.ndarray:
        # Box-Muller, one variate per pair of uniforms
        u1 = 1.0 - self.uniform(n)  # (0, 1]
        u2 = self.uniform(n)
        return sd * np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * math.pi * u2)

    def integers(self, n: int, high: int) -> np.ndarray:
        """Integers in [0, high)."""
        return np.minimum((self.uniform(n) * high).astype(np.int64), high - 1)


# --- hazard field & scenario ----------------------------------------------


@dataclass(frozen=True)
class HazardField:
    """Gaussian-profile intensity around a center: peak * exp(-d^2 / (2 L^2))."""

    center_lon: float = OKC_CENTER[0]
    center_lat: float = OKC_CENTER[1]
    peak: float = 1.0
    decay_m: float = 4000.0

    def intensity(self, lon, lat) -> np.ndarray:
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        if self.peak == 0:
            return np.zeros(np.broadcast(lon, lat).shape)
        # local equirectangular distance; adequate at city scale
        kx = EARTH_RADIUS_M * math.cos(math.radians(self.center_lat)) * math.pi / 180.0
        ky = EARTH_RADIUS_M * math.pi / 180.0
        d2 = ((lon - self.center_lon) * kx) ** 2 + ((lat - self.center_lat) * ky) ** 2
        return self.peak * np.exp(-d2 / (2.0 * self.decay_m**2))


@dataclass
class HazardScenario:
    field: HazardField
    region: StudyRegion
    posts: list[GeoPost]
    network: RoadNetwork
    seed: int
    pools: list[int] = field(default_factory=list)  # template pool of each post


def read_template_pools() -> list[list[str]]:
    pools = []
    for name in POOL_FILES:
        lines = _data_path(f"templates/{name}.txt").read_text(encoding="utf-8").splitlines()
        pools.append([ln.strip() for ln in lines if ln.strip() and not ln.startswith("#")])
    return pools


def scenario_region(center: tuple[float, float] = OKC_CENTER, half_width_m: float = 15000.0) -> StudyRegion:
    frame = LocalFrame(*center)
    lon0, lat0 = frame.inverse_point(-half_width_m, -half_width_m)
    lon1, lat1 = frame.inverse_point(half_width_m, half_width_m)
    return StudyRegion.from_bbox(lon0, lat0, lon1, lat1)


def grid_network(
    center: tuple[float, float] = OKC_CENTER,
    half_blocks: int = 8,
    block_m: float = 1000.0,
    ring_offset_blocks: int = 2,
    ring_every: int = 4,
) -> RoadNetwork:
    """Rectangular local street grid inside an interstate ring.

    The grid has (2*half_blocks+1)^2 intersections spaced ``block_m`` apart.
    The ring sits ``ring_offset_blocks`` outside the grid with an exit every
    ``ring_every`` blocks; each exit is joined to the grid edge by an
    arterial ramp.
    """
    frame = LocalFrame(*center)
    nodes: dict[str, RoadNode] = {}
    edges: list[RoadEdge] = []

    def add_node(nid: str, x: float, y: float):
        lon, lat = frame.inverse_point(x, y)
        nodes[nid] = RoadNode(nid, lon, lat)

    def add_edge(eid: str, u: str, v: str, fclass: str):
        a, b = nodes[u], nodes[v]
        edges.append(RoadEdge(eid, u, v, ((a.lon, a.lat), (b.lon, b.lat)), fclass))

    h = half_blocks
    for i in range(-h, h + 1):
        for j in range(-h, h + 1):
            add_node(f"g{i + h}_{j + h}", i * block_m, j * block_m)
    for i in range(-h, h + 1):
        for j in range(-h, h + 1):
            if i < h:
                add_edge(f"l{i + h}_{j + h}e", f"g{i + h}_{j + h}", f"g{i + h + 1}_{j + h}", "local")
            if j < h:
                add_edge(f"l{i + h}_{j + h}n", f"g{i + h}_{j + h}", f"g{i + h}_{j + h + 1}", "local")

    r = h + ring_offset_blocks
    exits = [p for p in range(-h, h + 1) if p % ring_every == 0]
    stops = [-r] + exits + [r]
    # walk the ring counter-clockwise starting at the south-west corner
    ring: list[tuple[float, float, str | None]] = []
    for side, (fx, fy) in enumerate(((1, 0), (0, 1), (-1, 0), (0, -1))):
        for p in stops[:-1]:
            if side == 0:
                x, y = p, -r
            elif side == 1:
                x, y = r, p
            elif side == 2:
                x, y = -p, r
            else:
                x, y = -r, -p
            grid_end = None
            if abs(x) == r and abs(y) < r:
                grid_end = f"g{int(math.copysign(h, x)) + h}_{y + h}"
            elif abs(y) == r and abs(x) < r:
                grid_end = f"g{x + h}_{int(math.copysign(h, y)) + h}"
            ring.append((x, y, grid_end))
    for k, (x, y, _) in enumerate(ring):
        add_node(f"r{k}", x * block_m, y * block_m)
    for k in range(len(ring)):
        add_edge(f"i{k}", f"r{k}", f"r{(k + 1) % len(ring)}", "interstate")
    for k, (_, _, grid_end) in enumerate(ring):
        if grid_end is not None:
            add_edge(f"a{k}", f"r{k}", grid_end, "arterial")
    return RoadNetwork(nodes, edges)


def _uniform_in_region(rng: StableRng, region: StudyRegion, n: int) -> tuple[np.ndarray, np.ndarray]:
    lon_min, lat_min, lon_max, lat_max = region.bbox
    out_lon: list[float] = []
    out_lat: list[float] = []
    while len(out_lon) < n:
        m = 2 * (n - len(out_lon)) + 16
        lon = rng.uniform(m, lon_min, lon_max)
        lat = rng.uniform(m, lat_min, lat_max)
        keep = region.contains(lon, lat)
        out_lon.extend(lon[keep].tolist())
        out_lat.extend(lat[keep].tolist())
    return np.array(out_lon[:n]), np.array(out_lat[:n])


def _clustered_in_region(
    rng: StableRng, region: StudyRegion, hazard: HazardField, n: int
) -> tuple[np.ndarray, np.ndarray]:
    frame = LocalFrame(hazard.center_lon, hazard.center_lat)
    out_lon: list[float] = []
    out_lat: list[float] = []
    while len(out_lon) < n:
        m = 2 * (n - len(out_lon)) + 16
        lon, lat = frame.inverse(rng.normal(m, hazard.decay_m), rng.normal(m, hazard.decay_m))
        keep = region.contains(lon, lat)
        out_lon.extend(lon[keep].tolist())
        out_lat.extend(lat[keep].tolist())
    return np.array(out_lon[:n]), np.array(out_lat[:n])


def pool_for_level(level: np.ndarray) -> np.ndarray:
    """Map a latent mood in about [-1, 1] onto pool indices 0..4."""
    return np.clip(np.rint(2.0 + 2.0 * level), 0, 4).astype(int)


def gen_scenario(
    seed: int,
    region: StudyRegion | None = None,
    n_posts: int = 2000,
    hazard: HazardField | None = None,
    noise_sd: float = 0.25,
    cluster_share: float = 0.5,
    n_authors: int = 400,
) -> HazardScenario:
    """Plant negative posts where the hazard is strong.

    Each post's latent mood is ``-intensity/peak + N(0, noise_sd)`` and picks
    a template pool; locations mix a uniform draw over the region with a
    cluster around the hazard center.
    """
    if n_posts < 1:
        raise ValueError("n_posts must be >= 1")
    hazard = hazard or HazardField()
    region = region or scenario_region((hazard.center_lon, hazard.center_lat))
    rng = StableRng(seed)
    pools_text = read_template_pools()

    n_cluster = int(round(cluster_share * n_posts))
    ulon, ulat = _uniform_in_region(rng, region, n_posts - n_cluster)
    clon, clat = _clustered_in_region(rng, region, hazard, n_cluster)
    lon = np.concatenate([ulon, clon])
    lat = np.concatenate([ulat, clat])
    order = np.argsort(rng.uniform(n_posts), kind="stable")  # interleave the two groups
    lon, lat = lon[order], lat[order]

    intensity = hazard.intensity(lon, lat)
    rel = intensity / hazard.peak if hazard.peak else np.zeros(n_posts)
    noise = rng.normal(n_posts, noise_sd) if noise_sd > 0 else np.zeros(n_posts)
    pools = pool_for_level(-rel + noise)
    picks = rng.uniform(n_posts)
    authors = rng.integers(n_posts, n_authors)
    seconds = rng.integers(n_posts, STORM_DAYS * 86400)

    posts = []
    for i in range(n_posts):
        pool = pools_text[pools[i]]
        text = pool[min(int(picks[i] * len(pool)), len(pool) - 1)]
        posts.append(
            GeoPost(
                id=f"p{i:06d}",
                author_id=f"u{int(authors[i]):04d}",
                ts=STORM_START + timedelta(seconds=int(seconds[i])),
                lon=float(f"{lon[i]:.9g}"),
                lat=float(f"{lat[i]:.9g}"),
                text=text,
                lang="en",
            )
        )
    network = grid_network((hazard.center_lon, hazard.center_lat))
    return HazardScenario(hazard, region, posts, network, seed, pools.tolist())


def write_bundle(scenario: HazardScenario, out_dir: str | Path) -> dict[str, Path]:
    """Write posts, region, network and a ready-to-run config into ``out_dir``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "posts": out / "posts.ndjson",
        "region": out / "region.geojson",
        "nodes": out / "nodes.csv",
        "edges": out / "edges.geojson",
        "config": out / "pipeline.conf",
    }
    write_posts_ndjson(scenario.posts, paths["posts"])
    with open(paths["region"], "w", encoding="utf-8", newline="\n") as fh:
        json.dump(scenario.region.to_geojson(), fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
    write_network(scenario.network, paths["nodes"], paths["edges"])
    end = STORM_START + timedelta(days=STORM_DAYS)
    lines = [
        "# generated by `crisisroads simulate`",
        f"posts = {paths['posts'].name}",
        f"region = {paths['region'].name}",
        f"nodes = {paths['nodes'].name}",
        f"edges = {paths['edges'].name}",
        f"window_start = {STORM_START.strftime('%Y-%m-%dT%H:%M:%SZ')}",
        f"window_end = {end.strftime('%Y-%m-%dT%H:%M:%SZ')}",
        f"rng_seed = {scenario.seed}",
        "lang = en",
    ]
    paths["config"].write_text("\n".join(lines) + "\n", encoding="utf-8")
    return paths


# --- graph oracle -----------------------------------------------------------


def _edge_list(graph) -> tuple[int, list[tuple[int, int]]]:
    if isinstance(graph, tuple):
        return graph[0], [tuple(e) for e in graph[1]]
    return graph.n, [tuple(e) for e in graph.edges]


def oracle_edge_bc(graph, costs: Sequence[float] | None = None, rtol: float = 1e-9) -> np.ndarray:
    """Edge betweenness by listing every shortest path of every node pair.

    ``graph`` is an object with ``n`` and ``edges`` or a tuple ``(n, edges)``.
    Distances come from Floyd-Warshall; paths are enumerated by depth-first
    search along edges that stay on a shortest route.
    """
    n, edges = _edge_list(graph)
    if n > 40:
        raise ValueError("oracle_edge_bc refuses graphs with more than 40 nodes")
    m = len(edges)
    c = [1.0] * m if costs is None else [float(x) for x in costs]
    dist = [[math.inf] * n for _ in range(n)]
    nbrs: list[list[tuple[int, int]]] = [[] for _ in range(n)]
    for i in range(n):
        dist[i][i] = 0.0
    for idx, (u, v) in enumerate(edges):
        nbrs[u].append((v, idx))
        nbrs[v].append((u, idx))
        if c[idx] < dist[u][v]:
            dist[u][v] = dist[v][u] = c[idx]
    for k in range(n):
        dk = dist[k]
        for i in range(n):
            dik = dist[i][k]
            if dik == math.inf:
                continue
            di = dist[i]
            for j in range(n):
                if dik + dk[j] < di[j]:
                    di[j] = dik + dk[j]

    def same(a, b):
        return abs(a - b) <= rtol * max(abs(a), abs(b), 1e-300)

    bc = np.zeros(m)
    for s in range(n):
        for t in range(s + 1, n):
            target = dist[s][t]
            if target == math.inf:
                continue
            paths: list[list[int]] = []
            stack = [(s, 0.0, [])]
            while stack:
                v, d, used = stack.pop()
                if v == t:
                    paths.append(used)
                    continue
                for w, idx in nbrs[v]:
                    nd = d + c[idx]
                    if same(nd + dist[w][t], target) and same(nd, dist[s][w]):
                        stack.append((w, nd, used + [idx]))
            for p in paths:
                for idx in p:
                    bc[idx] += 1.0 / len(paths)
    return bc


def oracle_kendall_tau_b(a: Sequence[float], b: Sequence[float]) -> float:
    """Tau-b from an explicit count of concordant and discordant pairs."""
    n = len(a)
    conc = disc = ties_a = ties_b = 0
    for i in range(n):
        for j in range(i + 1, n):
            da = a[i] - a[j]
            db = b[i] - b[j]
            if da == 0 and db == 0:
                continue
            if da == 0:
                ties_a += 1
            elif db == 0:
                ties_b += 1
            elif (da > 0) == (db > 0):
                conc += 1
            else:
                disc += 1
    denom = math.sqrt((conc + disc + ties_a) * (conc + disc + ties_b))
    return (conc - disc) / denom if denom else math.nan


# --- natural-breaks oracle --------------------------------------------------


def partition_sse(values: Sequence[float], cuts: Sequence[int]) -> Fraction:
    """Exact within-class SSE of sorted ``values`` split before each cut index."""
    x = sorted(Fraction(v) for v in values)
    bounds = [0, *cuts, len(x)]
    total = Fraction(0)
    for a, b in zip(bounds, bounds[1:]):
        part = x[a:b]
        if not part:
            continue
        s = sum(part)
        total += sum(v * v for v in part) - s * s / len(part)
    return total


def oracle_jenks(values: Sequence[float], k: int) -> ClassBreaks:
    """Minimum-SSE contiguous k-partition by exhaustive enumeration.

    Ties go to the lexicographically smallest cut positions. ``cuts`` in the
    result are the exclusive end indices of each class, like the DP's.
    """
    n = len(values)
    if n > 12 or k > 4:
        raise ValueError("oracle_jenks is limited to n <= 12 and k <= 4")
    if not 1 <= k <= n:
        raise ValueError("need 1 <= k <= n")
    x = sorted(float(v) for v in values)
    best = None
    best_cuts: tuple[int, ...] = ()
    for cuts in itertools.combinations(range(1, n), k - 1):
        sse = partition_sse(x, cuts)
        if best is None or sse < best:
            best, best_cuts = sse, cuts
    ends = (*best_cuts, n)
    total = partition_sse(x, ())
    gvf = 1.0 - float(best / total) if total else 1.0
    return ClassBreaks(k, tuple(x[e - 1] for e in ends), gvf, float(best), ends)


# --- point-in-polygon & Monte-Carlo oracles ---------------------------------


def oracle_point_in_ring(x: float, y: float, ring: Sequence[tuple[float, float]]) -> bool:
    """Scalar even-odd ray casting (boundary handling not guaranteed)."""
    inside = False
    pts = list(ring)
    if pts[0] == pts[-1]:
        pts = pts[:-1]
    j = len(pts) - 1
    for i in range(len(pts)):
        xi, yi = pts[i]
        xj, yj = pts[j]
        if (yi > y) != (yj > y):
            if x < (xj - xi) * (y - yi) / (yj - yi) + xi:
                inside = not inside
        j = i
    return inside


def _inside_rings(x: np.ndarray, y: np.ndarray, rings) -> np.ndarray:
    inside = np.zeros(x.shape, dtype=bool)
    for ring in rings:
        pts = np.asarray(ring, dtype=float)
        if np.all(pts[0] == pts[-1]):
            pts = pts[:-1]
        xj, yj = np.roll(pts[:, 0], 1), np.roll(pts[:, 1], 1)
        for xi, yi, xk, yk in zip(pts[:, 0], pts[:, 1], xj, yj):
            crosses = (yi > y) != (yk > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                xint = (xk - xi) * (y - yi) / (yk - yi) + xi
            inside ^= crosses & (x < xint)
    return inside


def oracle_regional_mean(
    sites: Sequence[tuple[float, float, float]],
    rings: Sequence[Sequence[tuple[float, float]]],
    samples: int = 1_000_000,
    seed: int = 0,
    chunk: int = 200_000,
) -> tuple[float, float]:
    """Monte-Carlo area-weighted mean of nearest-site sentiment.

    ``sites`` are planar ``(x, y, sentiment)``; ``rings`` are the planar
    region's rings (even-odd rule, so holes are just more rings). Returns
    ``(mean, standard_error)``.
    """
    if samples < 100_000:
        raise ValueError("need at least 1e5 samples")
    s = np.asarray(sites, dtype=float)
    if len(s) == 1:
        return float(s[0, 2]), 0.0
    allpts = np.concatenate([np.asarray(r, dtype=float) for r in rings])
    xmin, ymin = allpts.min(axis=0)
    xmax, ymax = allpts.max(axis=0)
    rng = StableRng(seed)
    total = 0.0
    total_sq = 0.0
    got = 0
    while got < samples:
        m = min(chunk, 2 * (samples - got) + 16)
        x = rng.uniform(m, xmin, xmax)
        y = rng.uniform(m, ymin, ymax)
        keep = _inside_rings(x, y, rings)
        x, y = x[keep][: samples - got], y[keep][: samples - got]
        d2 = (x[:, None] - s[None, :, 0]) ** 2 + (y[:, None] - s[None, :, 1]) ** 2
        vals = s[np.argmin(d2, axis=1), 2]
        total += float(vals.sum())
        total_sq += float((vals * vals).sum())
        got += len(vals)
    mean = total / got
    var = max(total_sq / got - mean * mean, 0.0) * got / (got - 1)
    return mean, math.sqrt(var / got)


def oracle_dijkstra_dist(n: int, edges: Sequence[tuple[int, int]], costs: Sequence[float], s: int) -> list[float]:
    """Single-source distances with a plain binary heap."""
    nbrs: list[list[tuple[int, float]]] = [[] for _ in range(n)]
    for (u, v), c in zip(edges, costs):
        nbrs[u].append((v, c))
        nbrs[v].append((u, c))
    dist = [math.inf] * n
    dist[s] = 0.0
    heap = [(0.0, s)]
    while heap:
        d, v = heapq.heappop(heap)
        if d > dist[v]:
            continue
        for w, c in nbrs[v]:
            if d + c < dist[w]:
                dist[w] = d + c
                heapq.heappush(heap, (d + c, w))
    return dist


def random_connected_graph(rng: StableRng, n: int, extra: int) -> list[tuple[int, int]]:
    """Random spanning tree plus ``extra`` random non-duplicate edges."""
    edges = set()
    perm = np.argsort(rng.uniform(n), kind="stable")
    for i in range(1, n):
        j = int(rng.integers(1, i)[0])
        u, v = int(perm[i]), int(perm[j])
        edges.add((min(u, v), max(u, v)))
    tries = 0
    while len(edges) < n - 1 + extra and tries < 50 * (extra + 1):
        tries += 1
        u, v = (int(a) for a in rng.integers(2, n))
        if u != v:
            edges.add((min(u, v), max(u, v)))
    return sorted(edges)
