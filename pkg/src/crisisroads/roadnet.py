"""Road network loading and transfer of Thiessen sentiment onto road segments."""
from __future__ import annotations

import csv
import json
import logging
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping, Sequence

import shapely
import shapely.wkt
from shapely.geometry import LineString
from shapely.strtree import STRtree

from .geo import LocalFrame
from .tessellate import ClassBreaks, ThiessenDiagram, classify, jenks_breaks, regional_mean

log = logging.getLogger(__name__)

FCLASSES = ("interstate", "state_highway", "arterial", "collector", "local")
SNAP_TOLERANCE_M = 1e-9


class NetworkError(Exception):
    """Fatal problem with network input (e.g. a dangling endpoint)."""


@dataclass(frozen=True)
class RoadNode:
    node_id: str
    lon: float
    lat: float
    x: float = math.nan
    y: float = math.nan


@dataclass(frozen=True)
class RoadEdge:
    edge_id: str
    u: str
    v: str
    coords: tuple[tuple[float, float], ...]  # lon/lat polyline
    fclass: str = "local"
    line: LineString | None = field(default=None, compare=False, repr=False)  # projected

    @property
    def length(self) -> float:
        return self.line.length if self.line is not None else math.nan


@dataclass
class RoadNetwork:
    nodes: dict[str, RoadNode]
    edges: list[RoadEdge]
    frame: LocalFrame | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.nodes)

    @property
    def e(self) -> int:
        return len(self.edges)

    def total_length(self) -> float:
        return sum(ed.length for ed in self.edges)

    def project(self, frame: LocalFrame) -> "RoadNetwork":
        """Copy of the network with planar coordinates in ``frame``."""
        nodes = {}
        for nid, nd in self.nodes.items():
            x, y = frame.forward_point(nd.lon, nd.lat)
            nodes[nid] = RoadNode(nid, nd.lon, nd.lat, x, y)
        edges = []
        for ed in self.edges:
            xs, ys = frame.forward([c[0] for c in ed.coords], [c[1] for c in ed.coords])
            line = LineString(list(zip(xs.tolist(), ys.tolist())))
            edges.append(RoadEdge(ed.edge_id, ed.u, ed.v, ed.coords, ed.fclass, line))
        return RoadNetwork(nodes, edges, frame, list(self.warnings))


def _norm_fclass(raw, edge_id: str, warnings: list[str]) -> str:
    fc = (raw or "").strip().lower().replace(" ", "_").replace("-", "_")
    if fc not in FCLASSES:
        warnings.append(f"edge {edge_id}: unknown fclass {raw!r}, using 'local'")
        return "local"
    return fc


def read_nodes_csv(path: str | Path) -> dict[str, RoadNode]:
    nodes = {}
    with open(path, encoding="utf-8", newline="") as fh:
        reader = csv.DictReader(fh)
        missing = {"node_id", "lon", "lat"} - set(reader.fieldnames or [])
        if missing:
            raise NetworkError(f"{path}: nodes CSV lacks columns {sorted(missing)}")
        for rec in reader:
            nid = rec["node_id"].strip()
            lon, lat = float(rec["lon"]), float(rec["lat"])
            if not (math.isfinite(lon) and math.isfinite(lat)):
                raise NetworkError(f"node {nid} has non-finite coordinates")
            nodes[nid] = RoadNode(nid, lon, lat)
    return nodes


def _read_edge_records(path: Path) -> list[tuple[str, str, str, str, list | None]]:
    recs = []
    if path.suffix.lower() in (".geojson", ".json"):
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
        for f in obj.get("features", []):
            props = f.get("properties") or {}
            geom = f.get("geometry")
            coords = None
            if geom:
                if geom["type"] != "LineString":
                    raise NetworkError(f"edge {props.get('edge_id')}: geometry must be LineString")
                coords = [tuple(c[:2]) for c in geom["coordinates"]]
            recs.append((str(props["edge_id"]), str(props["u"]), str(props["v"]), props.get("fclass"), coords))
    else:
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            missing = {"edge_id", "u", "v", "fclass"} - set(reader.fieldnames or [])
            if missing:
                raise NetworkError(f"{path}: edges CSV lacks columns {sorted(missing)}")
            for rec in reader:
                wkt = (rec.get("wkt_linestring") or "").strip()
                coords = list(shapely.wkt.loads(wkt).coords) if wkt else None
                recs.append((rec["edge_id"].strip(), rec["u"].strip(), rec["v"].strip(), rec["fclass"], coords))
    return recs


def load_network(nodes_path: str | Path, edges_path: str | Path, frame: LocalFrame | None = None) -> RoadNetwork:
    """Load an undirected road graph.

    Self-loops and parallel edges (a second edge between the same pair of
    nodes) are skipped with a warning. An edge naming an unknown node is
    fatal.
    """
    nodes = read_nodes_csv(nodes_path)
    warnings: list[str] = []
    edges = []
    seen_pairs: set[frozenset] = set()
    seen_ids: set[str] = set()
    for edge_id, u, v, fclass, coords in _read_edge_records(Path(edges_path)):
        for end in (u, v):
            if end not in nodes:
                raise NetworkError(f"edge {edge_id} references missing node {end!r}")
        if edge_id in seen_ids:
            warnings.append(f"edge {edge_id}: duplicate edge_id, skipped")
            continue
        if u == v:
            warnings.append(f"edge {edge_id}: self-loop at {u}, skipped")
            continue
        pair = frozenset((u, v))
        if pair in seen_pairs:
            warnings.append(f"edge {edge_id}: parallel edge {u}-{v}, skipped")
            continue
        if not coords or len(coords) < 2:
            coords = [(nodes[u].lon, nodes[u].lat), (nodes[v].lon, nodes[v].lat)]
        seen_pairs.add(pair)
        seen_ids.add(edge_id)
        edges.append(RoadEdge(edge_id, u, v, tuple((float(a), float(b)) for a, b in coords),
                              _norm_fclass(fclass, edge_id, warnings)))
    for w in warnings:
        log.warning(w)
    net = RoadNetwork(nodes, edges, None, warnings)
    return net.project(frame) if frame is not None else net


def write_network(net: RoadNetwork, nodes_path: str | Path, edges_path: str | Path) -> None:
    """Nodes CSV plus edges as GeoJSON LineStrings."""
    with open(nodes_path, "w", encoding="utf-8", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["node_id", "lon", "lat"])
        for nd in net.nodes.values():
            w.writerow([nd.node_id, f"{nd.lon:.9g}", f"{nd.lat:.9g}"])
    feats = [
        {
            "type": "Feature",
            "properties": {"edge_id": ed.edge_id, "u": ed.u, "v": ed.v, "fclass": ed.fclass},
            "geometry": {"type": "LineString", "coordinates": [[float(f"{a:.9g}"), float(f"{b:.9g}")] for a, b in ed.coords]},
        }
        for ed in net.edges
    ]
    with open(edges_path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump({"type": "FeatureCollection", "features": feats}, fh, sort_keys=True, separators=(",", ":"))
        fh.write("\n")


# --- spatial join ---------------------------------------------------------


@dataclass
class JoinResult:
    sentiment: dict[str, float]
    covered_length: dict[str, float]
    length: dict[str, float]
    uncovered: list[str]  # edges with no covered length, given the regional mean
    fallback: float = 0.0

    @property
    def uncovered_length(self) -> float:
        gaps = (self.length[e] - c for e, c in self.covered_length.items())
        # ignore float residue from clipping at cell boundaries
        return float(sum(g for g in gaps if g > 1e-6))


def spatial_join(net: RoadNetwork, diagram: ThiessenDiagram, rule: str = "length") -> JoinResult:
    """Sentiment of each edge from the Thiessen cells it crosses.

    ``rule="length"``: mean of cell sentiments weighted by the length of the
    edge inside each cell. ``rule="midpoint"``: sentiment of the cell holding
    the edge's midpoint. Edges not touching any cell get the diagram's
    area-weighted mean and are listed in ``uncovered``.
    """
    if rule not in ("length", "midpoint"):
        raise ValueError(f"unknown join rule {rule!r}")
    polys = [c.polygon for c in diagram.cells]
    tree = STRtree(polys)
    fallback = regional_mean(diagram) if diagram.cells else 0.0
    sentiment, covered, uncovered, lengths = {}, {}, [], {}
    for ed in net.edges:
        line = ed.line
        length = line.length
        lengths[ed.edge_id] = length
        if rule == "midpoint":
            mid = line.interpolate(0.5, normalized=True)
            hits = [int(i) for i in tree.query(mid, predicate="intersects")]
            if hits:
                i = min(hits)
                sentiment[ed.edge_id] = diagram.cells[i].sentiment
                covered[ed.edge_id] = length
            else:
                sentiment[ed.edge_id] = fallback
                covered[ed.edge_id] = 0.0
                uncovered.append(ed.edge_id)
            continue
        parts = []
        for i in sorted(int(i) for i in tree.query(line, predicate="intersects")):
            seg = line.intersection(polys[i])
            seg_len = seg.length
            if seg_len > SNAP_TOLERANCE_M:
                parts.append((seg_len, diagram.cells[i].sentiment))
        inside = sum(p[0] for p in parts)
        if inside <= SNAP_TOLERANCE_M:
            sentiment[ed.edge_id] = fallback
            covered[ed.edge_id] = 0.0
            uncovered.append(ed.edge_id)
        else:
            # boundary-hugging pieces can be counted by two cells; normalise
            sentiment[ed.edge_id] = sum(l * s for l, s in parts) / inside
            covered[ed.edge_id] = min(inside, length)
    return JoinResult(sentiment, covered, lengths, uncovered, fallback)


def scale_weights(sentiments: Mapping[str, float]) -> tuple[dict[str, float], bool]:
    """Affine map of sentiment onto [0, 1] with the most negative edge at 1.

    Returns ``(weights, degenerate)``; when every sentiment is equal all
    weights are 0.5 and ``degenerate`` is True.
    """
    if not sentiments:
        raise ValueError("scale_weights needs at least one edge")
    vals = list(sentiments.values())
    s_min, s_max = min(vals), max(vals)
    if s_max == s_min:
        return {k: 0.5 for k in sentiments}, True
    span = s_max - s_min
    return {k: min(1.0, max(0.0, (s_max - s) / span)) for k, s in sentiments.items()}, False


def classify_edges(sentiments: Mapping[str, float], k: int = 10) -> tuple[dict[str, int], ClassBreaks]:
    """Natural-breaks classes of edge sentiments.

    ``k`` is reduced to the number of distinct values when it exceeds it.
    """
    keys = list(sentiments)
    vals = [sentiments[e] for e in keys]
    k_eff = min(k, len(set(vals)))
    breaks = jenks_breaks(vals, k_eff)
    return dict(zip(keys, classify(vals, breaks))), breaks


# --- metrics record -------------------------------------------------------


@dataclass
class EdgeMetrics:
    edge_id: str
    sentiment: float
    weight: float
    cls: int
    bc_unweighted: float = 0.0
    bc_weighted: float = 0.0
    rank_unweighted: int = 0
    rank_weighted: int = 0


def rank_descending(scores: Sequence[float], method: str = "ordinal", rtol: float = 1e-9) -> list[int]:
    """1-based ranks, highest score first.

    ``ordinal`` gives a permutation of 1..n with ties broken by input order;
    ``dense`` gives tied scores (within ``rtol``) the same rank.
    """
    order = sorted(range(len(scores)), key=lambda i: (-scores[i], i))
    ranks = [0] * len(scores)
    if method == "ordinal":
        for r, i in enumerate(order, 1):
            ranks[i] = r
        return ranks
    if method != "dense":
        raise ValueError(f"unknown rank method {method!r}")
    r = 0
    prev = None
    for i in order:
        s = scores[i]
        if prev is None or not math.isclose(s, prev, rel_tol=rtol, abs_tol=rtol):
            r += 1
            prev = s
        ranks[i] = r
    return ranks
