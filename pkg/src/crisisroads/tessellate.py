"""Thiessen influence polygons, area-weighted regional sentiment and
natural-breaks classification."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import shapely
import shapely.ops
from shapely.geometry import MultiPoint, Point, shape
from shapely.geometry.base import BaseGeometry

from .geo import LocalFrame
from .ingest import StudyRegion
from .sentiment import ScoredPost

MERGE_DISTANCE_M = 1.0


class TessellationError(ValueError):
    pass


@dataclass(frozen=True)
class Site:
    site_id: str
    x: float
    y: float
    sentiment: float
    multiplicity: int = 1

    @property
    def xy(self) -> tuple[float, float]:
        return (self.x, self.y)


@dataclass(frozen=True)
class Cell:
    site_id: str
    polygon: BaseGeometry
    area: float
    sentiment: float
    site_xy: tuple[float, float] = (math.nan, math.nan)
    multiplicity: int = 1


@dataclass
class ThiessenDiagram:
    cells: list[Cell]
    total_area: float
    frame: LocalFrame | None = None
    region: BaseGeometry | None = field(default=None, repr=False)

    def sentiments(self) -> np.ndarray:
        return np.array([c.sentiment for c in self.cells], dtype=float)

    def areas(self) -> np.ndarray:
        return np.array([c.area for c in self.cells], dtype=float)


def project(
    posts: Sequence[ScoredPost], region: StudyRegion, frame: LocalFrame | None = None
) -> tuple[list[Site], BaseGeometry]:
    """Project scored posts to the region's planar frame and merge coincident ones.

    Posts closer than 1 m to an earlier site join it; the site keeps the
    first post's id and position and averages the sentiments.
    """
    frame = frame or region.frame()
    region_xy = project_region(region, frame)
    sites: list[list] = []  # [id, x, y, sum, count]
    buckets: dict[tuple[int, int], list[int]] = {}
    for p in posts:
        x, y = frame.forward_point(p.lon, p.lat)
        bx, by = math.floor(x / MERGE_DISTANCE_M), math.floor(y / MERGE_DISTANCE_M)
        hit = None
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                for idx in buckets.get((bx + dx, by + dy), ()):
                    s = sites[idx]
                    if math.hypot(s[1] - x, s[2] - y) < MERGE_DISTANCE_M:
                        hit = idx
                        break
                if hit is not None:
                    break
            if hit is not None:
                break
        if hit is None:
            buckets.setdefault((bx, by), []).append(len(sites))
            sites.append([p.post_id, x, y, p.compound, 1])
        else:
            sites[hit][3] += p.compound
            sites[hit][4] += 1
    return [Site(s[0], s[1], s[2], s[3] / s[4], s[4]) for s in sites], region_xy


def project_region(region: StudyRegion, frame: LocalFrame) -> BaseGeometry:
    def fwd(x, y, z=None):
        return frame.forward(x, y)

    return shapely.ops.transform(fwd, region.to_shapely())


def tessellate(sites: Sequence[Site], region_xy: BaseGeometry, frame: LocalFrame | None = None) -> ThiessenDiagram:
    """Voronoi cells of ``sites`` clipped to the planar region polygon."""
    if not sites:
        raise TessellationError("cannot tessellate zero sites")
    for s in sites:
        if region_xy.distance(Point(s.x, s.y)) > 1e-6:
            raise TessellationError(f"site {s.site_id} lies outside the region")
    if len(sites) == 1:
        raw = [region_xy]
    else:
        vor = shapely.voronoi_polygons(
            MultiPoint([s.xy for s in sites]), extend_to=region_xy, ordered=True
        )
        raw = list(vor.geoms)
        if len(raw) != len(sites):
            raise TessellationError(f"voronoi returned {len(raw)} cells for {len(sites)} sites")
    cells = []
    for s, poly in zip(sites, raw):
        clipped = poly.intersection(region_xy)
        cells.append(Cell(s.site_id, clipped, clipped.area, s.sentiment, s.xy, s.multiplicity))
    return ThiessenDiagram(cells, region_xy.area, frame, region_xy)


def regional_mean(diagram: ThiessenDiagram) -> float:
    """Area-weighted mean sentiment: sum of (A_i / A) * T_i."""
    if diagram.total_area <= 0:
        raise TessellationError("diagram has zero area")
    return float(np.dot(diagram.areas(), diagram.sentiments()) / diagram.total_area)


def nearest_cell_index(diagram: ThiessenDiagram, x: float, y: float) -> int | None:
    """Index of the cell covering (x, y), or None outside the diagram."""
    p = Point(x, y)
    for i, c in enumerate(diagram.cells):
        if c.polygon.covers(p):
            return i
    return None


# --- natural breaks -------------------------------------------------------


@dataclass(frozen=True)
class ClassBreaks:
    k: int
    upper_bounds: tuple[float, ...]
    gvf: float
    sse: float = 0.0
    # exclusive end index (into the sorted values) of each class
    cuts: tuple[int, ...] = ()
    degenerate: bool = False


def _class_sse(values: np.ndarray) -> float:
    if len(values) == 0:
        return 0.0
    return float(np.sum((values - values.mean()) ** 2))


def jenks_breaks(values: Sequence[float], k: int) -> ClassBreaks:
    """Optimal contiguous k-partition of the sorted values (Fisher/Jenks).

    Exact dynamic program over the distinct values weighted by their
    multiplicity, so identical values always share a class. Minimises the
    total within-class sum of squared deviations.
    """
    x = np.sort(np.asarray(values, dtype=float))
    if x.size == 0:
        raise ValueError("jenks_breaks needs at least one value")
    if not np.all(np.isfinite(x)):
        raise ValueError("jenks_breaks values must be finite")
    if k < 1:
        raise ValueError("k must be >= 1")
    u, w = np.unique(x, return_counts=True)
    m = len(u)
    total_sse = _class_sse(x)
    if m == 1:
        return ClassBreaks(1, (float(u[0]),), 1.0, 0.0, (x.size,), degenerate=True)
    if k > m:
        raise ValueError(f"k={k} exceeds the number of distinct values ({m})")

    shifted = u - x.mean()
    W0 = np.concatenate([[0.0], np.cumsum(w)])
    W1 = np.concatenate([[0.0], np.cumsum(w * shifted)])
    W2 = np.concatenate([[0.0], np.cumsum(w * shifted**2)])

    def cost(a: np.ndarray, b: int) -> np.ndarray:
        n = W0[b] - W0[a]
        s1 = W1[b] - W1[a]
        return np.maximum(W2[b] - W2[a] - s1 * s1 / n, 0.0)

    # D[j, b]: best SSE of the first b distinct values split into j+1 classes
    D = np.full((k, m + 1), np.inf)
    back = np.zeros((k, m + 1), dtype=np.int64)
    first = np.arange(1, m + 1)
    s1 = W1[first]
    D[0, 1:] = np.maximum(W2[first] - s1 * s1 / W0[first], 0.0)
    for j in range(1, k):
        for b in range(j + 1, m + 1):
            a = np.arange(j, b)
            cand = D[j - 1, a] + cost(a, b)
            best = int(np.argmin(cand))
            D[j, b] = cand[best]
            back[j, b] = a[best]

    ends = [m]
    b = m
    for j in range(k - 1, 0, -1):
        b = int(back[j, b])
        ends.append(b)
    ends.reverse()
    starts = [0] + ends[:-1]
    bounds = tuple(float(u[e - 1]) for e in ends)
    cuts = tuple(int(W0[e]) for e in ends)
    sse = sum(_class_sse(x[int(W0[s]) : int(W0[e])]) for s, e in zip(starts, ends))
    gvf = 1.0 - sse / total_sse if total_sse > 0 else 1.0
    return ClassBreaks(k, bounds, gvf, sse, cuts)


def classify(values: Sequence[float], breaks: ClassBreaks) -> list[int]:
    """Class index (1-based) of each value: the smallest i with v <= bound_i.

    Values above the last bound are clamped into class k.
    """
    bounds = np.asarray(breaks.upper_bounds, dtype=float)
    idx = np.searchsorted(bounds, np.asarray(values, dtype=float), side="left")
    return [int(i) + 1 for i in np.minimum(idx, len(bounds) - 1)]


# --- export ---------------------------------------------------------------


def _fmt(v: float) -> float:
    return float(f"{v:.9g}")


def _lonlat_coords(geom: BaseGeometry, frame: LocalFrame):
    back = shapely.ops.transform(lambda x, y, z=None: frame.inverse(x, y), geom)
    return json.loads(json.dumps(shapely.geometry.mapping(back)), parse_float=lambda s: _fmt(float(s)))


def diagram_to_geojson(diagram: ThiessenDiagram, classes: Sequence[int] | None = None) -> dict:
    if diagram.frame is None:
        raise TessellationError("diagram has no frame; cannot export lon/lat")
    feats = []
    for i, c in enumerate(diagram.cells):
        slon, slat = diagram.frame.inverse_point(*c.site_xy)
        feats.append(
            {
                "type": "Feature",
                "properties": {
                    "site_id": c.site_id,
                    "sentiment": _fmt(c.sentiment),
                    "area_m2": _fmt(c.area),
                    "class": int(classes[i]) if classes is not None else None,
                    "multiplicity": c.multiplicity,
                    "site_lon": _fmt(slon),
                    "site_lat": _fmt(slat),
                },
                "geometry": _lonlat_coords(c.polygon, diagram.frame),
            }
        )
    return {"type": "FeatureCollection", "features": feats}


def diagram_from_geojson(obj: dict, region: StudyRegion, frame: LocalFrame | None = None) -> ThiessenDiagram:
    """Rebuild a diagram written by :func:`diagram_to_geojson`."""
    frame = frame or region.frame()
    region_xy = project_region(region, frame)
    cells = []
    for f in obj.get("features", []):
        props = f["properties"]
        geom = shapely.ops.transform(lambda x, y, z=None: frame.forward(x, y), shape(f["geometry"]))
        cells.append(
            Cell(
                props["site_id"],
                geom,
                geom.area,
                float(props["sentiment"]),
                frame.forward_point(props["site_lon"], props["site_lat"]),
                int(props.get("multiplicity", 1)),
            )
        )
    return ThiessenDiagram(cells, region_xy.area, frame, region_xy)


def write_geojson(obj: dict, path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, ensure_ascii=False, sort_keys=True, separators=(",", ":"))
        fh.write("\n")
