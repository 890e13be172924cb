"""Reading, de-duplicating and spatially filtering geotagged posts.

Also plans the point-radius coverage lattice used to audit how a study
region was queried.
"""
from __future__ import annotations

import csv
import json
import logging
import math
import re
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
import shapely
from shapely.geometry import MultiPolygon, Polygon

from .geo import METERS_PER_MILE, LocalFrame, haversine_m_array, points_in_rings

log = logging.getLogger(__name__)

POST_FIELDS = ("id", "author_id", "ts", "lon", "lat", "text")


class IngestError(Exception):
    """Raised for unreadable inputs or invalid regions/parameters."""


_FRACTION = re.compile(r"(?<=\d\d:\d\d:\d\d)[.,]\d+")


def parse_ts(value: str) -> datetime:
    """Parse an ISO-8601 timestamp into an aware UTC datetime (second resolution).

    Naive timestamps are taken to be UTC.
    """
    if not isinstance(value, str) or not value.strip():
        raise ValueError("timestamp must be a non-empty string")
    s = value.strip()
    if s.endswith(("Z", "z")):
        s = s[:-1] + "+00:00"
    # older fromisoformat only takes 3 or 6 fractional digits; seconds are all we keep
    s = _FRACTION.sub("", s)
    dt = datetime.fromisoformat(s)
    if dt.tzinfo is None:
        dt = dt.replace(tzinfo=timezone.utc)
    return dt.astimezone(timezone.utc).replace(microsecond=0)


def format_ts(dt: datetime) -> str:
    return dt.astimezone(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


@dataclass(frozen=True)
class GeoPost:
    id: str
    author_id: str
    ts: datetime
    lon: float
    lat: float
    text: str
    lang: str | None = None

    def to_record(self) -> dict:
        rec = {
            "id": self.id,
            "author_id": self.author_id,
            "ts": format_ts(self.ts),
            "lon": self.lon,
            "lat": self.lat,
            "text": self.text,
        }
        if self.lang is not None:
            rec["lang"] = self.lang
        return rec


def post_from_record(rec: dict) -> GeoPost:
    """Validate one raw record; raises ValueError describing the first problem."""
    for key in POST_FIELDS:
        if key not in rec or rec[key] is None or rec[key] == "":
            if key == "text" and rec.get(key) == "":
                continue
            raise ValueError(f"missing field {key!r}")
    post_id = str(rec["id"]).strip()
    if not post_id:
        raise ValueError("empty id")
    lon = float(rec["lon"])
    lat = float(rec["lat"])
    if not (math.isfinite(lon) and math.isfinite(lat)):
        raise ValueError("non-finite coordinate")
    if not -180.0 <= lon <= 180.0 or not -90.0 <= lat <= 90.0:
        raise ValueError("coordinate out of range")
    text = rec["text"]
    if not isinstance(text, str):
        raise ValueError("text must be a string")
    lang = rec.get("lang")
    return GeoPost(
        id=post_id,
        author_id=str(rec["author_id"]),
        ts=parse_ts(str(rec["ts"])),
        lon=lon,
        lat=lat,
        text=text,
        lang=str(lang) if lang not in (None, "") else None,
    )


def _iter_records(path: Path, fmt: str):
    if fmt == "ndjson":
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, 1):
                if not line.strip():
                    continue
                try:
                    rec = json.loads(line)
                except json.JSONDecodeError as exc:
                    yield lineno, None, f"bad JSON: {exc.msg}"
                    continue
                if not isinstance(rec, dict):
                    yield lineno, None, "record is not an object"
                    continue
                yield lineno, rec, None
    elif fmt == "csv":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            missing = [c for c in POST_FIELDS if c not in (reader.fieldnames or [])]
            if reader.fieldnames is not None and missing:
                raise IngestError(f"{path}: CSV header lacks columns {missing}")
            for lineno, rec in enumerate(reader, 2):
                yield lineno, rec, None
    else:
        raise IngestError(f"unknown post format {fmt!r} (expected ndjson or csv)")


def read_posts(path: str | Path, fmt: str | None = None) -> tuple[list[GeoPost], int]:
    """Read posts from NDJSON or CSV.

    Returns ``(posts, skipped)``; malformed records are skipped with a warning
    and counted, an unreadable file raises :class:`IngestError`.
    """
    path = Path(path)
    if fmt is None:
        fmt = "csv" if path.suffix.lower() == ".csv" else "ndjson"
    if not path.is_file():
        raise IngestError(f"cannot read posts file {path}")
    posts: list[GeoPost] = []
    skipped = 0
    try:
        for lineno, rec, problem in _iter_records(path, fmt):
            if problem is None:
                try:
                    posts.append(post_from_record(rec))
                    continue
                except (ValueError, TypeError) as exc:
                    problem = str(exc)
            skipped += 1
            log.warning("%s:%d skipped: %s", path.name, lineno, problem)
    except (OSError, UnicodeDecodeError) as exc:
        raise IngestError(f"cannot read posts file {path}: {exc}") from exc
    return posts, skipped


def write_posts_ndjson(posts: Iterable[GeoPost], path: str | Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for p in posts:
            fh.write(json.dumps(p.to_record(), ensure_ascii=False, sort_keys=True) + "\n")


_WS = re.compile(r"\s+")


def normalize_text(text: str) -> str:
    return _WS.sub(" ", text.lower()).strip()


def dedup(posts: Sequence[GeoPost]) -> list[GeoPost]:
    """Keep the first occurrence of each post.

    A post duplicates an earlier one if it shares its id, or its
    (author, normalised text, timestamp) triple.
    """
    seen_ids: set[str] = set()
    seen_keys: set[tuple] = set()
    out = []
    for p in posts:
        key = (p.author_id, normalize_text(p.text), p.ts)
        if p.id in seen_ids or key in seen_keys:
            continue
        seen_ids.add(p.id)
        seen_keys.add(key)
        out.append(p)
    return out


def filter_lang(posts: Sequence[GeoPost], lang: str | None) -> list[GeoPost]:
    """Drop posts whose ``lang`` tag is present and differs from ``lang``."""
    if not lang:
        return list(posts)
    return [p for p in posts if p.lang is None or p.lang == lang]


def filter_window(
    posts: Sequence[GeoPost], start: datetime | None, end: datetime | None
) -> list[GeoPost]:
    """Keep posts with start <= ts < end (either bound may be open)."""
    return [
        p
        for p in posts
        if (start is None or p.ts >= start) and (end is None or p.ts < end)
    ]


# --- study region ---------------------------------------------------------


@dataclass(frozen=True)
class StudyRegion:
    """One or more polygons in lon/lat; each polygon is (outer, *holes)."""

    polygons: tuple[tuple[tuple[tuple[float, float], ...], ...], ...]

    def __post_init__(self):
        if not self.polygons:
            raise IngestError("region has no polygons")
        geom = self.to_shapely()
        if not geom.is_valid:
            raise IngestError(f"region polygon is invalid: {shapely.is_valid_reason(geom)}")
        if geom.area <= 0:
            raise IngestError("region has zero area")

    @classmethod
    def from_rings(cls, *rings) -> "StudyRegion":
        """Single polygon from an outer ring and optional holes."""
        return cls((tuple(_close(r) for r in rings),))

    @classmethod
    def from_bbox(cls, lon_min, lat_min, lon_max, lat_max) -> "StudyRegion":
        return cls.from_rings(
            [(lon_min, lat_min), (lon_max, lat_min), (lon_max, lat_max), (lon_min, lat_max)]
        )

    @classmethod
    def from_geojson(cls, obj: dict) -> "StudyRegion":
        if obj.get("type") == "FeatureCollection":
            geoms = [f["geometry"] for f in obj.get("features", [])]
        elif obj.get("type") == "Feature":
            geoms = [obj["geometry"]]
        else:
            geoms = [obj]
        polys = []
        for g in geoms:
            if g["type"] == "Polygon":
                polys.append(g["coordinates"])
            elif g["type"] == "MultiPolygon":
                polys.extend(g["coordinates"])
            else:
                raise IngestError(f"region geometry must be (Multi)Polygon, got {g['type']}")
        for poly in polys:
            for ring in poly:
                if tuple(ring[0]) != tuple(ring[-1]):
                    raise IngestError("region ring is not closed")
        return cls(tuple(tuple(_close(r) for r in poly) for poly in polys))

    def to_shapely(self):
        parts = [Polygon(poly[0], poly[1:]) for poly in self.polygons]
        return parts[0] if len(parts) == 1 else MultiPolygon(parts)

    def to_geojson(self) -> dict:
        coords = [[[list(pt) for pt in ring] for ring in poly] for poly in self.polygons]
        if len(coords) == 1:
            geom = {"type": "Polygon", "coordinates": coords[0]}
        else:
            geom = {"type": "MultiPolygon", "coordinates": coords}
        return {
            "type": "FeatureCollection",
            "features": [{"type": "Feature", "properties": {}, "geometry": geom}],
        }

    @property
    def bbox(self) -> tuple[float, float, float, float]:
        return tuple(self.to_shapely().bounds)

    def centroid(self) -> tuple[float, float]:
        c = self.to_shapely().centroid
        return (c.x, c.y)

    def frame(self) -> LocalFrame:
        """The shared planar frame: equidistant cylindrical about the centroid."""
        return LocalFrame(*self.centroid())

    def contains(self, lon, lat) -> np.ndarray:
        lon = np.asarray(lon, dtype=float)
        lat = np.asarray(lat, dtype=float)
        out = np.zeros(lon.shape, dtype=bool)
        for poly in self.polygons:
            out |= points_in_rings(lon, lat, poly)
        return out


def _close(ring) -> tuple[tuple[float, float], ...]:
    pts = [(float(p[0]), float(p[1])) for p in ring]
    if pts[0] != pts[-1]:
        pts.append(pts[0])
    return tuple(pts)


def load_region(path: str | Path) -> StudyRegion:
    try:
        with open(path, encoding="utf-8") as fh:
            obj = json.load(fh)
    except (OSError, json.JSONDecodeError) as exc:
        raise IngestError(f"cannot read region file {path}: {exc}") from exc
    return StudyRegion.from_geojson(obj)


def filter_region(posts: Sequence[GeoPost], region: StudyRegion) -> list[GeoPost]:
    """Keep posts inside or on the boundary of the region (even-odd rule)."""
    if not posts:
        return []
    keep = region.contains([p.lon for p in posts], [p.lat for p in posts])
    return [p for p, k in zip(posts, keep) if k]


# --- coverage grid --------------------------------------------------------


@dataclass(frozen=True)
class CoverageGrid:
    centers: list[tuple[float, float]]
    radius_miles: float
    spacing_miles: float
    nx: int = 0
    ny: int = 0
    frame: LocalFrame | None = field(default=None, compare=False)

    def __len__(self) -> int:
        return len(self.centers)

    def min_distance_miles(self, lon, lat) -> np.ndarray:
        """Great-circle distance from each point to its nearest center."""
        lon = np.atleast_1d(np.asarray(lon, dtype=float))
        lat = np.atleast_1d(np.asarray(lat, dtype=float))
        c = np.asarray(self.centers, dtype=float)
        best = np.full(lon.shape, np.inf)
        for start in range(0, len(c), 256):
            chunk = c[start : start + 256]
            d = haversine_m_array(lon[:, None], lat[:, None], chunk[None, :, 0], chunk[None, :, 1])
            best = np.minimum(best, d.min(axis=1))
        return best / METERS_PER_MILE


def plan_grid(region: StudyRegion, radius_miles: float = 25.0, spacing_miles: float = 25.0) -> CoverageGrid:
    """Square lattice of query centers covering the region's bounding box.

    The lattice is anchored at the bounding box's south-west corner in the
    region's local frame and extends one row/column past the far edges, so
    every cell corner is a center.
    """
    if not (radius_miles > 0 and spacing_miles > 0):
        raise IngestError("radius and spacing must be positive")
    if spacing_miles > radius_miles * math.sqrt(2) * (1 + 1e-12):
        raise IngestError(
            f"spacing {spacing_miles} mi exceeds radius*sqrt(2) = {radius_miles * math.sqrt(2):.6g} mi;"
            " the lattice would leave gaps"
        )
    frame = region.frame()
    lon_min, lat_min, lon_max, lat_max = region.bbox
    x0, y0 = frame.forward_point(lon_min, lat_min)
    x1, y1 = frame.forward_point(lon_max, lat_max)
    step = spacing_miles * METERS_PER_MILE
    nx = max(1, math.ceil((x1 - x0) / step - 1e-9)) + 1
    ny = max(1, math.ceil((y1 - y0) / step - 1e-9)) + 1
    xs = x0 + step * np.arange(nx)
    ys = y0 + step * np.arange(ny)
    gx, gy = np.meshgrid(xs, ys)
    lons, lats = frame.inverse(gx.ravel(), gy.ravel())
    centers = [(float(a), float(b)) for a, b in zip(lons, lats)]
    return CoverageGrid(centers, radius_miles, spacing_miles, nx, ny, frame)
