"""Geodesy and planar-geometry primitives shared by the pipeline stages."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

EARTH_RADIUS_M = 6_371_008.8
METERS_PER_MILE = 1_609.344


def haversine_m(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    """Great-circle distance in meters between two lon/lat points (degrees)."""
    phi1 = math.radians(lat1)
    phi2 = math.radians(lat2)
    dphi = phi2 - phi1
    dlam = math.radians(lon2 - lon1)
    a = math.sin(dphi / 2) ** 2 + math.cos(phi1) * math.cos(phi2) * math.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * math.asin(min(1.0, math.sqrt(a)))


def haversine_miles(lon1: float, lat1: float, lon2: float, lat2: float) -> float:
    return haversine_m(lon1, lat1, lon2, lat2) / METERS_PER_MILE


def haversine_m_array(lon1, lat1, lon2, lat2) -> np.ndarray:
    """Vectorised haversine; arguments broadcast against each other."""
    phi1 = np.radians(lat1)
    phi2 = np.radians(lat2)
    dphi = phi2 - phi1
    dlam = np.radians(np.asarray(lon2) - np.asarray(lon1))
    a = np.sin(dphi / 2) ** 2 + np.cos(phi1) * np.cos(phi2) * np.sin(dlam / 2) ** 2
    return 2 * EARTH_RADIUS_M * np.arcsin(np.minimum(1.0, np.sqrt(a)))


@dataclass(frozen=True)
class LocalFrame:
    """Equidistant-cylindrical projection about an origin.

    x = R * dlon * cos(lat0), y = R * dlat, both in meters.
    """

    lon0: float
    lat0: float

    @property
    def _kx(self) -> float:
        return EARTH_RADIUS_M * math.cos(math.radians(self.lat0)) * math.pi / 180.0

    @property
    def _ky(self) -> float:
        return EARTH_RADIUS_M * math.pi / 180.0

    def forward(self, lon, lat):
        return (np.asarray(lon, dtype=float) - self.lon0) * self._kx, (
            np.asarray(lat, dtype=float) - self.lat0
        ) * self._ky

    def inverse(self, x, y):
        return np.asarray(x, dtype=float) / self._kx + self.lon0, np.asarray(
            y, dtype=float
        ) / self._ky + self.lat0

    def forward_point(self, lon: float, lat: float) -> tuple[float, float]:
        return ((lon - self.lon0) * self._kx, (lat - self.lat0) * self._ky)

    def inverse_point(self, x: float, y: float) -> tuple[float, float]:
        return (x / self._kx + self.lon0, y / self._ky + self.lat0)


def _on_segment(px, py, ax, ay, bx, by, tol):
    cross = (bx - ax) * (py - ay) - (by - ay) * (px - ax)
    seg_len = np.hypot(bx - ax, by - ay)
    near_line = np.abs(cross) <= tol * np.maximum(seg_len, 1e-300)
    within = (
        (px >= np.minimum(ax, bx) - tol)
        & (px <= np.maximum(ax, bx) + tol)
        & (py >= np.minimum(ay, by) - tol)
        & (py <= np.maximum(ay, by) + tol)
    )
    return near_line & within


def points_in_rings(x, y, rings, tol: float = 1e-12) -> np.ndarray:
    """Even-odd containment of points against a set of closed rings.

    Points lying on any ring edge (within ``tol``) count as inside. Holes are
    handled naturally by the even-odd rule when their rings are included.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    inside = np.zeros(x.shape, dtype=bool)
    boundary = np.zeros(x.shape, dtype=bool)
    for ring in rings:
        pts = np.asarray(ring, dtype=float)
        if len(pts) and (pts[0] != pts[-1]).any():
            pts = np.vstack([pts, pts[:1]])
        ax, ay = pts[:-1, 0], pts[:-1, 1]
        bx, by = pts[1:, 0], pts[1:, 1]
        for i in range(len(ax)):
            boundary |= _on_segment(x, y, ax[i], ay[i], bx[i], by[i], tol)
            straddles = (ay[i] > y) != (by[i] > y)
            with np.errstate(divide="ignore", invalid="ignore"):
                x_cross = ax[i] + (y - ay[i]) * (bx[i] - ax[i]) / (by[i] - ay[i])
            inside ^= straddles & (x < x_cross)
    return inside | boundary


def ring_area(ring) -> float:
    """Signed shoelace area (positive for counter-clockwise rings)."""
    pts = np.asarray(ring, dtype=float)
    x, y = pts[:, 0], pts[:, 1]
    return 0.5 * float(np.dot(x, np.roll(y, -1)) - np.dot(y, np.roll(x, -1)))
