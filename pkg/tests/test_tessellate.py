from __future__ import annotations

import math

import numpy as np
import pytest
import shapely
from hypothesis import given, settings
from hypothesis import strategies as st
from shapely.geometry import box

from crisisroads.ingest import StudyRegion
from crisisroads.sentiment import ScoredPost
from crisisroads.tessellate import (
    Site,
    TessellationError,
    classify,
    diagram_from_geojson,
    diagram_to_geojson,
    jenks_breaks,
    project,
    regional_mean,
    tessellate,
)
from crisisroads.testkit import oracle_jenks, oracle_regional_mean, partition_sse

UNIT = box(0, 0, 1, 1)
REGION = StudyRegion.from_bbox(-97.7, 35.3, -97.3, 35.6)


def sp(pid, c, lon, lat):
    return ScoredPost(pid, c, lon, lat, None)


def random_sites(rng, n, size=1.0):
    xy = rng.uniform(0.02 * size, 0.98 * size, (n, 2))
    return [Site(str(i), x, y, float(rng.uniform(-1, 1))) for i, (x, y) in enumerate(xy)]


# --- projection -----------------------------------------------------------


def test_project_merges_coincident_posts():
    sites, _ = project([sp("a", -1.0, -97.5, 35.5), sp("b", 1.0, -97.5, 35.5)], REGION)
    assert len(sites) == 1
    assert sites[0].sentiment == 0.0 and sites[0].multiplicity == 2 and sites[0].site_id == "a"


def test_project_single_post():
    sites, region_xy = project([sp("a", 0.3, -97.5, 35.5)], REGION)
    assert len(sites) == 1 and sites[0].multiplicity == 1
    assert region_xy.area > 0


def test_project_distinct_posts_bijective():
    rng = np.random.default_rng(3)
    lon = rng.uniform(-97.69, -97.31, 100)
    lat = rng.uniform(35.31, 35.59, 100)
    posts = [sp(str(i), 0.0, a, b) for i, (a, b) in enumerate(zip(lon, lat))]
    sites, _ = project(posts, REGION)
    assert [s.site_id for s in sites] == [p.post_id for p in posts]
    frame = REGION.frame()
    for s, p in zip(sites, posts):
        assert (s.x, s.y) == pytest.approx(frame.forward_point(p.lon, p.lat))


def test_project_merge_threshold_one_meter():
    frame = REGION.frame()
    a = frame.inverse_point(0.0, 0.0)
    b = frame.inverse_point(0.9, 0.0)
    c = frame.inverse_point(1.5, 0.0)
    sites, _ = project([sp("a", 1, *a), sp("b", 0, *b), sp("c", 0, *c)], REGION, frame)
    assert [s.multiplicity for s in sites] == [2, 1]


# --- tessellation ----------------------------------------------------------


def test_single_site_whole_region():
    d = tessellate([Site("a", 0.5, 0.5, 0.3)], UNIT)
    assert len(d.cells) == 1 and d.cells[0].area == pytest.approx(1.0)
    assert regional_mean(d) == pytest.approx(0.3)


def test_two_sites_bisector():
    d = tessellate([Site("a", 0.25, 0.5, -1.0), Site("b", 0.75, 0.5, 1.0)], UNIT)
    assert [c.area for c in d.cells] == pytest.approx([0.5, 0.5])
    assert d.cells[0].polygon.bounds == pytest.approx((0, 0, 0.5, 1))
    assert regional_mean(d) == pytest.approx(0.0, abs=1e-12)


def test_tessellate_errors():
    with pytest.raises(TessellationError):
        tessellate([], UNIT)
    with pytest.raises(TessellationError):
        tessellate([Site("a", 2.0, 2.0, 0.0)], UNIT)


def nearest_property_holds(diagram, sites, qx, qy) -> bool:
    sx = np.array([s.x for s in sites])
    sy = np.array([s.y for s in sites])
    d = np.hypot(qx[:, None] - sx[None], qy[:, None] - sy[None])
    dmin = d.min(axis=1)
    ok = np.zeros(len(qx), dtype=bool)
    for i, cell in enumerate(diagram.cells):
        inside = shapely.intersects_xy(cell.polygon, qx, qy)
        ok |= inside & (d[:, i] <= dmin + 1e-9)
    return bool(ok.all())


@pytest.mark.parametrize("seed", range(5))
def test_nearest_site_property(seed):
    rng = np.random.default_rng(seed)
    sites = random_sites(rng, 20)
    d = tessellate(sites, UNIT)
    qx, qy = rng.uniform(0, 1, (2, 10_000))
    assert nearest_property_holds(d, sites, qx, qy)


@settings(max_examples=25, deadline=None)
@given(st.integers(1, 40), st.integers(0, 10_000))
def test_diagram_invariants(n, seed):
    rng = np.random.default_rng(seed)
    sites = random_sites(rng, n, 1000.0)
    region = box(0, 0, 1000, 1000)
    d = tessellate(sites, region)
    assert abs(sum(c.area for c in d.cells) - d.total_area) / d.total_area <= 1e-6
    for c, s in zip(d.cells, sites):
        assert c.polygon.covers(shapely.Point(s.x, s.y))
    for i in range(n):
        for j in range(i + 1, n):
            assert d.cells[i].polygon.intersection(d.cells[j].polygon).area <= 1e-6
    t = d.sentiments()
    assert t.min() - 1e-12 <= regional_mean(d) <= t.max() + 1e-12


def test_regional_mean_matches_monte_carlo():
    rng = np.random.default_rng(8)
    sites = random_sites(rng, 20)
    d = tessellate(sites, UNIT)
    mean, se = oracle_regional_mean([(s.x, s.y, s.sentiment) for s in sites], [list(UNIT.exterior.coords)], 200_000, 1)
    assert abs(regional_mean(d) - mean) <= max(0.01 * abs(mean), 3 * se)


def test_concave_region_clipping():
    # L-shaped region
    region = shapely.Polygon([(0, 0), (2, 0), (2, 1), (1, 1), (1, 2), (0, 2)])
    sites = [Site("a", 0.5, 0.5, 1.0), Site("b", 1.5, 0.5, 0.0), Site("c", 0.5, 1.5, 0.0)]
    d = tessellate(sites, region)
    assert sum(c.area for c in d.cells) == pytest.approx(3.0)
    assert regional_mean(d) == pytest.approx(d.cells[0].area / 3.0)


def test_geojson_round_trip():
    posts = [sp("a", -0.5, -97.6, 35.4), sp("b", 0.5, -97.4, 35.5)]
    sites, region_xy = project(posts, REGION)
    d = tessellate(sites, region_xy, REGION.frame())
    obj = diagram_to_geojson(d, [1, 2])
    props = obj["features"][0]["properties"]
    assert {"site_id", "sentiment", "area_m2", "class"} <= set(props)
    back = diagram_from_geojson(obj, REGION)
    assert [c.site_id for c in back.cells] == ["a", "b"]
    assert [c.area for c in back.cells] == pytest.approx([c.area for c in d.cells], rel=1e-6)
    assert regional_mean(back) == pytest.approx(regional_mean(d), abs=1e-6)


# --- natural breaks -------------------------------------------------------


def test_jenks_separable():
    b = jenks_breaks([1, 1, 1, 9, 9, 9], 2)
    assert b.upper_bounds == (1.0, 9.0) and b.gvf == 1.0 and b.sse == 0.0


def test_jenks_six_values_three_classes():
    b = jenks_breaks([1, 2, 4, 5, 7, 9], 3)
    assert b.upper_bounds == (2.0, 5.0, 9.0)
    assert b.sse == pytest.approx(3.0)
    assert classify([1, 2, 4, 5, 7, 9], b) == [1, 1, 2, 2, 3, 3]


def test_jenks_single_class():
    b = jenks_breaks([3, 1, 2], 1)
    assert b.upper_bounds == (3.0,) and b.gvf == 0.0


def test_jenks_errors_and_degenerate():
    with pytest.raises(ValueError):
        jenks_breaks([1, 2, 2], 3)
    with pytest.raises(ValueError):
        jenks_breaks([], 1)
    b = jenks_breaks([0.4, 0.4, 0.4], 10)
    assert b.degenerate and b.upper_bounds == (0.4,)
    assert classify([0.4, 0.4, 0.4], b) == [1, 1, 1]


def test_classify_ties_and_clamp():
    b = jenks_breaks([1, 2, 4, 5, 7, 9], 3)
    assert classify([2.0, 2.0000001, 100.0, -5.0], b) == [1, 2, 3, 1]


values = st.lists(st.integers(-20, 20).map(float) | st.floats(-1, 1, allow_nan=False), min_size=1, max_size=12)


@settings(max_examples=300, deadline=None)
@given(values, st.integers(1, 4))
def test_jenks_matches_exhaustive_oracle(vals, k):
    k = min(k, len(set(vals)))
    dp = jenks_breaks(vals, k)
    oracle = oracle_jenks(vals, k)
    # exact SSE of the DP's partition equals the optimum
    assert partition_sse(vals, dp.cuts[:-1]) == partition_sse(vals, oracle.cuts[:-1])
    assert list(dp.upper_bounds) == sorted(set(dp.upper_bounds))
    assert dp.upper_bounds[-1] == max(vals)
    cls = classify(vals, dp)
    assert min(cls) >= 1 and max(cls) <= k
    for v, c in zip(vals, cls):
        assert all(c2 == c for v2, c2 in zip(vals, cls) if v2 == v)
    assert cls[int(np.argmin(vals))] == 1 and cls[int(np.argmax(vals))] == k


def test_jenks_scales_to_thousands():
    rng = np.random.default_rng(0)
    vals = rng.normal(size=2000)
    b = jenks_breaks(vals, 10)
    assert b.k == 10 and 0.9 < b.gvf < 1.0
    assert math.isfinite(b.sse)
