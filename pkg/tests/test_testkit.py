from __future__ import annotations

import math

import numpy as np
import pytest

from crisisroads.centrality import Graph
from crisisroads.sentiment import score_tokens
from crisisroads.testkit import (
    NEUTRAL_POOL,
    HazardField,
    StableRng,
    gen_scenario,
    grid_network,
    oracle_edge_bc,
    oracle_jenks,
    oracle_kendall_tau_b,
    oracle_regional_mean,
    partition_sse,
    pool_for_level,
    write_bundle,
)
from crisisroads.textproc import tokenize

UNIT = [[(0, 0), (1, 0), (1, 1), (0, 1)]]


def test_rng_stream_is_frozen():
    r = StableRng(0)
    assert r.uniform(3).tolist() == [0.6369616873214543, 0.2697867137638703, 0.04097352393619469]
    assert r.normal(2).tolist() == pytest.approx([0.15581874307393914, -1.4359390548289652], abs=1e-15)
    assert r.integers(3, 10).tolist() == [7, 5, 9]


def test_rng_distributions():
    r = StableRng(9)
    u = r.uniform(100_000, -2, 3)
    assert u.min() >= -2 and u.max() < 3
    z = r.normal(100_000, 2.0)
    assert abs(z.mean()) < 0.03 and abs(z.std() - 2.0) < 0.03
    k = r.integers(100_000, 4)
    assert set(np.unique(k).tolist()) == {0, 1, 2, 3}


# --- graph oracle -----------------------------------------------------------


def test_oracle_bc_small_graphs():
    assert oracle_edge_bc((4, [(0, 1), (1, 2), (2, 3)])).tolist() == [3, 4, 3]
    assert oracle_edge_bc((3, [(0, 1), (1, 2), (0, 2)])).tolist() == [1, 1, 1]
    assert oracle_edge_bc((4, [(0, 1), (0, 2), (0, 3)])).tolist() == [3, 3, 3]
    assert oracle_edge_bc((4, [(0, 1), (1, 2), (2, 3), (3, 0)]), [0.5, 1, 1, 1]).tolist() == [3, 2, 1, 2]


def test_oracle_bc_accepts_graph_objects_and_refuses_large():
    assert oracle_edge_bc(Graph(2, [(0, 1)])).tolist() == [1.0]
    with pytest.raises(ValueError):
        oracle_edge_bc((41, []))


def test_oracle_kendall():
    assert oracle_kendall_tau_b([1, 2, 3], [1, 2, 3]) == 1.0
    assert oracle_kendall_tau_b([1, 2, 3], [3, 2, 1]) == -1.0
    assert math.isnan(oracle_kendall_tau_b([1, 1], [1, 2]))


# --- natural-breaks oracle ---------------------------------------------------


def test_oracle_jenks_examples():
    b = oracle_jenks([1, 2, 4, 5, 7, 9], 3)
    assert b.cuts == (2, 4, 6) and b.sse == 3.0
    assert oracle_jenks([1, 1, 1, 9, 9, 9], 2).sse == 0.0
    assert oracle_jenks([3, 1, 4, 5], 4).sse == 0.0


def test_oracle_jenks_tie_break_lexicographic():
    # [0, 1, 2] into 2 classes: {0},{1,2} and {0,1},{2} tie; smaller cut wins
    assert oracle_jenks([0, 1, 2], 2).cuts == (1, 3)


def test_oracle_jenks_limits():
    with pytest.raises(ValueError):
        oracle_jenks(list(range(13)), 2)
    with pytest.raises(ValueError):
        oracle_jenks([1, 2, 3, 4, 5], 6)


def test_partition_sse_exact():
    assert partition_sse([0.1, 0.2, 0.3], ()) == partition_sse([0.3, 0.1, 0.2], ())
    assert partition_sse([1, 2, 4, 5, 7, 9], (2, 4)) == 3


# --- Monte-Carlo oracle ------------------------------------------------------


def test_regional_mean_oracle_one_site():
    assert oracle_regional_mean([(0.3, 0.3, 0.42)], UNIT) == (0.42, 0.0)


def test_regional_mean_oracle_symmetric_pair():
    mean, se = oracle_regional_mean([(0.25, 0.5, -1.0), (0.75, 0.5, 1.0)], UNIT, 200_000, seed=3)
    assert abs(mean) <= 3 * se


def test_regional_mean_oracle_hole_and_determinism():
    outer = [(0, 0), (4, 0), (4, 4), (0, 4)]
    hole = [(0, 0), (2, 0), (2, 4), (0, 4)]  # even-odd: left half removed
    sites = [(1, 2, -1.0), (3, 2, 1.0)]
    mean, se = oracle_regional_mean(sites, [outer, hole], 100_000, seed=1)
    assert mean == 1.0 and se == 0.0
    assert oracle_regional_mean(sites, [outer], 100_000, 5) == oracle_regional_mean(sites, [outer], 100_000, 5)
    with pytest.raises(ValueError):
        oracle_regional_mean(sites, [outer], 10)


# --- scenarios -----------------------------------------------------------------


def test_pool_mapping():
    assert pool_for_level(np.array([-1.0, -0.5, 0.0, 0.24, 0.26, 2.0])).tolist() == [0, 1, 2, 2, 3, 4]


def test_no_hazard_no_noise_is_neutral():
    sc = gen_scenario(1, n_posts=200, hazard=HazardField(peak=0.0), noise_sd=0.0)
    assert set(sc.pools) == {NEUTRAL_POOL}
    assert np.mean([score_tokens(tokenize(p.text)) for p in sc.posts]) == 0.0


def test_same_seed_same_scenario():
    a = gen_scenario(17, n_posts=300)
    b = gen_scenario(17, n_posts=300)
    assert a.posts == b.posts and a.pools == b.pools
    assert [e.coords for e in a.network.edges] == [e.coords for e in b.network.edges]
    assert gen_scenario(18, n_posts=300).posts != a.posts


def test_default_scenario_plants_negative_correlation():
    sc = gen_scenario(0, n_posts=2000)
    intensity = sc.field.intensity([p.lon for p in sc.posts], [p.lat for p in sc.posts])
    compound = [score_tokens(tokenize(p.text)) for p in sc.posts]
    assert np.corrcoef(intensity, compound)[0, 1] <= -0.5
    assert sc.region.contains([p.lon for p in sc.posts], [p.lat for p in sc.posts]).all()


def test_scenario_rejects_no_posts():
    with pytest.raises(ValueError):
        gen_scenario(0, n_posts=0)


def test_grid_network_layout():
    net = grid_network()
    counts = {}
    for e in net.edges:
        counts[e.fclass] = counts.get(e.fclass, 0) + 1
    assert counts == {"local": 2 * 16 * 17, "interstate": 24, "arterial": 20}
    ring_nodes = {e.u for e in net.edges if e.fclass == "interstate"}
    assert len(ring_nodes) == 24
    # every ramp joins the ring to the grid boundary
    for e in net.edges:
        if e.fclass == "arterial":
            assert e.u.startswith("r") and e.v.startswith("g")


def test_write_bundle(tmp_path):
    sc = gen_scenario(2, n_posts=20)
    paths = write_bundle(sc, tmp_path)
    for p in paths.values():
        assert p.is_file()
    conf = paths["config"].read_text()
    assert "posts = posts.ndjson" in conf and "rng_seed = 2" in conf
