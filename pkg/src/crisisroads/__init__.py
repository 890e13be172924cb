"""Sentiment of geotagged crisis posts mapped onto road networks.

Posts are filtered and scored, spread over Thiessen influence areas, joined
onto road segments, and used to reweight edge betweenness centrality.
"""
from __future__ import annotations

__version__ = "0.1.0"
