"""Configuration, stage orchestration and run manifests.

Each stage reads its inputs from files written by earlier stages in the
output directory, so a run can be resumed from any stage.
"""
from __future__ import annotations

import csv
import hashlib
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field, fields
from datetime import datetime
from pathlib import Path
from typing import Callable

from . import __version__
from .centrality import Graph, edge_bc_unweighted, edge_bc_weighted, node_strength, rank_shift
from .ingest import (
    IngestError,
    StudyRegion,
    dedup,
    filter_lang,
    filter_region,
    filter_window,
    load_region,
    parse_ts,
    plan_grid,
    read_posts,
    write_posts_ndjson,
)
from .roadnet import NetworkError, classify_edges, load_network, rank_descending, scale_weights, spatial_join
from .sentiment import SentimentLexicon, default_lexicon, read_scored_csv, score_posts, write_scored_csv
from .tessellate import (
    TessellationError,
    ThiessenDiagram,
    classify,
    diagram_from_geojson,
    diagram_to_geojson,
    jenks_breaks,
    project,
    regional_mean,
    tessellate,
    write_geojson,
)
from .textproc import (
    RelevanceLexicon,
    TokenizedPost,
    Tokenizer,
    _data_path,
    frequency_matrix,
    is_relevant,
    read_lemma_table,
    read_word_list,
)

log = logging.getLogger(__name__)

STAGES = ("ingest", "relevance", "sentiment", "tessellate", "join", "classify", "centrality", "report")
PATH_KEYS = (
    "posts", "region", "nodes", "edges", "lexicon", "boosters", "negators", "emoji",
    "stopwords", "lemmas", "relevance",
)  # fmt: skip
REQUIRED_PATHS = ("posts", "nodes", "edges")

# file names inside the output directory
F_CLEAN = "posts_clean.ndjson"
F_GRID = "coverage_grid.csv"
F_TOKENS = "tokens.ndjson"
F_TOPWORDS = "top_words.csv"
F_SCORED = "scored.csv"
F_THIESSEN = "thiessen.geojson"
F_EDGE_SENT = "edge_sentiment.csv"
F_EDGE_CLASS = "edge_classes.csv"
F_BREAKS = "edge_breaks.json"
F_BC = "edge_bc.csv"
F_RANKSHIFT = "rank_shift.json"
F_EDGES_OUT = "edges_metrics.geojson"
F_MANIFEST = "manifest.json"


class ConfigError(Exception):
    """Invalid configuration (exit code 2)."""


DATA_ERRORS = (IngestError, NetworkError, TessellationError, ValueError, KeyError, OSError)


def fmt9(v: float) -> str:
    return f"{v:.9g}"


def r9(v: float) -> float:
    return float(f"{v:.9g}")


@dataclass
class PipelineConfig:
    posts: str = ""
    posts_format: str = ""  # ndjson | csv | "" (by extension)
    region: str = ""  # empty: bundled Oklahoma outline
    nodes: str = ""
    edges: str = ""
    lexicon: str = ""
    boosters: str = ""
    negators: str = ""
    emoji: str = ""
    stopwords: str = ""
    lemmas: str = ""
    relevance: str = ""
    radius_miles: float = 25.0
    spacing_miles: float = 25.0
    jenks_k: int = 10
    topk_words: int = 50
    topk_edges: int = 20
    bc_epsilon: float = 1e-6
    join_rule: str = "length"
    window_start: str = ""
    window_end: str = ""
    lang: str = ""
    sentiment_mode: str = "tokens"
    normalize: bool = False
    workers: int = 1
    rng_seed: int = 0
    base_dir: str = field(default=".", repr=False)

    @classmethod
    def keys(cls) -> list[str]:
        return [f.name for f in fields(cls) if f.name != "base_dir"]

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        """Parse a flat ``key = value`` file; '#' starts a comment."""
        path = Path(path)
        try:
            text = path.read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        raw = {}
        for lineno, line in enumerate(text.splitlines(), 1):
            line = line.split("#", 1)[0].strip()
            if not line:
                continue
            if "=" not in line:
                raise ConfigError(f"{path}:{lineno}: expected key = value")
            key, value = (s.strip() for s in line.split("=", 1))
            raw[key] = value
        cfg = cls(base_dir=str(path.parent))
        return cfg.with_overrides(raw)

    def with_overrides(self, values: dict) -> "PipelineConfig":
        data = asdict(self)
        types = {f.name: f.type for f in fields(self)}
        for key, value in values.items():
            if value is None:
                continue
            key = key.replace("-", "_")
            if key not in types or key == "base_dir":
                raise ConfigError(f"unknown config key {key!r}")
            data[key] = _coerce(key, types[key], value)
        return PipelineConfig(**data)

    def path(self, key: str) -> Path | None:
        value = getattr(self, key)
        if not value:
            return None
        p = Path(value)
        return p if p.is_absolute() else Path(self.base_dir) / p

    def window(self) -> tuple[datetime | None, datetime | None]:
        start = parse_ts(self.window_start) if self.window_start else None
        end = parse_ts(self.window_end) if self.window_end else None
        return start, end

    def echo(self) -> dict:
        """Parameters as configured (paths unresolved), for the manifest."""
        return {k: getattr(self, k) for k in sorted(self.keys())}

    def validate(self) -> list[str]:
        """Every problem preventing a run; an empty list means runnable."""
        problems = []
        for key in REQUIRED_PATHS:
            if not getattr(self, key):
                problems.append(f"{key}: required path not set")
        for key in PATH_KEYS:
            p = self.path(key)
            if p is not None and not p.is_file():
                problems.append(f"{key}: file not found: {p}")
        problems += self._check_headers()
        if self.jenks_k < 1:
            problems.append("jenks_k: must satisfy k >= 1")
        if self.topk_words < 1:
            problems.append("topk_words: must be >= 1")
        if self.topk_edges < 1:
            problems.append("topk_edges: must be >= 1")
        if not self.radius_miles > 0:
            problems.append("radius_miles: must be > 0")
        if not self.spacing_miles > 0:
            problems.append("spacing_miles: must be > 0")
        elif self.radius_miles > 0 and self.spacing_miles > self.radius_miles * math.sqrt(2) * (1 + 1e-12):
            problems.append("spacing_miles: must not exceed radius_miles * sqrt(2)")
        if not (self.bc_epsilon > 0 and math.isfinite(self.bc_epsilon)):
            problems.append("bc_epsilon: must be a positive finite number")
        if self.join_rule not in ("length", "midpoint"):
            problems.append("join_rule: must be 'length' or 'midpoint'")
        if self.sentiment_mode not in ("tokens", "text"):
            problems.append("sentiment_mode: must be 'tokens' or 'text'")
        if self.posts_format not in ("", "ndjson", "csv"):
            problems.append("posts_format: must be 'ndjson' or 'csv'")
        if self.workers < 1:
            problems.append("workers: must be >= 1")
        try:
            start, end = self.window()
            if start is not None and end is not None and not start < end:
                problems.append("window_start: must be earlier than window_end")
        except ValueError as exc:
            problems.append(f"window_start/window_end: {exc}")
        return problems

    def _check_headers(self) -> list[str]:
        problems = []
        posts = self.path("posts")
        if posts is not None and posts.is_file():
            fmt = self.posts_format or ("csv" if posts.suffix.lower() == ".csv" else "ndjson")
            if fmt == "csv":
                missing = {"id", "author_id", "ts", "lon", "lat", "text"} - set(_csv_header(posts))
                if missing:
                    problems.append(f"posts: CSV header lacks {sorted(missing)}")
        nodes = self.path("nodes")
        if nodes is not None and nodes.is_file():
            missing = {"node_id", "lon", "lat"} - set(_csv_header(nodes))
            if missing:
                problems.append(f"nodes: CSV header lacks {sorted(missing)}")
        edges = self.path("edges")
        if edges is not None and edges.is_file():
            if edges.suffix.lower() == ".csv":
                missing = {"edge_id", "u", "v", "fclass"} - set(_csv_header(edges))
                if missing:
                    problems.append(f"edges: CSV header lacks {sorted(missing)}")
            else:
                try:
                    obj = json.loads(edges.read_text(encoding="utf-8"))
                    if obj.get("type") != "FeatureCollection":
                        problems.append("edges: GeoJSON must be a FeatureCollection")
                except (json.JSONDecodeError, UnicodeDecodeError, AttributeError) as exc:
                    problems.append(f"edges: unreadable GeoJSON ({exc})")
        region = self.path("region")
        if region is not None and region.is_file():
            try:
                load_region(region)
            except (IngestError, ValueError) as exc:
                problems.append(f"region: {exc}")
        return problems


def _csv_header(path: Path) -> list[str]:
    with open(path, encoding="utf-8", newline="") as fh:
        return [h.strip() for h in next(csv.reader(fh), [])]


def _coerce(key: str, typ: str, value):
    if not isinstance(value, str):
        return value
    try:
        if typ == "int":
            return int(value)
        if typ == "float":
            return float(value)
        if typ == "bool":
            v = value.strip().lower()
            if v in ("1", "true", "yes", "on"):
                return True
            if v in ("0", "false", "no", "off", ""):
                return False
            raise ValueError(value)
    except ValueError as exc:
        raise ConfigError(f"{key}: cannot parse {value!r} as {typ}") from exc
    return value


# --- run context --------------------------------------------------------------


@dataclass
class RunContext:
    config: PipelineConfig
    out_dir: Path

    def out(self, name: str) -> Path:
        return self.out_dir / name

    def region(self) -> StudyRegion:
        p = self.config.path("region")
        return load_region(p if p is not None else _data_path("oklahoma.geojson"))

    def lexicon(self) -> SentimentLexicon:
        c = self.config
        if not any((c.lexicon, c.boosters, c.negators, c.emoji)):
            return default_lexicon()
        return SentimentLexicon.from_files(
            c.path("lexicon") or _data_path("vader_lexicon.tsv"),
            c.path("boosters") or _data_path("boosters.tsv"),
            c.path("negators") or _data_path("negators.tsv"),
            c.path("emoji") or _data_path("emoji_lexicon.tsv"),
        )

    def tokenizer(self) -> Tokenizer:
        c = self.config
        stop = read_word_list(c.path("stopwords")) if c.stopwords else None
        lemmas = read_lemma_table(c.path("lemmas")) if c.lemmas else None
        return Tokenizer(stop, lemmas)

    def relevance(self) -> RelevanceLexicon:
        p = self.config.path("relevance")
        return RelevanceLexicon.from_file(p) if p is not None else RelevanceLexicon.default()

    def network(self, frame):
        return load_network(self.config.path("nodes"), self.config.path("edges"), frame)


def _write_json(obj, path: Path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        json.dump(obj, fh, ensure_ascii=False, sort_keys=True, indent=1)
        fh.write("\n")


def _read_ndjson(path: Path) -> list[dict]:
    with open(path, encoding="utf-8") as fh:
        return [json.loads(line) for line in fh if line.strip()]


def _csv_writer(fh):
    return csv.writer(fh, lineterminator="\n")


# --- stages -------------------------------------------------------------------


def stage_ingest(ctx: RunContext) -> dict:
    c = ctx.config
    posts, skipped = read_posts(c.path("posts"), c.posts_format or None)
    n_read = len(posts)
    posts = dedup(posts)
    n_dedup = len(posts)
    posts = filter_lang(posts, c.lang or None)
    n_lang = len(posts)
    start, end = c.window()
    posts = filter_window(posts, start, end)
    n_window = len(posts)
    region = ctx.region()
    posts = filter_region(posts, region)
    write_posts_ndjson(posts, ctx.out(F_CLEAN))
    grid = plan_grid(region, c.radius_miles, c.spacing_miles)
    with open(ctx.out(F_GRID), "w", encoding="utf-8", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(["center_id", "lon", "lat"])
        for i, (lon, lat) in enumerate(grid.centers):
            w.writerow([i, fmt9(lon), fmt9(lat)])
    return {
        "records_read": n_read + skipped,
        "malformed_skipped": skipped,
        "after_dedup": n_dedup,
        "after_lang": n_lang,
        "after_window": n_window,
        "after_region": len(posts),
        "grid_centers": len(grid),
    }


def stage_relevance(ctx: RunContext) -> dict:
    records = _read_ndjson(ctx.out(F_CLEAN))
    tok = ctx.tokenizer()
    lex = ctx.relevance()
    kept = []
    for rec in records:
        tokens = tok(rec["text"])
        if is_relevant(tokens, lex):
            kept.append(TokenizedPost(rec["id"], tokens, parse_ts(rec["ts"]), rec["lon"], rec["lat"], rec["text"]))
    with open(ctx.out(F_TOKENS), "w", encoding="utf-8", newline="\n") as fh:
        for p in kept:
            rec = {"id": p.post_id, "ts": p.ts.strftime("%Y-%m-%dT%H:%M:%SZ"), "lon": p.lon, "lat": p.lat,
                   "text": p.text, "tokens": p.tokens}  # fmt: skip
            fh.write(json.dumps(rec, ensure_ascii=False, sort_keys=True) + "\n")
    fm = frequency_matrix(kept, ctx.config.topk_words)
    fm.write_csv(ctx.out(F_TOPWORDS))
    return {
        "posts_in": len(records),
        "relevant": len(kept),
        "dropped_irrelevant": len(records) - len(kept),
        "vocabulary_size": fm.vocabulary_size,
        "topk_exceeds_vocabulary": fm.truncated_k,
        "topk_token_share": r9(fm.coverage_share),
    }


def _read_tokens(ctx: RunContext) -> list[TokenizedPost]:
    return [
        TokenizedPost(r["id"], r["tokens"], parse_ts(r["ts"]), r["lon"], r["lat"], r["text"])
        for r in _read_ndjson(ctx.out(F_TOKENS))
    ]


def stage_sentiment(ctx: RunContext) -> dict:
    posts = _read_tokens(ctx)
    scored = score_posts(posts, ctx.lexicon(), ctx.config.sentiment_mode)
    write_scored_csv(scored, ctx.out(F_SCORED))
    vals = [s.compound for s in scored]
    return {
        "posts_in": len(posts),
        "scored": len(scored),
        "negative": sum(v < 0 for v in vals),
        "neutral": sum(v == 0 for v in vals),
        "positive": sum(v > 0 for v in vals),
        "mean_compound": r9(sum(vals) / len(vals)) if vals else None,
    }


def stage_tessellate(ctx: RunContext) -> dict:
    scored = read_scored_csv(ctx.out(F_SCORED))
    region = ctx.region()
    frame = region.frame()
    sites, region_xy = project(scored, region, frame)
    if not sites:
        write_geojson({"type": "FeatureCollection", "features": []}, ctx.out(F_THIESSEN))
        return {"posts_in": 0, "sites": 0, "merged_posts": 0, "cells": 0, "regional_mean": None}
    diagram = tessellate(sites, region_xy, frame)
    vals = [cell.sentiment for cell in diagram.cells]
    k = min(ctx.config.jenks_k, len(set(vals)))
    classes = classify(vals, jenks_breaks(vals, k))
    write_geojson(diagram_to_geojson(diagram, classes), ctx.out(F_THIESSEN))
    return {
        "posts_in": len(scored),
        "sites": len(sites),
        "merged_posts": len(scored) - len(sites),
        "cells": len(diagram.cells),
        "regional_mean": r9(regional_mean(diagram)),
    }


def _load_diagram(ctx: RunContext, region: StudyRegion, frame) -> ThiessenDiagram:
    with open(ctx.out(F_THIESSEN), encoding="utf-8") as fh:
        return diagram_from_geojson(json.load(fh), region, frame)


def stage_join(ctx: RunContext) -> dict:
    region = ctx.region()
    frame = region.frame()
    net = ctx.network(frame)
    diagram = _load_diagram(ctx, region, frame)
    res = spatial_join(net, diagram, ctx.config.join_rule)
    other = spatial_join(net, diagram, "midpoint" if ctx.config.join_rule == "length" else "length")
    diffs = [abs(res.sentiment[e] - other.sentiment[e]) for e in res.sentiment]
    uncovered = set(res.uncovered)
    with open(ctx.out(F_EDGE_SENT), "w", encoding="utf-8", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(["edge_id", "sentiment", "length_m", "covered_length_m", "uncovered"])
        for ed in net.edges:
            e = ed.edge_id
            w.writerow([e, fmt9(res.sentiment[e]), fmt9(res.length[e]), fmt9(res.covered_length[e]),
                        int(e in uncovered)])  # fmt: skip
    return {
        "nodes": net.n,
        "edges": net.e,
        "network_warnings": len(net.warnings),
        "edges_uncovered": len(uncovered),
        "uncovered_length_m": r9(res.uncovered_length),
        "fallback_sentiment": r9(res.fallback),
        "other_rule_mean_abs_diff": r9(sum(diffs) / len(diffs)) if diffs else 0.0,
        "other_rule_max_abs_diff": r9(max(diffs)) if diffs else 0.0,
    }


def _read_csv(path: Path) -> list[dict]:
    with open(path, encoding="utf-8", newline="") as fh:
        return list(csv.DictReader(fh))


def stage_classify(ctx: RunContext) -> dict:
    rows = _read_csv(ctx.out(F_EDGE_SENT))
    sentiments = {r["edge_id"]: float(r["sentiment"]) for r in rows}
    if not sentiments:
        classes, weights, degenerate, breaks = {}, {}, False, None
    else:
        classes, breaks = classify_edges(sentiments, ctx.config.jenks_k)
        weights, degenerate = scale_weights(sentiments)
    with open(ctx.out(F_EDGE_CLASS), "w", encoding="utf-8", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(["edge_id", "sentiment", "weight", "class"])
        for e, s in sentiments.items():
            w.writerow([e, fmt9(s), fmt9(weights[e]), classes[e]])
    _write_json(
        {
            "k": breaks.k if breaks else 0,
            "upper_bounds": [r9(b) for b in breaks.upper_bounds] if breaks else [],
            "gvf": r9(breaks.gvf) if breaks else None,
            "degenerate_classes": bool(breaks.degenerate) if breaks else False,
            "degenerate_weights": degenerate,
        },
        ctx.out(F_BREAKS),
    )
    return {"edges": len(sentiments), "classes": breaks.k if breaks else 0, "degenerate_weights": degenerate}


def stage_centrality(ctx: RunContext) -> dict:
    c = ctx.config
    net = ctx.network(None)
    rows = {r["edge_id"]: r for r in _read_csv(ctx.out(F_EDGE_CLASS))}
    graph = Graph.from_network(net)
    weights = [float(rows[e]["weight"]) for e in graph.edge_ids]
    bc_u = edge_bc_unweighted(graph, c.normalize, c.workers)
    bc_w = edge_bc_weighted(graph, weights, c.bc_epsilon, c.normalize, c.workers)
    strength = node_strength(graph, weights)
    rank_u = rank_descending(bc_u.scores.tolist()) if graph.m else []
    rank_w = rank_descending(bc_w.scores.tolist()) if graph.m else []
    fclass = {ed.edge_id: ed.fclass for ed in net.edges}
    with open(ctx.out(F_BC), "w", encoding="utf-8", newline="") as fh:
        w = _csv_writer(fh)
        w.writerow(["edge_id", "bc_unweighted", "bc_weighted", "strength_u", "strength_v",
                    "rank_unweighted", "rank_weighted", "fclass"])  # fmt: skip
        for i, e in enumerate(graph.edge_ids):
            u, v = graph.edges[i]
            w.writerow([e, fmt9(bc_u.scores[i]), fmt9(bc_w.scores[i]), fmt9(strength[u]), fmt9(strength[v]),
                        rank_u[i], rank_w[i], fclass[e]])  # fmt: skip
    shift = rank_shift(bc_u.as_dict(), bc_w.as_dict(), fclass, c.topk_edges)
    _write_json(shift.to_json(), ctx.out(F_RANKSHIFT))
    return {
        "nodes": graph.n,
        "edges": graph.m,
        "kendall_tau_b": shift.to_json()["kendall_tau_b"],
        "topk_jaccard": r9(shift.topk_jaccard),
        "local_share_topk_unweighted": r9(shift.class_share("local", "a")),
        "local_share_topk_weighted": r9(shift.class_share("local", "b")),
    }


def stage_report(ctx: RunContext) -> dict:
    net = ctx.network(None)
    sent = {r["edge_id"]: r for r in _read_csv(ctx.out(F_EDGE_SENT))}
    cls = {r["edge_id"]: r for r in _read_csv(ctx.out(F_EDGE_CLASS))}
    bc = {r["edge_id"]: r for r in _read_csv(ctx.out(F_BC))}
    feats = []
    for ed in net.edges:
        e = ed.edge_id
        props = {
            "edge_id": e,
            "u": ed.u,
            "v": ed.v,
            "fclass": ed.fclass,
            "sentiment": float(sent[e]["sentiment"]),
            "uncovered": sent[e]["uncovered"] == "1",
            "weight": float(cls[e]["weight"]),
            "class": int(cls[e]["class"]),
            "bc_unweighted": float(bc[e]["bc_unweighted"]),
            "bc_weighted": float(bc[e]["bc_weighted"]),
            "rank_unweighted": int(bc[e]["rank_unweighted"]),
            "rank_weighted": int(bc[e]["rank_weighted"]),
        }
        coords = [[r9(a), r9(b)] for a, b in ed.coords]
        feats.append({"type": "Feature", "properties": props, "geometry": {"type": "LineString", "coordinates": coords}})
    write_geojson({"type": "FeatureCollection", "features": feats}, ctx.out(F_EDGES_OUT))
    return {"edges": len(feats)}


STAGE_FUNCS: dict[str, Callable[[RunContext], dict]] = {
    "ingest": stage_ingest,
    "relevance": stage_relevance,
    "sentiment": stage_sentiment,
    "tessellate": stage_tessellate,
    "join": stage_join,
    "classify": stage_classify,
    "centrality": stage_centrality,
    "report": stage_report,
}

STAGE_OUTPUTS = {
    "ingest": [F_CLEAN, F_GRID],
    "relevance": [F_TOKENS, F_TOPWORDS],
    "sentiment": [F_SCORED],
    "tessellate": [F_THIESSEN],
    "join": [F_EDGE_SENT],
    "classify": [F_EDGE_CLASS, F_BREAKS],
    "centrality": [F_BC, F_RANKSHIFT],
    "report": [F_EDGES_OUT],
}


# --- manifest & run -----------------------------------------------------------


def sha256_file(path: Path) -> str:
    h = hashlib.sha256()
    with open(path, "rb") as fh:
        for block in iter(lambda: fh.read(1 << 20), b""):
            h.update(block)
    return h.hexdigest()


@dataclass
class RunManifest:
    parameters: dict
    inputs: dict
    stages: list[dict] = field(default_factory=list)
    status: str = "ok"
    failed_stage: str | None = None
    error: str | None = None
    version: str = __version__

    def stage(self, name: str) -> dict | None:
        for s in self.stages:
            if s["name"] == name:
                return s
        return None

    def to_json(self) -> dict:
        return {
            "version": self.version,
            "status": self.status,
            "failed_stage": self.failed_stage,
            "error": self.error,
            "parameters": self.parameters,
            "inputs": self.inputs,
            "stages": self.stages,
        }

    @classmethod
    def from_json(cls, obj: dict) -> "RunManifest":
        return cls(
            obj["parameters"], obj["inputs"], obj.get("stages", []), obj.get("status", "ok"),
            obj.get("failed_stage"), obj.get("error"), obj.get("version", __version__),
        )  # fmt: skip


class StageFailure(Exception):
    def __init__(self, manifest: RunManifest, cause: Exception):
        super().__init__(f"stage {manifest.failed_stage} failed: {cause}")
        self.manifest = manifest
        self.cause = cause


def _input_hashes(config: PipelineConfig) -> dict:
    out = {}
    for key in PATH_KEYS:
        p = config.path(key)
        if p is not None and p.is_file():
            out[key] = {"path": getattr(config, key), "sha256": sha256_file(p)}
    return out


def run(
    config: PipelineConfig,
    out_dir: str | Path,
    from_stage: str = "ingest",
    only: str | None = None,
    timings_path: str | Path | None = None,
) -> RunManifest:
    """Run the stages from ``from_stage`` onward (or just ``only``).

    Per-stage wall-clock seconds are logged, and written as JSON to
    ``timings_path`` when given; nothing time-dependent lands in ``out_dir``
    unless that path points there.

    Raises :class:`ConfigError` for an invalid config and
    :class:`StageFailure` (carrying a partial manifest, also written to disk)
    when a stage hits a data error.
    """
    problems = config.validate()
    if problems:
        raise ConfigError("; ".join(problems))
    if from_stage not in STAGES or (only is not None and only not in STAGES):
        raise ConfigError(f"unknown stage {only or from_stage!r}")
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ctx = RunContext(config, out)
    todo = [only] if only else list(STAGES[STAGES.index(from_stage):])

    manifest = RunManifest(config.echo(), _input_hashes(config))
    prev = out / F_MANIFEST
    if todo[0] != "ingest" and prev.is_file():
        old = RunManifest.from_json(json.loads(prev.read_text(encoding="utf-8")))
        # a single-stage rerun keeps every other record; a resume keeps only upstream ones
        manifest.stages = [
            s for s in old.stages if only or STAGES.index(s["name"]) < STAGES.index(todo[0])
        ]
    timings = {}
    for name in todo:
        log.info("stage %s", name)
        t0 = time.perf_counter()
        try:
            counts = STAGE_FUNCS[name](ctx)
        except DATA_ERRORS as exc:
            manifest.status = "failed"
            manifest.failed_stage = name
            manifest.error = f"{type(exc).__name__}: {exc}"
            _write_json(manifest.to_json(), prev)
            raise StageFailure(manifest, exc) from exc
        timings[name] = round(time.perf_counter() - t0, 6)
        log.info("stage %s done in %.3fs", name, timings[name])
        manifest.stages = [s for s in manifest.stages if s["name"] != name]
        manifest.stages.append({"name": name, "counts": counts, "outputs": STAGE_OUTPUTS[name]})
        manifest.stages.sort(key=lambda s: STAGES.index(s["name"]))
    _write_json(manifest.to_json(), prev)
    if timings_path is not None:
        _write_json({"seconds_per_stage": timings}, Path(timings_path))
    return manifest
