"""Oracle-grounded scoring of decompositions.

Anchor and neighbor stability measure how much of the boundary-function
skeleton survives between two compilation variants; the community metrics
score a candidate decomposition against the oracle regions through their
semantic footprints (the union of source functions mapped by members).
"""

import csv
import statistics
from dataclasses import dataclass, field

from . import _jsonio
from .errors import MefrError
from .oracle import region_source_set


@dataclass
class AnchorCorrespondence:
    pairs: list  # (left name, right name), keyed by shared OSF
    left_total: int
    right_total: int
    left_names: set = field(default_factory=set)
    right_names: set = field(default_factory=set)

    def __post_init__(self):
        if not self.left_names:
            self.left_names = {l for l, _ in self.pairs}
        if not self.right_names:
            self.right_names = {r for _, r in self.pairs}


def build_anchor_correspondence(g1, b2s1, boundary1, g2, b2s2, boundary2):
    """Match boundary functions across two graphs by their OSF."""
    left = {b2s1.entries[n].osf: n for n in boundary1}
    right = {b2s2.entries[n].osf: n for n in boundary2}
    pairs = sorted(
        (left[k], right[k]) for k in set(left) & set(right) if k is not None
    )
    return AnchorCorrespondence(pairs, len(g1.nodes), len(g2.nodes))


def anchor_stability(correspondence):
    """Matched boundary pairs over the union of all functions of both graphs."""
    matched = len(correspondence.pairs)
    denom = correspondence.left_total + correspondence.right_total - matched
    if denom == 0:
        return 1.0
    return matched / denom


def neighbor_stability(u, v, g1, g2, correspondence):
    """Matched boundary pairs within the two neighborhoods, over their union."""
    if (u, v) not in set(correspondence.pairs):
        raise MefrError(f"({u}, {v}) is not a matched boundary pair")
    n_u = {f.name for f in g1.neighbors(u)}
    n_v = {f.name for f in g2.neighbors(v)}
    matched = sum(1 for p, q in correspondence.pairs if p in n_u and q in n_v)
    denom = len(n_u) + len(n_v) - matched
    if denom == 0:
        return 1.0
    return matched / denom


def community_sf(community, b2s):
    """Semantic footprint of a community: union of its members' source sets."""
    out = set()
    for name in community.members:
        entry = b2s.entries.get(name)
        if entry is None:
            raise MefrError(f"community {community.id!r} member {name!r} is not in the binary2source map")
        out |= entry.sf_set
    return frozenset(out)


def community_similarity(sf1, sf2):
    """Jaccard similarity of two semantic footprints; empty vs empty is 1.0."""
    union = len(sf1 | sf2)
    if union == 0:
        return 1.0
    return len(frozenset(sf1) & frozenset(sf2)) / union


def nearest_community(region, decomposition, b2s_oracle, b2s_decomp=None):
    """The community that best recovers a region, with its similarity.

    Ties go to the smaller footprint, then the lexicographically smaller
    community id, so evaluation order never affects the result.
    """
    if not decomposition.communities:
        raise MefrError("decomposition has no communities")
    if b2s_decomp is None:
        b2s_decomp = b2s_oracle
    target = region_source_set(region, b2s_oracle)
    best = None
    best_key = None
    for community in decomposition.communities:
        sf = community_sf(community, b2s_decomp)
        sim = community_similarity(target, sf)
        key = (-sim, len(sf), community.id)
        if best_key is None or key < best_key:
            best, best_key, best_sf = community, key, sf
    return best, -best_key[0], best_sf


def granularity_error(region, best_sf, b2s_oracle):
    """Footprint-size ratio of the best community to the region; >1 means
    several regions merged into one community, <1 means the region was split."""
    target = region_source_set(region, b2s_oracle)
    return len(best_sf) / len(target)


@dataclass
class MefrScore:
    entry: str
    best_community: str
    similarity: float
    granularity: float


@dataclass
class MetricReport:
    graph_id: str
    method: str
    per_mefr: list
    similarity_summary: dict
    granularity_summary: dict
    s_anch: float | None = None
    s_nb: dict | None = None


DEFAULT_SIM_BUCKETS = tuple(i / 10 for i in range(11))
DEFAULT_GRAN_BUCKETS = (0.0, 0.1, 0.25, 0.5, 0.75, 1.0, 1.25, 1.5, 2.0, 5.0, 10.0)


def summarize(values, buckets):
    """min/median/mean/max plus histogram counts over half-open buckets; the
    final bucket is open-ended."""
    if not values:
        return {"count": 0, "min": None, "median": None, "mean": None, "max": None,
                "quartiles": None, "histogram": {"edges": list(buckets), "counts": []}}
    ordered = sorted(values)
    counts = [0] * len(buckets)
    for v in values:
        placed = False
        for i in range(len(buckets) - 1):
            if buckets[i] <= v < buckets[i + 1]:
                counts[i] += 1
                placed = True
                break
        if not placed:
            counts[-1] += 1
    quartiles = statistics.quantiles(ordered, n=4, method="inclusive") if len(ordered) > 1 else [ordered[0]] * 3
    return {
        "count": len(values),
        "min": ordered[0],
        "median": statistics.median(ordered),
        "mean": statistics.fmean(values),
        "max": ordered[-1],
        "quartiles": quartiles,
        "histogram": {"edges": list(buckets), "counts": counts},
    }


def evaluate_decomposition(
    partition, decomposition, b2s_oracle, b2s_decomp=None,
    sim_buckets=DEFAULT_SIM_BUCKETS, gran_buckets=DEFAULT_GRAN_BUCKETS,
):
    """Score every oracle region against its nearest community."""
    if partition.graph_id != decomposition.graph_id:
        raise MefrError(
            f"graph id mismatch: oracle {partition.graph_id!r} vs decomposition {decomposition.graph_id!r}"
        )
    per_mefr = []
    for region in partition.regions:
        best, sim, best_sf = nearest_community(region, decomposition, b2s_oracle, b2s_decomp)
        per_mefr.append(
            MefrScore(region.entry, best.id, sim, granularity_error(region, best_sf, b2s_oracle))
        )
    sims = [s.similarity for s in per_mefr]
    grans = [s.granularity for s in per_mefr]
    return MetricReport(
        partition.graph_id,
        decomposition.method,
        per_mefr,
        summarize(sims, sim_buckets),
        summarize(grans, gran_buckets),
    )


def neighbor_stability_summary(g1, g2, correspondence):
    """Per-anchor neighbor stabilities with both aggregations (mean over
    anchors, and the per-pair list for aggregation over binaries)."""
    values = [neighbor_stability(u, v, g1, g2, correspondence) for u, v in correspondence.pairs]
    return {
        "per_anchor": [
            {"left": u, "right": v, "value": val}
            for (u, v), val in zip(correspondence.pairs, values)
        ],
        "mean_over_anchors": statistics.fmean(values) if values else None,
        "summary": summarize(values, DEFAULT_SIM_BUCKETS),
    }


def write_report(report, path):
    doc = {
        "schema": "report/1",
        "graph_id": report.graph_id,
        "method": report.method,
        "s_anch": report.s_anch,
        "s_nb": report.s_nb,
        "per_mefr": [
            {
                "entry": s.entry,
                "best_community": s.best_community,
                "similarity": s.similarity,
                "granularity": s.granularity,
            }
            for s in report.per_mefr
        ],
        "similarity_summary": report.similarity_summary,
        "granularity_summary": report.granularity_summary,
    }
    _jsonio.write_json(path, doc)


def write_report_csv(report, path):
    with open(path, "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["graph_id", "method", "entry", "best_community", "similarity", "granularity"])
        for s in report.per_mefr:
            writer.writerow(
                [report.graph_id, report.method, s.entry, s.best_community,
                 f"{s.similarity:.12g}", f"{s.granularity:.12g}"]
            )
