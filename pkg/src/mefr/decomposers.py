"""Reference decomposition methods scored against the oracle.

Four built-ins behind one interface: a singleton baseline, greedy
modularity clustering with an optional community-size cap, an overlapping
radius expander, and nearest-anchor extension. External tools join through
the decomp/1 file format.
"""

import math
from collections import deque
from dataclasses import dataclass

from . import _jsonio
from .errors import MefrError, SchemaError

UNANCHORED = "__unanchored__"


@dataclass(frozen=True)
class Community:
    id: str
    members: frozenset

    def __post_init__(self):
        if not self.members:
            raise ValueError(f"community {self.id!r} is empty")


@dataclass
class Decomposition:
    graph_id: str
    method: str
    communities: list
    overlapping: bool

    def validate(self, graph):
        names = {f.name for f in graph.nodes}
        seen = set()
        for community in self.communities:
            unknown = community.members - names
            if unknown:
                raise MefrError(
                    f"community {community.id!r} references unknown functions: {sorted(unknown)}"
                )
            if not self.overlapping and community.members & seen:
                raise MefrError(
                    f"community {community.id!r} overlaps another in a non-overlapping decomposition"
                )
            seen |= community.members
        if seen != names:
            missing = sorted(names - seen)
            raise MefrError(f"decomposition does not cover the graph; missing: {missing[:10]}")
        return self


def decompose_singleton(graph):
    communities = [Community(f.name, frozenset([f.name])) for f in graph.nodes]
    return Decomposition(graph.binary_id, "singleton", communities, overlapping=False)


def _undirected_weights(graph, unit_weights):
    """Symmetric edge weights from the multi-edge digraph; self-loops kept."""
    weights = {}
    for e in graph.edges:
        a, b = sorted((e.caller.name, e.callee.name))
        weights[(a, b)] = weights.get((a, b), 0) + 1
    if unit_weights:
        weights = {k: 1 for k in weights}
    return weights


def modularity(graph, communities, unit_weights=False):
    """Newman modularity of a node partition on the undirected projection.

    Each undirected edge contributes its weight to both A_uv and A_vu; a
    self-loop contributes twice to A_uu.
    """
    weights = _undirected_weights(graph, unit_weights)
    member_of = {}
    for i, community in enumerate(communities):
        for name in community:
            member_of[name] = i
    degree = {f.name: 0.0 for f in graph.nodes}
    m2 = 0.0
    internal = [0.0] * len(communities)
    for (a, b), w in weights.items():
        if a == b:
            degree[a] += 2 * w
            m2 += 2 * w
            internal[member_of[a]] += 2 * w
        else:
            degree[a] += w
            degree[b] += w
            m2 += 2 * w
            if member_of[a] == member_of[b]:
                internal[member_of[a]] += 2 * w
    if m2 == 0:
        return 0.0
    deg_sum = [0.0] * len(communities)
    for name, deg in degree.items():
        deg_sum[member_of[name]] += deg
    return sum(internal[i] / m2 - (deg_sum[i] / m2) ** 2 for i in range(len(communities)))


def decompose_modularity(graph, max_size=None, unit_weights=False, return_trace=False):
    """Greedy agglomerative modularity maximization (CNM-style).

    Repeatedly merges the connected pair of communities with the largest
    positive modularity gain; merges that would exceed `max_size` members are
    skipped. Deterministic: gain ties break on the smaller community anchor.
    """
    if max_size is not None and max_size < 1:
        raise ValueError("max_size must be >= 1")
    names = [f.name for f in graph.nodes]
    order = {name: i for i, name in enumerate(names)}  # start-address order
    weights = _undirected_weights(graph, unit_weights)

    degree = {name: 0.0 for name in names}
    m2 = 0.0
    self_w = {name: 0.0 for name in names}
    between = {}
    for (a, b), w in weights.items():
        if a == b:
            degree[a] += 2 * w
            self_w[a] += 2 * w
            m2 += 2 * w
        else:
            degree[a] += w
            degree[b] += w
            m2 += 2 * w
            between[(a, b)] = between.get((a, b), 0.0) + w

    members = {name: {name} for name in names}
    comm_degree = dict(degree)
    neighbors = {name: set() for name in names}
    for a, b in between:
        neighbors[a].add(b)
        neighbors[b].add(a)

    trace = []
    while m2 > 0:
        best = None
        best_gain = 0.0
        for (a, b), w_ab in between.items():
            gain = 2 * w_ab / m2 - 2 * comm_degree[a] * comm_degree[b] / (m2 * m2)
            if gain <= 0:
                continue
            if max_size is not None and len(members[a]) + len(members[b]) > max_size:
                continue
            key = (order[a], order[b])
            if best is None or gain > best_gain + 1e-15 or (
                abs(gain - best_gain) <= 1e-15 and key < best_key
            ):
                best, best_gain, best_key = (a, b), gain, key
        if best is None:
            break
        a, b = best
        trace.append(best_gain)
        members[a] |= members.pop(b)
        comm_degree[a] += comm_degree.pop(b)
        for c in neighbors.pop(b):
            if c == a:
                continue
            w = between.pop(tuple(sorted((b, c))))
            key = tuple(sorted((a, c)))
            between[key] = between.get(key, 0.0) + w
            neighbors[c].discard(b)
            neighbors[c].add(a)
            neighbors[a].add(c)
        between.pop(tuple(sorted((a, b))), None)
        neighbors[a].discard(b)

    ordered = sorted(members.values(), key=lambda ms: min(order[n] for n in ms))
    width = max(3, len(str(len(ordered))))
    communities = [Community(f"c{i:0{width}d}", frozenset(ms)) for i, ms in enumerate(ordered)]
    decomposition = Decomposition(graph.binary_id, "modularity", communities, overlapping=False)
    if return_trace:
        return decomposition, trace
    return decomposition


def _undirected_ball(graph, start, radius):
    seen = {start: 0}
    frontier = deque([start])
    while frontier:
        node = frontier.popleft()
        depth = seen[node]
        if depth == radius:
            continue
        for nb in graph.neighbors(node):
            if nb.name not in seen:
                seen[nb.name] = depth + 1
                frontier.append(nb.name)
    return frozenset(seen)


def decompose_expander(graph, radius):
    """One overlapping community per node: its closed neighborhood within
    `radius` undirected hops."""
    if radius < 1:
        raise ValueError("radius must be >= 1")
    communities = [Community(f.name, _undirected_ball(graph, f.name, radius)) for f in graph.nodes]
    return Decomposition(graph.binary_id, "expander", communities, overlapping=True)


def decompose_anchor_extension(graph, anchors, hops=None):
    """Nearest-anchor assignment within `hops` successor steps.

    Every node goes to the anchor with the smallest directed distance to it
    (ties to the anchor with the smaller start address); nodes no anchor
    reaches land in a sentinel community.
    """
    anchors = set(anchors)
    for name in anchors:
        graph.node(name)
    limit = math.inf if hops is None else hops
    best = {}  # node -> (distance, anchor order, anchor)
    for anchor in sorted(anchors, key=lambda n: graph.node(n).start_addr):
        dist = {anchor: 0}
        frontier = deque([anchor])
        while frontier:
            node = frontier.popleft()
            if dist[node] == limit:
                continue
            for succ in graph.successors(node):
                if succ.name not in dist:
                    dist[succ.name] = dist[node] + 1
                    frontier.append(succ.name)
        rank = graph.node(anchor).start_addr
        for node, d in dist.items():
            key = (d, rank)
            if node not in best or key < best[node][:2]:
                best[node] = (d, rank, anchor)

    claimed = {}
    for node, (_d, _r, anchor) in best.items():
        claimed.setdefault(anchor, set()).add(node)
    communities = []
    for anchor in sorted(anchors, key=lambda n: graph.node(n).start_addr):
        communities.append(Community(anchor, frozenset(claimed.get(anchor, {anchor}) | {anchor})))
    leftovers = {f.name for f in graph.nodes} - set(best)
    if leftovers:
        communities.append(Community(UNANCHORED, frozenset(leftovers)))
    return Decomposition(graph.binary_id, "anchor_extension", communities, overlapping=False)


def oracle_to_decomposition(partition):
    """Expose oracle regions as a decomposition; unassigned nodes become
    singleton communities so partition-mode output still covers the graph."""
    communities = [Community(r.entry, r.member_set()) for r in partition.regions]
    communities.extend(Community(f"u:{name}", frozenset([name])) for name in partition.unassigned)
    overlapping = partition.mode.value == "verbatim" and partition.contested_count > 0
    return Decomposition(partition.graph_id, "oracle", communities, overlapping=overlapping)


def write_decomposition(decomposition, path):
    doc = {
        "schema": "decomp/1",
        "graph_id": decomposition.graph_id,
        "method": decomposition.method,
        "overlapping": decomposition.overlapping,
        "communities": [
            {"id": c.id, "members": sorted(c.members)} for c in decomposition.communities
        ],
    }
    _jsonio.write_json(path, doc)


def load_external_decomposition(path, graph):
    """Load a decomp/1 file and validate it against the graph it decomposes."""
    doc = _jsonio.read_json(path)
    _jsonio.expect_schema(doc, "decomp/1", path=str(path))
    communities = []
    for i, raw in enumerate(_jsonio.require(doc, "communities", list, "$", path=str(path))):
        locus = f"communities[{i}]"
        cid = _jsonio.require(raw, "id", str, locus, path=str(path))
        members = _jsonio.require(raw, "members", list, locus, path=str(path))
        if not members:
            raise SchemaError("community has no members", locus=locus, path=str(path))
        communities.append(Community(cid, frozenset(members)))
    decomposition = Decomposition(
        _jsonio.require(doc, "graph_id", str, "$", path=str(path)),
        _jsonio.require(doc, "method", str, "$", path=str(path)),
        communities,
        bool(doc.get("overlapping", False)),
    )
    return decomposition.validate(graph)
