"""Stable-boundary identification and equivalent-region construction.

A source function is never-inlined when, across every compilation setting
of the corpus, it only ever appears as its own compiled form. Binary
functions whose resolved OSF is never-inlined are the boundary functions;
regions grow from each boundary entry through non-boundary successors,
stopping at other boundaries.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum

from . import _jsonio
from .errors import SchemaError, SingleSettingError

VERBATIM = "verbatim"
PARTITION = "partition"


class Mode(str, Enum):
    VERBATIM = VERBATIM
    PARTITION = PARTITION


@dataclass
class BoundarySet:
    never_inlined_sources: set
    boundaries: dict  # setting slug -> set of function names


@dataclass(frozen=True)
class Mefr:
    entry: str
    members: tuple  # entry first, then by start address

    def member_set(self):
        return frozenset(self.members)


@dataclass
class MefrPartition:
    graph_id: str
    mode: Mode
    regions: list
    unassigned: tuple
    contested_count: int
    stats: dict = field(default_factory=dict, compare=False)

    def region_by_entry(self):
        return {r.entry: r for r in self.regions}


def identify_boundaries(b2s_by_setting):
    """Boundary functions per setting, from the corpus of binary2source maps.

    Requires at least two settings; with a single variant, stability across
    compilation variance is undefined.
    """
    if len(b2s_by_setting) < 2:
        raise SingleSettingError(f"need at least 2 settings, got {len(b2s_by_setting)}")

    inlined_somewhere = set()
    all_sources = set()
    for b2s in b2s_by_setting.values():
        for entry in b2s:
            own = entry.effective_osf()
            for key in entry.sf_set:
                all_sources.add(key)
                if key != own:
                    inlined_somewhere.add(key)
    never_inlined = all_sources - inlined_somewhere

    boundaries = {}
    for slug, b2s in b2s_by_setting.items():
        boundaries[slug] = {
            entry.name for entry in b2s if entry.osf is not None and entry.osf in never_inlined
        }
    return BoundarySet(never_inlined, boundaries)


def construct_mefrs(graph, boundary, mode=Mode.PARTITION):
    """Grow one region per boundary function by BFS over successors.

    Expansion stops at boundary functions and never revisits a member, so a
    region's membership is independent of traversal order. In verbatim mode
    regions may share non-boundary nodes reachable from several entries; in
    partition mode each contested node goes to the region whose entry has the
    smallest start address, and the contested count is reported.
    """
    mode = Mode(mode)
    boundary = set(boundary)
    for name in boundary:
        graph.node(name)  # validates membership

    entries = sorted(boundary, key=lambda n: graph.node(n).start_addr)
    raw_regions = {}
    per_region_visits = {}
    for entry in entries:
        members = {entry}
        frontier = deque(f.name for f in graph.successors(entry))
        visits = len(frontier) + 1
        while frontier:
            s = frontier.popleft()
            if s not in boundary and s not in members:
                members.add(s)
                succ = [f.name for f in graph.successors(s)]
                frontier.extend(succ)
                visits += len(succ)
        raw_regions[entry] = members
        per_region_visits[entry] = visits

    owner_count = {}
    for members in raw_regions.values():
        for name in members:
            owner_count[name] = owner_count.get(name, 0) + 1
    contested = {name for name, count in owner_count.items() if count > 1}

    if mode is Mode.PARTITION:
        assigned = {}
        for entry in entries:  # entries already in start-address order
            for name in raw_regions[entry]:
                assigned.setdefault(name, entry)
        raw_regions = {
            entry: {n for n in members if assigned[n] == entry}
            for entry, members in raw_regions.items()
        }

    regions = []
    for entry in entries:
        rest = sorted(
            (n for n in raw_regions[entry] if n != entry),
            key=lambda n: graph.node(n).start_addr,
        )
        regions.append(Mefr(entry, (entry, *rest)))

    covered = set().union(*raw_regions.values()) if raw_regions else set()
    unassigned = tuple(
        sorted((f.name for f in graph.nodes if f.name not in covered),
               key=lambda n: graph.node(n).start_addr)
    )
    return MefrPartition(
        graph.binary_id,
        mode,
        regions,
        unassigned,
        contested_count=len(contested),
        stats={
            "per_region_visits": per_region_visits,
            "graph_size": len(graph.nodes) + len(graph.edges),
        },
    )


def region_source_set(region, b2s):
    """Union of the source sets of a region's members (its semantic footprint)."""
    out = set()
    for name in region.members:
        out |= b2s.entries[name].sf_set
    return frozenset(out)


@dataclass
class RegionMatch:
    entry_osf: tuple
    left_entry: str
    right_entry: str
    jaccard: float
    diverging: tuple


@dataclass
class ValidationReport:
    matches: list
    unmatched_left: list
    unmatched_right: list
    minimality_failures: dict  # (graph_id, entry) -> [member, ...]

    @property
    def all_equivalent(self):
        return all(m.jaccard == 1.0 for m in self.matches)

    @property
    def all_minimal(self):
        return not self.minimality_failures


def validate_mefr_pair(p1, g1, b2s1, p2, g2, b2s2):
    """Check cross-setting equivalence and per-region minimality.

    Regions are matched by the OSF of their entries; matched pairs must have
    identical source footprints (Jaccard 1.0). Minimality: removing any
    non-entry member must shrink the footprint or cut another member off
    from the entry.
    """
    left = {b2s1.entries[r.entry].osf: r for r in p1.regions}
    right = {b2s2.entries[r.entry].osf: r for r in p2.regions}

    matches = []
    for osf in sorted(set(left) & set(right), key=lambda k: (k.file, k.name)):
        sf1 = region_source_set(left[osf], b2s1)
        sf2 = region_source_set(right[osf], b2s2)
        union = sf1 | sf2
        jacc = len(sf1 & sf2) / len(union) if union else 1.0
        diverging = tuple(sorted(sf1 ^ sf2))
        matches.append(RegionMatch((osf.file, osf.name), left[osf].entry, right[osf].entry, jacc, diverging))

    unmatched_left = sorted(left[k].entry for k in set(left) - set(right))
    unmatched_right = sorted(right[k].entry for k in set(right) - set(left))

    failures = {}
    for partition, graph, b2s in ((p1, g1, b2s1), (p2, g2, b2s2)):
        boundary = {r.entry for r in partition.regions}
        for region in partition.regions:
            bad = check_minimality(region, graph, b2s, boundary)
            if bad:
                failures[(graph.binary_id, region.entry)] = bad
    return ValidationReport(matches, unmatched_left, unmatched_right, failures)


def check_minimality(region, graph, b2s, boundary):
    """Members whose removal neither shrinks the footprint nor breaks reachability."""
    members = region.member_set()
    if len(members) < 2:
        return []
    full = region_source_set(region, b2s)
    bad = []
    for victim in region.members[1:]:
        remaining = members - {victim}
        shrunk = set()
        for name in remaining:
            shrunk |= b2s.entries[name].sf_set
        if shrunk != set(full):
            continue
        if _reachable_within(graph, region.entry, remaining, boundary) != remaining:
            continue
        bad.append(victim)
    return bad


def _reachable_within(graph, entry, allowed, boundary):
    seen = {entry}
    frontier = deque([entry])
    while frontier:
        node = frontier.popleft()
        for succ in graph.successors(node):
            name = succ.name
            if name in allowed and name not in seen and name not in boundary:
                seen.add(name)
                frontier.append(name)
    return seen & allowed


def write_mefr(partition, path):
    doc = {
        "schema": "mefr/1",
        "graph_id": partition.graph_id,
        "mode": partition.mode.value,
        "regions": [{"entry": r.entry, "members": list(r.members)} for r in partition.regions],
        "unassigned": list(partition.unassigned),
        "contested_count": partition.contested_count,
    }
    _jsonio.write_json(path, doc)


def read_mefr(path):
    doc = _jsonio.read_json(path)
    _jsonio.expect_schema(doc, "mefr/1", path=str(path))
    regions = []
    for i, raw in enumerate(_jsonio.require(doc, "regions", list, "$", path=str(path))):
        members = tuple(_jsonio.require(raw, "members", list, f"regions[{i}]", path=str(path)))
        entry = _jsonio.require(raw, "entry", str, f"regions[{i}]", path=str(path))
        if not members or members[0] != entry:
            raise SchemaError("region members must lead with the entry", locus=f"regions[{i}]", path=str(path))
        regions.append(Mefr(entry, members))
    return MefrPartition(
        _jsonio.require(doc, "graph_id", str, "$", path=str(path)),
        Mode(_jsonio.require(doc, "mode", str, "$", path=str(path))),
        regions,
        tuple(doc.get("unassigned", ())),
        int(doc.get("contested_count", 0)),
    )
