"""Binary-to-source mapping and cross-compilation pair classification.

A binary function maps to the set of source functions its address range
was compiled from; intersecting those sets across two compilation variants
yields typed pairs: identical (equal source sets), root-equivalent (same
original source function, different inlinees) or relevant (overlapping
sets, different original source functions).
"""

import bisect
from dataclasses import dataclass, field
from enum import Enum

from . import _jsonio
from .errors import ClassificationError, SchemaError
from .graph import CompilationSetting, normalize_name


@dataclass(frozen=True, order=True)
class SourceFunctionKey:
    file: str
    name: str

    def __post_init__(self):
        if not self.file or not self.name:
            raise ValueError("source function key fields must be nonempty")

    def to_json(self):
        return {"file": self.file, "name": self.name}


class MappingClass(str, Enum):
    IDENTICAL = "identical"
    ROOT_EQUIVALENT = "root_equivalent"
    RELEVANT = "relevant"


@dataclass(frozen=True)
class B2sEntry:
    name: str
    start: int
    sf_set: frozenset
    osf: SourceFunctionKey | None
    is_bfi: bool

    def effective_osf(self):
        """OSF for pair classification: the resolved OSF, or the lone source
        function of a non-inlined binary function (covers renamed statics)."""
        if self.osf is not None:
            return self.osf
        if len(self.sf_set) == 1:
            return next(iter(self.sf_set))
        return None


@dataclass
class Binary2SourceMap:
    binary_id: str
    setting: CompilationSetting
    entries: dict  # name -> B2sEntry
    diagnostics: dict = field(default_factory=dict)

    def __iter__(self):
        return iter(self.entries.values())

    def __len__(self):
        return len(self.entries)


def strip_build_prefix(paths):
    """Map each path to itself minus the longest directory prefix shared by all.

    Neutralizes differing build roots across compilation settings; basenames
    are never stripped.
    """
    paths = set(paths)
    if not paths:
        return {}
    split = {p: p.split("/") for p in paths}
    dir_parts = [parts[:-1] for parts in split.values()]
    common = dir_parts[0]
    for parts in dir_parts[1:]:
        limit = min(len(common), len(parts))
        i = 0
        while i < limit and common[i] == parts[i]:
            i += 1
        common = common[:i]
    n = len(common)
    return {p: "/".join(parts[n:]) for p, parts in split.items()}


def build_b2s(lines, ranges, index, binary_id="", setting=None):
    """Assemble the binary2source map for one binary.

    Every line record whose address falls inside a function's range votes the
    source function owning that (file, line) into the function's source set.
    File paths on both sides are normalized by stripping their common build
    prefix before matching. Rows that match no function range, no indexed
    file, or no line range are dropped and counted in the diagnostics.
    """
    rename_lines = strip_build_prefix(rec.file for rec in lines)
    rename_index = strip_build_prefix(index.files)
    norm_index = index.rekey_files(lambda f: rename_index[f])

    starts = [f.start_addr for f in ranges]
    sorted_ranges = sorted(ranges, key=lambda f: f.start_addr)
    starts = [f.start_addr for f in sorted_ranges]

    sf_sets = {f.name: set() for f in sorted_ranges}
    dropped_no_function = 0
    dropped_unknown_file = 0
    dropped_no_source_range = 0
    for rec in lines:
        pos = bisect.bisect_right(starts, rec.address) - 1
        func = sorted_ranges[pos] if pos >= 0 else None
        if func is None or rec.address >= func.end_addr:
            dropped_no_function += 1
            continue
        file = rename_lines[rec.file]
        if file not in norm_index.files:
            dropped_unknown_file += 1
            continue
        source = norm_index.lookup(file, rec.line)
        if source is None:
            dropped_no_source_range += 1
            continue
        sf_sets[func.name].add(SourceFunctionKey(file, source))

    index_names = norm_index.function_names
    entries = {}
    empty = []
    for f in sorted_ranges:
        sf_set = frozenset(sf_sets[f.name])
        osf = _resolve_osf(f.name, sf_set, index_names)
        entries[f.name] = B2sEntry(f.name, f.start_addr, sf_set, osf, len(sf_set) > 1)
        if not sf_set:
            empty.append(f.name)
    return Binary2SourceMap(
        binary_id,
        setting,
        entries,
        diagnostics={
            "empty_sf_set": empty,
            "dropped_no_function": dropped_no_function,
            "dropped_unknown_file": dropped_unknown_file,
            "dropped_no_source_range": dropped_no_source_range,
        },
    )


def _resolve_osf(binary_name, sf_set, index_names):
    name = normalize_name(binary_name, source_names=index_names)
    candidates = [k for k in sf_set if k.name == name]
    if len(candidates) == 1:
        return candidates[0]
    return None


def classify_pair(left, right):
    """Classify one candidate pair of B2sEntry, or None when sets are disjoint."""
    if not left.sf_set & right.sf_set:
        return None
    if left.sf_set == right.sf_set:
        return MappingClass.IDENTICAL
    l_osf = left.effective_osf()
    r_osf = right.effective_osf()
    for entry, osf in ((left, l_osf), (right, r_osf)):
        if osf is None:
            raise ClassificationError(
                f"function {entry.name!r} has an unresolved OSF but intersects the other side"
            )
    if l_osf == r_osf:
        return MappingClass.ROOT_EQUIVALENT
    return MappingClass.RELEVANT


@dataclass(frozen=True)
class PairMapping:
    left: str
    right: str
    cls: MappingClass
    left_start: int = field(compare=False, default=0)
    right_start: int = field(compare=False, default=0)


@dataclass
class MappingClassification:
    left_setting: CompilationSetting
    right_setting: CompilationSetting
    pairs: list

    def __len__(self):
        return len(self.pairs)


def build_b2b(left, right):
    """All intersecting pairs between two binary2source maps, classified.

    Candidate pairs are enumerated through an inverted source-function index
    rather than a |V|x|V| scan; output is ordered by (left start, right start).
    """
    by_source = {}
    for entry in right:
        for key in entry.sf_set:
            by_source.setdefault(key, []).append(entry)

    pairs = []
    for l_entry in left:
        seen = set()
        for key in l_entry.sf_set:
            for r_entry in by_source.get(key, ()):
                if r_entry.name in seen:
                    continue
                seen.add(r_entry.name)
                cls = classify_pair(l_entry, r_entry)
                if cls is not None:
                    pairs.append(
                        PairMapping(l_entry.name, r_entry.name, cls, l_entry.start, r_entry.start)
                    )
    pairs.sort(key=lambda p: (p.left_start, p.right_start, p.left, p.right))
    return MappingClassification(left.setting, right.setting, pairs)


def mapping_distribution(classification):
    """Counts and ratios per mapping class; ratios sum to 1 over classified pairs."""
    counts = {cls.value: 0 for cls in MappingClass}
    for pair in classification.pairs:
        counts[pair.cls.value] += 1
    total = len(classification.pairs)
    ratios = {name: (count / total if total else 0.0) for name, count in counts.items()}
    return {"counts": counts, "ratios": ratios, "total": total}


def aggregate_distributions(distributions):
    """Average counts and ratios over many setting-pair distributions."""
    distributions = list(distributions)
    if not distributions:
        return {"pairs": 0, "mean_counts": {}, "mean_ratios": {}}
    n = len(distributions)
    mean_counts = {
        cls.value: sum(d["counts"][cls.value] for d in distributions) / n for cls in MappingClass
    }
    mean_ratios = {
        cls.value: sum(d["ratios"][cls.value] for d in distributions) / n for cls in MappingClass
    }
    return {"pairs": n, "mean_counts": mean_counts, "mean_ratios": mean_ratios}


def write_b2s(b2s, path):
    doc = {
        "schema": "b2s/1",
        "binary_id": b2s.binary_id,
        "setting": b2s.setting.to_json() if b2s.setting else None,
        "functions": [
            {
                "binary_function": e.name,
                "start": _jsonio.hex_str(e.start),
                "sf_set": [k.to_json() for k in sorted(e.sf_set)],
                **({"osf": e.osf.to_json()} if e.osf is not None else {}),
                "is_bfi": e.is_bfi,
            }
            for e in sorted(b2s, key=lambda e: (e.start, e.name))
        ],
    }
    _jsonio.write_json(path, doc)


def read_b2s(path):
    doc = _jsonio.read_json(path)
    _jsonio.expect_schema(doc, "b2s/1", path=str(path))
    setting = None
    if doc.get("setting") is not None:
        setting = CompilationSetting.from_json(doc["setting"], path=str(path))
    entries = {}
    for i, raw in enumerate(_jsonio.require(doc, "functions", list, "$", path=str(path))):
        locus = f"functions[{i}]"
        name = _jsonio.require(raw, "binary_function", str, locus, path=str(path))
        start = _jsonio.parse_hex(raw.get("start"), f"{locus}.start", path=str(path))
        sf_set = frozenset(
            SourceFunctionKey(k["file"], k["name"])
            for k in _jsonio.require(raw, "sf_set", list, locus, path=str(path))
        )
        osf = None
        if raw.get("osf") is not None:
            osf = SourceFunctionKey(raw["osf"]["file"], raw["osf"]["name"])
            if osf not in sf_set:
                raise SchemaError("osf not a member of sf_set", locus=locus, path=str(path))
        is_bfi = bool(raw.get("is_bfi", len(sf_set) > 1))
        if is_bfi != (len(sf_set) > 1):
            raise SchemaError("is_bfi inconsistent with sf_set size", locus=locus, path=str(path))
        if name in entries:
            raise SchemaError(f"duplicate binary function {name!r}", locus=locus, path=str(path))
        entries[name] = B2sEntry(name, start, sf_set, osf, is_bfi)
    return Binary2SourceMap(doc.get("binary_id", ""), setting, entries)


def write_b2b(classification, path):
    doc = {
        "schema": "b2b/1",
        "left_setting": classification.left_setting.to_json(),
        "right_setting": classification.right_setting.to_json(),
        "pairs": [{"left": p.left, "right": p.right, "class": p.cls.value} for p in classification.pairs],
    }
    _jsonio.write_json(path, doc)


def read_b2b(path):
    doc = _jsonio.read_json(path)
    _jsonio.expect_schema(doc, "b2b/1", path=str(path))
    pairs = [
        PairMapping(p["left"], p["right"], MappingClass(p["class"]))
        for p in _jsonio.require(doc, "pairs", list, "$", path=str(path))
    ]
    return MappingClassification(
        CompilationSetting.from_json(doc["left_setting"], path=str(path)),
        CompilationSetting.from_json(doc["right_setting"], path=str(path)),
        pairs,
    )
