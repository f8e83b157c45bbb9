"""Function call graph model and the fcg/1 interchange format.

A graph holds the functions of one compiled binary as nodes and its call
sites as edges. Parallel edges between the same ordered pair are preserved
in storage; successor/neighbor queries operate on deduplicated node sets.
Graphs are immutable after construction and safe to share across readers.
"""

import re
from dataclasses import dataclass
from collections import Counter

from . import _jsonio
from .errors import (
    AddressOverlapError,
    DanglingEdgeError,
    DuplicateNameError,
    SchemaError,
    UnknownFunctionError,
)

OPTIMIZATIONS = ("O0", "O1", "O2", "O3", "Os", "Ofast")
ARCHITECTURES = ("x86_32", "x86_64", "arm_32", "arm_64")

_CLONE_SUFFIX = re.compile(r"\.(isra|part|constprop|cold|clone)\.\d+$")
_COMPILER_PATTERN = re.compile(r"^[A-Za-z][A-Za-z0-9+]*-\d+(\.\d+)*$")


def normalize_name(name, source_names=None):
    """Collapse compiler-generated clone suffixes to the base symbol name.

    Suffixes like ``.isra.0`` / ``.constprop.3`` are stripped iteratively.
    A single leading underscore is stripped only when the stripped form is a
    known source function name and the original form is not, so decorated
    symbols match their source counterpart without mangling real names.
    """
    while True:
        m = _CLONE_SUFFIX.search(name)
        if m is None:
            break
        name = name[: m.start()]
    if (
        source_names is not None
        and name.startswith("_")
        and name[1:] in source_names
        and name not in source_names
    ):
        name = name[1:]
    return name


@dataclass(frozen=True)
class CompilationSetting:
    compiler: str
    optimization: str
    architecture: str

    def __post_init__(self):
        if not _COMPILER_PATTERN.match(self.compiler):
            raise ValueError(f"compiler {self.compiler!r} does not match family-version pattern")
        if self.optimization not in OPTIMIZATIONS:
            raise ValueError(f"unknown optimization {self.optimization!r}")
        if self.architecture not in ARCHITECTURES:
            raise ValueError(f"unknown architecture {self.architecture!r}")

    def slug(self):
        return f"{self.compiler}-{self.optimization}-{self.architecture}"

    def to_json(self):
        return {
            "compiler": self.compiler,
            "optimization": self.optimization,
            "architecture": self.architecture,
        }

    @classmethod
    def from_json(cls, doc, locus="setting", path=None):
        for field in ("compiler", "optimization", "architecture"):
            _jsonio.require(doc, field, str, locus, path=path)
        try:
            return cls(doc["compiler"], doc["optimization"], doc["architecture"])
        except ValueError as exc:
            raise SchemaError(str(exc), locus=locus, path=path) from None


@dataclass(frozen=True)
class BinaryFunctionId:
    name: str
    start_addr: int
    end_addr: int

    def __post_init__(self):
        if not self.name:
            raise ValueError("function name must be nonempty")
        if not 0 <= self.start_addr < self.end_addr:
            raise ValueError(f"{self.name}: invalid address range [{self.start_addr:#x}, {self.end_addr:#x})")


@dataclass(frozen=True)
class CallEdge:
    caller: BinaryFunctionId
    callee: BinaryFunctionId
    site: int | None = None


class FunctionCallGraph:
    """Multi-edge directed call graph of one binary."""

    def __init__(self, binary_id, setting, functions, calls):
        """Build a validated graph.

        `functions` is an iterable of BinaryFunctionId with unique names and
        pairwise-disjoint address ranges; `calls` an iterable of CallEdge
        whose endpoints are members of `functions`. Nodes are kept ordered
        by start address, edges in a canonical (caller, callee, site) order.
        """
        self.binary_id = binary_id
        self.setting = setting

        nodes = sorted(functions, key=lambda f: (f.start_addr, f.name))
        self._by_name = {}
        for f in nodes:
            if f.name in self._by_name:
                raise DuplicateNameError({f.name: {f.name}})
            self._by_name[f.name] = f
        prev = None
        for f in nodes:
            if prev is not None and f.start_addr < prev.end_addr:
                raise AddressOverlapError(
                    f"{prev.name} [{prev.start_addr:#x},{prev.end_addr:#x}) overlaps "
                    f"{f.name} [{f.start_addr:#x},{f.end_addr:#x})"
                )
            prev = f
        self._nodes = tuple(nodes)

        edges = []
        for e in calls:
            for endpoint in (e.caller, e.callee):
                known = self._by_name.get(endpoint.name)
                if known is None or known != endpoint:
                    raise DanglingEdgeError(f"edge endpoint {endpoint.name!r} is not a node of {binary_id!r}")
            edges.append(e)
        edges.sort(
            key=lambda e: (e.caller.start_addr, e.callee.start_addr, -1 if e.site is None else e.site)
        )
        self._edges = tuple(edges)

        succ = {f.name: [] for f in self._nodes}
        pred = {f.name: [] for f in self._nodes}
        for e in self._edges:
            succ[e.caller.name].append(e.callee)
            pred[e.callee.name].append(e.caller)
        self._succ = {n: _dedup_sorted(v) for n, v in succ.items()}
        self._pred = {n: _dedup_sorted(v) for n, v in pred.items()}

    @property
    def nodes(self):
        """Functions ordered by start address."""
        return self._nodes

    @property
    def edges(self):
        return self._edges

    def __len__(self):
        return len(self._nodes)

    def __contains__(self, name):
        return name in self._by_name

    def node(self, name):
        try:
            return self._by_name[name]
        except KeyError:
            raise UnknownFunctionError(f"{name!r} is not a function of {self.binary_id!r}") from None

    def _resolve(self, f):
        name = f.name if isinstance(f, BinaryFunctionId) else f
        return self.node(name)

    def successors(self, f):
        """Distinct callees of `f`, ordered by start address."""
        return list(self._succ[self._resolve(f).name])

    def predecessors(self, f):
        return list(self._pred[self._resolve(f).name])

    def neighbors(self, f):
        """Predecessors and successors of `f`, excluding `f` itself."""
        node = self._resolve(f)
        out = set(self._succ[node.name]) | set(self._pred[node.name])
        out.discard(node)
        return out

    def __eq__(self, other):
        if not isinstance(other, FunctionCallGraph):
            return NotImplemented
        return (
            self.binary_id == other.binary_id
            and self.setting == other.setting
            and set(self._nodes) == set(other._nodes)
            and Counter(self._edges) == Counter(other._edges)
        )

    def __repr__(self):
        return f"FunctionCallGraph({self.binary_id!r}, |V|={len(self._nodes)}, |E|={len(self._edges)})"


def _dedup_sorted(funcs):
    seen = set()
    out = []
    for f in sorted(funcs, key=lambda f: (f.start_addr, f.name)):
        if f.name not in seen:
            seen.add(f.name)
            out.append(f)
    return tuple(out)


def build_graph(binary_id, setting, raw_functions, raw_calls, path=None):
    """Construct a graph from (name, start, end) / (caller, callee, site) tuples.

    Names are normalized; collisions after normalization are an error listing
    every colliding original symbol.
    """
    by_norm = {}
    for name, start, end in raw_functions:
        by_norm.setdefault(normalize_name(name), []).append(name)
    collisions = {norm: set(origs) for norm, origs in by_norm.items() if len(origs) > 1}
    if collisions:
        raise DuplicateNameError(collisions)

    functions = []
    for name, start, end in raw_functions:
        try:
            functions.append(BinaryFunctionId(normalize_name(name), start, end))
        except ValueError as exc:
            raise SchemaError(str(exc), locus=f"functions[{name}]", path=path) from None
    by_name = {f.name: f for f in functions}

    calls = []
    for caller, callee, site in raw_calls:
        caller_f = by_name.get(normalize_name(caller))
        callee_f = by_name.get(normalize_name(callee))
        if caller_f is None:
            raise DanglingEdgeError(f"call references unknown caller {caller!r}")
        if callee_f is None:
            raise DanglingEdgeError(f"call references unknown callee {callee!r}")
        calls.append(CallEdge(caller_f, callee_f, site))
    return FunctionCallGraph(binary_id, setting, functions, calls)


def ingest_fcg(path):
    """Load a graph from an fcg/1 JSON file (or .gml convenience import)."""
    path = str(path)
    if path.endswith(".gml"):
        return _ingest_gml(path)
    doc = _jsonio.read_json(path)
    _jsonio.expect_schema(doc, "fcg/1", path=path)
    binary_id = _jsonio.require(doc, "binary_id", str, "$", path=path)
    setting = CompilationSetting.from_json(_jsonio.require(doc, "setting", dict, "$", path=path), path=path)

    raw_functions = []
    for i, entry in enumerate(_jsonio.require(doc, "functions", list, "$", path=path)):
        locus = f"functions[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError("function entry must be an object", locus=locus, path=path)
        name = _jsonio.require(entry, "name", str, locus, path=path)
        start = _jsonio.parse_hex(entry.get("start"), f"{locus}.start", path=path)
        end = _jsonio.parse_hex(entry.get("end"), f"{locus}.end", path=path)
        raw_functions.append((name, start, end))

    raw_calls = []
    for i, entry in enumerate(_jsonio.require(doc, "calls", list, "$", path=path)):
        locus = f"calls[{i}]"
        if not isinstance(entry, dict):
            raise SchemaError("call entry must be an object", locus=locus, path=path)
        caller = _jsonio.require(entry, "caller", str, locus, path=path)
        callee = _jsonio.require(entry, "callee", str, locus, path=path)
        site = None
        if entry.get("site") is not None:
            site = _jsonio.parse_hex(entry["site"], f"{locus}.site", path=path)
        raw_calls.append((caller, callee, site))

    return build_graph(binary_id, setting, raw_functions, raw_calls, path=path)


def emit_fcg(graph, path):
    """Write a graph as fcg/1 JSON; `ingest_fcg` on the result reproduces it."""
    doc = {
        "schema": "fcg/1",
        "binary_id": graph.binary_id,
        "setting": graph.setting.to_json(),
        "functions": [
            {"name": f.name, "start": _jsonio.hex_str(f.start_addr), "end": _jsonio.hex_str(f.end_addr)}
            for f in graph.nodes
        ],
        "calls": [
            {
                "caller": e.caller.name,
                "callee": e.callee.name,
                **({"site": _jsonio.hex_str(e.site)} if e.site is not None else {}),
            }
            for e in graph.edges
        ],
    }
    _jsonio.write_json(path, doc)


def _tokenize_gml(text):
    # strings are double-quoted without escapes, per the GML exports we accept
    tokens = []
    i, n = 0, len(text)
    while i < n:
        c = text[i]
        if c.isspace():
            i += 1
        elif c == '"':
            j = text.index('"', i + 1)
            tokens.append(("str", text[i + 1 : j]))
            i = j + 1
        elif c in "[]":
            tokens.append((c, c))
            i += 1
        else:
            j = i
            while j < n and not text[j].isspace() and text[j] not in "[]":
                j += 1
            tokens.append(("atom", text[i:j]))
            i = j
    return tokens


def _parse_gml_block(tokens, pos):
    out = []
    while pos < len(tokens):
        kind, value = tokens[pos]
        if kind == "]":
            return out, pos + 1
        if kind != "atom":
            raise SchemaError(f"unexpected token {value!r} in GML", locus=f"token {pos}")
        key = value
        kind2, value2 = tokens[pos + 1]
        if kind2 == "[":
            sub, pos = _parse_gml_block(tokens, pos + 2)
            out.append((key, sub))
        else:
            out.append((key, value2))
            pos += 2
    return out, pos


def _gml_get(items, key, locus, path):
    for k, v in items:
        if k == key:
            return v
    raise SchemaError(f"missing required field {key!r}", locus=locus, path=path)


def _ingest_gml(path):
    with open(path, "r", encoding="utf-8") as f:
        tokens = _tokenize_gml(f.read())
    items, _ = _parse_gml_block(tokens, 0)
    graph_items = _gml_get(items, "graph", "$", path)
    binary_id = _gml_get(graph_items, "binary_id", "graph", path)
    setting_items = _gml_get(graph_items, "setting", "graph", path)
    setting = CompilationSetting.from_json(dict(setting_items), locus="graph.setting", path=path)

    raw_functions = []
    raw_calls = []
    for key, value in graph_items:
        if key == "node":
            entries = dict(value)
            raw_functions.append(
                (
                    entries["name"],
                    _jsonio.parse_hex(entries.get("start"), "node.start", path=path),
                    _jsonio.parse_hex(entries.get("end"), "node.end", path=path),
                )
            )
        elif key == "edge":
            entries = dict(value)
            site = None
            if "site" in entries:
                site = _jsonio.parse_hex(entries["site"], "edge.site", path=path)
            raw_calls.append((entries["caller"], entries["callee"], site))
    return build_graph(binary_id, setting, raw_functions, raw_calls, path=path)
