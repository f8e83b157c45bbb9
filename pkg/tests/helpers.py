"""Shared builders for tests: terse graph and mapping construction."""

from mefr.graph import BinaryFunctionId, CallEdge, CompilationSetting, FunctionCallGraph
from mefr.mapping import B2sEntry, Binary2SourceMap, SourceFunctionKey

SETTING = CompilationSetting("gcc-11.2.0", "O2", "x86_64")
OTHER_SETTING = CompilationSetting("clang-6.0", "O0", "x86_64")


def make_graph(edges=(), nodes=None, binary_id="g", setting=SETTING, sites=False):
    """Graph from edge name pairs; nodes auto-placed at increasing addresses.

    `nodes`, when given, fixes the address order; otherwise node order is
    first-appearance order in `edges`.
    """
    if nodes is None:
        seen = []
        for a, b in edges:
            for name in (a, b):
                if name not in seen:
                    seen.append(name)
        nodes = seen
    ids = {}
    addr = 0x1000
    for name in nodes:
        ids[name] = BinaryFunctionId(name, addr, addr + 0x10)
        addr += 0x10
    calls = []
    for i, (a, b) in enumerate(edges):
        calls.append(CallEdge(ids[a], ids[b], 4 * i if sites else None))
    return FunctionCallGraph(binary_id, setting, ids.values(), calls)


def key(name, file="a.c"):
    return SourceFunctionKey(file, name)


def b2s_entry(name, sources, osf="self", start=0, file="a.c"):
    """B2sEntry with sf_set from names; osf defaults to the entry's own name."""
    sf_set = frozenset(key(s, file) if isinstance(s, str) else s for s in sources)
    if osf == "self":
        osf_key = next((k for k in sf_set if k.name == name), None)
    else:
        osf_key = osf
    return B2sEntry(name, start, sf_set, osf_key, len(sf_set) > 1)


def b2s_map(entries, binary_id="g", setting=SETTING):
    by_name = {}
    for i, e in enumerate(entries):
        if e.start == 0:
            e = B2sEntry(e.name, 0x1000 + 0x10 * i, e.sf_set, e.osf, e.is_bfi)
        by_name[e.name] = e
    return Binary2SourceMap(binary_id, setting, by_name)


def b2s_for_graph(graph, sf_sets=None, file="a.c"):
    """One-to-one b2s for a graph; `sf_sets` overrides per-name source sets."""
    sf_sets = sf_sets or {}
    entries = {}
    for f in graph.nodes:
        sources = sf_sets.get(f.name, [f.name])
        sf_set = frozenset(key(s, file) if isinstance(s, str) else s for s in sources)
        osf = next((k for k in sf_set if k.name == f.name), None)
        entries[f.name] = B2sEntry(f.name, f.start_addr, sf_set, osf, len(sf_set) > 1)
    return Binary2SourceMap(graph.binary_id, graph.setting, entries)
