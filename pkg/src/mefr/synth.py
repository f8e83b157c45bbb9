"""Seeded synthetic corpora with exact ground truth.

Generates a random source-level call graph, applies a parameterized
inlining policy independently per compilation setting, and emits the
resulting call-graph variants together with exact binary2source maps,
the never-inlined source set, inlining decision lists, and independently
constructed expected region partitions. Every downstream module is
cross-checked against these artifacts.

Inlining is decided per callee and setting: a callee is either inlined at
all of its call sites or at none, and functions involved in recursion are
never inlined. Real compilers may inline per call site; keeping decisions
callee-uniform guarantees that no graph contains a function alongside a
copy of itself, which keeps every generated region minimal.
"""

import math
import random
from collections import deque
from dataclasses import dataclass, field

from . import _jsonio
from .errors import ConfigError
from .graph import OPTIMIZATIONS, BinaryFunctionId, CallEdge, CompilationSetting, FunctionCallGraph
from .mapping import B2sEntry, Binary2SourceMap, MappingClass, MappingClassification, PairMapping, SourceFunctionKey
from .debuginfo import LineRecord, SourceRangeIndex

FUNCS_PER_FILE = 8
LINES_PER_FUNC = 10
BYTES_PER_UNIT = 16
MAX_TOTAL_COPIES = 2_000_000


@dataclass(frozen=True)
class InlinePolicy:
    always_single_caller: bool = False
    size_threshold: float = 50
    inline_prob: float = 0.5


@dataclass(frozen=True)
class SynthConfig:
    seed: int
    n_source_functions: int
    edge_density: float
    n_settings: int
    inline_policy: InlinePolicy = InlinePolicy()
    back_edge_fraction: float = 0.1
    self_loop_prob: float = 0.01
    parallel_call_prob: float = 0.05
    # optional per-setting override of inline_prob, e.g. (0.0, 0.5, 0.9) to
    # mimic an optimization ladder from O0-like to aggressive
    inline_prob_per_setting: tuple | None = None

    def __post_init__(self):
        if not 0 <= self.seed < 1 << 64:
            raise ConfigError("seed must fit in 64 bits")
        if self.n_source_functions < 1:
            raise ConfigError("need at least one source function")
        if not 0 < self.edge_density <= 1:
            raise ConfigError("edge_density must be in (0, 1]")
        if self.n_settings < 2:
            raise ConfigError("need at least two settings")
        if not 0 <= self.inline_policy.inline_prob <= 1:
            raise ConfigError("inline_prob must be in [0, 1]")
        if self.inline_policy.size_threshold < 0:
            raise ConfigError("size_threshold must be nonnegative")
        if not 0 <= self.back_edge_fraction <= 1:
            raise ConfigError("back_edge_fraction must be in [0, 1]")
        if self.inline_prob_per_setting is not None:
            if len(self.inline_prob_per_setting) != self.n_settings:
                raise ConfigError("inline_prob_per_setting must list one probability per setting")
            if not all(0 <= p <= 1 for p in self.inline_prob_per_setting):
                raise ConfigError("per-setting inline probabilities must be in [0, 1]")


@dataclass(frozen=True)
class SourceFunction:
    name: str
    file: str
    start_line: int
    end_line: int
    size: int

    @property
    def key(self):
        return SourceFunctionKey(self.file, self.name)


@dataclass(frozen=True)
class CallSite:
    caller: str
    callee: str
    ordinal: int  # distinguishes parallel sites between one pair

    @property
    def id(self):
        return (self.caller, self.callee, self.ordinal)


@dataclass
class SourceGraph:
    functions: list
    sites: list

    def by_name(self):
        return {f.name: f for f in self.functions}


@dataclass
class SettingArtifacts:
    setting: CompilationSetting
    decisions: list  # inlined CallSites, in site order
    fcg: FunctionCallGraph
    b2s: Binary2SourceMap
    line_records: list
    ranges: list


@dataclass
class SynthCorpus:
    config: SynthConfig
    project: str
    source: SourceGraph
    source_index: SourceRangeIndex
    settings: list
    never_inlined: set = field(default_factory=set)  # SourceFunctionKeys


def _setting_for(index):
    return CompilationSetting(
        f"synth-{1 + index // len(OPTIMIZATIONS)}.0",
        OPTIMIZATIONS[index % len(OPTIMIZATIONS)],
        "x86_64",
    )


def _build_source_graph(cfg, rng):
    functions = []
    for i in range(cfg.n_source_functions):
        file = f"src_{i // FUNCS_PER_FILE:03d}.c"
        slot = i % FUNCS_PER_FILE
        functions.append(
            SourceFunction(
                f"f{i:04d}",
                file,
                slot * LINES_PER_FUNC + 1,
                slot * LINES_PER_FUNC + LINES_PER_FUNC - 1,
                rng.randint(1, 40),
            )
        )
    n = len(functions)

    pair_edges = []
    for i in range(n):
        for j in range(i + 1, n):
            if rng.random() < cfg.edge_density:
                pair_edges.append((i, j))
    n_back = int(len(pair_edges) * cfg.back_edge_fraction)
    forward = set(pair_edges)
    back_candidates = [(j, i) for i, j in pair_edges if (j, i) not in forward]
    rng.shuffle(back_candidates)
    edges = pair_edges + sorted(back_candidates[:n_back])
    for i in range(n):
        if rng.random() < cfg.self_loop_prob:
            edges.append((i, i))

    sites = []
    counts = {}
    for a, b in sorted(set(edges)):
        copies = 1
        if a != b and rng.random() < cfg.parallel_call_prob:
            copies = 2
        for _ in range(copies):
            key = (functions[a].name, functions[b].name)
            ordinal = counts.get(key, 0)
            counts[key] = ordinal + 1
            sites.append(CallSite(key[0], key[1], ordinal))
    return SourceGraph(functions, sites)


def _tarjan_scc(names, succ):
    index = {}
    lowlink = {}
    on_stack = set()
    stack = []
    scc_of = {}
    counter = [0]
    scc_id = [0]

    for root in names:
        if root in index:
            continue
        work = [(root, iter(succ[root]))]
        index[root] = lowlink[root] = counter[0]
        counter[0] += 1
        stack.append(root)
        on_stack.add(root)
        while work:
            node, it = work[-1]
            advanced = False
            for nxt in it:
                if nxt not in index:
                    index[nxt] = lowlink[nxt] = counter[0]
                    counter[0] += 1
                    stack.append(nxt)
                    on_stack.add(nxt)
                    work.append((nxt, iter(succ[nxt])))
                    advanced = True
                    break
                if nxt in on_stack:
                    lowlink[node] = min(lowlink[node], index[nxt])
            if advanced:
                continue
            work.pop()
            if work:
                parent = work[-1][0]
                lowlink[parent] = min(lowlink[parent], lowlink[node])
            if lowlink[node] == index[node]:
                while True:
                    member = stack.pop()
                    on_stack.discard(member)
                    scc_of[member] = scc_id[0]
                    if member == node:
                        break
                scc_id[0] += 1
    return scc_of


def _decide_inlining(source, policy, rng, inline_prob=None):
    """Choose the set of inlined callees for one setting.

    Callees are visited in reverse topological order (callees before
    callers) so each decision can use the callee's post-inlining size.
    """
    if inline_prob is None:
        inline_prob = policy.inline_prob
    names = [f.name for f in source.functions]
    funcs = source.by_name()
    succ = {n: [] for n in names}
    incoming = {n: [] for n in names}
    for site in source.sites:
        succ[site.caller].append(site.callee)
        incoming[site.callee].append(site)
    scc_of = _tarjan_scc(names, succ)

    # Kahn's algorithm on the acyclic (cross-component) edges, then reversed.
    cross_succ = {n: sorted({c for c in succ[n] if scc_of[c] != scc_of[n]}) for n in names}
    indeg = {n: 0 for n in names}
    for n in names:
        for c in cross_succ[n]:
            indeg[c] += 1
    queue = deque(sorted(n for n in names if indeg[n] == 0))
    topo = []
    while queue:
        n = queue.popleft()
        topo.append(n)
        for c in cross_succ[n]:
            indeg[c] -= 1
            if indeg[c] == 0:
                queue.append(c)
    order = list(reversed(topo))

    outgoing = {n: [] for n in names}
    for site in source.sites:
        outgoing[site.caller].append(site)

    inlined = set()
    size_exp = {}
    for name in order:
        size_exp[name] = funcs[name].size + sum(
            size_exp[site.callee] for site in outgoing[name] if site.callee in inlined
        )
        draw = rng.random()  # one draw per callee keeps the stream stable
        sites_in = incoming[name]
        if not sites_in:
            continue
        if any(scc_of[s.caller] == scc_of[name] for s in sites_in):
            continue  # recursion: never inlined
        if policy.always_single_caller and len(sites_in) == 1:
            inlined.add(name)
        elif size_exp[name] <= policy.size_threshold and draw < inline_prob:
            inlined.add(name)
    decisions = [site for site in source.sites if site.callee in inlined]
    return inlined, decisions, size_exp


def _conduct_inlining(source, inlined_sites):
    """Apply a set of inlined call sites, returning the per-function survival,
    source bodies, and expansion layouts.

    Site-general: a callee survives when any of its call sites was left
    intact, and its body is duplicated into every caller that inlined one.
    """
    funcs = source.by_name()
    names = [f.name for f in source.functions]
    inlined_ids = {s.id for s in inlined_sites}
    incoming = {n: [] for n in names}
    outgoing = {n: [] for n in names}
    for site in source.sites:
        incoming[site.callee].append(site)
        outgoing[site.caller].append(site)

    survives = {
        n: not incoming[n] or any(s.id not in inlined_ids for s in incoming[n]) for n in names
    }

    inlined_out = {n: [s for s in outgoing[n] if s.id in inlined_ids] for n in names}
    body = {}
    copy_count = {}

    def resolve(start):
        stack = [start]
        while stack:
            n = stack[-1]
            if n in body:
                stack.pop()
                continue
            pending = [s.callee for s in inlined_out[n] if s.callee not in body]
            if pending:
                stack.extend(pending)
                continue
            b = {funcs[n].key}
            c = 1
            for s in inlined_out[n]:
                b |= body[s.callee]
                c += copy_count[s.callee]
            body[n] = frozenset(b)
            copy_count[n] = c
            stack.pop()

    for n in names:
        resolve(n)
    total_copies = sum(copy_count[n] for n in names if survives[n])
    if total_copies > MAX_TOTAL_COPIES:
        raise ConfigError(
            f"inlining policy explodes: {total_copies} function copies; lower the size threshold"
        )
    return survives, body, copy_count


def _expansion_preorder(name, inlined_out):
    """DFS preorder of the copies a surviving function's body contains."""
    out = []
    stack = [name]
    while stack:
        n = stack.pop()
        out.append(n)
        stack.extend(s.callee for s in reversed(inlined_out[n]))
    return out


def _materialize_setting(source, setting, decisions, project):
    inlined_ids = {s.id for s in decisions}
    survives, body, _counts = _conduct_inlining(source, decisions)
    funcs = source.by_name()
    names = [f.name for f in source.functions]
    inlined_out = {n: [] for n in names}
    plain_out = {n: [] for n in names}
    for s in source.sites:
        (inlined_out if s.id in inlined_ids else plain_out)[s.caller].append(s)

    survivors = [n for n in names if survives[n]]
    addr = 0x1000
    ranges = {}
    layouts = {}
    for n in survivors:
        copies = _expansion_preorder(n, inlined_out)
        size = sum(funcs[c].size for c in copies)
        ranges[n] = BinaryFunctionId(n, addr, addr + size * BYTES_PER_UNIT)
        layouts[n] = copies
        addr += size * BYTES_PER_UNIT

    line_records = []
    edges = []
    for n in survivors:
        fid = ranges[n]
        cursor = fid.start_addr
        site_addr = fid.start_addr
        for c in layouts[n]:
            f = funcs[c]
            line_records.append(LineRecord(cursor, f.file, f.start_line))
            if f.size > 1:
                line_records.append(
                    LineRecord(cursor + BYTES_PER_UNIT * (f.size - 1), f.file,
                               min(f.start_line + 2, f.end_line))
                )
            cursor += BYTES_PER_UNIT * f.size
            for s in plain_out[c]:
                edges.append(CallEdge(fid, ranges[s.callee], site_addr))
                site_addr += 4
    line_records.sort(key=lambda r: r.address)

    fcg = FunctionCallGraph(f"{project}-{setting.slug()}", setting, list(ranges.values()), edges)
    entries = {
        n: B2sEntry(n, ranges[n].start_addr, body[n], funcs[n].key, len(body[n]) > 1)
        for n in survivors
    }
    b2s = Binary2SourceMap(fcg.binary_id, setting, entries)
    return SettingArtifacts(setting, decisions, fcg, b2s, line_records, list(ranges.values()))


def generate_corpus(cfg, project="synthetic"):
    """Generate the full corpus for one configuration, deterministically."""
    rng = random.Random(cfg.seed)
    source = _build_source_graph(cfg, rng)

    index = SourceRangeIndex(
        (f.file, f.name, f.start_line, f.end_line) for f in source.functions
    )
    corpus = SynthCorpus(cfg, project, source, index, [])

    inlined_anywhere = set()
    for i in range(cfg.n_settings):
        setting = _setting_for(i)
        prob = None
        if cfg.inline_prob_per_setting is not None:
            prob = cfg.inline_prob_per_setting[i]
        inlined, decisions, _size_exp = _decide_inlining(
            source, cfg.inline_policy, rng, inline_prob=prob
        )
        inlined_anywhere |= inlined
        corpus.settings.append(_materialize_setting(source, setting, decisions, project))
    corpus.never_inlined = {
        f.key for f in source.functions if f.name not in inlined_anywhere
    }
    return corpus


@dataclass
class ExpectedMefrs:
    entries: set
    core_members: dict  # entry -> member set, excluding contested nodes
    contested: set
    unassigned: set


def expected_mefrs(corpus, setting_index):
    """Expected region partition, derived by edge-relaxation fixpoint.

    Intentionally a different construction from the BFS the oracle module
    uses: each node accumulates the set of boundary entries that reach it
    through non-boundary paths until a fixpoint, tracked as bitmasks.
    """
    art = corpus.settings[setting_index]
    graph = art.fcg
    never = {k.name for k in corpus.never_inlined}
    entries = sorted(f.name for f in graph.nodes if f.name in never)
    bit = {name: 1 << i for i, name in enumerate(entries)}
    entry_set = {f.name: 0 for f in graph.nodes}

    relax_edges = sorted({(e.caller.name, e.callee.name) for e in graph.edges})
    changed = True
    while changed:
        changed = False
        for u, v in relax_edges:
            if v in bit:
                continue
            contrib = bit[u] if u in bit else entry_set[u]
            if contrib | entry_set[v] != entry_set[v]:
                entry_set[v] |= contrib
                changed = True

    core = {e: {e} for e in entries}
    contested = set()
    unassigned = set()
    for f in graph.nodes:
        n = f.name
        if n in bit:
            continue
        mask = entry_set[n]
        count = mask.bit_count()
        if count == 0:
            unassigned.add(n)
        elif count == 1:
            core[entries[mask.bit_length() - 1]].add(n)
        else:
            contested.add(n)
    return ExpectedMefrs(set(entries), core, contested, unassigned)


def brute_force_classify(corpus, left_index, right_index):
    """Pairwise classification straight from ground-truth source sets.

    A deliberately naive double loop over all function pairs, applying the
    class rules directly; the mapping module's inverted-index construction
    must reproduce it exactly.
    """
    left = corpus.settings[left_index]
    right = corpus.settings[right_index]
    pairs = []
    for le in left.b2s:
        for re in right.b2s:
            if le.sf_set.isdisjoint(re.sf_set):
                continue
            if le.sf_set == re.sf_set:
                cls = MappingClass.IDENTICAL
            elif le.osf == re.osf:
                cls = MappingClass.ROOT_EQUIVALENT
            else:
                cls = MappingClass.RELEVANT
            pairs.append(PairMapping(le.name, re.name, cls, le.start, re.start))
    pairs.sort(key=lambda p: (p.left_start, p.right_start, p.left, p.right))
    return MappingClassification(left.setting, right.setting, pairs)


def write_truth(corpus, path):
    doc = {
        "schema": "truth/1",
        "project": corpus.project,
        "config": {
            "seed": corpus.config.seed,
            "n_source_functions": corpus.config.n_source_functions,
            "edge_density": corpus.config.edge_density,
            "n_settings": corpus.config.n_settings,
            "back_edge_fraction": corpus.config.back_edge_fraction,
            "self_loop_prob": corpus.config.self_loop_prob,
            "parallel_call_prob": corpus.config.parallel_call_prob,
            "inline_policy": {
                "always_single_caller": corpus.config.inline_policy.always_single_caller,
                "size_threshold": (
                    None
                    if math.isinf(corpus.config.inline_policy.size_threshold)
                    else corpus.config.inline_policy.size_threshold
                ),
                "inline_prob": corpus.config.inline_policy.inline_prob,
            },
            "inline_prob_per_setting": (
                list(corpus.config.inline_prob_per_setting)
                if corpus.config.inline_prob_per_setting is not None
                else None
            ),
        },
        "never_inlined": [k.to_json() for k in sorted(corpus.never_inlined)],
        "settings": [
            {
                "setting": art.setting.to_json(),
                "decisions": [
                    {"caller": s.caller, "callee": s.callee, "site": s.ordinal}
                    for s in art.decisions
                ],
            }
            for art in corpus.settings
        ],
    }
    _jsonio.write_json(path, doc)
