import random

import pytest

from mefr import oracle
from mefr.debuginfo import SourceRangeIndex
from mefr.errors import ConfigError
from mefr.mapping import MappingClass, build_b2b, build_b2s
from mefr.synth import (
    CallSite,
    InlinePolicy,
    SourceFunction,
    SourceGraph,
    SynthConfig,
    SynthCorpus,
    _decide_inlining,
    _materialize_setting,
    _setting_for,
    brute_force_classify,
    expected_mefrs,
    generate_corpus,
)


def small_config(seed=1, **overrides):
    base = dict(
        seed=seed,
        n_source_functions=25,
        edge_density=0.1,
        n_settings=3,
        inline_policy=InlinePolicy(size_threshold=60, inline_prob=0.6),
    )
    base.update(overrides)
    return SynthConfig(**base)


def corpus_bytes(corpus):
    buf = []
    for art in corpus.settings:
        buf.append(repr([(f.name, f.start_addr, f.end_addr) for f in art.fcg.nodes]))
        buf.append(repr([(e.caller.name, e.callee.name, e.site) for e in art.fcg.edges]))
        buf.append(repr(sorted((e.name, sorted(e.sf_set)) for e in art.b2s)))
        buf.append(repr([s.id for s in art.decisions]))
        buf.append(repr(sorted((r.address, r.file, r.line) for r in art.line_records)))
    buf.append(repr(sorted(corpus.never_inlined)))
    return "\n".join(buf)


class TestConfig:
    def test_validation(self):
        with pytest.raises(ConfigError):
            small_config(n_settings=1)
        with pytest.raises(ConfigError):
            small_config(edge_density=0.0)
        with pytest.raises(ConfigError):
            small_config(inline_policy=InlinePolicy(inline_prob=1.5))
        with pytest.raises(ConfigError):
            small_config(n_source_functions=0)


class TestDeterminism:
    def test_same_seed_same_corpus(self):
        a = generate_corpus(small_config(seed=42))
        b = generate_corpus(small_config(seed=42))
        assert corpus_bytes(a) == corpus_bytes(b)

    def test_different_seed_differs(self):
        a = generate_corpus(small_config(seed=1))
        b = generate_corpus(small_config(seed=2))
        assert corpus_bytes(a) != corpus_bytes(b)


class TestNoInlining:
    def test_fcgs_isomorphic_to_source_and_all_boundary(self):
        cfg = small_config(inline_policy=InlinePolicy(inline_prob=0.0))
        corpus = generate_corpus(cfg)
        source_edges = sorted((s.caller, s.callee) for s in corpus.source.sites)
        for art in corpus.settings:
            assert sorted(f.name for f in art.fcg.nodes) == sorted(
                f.name for f in corpus.source.functions
            )
            assert sorted((e.caller.name, e.callee.name) for e in art.fcg.edges) == source_edges
            assert all(not e.is_bfi for e in art.b2s)
        assert corpus.never_inlined == {f.key for f in corpus.source.functions}

    def test_expected_mefrs_all_singletons(self):
        cfg = small_config(inline_policy=InlinePolicy(inline_prob=0.0))
        corpus = generate_corpus(cfg)
        exp = expected_mefrs(corpus, 0)
        assert all(members == {entry} for entry, members in exp.core_members.items())
        assert not exp.contested and not exp.unassigned


def seven_node_tree():
    #        r0              r1
    #      /    \             |
    #     c0    c1           c2
    #    /  \     \
    #   l0  l1    (leaf)
    functions = [
        SourceFunction(name, "t.c", 1 + 10 * i, 9 + 10 * i, size=2)
        for i, name in enumerate(["r0", "r1", "c0", "c1", "c2", "l0", "l1"])
    ]
    sites = [
        CallSite("r0", "c0", 0),
        CallSite("r0", "c1", 0),
        CallSite("r1", "c2", 0),
        CallSite("c0", "l0", 0),
        CallSite("c0", "l1", 0),
    ]
    return SourceGraph(functions, sites)


class TestTreeAbsorption:
    def test_roots_absorb_subtrees_under_total_inlining(self):
        source = seven_node_tree()
        policy = InlinePolicy(size_threshold=float("inf"), inline_prob=1.0)
        rng = random.Random(0)
        inlined, decisions, _ = _decide_inlining(source, policy, rng)
        assert inlined == {"c0", "c1", "c2", "l0", "l1"}
        art = _materialize_setting(source, _setting_for(0), decisions, "tree")
        assert sorted(f.name for f in art.fcg.nodes) == ["r0", "r1"]
        assert art.fcg.edges == ()
        assert art.b2s.entries["r0"].sf_set == {
            f.key for f in source.functions if f.name in {"r0", "c0", "c1", "l0", "l1"}
        }
        assert art.b2s.entries["r1"].sf_set == {
            f.key for f in source.functions if f.name in {"r1", "c2"}
        }

    def test_expected_regions_are_root_subtrees(self):
        source = seven_node_tree()
        policy = InlinePolicy(size_threshold=float("inf"), inline_prob=1.0)
        cfg = SynthConfig(seed=0, n_source_functions=7, edge_density=0.5, n_settings=2,
                          inline_policy=policy)
        corpus = SynthCorpus(cfg, "tree", source, SourceRangeIndex([]), [])
        rng = random.Random(0)
        for i in range(2):
            _inlined, decisions, _ = _decide_inlining(source, policy, rng)
            corpus.settings.append(_materialize_setting(source, _setting_for(i), decisions, "tree"))
        corpus.never_inlined = {f.key for f in source.functions if f.name in {"r0", "r1"}}
        exp = expected_mefrs(corpus, 0)
        assert exp.entries == {"r0", "r1"}
        # nodes were fully inlined away, so regions are just the roots
        assert exp.core_members == {"r0": {"r0"}, "r1": {"r1"}}


class TestPartialInlining:
    def test_partial_decisions_keep_standalone_node(self):
        # one call site of `callee` inlined, the other kept: the node
        # survives and its body is duplicated into the inlining caller
        functions = [
            SourceFunction("f", "p.c", 1, 9, size=2),
            SourceFunction("g", "p.c", 11, 19, size=2),
            SourceFunction("callee", "p.c", 21, 29, size=2),
        ]
        sites = [CallSite("f", "callee", 0), CallSite("g", "callee", 0)]
        source = SourceGraph(functions, sites)
        art = _materialize_setting(source, _setting_for(0), [sites[0]], "p")
        assert sorted(f.name for f in art.fcg.nodes) == ["callee", "f", "g"]
        assert art.b2s.entries["f"].is_bfi
        assert art.b2s.entries["g"].sf_set == {functions[1].key}
        assert [(e.caller.name, e.callee.name) for e in art.fcg.edges] == [("g", "callee")]

    def test_single_inlined_callee_pair_classes(self):
        functions = [
            SourceFunction("f", "p.c", 1, 9, size=2),
            SourceFunction("callee", "p.c", 11, 19, size=2),
        ]
        sites = [CallSite("f", "callee", 0)]
        source = SourceGraph(functions, sites)
        cfg = SynthConfig(seed=0, n_source_functions=2, edge_density=0.5, n_settings=2)
        corpus = SynthCorpus(cfg, "p", source, SourceRangeIndex([]), [])
        corpus.settings.append(_materialize_setting(source, _setting_for(0), [], "p"))
        corpus.settings.append(_materialize_setting(source, _setting_for(1), sites, "p"))
        got = brute_force_classify(corpus, 0, 1)
        classes = {(p.left, p.right): p.cls for p in got.pairs}
        assert classes[("f", "f")] is MappingClass.ROOT_EQUIVALENT
        assert classes[("callee", "f")] is MappingClass.RELEVANT
        assert len(classes) == 2

    def test_no_inlining_pair_all_identical(self):
        corpus = generate_corpus(small_config(inline_policy=InlinePolicy(inline_prob=0.0)))
        got = brute_force_classify(corpus, 0, 1)
        assert got.pairs
        assert all(p.cls is MappingClass.IDENTICAL for p in got.pairs)


class TestConservation:
    def test_source_set_conserved_and_duplication_only_with_inlining(self):
        for seed in range(6):
            corpus = generate_corpus(small_config(seed=seed))
            all_keys = {f.key for f in corpus.source.functions}
            for art in corpus.settings:
                seen = {}
                for entry in art.b2s:
                    for k in entry.sf_set:
                        seen[k] = seen.get(k, 0) + 1
                assert set(seen) == all_keys  # nothing lost, nothing invented
                inlined_callees = {s.callee for s in art.decisions}
                for k, count in seen.items():
                    if count > 1:
                        assert k.name in inlined_callees

    def test_never_inlined_iff_singleton_and_absent_elsewhere(self):
        corpus = generate_corpus(small_config(seed=3))
        for f in corpus.source.functions:
            k = f.key
            everywhere_own = all(
                f.name in art.b2s.entries
                and all(k not in e.sf_set for e in art.b2s if e.name != f.name)
                for art in corpus.settings
            )
            assert everywhere_own == (k in corpus.never_inlined)


class TestCrossChecks:
    def test_build_b2b_equals_brute_force(self):
        for seed in (5, 6):
            corpus = generate_corpus(small_config(seed=seed))
            for i in range(len(corpus.settings)):
                for j in range(i + 1, len(corpus.settings)):
                    got = build_b2b(corpus.settings[i].b2s, corpus.settings[j].b2s)
                    want = brute_force_classify(corpus, i, j)
                    assert [(p.left, p.right, p.cls) for p in got.pairs] == [
                        (p.left, p.right, p.cls) for p in want.pairs
                    ]

    def test_constructed_partition_matches_expected(self):
        for seed in range(8):
            corpus = generate_corpus(small_config(seed=seed))
            b2s_by = {a.setting.slug(): a.b2s for a in corpus.settings}
            bounds = oracle.identify_boundaries(b2s_by)
            assert bounds.never_inlined_sources == corpus.never_inlined
            for i, art in enumerate(corpus.settings):
                exp = expected_mefrs(corpus, i)
                part = oracle.construct_mefrs(
                    art.fcg, bounds.boundaries[art.setting.slug()], "partition"
                )
                assert {r.entry for r in part.regions} == exp.entries
                assert set(part.unassigned) == exp.unassigned
                assert part.contested_count == len(exp.contested)
                for region in part.regions:
                    core = exp.core_members[region.entry]
                    got = set(region.members)
                    assert core <= got <= core | exp.contested

    def test_built_b2s_from_line_records_matches_truth(self):
        corpus = generate_corpus(small_config(seed=9))
        for art in corpus.settings:
            built = build_b2s(
                art.line_records, art.ranges, corpus.source_index, art.fcg.binary_id, art.setting
            )
            for name, truth_entry in art.b2s.entries.items():
                got = built.entries[name]
                assert got.sf_set == truth_entry.sf_set
                assert got.osf == truth_entry.osf
                assert got.is_bfi == truth_entry.is_bfi


def test_explosion_guard():
    # dense diamond stack with unlimited threshold and certain inlining
    functions = [SourceFunction(f"f{i:02d}", "x.c", 1 + 10 * i, 9 + 10 * i, size=1) for i in range(40)]
    sites = []
    for i in range(39):
        for j in range(i + 1, min(i + 3, 40)):
            sites.append(CallSite(f"f{i:02d}", f"f{j:02d}", 0))
    source = SourceGraph(functions, sites)
    policy = InlinePolicy(size_threshold=float("inf"), inline_prob=1.0)
    _inlined, decisions, _ = _decide_inlining(source, policy, random.Random(0))
    with pytest.raises(ConfigError, match="explodes"):
        _materialize_setting(source, _setting_for(0), decisions, "boom")
