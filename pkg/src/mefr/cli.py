"""Command-line pipeline: extract, map, oracle, eval, synth gen, report.

Stages communicate only through the versioned file formats, so any stage
can be replaced by an external tool that speaks them. Exit codes: 0 on
success, 1 when some entries failed, 2 on usage or schema errors.
"""

import argparse
import csv
import logging
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor

from . import __version__, _jsonio, debuginfo, decomposers, mapping, metrics, oracle, synth
from .errors import MefrError, SingleSettingError
from .graph import BinaryFunctionId, FunctionCallGraph, emit_fcg, ingest_fcg
from .manifest import CorpusManifest, ManifestEntry, load_manifest, write_manifest

log = logging.getLogger("mefr")


def _setup_logging():
    level = os.environ.get("MEFR_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING), format="%(name)s: %(message)s")


def _add_common(parser):
    parser.add_argument("--manifest", required=True, help="manifest/1 file describing the corpus")
    parser.add_argument("--out", required=True, help="output directory")
    parser.add_argument("--jobs", type=int, default=os.cpu_count() or 1, help="pair-level parallelism")


def _sidecar(out_dir, command):
    _jsonio.write_json(
        os.path.join(out_dir, "run_info.json"),
        {"tool": "mefr", "version": __version__, "command": command},
    )


def _fcg_out(out_dir, slug):
    return os.path.join(out_dir, f"fcg_{slug}.json")


def _b2s_out(out_dir, slug):
    return os.path.join(out_dir, f"b2s_{slug}.json")


def _extract_entry(entry, out_dir, source_index):
    slug = entry.slug
    if entry.fcg_path is not None:
        graph = ingest_fcg(entry.fcg_path)
    else:
        ranges = debuginfo.extract_function_ranges(entry.binary_path)
        graph = FunctionCallGraph(
            f"{os.path.basename(entry.binary_path)}-{slug}", entry.setting, ranges, []
        )
    emit_fcg(graph, _fcg_out(out_dir, slug))

    if entry.b2s_path is not None:
        b2s = mapping.read_b2s(entry.b2s_path)
    elif entry.binary_path is not None:
        if source_index is None:
            raise MefrError(f"{slug}: binary entry needs --source-index to build its b2s map")
        lines = debuginfo.extract_line_table(entry.binary_path)
        ranges = [graph.node(f.name) for f in graph.nodes]
        b2s = mapping.build_b2s(lines, ranges, source_index, graph.binary_id, entry.setting)
    else:
        raise MefrError(f"{slug}: fcg-only entry needs a b2s_path")
    if b2s.setting is None:
        b2s.setting = entry.setting
    b2s.binary_id = graph.binary_id
    mapping.write_b2s(b2s, _b2s_out(out_dir, slug))
    return len(graph.nodes), len(graph.edges), len(b2s)


def cmd_extract(args):
    manifest = load_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    source_index = debuginfo.load_source_index(args.source_index) if args.source_index else None

    failures = 0
    for entry in manifest.entries:
        try:
            n_nodes, n_edges, n_mapped = _extract_entry(entry, args.out, source_index)
            print(f"{entry.slug}: {n_nodes} functions, {n_edges} calls, {n_mapped} mapped")
        except MefrError as exc:
            failures += 1
            print(f"{entry.slug}: FAILED: {exc}", file=sys.stderr)
    _sidecar(args.out, "extract")
    return 1 if failures else 0


def _load_side(manifest, out_dir):
    """Graphs and b2s maps per slug, preferring artifacts already in out_dir."""
    graphs, b2s_maps = {}, {}
    for entry in manifest.entries:
        slug = entry.slug
        fcg_path = _fcg_out(out_dir, slug)
        if not os.path.exists(fcg_path):
            fcg_path = entry.fcg_path
        b2s_path = _b2s_out(out_dir, slug)
        if not os.path.exists(b2s_path):
            b2s_path = entry.b2s_path
        if fcg_path is None or b2s_path is None:
            raise MefrError(f"{slug}: missing fcg/b2s artifacts; run `mefr extract` first")
        graphs[slug] = ingest_fcg(fcg_path)
        b2s_maps[slug] = mapping.read_b2s(b2s_path)
        if b2s_maps[slug].setting is None:
            b2s_maps[slug].setting = entry.setting
    return graphs, b2s_maps


def _setting_pairs(slugs):
    return [(slugs[i], slugs[j]) for i in range(len(slugs)) for j in range(i + 1, len(slugs))]


def cmd_map(args):
    manifest = load_manifest(args.manifest)
    os.makedirs(args.out, exist_ok=True)
    _graphs, b2s_maps = _load_side(manifest, args.out)
    slugs = [e.slug for e in manifest.entries]
    pairs = _setting_pairs(slugs)

    def work(pair):
        left, right = pair
        classification = mapping.build_b2b(b2s_maps[left], b2s_maps[right])
        return pair, classification, mapping.mapping_distribution(classification)

    with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
        results = {pair: (cls, dist) for pair, cls, dist in pool.map(work, pairs)}

    rows = []
    for left, right in pairs:
        classification, dist = results[(left, right)]
        mapping.write_b2b(classification, os.path.join(args.out, f"b2b_{left}__{right}.json"))
        rows.append(
            [left, right, dist["counts"]["identical"], dist["counts"]["root_equivalent"],
             dist["counts"]["relevant"], dist["total"],
             f"{dist['ratios']['identical']:.6f}", f"{dist['ratios']['root_equivalent']:.6f}",
             f"{dist['ratios']['relevant']:.6f}"]
        )
        print(f"{left} vs {right}: {dist['counts']} ({dist['total']} pairs)")

    with open(os.path.join(args.out, "mapping_distribution.csv"), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(
            ["left", "right", "identical", "root_equivalent", "relevant", "total",
             "identical_ratio", "root_equivalent_ratio", "relevant_ratio"]
        )
        writer.writerows(rows)
    _sidecar(args.out, "map")
    return 0


def cmd_oracle(args):
    manifest = load_manifest(args.manifest)
    if len(manifest.entries) < 2:
        raise SingleSettingError("oracle construction needs a manifest with at least two settings")
    os.makedirs(args.out, exist_ok=True)
    graphs, b2s_maps = _load_side(manifest, args.out)

    boundary_set = oracle.identify_boundaries(b2s_maps)
    _jsonio.write_json(
        os.path.join(args.out, "boundaries.json"),
        {
            "schema": "boundaries/1",
            "never_inlined": [k.to_json() for k in sorted(boundary_set.never_inlined_sources)],
            "boundaries": {slug: sorted(names) for slug, names in boundary_set.boundaries.items()},
        },
    )

    partitions = {}
    closures = {}
    for slug, graph in graphs.items():
        partition = oracle.construct_mefrs(graph, boundary_set.boundaries[slug], args.mode)
        partitions[slug] = partition
        # equivalence is a property of the full reachable closure; validate on
        # that even when emitting the exclusive partition
        closures[slug] = (
            partition
            if args.mode == "verbatim"
            else oracle.construct_mefrs(graph, boundary_set.boundaries[slug], "verbatim")
        )
        oracle.write_mefr(partition, os.path.join(args.out, f"mefr_{slug}.json"))
        sizes = [len(r.members) for r in partition.regions]
        print(
            f"{slug}: {len(partition.regions)} regions, "
            f"{partition.contested_count} contested, {len(partition.unassigned)} unassigned, "
            f"max region {max(sizes, default=0)}"
        )

    slugs = [e.slug for e in manifest.entries]
    validation = []
    for left, right in _setting_pairs(slugs):
        report = oracle.validate_mefr_pair(
            closures[left], graphs[left], b2s_maps[left],
            closures[right], graphs[right], b2s_maps[right],
        )
        validation.append(
            {
                "left": left,
                "right": right,
                "matched": len(report.matches),
                "all_equivalent": report.all_equivalent,
                "mismatches": [
                    {
                        "entry_osf": list(m.entry_osf),
                        "jaccard": m.jaccard,
                        "diverging": [k.to_json() for k in m.diverging],
                    }
                    for m in report.matches
                    if m.jaccard != 1.0
                ],
                "unmatched_left": report.unmatched_left,
                "unmatched_right": report.unmatched_right,
                "minimality_failures": {
                    f"{gid}:{entry}": members for (gid, entry), members in report.minimality_failures.items()
                },
            }
        )
    _jsonio.write_json(
        os.path.join(args.out, "oracle_validation.json"),
        {"schema": "validation/1", "pairs": validation},
    )
    _sidecar(args.out, "oracle")
    return 0


def _build_decomposition(args, graph, boundary):
    if args.decomp:
        return decomposers.load_external_decomposition(args.decomp, graph)
    if args.method == "singleton":
        return decomposers.decompose_singleton(graph)
    if args.method == "modularity":
        return decomposers.decompose_modularity(graph, max_size=args.max_size, unit_weights=args.unit_weights)
    if args.method == "expander":
        return decomposers.decompose_expander(graph, radius=args.radius)
    if args.method == "anchor":
        hops = None if args.hops is None or math.isinf(args.hops) else int(args.hops)
        return decomposers.decompose_anchor_extension(graph, boundary, hops=hops)
    raise MefrError(f"unknown method {args.method!r}")


def cmd_eval(args):
    manifest = load_manifest(args.manifest)
    oracle_dir = args.oracle_dir or args.out
    graphs, b2s_maps = _load_side(manifest, oracle_dir)
    os.makedirs(args.out, exist_ok=True)

    boundaries_path = os.path.join(oracle_dir, "boundaries.json")
    if not os.path.exists(boundaries_path):
        raise MefrError("boundaries.json not found; run `mefr oracle` first")
    boundary_doc = _jsonio.read_json(boundaries_path)
    boundaries = {slug: set(names) for slug, names in boundary_doc["boundaries"].items()}

    sim_buckets = metrics.DEFAULT_SIM_BUCKETS
    gran_buckets = metrics.DEFAULT_GRAN_BUCKETS
    if args.buckets:
        gran_buckets = tuple(float(x) for x in args.buckets.split(","))
    if args.sim_buckets:
        sim_buckets = tuple(float(x) for x in args.sim_buckets.split(","))

    method_label = args.method if not args.decomp else "external"
    reports = {}
    for slug, graph in graphs.items():
        partition = oracle.read_mefr(os.path.join(oracle_dir, f"mefr_{slug}.json"))
        if partition.graph_id != graph.binary_id:
            raise MefrError(f"{slug}: oracle graph id {partition.graph_id!r} does not match {graph.binary_id!r}")
        if args.method == "oracle" and not args.decomp:
            decomposition = decomposers.oracle_to_decomposition(partition)
        else:
            decomposition = _build_decomposition(args, graph, boundaries[slug])
        if decomposition.graph_id != graph.binary_id:
            raise MefrError(
                f"{slug}: decomposition graph id {decomposition.graph_id!r} does not match {graph.binary_id!r}"
            )
        report = metrics.evaluate_decomposition(
            partition, decomposition, b2s_maps[slug],
            sim_buckets=sim_buckets, gran_buckets=gran_buckets,
        )
        report.method = method_label
        reports[slug] = report
        metrics.write_report(report, os.path.join(args.out, f"report_{method_label}__{slug}.json"))
        if args.format == "csv":
            metrics.write_report_csv(report, os.path.join(args.out, f"report_{method_label}__{slug}.csv"))
        sim = report.similarity_summary
        gran = report.granularity_summary
        print(
            f"{slug} [{method_label}]: {sim['count']} regions, "
            f"similarity median {sim['median']}, granularity median {gran['median']}"
        )

    slugs = [e.slug for e in manifest.entries]
    pair_rows = []

    def pair_work(pair):
        left, right = pair
        corr = metrics.build_anchor_correspondence(
            graphs[left], b2s_maps[left], boundaries[left],
            graphs[right], b2s_maps[right], boundaries[right],
        )
        s_anch = metrics.anchor_stability(corr)
        nb = metrics.neighbor_stability_summary(graphs[left], graphs[right], corr)
        return pair, s_anch, nb

    with ThreadPoolExecutor(max_workers=max(args.jobs, 1)) as pool:
        pair_results = {pair: (s, nb) for pair, s, nb in pool.map(pair_work, _setting_pairs(slugs))}

    anchor_doc = []
    for left, right in _setting_pairs(slugs):
        s_anch, nb = pair_results[(left, right)]
        anchor_doc.append(
            {"left": left, "right": right, "s_anch": s_anch,
             "s_nb_mean_over_anchors": nb["mean_over_anchors"], "s_nb_summary": nb["summary"]}
        )
        pair_rows.append([left, right, f"{s_anch:.6f}",
                          "" if nb["mean_over_anchors"] is None else f"{nb['mean_over_anchors']:.6f}"])
        print(f"{left} vs {right}: s_anch={s_anch:.4f}")
    _jsonio.write_json(os.path.join(args.out, "anchor_metrics.json"),
                       {"schema": "anchor/1", "pairs": anchor_doc})
    with open(os.path.join(args.out, "anchor_metrics.csv"), "w", encoding="utf-8", newline="") as f:
        writer = csv.writer(f)
        writer.writerow(["left", "right", "s_anch", "s_nb_mean_over_anchors"])
        writer.writerows(pair_rows)
    _sidecar(args.out, "eval")
    return 0


def cmd_synth_gen(args):
    policy = synth.InlinePolicy(
        always_single_caller=args.always_single_caller,
        size_threshold=math.inf if args.size_threshold is None else args.size_threshold,
        inline_prob=args.inline_prob,
    )
    per_setting = None
    if args.inline_probs:
        per_setting = tuple(float(x) for x in args.inline_probs.split(","))
    cfg = synth.SynthConfig(
        seed=args.seed,
        n_source_functions=args.n,
        edge_density=args.edge_density,
        n_settings=args.settings,
        inline_policy=policy,
        back_edge_fraction=args.back_edge_fraction,
        inline_prob_per_setting=per_setting,
    )
    corpus = synth.generate_corpus(cfg, project=args.project)
    os.makedirs(args.out, exist_ok=True)

    entries = []
    for art in corpus.settings:
        slug = art.setting.slug()
        fcg_path = _fcg_out(args.out, slug)
        b2s_path = _b2s_out(args.out, slug)
        emit_fcg(art.fcg, fcg_path)
        mapping.write_b2s(art.b2s, b2s_path)
        entries.append(ManifestEntry(art.setting, fcg_path=fcg_path, b2s_path=b2s_path))
        print(f"{slug}: {len(art.fcg.nodes)} functions, {len(art.fcg.edges)} calls, "
              f"{len(art.decisions)} inlined sites")
    debuginfo.write_source_index(corpus.source_index, os.path.join(args.out, "srcidx.json"))
    synth.write_truth(corpus, os.path.join(args.out, "truth.json"))
    write_manifest(
        CorpusManifest(corpus.project, entries),
        os.path.join(args.out, "manifest.json"),
        relative_to=args.out,
    )
    _sidecar(args.out, "synth gen")
    return 0


def cmd_report(args):
    """Aggregate the artifacts of previous stages into one summary."""
    out_doc = {"schema": "summary/1", "mapping_distribution": [], "anchor_metrics": [], "evaluations": []}
    dist_path = os.path.join(args.input, "mapping_distribution.csv")
    if os.path.exists(dist_path):
        with open(dist_path, encoding="utf-8", newline="") as f:
            out_doc["mapping_distribution"] = list(csv.DictReader(f))
    per_pair = [
        mapping.mapping_distribution(mapping.read_b2b(os.path.join(args.input, name)))
        for name in sorted(os.listdir(args.input))
        if name.startswith("b2b_") and name.endswith(".json")
    ]
    if per_pair:
        out_doc["mapping_distribution_averages"] = mapping.aggregate_distributions(per_pair)
    anchor_path = os.path.join(args.input, "anchor_metrics.json")
    if os.path.exists(anchor_path):
        out_doc["anchor_metrics"] = _jsonio.read_json(anchor_path)["pairs"]
    for name in sorted(os.listdir(args.input)):
        if name.startswith("report_") and name.endswith(".json"):
            doc = _jsonio.read_json(os.path.join(args.input, name))
            out_doc["evaluations"].append(
                {
                    "file": name,
                    "graph_id": doc["graph_id"],
                    "method": doc["method"],
                    "similarity_summary": doc["similarity_summary"],
                    "granularity_summary": doc["granularity_summary"],
                    "community_sizes": sorted(
                        len(r["members"]) for r in _mefr_regions_for(args.input, doc["graph_id"])
                    ),
                }
            )
    os.makedirs(args.out, exist_ok=True)
    _jsonio.write_json(os.path.join(args.out, "summary.json"), out_doc)
    if args.format == "csv":
        with open(os.path.join(args.out, "summary.csv"), "w", encoding="utf-8", newline="") as f:
            writer = csv.writer(f)
            writer.writerow(["graph_id", "method", "similarity_median", "granularity_median"])
            for ev in out_doc["evaluations"]:
                writer.writerow(
                    [ev["graph_id"], ev["method"], ev["similarity_summary"]["median"],
                     ev["granularity_summary"]["median"]]
                )
    print(f"summary over {len(out_doc['evaluations'])} evaluations written to {args.out}")
    return 0


def _mefr_regions_for(directory, graph_id):
    for name in sorted(os.listdir(directory)):
        if name.startswith("mefr_") and name.endswith(".json"):
            doc = _jsonio.read_json(os.path.join(directory, name))
            if doc.get("graph_id") == graph_id:
                return doc["regions"]
    return []


def build_parser():
    parser = argparse.ArgumentParser(prog="mefr", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("extract", help="extract fcg/1 and b2s/1 artifacts from a manifest")
    _add_common(p)
    p.add_argument("--source-index", help="srcidx/1 file for binary entries")
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("map", help="classify binary2binary pairs for all setting pairs")
    _add_common(p)
    p.set_defaults(func=cmd_map)

    p = sub.add_parser("oracle", help="identify boundaries and construct region partitions")
    _add_common(p)
    p.add_argument("--mode", choices=["verbatim", "partition"], default="partition")
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("eval", help="score a decomposition method against the oracle")
    _add_common(p)
    p.add_argument("--oracle-dir", help="directory with oracle artifacts (defaults to --out)")
    p.add_argument("--method", default="oracle",
                   choices=["oracle", "singleton", "modularity", "expander", "anchor"])
    p.add_argument("--decomp", help="score an external decomp/1 file instead of a builtin method")
    p.add_argument("--max-size", type=int, default=None, help="modularity community-size cap")
    p.add_argument("--unit-weights", action="store_true", help="ignore edge multiplicities")
    p.add_argument("--radius", type=int, default=2, help="expander neighborhood radius")
    p.add_argument("--hops", type=float, default=None, help="anchor extension hop limit")
    p.add_argument("--buckets", help="comma-separated granularity histogram edges")
    p.add_argument("--sim-buckets", help="comma-separated similarity histogram edges")
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.set_defaults(func=cmd_eval)

    p_synth = sub.add_parser("synth", help="synthetic corpus tools")
    synth_sub = p_synth.add_subparsers(dest="synth_command", required=True)
    p = synth_sub.add_parser("gen", help="generate a corpus with ground truth")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--n", type=int, required=True, help="number of source functions")
    p.add_argument("--settings", type=int, default=2)
    p.add_argument("--edge-density", type=float, default=0.02)
    p.add_argument("--inline-prob", type=float, default=0.5)
    p.add_argument("--inline-probs", help="comma-separated per-setting probabilities, e.g. 0,0.5,0.9")
    p.add_argument("--size-threshold", type=float, default=None, help="default: unlimited")
    p.add_argument("--always-single-caller", action="store_true")
    p.add_argument("--back-edge-fraction", type=float, default=0.1)
    p.add_argument("--project", default="synthetic")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_synth_gen)

    p = sub.add_parser("report", help="aggregate stage outputs into a summary")
    p.add_argument("--in", dest="input", required=True, help="directory with stage outputs")
    p.add_argument("--out", required=True)
    p.add_argument("--format", choices=["json", "csv"], default="csv")
    p.set_defaults(func=cmd_report)
    return parser


def main(argv=None):
    _setup_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except MefrError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
