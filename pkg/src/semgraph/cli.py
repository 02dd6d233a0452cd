"""Command-line entry point: ``semgraph <command> ...``.

Exit status is 0 on success, 1 on runtime errors and 2 on usage errors.
Diagnostics go to stderr; query results go to stdout.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .errors import ParseError, SemgraphError

log = logging.getLogger("semgraph")

EXIT_OK, EXIT_RUNTIME, EXIT_USAGE = 0, 1, 2


class UsageError(Exception):
    pass


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def cmd_run(args) -> int:
    from .pipeline import PipelineConfig, load_config, run

    cfg = load_config(args.config) if args.config else PipelineConfig()
    overrides = {}
    if args.provider:
        overrides["provider"] = args.provider
    if args.skip_bad_frames:
        overrides["skip_bad_frames"] = True
    if args.endpoint:
        overrides["endpoint"] = args.endpoint
    if overrides:
        cfg = PipelineConfig.from_dict({**cfg.to_dict(), **overrides})

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    world, reports = run(args.dataset, cfg)
    world.save(out / "world.json")
    world.export("graph-json", out / "graph.json")
    world.export("dot", out / "graph.dot")
    totals = {
        key: sum(r.get(key, 0) for r in reports)
        for key in ("points", "clusters", "detections", "matches", "new_instances", "merged_instances")
    }
    totals.update(frames=len(reports), failed_frames=sum("error" in r for r in reports),
                  instances=len(world.instances), triples=len(world.triples))
    _write_json(out / "report.json", {"frames": reports, "totals": totals})
    log.info("wrote %s: %d instances, %d triples", out, len(world.instances), len(world.triples))
    return EXIT_OK


def parse_pattern(text: str):
    from .worldgraph import Predicate, parse_term

    tokens = text.split()
    if len(tokens) != 3:
        raise UsageError(f"pattern needs 3 tokens 'S P O', got {len(tokens)}")
    s, p, o = (None if t == "?" else t for t in tokens)
    try:
        return (
            None if s is None else parse_term(s),
            None if p is None else Predicate.parse(p),
            None if o is None else parse_term(o),
        )
    except ParseError as exc:
        raise UsageError(str(exc)) from None


def cmd_query(args) -> int:
    from .worldgraph import WorldGraph

    pattern = parse_pattern(args.pattern)
    world = WorldGraph.load(args.world)
    for triple in world.query(*pattern):
        print(triple)
    return EXIT_OK


def cmd_taxonomy(args) -> int:
    from .taxonomy import load_bundled, load_taxonomy, normalize_label

    t = load_taxonomy(args.file) if args.file else load_bundled("full")
    stats = t.stats()
    if args.prune:
        roots = [normalize_label(r) for r in args.prune.split(",") if r.strip()]
        pruned = t.prune(roots)
        stats = {**pruned.stats(), "removed": len(t) - len(pruned), "pruned": roots}
    else:
        stats["removed"] = 0
    print(json.dumps(stats, sort_keys=True))
    return EXIT_OK


def cmd_record(args) -> int:
    from .detection import RemoteVisionProvider, record_session
    from .pipeline import load_dataset

    frames, _ = load_dataset(args.dataset)
    provider = RemoteVisionProvider(args.endpoint)
    manifest = record_session(provider, [(f.frame_id, f.image_path) for f in frames], args.out)
    log.info("recorded %d frames, %d failed", len(manifest["recorded"]), len(manifest["failed"]))
    return EXIT_RUNTIME if manifest["failed"] else EXIT_OK


def cmd_gen_synthetic(args) -> int:
    from .synthetic import generate

    truth = generate(args.out, n_objects=args.objects, n_frames=args.frames, seed=args.seed)
    log.info("wrote synthetic dataset with %d objects to %s", len(truth["objects"]), args.out)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="semgraph", description=__doc__.splitlines()[0])
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("run", help="build a world graph from a dataset")
    p.add_argument("--dataset", required=True)
    p.add_argument("--config")
    p.add_argument("--out", required=True)
    p.add_argument("--provider", choices=["replay", "remote"])
    p.add_argument("--endpoint", help="remote annotate endpoint (remote provider)")
    p.add_argument("--skip-bad-frames", action="store_true")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("query", help="print triples matching 'S P O' ('?' is a wildcard)")
    p.add_argument("--world", required=True)
    p.add_argument("--pattern", required=True)
    p.set_defaults(func=cmd_query)

    p = sub.add_parser("taxonomy", help="taxonomy utilities")
    tsub = p.add_subparsers(dest="action", required=True)
    s = tsub.add_parser("stats", help="node, leaf and depth counts")
    s.add_argument("--file", help="hierarchy JSON (default: bundled full hierarchy)")
    s.add_argument("--prune", help="comma-separated subtree roots to remove first")
    s.set_defaults(func=cmd_taxonomy)

    p = sub.add_parser("record", help="record replay detections through the remote provider")
    p.add_argument("--dataset", required=True)
    p.add_argument("--endpoint", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_record)

    p = sub.add_parser("gen-synthetic", help="write a synthetic dataset with ground truth")
    p.add_argument("--out", required=True)
    p.add_argument("--objects", type=int, default=5)
    p.add_argument("--frames", type=int, default=10)
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_gen_synthetic)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_USAGE if exc.code not in (0, None) else EXIT_OK
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except UsageError as exc:
        print(f"semgraph: usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (SemgraphError, OSError, ValueError) as exc:
        print(f"semgraph: error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
