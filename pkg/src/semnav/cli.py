"""Command line entry point.

Exit codes: 0 success, 1 usage error, 2 runtime error.
"""

from __future__ import annotations

import argparse
import glob
import json
import logging
import sys
import time
from pathlib import Path

from . import __version__
from .batch import episode_seed, run_batch
from .belief_map import blur_features, load_grid, query, save_grid
from .config import Config, load_config
from .embedding import SyntheticEmbedder
from .errors import SemnavError
from .fusion import FusionConfig, combine, intersect
from .io import export_map
from .metrics import aggregate
from .navigator import PIPELINES, SearchAgent
from .query_pipeline import decompose, decompose_remote
from .remote import EndpointConfig
from .simulator.decoys import write_decoy_suite
from .simulator.episode import load_episode, run_episode
from .simulator.world import load_world

log = logging.getLogger("semnav")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        raise UsageError(f"{self.prog}: error: {message}")


def _slug(text: str) -> str:
    return "".join(ch if ch.isalnum() else "_" for ch in text).strip("_") or "q"


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="semnav", description="Multi-target semantic object search on a grid world.")
    p.add_argument("--version", action="version", version=f"semnav {__version__}")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="run one episode")
    r.add_argument("--episode", required=True)
    r.add_argument("--config")
    r.add_argument("--mode", choices=("multion", "realworld"))
    r.add_argument("--seed", type=int, default=0)
    r.add_argument("--pipeline", choices=PIPELINES, default="fused")
    r.add_argument("--out", required=True)

    b = sub.add_parser("batch", help="run many episodes and aggregate metrics")
    b.add_argument("--episodes", required=True, help="glob of episode files")
    b.add_argument("--jobs", type=int, default=1)
    b.add_argument("--config")
    b.add_argument("--mode", choices=("multion", "realworld"))
    b.add_argument("--seed", type=int, default=0, help="root seed")
    b.add_argument("--pipeline", choices=PIPELINES, default="fused")
    b.add_argument("--out", required=True)

    d = sub.add_parser("decompose", help="decompose a query into targets")
    d.add_argument("--text", required=True)
    d.add_argument("--remote", action="store_true", help="use the chat endpoint from LVLM_* variables")
    d.add_argument("--no-infer", action="store_true", help="skip lexicon location inference")

    q = sub.add_parser("query-map", help="render similarity maps for a saved feature grid")
    q.add_argument("--grid", required=True)
    q.add_argument("--queries", required=True, help="comma-separated labels")
    q.add_argument("--alpha", type=float, default=0.8)
    q.add_argument("--world", help="world file whose affinity built the grid's embeddings")
    q.add_argument("--blur", type=int, default=Config().blur_radius)
    q.add_argument("--out", required=True)

    g = sub.add_parser("generate", help="write seeded decoy worlds and episodes")
    g.add_argument("--n", type=int, default=10)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--mode", choices=("multion", "realworld"), default="multion")
    g.add_argument("--out", required=True)
    return p


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    ep = load_episode(args.episode)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    holder = []

    def factory(*a):
        holder.append(SearchAgent(*a))
        return holder[-1]

    traj: list[dict] = []
    result = run_episode(ep, cfg, args.pipeline, args.seed, mode=args.mode, agent_factory=factory, trajectory=traj)
    (out / "result.json").write_text(result.to_json() + "\n", encoding="utf-8")
    with open(out / "trajectory.jsonl", "w", encoding="utf-8") as fh:
        for row in traj:
            fh.write(json.dumps(row, sort_keys=True) + "\n")
    agent = holder[0]
    if agent.query_vectors:
        export_map(agent.refresh_map(force=True), out / "s_comb.pgm")
    export_map(agent.state.observed, out / "observed.pgm")
    export_map(agent.state.explored, out / "explored.pgm")
    export_map(agent.state.searched, out / "searched.pgm")
    save_grid(agent.grid, out / "grid.npz")
    meta = {"finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "version": __version__, "config": cfg.to_dict()}
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(result.to_json())
    return 0


def _cmd_batch(args) -> int:
    cfg = load_config(args.config)
    paths = sorted(glob.glob(args.episodes))
    if not paths:
        raise FileNotFoundError(f"no episode files match {args.episodes!r}")
    results = run_batch(paths, cfg, args.pipeline, args.jobs, args.seed, args.mode)
    out = Path(args.out)
    (out / "results").mkdir(parents=True, exist_ok=True)
    for r in results:
        (out / "results" / f"{r.episode_id}.json").write_text(r.to_json() + "\n", encoding="utf-8")
    report = aggregate(results)
    (out / "report.json").write_text(report.to_json() + "\n", encoding="utf-8")
    table = report.table()
    (out / "report.txt").write_text(table + "\n", encoding="utf-8")
    meta = {"finished_at": time.strftime("%Y-%m-%dT%H:%M:%S%z"), "jobs": args.jobs, "root_seed": args.seed,
            "seeds": {r.episode_id: episode_seed(args.seed, r.episode_id) for r in results}}
    (out / "meta.json").write_text(json.dumps(meta, indent=1, sort_keys=True) + "\n", encoding="utf-8")
    print(table)
    return 0


def _cmd_decompose(args) -> int:
    if args.remote:
        d = decompose_remote(args.text, EndpointConfig.from_env())
    else:
        d = decompose(args.text, infer=not args.no_infer)
    print(json.dumps(d.to_dict(), indent=1))
    return 0


def _cmd_query_map(args) -> int:
    fusion = FusionConfig(args.alpha)
    labels = [s.strip() for s in args.queries.split(",") if s.strip()]
    if not labels:
        raise UsageError("query-map: --queries needs at least one label")
    grid = load_grid(args.grid)
    affinity = load_world(args.world).affinity if args.world else None
    embedder = SyntheticEmbedder(affinity, dim=grid.dim)
    blurred = blur_features(grid, args.blur)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    maps = []
    for i, lab in enumerate(labels):
        m = query(blurred, embedder.embed_text(lab))
        m.scores[~grid.observed] = 0.0
        maps.append(m)
        export_map(m, out / f"s_{i}_{_slug(lab)}.pgm")
    export_map(intersect(maps), out / "s_int.pgm")
    export_map(combine(maps, fusion), out / "s_comb.pgm")
    return 0


def _cmd_generate(args) -> int:
    paths = write_decoy_suite(args.out, args.n, args.seed, args.mode)
    for p in paths:
        print(p)
    return 0


COMMANDS = {
    "run": _cmd_run,
    "batch": _cmd_batch,
    "decompose": _cmd_decompose,
    "query-map": _cmd_query_map,
    "generate": _cmd_generate,
}


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING, format="%(levelname)s %(message)s")
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(exc, file=sys.stderr)
        return 1
    except (SemnavError, OSError, ValueError, KeyError) as exc:
        print(f"semnav {args.command}: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
