"""Run many episodes in parallel with per-episode seeds derived from a root seed."""

from __future__ import annotations

import zlib
from concurrent.futures import ProcessPoolExecutor, ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .config import Config
from .metrics import EpisodeResult
from .simulator.episode import load_episode, run_episode


def episode_seed(root_seed: int, episode_id: str) -> int:
    """Stable seed for one episode: independent of batch order and worker count."""
    ss = np.random.SeedSequence([int(root_seed), zlib.crc32(episode_id.encode("utf-8"))])
    return int(ss.generate_state(1)[0])


def _run_one(args: tuple) -> dict:
    path, cfg_dict, pipeline, root_seed, mode = args
    ep = load_episode(path)
    seed = episode_seed(root_seed, ep.id)
    return run_episode(ep, Config.from_dict(cfg_dict), pipeline, seed, mode=mode).to_dict()


def run_batch(
    episode_paths: list[str | Path],
    cfg: Config | None = None,
    pipeline: str = "fused",
    jobs: int = 1,
    root_seed: int = 0,
    mode: str | None = None,
    executor: str = "process",
) -> list[EpisodeResult]:
    """Results come back in input order whatever the worker count."""
    cfg = cfg or Config()
    tasks = [(str(p), cfg.to_dict(), pipeline, root_seed, mode) for p in episode_paths]
    if jobs <= 1 or len(tasks) <= 1:
        out = [_run_one(t) for t in tasks]
    else:
        pool = ProcessPoolExecutor if executor == "process" else ThreadPoolExecutor
        with pool(max_workers=jobs) as ex:
            out = list(ex.map(_run_one, tasks))
    return [EpisodeResult.from_dict(d) for d in out]
