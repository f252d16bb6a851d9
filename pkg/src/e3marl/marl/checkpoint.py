"""Checkpoint directories: one .npz parameter map per network plus run.json."""
from __future__ import annotations

import json
from dataclasses import asdict
from pathlib import Path

from ..graph_builder import GraphConfig
from .config import TrainingConfig
from .maddpg import MADDPG

NETWORKS = ("actor", "critic", "target_actor", "target_critic")


def save_checkpoint(agent: MADDPG, directory, extra: dict | None = None) -> Path:
    d = Path(directory)
    d.mkdir(parents=True, exist_ok=True)
    for name in NETWORKS:
        getattr(agent, name).save(d / f"{name}.npz")
    meta = {"training": asdict(agent.config), "graph": asdict(agent.graph),
            "absolute_position": agent.nav.absolute_self_position}
    if extra:
        meta.update(extra)
    (d / "run.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return d


def load_checkpoint(directory) -> MADDPG:
    d = Path(directory)
    meta_path = d / "run.json"
    if not meta_path.is_file():
        raise FileNotFoundError(f"no checkpoint at {d} (missing run.json)")
    meta = json.loads(meta_path.read_text())
    cfg = TrainingConfig(**meta["training"])
    agent = MADDPG(cfg, absolute_position=meta.get("absolute_position", False),
                   graph=GraphConfig(**meta["graph"]))
    for name in NETWORKS:
        path = d / f"{name}.npz"
        if not path.is_file():
            raise FileNotFoundError(f"checkpoint file {path} is missing")
        getattr(agent, name).load(path)
    return agent
