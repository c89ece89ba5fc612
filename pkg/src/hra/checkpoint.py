"""Agent snapshots as zip files.

Every checkpoint holds ``meta.json`` (config, seed, game seed, format
version) plus the binary parts of the agent:

* network fruit agents: ``net.bin`` (and ``target.bin`` when a separate target net is kept)
* ``hra+2``: ``tables.npy``
* ``hra+3``: ``gvf.bin``
* maze agents: ``gvf.bin`` (and ``gvf_ghosts.bin``), ``counts.npz``, ``memory.json``
"""
from __future__ import annotations

import io
import json
import zipfile
from pathlib import Path

import numpy as np

from .agent import HraAgent
from .errors import InvalidArgument
from .harness.config import ExperimentConfig, parse_config
from .heads import SharedTrunkNet

FORMAT = 1


def _npy_bytes(arr) -> bytes:
    buf = io.BytesIO()
    np.save(buf, arr, allow_pickle=False)
    return buf.getvalue()


def save_checkpoint(path, cfg: ExperimentConfig, agent, seed: int, game_seed=None) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    meta = {"format": FORMAT, "config": cfg.model_dump(), "seed": seed, "game_seed": game_seed}
    with zipfile.ZipFile(path, "w", zipfile.ZIP_DEFLATED) as z:
        z.writestr("meta.json", json.dumps(meta, indent=2))
        if isinstance(agent, HraAgent):
            _write_maze_agent(z, agent)
        elif hasattr(agent, "net"):
            z.writestr("net.bin", agent.net.to_bytes())
            if agent.target.period > 1:
                z.writestr("target.bin", agent.target.frozen.to_bytes())
        elif getattr(agent, "method", None) == "hra+3":
            z.writestr("gvf.bin", agent.bank.to_bytes())
        elif getattr(agent, "method", None) == "hra+2":
            z.writestr("tables.npy", _npy_bytes(agent.tables))
        else:
            raise InvalidArgument(f"cannot checkpoint {type(agent).__name__}")
    return path


def _write_maze_agent(z: zipfile.ZipFile, agent: HraAgent) -> None:
    z.writestr("gvf.bin", agent.score_bank.to_bytes())
    if agent.ghost_bank is not agent.score_bank:
        z.writestr("gvf_ghosts.bin", agent.ghost_bank.to_bytes())
    keys = sorted(agent.exploration.counts)
    counts = {
        "keys": np.array(keys, dtype=np.int64).reshape(-1, 2),
        "counts": np.array([agent.exploration.counts[k] for k in keys]).reshape(len(keys), agent.n_actions),
        "total": np.array(agent.exploration.total),
    }
    buf = io.BytesIO()
    np.savez(buf, **counts)
    z.writestr("counts.npz", buf.getvalue())
    memory = {
        "recorded": {str(k): v for k, v in agent.memory.recorded.items()},
        "pellet_heads": sorted(list(h) for h in agent.pellet_heads),
    }
    z.writestr("memory.json", json.dumps(memory))


def load_checkpoint(path):
    """Return ``(config, agent, meta)``."""
    from .harness.fruit import make_fruit_agent, make_fruit_env
    from .harness.maze import agent_settings, make_world

    with zipfile.ZipFile(path) as z:
        names = set(z.namelist())
        if "meta.json" not in names:
            raise InvalidArgument(f"{path} is not a checkpoint (no meta.json)")
        meta = json.loads(z.read("meta.json"))
        if meta.get("format") != FORMAT:
            raise InvalidArgument(f"unsupported checkpoint format {meta.get('format')}")
        cfg = parse_config(meta["config"])
        if cfg.env.kind == "maze":
            world = make_world(cfg, meta.get("game_seed") or 0)
            agent = HraAgent(agent_settings(cfg), world.maps)
            agent.score_bank.load_bytes(z.read("gvf.bin"))
            if "gvf_ghosts.bin" in names:
                agent.ghost_bank.load_bytes(z.read("gvf_ghosts.bin"))
            data = np.load(io.BytesIO(z.read("counts.npz")))
            agent.exploration.counts = {(int(m), int(s)): c.astype(float).copy()
                                        for (m, s), c in zip(data["keys"], data["counts"])}
            agent.exploration.total = int(data["total"])
            mem = json.loads(z.read("memory.json"))
            agent.memory.recorded = {int(k): list(v) for k, v in mem["recorded"].items()}
            agent.pellet_heads = {tuple(h) for h in mem["pellet_heads"]}
            return cfg, agent, meta
        env = make_fruit_env(cfg)
        agent = make_fruit_agent(env, cfg, meta["seed"])
        if "net.bin" in names:
            agent.net.set_params(SharedTrunkNet.from_bytes(z.read("net.bin")))
            if "target.bin" in names:
                agent.target.frozen.set_params(SharedTrunkNet.from_bytes(z.read("target.bin")))
            else:
                agent.target.sync()
        elif "gvf.bin" in names:
            agent.bank.load_bytes(z.read("gvf.bin"))
        elif "tables.npy" in names:
            agent.tables[...] = np.load(io.BytesIO(z.read("tables.npy")))
        return cfg, agent, meta
