"""Declarative experiment configs and multi-seed orchestration.

Config files are flat ``key = value`` lines with dotted keys, ``#`` comments::

    env.name = navigation
    env.num_agents = 3
    arch.critic = SEGNN
    arch.actor = SEGNN
    seeds = 0, 1, 2
    output.dir = runs/nav3
    train.episodes = 2000
    graph.edge_mode = complete
"""
from __future__ import annotations

import csv
import json
import os
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError
from .graph_builder import GraphConfig
from .marl.checkpoint import save_checkpoint
from .marl.config import TrainingConfig
from .marl.evaluation import evaluate, evaluate_policy, evaluate_random
from .marl.maddpg import MADDPG, maddpg_train, nav_config_for
from .marl.policies import heuristic_policy

OUTPUT_ROOT_ENV = "E3MARL_OUTPUT_ROOT"
REQUIRED = ("env.name", "env.num_agents", "arch.critic", "arch.actor", "seeds", "output.dir")
EVAL_SEED = 10_000


@dataclass(frozen=True)
class ExperimentConfig:
    env_name: str
    num_agents: int
    critic_arch: str
    actor_arch: str
    seeds: tuple[int, ...]
    output_dir: str
    training: TrainingConfig = field(default_factory=TrainingConfig)
    graph: GraphConfig = field(default_factory=GraphConfig)
    eval_episodes: int = 50
    absolute_position: bool = False

    @property
    def name(self) -> str:
        return f"[{self.critic_arch}, {self.actor_arch}]"

    def training_for(self, seed: int) -> TrainingConfig:
        return replace(self.training, seed=seed)

    def resolved_output(self) -> Path:
        out = Path(self.output_dir)
        root = os.environ.get(OUTPUT_ROOT_ENV)
        if root and not out.is_absolute():
            out = Path(root) / out
        return out


def _convert(key: str, raw: str, typ):
    try:
        if typ in (bool, "bool"):
            low = raw.lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        if typ in (int, "int"):
            return int(raw)
        if typ in (float, "float"):
            return float(raw)
        return raw
    except ValueError:
        raise ConfigError(f"cannot parse {raw!r} as {getattr(typ, '__name__', typ)}", key) from None


def parse_config_text(text: str) -> ExperimentConfig:
    values: dict[str, str] = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, raw = (p.strip() for p in line.split("=", 1))
        if key in values:
            raise ConfigError(f"line {lineno}: duplicate key", key)
        values[key] = raw
    for key in REQUIRED:
        if key not in values:
            raise ConfigError("required field is missing", key)

    train_types = {f.name: f.type for f in fields(TrainingConfig)}
    graph_types = {f.name: f.type for f in fields(GraphConfig)}
    train_kw, graph_kw = {}, {}
    extra = {"eval.episodes": ("eval_episodes", "int"),
             "env.absolute_position": ("absolute_position", "bool")}
    top = {}
    for key, raw in values.items():
        if key in REQUIRED:
            continue
        section, _, name = key.partition(".")
        if section == "train" and name in train_types:
            if name in ("num_agents", "critic_arch", "actor_arch", "seed"):
                raise ConfigError("set this through env.*, arch.* or seeds instead", key)
            train_kw[name] = _convert(key, raw, train_types[name])
        elif section == "graph" and name in graph_types:
            graph_kw[name] = _convert(key, raw, graph_types[name])
        elif key in extra:
            attr, typ = extra[key]
            top[attr] = _convert(key, raw, typ)
        else:
            raise ConfigError("unknown field", key)

    env_name = values["env.name"].lower()
    if env_name != "navigation":
        raise ConfigError(f"only 'navigation' is supported, got {env_name!r}", "env.name")
    num_agents = _convert("env.num_agents", values["env.num_agents"], "int")
    try:
        seeds = tuple(int(x) for x in values["seeds"].replace(",", " ").split())
    except ValueError:
        raise ConfigError(f"seeds must be integers, got {values['seeds']!r}", "seeds") from None
    if not seeds:
        raise ConfigError("at least one seed is required", "seeds")
    if len(set(seeds)) != len(seeds):
        raise ConfigError("seeds must be distinct", "seeds")
    critic, actor = values["arch.critic"].upper(), values["arch.actor"].upper()
    try:
        training = TrainingConfig(num_agents=num_agents, critic_arch=critic, actor_arch=actor,
                                  **train_kw)
    except ConfigError as e:
        prefix = {"critic_arch": "arch.critic", "actor_arch": "arch.actor",
                  "num_agents": "env.num_agents"}.get(e.field, f"train.{e.field}")
        raise ConfigError(str(e).split(": ", 1)[-1], prefix) from None
    try:
        graph = GraphConfig(**graph_kw)
    except ValueError as e:
        raise ConfigError(str(e), "graph") from None
    return ExperimentConfig(env_name, num_agents, critic, actor, seeds, values["output.dir"],
                            training, graph, **top)


def load_config(path) -> ExperimentConfig:
    p = Path(path)
    if not p.is_file():
        raise FileNotFoundError(f"config file {p} does not exist")
    return parse_config_text(p.read_text())


def seed_dir(out: Path, seed: int) -> Path:
    return out / f"seed_{seed}"


def baseline_returns(num_agents: int, episodes: int, seed: int = EVAL_SEED) -> dict:
    nav = nav_config_for(TrainingConfig(num_agents=num_agents))
    return {"random": evaluate_random(nav, episodes, seed).mean_return,
            "heuristic": evaluate_policy(heuristic_policy(nav.max_action), nav, episodes,
                                         seed).mean_return}


def run_seed(exp: ExperimentConfig, seed: int, agent: MADDPG | None = None,
             progress=None) -> dict:
    """Train one seed, checkpoint it, and evaluate greedily on the shared eval seeds."""
    out = seed_dir(exp.resolved_output(), seed)
    cfg = exp.training_for(seed)
    res = maddpg_train(cfg, out, agent=agent, absolute_position=exp.absolute_position,
                       graph=exp.graph, progress=progress)
    nav = res.agent.nav
    ev = evaluate(res.actor, nav, exp.eval_episodes, EVAL_SEED)
    summary = {"seed": seed, "final_return": ev.mean_return,
               "final_return_std": ev.std_return, "episodes": cfg.episodes}
    save_checkpoint(res.agent, out, {"final_eval": summary, "name": exp.name})
    return summary


def run_experiment(exp: ExperimentConfig, progress=None) -> dict:
    out = exp.resolved_output()
    out.mkdir(parents=True, exist_ok=True)
    per_seed = [run_seed(exp, s, progress=progress) for s in exp.seeds]
    finals = np.array([r["final_return"] for r in per_seed])
    summary = {
        "name": exp.name,
        "num_agents": exp.num_agents,
        "seeds": list(exp.seeds),
        "per_seed": per_seed,
        "final_return_mean": float(finals.mean()),
        "final_return_std": float(finals.std()),
        "final_return_median": float(np.median(finals)),
        "baselines": baseline_returns(exp.num_agents, exp.eval_episodes),
        "eval_episodes": exp.eval_episodes,
        "eval_seed": EVAL_SEED,
        "training": asdict(exp.training),
        "graph": asdict(exp.graph),
    }
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    return summary


# ---------------------------------------------------------------------------
# plot data and normalization

def _read_csv(path: Path) -> tuple[list[str], np.ndarray]:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    header = rows[0]
    data = np.array([[float(x) if x != "" else np.nan for x in r] for r in rows[1:]],
                    dtype=np.float64).reshape(-1, len(header))
    return header, data


def seed_dirs(run_dir) -> list[Path]:
    run = Path(run_dir)
    dirs = sorted(p for p in run.glob("seed_*") if (p / "metrics.csv").is_file())
    if not dirs and (run / "metrics.csv").is_file():
        dirs = [run]
    return dirs


def _aggregate(tables: list[np.ndarray], header: list[str], key: str) -> tuple[list[str], np.ndarray]:
    """Mean and std across seeds for every column, aligned on ``key``."""
    keys = sorted(set.intersection(*(set(t[:, header.index(key)].tolist()) for t in tables)))
    cols = [c for c in header if c != key]
    out_header = [key] + [f"{c}_{s}" for c in cols for s in ("mean", "std")] + ["num_seeds"]
    rows = []
    for k in keys:
        stack = np.stack([t[t[:, header.index(key)] == k][0] for t in tables])
        row = [k]
        for c in cols:
            col = stack[:, header.index(c)]
            finite = col[np.isfinite(col)]
            row += ([float(np.mean(finite)), float(np.std(finite))] if finite.size
                    else [np.nan, np.nan])
        rows.append(row + [len(tables)])
    return out_header, np.array(rows, dtype=np.float64).reshape(-1, len(out_header))


def _write_table(path: Path, header, data) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in data:
            w.writerow(["" if not np.isfinite(x) else (str(int(x)) if h in ("episode", "num_seeds")
                                                         else repr(float(x)))
                        for h, x in zip(header, r)])


def export_plot_data(run_dir, out_dir=None) -> list[Path]:
    """Aggregate per-seed CSVs into learning-curve and invariancy series (mean, std)."""
    dirs = seed_dirs(run_dir)
    if not dirs:
        raise FileNotFoundError(f"no metric CSVs under {run_dir}")
    out = Path(out_dir) if out_dir is not None else Path(run_dir) / "plots"
    out.mkdir(parents=True, exist_ok=True)
    written = []
    header, _ = _read_csv(dirs[0] / "metrics.csv")
    tables = [_read_csv(d / "metrics.csv")[1] for d in dirs]
    h, data = _aggregate(tables, header, "episode")
    _write_table(out / "learning_curve.csv", h, data)
    written.append(out / "learning_curve.csv")
    inv = [d / "invariancy.csv" for d in dirs if (d / "invariancy.csv").is_file()]
    if len(inv) == len(dirs):
        ih, _ = _read_csv(inv[0])
        itables = [_read_csv(p)[1] for p in inv]
        if all(len(t) for t in itables):
            h, data = _aggregate(itables, ih, "episode")
            _write_table(out / "invariancy.csv", h, data)
            written.append(out / "invariancy.csv")
    return written


def reference_endpoints(reference_dir, window: float = 0.05) -> tuple[float, float]:
    """Initial and final performance of a reference run (mean over seeds and a window)."""
    dirs = seed_dirs(reference_dir)
    if not dirs:
        raise FileNotFoundError(f"no metric CSVs under {reference_dir}")
    firsts, lasts = [], []
    for d in dirs:
        header, data = _read_csv(d / "metrics.csv")
        ret = data[:, header.index("return")]
        w = max(1, int(round(window * len(ret))))
        firsts.append(np.mean(ret[:w]))
        lasts.append(np.mean(ret[-w:]))
    return float(np.mean(firsts)), float(np.mean(lasts))


def normalized_score(value: float, initial: float, final: float) -> float:
    """Affine map sending ``initial`` to 0 and ``final`` to 1."""
    if final == initial:
        raise ValueError("reference endpoints coincide; normalization is undefined")
    return (value - initial) / (final - initial)
