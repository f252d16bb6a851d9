"""Command-line entry point: ``e3marl <subcommand> ...``.

Exit codes: 0 success, 1 usage error, 2 verification failure, 3 runtime abort.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import experiment as ex
from .envs.tabular import tabular_build
from .errors import (
    ArchitectureIncompatibleError,
    ConfigError,
    DivergenceError,
    E3MarlError,
    SymmetryViolationError,
)
from .marl.checkpoint import load_checkpoint
from .marl.evaluation import evaluate, zero_shot_eval
from .marl.maddpg import nav_config_for

EXIT_OK, EXIT_USAGE, EXIT_VERIFY, EXIT_RUNTIME = 0, 1, 2, 3

log = logging.getLogger("e3marl")


def _print(obj) -> None:
    print(json.dumps(obj, indent=2, sort_keys=True))


def cmd_train(args) -> int:
    exp = ex.load_config(args.config)
    if args.output:
        exp = replace(exp, output_dir=args.output)

    def progress(done, rows):
        if args.verbose:
            print(f"  episode {done}: return {rows[-1]['return']:.3f}", file=sys.stderr)

    summary = ex.run_experiment(exp, progress)
    print(f"{summary['name']}: final return {summary['final_return_mean']:.3f} "
          f"+- {summary['final_return_std']:.3f} over {len(exp.seeds)} seeds "
          f"(random {summary['baselines']['random']:.3f}, "
          f"heuristic {summary['baselines']['heuristic']:.3f})")
    print(f"artifacts: {exp.resolved_output()}")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    agent = load_checkpoint(args.checkpoint)
    nav = nav_config_for(agent.config, args.num_agents,
                         agent.nav.absolute_self_position)
    res = evaluate(agent.actor, nav, args.episodes, args.seed)
    _print({"checkpoint": str(args.checkpoint), "num_agents": nav.num_agents,
            "episodes": args.episodes, "seed": args.seed, "mean_return": res.mean_return,
            "std_return": res.std_return})
    return EXIT_OK


def verification_reports(perturb_reward: bool = False, elements: int = 100, seed: int = 0):
    from .symmetry_lab.battery import equivariance_battery
    from .symmetry_lab.tabular import verify_homomorphism_lifting, verify_theorem1_tabular

    game = tabular_build(3)
    if perturb_reward:
        game = game.with_reward(5, 3, game.R[5, 3] + 0.5)
    return [verify_theorem1_tabular(game), verify_homomorphism_lifting(game),
            equivariance_battery(elements, seed)]


def cmd_verify(args) -> int:
    try:
        reports = verification_reports(args.perturb_reward, args.elements, args.seed)
    except SymmetryViolationError as e:
        print(f"[FAIL] symmetry audit: {e}")
        for kind, s, a, g in e.violations[:10]:
            print(f"       {kind} violation at s={s}, a={a}, g={g}")
        return EXIT_VERIFY
    ok = True
    for rep in reports:
        print(rep.text())
        print()
        ok &= rep.passed
    if not ok:
        first = next(r.first_failure for r in reports if not r.passed)
        print(f"verification FAILED: {first}")
        return EXIT_VERIFY
    print("verification passed")
    return EXIT_OK


def cmd_zero_shot(args) -> int:
    agent = load_checkpoint(args.checkpoint)
    res = zero_shot_eval(agent.actor, args.num_agents, args.episodes, args.seed)
    out = {"checkpoint": str(args.checkpoint), "num_agents": args.num_agents,
           "episodes": args.episodes, "seed": args.seed, "mean_return": res.mean_return,
           "std_return": res.std_return}
    if args.reference:
        init, final = ex.reference_endpoints(args.reference)
        out.update(reference_initial=init, reference_final=final,
                   normalized_score=ex.normalized_score(res.mean_return, init, final))
    _print(out)
    return EXIT_OK


def cmd_transfer(args) -> int:
    exp = ex.load_config(args.config)
    if args.output:
        exp = replace(exp, output_dir=args.output)
    results = []
    for seed in exp.seeds:
        agent = load_checkpoint(args.checkpoint)
        if agent.config.actor_arch == "MLP" and agent.config.num_agents != exp.num_agents:
            raise ArchitectureIncompatibleError(
                "MLP actors cannot be transferred to a different number of agents")
        if agent.config.critic_arch != "SEGNN" and agent.config.num_agents != exp.num_agents:
            raise ArchitectureIncompatibleError(
                f"{agent.config.critic_arch} critic has a fixed input size")
        results.append(ex.run_seed(exp, seed, agent=agent))
    finals = np.array([r["final_return"] for r in results])
    summary = {"name": exp.name, "transfer_from": str(args.checkpoint), "per_seed": results,
               "final_return_mean": float(finals.mean()),
               "final_return_std": float(finals.std())}
    out = exp.resolved_output()
    (out / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")
    _print(summary)
    return EXIT_OK


def cmd_export_plots(args) -> int:
    for p in ex.export_plot_data(args.run_dir, args.output):
        print(p)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="e3marl",
                                description="Equivariant multi-agent actor-critic experiments")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    t = sub.add_parser("train", help="train one run per seed from a config file")
    t.add_argument("config")
    t.add_argument("--output", help="override output.dir")
    t.set_defaults(func=cmd_train)

    e = sub.add_parser("evaluate", help="greedy evaluation of a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("--episodes", type=int, default=50)
    e.add_argument("--seed", type=int, default=ex.EVAL_SEED)
    e.add_argument("--num-agents", type=int, default=None)
    e.set_defaults(func=cmd_evaluate)

    v = sub.add_parser("verify", help="run the symmetry verification suite")
    v.add_argument("--perturb-reward", action="store_true",
                   help="break the gridworld's symmetry by changing one reward entry")
    v.add_argument("--elements", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.set_defaults(func=cmd_verify)

    z = sub.add_parser("zero-shot", help="evaluate a checkpoint on a different agent count")
    z.add_argument("checkpoint")
    z.add_argument("--num-agents", type=int, required=True)
    z.add_argument("--episodes", type=int, default=50)
    z.add_argument("--seed", type=int, default=ex.EVAL_SEED)
    z.add_argument("--reference", help="run directory whose first/last returns map to 0/1")
    z.set_defaults(func=cmd_zero_shot)

    tr = sub.add_parser("transfer", help="continue training a checkpoint under a new config")
    tr.add_argument("checkpoint")
    tr.add_argument("config")
    tr.add_argument("--output")
    tr.set_defaults(func=cmd_transfer)

    x = sub.add_parser("export-plots", help="aggregate metric CSVs across seeds")
    x.add_argument("run_dir")
    x.add_argument("--output")
    x.set_defaults(func=cmd_export_plots)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return EXIT_OK if e.code == 0 else EXIT_USAGE
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as e:
        print(f"config error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except FileNotFoundError as e:
        print(f"file not found: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ArchitectureIncompatibleError as e:
        print(f"architecture incompatible: {e}", file=sys.stderr)
        return EXIT_USAGE
    except DivergenceError as e:
        print(f"training aborted: {e} (artifacts so far are kept)", file=sys.stderr)
        return EXIT_RUNTIME
    except E3MarlError as e:
        print(f"error: {e}", file=sys.stderr)
        return EXIT_RUNTIME


def main_exit() -> None:
    sys.exit(main())


if __name__ == "__main__":
    main_exit()
