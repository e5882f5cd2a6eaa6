"""Command-line entry point.

Exit codes: 0 success, 1 configuration error, 2 runtime failure,
3 acceptance-check failure (``verify``).
"""
from __future__ import annotations

import argparse
import csv
import sys
from pathlib import Path

from .agent import AgentError, DdpgAgent, train
from .baselines import GridSpec, OracleError, export_oracle_csv, grid_oracle_solve, mandatory_selection_variant
from .channel import ChannelDomainError
from .config import PHASES, ConfigError, SystemConfig, dump_config, load_config
from .env import EnvDomainError, SemComEnv
from .harness import (
    POLICIES,
    HarnessError,
    SweepResult,
    emit_csv,
    emit_plotdata,
    emit_runs_csv,
    eval_seeds,
    evaluate_policy,
    greedy_policy,
    random_policy,
    run_power_sweep,
    run_user_sweep,
)

EXIT_OK, EXIT_CONFIG, EXIT_RUNTIME, EXIT_CHECK = 0, 1, 2, 3
RUNTIME_ERRORS = (AgentError, OracleError, HarnessError, EnvDomainError, ChannelDomainError,
                  FloatingPointError, OSError)


def _floats(text: str) -> list:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise ConfigError(f"--values: expected comma-separated numbers, got {text!r}") from None


def _config(args) -> SystemConfig:
    cfg = load_config(args.config) if args.config else SystemConfig()
    changes = {}
    if args.seed is not None:
        changes["seed"] = args.seed
    if args.phase is not None:
        changes["phase"] = args.phase
    return cfg.replace(**changes) if changes else cfg


def _outdir(args) -> Path:
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def _log(quiet: bool):
    def progress(m):
        if not quiet and (m.episode % 10 == 0 or not m.warmup and m.episode == 0):
            tag = "warmup" if m.warmup else "train"
            print(f"episode {m.episode:4d} [{tag}] reward {m.mean_reward:.4g} energy {m.mean_energy_J:.4g} J "
                  f"violation {m.violation_rate:.3f}", file=sys.stderr)
    return progress


def _write_sweep(result: SweepResult, out: Path, stem: str):
    emit_csv(result, out / f"{stem}.csv")
    emit_runs_csv(result, out / f"{stem}_runs.csv")
    emit_plotdata(result, out / f"{stem}.dat")
    for i, x in enumerate(result.axis_values):
        print(f"{result.axis_name}={x:g}: energy {result.mean['energy_J'][i]:.4g} +- {result.std['energy_J'][i]:.2g} J, "
              f"delay {result.mean['delay_s'][i]:.4g} s, violation {result.mean['violation_rate'][i]:.3f}")


def cmd_train(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    (out / "config.yaml").write_text(dump_config(cfg))
    result = train(cfg, seed=cfg.seed, progress=_log(args.quiet))
    path = out / "agent.json"
    result.agent.save(path, metadata={"config_hash": cfg.digest()})
    with (out / "train_metrics.csv").open("w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("episode", "warmup", "reward", "energy_J", "delay_s", "penalty", "violation_rate",
                    "mean_selected", "critic_loss", "actor_objective"))
        for m in result.metrics:
            w.writerow((m.episode, int(m.warmup), repr(m.mean_reward), repr(m.mean_energy_J), repr(m.mean_delay_s),
                        repr(m.mean_penalty), repr(m.violation_rate), repr(m.mean_selected),
                        repr(m.critic_loss), repr(m.actor_objective)))
    print(f"saved {path} (config {cfg.digest()})")
    return EXIT_OK


def cmd_evaluate(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    if args.agent:
        policy = greedy_policy(DdpgAgent.load(args.agent))
    elif args.policy == "random":
        policy = random_policy(cfg.seed)
    else:
        raise ConfigError("evaluate needs --agent CHECKPOINT or --policy random")
    runs = evaluate_policy(cfg, policy, eval_seeds(cfg.seed, args.runs))
    result = SweepResult.from_runs("users", [cfg.users], [runs], [cfg.digest()])
    _write_sweep(result, out, "evaluate")
    return EXIT_OK


def cmd_sweep_power(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    values = _floats(args.values)
    agents = {v: DdpgAgent.load(args.agent) for v in values} if args.agent else None
    result = run_power_sweep(cfg, values, runs=args.runs, policy=args.policy, seed=cfg.seed, agents=agents,
                             progress=_log(args.quiet))
    _write_sweep(result, out, f"sweep_power_{args.policy}")
    return EXIT_OK


def cmd_sweep_users(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    values = [int(v) for v in _floats(args.values)]
    result = run_user_sweep(cfg, values, runs=args.runs, policy=args.policy, seed=cfg.seed,
                            progress=_log(args.quiet))
    _write_sweep(result, out, f"sweep_users_{args.policy}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    cfg = _config(args)
    out = _outdir(args)
    env = SemComEnv(cfg)
    spec = GridSpec.default(cfg.users, cfg.radio.power_cap_Pmax, env.table)
    min_sel = cfg.users if args.min_selected is None else args.min_selected
    if min_sel > 0:
        spec = mandatory_selection_variant(spec, min_sel)
    env.reset(seed=[cfg.seed, 7, 0])
    results = []
    for _ in range(args.steps):
        results.append(grid_oracle_solve(env, env.state.gains, spec))
        env.advance()
    path = export_oracle_csv(results, out / "oracle.csv")
    feasible = [r for r in results if r.feasible]
    mean = sum(r.energy_J for r in feasible) / len(feasible) if feasible else float("inf")
    print(f"{len(feasible)}/{len(results)} states solvable; mean optimal energy {mean:.4g} J; wrote {path}")
    return EXIT_OK


def cmd_verify(args) -> int:
    from .checks import run_check, run_checks

    results = [run_check(n) for n in args.only] if args.only else run_checks(full=args.full)
    for r in results:
        print(r.line())
    return EXIT_OK if all(r.passed and r.within_budget for r in results) else EXIT_CHECK


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="semcom-alloc", description="Energy-aware semantic-communication resource allocation.")
    sub = p.add_subparsers(dest="command", required=True)

    def common(sp, out_default):
        sp.add_argument("--config", help="YAML scenario file (defaults when omitted)")
        sp.add_argument("--seed", type=int, help="override the config seed")
        sp.add_argument("--phase", choices=PHASES, help="override the config phase")
        sp.add_argument("--out", default=out_default, help="output directory")
        sp.add_argument("--quiet", action="store_true", help="suppress per-episode progress")

    sp = sub.add_parser("train", help="train a DDPG agent and save a checkpoint")
    common(sp, "runs/train")
    sp.set_defaults(func=cmd_train)

    sp = sub.add_parser("evaluate", help="evaluate a checkpoint or the random baseline")
    common(sp, "runs/evaluate")
    sp.add_argument("--agent", help="agent checkpoint (JSON)")
    sp.add_argument("--policy", choices=POLICIES, default="agent")
    sp.add_argument("--runs", type=int, default=10)
    sp.set_defaults(func=cmd_evaluate)

    for name, func, default in (("sweep-power", cmd_sweep_power, "0,5,10,15"),
                                ("sweep-users", cmd_sweep_users, "4,6,8,10")):
        sp = sub.add_parser(name, help=f"{name.split('-')[1]} sweep; trains one agent per point unless --agent is given")
        common(sp, "runs/" + name.replace("-", "_"))
        sp.add_argument("--values", default=default, help="comma-separated axis values")
        sp.add_argument("--runs", type=int, default=10)
        sp.add_argument("--policy", choices=POLICIES, default="agent")
        if name == "sweep-power":
            sp.add_argument("--agent", help="evaluate this checkpoint at every point instead of training")
        sp.set_defaults(func=func)

    sp = sub.add_parser("oracle", help="grid-search optimum per step (U <= 3)")
    common(sp, "runs/oracle")
    sp.add_argument("--steps", type=int, default=20)
    sp.add_argument("--min-selected", type=int, default=None, help="default: every user must transmit")
    sp.set_defaults(func=cmd_oracle)

    sp = sub.add_parser("verify", help="run the acceptance checks")
    sp.add_argument("--full", action="store_true", help="include the training-based checks (minutes)")
    sp.add_argument("--only", type=int, nargs="+", metavar="N", help="run just these check numbers")
    sp.set_defaults(func=cmd_verify)
    return p


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except RUNTIME_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
