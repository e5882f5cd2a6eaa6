"""Seeded sweeps over P_max and U, metric aggregation and CSV / plot-data output.

Delay is the bottleneck time of a step (max over selected users), averaged
over the steps of a run. Energy is reported in joules and in dBJ.
"""
from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agent import CheckpointError, DdpgAgent, train
from .config import SystemConfig
from .distortion import make_rng
from .env import SemComEnv

METRICS = ("energy_J", "energy_dBJ", "delay_s", "reward", "violation_rate")
CSV_HEADER = ("axis", "metric", "mean", "std", "runs")
RUNS_HEADER = ("axis", "run", "config_hash", *METRICS)
POLICIES = ("agent", "random")

# seed-stream tags, kept distinct from the ones train() uses
_EVAL_STREAM = 7
_RANDOM_STREAM = 8
_PROBE_STREAM = 9


class HarnessError(RuntimeError):
    pass


@dataclass
class RunMetrics:
    energy_J: float
    delay_s: float
    reward: float
    violation_rate: float

    @property
    def energy_dBJ(self) -> float:
        return 10.0 * math.log10(self.energy_J) if self.energy_J > 0 else -math.inf

    def value(self, metric: str) -> float:
        return float(getattr(self, metric))


@dataclass
class SweepResult:
    axis_name: str
    axis_values: list
    runs: int
    mean: dict = field(default_factory=dict)  # metric -> list over axis
    std: dict = field(default_factory=dict)
    per_run: list = field(default_factory=list)  # per axis point: list of RunMetrics
    config_hashes: list = field(default_factory=list)

    @classmethod
    def from_runs(cls, axis_name: str, axis_values, per_run, config_hashes=None) -> "SweepResult":
        if not per_run or any(len(r) < 1 for r in per_run):
            raise HarnessError("every sweep point needs at least one run")
        counts = {len(r) for r in per_run}
        if len(counts) != 1:
            raise HarnessError("sweep points differ in run count")
        out = cls(axis_name, list(axis_values), counts.pop(), per_run=per_run,
                  config_hashes=list(config_hashes or [""] * len(per_run)))
        for m in METRICS:
            vals = [np.array([r.value(m) for r in runs]) for runs in per_run]
            # a zero-energy run has -inf dBJ; its std is reported as nan
            with np.errstate(invalid="ignore"):
                out.mean[m] = [float(np.mean(v)) for v in vals]
                out.std[m] = [float(np.std(v)) for v in vals]
        return out

    def pooled_std(self, metric: str, i: int, j: int) -> float:
        return math.sqrt(0.5 * (self.std[metric][i] ** 2 + self.std[metric][j] ** 2))


def evaluate_policy(config: SystemConfig, policy, episode_seeds, phase: str | None = None) -> list:
    """One RunMetrics per seeded episode. ``policy(env, episode_index) -> raw action``."""
    env = SemComEnv(config)
    out = []
    for k, seed in enumerate(episode_seeds):
        env.reset(seed=seed)
        acc = np.zeros(4)
        T = config.ddpg.steps_per_episode
        for _ in range(T):
            o = env.step(policy(env, k), phase)
            acc += (o.energy_J, o.time_s, o.reward, float(o.constraint_violated))
        out.append(RunMetrics(*(acc / T).tolist()))
    return out


def greedy_policy(agent: DdpgAgent):
    return lambda env, k: agent.act(env.observe())


def random_policy(seed):
    rngs = {}

    def act(env, k):
        if k not in rngs:
            rngs[k] = make_rng([seed, _RANDOM_STREAM, k])
        return rngs[k].standard_normal(env.action_dim)

    return act


def eval_seeds(seed: int, runs: int) -> list:
    return [[seed, _EVAL_STREAM, r] for r in range(runs)]


def _policy_for(config: SystemConfig, policy: str, seed: int, agent: DdpgAgent | None, progress=None):
    if policy == "random":
        return random_policy(seed)
    if policy != "agent":
        raise HarnessError(f"policy must be one of {POLICIES}")
    if agent is None:
        agent = train(config, seed=seed, progress=progress).agent
    return greedy_policy(agent)


def run_power_sweep(config: SystemConfig, dbm_values, runs: int = 10, policy: str = "agent", seed: int = 0,
                    agents: dict | None = None, phase: str | None = None, progress=None) -> SweepResult:
    """Evaluate a policy at each P_max; an agent is trained per point unless supplied in ``agents``."""
    if runs < 1:
        raise HarnessError("runs must be >= 1")
    per_run, hashes = [], []
    for dbm in dbm_values:
        cfg = config.with_power(dbm)
        agent = (agents or {}).get(dbm)
        act = _policy_for(cfg, policy, seed, agent, progress)
        per_run.append(evaluate_policy(cfg, act, eval_seeds(seed, runs), phase))
        hashes.append(cfg.digest())
    return SweepResult.from_runs("power_max_dBm", [float(v) for v in dbm_values], per_run, hashes)


def run_user_sweep(config: SystemConfig, user_counts, runs: int = 10, policy: str = "agent", seed: int = 0,
                   agents: dict | None = None, phase: str | None = None, progress=None) -> SweepResult:
    """Same as the power sweep with U varying; per-user data counts reset to uniform."""
    if runs < 1:
        raise HarnessError("runs must be >= 1")
    per_run, hashes = [], []
    for U in user_counts:
        cfg = config.replace(users=int(U), data_counts=None, min_selected=min(config.min_selected, int(U)))
        agent = (agents or {}).get(U)
        act = _policy_for(cfg, policy, seed, agent, progress)
        per_run.append(evaluate_policy(cfg, act, eval_seeds(seed, runs), phase))
        hashes.append(cfg.digest())
    return SweepResult.from_runs("users", [int(u) for u in user_counts], per_run, hashes)


# -- output -----------------------------------------------------------------

def _fmt(v) -> str:
    return repr(float(v)) if not isinstance(v, (int, np.integer)) else str(int(v))


def csv_text(result: SweepResult) -> str:
    if not result.axis_values:
        raise HarnessError("empty sweep result")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_HEADER)
    for i, x in enumerate(result.axis_values):
        for m in METRICS:
            w.writerow((_fmt(x), m, _fmt(result.mean[m][i]), _fmt(result.std[m][i]), str(result.runs)))
    return buf.getvalue()


def emit_csv(result: SweepResult, path) -> Path:
    path = Path(path)
    path.write_text(csv_text(result))
    return path


def emit_runs_csv(result: SweepResult, path) -> Path:
    """Per-run log with the effective config hash of each point (provenance)."""
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(RUNS_HEADER)
    for x, h, runs in zip(result.axis_values, result.config_hashes, result.per_run):
        for k, r in enumerate(runs):
            w.writerow((_fmt(x), k, h, *(_fmt(r.value(m)) for m in METRICS)))
    path = Path(path)
    path.write_text(buf.getvalue())
    return path


def emit_plotdata(result: SweepResult, path) -> Path:
    """Whitespace-separated columns with a '#' header; loads with numpy.loadtxt or gnuplot."""
    if not result.axis_values:
        raise HarnessError("empty sweep result")
    cols = [result.axis_name] + [f"{m}_{s}" for m in METRICS for s in ("mean", "std")]
    lines = [f"# runs={result.runs}; delay_s = per-step max over selected users, averaged over steps",
             "# " + " ".join(cols)]
    for i, x in enumerate(result.axis_values):
        vals = [_fmt(x)] + [_fmt(getattr(result, s)[m][i]) for m in METRICS for s in ("mean", "std")]
        lines.append(" ".join(vals))
    path = Path(path)
    path.write_text("\n".join(lines) + "\n")
    return path


def read_csv(path) -> SweepResult:
    """Parse an ``emit_csv`` file back into means and stds (per-run logs are not recovered)."""
    with Path(path).open(newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != CSV_HEADER:
        raise HarnessError(f"{path}: unexpected header")
    axis, mean, std, runs = [], {m: [] for m in METRICS}, {m: [] for m in METRICS}, set()
    for x, m, mu, sd, n in rows[1:]:
        xv = float(x)
        if not axis or axis[-1] != xv:
            axis.append(xv)
        mean[m].append(float(mu))
        std[m].append(float(sd))
        runs.add(int(n))
    if len(runs) != 1:
        raise HarnessError(f"{path}: inconsistent run counts")
    return SweepResult("axis", axis, runs.pop(), mean, std)


def checkpoint_roundtrip(agent: DdpgAgent, path, probes: int = 100, seed: int = 0) -> DdpgAgent:
    """Save, reload and require bit-identical greedy actions on random probe states."""
    agent.save(path)
    loaded = DdpgAgent.load(path)
    states = make_rng([seed, _PROBE_STREAM]).standard_normal((probes, agent.state_dim))
    if not np.array_equal(agent.act(states), loaded.act(states)):
        raise CheckpointError("reloaded agent acts differently from the saved one")
    return loaded
