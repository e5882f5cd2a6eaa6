"""Episodic resource-allocation environment.

State: per-user channel gains. Action: per-user raw logits
(selection, power, compression, bandwidth) squashed into a feasible
allocation. Reward: -(energy / energy_reference) - lambda * penalty, where the
penalty is the hinge on the phase's distortion-resilience bound.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit

from .channel import achievable_rate, channel_gain, link_time_energy
from .compression import CompressionTable, default_table
from .config import PHASES, SystemConfig
from .distortion import (
    AiTaskConstants,
    DistortionBudget,
    DistortionDomainError,
    inference_gap_bound,
    make_rng,
    pool_users,
    training_gap_bound,
)

ACTION_FIELDS = ("beta", "power", "compress", "bandwidth")


class EnvDomainError(ValueError):
    pass


@dataclass(frozen=True)
class EnvState:
    gains: np.ndarray
    timestep: int = 0


@dataclass(frozen=True)
class ResourceAction:
    selected: np.ndarray  # int {0,1}
    power: np.ndarray  # W
    compression: np.ndarray  # o in (0, 1]
    bandwidth: np.ndarray  # Hz

    @property
    def users(self) -> int:
        return len(self.selected)


@dataclass
class StepOutcome:
    next_state: EnvState | None
    reward: float
    energy_J: float
    time_s: float
    penalty: float
    budget: DistortionBudget
    constraint_violated: bool
    energy_scaled: float = 0.0
    bound: float = 0.0
    infeasible: bool = False
    empty_pool: bool = False
    action: ResourceAction | None = None
    user_energy: np.ndarray = field(default=None, repr=False)
    user_time: np.ndarray = field(default=None, repr=False)


def as_raw_matrix(raw, users: int) -> np.ndarray:
    """Raw action as a (users, 4) array; accepts the flat actor output too."""
    a = np.asarray(raw, dtype=float)
    if a.size != 4 * users:
        raise EnvDomainError(f"raw action needs {4 * users} values, got {a.size}")
    a = a.reshape(users, 4)
    if not np.all(np.isfinite(a)):
        raise EnvDomainError("raw action contains non-finite values")
    return a


def squash_action(raw, users: int, power_max: float, bandwidth_max: float, o_min: float,
                  min_selected: int = 0) -> ResourceAction:
    """Map unconstrained logits onto the feasible set.

    beta = [sigmoid >= 0.5] (top-scoring users are forced in up to
    ``min_selected``); P = P_max * sigmoid; o = o_min + (1 - o_min) * sigmoid;
    B = B_max * softmax over selected users, zero for the rest.
    """
    a = as_raw_matrix(raw, users)
    selected = (a[:, 0] >= 0.0).astype(int)
    if selected.sum() < min_selected:
        order = np.argsort(-a[:, 0], kind="stable")
        selected[order[:min_selected]] = 1
    power = power_max * expit(a[:, 1])
    compression = np.minimum(o_min + (1.0 - o_min) * expit(a[:, 2]), 1.0)
    bandwidth = np.zeros(users)
    mask = selected.astype(bool)
    if mask.any():
        z = a[mask, 3]
        share = np.exp(z - z.max())
        share /= share.sum()
        # renormalise so the float sum cannot creep above 1
        share = share / max(share.sum(), 1.0)
        bandwidth[mask] = bandwidth_max * share
        while bandwidth.sum() > bandwidth_max:
            bandwidth *= 1.0 - 1e-15
    return ResourceAction(selected, power, compression, bandwidth)


def is_feasible(action: ResourceAction, power_max: float, bandwidth_max: float) -> bool:
    """Explicit constraints: B >= 0, sum beta*B <= B_max, 0 <= P <= P_max, 0 < o <= 1, beta in {0,1}."""
    s, P, o, B = action.selected, action.power, action.compression, action.bandwidth
    # the range comparisons are False for nan, and inf bandwidth fails the sum cap
    ok = ((s == 0) | (s == 1)) & (B >= 0) & (P >= 0) & (P <= power_max) & (o > 0) & (o <= 1)
    return bool(ok.all()) and float(np.sum(s * B)) <= bandwidth_max


def training_penalty(budget: DistortionBudget, constants: AiTaskConstants, epsilon_learn: float) -> float:
    """Hinge on the per-round training-gap bound (no N factor)."""
    L = constants.lipschitz_L
    bound = constants.descent_coefficient * (L * budget.total_std) ** 2
    return max(bound - epsilon_learn, 0.0)


def inference_penalty(budget: DistortionBudget, constants: AiTaskConstants, epsilon_inf: float) -> float:
    if budget.total_variance == 0.0:
        return 0.0
    bound = inference_gap_bound(constants.posterior_confidence, constants.decision_boundary_W, budget.total_std)
    return max(bound - epsilon_inf, 0.0)


def phase_bound(variance: float, constants: AiTaskConstants, phase: str) -> float:
    """Per-step resilience bound at pooled variance ``variance``."""
    if phase == "training":
        return constants.descent_coefficient * constants.lipschitz_L ** 2 * variance
    if variance == 0.0:
        return 0.0
    return inference_gap_bound(constants.posterior_confidence, constants.decision_boundary_W, math.sqrt(variance))


def phase_bound_array(variance, constants: AiTaskConstants, phase: str):
    """Vectorised ``phase_bound``."""
    v = np.asarray(variance, dtype=float)
    if phase == "training":
        return constants.descent_coefficient * constants.lipschitz_L ** 2 * v
    W, p = constants.decision_boundary_W, constants.posterior_confidence
    with np.errstate(divide="ignore", invalid="ignore"):
        std = np.sqrt(v)
        out = p * np.exp(-(W / (2.0 * std)) ** 2) / (math.sqrt(2.0 * math.pi) * std)
    return np.where(v > 0, out, 0.0)


class SemComEnv:
    """One scenario instance; single owner, stepped sequentially."""

    def __init__(self, config: SystemConfig, table: CompressionTable | None = None):
        self.config = config
        if table is None:
            table = CompressionTable.from_file(config.compression_table) if config.compression_table else default_table()
        self.table = table
        self.users = config.users
        self.o_min = table.min_o
        self.radio = config.radio
        self.data_counts = np.asarray(config.user_data_counts, dtype=float)
        self.model_variance = np.full(self.users, config.model_variance)
        self.data_variance = np.full(self.users, config.data_variance)
        self.rng = make_rng(config.seed)
        self.distances = None
        self.shadow_db = None
        self.state = None
        self._worst = {}
        # log10 gain at the mean user distance; centres the observation features
        mean_d = max(0.3826 * config.region_side_km, config.min_distance_km)
        self._log_gain_ref = math.log10(channel_gain(mean_d, 1.0, 0.0, config.gain_mode))

    @property
    def state_dim(self) -> int:
        return self.users

    @property
    def action_dim(self) -> int:
        return 4 * self.users

    @property
    def steps_per_episode(self) -> int:
        return self.config.ddpg.steps_per_episode

    # -- episode dynamics -----------------------------------------------

    def reset(self, seed=None) -> EnvState:
        if seed is not None:
            self.rng = make_rng(seed)
        side = self.config.region_side_km
        xy = self.rng.uniform(-side / 2.0, side / 2.0, size=(self.users, 2))
        self.distances = np.maximum(np.hypot(xy[:, 0], xy[:, 1]), self.config.min_distance_km)
        if self.config.gain_mode == "empirical":
            self.shadow_db = self.rng.normal(0.0, self.radio.shadow_fading_db_sigma, size=self.users)
        else:
            self.shadow_db = np.zeros(self.users)
        self.state = EnvState(self._draw_gains(), 0)
        return self.state

    def _draw_gains(self) -> np.ndarray:
        fading = self.rng.exponential(1.0, size=self.users)
        return np.asarray(channel_gain(self.distances, fading, self.shadow_db, self.config.gain_mode), dtype=float)

    def observe(self, state: EnvState | None = None) -> np.ndarray:
        """Network input: log10 gains centred on a mean-distance reference, in units of two decades."""
        state = self.state if state is None else state
        return (np.log10(np.maximum(state.gains, 1e-300)) - self._log_gain_ref) / 2.0

    # -- actions ----------------------------------------------------------

    def squash_action(self, raw) -> ResourceAction:
        return squash_action(raw, self.users, self.radio.power_cap_Pmax, self.radio.bandwidth_cap_Bmax,
                             self.o_min, self.config.min_selected)

    def budget_for(self, action: ResourceAction) -> tuple[DistortionBudget, bool]:
        """Pooled distortion budget over selected users; worst case when nobody transmits."""
        mask = action.selected.astype(bool)
        if not mask.any():
            return self.worst_budget(), True
        sem = np.asarray(self.table.distortion_for_ratio(action.compression), dtype=float)
        counts = self.data_counts[mask]
        sem_p = pool_users(counts, sem[mask])
        model_p = pool_users(counts, self.model_variance[mask])
        data_p = pool_users(counts, self.data_variance[mask])
        return DistortionBudget(sem_p, model_p, data_p, sem_p + model_p + data_p), False

    def worst_budget(self) -> DistortionBudget:
        sem = self.table.distortion_for_ratio(self.o_min)
        model, data = float(self.model_variance.max()), float(self.data_variance.max())
        return DistortionBudget(sem, model, data, sem + model + data)

    def max_penalty(self, phase: str) -> float:
        """Supremum of the phase penalty over the achievable variance range."""
        if phase not in self._worst:
            grid = np.linspace(0.0, self.worst_budget().total_variance, 4001)
            bound = phase_bound_array(grid, self.config.task, phase)
            self._worst[phase] = max(float(bound.max()) - self.epsilon(phase), 0.0)
        return self._worst[phase]

    def epsilon(self, phase: str) -> float:
        return self.config.epsilon_learn if phase == "training" else self.config.epsilon_inf

    def penalty(self, budget: DistortionBudget, phase: str) -> float:
        if phase == "training":
            return training_penalty(budget, self.config.task, self.config.epsilon_learn)
        if phase == "inference":
            return inference_penalty(budget, self.config.task, self.config.epsilon_inf)
        raise EnvDomainError(f"phase must be one of {PHASES}")

    def evaluate(self, gains, action: ResourceAction, phase: str | None = None) -> StepOutcome:
        """Energy, delay, budget, penalty and reward of ``action`` at channel ``gains``; no state change."""
        phase = phase or self.config.phase
        cfg = self.config
        rate = achievable_rate(action.bandwidth, action.power, gains, self.radio)
        rate = np.asarray(rate, dtype=float)
        sel = action.selected.astype(bool)
        dead = sel & ~(rate > 0)
        t, e = link_time_energy(action.selected * ~dead, action.power, action.compression, cfg.payload_bits, rate)
        energy = float(np.sum(e))
        delay = float(np.max(t)) if sel.any() else 0.0
        budget, empty = self.budget_for(action)
        if empty:
            penalty = self.max_penalty(phase)
            bound = penalty + self.epsilon(phase)
        else:
            penalty = self.penalty(budget, phase)
            bound = phase_bound(budget.total_variance, cfg.task, phase)
        energy_scaled = energy / cfg.energy_reference_j
        infeasible = bool(dead.any())
        if infeasible:
            reward = cfg.infeasible_reward
        else:
            reward = -energy_scaled - cfg.penalty_weight * penalty
        return StepOutcome(
            next_state=None, reward=float(reward), energy_J=energy, time_s=delay, penalty=float(penalty),
            budget=budget, constraint_violated=bool(penalty > 0.0 or infeasible), energy_scaled=energy_scaled,
            bound=float(bound), infeasible=infeasible, empty_pool=empty, action=action,
            user_energy=e, user_time=t,
        )

    def advance(self) -> EnvState:
        """Redraw fading without acting (oracle and replay tooling)."""
        if self.state is None:
            raise EnvDomainError("call reset() before advance()")
        self.state = EnvState(self._draw_gains(), self.state.timestep + 1)
        return self.state

    def step(self, raw, phase: str | None = None) -> StepOutcome:
        if self.state is None:
            raise EnvDomainError("call reset() before step()")
        action = self.squash_action(raw)
        outcome = self.evaluate(self.state.gains, action, phase)
        self.state = EnvState(self._draw_gains(), self.state.timestep + 1)
        outcome.next_state = self.state
        return outcome


def episode_return(rewards, gamma: float) -> float:
    """sum_t gamma^(T - t) r_t with t = 1..T (later rewards weigh more)."""
    rewards = list(rewards)
    if not rewards:
        raise EnvDomainError("episode_return needs at least one reward")
    if not 0 < gamma <= 1:
        raise EnvDomainError("gamma must lie in (0, 1]")
    T = len(rewards)
    return float(sum(gamma ** (T - t) * r for t, r in enumerate(rewards, 1)))
