"""Random-action baseline and an exhaustive grid oracle for small instances."""
from __future__ import annotations

import csv
import hashlib
import itertools
import math
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .channel import achievable_rate
from .compression import CompressionTable, default_table
from .distortion import make_rng
from .env import ResourceAction, SemComEnv, phase_bound_array

MAX_ORACLE_USERS = 3


class OracleError(ValueError):
    pass


def random_policy_step(env_state, seed, users: int | None = None) -> np.ndarray:
    """I.i.d. standard-normal raw logits; feasibility is left to ``squash_action``."""
    if users is None:
        users = len(env_state.gains)
    return make_rng(seed).standard_normal(4 * users)


def simplex_splits(parts: int, resolution: int) -> list:
    """All ways to give ``parts`` users positive multiples of 1/resolution summing to 1."""
    if parts == 0:
        return [()]
    out = []
    for cut in itertools.combinations(range(1, resolution), parts - 1):
        edges = (0, *cut, resolution)
        out.append(tuple((b - a) / resolution for a, b in zip(edges, edges[1:])))
    return out


@dataclass(frozen=True)
class GridSpec:
    power_levels: tuple
    compression_choices: tuple
    selection_patterns: tuple
    bandwidth_resolution: int = 4

    def __post_init__(self):
        if not self.power_levels or not self.compression_choices or not self.selection_patterns:
            raise OracleError("grid axes must be non-empty")
        if min(self.power_levels) < 0:
            raise OracleError("power levels must be >= 0")
        if not all(0 < o <= 1 for o in self.compression_choices):
            raise OracleError("compression choices must lie in (0, 1]")
        if self.bandwidth_resolution < 1:
            raise OracleError("bandwidth_resolution must be >= 1")
        sizes = {len(p) for p in self.selection_patterns}
        if len(sizes) != 1:
            raise OracleError("selection patterns differ in length")

    @property
    def users(self) -> int:
        return len(self.selection_patterns[0])

    @classmethod
    def default(cls, users: int, power_max: float, table: CompressionTable | None = None,
                power_points: int = 8, bandwidth_resolution: int = 4) -> "GridSpec":
        """Log-spaced powers over [P_max/100, P_max], every table ratio plus o = 1, all 2^U subsets."""
        table = table or default_table()
        powers = tuple(float(p) for p in np.geomspace(power_max / 100.0, power_max, power_points))
        comps = tuple(c.ratio_o for c in table.choices(include_lossless=True))
        patterns = tuple(itertools.product((0, 1), repeat=users))
        return cls(powers, comps, patterns, bandwidth_resolution)

    def point_count(self) -> int:
        n = 0
        for pat in self.selection_patterns:
            k = sum(pat)
            n += len(simplex_splits(k, self.bandwidth_resolution)) * (len(self.power_levels) * len(self.compression_choices)) ** k
        return n


def mandatory_selection_variant(spec: GridSpec, min_selected: int) -> GridSpec:
    if min_selected > spec.users:
        raise OracleError(f"min_selected={min_selected} exceeds U={spec.users}")
    if min_selected < 1:
        raise OracleError("min_selected must be positive")
    kept = tuple(p for p in spec.selection_patterns if sum(p) >= min_selected)
    return GridSpec(spec.power_levels, spec.compression_choices, kept, spec.bandwidth_resolution)


@dataclass
class OracleResult:
    action: ResourceAction | None
    energy_J: float
    bound: float
    points: int
    feasible_points: int
    state_hash: str = ""

    @property
    def feasible(self) -> bool:
        return self.action is not None

    @property
    def infeasible_fraction(self) -> float:
        return 1.0 - self.feasible_points / self.points if self.points else 0.0

    def __iter__(self):
        # unpacks as (best action, best energy)
        yield self.action
        yield self.energy_J


def state_hash(gains) -> str:
    return hashlib.sha256(np.ascontiguousarray(gains, dtype=float).tobytes()).hexdigest()[:16]


def grid_oracle_solve(env: SemComEnv, gains, spec: GridSpec, phase: str | None = None) -> OracleResult:
    """Exhaustive minimum-energy point whose phase bound stays within the epsilon target.

    Every (selection, bandwidth split, per-user power, per-user compression)
    combination is evaluated. Ties keep the first point in enumeration order.
    """
    gains = np.asarray(gains, dtype=float)
    U = len(gains)
    if U > MAX_ORACLE_USERS:
        raise OracleError(f"grid oracle refuses U={U} > {MAX_ORACLE_USERS}")
    if spec.users != U:
        raise OracleError(f"grid is for U={spec.users}, state has U={U}")
    phase = phase or env.config.phase
    eps = env.epsilon(phase)
    radio = env.radio
    Z = env.config.payload_bits
    powers = np.asarray(spec.power_levels, dtype=float)
    comps = np.asarray(spec.compression_choices, dtype=float)
    sem = np.asarray(env.table.distortion_for_ratio(comps), dtype=float)
    nP, nO = len(powers), len(comps)
    counts = env.data_counts

    best = (math.inf, None, math.nan)
    total = feasible = 0
    for pattern in spec.selection_patterns:
        sel = np.flatnonzero(pattern)
        k = len(sel)
        if k == 0:
            # nobody transmits: zero energy, bound at the empty-pool surrogate
            total += 1
            bound = env.max_penalty(phase) + eps
            if bound <= eps:
                feasible += 1
                if 0.0 < best[0]:
                    zero = np.zeros(U)
                    best = (0.0, ResourceAction(np.zeros(U, dtype=int), zero, np.ones(U), zero.copy()), bound)
            continue
        # per-point pooled variance over selected users: depends only on the compression indices
        o_idx = np.array(list(itertools.product(range(nO), repeat=k)))
        w = counts[sel] / counts[sel].sum()
        var = (sem[o_idx] * w).sum(axis=1) + float(np.dot(w, env.model_variance[sel])) + float(np.dot(w, env.data_variance[sel]))
        bound = phase_bound_array(var, env.config.task, phase)
        ok = bound <= eps
        p_idx = np.array(list(itertools.product(range(nP), repeat=k)))
        for split in simplex_splits(k, spec.bandwidth_resolution):
            B = np.asarray(split) * radio.bandwidth_cap_Bmax
            # per-user seconds-per-bit at each power level: shape (k, nP)
            rate = np.asarray(achievable_rate(B[:, None], powers[None, :], gains[sel][:, None], radio), dtype=float)
            with np.errstate(divide="ignore"):
                joule_per_bit = np.where(rate > 0, powers[None, :] / rate, np.inf)
            # energy[p_combo, o_combo] = sum_u P_u * o_u * Z / R_u
            jp = joule_per_bit[np.arange(k)[None, :], p_idx]  # (nP^k, k)
            oc = comps[o_idx]  # (nO^k, k)
            energy = Z * (jp @ oc.T)  # (nP^k, nO^k)
            total += energy.size
            feasible += int(ok.sum()) * energy.shape[0]
            if not ok.any():
                continue
            masked = np.where(ok[None, :], energy, np.inf)
            flat = int(np.argmin(masked))
            e = float(masked.flat[flat])
            if e < best[0]:
                pi, oi = np.unravel_index(flat, masked.shape)
                selected = np.zeros(U, dtype=int)
                selected[sel] = 1
                P = np.zeros(U)
                P[sel] = powers[p_idx[pi]]
                o = np.ones(U)
                o[sel] = comps[o_idx[oi]]
                bw = np.zeros(U)
                bw[sel] = B
                best = (e, ResourceAction(selected, P, o, bw), float(bound[oi]))
    energy, action, bound = best
    return OracleResult(action, energy, bound, total, feasible, state_hash(gains))


ORACLE_CSV_HEADER = ("state_hash", "selected", "power_W", "compression_o", "bandwidth_Hz", "energy_J", "bound")


def _join(values) -> str:
    return ";".join(repr(float(v)) for v in values)


def export_oracle_csv(results, path) -> Path:
    """One row per oracle solve; infeasible solves carry empty action fields and energy ``inf``."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(ORACLE_CSV_HEADER)
        for r in results:
            if r.action is None:
                writer.writerow((r.state_hash, "", "", "", "", "inf", repr(float(r.bound))))
                continue
            a = r.action
            writer.writerow((r.state_hash, ";".join(str(int(s)) for s in a.selected), _join(a.power),
                             _join(a.compression), _join(a.bandwidth), repr(r.energy_J), repr(r.bound)))
    return path
