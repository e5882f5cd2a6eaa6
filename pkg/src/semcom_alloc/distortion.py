"""Distortion composition and AI-task performance bounds.

Naming convention: ``*_variance`` / ``variances`` arguments are variances,
bare ``sigma*`` arguments are standard deviations. ``DistortionBudget``
always stores variances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Sequence

import numpy as np

SQRT_2PI = math.sqrt(2.0 * math.pi)


class DistortionDomainError(ValueError):
    pass


def _check_variance(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value) or value < 0.0:
        raise DistortionDomainError(f"{name} must be finite and >= 0, got {value!r}")
    return value


@dataclass(frozen=True)
class GaussianDistortion:
    variance: float

    def __post_init__(self):
        _check_variance("variance", self.variance)

    @property
    def std(self) -> float:
        return math.sqrt(self.variance)


@dataclass(frozen=True)
class DistortionBudget:
    sem_variance: float
    model_variance: float
    data_variance: float
    total_variance: float

    def __post_init__(self):
        for name in ("sem_variance", "model_variance", "data_variance", "total_variance"):
            _check_variance(name, getattr(self, name))
        if self.total_variance != self.sem_variance + self.model_variance + self.data_variance:
            raise DistortionDomainError("total_variance must equal the sum of its parts")

    @property
    def total_std(self) -> float:
        return math.sqrt(self.total_variance)


@dataclass(frozen=True)
class AiTaskConstants:
    """Smoothness/convexity and task constants of the downstream learner."""

    lipschitz_L: float = 10.0
    convexity_mu: float = 10.0
    learning_rate_eta: float = 0.3
    decision_boundary_W: float = 2.0
    posterior_confidence: float = 1.0
    training_rounds_N: int = 1

    def __post_init__(self):
        for name in ("lipschitz_L", "convexity_mu", "learning_rate_eta", "decision_boundary_W"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise DistortionDomainError(f"{name} must be positive, got {v!r}")
        if self.convexity_mu > self.lipschitz_L:
            raise DistortionDomainError("convexity_mu must not exceed lipschitz_L")
        if not 0.0 <= self.posterior_confidence <= 1.0:
            raise DistortionDomainError("posterior_confidence must lie in [0, 1]")
        if int(self.training_rounds_N) != self.training_rounds_N or self.training_rounds_N < 1:
            raise DistortionDomainError("training_rounds_N must be a positive integer")

    @property
    def descent_coefficient(self) -> float:
        """eta^2 L / 2 - eta, the per-step gradient-descent change factor."""
        eta, L = self.learning_rate_eta, self.lipschitz_L
        return eta * eta * L / 2.0 - eta


def compose_sequential(variances: Sequence[float]) -> float:
    """Variance of a chain of independent zero-mean Gaussian distortions."""
    total = 0.0
    for i, v in enumerate(variances):
        total += _check_variance(f"variances[{i}]", v)
    return total


def total_semcom_distortion(sem: float, model: float, data: float) -> DistortionBudget:
    sem = _check_variance("sem", sem)
    model = _check_variance("model", model)
    data = _check_variance("data", data)
    return DistortionBudget(sem, model, data, sem + model + data)


def pool_users(user_data_counts: Sequence[int], user_variances: Sequence[float]) -> float:
    """Data-count weighted mean of per-user total variances."""
    if len(user_data_counts) != len(user_variances):
        raise DistortionDomainError("user_data_counts and user_variances differ in length")
    if len(user_data_counts) == 0:
        raise DistortionDomainError("cannot pool an empty set of users")
    total_count = 0.0
    weighted = 0.0
    for i, (d, v) in enumerate(zip(user_data_counts, user_variances)):
        if not d > 0:
            raise DistortionDomainError(f"user_data_counts[{i}] must be positive, got {d!r}")
        weighted += d * _check_variance(f"user_variances[{i}]", v)
        total_count += d
    return weighted / total_count


def training_gap_bound(constants: AiTaskConstants, sigma_tot: float) -> float:
    """Loss gap after N descent rounds on distorted data (negative when eta < 2/L)."""
    sigma_tot = _check_variance("sigma_tot", sigma_tot)
    L = constants.lipschitz_L
    return constants.training_rounds_N * constants.descent_coefficient * (L * sigma_tot) ** 2


def gradient_dissimilarity_bound(grad_norm: float, L: float, sigma: float) -> float:
    """Upper bound on the squared gradient norm at a distorted point."""
    if grad_norm < 0 or L <= 0 or sigma < 0:
        raise DistortionDomainError("grad_norm, sigma must be >= 0 and L > 0")
    return (grad_norm + L * sigma) ** 2


def tv_bound(W: float, sigma: float) -> float:
    """Total-variation bound between clean and distorted data; exponent -(W/2sigma)^2."""
    if not (math.isfinite(sigma) and sigma > 0):
        raise DistortionDomainError(f"sigma must be positive, got {sigma!r}")
    if W < 0:
        raise DistortionDomainError(f"W must be >= 0, got {W!r}")
    return math.exp(-((W / (2.0 * sigma)) ** 2)) / (SQRT_2PI * sigma)


def inference_gap_bound(posterior_confidence: float, W: float, sigma_tot: float) -> float:
    """Expected drop in output probability at distortion std ``sigma_tot``."""
    if not 0.0 <= posterior_confidence <= 1.0:
        raise DistortionDomainError("posterior_confidence must lie in [0, 1]")
    if not (math.isfinite(sigma_tot) and sigma_tot > 0):
        raise DistortionDomainError(f"sigma_tot must be positive, got {sigma_tot!r}")
    return posterior_confidence * tv_bound(W, sigma_tot)


def make_rng(seed) -> np.random.Generator:
    """Counter-based (Philox) generator; identical streams on every platform."""
    return np.random.Generator(np.random.Philox(seed))


def mc_convolution_oracle(variances: Sequence[float], sample_count: int, seed=0) -> float:
    """Empirical variance of a sum of independent N(0, v) draws."""
    if sample_count < 2:
        raise DistortionDomainError("sample_count must be >= 2")
    rng = make_rng(seed)
    total = np.zeros(int(sample_count))
    for v in variances:
        v = _check_variance("variance", v)
        total += rng.normal(0.0, math.sqrt(v), size=total.shape)
    return float(np.var(total))


def mc_tail_frequency(W: float, sigma: float, sample_count: int, seed=0) -> tuple[float, float]:
    """Fraction of N(0, sigma^2) samples at or beyond the decision boundary W.

    Returns (frequency, monte-carlo standard error).
    """
    rng = make_rng(seed)
    v = rng.normal(0.0, sigma, size=int(sample_count))
    p = float(np.mean(v >= W))
    se = math.sqrt(max(p * (1.0 - p), 1e-300) / sample_count)
    return p, se
