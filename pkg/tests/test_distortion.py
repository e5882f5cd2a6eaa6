import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semcom_alloc.distortion import (
    AiTaskConstants,
    DistortionBudget,
    DistortionDomainError,
    compose_sequential,
    gradient_dissimilarity_bound,
    inference_gap_bound,
    mc_convolution_oracle,
    mc_tail_frequency,
    pool_users,
    total_semcom_distortion,
    training_gap_bound,
    tv_bound,
)

variances = st.lists(st.floats(0.0, 10.0, allow_nan=False), max_size=8)


def test_compose_examples():
    assert compose_sequential([0.04, 0.09]) == pytest.approx(0.13, abs=1e-15)
    assert compose_sequential([]) == 0.0
    assert compose_sequential([0.337, 0.01, 0.0025]) == pytest.approx(0.3495)


def test_compose_matches_monte_carlo():
    # frozen oracle: three independent Gaussians summed, 1e6 draws
    emp = mc_convolution_oracle([0.337, 0.01, 0.0025], 10**6, seed=3)
    assert abs(emp - 0.3495) / 0.3495 < 0.01


@pytest.mark.parametrize("bad", [-0.1, math.nan, math.inf])
def test_compose_rejects_bad_variance(bad):
    with pytest.raises(DistortionDomainError):
        compose_sequential([0.1, bad])


@given(variances, variances)
def test_compose_additive(a, b):
    assert compose_sequential(a + b) == pytest.approx(compose_sequential(a) + compose_sequential(b), rel=1e-12, abs=1e-15)


@given(variances, st.randoms())
def test_compose_order_free(a, rnd):
    b = list(a)
    rnd.shuffle(b)
    assert compose_sequential(b) == pytest.approx(compose_sequential(a), rel=1e-12, abs=1e-15)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.floats(0.001, 1.0), min_size=1, max_size=4), st.integers(0, 2**31))
def test_monte_carlo_agreement(v, seed):
    emp = mc_convolution_oracle(v, 10**6, seed=seed)
    assert abs(emp - compose_sequential(v)) / max(compose_sequential(v), 1e-9) < 0.02


def test_monte_carlo_degenerate():
    assert mc_convolution_oracle([0.0, 0.0], 1000, seed=1) == 0.0
    assert mc_convolution_oracle([0.04, 0.09], 10**6, seed=1) == pytest.approx(0.13, rel=0.01)


def test_total_semcom_distortion():
    b = total_semcom_distortion(0.337, 0.01, 0.0)
    assert b.total_variance == pytest.approx(0.347)
    assert total_semcom_distortion(0, 0, 0).total_variance == 0
    assert total_semcom_distortion(0.799, 0.05, 0.02).total_variance == pytest.approx(0.869)
    assert b.total_std == pytest.approx(math.sqrt(0.347))


def test_budget_must_sum():
    with pytest.raises(DistortionDomainError):
        DistortionBudget(0.1, 0.1, 0.1, 0.5)


def test_pool_users():
    assert pool_users([100, 300], [0.1, 0.2]) == pytest.approx(0.175)
    assert pool_users([7], [0.42]) == 0.42
    assert pool_users([50, 50], [0.3, 0.3]) == pytest.approx(0.3)
    with pytest.raises(DistortionDomainError):
        pool_users([1, 2], [0.1])
    with pytest.raises(DistortionDomainError):
        pool_users([0, 0], [0.1, 0.2])


@given(st.lists(st.tuples(st.floats(0.1, 1e4), st.floats(0, 5)), min_size=1, max_size=10))
def test_pool_within_range(pairs):
    counts, vs = zip(*pairs)
    p = pool_users(counts, vs)
    assert min(vs) - 1e-12 <= p <= max(vs) + 1e-12


def test_training_gap_examples():
    c = AiTaskConstants(lipschitz_L=10, learning_rate_eta=0.1, training_rounds_N=5)
    assert training_gap_bound(c, 0.2) == pytest.approx(-1.0)
    assert training_gap_bound(c, 0.0) == 0.0
    c1 = AiTaskConstants(lipschitz_L=10, learning_rate_eta=0.3, training_rounds_N=1)
    assert training_gap_bound(c1, 0.1) == pytest.approx(0.15)


@given(st.floats(0.01, 5), st.floats(0.01, 5), st.integers(1, 50), st.floats(1, 40))
def test_training_gap_scaling(s1, s2, n, L):
    c = AiTaskConstants(lipschitz_L=L, convexity_mu=L, learning_rate_eta=0.3, training_rounds_N=n)
    c1 = AiTaskConstants(lipschitz_L=L, convexity_mu=L, learning_rate_eta=0.3, training_rounds_N=1)
    g1, g2 = training_gap_bound(c, s1), training_gap_bound(c, s2)
    if g1 != 0:
        assert g2 / g1 == pytest.approx((s2 / s1) ** 2, rel=1e-9)
        assert g1 / training_gap_bound(c1, s1) == pytest.approx(n, rel=1e-12)


@pytest.mark.parametrize("L", [10, 17, 25, 32.5, 40])
def test_descent_lemma_exact(L):
    rng = np.random.default_rng(int(L * 2))
    c = AiTaskConstants(lipschitz_L=L, convexity_mu=L, learning_rate_eta=0.3)
    for _ in range(100):
        w = rng.normal(size=6) * 3

        def F(x):
            return 0.5 * L * float(x @ x)

        g = L * w
        lhs = F(w - c.learning_rate_eta * g)
        rhs = F(w) + c.descent_coefficient * float(g @ g)
        assert abs(lhs - rhs) <= 1e-10 * max(abs(lhs), abs(rhs))


def test_constants_validation():
    with pytest.raises(DistortionDomainError):
        AiTaskConstants(lipschitz_L=1, convexity_mu=2)
    with pytest.raises(DistortionDomainError):
        AiTaskConstants(learning_rate_eta=0)
    with pytest.raises(DistortionDomainError):
        AiTaskConstants(posterior_confidence=1.5)


def test_gradient_dissimilarity():
    assert gradient_dissimilarity_bound(1.0, 10, 0.1) == pytest.approx(4.0)
    assert gradient_dissimilarity_bound(3.0, 10, 0) == 9.0
    assert gradient_dissimilarity_bound(0, 10, 0.5) == pytest.approx(25.0)


def test_tv_bound_examples():
    assert tv_bound(0, 1) == pytest.approx(0.39894, abs=1e-5)
    assert tv_bound(2, 1) == pytest.approx(0.14676, abs=1e-5)
    # below sigma = W / sqrt(2) the bound falls as sigma shrinks
    sig = np.linspace(0.05, 2 / math.sqrt(2), 200)
    vals = [tv_bound(2, s) for s in sig]
    assert all(a < b for a, b in zip(vals, vals[1:]))
    assert tv_bound(2, 1e-3) < 1e-100
    with pytest.raises(DistortionDomainError):
        tv_bound(1, 0)


@given(st.floats(0.01, 5), st.floats(0, 5), st.floats(0.001, 5))
def test_tv_decreasing_in_W(sigma, W, dW):
    assert tv_bound(W + dW, sigma) < tv_bound(W, sigma) or tv_bound(W, sigma) == 0.0


def test_inference_gap_examples():
    assert inference_gap_bound(1.0, 2, 1) == pytest.approx(0.14676, abs=1e-5)
    assert inference_gap_bound(0.0, 3, 0.5) == 0
    assert inference_gap_bound(0.5, 0, 1) == pytest.approx(0.19947, abs=1e-5)


@given(st.floats(0, 1), st.floats(0, 4), st.floats(0.05, 4))
def test_inference_linear_in_confidence(p, W, s):
    assert inference_gap_bound(p, W, s) == pytest.approx(p * inference_gap_bound(1.0, W, s), rel=1e-12, abs=1e-300)


@pytest.mark.parametrize("sigma", [0.5, 1.0])
@pytest.mark.parametrize("W", [0.5, 1.0, 2.0])
def test_tail_frequency_below_tv_bound(sigma, W):
    p, se = mc_tail_frequency(W, sigma, 10**6, seed=[11, int(10 * W), int(10 * sigma)])
    assert p <= tv_bound(W, sigma) + 3 * se
