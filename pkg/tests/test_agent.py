import json

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from semcom_alloc.agent import (
    AgentError,
    CheckpointError,
    DdpgAgent,
    OuNoiseState,
    ReplayBuffer,
    Transition,
    critic_target,
    ou_step,
    train,
    transform_reward,
)
from semcom_alloc.config import DdpgHyper, SystemConfig
from semcom_alloc.distortion import make_rng
from semcom_alloc.nn import DenseNetwork

SMALL = DdpgHyper(hidden=(16, 16), batch=16, warmup_episodes=1, steps_per_episode=20, train_episodes=2)


def small_agent(state_dim=3, action_dim=4, seed=0, **kw):
    return DdpgAgent(state_dim, action_dim, DdpgHyper(**{**SMALL.__dict__, **kw}), seed=seed)


def test_critic_target_examples():
    assert critic_target(1, 2, 0.99, False) == pytest.approx(2.98)
    assert critic_target(1, 2, 0.99, True) == 1
    assert critic_target(1, 2, 0.0, False) == 1


def test_transform_reward():
    assert transform_reward(-2.0, 1.0, "linear") == -2.0
    assert transform_reward(-(np.e - 1), 1.0, "symlog") == pytest.approx(-1.0)
    assert transform_reward(0.0, 10.0, "symlog") == 0.0
    with pytest.raises(AgentError):
        transform_reward(1.0, 1.0, "cube")


@given(st.floats(-1e6, 0), st.floats(-1e6, 0))
def test_symlog_monotone(a, b):
    lo, hi = sorted((a, b))
    assert transform_reward(lo, 10.0, "symlog") <= transform_reward(hi, 10.0, "symlog")


def test_ou_theta_one_sigma_zero():
    n = OuNoiseState(np.array([3.0, -2.0]), theta=1.0, sigma_ou=0.0)
    ou_step(n, make_rng(0))
    np.testing.assert_array_equal(n.current, [0.0, 0.0])


def test_ou_geometric_decay():
    n = OuNoiseState(np.array([1.0]), theta=0.15, sigma_ou=0.0)
    prev = 1.0
    for _ in range(20):
        ou_step(n, make_rng(0))
        assert abs(n.current[0]) < prev
        assert n.current[0] == pytest.approx(prev * 0.85)
        prev = abs(n.current[0])


def test_ou_stationary_moments():
    rng = make_rng(4)
    n = OuNoiseState.zeros(1, 0.15, 0.2)
    xs = np.empty(10**6)
    for i in range(xs.size):
        ou_step(n, rng)
        xs[i] = n.current[0]
    var_theory = 0.2 ** 2 / (2 * 0.15 * (1 - 0.15 / 2))
    assert xs.var() == pytest.approx(var_theory, rel=0.10)
    # mean over the first 1e5 steps, with the AR(1) effective sample size
    head = xs[: 10**5]
    rho = 1 - 0.15
    se = np.sqrt(var_theory * (1 + rho) / (1 - rho) / head.size)
    assert abs(head.mean()) < 3 * se


def test_sigma_decays_per_episode():
    n = OuNoiseState.zeros(2, 0.15, 0.2, 0.5)
    n.current[:] = 1.0
    n.end_episode()
    assert n.sigma_ou == pytest.approx(0.1)
    assert not n.current.any()


def test_select_action():
    ag = small_agent()
    s = np.array([0.1, -0.2, 0.3])
    np.testing.assert_array_equal(ag.select_action(s), ag.select_action(s))
    quiet = OuNoiseState.zeros(4, sigma_ou=0.0)
    np.testing.assert_array_equal(ag.select_action(s, quiet, explore=True, rng=make_rng(1)), ag.act(s))
    loud = OuNoiseState.zeros(4, sigma_ou=5.0)
    a = ag.select_action(s, loud, explore=True, rng=make_rng(1))
    assert np.all(np.abs(a) <= ag.action_bound)


def test_replay_buffer_ring():
    buf = ReplayBuffer(3, 1, 1)
    for k in range(5):
        buf.add(Transition(np.array([k]), np.array([k]), float(k), np.array([k + 1]), False))
    assert len(buf) == 3
    assert sorted(buf.rewards.tolist()) == [2.0, 3.0, 4.0]
    with pytest.raises(AgentError):
        ReplayBuffer(3, 1, 1).sample(2, make_rng(0))


def test_replay_sampling_without_replacement_and_uniform():
    buf = ReplayBuffer(50, 1, 1)
    for k in range(50):
        buf.add(Transition(np.zeros(1), np.zeros(1), float(k), np.zeros(1), False))
    rng = make_rng(2)
    counts = np.zeros(50)
    draws = 0
    while draws < 10**5:
        idx = buf.sample_indices(10, rng)
        assert len(set(idx.tolist())) == 10
        np.add.at(counts, idx, 1)
        draws += 10
    expected = draws / 50
    assert np.all(np.abs(counts - expected) <= 5 * np.sqrt(expected))


def test_update_critic_zero_error_keeps_parameters():
    ag = small_agent(momentum=0.0)
    rng = make_rng(3)
    s, a = rng.normal(size=(8, 3)), rng.normal(size=(8, 4))
    before = ag.critic.flat_parameters()
    loss = ag.update_critic(s, a, ag.q_value(s, a))
    assert loss == 0.0
    np.testing.assert_array_equal(ag.critic.flat_parameters(), before)


def test_update_critic_loss_is_mse_and_descends():
    ag = small_agent(momentum=0.0, lr_critic=1e-3)
    rng = make_rng(4)
    s, a, y = rng.normal(size=(1, 3)), rng.normal(size=(1, 4)), np.array([2.5])
    q = ag.q_value(s, a)
    loss = ag.update_critic(s, a, y)
    assert loss == pytest.approx(float(np.mean((q - y) ** 2)))
    assert float(np.mean((ag.q_value(s, a) - y) ** 2)) < loss
    with pytest.raises(AgentError):
        ag.update_critic(np.zeros((0, 3)), np.zeros((0, 4)), np.zeros(0))


def test_critic_regression_sanity():
    ag = small_agent(lr_critic=1e-3, grad_clip=0.0)
    rng = make_rng(5)
    s, a = rng.normal(size=(64, 3)), rng.normal(size=(64, 4))
    y = np.sin(s[:, 0]) + 0.5 * a[:, 1]
    losses = [ag.update_critic(s, a, y) for _ in range(101)]
    rises = sum(b > a for a, b in zip(losses, losses[1:]))
    assert rises <= 5
    assert losses[-1] < losses[0]


def test_update_actor_objective_and_zero_path():
    ag = small_agent()
    rng = make_rng(6)
    s = rng.normal(size=(8, 3))
    expected = float(np.mean(ag.q_value(s, ag.act(s))))
    assert ag.update_actor(s) == pytest.approx(expected)
    # a critic that ignores the action gives the actor no gradient
    ag.critic.weights[0][3:, :] = 0.0
    before = ag.actor.flat_parameters()
    ag.actor._velocity = None
    ag.update_actor(s)
    np.testing.assert_array_equal(ag.actor.flat_parameters(), before)


def test_update_actor_follows_critic_sign():
    ag = small_agent(state_dim=1, action_dim=1, momentum=0.0)
    # Q(s, a) = a / bound: a linear critic increasing in the action
    ag.critic = DenseNetwork((2, 1), [np.array([[0.0], [1.0]])], [np.zeros(1)])
    s = np.array([[0.3]])
    before = ag.act(s)[0, 0]
    ag.update_actor(s)
    assert ag.act(s)[0, 0] > before


def test_warmup_only_run():
    cfg = SystemConfig(users=2, ddpg=SMALL)
    res = train(cfg, seed=1, episodes=0)
    assert len(res.buffer) == SMALL.warmup_episodes * SMALL.steps_per_episode
    fresh = DdpgAgent(2, 8, SMALL, seed=1)
    np.testing.assert_array_equal(res.agent.actor.flat_parameters(), fresh.actor.flat_parameters())
    np.testing.assert_array_equal(res.agent.critic.flat_parameters(), fresh.critic.flat_parameters())


def test_train_deterministic_and_feasible():
    cfg = SystemConfig(users=2, ddpg=SMALL)
    a, b = train(cfg, seed=3), train(cfg, seed=3)
    assert [m.__dict__ for m in a.metrics] == [m.__dict__ for m in b.metrics]
    np.testing.assert_array_equal(a.agent.actor.flat_parameters(), b.agent.actor.flat_parameters())
    assert all(np.isfinite(m.critic_loss) for m in a.metrics if not m.warmup)


def test_checkpoint_round_trip(tmp_path):
    ag = small_agent(seed=7)
    path = tmp_path / "agent.json"
    ag.save(path, metadata={"note": "x"})
    again = DdpgAgent.load(path)
    s = make_rng(1).normal(size=(100, 3))
    np.testing.assert_array_equal(ag.act(s), again.act(s))
    assert again.hyper == ag.hyper


def test_checkpoint_errors(tmp_path):
    ag = small_agent()
    path = tmp_path / "agent.json"
    ag.save(path)
    text = path.read_text()
    (tmp_path / "trunc.json").write_text(text[: len(text) // 2])
    with pytest.raises(CheckpointError):
        DdpgAgent.load(tmp_path / "trunc.json")
    d = json.loads(text)
    d["version"] = 99
    (tmp_path / "v.json").write_text(json.dumps(d))
    with pytest.raises(CheckpointError, match="version"):
        DdpgAgent.load(tmp_path / "v.json")
    with pytest.raises(CheckpointError):
        DdpgAgent.load(tmp_path / "missing.json")
    del d["actor"]
    d["version"] = 1
    (tmp_path / "m.json").write_text(json.dumps(d))
    with pytest.raises(CheckpointError):
        DdpgAgent.load(tmp_path / "m.json")
