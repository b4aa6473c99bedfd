import numpy as np
import pytest

from carsm.approx import Adam, Mlp
from carsm.critic import (ReplayBuffer, TargetNets, TransitionBatch, all_actions, bellman_loss,
                          critic_eval, critic_input, critic_update, expected_next_value,
                          off_policy_targets, on_policy_targets, soft_update)
from carsm.policy import action_probs
from carsm.rollout import policy_logits


def filled_buffer(n, obs_dim, K, C, rng, capacity=1000):
    buf = ReplayBuffer(capacity, obs_dim, K)
    for _ in range(n):
        buf.add(rng.normal(size=obs_dim), rng.integers(0, C, size=K), rng.normal(),
                rng.normal(size=obs_dim), rng.random() < 0.1)
    return buf


def test_zero_critic_outputs_zero(rng):
    net = Mlp.init([3 + 2, 8, 1], seed=0)
    net.set_params(np.zeros(net.n_params))
    np.testing.assert_array_equal(critic_eval(net, rng.normal(size=(4, 3)), rng.integers(0, 5, (4, 2)), 5), 0)


def test_critic_eval_deterministic(rng):
    net = Mlp.init([5, 8, 1], seed=0)
    s, a = rng.normal(size=3), np.array([1, 4])
    assert critic_eval(net, s, a, 5) == critic_eval(net, s, a, 5)


def test_critic_input_grid_endpoints():
    x = critic_input(np.array([0.5, -0.5]), np.array([0, 10]), 11)    # 1-based actions (1, 11)
    np.testing.assert_array_equal(x, [0.5, -0.5, -1.0, 1.0])


def test_buffer_fifo_and_capacity(rng):
    buf = ReplayBuffer(5, 1, 1)
    for i in range(8):
        buf.add([i], [0], float(i), [i + 1], False)
    assert len(buf) == 5
    assert sorted(buf.rewards) == [3.0, 4.0, 5.0, 6.0, 7.0]     # oldest three evicted


def test_buffer_sample_without_replacement(rng):
    buf = ReplayBuffer(50, 1, 1)
    for i in range(20):
        buf.add([i], [0], float(i), [i], False)
    batch = buf.sample(20, rng)
    assert sorted(batch.rewards) == list(map(float, range(20)))
    with pytest.raises(ValueError):
        buf.sample(21, rng)


def test_gamma_zero_returns_rewards(rng):
    buf = filled_buffer(30, 3, 2, 4, rng)
    nets = TargetNets(Mlp.init([3, 8, 8], seed=0), Mlp.init([5, 8, 1], seed=1))
    batch = buf.sample(10, rng)
    np.testing.assert_array_equal(off_policy_targets(batch, nets, 0.0, 2, 4, rng), batch.rewards)


def test_empty_batch_rejected(rng):
    nets = TargetNets(Mlp.init([3, 8], seed=0), Mlp.init([5, 1], seed=1))
    empty = TransitionBatch(np.zeros((0, 3)), np.zeros((0, 2), int), np.zeros(0), np.zeros((0, 3)),
                            np.zeros(0, bool))
    with pytest.raises(ValueError):
        off_policy_targets(empty, nets, 0.9, 2, 4, rng)


def test_uniform_target_policy_gives_arithmetic_mean(rng):
    K, C = 2, 3
    policy = Mlp.init([3, K * C], seed=0)
    policy.set_params(np.zeros(policy.n_params))
    critic = Mlp.init([3 + K, 16, 1], seed=2)
    s = rng.normal(size=(4, 3))
    acts = all_actions(K, C)
    expected = [critic_eval(critic, np.repeat(s[i:i + 1], len(acts), 0), acts, C).mean() for i in range(4)]
    np.testing.assert_allclose(expected_next_value(s, policy, critic, K, C), expected, rtol=1e-12)


def test_terminal_transitions_do_not_bootstrap(rng):
    nets = TargetNets(Mlp.init([2, 4], seed=0), Mlp.init([4, 8, 1], seed=1))
    batch = TransitionBatch(rng.normal(size=(3, 2)), np.zeros((3, 2), int), np.array([1.0, 2.0, 3.0]),
                            rng.normal(size=(3, 2)), np.array([True, False, True]))
    y = off_policy_targets(batch, nets, 0.9, 2, 2, rng)
    assert y[0] == 1.0 and y[2] == 3.0 and y[1] != 2.0


def test_sampled_expectation_within_3se_of_enumeration():
    K, C, M = 2, 11, 10_000                  # 121 joint actions: above the enumeration limit
    rng = np.random.default_rng(3)
    policy = Mlp.init([3, 16, K * C], seed=4)
    critic = Mlp.init([3 + K, 16, 1], seed=5)
    s = rng.normal(size=(1, 3))
    sampled = expected_next_value(s, policy, critic, K, C, rng, M=M)[0]
    exact = expected_next_value(s, policy, critic, K, C, enum_limit=C ** K)[0]
    # exact variance of Q under the policy, by enumeration
    acts = all_actions(K, C)
    p = action_probs(policy_logits(policy, s[0], K, C))
    pj = np.prod(p[np.arange(K), acts], axis=1)
    q = critic_eval(critic, np.repeat(s, len(acts), 0), acts, C)
    se = np.sqrt(pj @ q ** 2 - (pj @ q) ** 2) / np.sqrt(M)
    assert abs(exact - pj @ q) < 1e-12
    assert abs(sampled - exact) <= 3 * se


def test_sampling_needs_generator():
    policy, critic = Mlp.init([1, 2 * 11], seed=0), Mlp.init([3, 1], seed=0)
    with pytest.raises(ValueError):
        expected_next_value(np.zeros((1, 1)), policy, critic, 2, 11, rng=None)


def test_on_policy_targets_examples(rng):
    np.testing.assert_allclose(on_policy_targets([1, 1, 1], 0.5), [1.75, 1.5, 1.0])
    r = rng.normal(size=30)
    np.testing.assert_array_equal(on_policy_targets(r, 0.0), r)
    y = on_policy_targets(r, 0.99)
    naive = [sum(0.99 ** (k - t) * r[k] for k in range(t, 30)) for t in range(30)]
    np.testing.assert_allclose(y, naive, atol=1e-10)
    np.testing.assert_allclose(y[:-1], r[:-1] + 0.99 * y[1:], atol=1e-12)   # Bellman recursion


def test_bellman_loss_hand_computed(rng):
    critic = Mlp.init([4, 8, 1], seed=1)
    x, y = rng.normal(size=(6, 4)), rng.normal(size=6)
    loss, _ = bellman_loss(critic, x, y)
    resid = [critic.forward(x[i])[0] - y[i] for i in range(6)]
    assert loss == pytest.approx(sum(e * e for e in resid), abs=1e-8)


def _update_setup(rng, n_critic, lr=1e-2):
    K, C, obs = 1, 3, 2
    buf = filled_buffer(40, obs, K, C, rng)
    policy = Mlp.init([obs, K * C], seed=0)
    critic = Mlp.init([obs + K, 32, 1], seed=1)
    nets = TargetNets.from_online(policy, critic)
    states, acts = rng.normal(size=(8, obs)), rng.integers(0, C, (8, K))
    return critic, Adam(lr, critic.n_params), buf, states, acts, nets, K, C


def test_zero_critic_steps_leave_critic(rng):
    critic, opt, buf, s, a, nets, K, C = _update_setup(rng, 0)
    before = critic.get_params().copy()
    assert critic_update(critic, opt, buf, s, a, np.ones(8), nets, 0, 0.9, K, C, rng) == []
    np.testing.assert_array_equal(critic.get_params(), before)


def test_constant_targets_loss_mostly_decreases(rng):
    critic, opt, _, s, a, nets, K, C = _update_setup(rng, 200, lr=1e-3)
    buf = filled_buffer(8, 2, K, C, rng)        # L = T = 8: every step sees the whole buffer
    buf.rewards[:] = 2.0
    losses = critic_update(critic, opt, buf, s, a, np.full(8, 2.0), nets, 200, 0.0, K, C, rng)
    assert np.mean(np.diff(losses) < 0) >= 0.9


def test_update_requires_enough_transitions(rng):
    critic, opt, _, s, a, nets, K, C = _update_setup(rng, 1)
    small = filled_buffer(3, 2, 1, 3, rng)
    with pytest.raises(ValueError):
        critic_update(critic, opt, small, s, a, np.ones(8), nets, 1, 0.9, K, C, rng)


def test_soft_update_cases(rng):
    online = (Mlp.init([2, 3], seed=0), Mlp.init([3, 1], seed=1))
    for tau, expect in ((1.0, "online"), (0.0, "target")):
        nets = TargetNets(Mlp.init([2, 3], seed=5), Mlp.init([3, 1], seed=6))
        before = nets.policy.get_params().copy()
        soft_update(nets, *online, tau)
        ref = online[0].get_params() if expect == "online" else before
        np.testing.assert_array_equal(nets.policy.get_params(), ref)
    # scalar case online = 1, target = 0, tau = 0.01 -> 0.01
    one, zero = Mlp([1, 1], [np.ones((1, 1))], [np.ones(1)]), Mlp([1, 1], [np.zeros((1, 1))], [np.zeros(1)])
    nets = TargetNets(zero.copy(), zero.copy())
    soft_update(nets, one, one, 0.01)
    np.testing.assert_allclose(nets.critic.get_params(), [0.01, 0.01], rtol=0, atol=1e-15)


def test_soft_update_betweenness(rng):
    online = (Mlp.init([3, 4, 2], seed=0), Mlp.init([4, 4, 1], seed=1))
    nets = TargetNets(Mlp.init([3, 4, 2], seed=2), Mlp.init([4, 4, 1], seed=3))
    for _ in range(20):
        for net in online:
            net.set_params(net.get_params() + rng.normal(size=net.n_params))
        prev = [n.get_params().copy() for n in (nets.policy, nets.critic)]
        soft_update(nets, *online, 0.3)
        for p0, tgt, on in zip(prev, (nets.policy, nets.critic), online):
            lo, hi = np.minimum(p0, on.get_params()), np.maximum(p0, on.get_params())
            assert np.all((tgt.get_params() >= lo - 1e-15) & (tgt.get_params() <= hi + 1e-15))


def test_soft_update_shape_and_tau_errors():
    nets = TargetNets(Mlp.init([2, 3], seed=0), Mlp.init([3, 1], seed=0))
    with pytest.raises(ValueError):
        soft_update(nets, Mlp.init([2, 4], seed=0), Mlp.init([3, 1], seed=0), 0.5)
    with pytest.raises(ValueError):
        soft_update(nets, Mlp.init([2, 3], seed=0), Mlp.init([3, 1], seed=0), 1.5)
