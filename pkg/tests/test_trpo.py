import numpy as np
import pytest

from carsm.approx import Mlp
from carsm.policy import action_probs
from carsm.rollout import policy_logits
from carsm.trpo import (ConjugateGradientError, TrpoConfig, conjugate_gradient, fisher_vector_product,
                        kl_factored_categorical, kl_gradient, trpo_step)

K, C = 2, 3


@pytest.fixture
def setup(rng):
    net = Mlp.init([4, 16, K * C], seed=3)
    return net, rng.normal(size=(12, 4))


def test_kl_identical_is_zero(rng):
    p = action_probs(rng.normal(size=(5, K, C)))
    assert abs(kl_factored_categorical(p, p)) < 1e-12


def test_kl_shift_invariant(rng):
    old = action_probs(rng.normal(size=(5, K, C)))
    z = rng.normal(size=(5, K, C))
    assert kl_factored_categorical(old, action_probs(z)) == pytest.approx(
        kl_factored_categorical(old, action_probs(z + 4.2)), abs=1e-12)


def test_kl_closed_form():
    kl = kl_factored_categorical(np.array([[0.5, 0.5]]), np.array([[0.75, 0.25]]))
    assert kl == pytest.approx(0.5 * np.log(0.5 / 0.75) + 0.5 * np.log(0.5 / 0.25))
    assert kl == pytest.approx(0.1438, abs=1e-4)


def test_kl_zero_new_probability_is_finite():
    kl = kl_factored_categorical(np.array([[0.5, 0.5]]), np.array([[1.0, 0.0]]))
    assert np.isfinite(kl) and kl > 10


def test_fvp_zero_vector(setup):
    net, s = setup
    np.testing.assert_array_equal(fisher_vector_product(net, s, np.zeros(net.n_params), 0.1, K, C), 0)


def test_fvp_positive_and_symmetric(setup, rng):
    net, s = setup
    for _ in range(10):
        u, v = rng.normal(size=net.n_params), rng.normal(size=net.n_params)
        hv = fisher_vector_product(net, s, v, 0.0, K, C)
        hu = fisher_vector_product(net, s, u, 0.0, K, C)
        assert v @ hv >= -1e-12
        assert v @ fisher_vector_product(net, s, v, 0.1, K, C) > 0
        assert abs(u @ hv - v @ hu) <= 1e-6 * np.linalg.norm(u) * np.linalg.norm(v)


def test_fvp_matches_fd_of_kl_gradient(setup, rng):
    net, s = setup
    old = action_probs(policy_logits(net, s, K, C))
    theta = net.get_params()
    v = rng.normal(size=net.n_params)
    eps = 1e-4

    def grad_at(p):
        probe = net.copy()
        probe.set_params(p)
        return kl_gradient(probe, s, old, K, C)

    fd = (grad_at(theta + eps * v) - grad_at(theta - eps * v)) / (2 * eps)
    hv = fisher_vector_product(net, s, v, 0.0, K, C)
    assert np.linalg.norm(hv - fd) / np.linalg.norm(fd) < 1e-2


def test_fvp_length_error(setup):
    net, s = setup
    with pytest.raises(ValueError):
        fisher_vector_product(net, s, np.zeros(3), 0.1, K, C)


def test_cg_identity_one_iteration(rng):
    g = rng.normal(size=7)
    d = conjugate_gradient(lambda v: v, g, TrpoConfig(cg_iters=1))
    np.testing.assert_allclose(d, g, rtol=1e-14)
    cos = d @ g / (np.linalg.norm(d) * np.linalg.norm(g))
    assert cos == pytest.approx(1.0, abs=1e-6)


def test_cg_diagonal_closed_form():
    H = np.diag([2.0, 4.0])
    np.testing.assert_allclose(conjugate_gradient(lambda v: H @ v, np.array([2.0, 4.0])), [1.0, 1.0])


def test_cg_matches_dense_solve(rng):
    A = rng.normal(size=(8, 8))
    H = A @ A.T + 0.5 * np.eye(8)
    g = rng.normal(size=8)
    d = conjugate_gradient(lambda v: H @ v, g, TrpoConfig(cg_iters=8, cg_tol=1e-30))
    np.testing.assert_allclose(d, np.linalg.solve(H, g), atol=1e-6)


def test_cg_rejects_indefinite():
    with pytest.raises(ConjugateGradientError):
        conjugate_gradient(lambda v: -v, np.ones(3))


def test_zero_gradient_no_update(setup):
    net, s = setup
    before = net.get_params().copy()
    info = trpo_step(net, np.zeros(net.n_params), s, K, C)
    assert not info.accepted
    np.testing.assert_array_equal(net.get_params(), before)


def test_accepted_step_respects_kl(setup, rng):
    net, s = setup
    cfg = TrpoConfig(max_kl=0.01)
    for _ in range(10):
        old = action_probs(policy_logits(net, s, K, C))
        info = trpo_step(net, rng.normal(size=net.n_params), s, K, C, cfg)
        if info.accepted:
            kl = kl_factored_categorical(old, action_probs(policy_logits(net, s, K, C)))
            assert kl <= 1.5 * cfg.max_kl
            assert kl == pytest.approx(info.kl)


def test_quadratic_model_equals_radius(setup, rng):
    net, s = setup
    info = trpo_step(net, rng.normal(size=net.n_params), s, K, C, TrpoConfig(max_kl=0.01))
    assert abs(info.quad_model - 0.01) <= 0.2 * 0.01


def test_config_validation():
    with pytest.raises(ValueError):
        TrpoConfig(max_kl=0.0)
