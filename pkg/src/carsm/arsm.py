"""Sparse multidimensional ARSM gradient with a critic (CARSM) or with
Monte-Carlo rollouts (ARSM-MC).

For one timestep with logits ``phi`` (K, C) and Dirichlet draws ``w`` (K, C):

* swapping coordinates ``c`` and ``j`` of ``w_k`` and re-running the argmin
  gives the pseudo action ``a_k^{c<->j}``; the ``C x C`` table of these is
  symmetric with the true action on the diagonal;
* the joint pseudo action for a pair is the vector of per-dimension pseudo
  actions for that same pair;
* ``F[c, j]`` holds the action value of the joint pseudo action, or the
  realized return when it equals the true action;
* ``g[k, c] = sum_j (F[c, j] - mean_m F[m, j]) * (1/C - w[k, j])``, zeroed for
  every dimension whose pseudo actions all equal the true action.

``E[g] = d/dphi E_{a ~ softmax(phi)}[Q(a)]`` when ``F`` uses exact values.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .approx import Mlp
from .envs import Env
from .policy import entropy_grad, sample_action
from .rollout import Trajectory, policy_logits


def pseudo_table(logits, dirichlet) -> np.ndarray:
    """Pseudo actions for every swap pair, shape ``(..., C, C)``.

    Only coordinates ``c`` and ``j`` move under a swap, so the argmin is the
    best of: the swapped value at ``c``, the swapped value at ``j``, and the
    smallest untouched coordinate (one of the three smallest originals). This
    costs ``O(C^2)`` instead of materializing every swapped vector. Ties go to
    the lowest index, as with a plain argmin.
    """
    logits = np.asarray(logits, dtype=float)
    logw = np.log(np.asarray(dirichlet, dtype=float))
    C = logits.shape[-1]
    batch = logits.shape[:-1]
    if C == 1:
        return np.zeros(batch + (1, 1), dtype=int)
    v = logw - logits
    # value at c after the swap is ln w_j - phi_c, at j it is ln w_c - phi_j
    val_c = logw[..., None, :] - logits[..., :, None]
    val_j = logw[..., :, None] - logits[..., None, :]
    ci = np.arange(C)[:, None]
    ji = np.arange(C)[None, :]

    order = np.argsort(v, axis=-1, kind="stable")[..., :3]
    other_idx = np.full(batch + (C, C), C)
    other_val = np.full(batch + (C, C), np.inf)
    for r in range(order.shape[-1] - 1, -1, -1):
        o = order[..., r][..., None, None]
        ov = np.take_along_axis(v, order[..., r:r + 1], axis=-1)[..., None]
        ok = (o != ci) & (o != ji)
        other_idx = np.where(ok, o, other_idx)
        other_val = np.where(ok, ov, other_val)

    vals = np.stack([other_val, val_c, val_j], axis=-1)
    idxs = np.stack([other_idx,
                     np.broadcast_to(ci, other_idx.shape),
                     np.broadcast_to(ji, other_idx.shape)], axis=-1)
    best = vals.min(axis=-1, keepdims=True)
    return np.where(vals == best, idxs, C).min(axis=-1)


def dimension_active(tables, true_action) -> np.ndarray:
    """False where every pseudo action of a dimension equals its true action."""
    true_action = np.asarray(true_action)
    return (tables != true_action[..., None, None]).any(axis=(-2, -1))


@dataclass
class JointPseudoSet:
    """Unique joint pseudo actions that differ from the true action.

    ``index[c, j]`` points into ``actions`` or is ``-1`` when the swap leaves
    the joint action unchanged (always on the diagonal).
    """

    actions: np.ndarray  # (n, K)
    index: np.ndarray    # (C, C)

    def __len__(self):
        return len(self.actions)


def joint_pseudo_set(tables, true_action) -> JointPseudoSet:
    tables = np.asarray(tables)
    true_action = np.asarray(true_action)
    K, C, _ = tables.shape
    rows, cols = np.tril_indices(C, -1)
    cand = tables[:, rows, cols].T
    differs = (cand != true_action).any(axis=1)
    index = np.full((C, C), -1)
    if not differs.any():
        return JointPseudoSet(np.empty((0, K), dtype=int), index)
    uniq, inverse = np.unique(cand[differs], axis=0, return_inverse=True)
    inverse = np.asarray(inverse).reshape(-1)
    index[rows[differs], cols[differs]] = inverse
    index[cols[differs], rows[differs]] = inverse
    return JointPseudoSet(uniq, index)


def f_matrix(pseudo: JointPseudoSet, critic_eval, y_t: float) -> np.ndarray:
    """``critic_eval`` maps an ``(n, K)`` batch of actions to ``n`` values."""
    C = pseudo.index.shape[0]
    F = np.full((C, C), float(y_t))
    if len(pseudo):
        q = np.asarray(critic_eval(pseudo.actions), dtype=float).reshape(-1)
        mask = pseudo.index >= 0
        F[mask] = q[pseudo.index[mask]]
    return F


def g_tensor_step(F, dirichlet, tables, true_action) -> np.ndarray:
    """Sparse ARSM coefficients for one timestep (batched over leading axes)."""
    F = np.asarray(F, dtype=float)
    dirichlet = np.asarray(dirichlet, dtype=float)
    C = F.shape[-1]
    delta = F - F.mean(axis=-2, keepdims=True)
    g = np.einsum("...kj,...cj->...kc", 1.0 / C - dirichlet, delta)
    return np.where(dimension_active(tables, true_action)[..., None], g, 0.0)


def surrogate_loss(g, logits) -> float:
    """``sum(g * phi) / (T K C)`` with ``g`` held constant."""
    g = np.asarray(g, dtype=float)
    logits = np.asarray(logits, dtype=float)
    if g.shape != logits.shape:
        raise ValueError(f"shape mismatch {g.shape} vs {logits.shape}")
    return float((g * logits).sum() / g.size)


def surrogate_logit_grad(g) -> np.ndarray:
    g = np.asarray(g, dtype=float)
    return g / g.size


def _backprop_logits(policy_net: Mlp, states, dlogits) -> np.ndarray:
    T = len(states)
    grad, _ = policy_net.backward(states, dlogits.reshape(T, -1))
    return grad


def _joint_codes(tables, K: int, C: int):
    """Integer code of every lower-triangle joint pseudo action, first dimension most significant."""
    rows, cols = np.tril_indices(C, -1)
    radix = C ** np.arange(K - 1, -1, -1)
    cand = tables[..., rows, cols]                      # (T, K, P)
    return np.einsum("tkp,k->tp", cand, radix), radix, rows, cols


def batched_f_matrices(tables, actions, returns, states, critic_eval) -> np.ndarray:
    """F matrices for a whole trajectory with one critic call.

    Equivalent to :func:`joint_pseudo_set` plus :func:`f_matrix` per timestep:
    each distinct joint pseudo action of a timestep is evaluated once.
    """
    T, K, C, _ = tables.shape
    returns = np.asarray(returns, dtype=float)
    F = np.broadcast_to(returns[:, None, None], (T, C, C)).copy()
    if C == 1 or float(C) ** K * T >= 2 ** 62:
        if C > 1:
            for t in range(T):
                F[t] = f_matrix(joint_pseudo_set(tables[t], actions[t]),
                                lambda a, t=t: critic_eval(states[t:t + 1].repeat(len(a), 0), a),
                                returns[t])
        return F
    codes, radix, rows, cols = _joint_codes(tables, K, C)
    true_codes = np.asarray(actions) @ radix
    differs = codes != true_codes[:, None]
    if not differs.any():
        return F
    t_idx = np.broadcast_to(np.arange(T)[:, None], codes.shape)[differs]
    keys = t_idx * C ** K + codes[differs]
    uniq, inverse = np.unique(keys, return_inverse=True)
    u_t, u_code = np.divmod(uniq, C ** K)
    u_actions = (u_code[:, None] // radix) % C
    q = np.asarray(critic_eval(states[u_t], u_actions), dtype=float).reshape(-1)
    vals = q[np.asarray(inverse).reshape(-1)]
    t_d, p_d = np.nonzero(differs)
    F[t_d, rows[p_d], cols[p_d]] = vals
    F[t_d, cols[p_d], rows[p_d]] = vals
    return F


def carsm_g_tensor(traj: Trajectory, returns, critic_eval) -> np.ndarray:
    """``(T, K, C)`` coefficients; ``critic_eval(states, actions)`` is called once."""
    if traj.dirichlet is None or len(traj.dirichlet) != len(traj):
        raise ValueError("trajectory lacks the Dirichlet draws used for sampling")
    tables = pseudo_table(traj.logits, traj.dirichlet)
    F = batched_f_matrices(tables, traj.actions, returns, traj.states, critic_eval)
    return g_tensor_step(F, traj.dirichlet, tables, traj.actions)


def carsm_gradient(traj: Trajectory, returns, policy_net: Mlp, critic_eval,
                   entropy_coef: float = 0.0) -> np.ndarray:
    """Ascent direction ``grad_theta[J_surrogate + entropy_coef * mean_t H(pi(.|s_t))]``."""
    g = carsm_g_tensor(traj, returns, critic_eval)
    dlogits = surrogate_logit_grad(g)
    if entropy_coef:
        dlogits = dlogits + entropy_coef * entropy_grad(traj.logits) / len(traj)
    return _backprop_logits(policy_net, traj.states, dlogits)


@dataclass
class McGradient:
    grad: np.ndarray
    n_rollouts: int
    rollout_steps: int
    dropped_steps: int


def mc_rollout_value(env: Env, snapshot, action, policy_net: Mlp, gamma: float,
                     rng: np.random.Generator, horizon: int | None = None) -> tuple[float, int]:
    """Discounted return of taking ``action`` at ``snapshot`` and then following the policy."""
    env.restore(snapshot)
    K, C = env.K, env.C
    res = env.step(action)
    total, discount, steps = res.reward, gamma, 1
    while not res.done and (horizon is None or steps < horizon):
        phi = policy_logits(policy_net, res.next_state, K, C)
        res = env.step(sample_action(phi, rng))
        total += discount * res.reward
        discount *= gamma
        steps += 1
    return float(total), steps


def arsm_mc_gradient(env: Env, traj: Trajectory, returns, policy_net: Mlp, gamma: float,
                     rollout_budget: int, rng: np.random.Generator,
                     horizon: int | None = None, entropy_coef: float = 0.0) -> McGradient:
    """ARSM with pseudo-action values from fresh rollouts.

    At most ``rollout_budget`` rollouts are spent per call; when more are
    needed, the earliest timesteps are skipped (their coefficients stay zero)
    until the remainder fits.
    """
    if len(traj.snapshots) != len(traj):
        raise ValueError("ARSM-MC needs per-step environment snapshots")
    T, K, C = traj.logits.shape
    returns = np.asarray(returns, dtype=float)
    tables = pseudo_table(traj.logits, traj.dirichlet)
    sets = [joint_pseudo_set(tables[t], traj.actions[t]) for t in range(T)]
    counts = np.array([len(s) for s in sets])

    keep = np.zeros(T, dtype=bool)
    used = 0
    for t in range(T - 1, -1, -1):
        if counts[t] == 0:
            continue
        if used + counts[t] > rollout_budget:
            break
        keep[t] = True
        used += counts[t]
    dropped = int(((counts > 0) & ~keep).sum())

    g = np.zeros((T, K, C))
    n_rollouts = steps = 0
    for t in range(T):
        if not keep[t]:
            continue
        vals = []
        for a in sets[t].actions:
            v, n = mc_rollout_value(env, traj.snapshots[t], a, policy_net, gamma, rng, horizon)
            vals.append(v)
            steps += n
        n_rollouts += len(vals)
        F = f_matrix(sets[t], lambda _a, vals=vals: np.array(vals), returns[t])
        g[t] = g_tensor_step(F, traj.dirichlet[t], tables[t], traj.actions[t])

    dlogits = surrogate_logit_grad(g)
    if entropy_coef:
        dlogits = dlogits + entropy_coef * entropy_grad(traj.logits) / T
    grad = _backprop_logits(policy_net, traj.states, dlogits)
    return McGradient(grad, n_rollouts, steps, dropped)
