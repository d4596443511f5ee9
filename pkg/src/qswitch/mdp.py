"""Finite MDP model, compact matrix notation and a Q* oracle.

Q-functions are flat vectors in action-major order: entry ``a * S + s``
holds ``Q(s, a)`` (0-based), i.e. the blocks ``Q(., 1), ..., Q(., |A|)``
stacked on top of each other. Every module in the package shares this
layout.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

STOCHASTIC_TOL = 1e-12


class MdpValidationError(ValueError):
    """Raised when an MDP description is malformed or violates an assumption.

    ``field`` names the offending entry of the description.
    """

    def __init__(self, field: str, message: str):
        super().__init__(f"{field}: {message}")
        self.field = field
        self.message = message


@dataclass(frozen=True, eq=False)
class Mdp:
    """Validated finite MDP with i.i.d. state-action sampling.

    Arrays are indexed ``transition[s, a, s']``, ``reward[s, a, s']``,
    ``behavior_policy[s, a]`` and ``state_dist[s]``. Build instances with
    :func:`validate`.
    """

    transition: np.ndarray
    reward: np.ndarray
    discount: float
    behavior_policy: np.ndarray
    state_dist: np.ndarray
    reward_bound: float = 1.0
    visit: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        visit = self.state_dist[:, None] * self.behavior_policy
        object.__setattr__(self, "visit", visit)
        for arr in (self.transition, self.reward, self.behavior_policy,
                    self.state_dist, self.visit):
            arr.setflags(write=False)

    @property
    def num_states(self) -> int:
        return self.transition.shape[0]

    @property
    def num_actions(self) -> int:
        return self.transition.shape[1]

    @property
    def size(self) -> int:
        return self.num_states * self.num_actions

    @property
    def r_max(self) -> float:
        return float(np.max(np.abs(self.reward)))

    @property
    def d(self) -> np.ndarray:
        """Visit probabilities d(s, a) = p(s) beta(a|s) as a flat vector."""
        return flatten(self.visit)


@dataclass(frozen=True, eq=False)
class CompactMatrices:
    """The stacked matrices P, R, D of the switching-system notation."""

    P_mat: np.ndarray
    R_vec: np.ndarray
    D_mat: np.ndarray
    d: np.ndarray
    d_min: float
    d_max: float
    num_states: int
    num_actions: int
    discount: float

    @property
    def size(self) -> int:
        return self.num_states * self.num_actions


def flatten(table: np.ndarray) -> np.ndarray:
    """(S, A) table -> action-major flat vector."""
    return np.ascontiguousarray(np.asarray(table, dtype=float).T).reshape(-1)


def unflatten(q: np.ndarray, num_states: int) -> np.ndarray:
    """Flat vector -> (S, A) table; inverse of :func:`flatten`."""
    q = np.asarray(q, dtype=float)
    return q.reshape(-1, num_states).T.copy()


def pair_index(s: int, a: int, num_states: int) -> int:
    """Flat index of the 0-based pair (s, a); matches e_a kron e_s."""
    return a * num_states + s


def _as_array(raw, name, shape=None):
    try:
        arr = np.array(raw, dtype=float)
    except (TypeError, ValueError) as exc:
        raise MdpValidationError(name, f"not numeric ({exc})") from None
    if shape is not None:
        if arr.size != int(np.prod(shape)):
            raise MdpValidationError(
                name, f"expected {int(np.prod(shape))} entries for shape {shape}, got {arr.size}")
        arr = arr.reshape(shape)
    if not np.all(np.isfinite(arr)):
        raise MdpValidationError(name, "contains non-finite values")
    return arr


def _check_distribution(arr, name, axis=-1):
    if np.any(arr < 0):
        raise MdpValidationError(name, "negative probability")
    sums = arr.sum(axis=axis)
    bad = np.abs(sums - 1.0) > STOCHASTIC_TOL
    if np.any(bad):
        worst = float(np.max(np.abs(sums - 1.0)))
        raise MdpValidationError(name, f"rows must sum to 1 (max deviation {worst:.3g})")


def validate(raw, *, reward_bound=None) -> Mdp:
    """Build an :class:`Mdp` from a mapping, checking every model assumption.

    ``raw`` carries ``num_states``, ``num_actions``, ``discount``,
    ``transition`` and ``reward`` (row-major ``s, a, s'``),
    ``behavior_policy`` (row-major ``s, a``) and ``state_dist``. Nested
    lists and flat lists are both accepted.

    Rewards must satisfy ``max |r| <= reward_bound``; the bound defaults to
    ``raw.get("reward_bound", 1.0)``.
    """
    required = ("num_states", "num_actions", "discount", "transition",
                "reward", "behavior_policy", "state_dist")
    for key in required:
        if key not in raw:
            raise MdpValidationError(key, "missing field")

    n_s, n_a = raw["num_states"], raw["num_actions"]
    for key, val in (("num_states", n_s), ("num_actions", n_a)):
        if isinstance(val, bool) or not isinstance(val, (int, np.integer)) or val < 1:
            raise MdpValidationError(key, f"must be a positive integer, got {val!r}")
    n_s, n_a = int(n_s), int(n_a)

    try:
        gamma = float(raw["discount"])
    except (TypeError, ValueError):
        raise MdpValidationError("discount", f"not a number: {raw['discount']!r}") from None
    if not 0.0 <= gamma < 1.0:
        raise MdpValidationError("discount", f"must lie in [0, 1), got {gamma}")

    transition = _as_array(raw["transition"], "transition", (n_s, n_a, n_s))
    reward = _as_array(raw["reward"], "reward", (n_s, n_a, n_s))
    beta = _as_array(raw["behavior_policy"], "behavior_policy", (n_s, n_a))
    p = _as_array(raw["state_dist"], "state_dist", (n_s,))

    _check_distribution(transition, "transition")
    _check_distribution(beta, "behavior_policy")
    _check_distribution(p, "state_dist")

    visit = p[:, None] * beta
    if np.any(visit <= 0):
        s, a = np.argwhere(visit <= 0)[0]
        raise MdpValidationError(
            "behavior_policy", f"pair (s={s + 1}, a={a + 1}) is never visited: d(s,a) = 0")

    if reward_bound is None:
        reward_bound = float(raw.get("reward_bound", 1.0))
    r_max = float(np.max(np.abs(reward)))
    if r_max > reward_bound:
        raise MdpValidationError(
            "reward", f"max |r| = {r_max} exceeds the reward bound {reward_bound}")

    return Mdp(transition, reward, gamma, beta, p, reward_bound=float(reward_bound))


def to_description(mdp: Mdp) -> dict:
    """Inverse of :func:`validate`: a plain mapping of nested lists."""
    desc = {
        "num_states": mdp.num_states,
        "num_actions": mdp.num_actions,
        "discount": mdp.discount,
        "transition": mdp.transition.tolist(),
        "reward": mdp.reward.tolist(),
        "behavior_policy": mdp.behavior_policy.tolist(),
        "state_dist": mdp.state_dist.tolist(),
    }
    if mdp.reward_bound != 1.0:
        desc["reward_bound"] = mdp.reward_bound
    return desc


def build_matrices(mdp: Mdp) -> CompactMatrices:
    n_s, n_a = mdp.num_states, mdp.num_actions
    # row a*S + s of P_mat is P(.|s, a)
    P_mat = np.ascontiguousarray(mdp.transition.transpose(1, 0, 2).reshape(n_s * n_a, n_s))
    R_vec = flatten(np.sum(mdp.transition * mdp.reward, axis=2))
    d = mdp.d
    for arr in (P_mat, R_vec, d):
        arr.setflags(write=False)
    return CompactMatrices(
        P_mat=P_mat,
        R_vec=R_vec,
        D_mat=np.diag(d),
        d=d,
        d_min=float(d.min()),
        d_max=float(d.max()),
        num_states=n_s,
        num_actions=n_a,
        discount=mdp.discount,
    )


def greedy_policy(q, num_states: int) -> np.ndarray:
    """Greedy action per state; ties go to the lowest action index."""
    return np.argmax(np.asarray(q, dtype=float).reshape(-1, num_states), axis=0)


def action_transition_matrix(policy, num_actions: int) -> np.ndarray:
    """Selector matrix Pi with row s equal to pi(s)^T kron e_s^T.

    ``policy`` is either a length-S array of actions (deterministic) or an
    (S, A) array of action probabilities.
    """
    policy = np.asarray(policy)
    if policy.ndim == 1:
        n_s = policy.shape[0]
        probs = np.zeros((n_s, num_actions))
        probs[np.arange(n_s), policy.astype(int)] = 1.0
    else:
        probs = policy.astype(float)
        n_s = probs.shape[0]
    Pi = np.zeros((n_s, n_s * num_actions))
    for s in range(n_s):
        Pi[s, s::n_s] = probs[s]
    return Pi


def state_values(q, num_states: int) -> np.ndarray:
    """max_u q(s, u) for every state, i.e. Pi_q q."""
    return np.max(np.asarray(q, dtype=float).reshape(-1, num_states), axis=0)


def bellman_optimality_apply(q, matrices: CompactMatrices) -> np.ndarray:
    """(TQ)(s,a) = R(s,a) + gamma * sum_s' P(s'|s,a) max_u q(s',u)."""
    v = state_values(q, matrices.num_states)
    return matrices.R_vec + matrices.discount * (matrices.P_mat @ v)


def evaluate_policy(matrices: CompactMatrices, policy) -> np.ndarray:
    """Exact Q^pi for a deterministic policy by a dense linear solve."""
    Pi = action_transition_matrix(policy, matrices.num_actions)
    lhs = np.eye(matrices.size) - matrices.discount * matrices.P_mat @ Pi
    return np.linalg.solve(lhs, matrices.R_vec)


def solve_qstar(mdp: Mdp, tol: float = 1e-12, max_iter: int = 1_000_000) -> np.ndarray:
    """Optimal Q-function by value iteration, guaranteeing ||Q - Q*|| <= tol.

    Iterates stop once ||TQ - Q|| <= tol (1 - gamma) / gamma. That threshold
    can sit below double-precision resolution when gamma is near one, so the
    iterate is then polished by evaluating its greedy policy exactly; the
    polished vector is kept when its Bellman residual is smaller.
    """
    if tol <= 0:
        raise ValueError("tol must be positive")
    m = build_matrices(mdp)
    gamma = mdp.discount
    q = np.zeros(m.size)
    if gamma == 0.0:
        return bellman_optimality_apply(q, m)

    threshold = tol * (1.0 - gamma) / gamma
    scale = max(mdp.r_max, 1e-300) / (1.0 - gamma)
    floor = 64 * np.finfo(float).eps * scale
    for _ in range(max_iter):
        tq = bellman_optimality_apply(q, m)
        gap = np.max(np.abs(tq - q))
        q = tq
        if gap <= max(threshold, floor):
            break

    polished = evaluate_policy(m, greedy_policy(q, m.num_states))
    res_q = np.max(np.abs(bellman_optimality_apply(q, m) - q))
    res_p = np.max(np.abs(bellman_optimality_apply(polished, m) - polished))
    return polished if res_p <= res_q else q


# Built-in models

def example1() -> Mdp:
    """One state, one action, reward 1, gamma 0.9; Q* = 10."""
    return validate({
        "num_states": 1, "num_actions": 1, "discount": 0.9,
        "transition": [1.0], "reward": [1.0],
        "behavior_policy": [1.0], "state_dist": [1.0],
    })


def example3() -> Mdp:
    """One state, two actions; reward 1 for action 1, uniform behavior."""
    return validate({
        "num_states": 1, "num_actions": 2, "discount": 0.9,
        "transition": [[[1.0], [1.0]]],
        "reward": [[[1.0], [0.0]]],
        "behavior_policy": [[0.5, 0.5]], "state_dist": [1.0],
    })


def paper2state() -> Mdp:
    """Two-state, two-action benchmark with rewards in [-3, 2].

    The rewards exceed the unit bound, so the model carries reward_bound=3.
    """
    P1 = [[0.3863, 0.6137], [0.3604, 0.6396]]
    P2 = [[0.8639, 0.1361], [0.7971, 0.2029]]
    r = {(0, 0): -3.0, (1, 0): 1.0, (0, 1): 2.0, (1, 1): -1.0}
    transition = [[P1[s], P2[s]] for s in range(2)]
    reward = [[[r[s, a]] * 2 for a in range(2)] for s in range(2)]
    return validate({
        "num_states": 2, "num_actions": 2, "discount": 0.9,
        "transition": transition, "reward": reward,
        "behavior_policy": [[0.2, 0.8], [0.7, 0.3]],
        "state_dist": [0.2, 0.8],
        "reward_bound": 3.0,
    })


BUILTINS = {
    "example1": example1,
    "example3": example3,
    "paper2state": paper2state,
}


def random_mdp(num_states: int, num_actions: int, rng, discount: float = 0.9) -> Mdp:
    """Random MDP: Dirichlet(1) rows for P and beta, normalized uniform p,
    rewards uniform on [-1, 1]."""
    n_s, n_a = num_states, num_actions
    transition = rng.dirichlet(np.ones(n_s), size=(n_s, n_a))
    beta = rng.dirichlet(np.ones(n_a), size=n_s)
    p = rng.uniform(size=n_s)
    p = p / p.sum()
    reward = rng.uniform(-1.0, 1.0, size=(n_s, n_a, n_s))
    # renormalize so rows pass the 1e-12 stochasticity check exactly
    transition = transition / transition.sum(axis=2, keepdims=True)
    beta = beta / beta.sum(axis=1, keepdims=True)
    return validate({
        "num_states": n_s, "num_actions": n_a, "discount": discount,
        "transition": transition, "reward": reward,
        "behavior_policy": beta, "state_dist": p,
    })
