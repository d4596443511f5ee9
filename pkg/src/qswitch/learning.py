"""I.i.d. transition sampling and constant step-size Q-learning."""

from __future__ import annotations

from dataclasses import dataclass, replace
from typing import NamedTuple

import numpy as np

from .mdp import CompactMatrices, Mdp, pair_index, state_values


class Sample(NamedTuple):
    """One transition (0-based indices)."""

    s: int
    a: int
    s_next: int
    r: float


def _categorical(cum: np.ndarray, u: np.ndarray) -> np.ndarray:
    # cum[..., k] is the cumulative probability of categories 0..k; the
    # last column is ignored so a row summing to 1 - 1e-16 cannot overflow
    return np.sum(cum[..., :-1] <= u[..., None], axis=-1)


class TransitionSampler:
    """Inverse-transform sampler for (s, a, s') ~ p(s) beta(a|s) P(s'|s,a).

    Each transition consumes three uniforms, in the order state, action,
    next state. Cumulative rows are computed once per model.
    """

    def __init__(self, mdp: Mdp):
        self.mdp = mdp
        self.cum_p = np.cumsum(mdp.state_dist)
        self.cum_beta = np.cumsum(mdp.behavior_policy, axis=1)
        self.cum_P = np.cumsum(mdp.transition, axis=2)

    def from_uniforms(self, u: np.ndarray):
        """Map uniforms of shape (..., 3) to index arrays (s, a, s_next) and rewards."""
        s = _categorical(self.cum_p, u[..., 0])
        a = _categorical(self.cum_beta[s], u[..., 1])
        s_next = _categorical(self.cum_P[s, a], u[..., 2])
        r = self.mdp.reward[s, a, s_next]
        return s, a, s_next, r

    def draw(self, rng: np.random.Generator) -> Sample:
        s, a, s_next, r = self.from_uniforms(rng.random(3))
        return Sample(int(s), int(a), int(s_next), float(r))


def sample_transition(mdp: Mdp, rng: np.random.Generator) -> Sample:
    return TransitionSampler(mdp).draw(rng)


def trial_rng(base_seed: int, trial_index: int = 0) -> np.random.Generator:
    """Stream for one Monte Carlo trial: seed = base_seed + trial_index."""
    return np.random.default_rng(base_seed + trial_index)


def uniform_q0(rng: np.random.Generator, size: int) -> np.ndarray:
    """Initial Q-vector with entries uniform on [-1, 1]."""
    return rng.uniform(-1.0, 1.0, size=size)


def qmax_bound(r_max: float, q0, discount: float) -> float:
    """Iterate bound max{R_max, ||Q_0||_inf} / (1 - gamma)."""
    return max(r_max, float(np.max(np.abs(q0)))) / (1.0 - discount)


def noise_infnorm_bound(r_max: float, qmax: float, discount: float) -> float:
    """2 R_max + 2 gamma Q_max + 2 Q_max; equals 4/(1-gamma) in the unit case."""
    return 2.0 * r_max + 2.0 * discount * qmax + 2.0 * qmax


@dataclass(frozen=True, eq=False)
class LearnerState:
    q: np.ndarray
    q_avg: np.ndarray
    step_count: int
    stepsize: float

    @classmethod
    def initial(cls, q0, stepsize: float) -> "LearnerState":
        if not 0.0 < stepsize < 1.0:
            raise ValueError(f"step size must lie in (0, 1), got {stepsize}")
        q0 = np.array(q0, dtype=float)
        return cls(q=q0, q_avg=q0.copy(), step_count=0, stepsize=stepsize)


def qlearning_step(state: LearnerState, sample: Sample, mdp: Mdp) -> LearnerState:
    """One asynchronous update: only entry (s, a) of q moves.

    The averaged iterate follows q_avg <- q_avg + (q - q_avg) / (k + 1)
    with the pre-update q, so after k >= 1 steps it is the mean of
    Q_0, ..., Q_{k-1}.
    """
    n_s = mdp.num_states
    q = state.q
    i = pair_index(sample.s, sample.a, n_s)
    target = sample.r + mdp.discount * np.max(q[sample.s_next::n_s])
    q_next = q.copy()
    q_next[i] = q[i] + state.stepsize * (target - q[i])
    k = state.step_count
    q_avg = state.q_avg + (q - state.q_avg) / (k + 1)
    return replace(state, q=q_next, q_avg=q_avg, step_count=k + 1)


def sample_term(q, sample: Sample, matrices: CompactMatrices) -> np.ndarray:
    """(e_a kron e_s)(r + gamma max_u q(s',u) - q(s,a)): the raw TD increment."""
    n_s = matrices.num_states
    q = np.asarray(q, dtype=float)
    v = state_values(q, n_s)
    out = np.zeros(matrices.size)
    i = pair_index(sample.s, sample.a, n_s)
    out[i] = sample.r + matrices.discount * v[sample.s_next] - q[i]
    return out


def expected_update(q, matrices: CompactMatrices) -> np.ndarray:
    """Drift DR + gamma D P Pi_q q - D q."""
    q = np.asarray(q, dtype=float)
    d = matrices.d
    v = state_values(q, matrices.num_states)
    return d * matrices.R_vec + matrices.discount * (d * (matrices.P_mat @ v)) - d * q


def noise_vector(q, sample: Sample, matrices: CompactMatrices) -> np.ndarray:
    """Zero-mean noise w: the TD increment minus its conditional expectation."""
    return sample_term(q, sample, matrices) - expected_update(q, matrices)


def run_qlearning(mdp: Mdp, alpha: float, num_steps: int, seed: int, q0=None) -> LearnerState:
    """Plain Q-learning driver; q0 defaults to a uniform [-1, 1] draw from the stream."""
    rng = trial_rng(seed)
    if q0 is None:
        q0 = uniform_q0(rng, mdp.size)
    sampler = TransitionSampler(mdp)
    state = LearnerState.initial(q0, alpha)
    for _ in range(num_steps):
        state = qlearning_step(state, sampler.draw(rng), mdp)
    return state
