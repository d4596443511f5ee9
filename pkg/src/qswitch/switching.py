"""Q-learning as a stochastic affine switching system and its comparison systems.

In error coordinates ``x = Q - Q*`` the Q-learning iterate obeys

    x_{k+1} = A_{Q_k} x_k + b_{Q_k} + alpha w_k

with ``A_Q = I + alpha (gamma D P Pi_Q - D)`` and
``b_Q = alpha gamma D P (Pi_Q - Pi_{Q*}) Q*``. Dropping ``b`` (which is
elementwise nonpositive) gives the upper comparison system; freezing the
mode at ``Q*`` gives the lower one. All three share the noise ``w_k``
realized from the original iterate and the same sample.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ._kernel import SANDWICH_TOL, advance
from .learning import TransitionSampler, trial_rng, uniform_q0
from .mdp import (CompactMatrices, Mdp, action_transition_matrix, build_matrices,
                  greedy_policy, solve_qstar)



def _check_alpha(alpha):
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"step size must lie in (0, 1), got {alpha}")


@dataclass(frozen=True, eq=False)
class SwitchingMatrices:
    A: np.ndarray
    b: np.ndarray
    B: np.ndarray


def system_matrix(Pi: np.ndarray, matrices: CompactMatrices, alpha: float) -> np.ndarray:
    """I + alpha (gamma D P Pi - D) for an arbitrary selector matrix Pi."""
    DP = matrices.d[:, None] * matrices.P_mat
    return np.eye(matrices.size) + alpha * (matrices.discount * DP @ Pi - matrices.D_mat)


def realize_matrices(q, q_star, matrices: CompactMatrices, alpha: float) -> SwitchingMatrices:
    _check_alpha(alpha)
    n_s, n_a = matrices.num_states, matrices.num_actions
    Pi_q = action_transition_matrix(greedy_policy(q, n_s), n_a)
    Pi_star = action_transition_matrix(greedy_policy(q_star, n_s), n_a)
    DP = matrices.d[:, None] * matrices.P_mat
    B = alpha * matrices.discount * DP @ (Pi_q - Pi_star)
    return SwitchingMatrices(A=system_matrix(Pi_q, matrices, alpha), b=B @ q_star, B=B)


def step_lower(q_lower, q_star, w, A_star, alpha):
    """Q* + A_{Q*}(Q^L - Q*) + alpha w."""
    return q_star + A_star @ (q_lower - q_star) + alpha * w


def step_upper(q_upper, q_current, q_star, w, matrices: CompactMatrices, alpha):
    """Q* + A_{Q_k}(Q^U - Q*) + alpha w, with the mode set by the original iterate."""
    Pi = action_transition_matrix(greedy_policy(q_current, matrices.num_states),
                                  matrices.num_actions)
    return q_star + system_matrix(Pi, matrices, alpha) @ (q_upper - q_star) + alpha * w


def step_original(q, q_star, w, sw: SwitchingMatrices, alpha):
    """Q* + A_{Q_k}(Q_k - Q*) + b_{Q_k} + alpha w (sw realized at q)."""
    return q_star + sw.A @ (q - q_star) + sw.b + alpha * w


def step_error(err, q_lower, q_star, sw: SwitchingMatrices):
    """Noise-free gap recursion A_{Q_k} err + B_{Q_k}(Q^L - Q*)."""
    return sw.A @ err + sw.B @ (q_lower - q_star)


def simulate_deterministic_switched(matrices: CompactMatrices, q_star, alpha, q0, policies):
    """Iterate x_{k+1} = A_{H_k} x_k for an arbitrary sequence of policies.

    ``policies`` yields deterministic policies (length-S action arrays).
    Returns the error norms ||Q_k - Q*||_inf for k = 0..len(policies).
    """
    _check_alpha(alpha)
    x = np.asarray(q0, dtype=float) - q_star
    norms = [np.max(np.abs(x))]
    for pol in policies:
        A = system_matrix(action_transition_matrix(pol, matrices.num_actions), matrices, alpha)
        x = A @ x
        norms.append(np.max(np.abs(x)))
    return np.array(norms)


def recorded_steps(num_steps: int, stride: int) -> np.ndarray:
    """0, stride, 2 stride, ... plus the final step."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    steps = list(range(0, num_steps + 1, stride))
    if steps[-1] != num_steps:
        steps.append(num_steps)
    return np.array(steps)


class CoupledEngine:
    """Batched co-simulation of the original, lower and upper systems.

    Every array has a leading trial axis. The original system is advanced in
    its switching form, which is algebraically identical to the asynchronous
    update; sharing one code path for the three systems keeps them
    bit-identical whenever their modes coincide. Trials are independent:
    trial ``i`` of a batch reproduces the same trial run alone, bit for bit.
    """

    chunk = 4096

    def __init__(self, mdp: Mdp, alpha: float, q_star=None):
        _check_alpha(alpha)
        self.mdp = mdp
        self.alpha = float(alpha)
        self.matrices = m = build_matrices(mdp)
        self.q_star = solve_qstar(mdp) if q_star is None else np.asarray(q_star, dtype=float)
        self.S, self.A, self.n = m.num_states, m.num_actions, m.size
        self.gamma = m.discount
        self.d = m.d
        self.P = np.ascontiguousarray(m.P_mat)
        self.dR = m.d * m.R_vec
        self.pol_star = greedy_policy(self.q_star, self.S)
        self.idx_star = self.pol_star * self.S + np.arange(self.S)
        self.v_star = self.q_star[self.idx_star]
        self.sampler = TransitionSampler(mdp)

    def run(self, num_steps, rngs, q0, q0_lower=None, q0_upper=None, record_at=(), observer=None):
        """Advance all systems ``num_steps`` times.

        ``rngs`` holds one generator per trial; each step consumes three
        uniforms per trial. At each step listed in ``record_at`` the observer
        receives a :class:`BatchSnapshot` of the pre-update state. Returns a
        :class:`RunSummary` of per-trial extremes over every step.
        """
        q = np.array(q0, dtype=float, ndmin=2)
        T = q.shape[0]
        ql = q.copy() if q0_lower is None else np.array(q0_lower, dtype=float, ndmin=2)
        qu = q.copy() if q0_upper is None else np.array(q0_upper, dtype=float, ndmin=2)
        if ql.shape != q.shape or qu.shape != q.shape:
            raise ValueError("initial conditions must share one shape")
        qavg = q.copy()
        lower_norm_sum = np.zeros(T)
        summary = RunSummary.empty(T)
        summary.update_state(q, ql, qu)
        sample = np.zeros((T, 4))
        noise = np.zeros(T)
        smp = self.sampler

        # uniforms are drawn per trial in chunks; the stream is the same for
        # any chunk size, so shrink it for large batches to bound memory
        chunk = max(64, min(self.chunk, (1 << 18) // T))
        marks = {0, num_steps}
        marks.update(int(k) for k in record_at if 0 <= k <= num_steps)
        marks.update(range(0, num_steps, chunk))
        marks = sorted(marks)
        record_at = set(int(k) for k in record_at)

        u = np.empty((T, 0, 3))
        chunk_start = 0
        for k0, k1 in zip(marks[:-1], marks[1:]):
            if k0 % chunk == 0:
                size = min(chunk, num_steps - k0)
                u = np.stack([g.random((size, 3)) for g in rngs])
                chunk_start = k0
            snap = None
            if k0 in record_at and observer is not None:
                snap = BatchSnapshot(k0, q.copy(), ql.copy(), qu.copy(), qavg.copy(),
                                     lower_norm_sum.copy(), None, None)
            advance(k0, k1, u, k0 - chunk_start, q, ql, qu, qavg, lower_norm_sum,
                    self.q_star, self.idx_star, self.v_star, self.P, self.d, self.dR,
                    self.gamma, self.alpha, smp.cum_p, smp.cum_beta, smp.cum_P,
                    self.mdp.reward, sample, noise,
                    summary.sandwich_violations, summary.max_violation, summary.max_q_norm,
                    summary.max_noise_norm, summary.min_h, summary.max_b)
            if snap is not None:
                snap.sample = (sample[:, 0].astype(int), sample[:, 1].astype(int),
                               sample[:, 2].astype(int), sample[:, 3].copy())
                snap.noise_infnorm = noise.copy()
                observer(snap)
        if num_steps in record_at and observer is not None:
            observer(BatchSnapshot(num_steps, q, ql, qu, qavg, lower_norm_sum, None, None))
        return summary


@dataclass
class BatchSnapshot:
    k: int
    q: np.ndarray
    q_lower: np.ndarray
    q_upper: np.ndarray
    q_avg: np.ndarray
    lower_norm_sum: np.ndarray   # sum_{j<k} ||Q^L_j - Q*||_inf per trial
    sample: tuple | None         # (s, a, s_next, r) arrays consumed at step k
    noise_infnorm: np.ndarray | None


@dataclass
class RunSummary:
    """Per-trial extremes over every simulated step."""

    sandwich_violations: np.ndarray
    max_violation: np.ndarray
    max_q_norm: np.ndarray
    max_noise_norm: np.ndarray
    min_h: np.ndarray
    max_b: np.ndarray

    @classmethod
    def empty(cls, T):
        return cls(np.zeros(T, dtype=np.int64), np.full(T, -np.inf), np.zeros(T),
                   np.zeros(T), np.full(T, np.inf), np.full(T, -np.inf))

    def update_state(self, q, ql, qu):
        gap = np.maximum(ql - q, q - qu)
        worst = gap.max(axis=1)
        if worst.max() > SANDWICH_TOL:
            self.sandwich_violations += np.sum(gap > SANDWICH_TOL, axis=1)
        self.max_violation = np.maximum(self.max_violation, worst)
        self.max_q_norm = np.maximum(self.max_q_norm, np.max(np.abs(q), axis=1))



@dataclass(eq=False)
class CoupledTrajectory:
    """Recorded steps of one co-simulated trial.

    Row ``i`` holds the iterates at step ``steps[i]`` together with the
    sample and noise norm consumed to leave that step; the final row has
    no sample (indices -1, reward and noise NaN).
    """

    steps: np.ndarray
    q: np.ndarray
    q_lower: np.ndarray
    q_upper: np.ndarray
    q_avg: np.ndarray
    sample_s: np.ndarray
    sample_a: np.ndarray
    sample_s_next: np.ndarray
    sample_r: np.ndarray
    noise_infnorm: np.ndarray
    q_star: np.ndarray
    num_states: int
    summary: RunSummary | None = field(default=None, repr=False)

    @property
    def err_upper_lower(self) -> np.ndarray:
        return self.q_upper - self.q_lower

    @property
    def num_actions(self) -> int:
        return self.q.shape[1] // self.num_states


def co_simulate(mdp: Mdp, alpha: float, num_steps: int, seed: int, q0=None, *,
                q_star=None, q0_lower=None, q0_upper=None, stride: int = 1,
                center=None, offset: float = 0.0) -> CoupledTrajectory:
    """Run one trial of the three coupled systems on a shared sample stream.

    ``q0`` defaults to ``center`` (zero if omitted) plus a uniform [-1, 1]
    draw taken from the trial stream before any transition. The comparison
    systems start at ``q0 -/+ offset`` unless ``q0_lower`` / ``q0_upper``
    are given.
    """
    engine = CoupledEngine(mdp, alpha, q_star)
    rng = trial_rng(seed)
    if q0 is None:
        q0 = uniform_q0(rng, mdp.size)
        if center is not None:
            q0 = q0 + np.asarray(center, dtype=float)
    q0 = np.asarray(q0, dtype=float)
    if q0_lower is None:
        q0_lower = q0 - offset
    if q0_upper is None:
        q0_upper = q0 + offset
    steps = recorded_steps(num_steps, stride)
    K, n = len(steps), mdp.size
    rec = {name: np.empty((K, n)) for name in ("q", "q_lower", "q_upper", "q_avg")}
    smp = {"s": np.full(K, -1), "a": np.full(K, -1), "s_next": np.full(K, -1),
           "r": np.full(K, np.nan), "w": np.full(K, np.nan)}
    row = iter(range(K))

    def observe(snap: BatchSnapshot):
        i = next(row)
        rec["q"][i], rec["q_lower"][i] = snap.q[0], snap.q_lower[0]
        rec["q_upper"][i], rec["q_avg"][i] = snap.q_upper[0], snap.q_avg[0]
        if snap.sample is not None:
            s, a, s_next, r = snap.sample
            smp["s"][i], smp["a"][i], smp["s_next"][i] = s[0], a[0], s_next[0]
            smp["r"][i], smp["w"][i] = r[0], snap.noise_infnorm[0]

    summary = engine.run(num_steps, [rng], q0, q0_lower, q0_upper, steps, observe)
    return CoupledTrajectory(
        steps=steps, q=rec["q"], q_lower=rec["q_lower"], q_upper=rec["q_upper"],
        q_avg=rec["q_avg"], sample_s=smp["s"], sample_a=smp["a"],
        sample_s_next=smp["s_next"], sample_r=smp["r"], noise_infnorm=smp["w"],
        q_star=engine.q_star, num_states=mdp.num_states, summary=summary,
    )
