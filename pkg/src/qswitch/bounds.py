"""Decay rate, Lyapunov certificate, finite-time error bounds and sample complexity.

The closed-form bounds assume rewards and the initial iterate are bounded
by one. Models with a larger reward bound are handled by rescaling: Q-learning
is positively homogeneous in (r, Q_0), so every bound is multiplied by
``reward_scale = max(1, R_max)``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import partial
from typing import Callable

import numpy as np

from .mdp import Mdp, action_transition_matrix, build_matrices, greedy_policy, solve_qstar
from .switching import system_matrix

RESIDUAL_TOL = 1e-8
DIRECT_SOLVE_MAX = 64
SERIES_CUTOFF = 1e-14


class CertificateError(ArithmeticError):
    """The Lyapunov equation could not be solved to the required residual."""


def decay_rate(d_min: float, discount: float, alpha: float) -> float:
    """rho = 1 - alpha d_min (1 - gamma)."""
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"step size must lie in (0, 1), got {alpha}")
    rho = 1.0 - alpha * d_min * (1.0 - discount)
    assert 0.0 < rho < 1.0, rho
    return rho


def noise_bounds(num_states: int, num_actions: int, discount: float):
    """(sup-norm bound 4/(1-gamma), second-moment bound 16|S||A|/(1-gamma)^2)."""
    if not 0.0 <= discount < 1.0:
        raise ValueError("discount must lie in [0, 1)")
    return 4.0 / (1.0 - discount), 16.0 * num_states * num_actions / (1.0 - discount) ** 2


@dataclass(frozen=True, eq=False)
class LyapunovCertificate:
    M: np.ndarray
    epsilon: float
    rho: float
    lambda_min: float
    lambda_max: float
    residual: float
    method: str

    @property
    def lambda_max_bound(self) -> float:
        n = self.M.shape[0]
        return n / (1.0 - (self.rho / (self.rho + self.epsilon)) ** 2)


def _lyapunov_direct(A, beta):
    # A^T M A - beta M = -beta I, vectorized column-major: vec(A^T M A) = (A^T kron A^T) vec M
    n = A.shape[0]
    K = np.kron(A.T, A.T) - beta * np.eye(n * n)
    rhs = -beta * np.eye(n).reshape(-1, order="F")
    m = np.linalg.solve(K, rhs)
    m = m + np.linalg.solve(K, rhs - K @ m)  # one refinement step
    return m.reshape(n, n, order="F")


def _lyapunov_series(A, beta):
    # sum_k beta^-k (A^k)^T A^k by repeated squaring: each pass doubles the terms covered
    B = A / math.sqrt(beta)
    M = np.eye(A.shape[0])
    for _ in range(200):
        term = B.T @ M @ B
        M = M + term
        B = B @ B
        if np.max(np.abs(term)) <= SERIES_CUTOFF * np.max(np.abs(M)):
            break
    return M


def lyapunov_certificate(A_star, rho: float, epsilon: float | None = None, *,
                         method: str = "auto", strict: bool = True) -> LyapunovCertificate:
    """Solve A^T M A = (rho + eps)^2 (M - I) for the Lyapunov matrix M.

    ``epsilon`` defaults to (1 - rho) / 2. ``method`` is ``"direct"`` (dense
    solve of the vectorized equation), ``"series"`` or ``"auto"`` (direct up
    to 64 unknowns per side). With ``strict`` a residual above 1e-8 or a
    solution that is not >= I raises :class:`CertificateError`.
    """
    A = np.asarray(A_star, dtype=float)
    if epsilon is None:
        epsilon = (1.0 - rho) / 2.0
    if epsilon <= 0 or not 0.0 < rho + epsilon < 1.0:
        raise ValueError(f"need epsilon > 0 and rho + epsilon in (0, 1); got rho={rho}, eps={epsilon}")
    beta = (rho + epsilon) ** 2
    if method == "auto":
        method = "direct" if A.shape[0] <= DIRECT_SOLVE_MAX else "series"
    if method == "direct":
        M = _lyapunov_direct(A, beta)
    elif method == "series":
        M = _lyapunov_series(A, beta)
    else:
        raise ValueError(f"unknown method {method!r}")
    M = 0.5 * (M + M.T)
    residual = float(np.max(np.sum(np.abs(A.T @ M @ A - beta * (M - np.eye(A.shape[0]))), axis=1)))
    eig = np.linalg.eigvalsh(M)
    cert = LyapunovCertificate(M, float(epsilon), float(rho), float(eig[0]), float(eig[-1]),
                               residual, method)
    if strict and residual > RESIDUAL_TOL:
        raise CertificateError(f"Lyapunov residual {residual:.3e} exceeds {RESIDUAL_TOL}")
    # the convergent series solution is >= I; anything else means A is not
    # stable at rate rho + eps and the solve produced a spurious matrix
    if strict and cert.lambda_min < 1.0 - 1e-9:
        raise CertificateError(f"no certificate at rate {rho + epsilon}: "
                               f"lambda_min(M) = {cert.lambda_min:.6g} < 1")
    return cert


def lower_average_bound(num_states, num_actions, d_min, discount, alpha, n, e0_sq,
                   reward_scale=1.0) -> float:
    """Bound on (1/N) sum_{k<N} E||Q^L_k - Q*||_inf for the lower system.

    ``e0_sq`` is E||Q_0 - Q*||_inf^2.
    """
    sa2 = (num_states * num_actions) ** 2
    one_m = 1.0 - discount
    first = 32.0 * alpha * sa2 / (d_min * one_m ** 3)
    second = 2.0 * sa2 / (alpha * d_min * one_m) / n
    return math.sqrt(reward_scale ** 2 * first + second * e0_sq)


def averaged_bound_prefactor(num_states, num_actions, d_min, d_max, discount) -> float:
    one_m = 1.0 - discount
    return ((4.0 * discount * d_max + d_min * one_m)
            / (d_min ** 1.5 * one_m ** 2.5) * num_states * num_actions)


def averaged_iterate_bound(num_states, num_actions, d_min, d_max, discount, alpha, n,
                   reward_scale=1.0) -> float:
    """Bound on E||Q~_N - Q*||_inf for the averaged Q-learning iterate."""
    radical = math.sqrt(32.0 * alpha + 4.0 / (n * alpha))
    return reward_scale * averaged_bound_prefactor(num_states, num_actions, d_min, d_max, discount) * radical


@dataclass(frozen=True)
class ComplexityBudget:
    eps_tgt: float
    delta: float
    alpha_star: float
    n_star: int
    phi1: float
    phi2: float
    binding: str


def _phi(num_states, num_actions, d_min, d_max, discount, eps_tgt, alpha, n):
    one_m = 1.0 - discount
    c = 20.0 * d_max * num_states * num_actions / (eps_tgt * d_min * one_m ** 2)
    phi1 = c * math.sqrt(2.0 * alpha / (d_min * one_m))
    phi2 = c * math.sqrt(2.0 / (n * alpha * d_min * one_m))
    return phi1, phi2


def sample_complexity(num_states, num_actions, d_min, d_max, discount,
                      eps_tgt: float, delta: float) -> ComplexityBudget:
    """Step size and sample count giving ||Q~_N - Q*|| < eps_tgt w.p. >= 1 - delta.

    Each of the two Markov-inequality terms is held to delta / 2. The
    result records which term is tight ("phi1", "phi2" or "both").
    """
    if eps_tgt <= 0:
        raise ValueError("accuracy must be positive")
    if not 0.0 < delta < 1.0:
        raise ValueError(f"confidence delta must lie in (0, 1), got {delta}")
    sa2 = (num_states * num_actions) ** 2
    one_m5 = (1.0 - discount) ** 5
    alpha = (delta ** 2 * eps_tgt ** 2 / 8.0) * d_min ** 3 * one_m5 / (400.0 * d_max ** 2 * sa2)
    if not 0.0 < alpha < 1.0:
        raise ValueError(f"derived step size {alpha} is outside (0, 1)")
    n_req = 3200.0 * d_max ** 2 * sa2 / (alpha * eps_tgt ** 2 * delta ** 2 * d_min ** 3 * one_m5)
    n_star = max(1, math.ceil(n_req))
    phi1, phi2 = _phi(num_states, num_actions, d_min, d_max, discount, eps_tgt, alpha, n_star)
    half = delta / 2.0
    tight1 = math.isclose(phi1, half, rel_tol=1e-9)
    tight2 = math.isclose(phi2, half, rel_tol=1e-9)
    binding = "both" if tight1 and tight2 else ("phi1" if tight1 else "phi2")
    return ComplexityBudget(eps_tgt, delta, alpha, n_star, phi1, phi2, binding)


@dataclass(frozen=True)
class MeanDecayReport:
    steps: np.ndarray
    measured: np.ndarray    # ||mean(Q^L_k) - Q*||_inf
    bound: np.ndarray       # rho^k ||Q^L_0 - Q*||_inf
    slack: np.ndarray       # bound + 3 SE - |mean| minimized over coordinates
    passed: bool


def mean_decay_check(steps, mean_err, se_err, rho, x0_norm, *, se_factor=3.0, atol=1e-12):
    """Check ||E[Q^L_k] - Q*|| <= rho^k ||Q^L_0 - Q*|| with Monte Carlo slack.

    ``mean_err`` and ``se_err`` are (K, n) trial means and standard errors
    of Q^L_k - Q* at the recorded ``steps``; each coordinate may exceed the
    bound by ``se_factor`` standard errors.
    """
    steps = np.asarray(steps)
    mean_err = np.asarray(mean_err)
    bound = rho ** steps.astype(float) * x0_norm
    slack = np.min(bound[:, None] + se_factor * np.asarray(se_err) + atol - np.abs(mean_err), axis=1)
    return MeanDecayReport(steps, np.max(np.abs(mean_err), axis=1), bound, slack,
                           bool(np.all(slack >= 0)))


@dataclass(frozen=True, eq=False)
class BoundReport:
    rho: float
    noise_infnorm_bound: float
    noise_var_bound: float
    qmax: float
    reward_scale: float
    certificate: LyapunovCertificate | None
    lower_average_rhs: Callable[[int], float]
    averaged_rhs: Callable[[int], float]


def reward_scale(mdp: Mdp) -> float:
    return max(1.0, mdp.r_max)


def bound_report(mdp: Mdp, alpha: float, *, e0_sq=None, q_star=None,
                 certificate: bool = True) -> BoundReport:
    """Every closed-form constant for one model and step size.

    ``e0_sq`` defaults to the worst case (||Q*||_inf + 1)^2 allowed by
    ||Q_0||_inf <= 1.
    """
    m = build_matrices(mdp)
    S, A, gamma = m.num_states, m.num_actions, m.discount
    rho = decay_rate(m.d_min, gamma, alpha)
    if q_star is None:
        q_star = solve_qstar(mdp)
    scale = reward_scale(mdp)
    if e0_sq is None:
        e0_sq = (np.max(np.abs(q_star)) + 1.0) ** 2
    w_inf, w_var = noise_bounds(S, A, gamma)
    cert = None
    if certificate:
        Pi = action_transition_matrix(greedy_policy(q_star, S), A)
        cert = lyapunov_certificate(system_matrix(Pi, m, alpha), rho, strict=False)
    return BoundReport(
        rho=rho,
        noise_infnorm_bound=scale * w_inf,
        noise_var_bound=scale ** 2 * w_var,
        qmax=scale / (1.0 - gamma),
        reward_scale=scale,
        certificate=cert,
        lower_average_rhs=partial(lower_average_bound, S, A, m.d_min, gamma, alpha, e0_sq=e0_sq,
                         reward_scale=scale),
        averaged_rhs=partial(averaged_iterate_bound, S, A, m.d_min, m.d_max, gamma, alpha,
                         reward_scale=scale),
    )
