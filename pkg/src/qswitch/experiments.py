"""Monte Carlo ensembles, the invariant checklist and step-size comparisons."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import bounds
from .learning import (LearnerState, Sample, TransitionSampler, expected_update,
                       noise_infnorm_bound, noise_vector, qlearning_step, qmax_bound,
                       trial_rng, uniform_q0)
from .mdp import (BUILTINS, Mdp, MdpValidationError, action_transition_matrix,
                  bellman_optimality_apply, build_matrices, greedy_policy, random_mdp,
                  solve_qstar)
from .switching import (SANDWICH_TOL, CoupledEngine, co_simulate, realize_matrices,
                        recorded_steps, simulate_deterministic_switched, step_error,
                        step_lower, step_original, step_upper, system_matrix)

log = logging.getLogger(__name__)

Q0_MODES = ("uniform", "fixed", "centered")


class SandwichViolation(RuntimeError):
    """Comparison-system ordering broke: an implementation bug, not noise."""


def load_mdp(source, seed: int = 0) -> Mdp:
    """Builtin name, ``random[:S:A]`` or a path to an MDP description file."""
    if isinstance(source, Mdp):
        return source
    if source in BUILTINS:
        return BUILTINS[source]()
    if str(source).startswith("random"):
        parts = str(source).split(":")
        n_s, n_a = (int(parts[1]), int(parts[2])) if len(parts) == 3 else (3, 2)
        return random_mdp(n_s, n_a, np.random.default_rng(seed))
    path = Path(source)
    if not path.exists() and "/" not in str(source) and "." not in str(source):
        raise ValueError(f"{source!r} is neither a builtin model nor a file "
                         f"(builtins: {', '.join(BUILTINS)}, random[:S:A])")
    from .io import read_mdp
    return read_mdp(path)


@dataclass
class ExperimentConfig:
    mdp_source: object = "paper2state"
    alpha: float = 0.002
    num_steps: int = 10_000
    num_trials: int = 100
    base_seed: int = 0
    q0_mode: str = "uniform"
    q0: list | None = None
    record_stride: int = 10
    comparison_offset: float = 0.0

    def __post_init__(self):
        if not 0.0 < self.alpha < 1.0:
            raise ValueError(f"alpha must lie in (0, 1), got {self.alpha}")
        if self.num_steps < 1 or self.num_trials < 1 or self.record_stride < 1:
            raise ValueError("num_steps, num_trials and record_stride must be >= 1")
        if self.q0_mode not in Q0_MODES:
            raise ValueError(f"q0_mode must be one of {Q0_MODES}, got {self.q0_mode!r}")
        if self.q0_mode == "fixed" and self.q0 is None:
            raise ValueError("q0_mode 'fixed' needs a q0 vector")
        if self.comparison_offset < 0:
            raise ValueError("comparison_offset must be nonnegative")


def initial_conditions(cfg: ExperimentConfig, mdp: Mdp, q_star, rngs):
    """Per-trial Q_0 rows; uniform draws come first on each trial stream."""
    n = mdp.size
    if cfg.q0_mode == "fixed":
        q0 = np.asarray(cfg.q0, dtype=float).reshape(n)
        return np.tile(q0, (len(rngs), 1))
    draws = np.stack([uniform_q0(g, n) for g in rngs])
    return draws + q_star if cfg.q0_mode == "centered" else draws


def _mean_se(x):
    x = np.asarray(x, dtype=float)
    mean = x.mean(axis=0)
    if x.shape[0] < 2:
        return mean, np.zeros_like(mean)
    return mean, x.std(axis=0, ddof=1) / math.sqrt(x.shape[0])


CHANNELS = ("q", "lower", "upper", "gap", "avg")


@dataclass(eq=False)
class EnsembleStats:
    """Trial statistics at the recorded steps.

    ``norm_mean[c]`` / ``norm_se[c]`` hold the mean and standard error of the
    sup-norm of channel ``c``: ``q`` = Q_k - Q*, ``lower`` = Q^L_k - Q*,
    ``upper`` = Q^U_k - Q*, ``gap`` = Q^U_k - Q^L_k, ``avg`` = Q~_k - Q*.
    ``lower_running`` is (1/k) sum_{j<k} ||Q^L_j - Q*|| (k >= 1).
    """

    steps: np.ndarray
    num_trials: int
    q_star: np.ndarray
    norm_mean: dict
    norm_se: dict
    err_mean: np.ndarray
    err_se: np.ndarray
    lower_err_mean: np.ndarray
    lower_err_se: np.ndarray
    lower_running_mean: np.ndarray
    lower_running_se: np.ndarray
    e0_sq: float
    sandwich_violations: int
    max_violation: float
    max_q_norm: float
    max_noise_norm: float
    min_h: float
    max_b: float
    trial_max_q_norm: np.ndarray = field(repr=False)
    trial_max_noise_norm: np.ndarray = field(repr=False)
    initial_q_norm: np.ndarray = field(repr=False)

    def at(self, k: int) -> int:
        """Row index of recorded step k."""
        hits = np.flatnonzero(self.steps == k)
        if hits.size == 0:
            raise KeyError(f"step {k} was not recorded")
        return int(hits[0])


class _EnsembleRecorder:
    def __init__(self, steps, q_star, n):
        K = len(steps)
        self.q_star = q_star
        self.rows = {int(k): i for i, k in enumerate(steps)}
        self.norm_mean = {c: np.zeros(K) for c in CHANNELS}
        self.norm_se = {c: np.zeros(K) for c in CHANNELS}
        self.err_mean, self.err_se = np.zeros((K, n)), np.zeros((K, n))
        self.lerr_mean, self.lerr_se = np.zeros((K, n)), np.zeros((K, n))
        self.run_mean, self.run_se = np.full(K, np.nan), np.full(K, np.nan)

    def __call__(self, snap):
        i = self.rows[snap.k]
        qs = self.q_star
        x, xl, xu = snap.q - qs, snap.q_lower - qs, snap.q_upper - qs
        channels = {"q": x, "lower": xl, "upper": xu, "gap": snap.q_upper - snap.q_lower,
                    "avg": snap.q_avg - qs}
        for c, arr in channels.items():
            self.norm_mean[c][i], self.norm_se[c][i] = _mean_se(np.max(np.abs(arr), axis=1))
        self.err_mean[i], self.err_se[i] = _mean_se(x)
        self.lerr_mean[i], self.lerr_se[i] = _mean_se(xl)
        if snap.k > 0:
            self.run_mean[i], self.run_se[i] = _mean_se(snap.lower_norm_sum / snap.k)


def run_ensemble(cfg: ExperimentConfig, mdp: Mdp | None = None, q_star=None,
                 extra_steps=()) -> EnsembleStats:
    """Run ``num_trials`` coupled trials with seeds base_seed + i and aggregate.

    Raises :class:`SandwichViolation` if any comparison ordering fails by more
    than 1e-12 at any step.
    """
    if mdp is None:
        mdp = load_mdp(cfg.mdp_source, cfg.base_seed)
    if q_star is None:
        q_star = solve_qstar(mdp)
    engine = CoupledEngine(mdp, cfg.alpha, q_star)
    rngs = [trial_rng(cfg.base_seed, i) for i in range(cfg.num_trials)]
    q0 = initial_conditions(cfg, mdp, q_star, rngs)
    off = cfg.comparison_offset
    steps = np.union1d(recorded_steps(cfg.num_steps, cfg.record_stride),
                       np.asarray(list(extra_steps), dtype=int))
    rec = _EnsembleRecorder(steps, q_star, mdp.size)
    summary = engine.run(cfg.num_steps, rngs, q0, q0 - off, q0 + off, steps, rec)
    violations = int(summary.sandwich_violations.sum())
    if violations:
        raise SandwichViolation(
            f"{violations} elementwise ordering violations (max {summary.max_violation.max():.3e})")
    return EnsembleStats(
        steps=steps, num_trials=cfg.num_trials, q_star=q_star,
        norm_mean=rec.norm_mean, norm_se=rec.norm_se,
        err_mean=rec.err_mean, err_se=rec.err_se,
        lower_err_mean=rec.lerr_mean, lower_err_se=rec.lerr_se,
        lower_running_mean=rec.run_mean, lower_running_se=rec.run_se,
        e0_sq=float(np.mean(np.max(np.abs(q0 - q_star), axis=1) ** 2)),
        sandwich_violations=violations,
        max_violation=float(summary.max_violation.max()),
        max_q_norm=float(summary.max_q_norm.max()),
        max_noise_norm=float(summary.max_noise_norm.max()),
        min_h=float(summary.min_h.min()),
        max_b=float(summary.max_b.max()),
        trial_max_q_norm=summary.max_q_norm,
        trial_max_noise_norm=summary.max_noise_norm,
        initial_q_norm=np.max(np.abs(q0), axis=1),
    )


# Verification checklist

@dataclass
class CheckResult:
    name: str
    passed: bool
    margin: float
    detail: str = ""


@dataclass
class VerificationReport:
    model: str
    checks: list

    @property
    def passed(self) -> bool:
        return bool(self.checks) and all(c.passed for c in self.checks)

    def lines(self):
        for c in self.checks:
            status = "PASS" if c.passed else "FAIL"
            yield f"{c.name}\t{status}\t{c.margin:.6g}\t{c.detail}"


def _check(name, margin, detail=""):
    margin = float(margin)
    return CheckResult(name, bool(margin >= 0), margin, detail)


def _random_probe(rng, n, scale):
    return rng.uniform(-scale, scale, size=n)


def _all_samples(mdp):
    for s in range(mdp.num_states):
        for a in range(mdp.num_actions):
            for s2 in range(mdp.num_states):
                weight = mdp.visit[s, a] * mdp.transition[s, a, s2]
                yield weight, Sample(s, a, s2, float(mdp.reward[s, a, s2]))


def check_model(mdp, q_star, probes, rng):
    m = build_matrices(mdp)
    out = []
    dev = np.max(np.abs(m.P_mat.sum(axis=1) - 1.0))
    for q in probes[:20]:
        Pi = action_transition_matrix(greedy_policy(q, m.num_states), m.num_actions)
        dev = max(dev, np.max(np.abs((m.P_mat @ Pi).sum(axis=1) - 1.0)))
    out.append(_check("model.row_stochastic", 1e-12 - dev, f"max deviation {dev:.2e}"))

    residual = np.max(np.abs(bellman_optimality_apply(q_star, m) - q_star))
    out.append(_check("qstar.fixed_point", 1e-11 - residual, f"||TQ*-Q*|| = {residual:.2e}"))

    worst = -np.inf
    for q1, q2 in zip(probes[::2], probes[1::2]):
        lhs = np.max(np.abs(bellman_optimality_apply(q1, m) - bellman_optimality_apply(q2, m)))
        worst = max(worst, lhs - m.discount * np.max(np.abs(q1 - q2)))
    out.append(_check("bellman.contraction", 1e-12 - worst))

    bad = 0
    for q in probes[:50]:
        shift = np.tile(rng.uniform(-5, 5, size=m.num_states), m.num_actions)
        bad += int(np.any(greedy_policy(q, m.num_states) != greedy_policy(q + shift, m.num_states)))
    out.append(_check("greedy.shift_invariance", -bad, f"{bad} mismatches"))
    return out


def check_noise_and_update(mdp, alpha, probes, rng):
    m = build_matrices(mdp)
    out = []
    samples = list(_all_samples(mdp))
    worst = 0.0
    for q in probes[:50]:
        total = sum(wt * noise_vector(q, smp, m) for wt, smp in samples)
        worst = max(worst, np.max(np.abs(total)))
    out.append(_check("noise.zero_mean_exhaustive", 1e-12 - worst, f"max |E w| = {worst:.2e}"))

    sampler = TransitionSampler(mdp)
    worst = 0.0
    for q in probes:
        smp = sampler.draw(rng)
        state = LearnerState.initial(q, alpha)
        moved = qlearning_step(state, smp, mdp).q - q
        pred = alpha * (expected_update(q, m) + noise_vector(q, smp, m))
        worst = max(worst, np.max(np.abs(moved - pred)))
    out.append(_check("update.vector_form_identity", 1e-12 - worst, f"max diff {worst:.2e}"))
    return out


def check_switching(mdp, alpha, q_star, probes, rng):
    m = build_matrices(mdp)
    rho = bounds.decay_rate(m.d_min, m.discount, alpha)
    out = []
    norm_gap = row_gap = 0.0
    min_a = np.inf
    max_b = -np.inf
    expected_rows = 1.0 + alpha * m.d * (m.discount - 1.0)
    for q in probes:
        sw = realize_matrices(q, q_star, m, alpha)
        norm_gap = max(norm_gap, np.max(np.sum(np.abs(sw.A), axis=1)) - rho)
        row_gap = max(row_gap, np.max(np.abs(sw.A.sum(axis=1) - expected_rows)))
        min_a = min(min_a, sw.A.min())
        max_b = max(max_b, sw.b.max())
    out.append(_check("system_matrix.norm_bound", 1e-12 - norm_gap, f"max ||A_Q|| - rho = {norm_gap:.2e}"))
    out.append(_check("system_matrix.row_sums", 1e-12 - row_gap, f"max deviation {row_gap:.2e}"))
    out.append(_check("switching.A_nonnegative", min_a, f"min entry {min_a:.3g}"))
    out.append(_check("switching.b_nonpositive", -max_b, f"max entry {max_b:.3g}"))

    worst = -np.inf
    for _ in range(10):
        pols = [rng.integers(0, m.num_actions, size=m.num_states) for _ in range(200)]
        q0 = _random_probe(rng, m.size, 1.0 / (1.0 - m.discount))
        norms = simulate_deterministic_switched(m, q_star, alpha, q0, pols)
        bound = rho ** np.arange(len(norms)) * norms[0]
        worst = max(worst, np.max(norms - bound))
    out.append(_check("switched.decay", 1e-10 - worst, f"max excess {worst:.2e}"))

    worst = 0.0
    A_star = realize_matrices(q_star, q_star, m, alpha).A
    for q in probes[:100]:
        ql = q - rng.uniform(0, 1, size=m.size)
        qu = q + rng.uniform(0, 1, size=m.size)
        w = rng.uniform(-1, 1, size=m.size)
        sw = realize_matrices(q, q_star, m, alpha)
        lhs = step_error(qu - ql, ql, q_star, sw)
        rhs = step_upper(qu, q, q_star, w, m, alpha) - step_lower(ql, q_star, w, A_star, alpha)
        worst = max(worst, np.max(np.abs(lhs - rhs)))
    out.append(_check("error_system.identity", 1e-12 - worst, f"max diff {worst:.2e}"))
    return out


def reference_trajectory(mdp, alpha, num_steps, seed, q0, q_star):
    """Slow step-by-step co-simulation from the public step functions."""
    m = build_matrices(mdp)
    rng = trial_rng(seed)
    sampler = TransitionSampler(mdp)
    A_star = realize_matrices(q_star, q_star, m, alpha).A
    q, ql, qu = (np.array(q0, dtype=float) for _ in range(3))
    out = [(q, ql, qu)]
    for _ in range(num_steps):
        smp = sampler.draw(rng)
        w = noise_vector(q, smp, m)
        sw = realize_matrices(q, q_star, m, alpha)
        q, ql, qu = (step_original(q, q_star, w, sw, alpha),
                     step_lower(ql, q_star, w, A_star, alpha),
                     step_upper(qu, q, q_star, w, m, alpha))
        out.append((q, ql, qu))
    return [np.array(x) for x in zip(*out)]


def check_engine(mdp, alpha, q_star, rng):
    q0 = rng.uniform(-1, 1, size=mdp.size)
    seed = int(rng.integers(1 << 31))
    traj = co_simulate(mdp, alpha, 200, seed, q0, q_star=q_star)
    ref = reference_trajectory(mdp, alpha, 200, seed, q0, q_star)
    diff = max(np.max(np.abs(traj.q - ref[0])), np.max(np.abs(traj.q_lower - ref[1])),
               np.max(np.abs(traj.q_upper - ref[2])))
    return [_check("engine.matches_reference", 1e-9 - diff, f"max diff {diff:.2e}")]


def check_certificate(mdp, alpha, q_star):
    m = build_matrices(mdp)
    rho = bounds.decay_rate(m.d_min, m.discount, alpha)
    A_star = realize_matrices(q_star, q_star, m, alpha).A
    cert = bounds.lyapunov_certificate(A_star, rho, strict=False)
    return [
        _check("lyapunov.lambda_min", cert.lambda_min - (1.0 - 1e-9), f"{cert.lambda_min:.6g}"),
        _check("lyapunov.lambda_max", cert.lambda_max_bound + 1e-6 - cert.lambda_max,
               f"{cert.lambda_max:.6g} <= {cert.lambda_max_bound:.6g}"),
        _check("lyapunov.residual", bounds.RESIDUAL_TOL - cert.residual, f"{cert.residual:.2e}"),
    ]


def check_trajectories(mdp, alpha, q_star, num_trials, num_steps, seed):
    """Sandwich, iterate and noise bounds, and gap signs over a full ensemble."""
    cfg = ExperimentConfig(mdp, alpha, num_steps, num_trials, seed, record_stride=num_steps)
    try:
        st = run_ensemble(cfg, mdp, q_star)
    except SandwichViolation as exc:
        return [CheckResult("sandwich.ordering", False, -1.0, str(exc))]
    qmax = np.array([qmax_bound(mdp.r_max, 0, mdp.discount)])
    qmax = np.maximum(qmax, st.initial_q_norm / (1.0 - mdp.discount))
    q_margin = np.min(qmax + 1e-12 - st.trial_max_q_norm)
    w_bound = noise_infnorm_bound(mdp.r_max, qmax, mdp.discount)
    w_margin = np.min(w_bound + 1e-12 - st.trial_max_noise_norm)
    return [
        _check("sandwich.ordering", SANDWICH_TOL - st.max_violation,
               f"{st.sandwich_violations} violations over {num_trials}x{num_steps} steps"),
        _check("iterate.bound", q_margin, f"max ||Q_k|| = {st.max_q_norm:.6g}"),
        _check("noise.infnorm_bound", w_margin, f"max ||w_k|| = {st.max_noise_norm:.6g}"),
        _check("gaps.h_nonnegative", st.min_h, f"min h = {st.min_h:.3g}"),
        _check("gaps.b_nonpositive", -st.max_b, f"max b = {st.max_b:.3g}"),
    ]


def check_mean_decay(mdp, alpha, q_star, num_trials, num_steps, seed, rng):
    m = build_matrices(mdp)
    rho = bounds.decay_rate(m.d_min, m.discount, alpha)
    q0 = rng.uniform(-1, 1, size=mdp.size)
    cfg = ExperimentConfig(mdp, alpha, num_steps, num_trials, seed, q0_mode="fixed",
                           q0=list(q0), record_stride=max(1, num_steps // 20))
    st = run_ensemble(cfg, mdp, q_star)
    rep = bounds.mean_decay_check(st.steps, st.lower_err_mean, st.lower_err_se, rho,
                                  np.max(np.abs(q0 - q_star)))
    return [_check("lower.mean_decay", rep.slack.min(), f"{len(st.steps)} checkpoints")]


def check_error_bounds(mdp, alpha, q_star, num_trials, grid, seed):
    m = build_matrices(mdp)
    cfg = ExperimentConfig(mdp, alpha, max(grid), num_trials, seed, record_stride=max(grid))
    st = run_ensemble(cfg, mdp, q_star, extra_steps=grid)
    rep = bounds.bound_report(mdp, alpha, e0_sq=st.e0_sq, q_star=q_star, certificate=False)
    out = []
    for N in grid:
        i = st.at(N)
        lhs1 = st.lower_running_mean[i] - 3 * st.lower_running_se[i]
        lhs2 = st.norm_mean["avg"][i] - 3 * st.norm_se["avg"][i]
        out.append(_check(f"bound.lower_average.N={N}", rep.lower_average_rhs(N) - lhs1,
                          f"{st.lower_running_mean[i]:.4g} <= {rep.lower_average_rhs(N):.4g}"))
        out.append(_check(f"bound.averaged_iterate.N={N}", rep.averaged_rhs(N) - lhs2,
                          f"{st.norm_mean['avg'][i]:.4g} <= {rep.averaged_rhs(N):.4g}"))
    return out


def check_overestimation(mdp, alpha, q_star, num_trials, ks, seed):
    cfg = ExperimentConfig(mdp, alpha, max(ks), num_trials, seed, q0_mode="centered",
                           record_stride=max(ks))
    st = run_ensemble(cfg, mdp, q_star, extra_steps=ks)
    out = []
    for k in ks:
        i = st.at(k)
        lower = np.min(3 * st.lower_err_se[i] - np.abs(st.lower_err_mean[i]))
        upper = np.min(st.err_mean[i] + 3 * st.err_se[i])
        out.append(_check(f"overestimation.lower_zero_mean.k={k}", lower))
        out.append(_check(f"overestimation.iterate_nonnegative.k={k}", upper))
    return out


def check_sample_complexity(mdp):
    m = build_matrices(mdp)
    worst = -np.inf
    for eps in (0.5, 0.1, 0.01):
        for delta in (0.5, 0.1, 0.01):
            b = bounds.sample_complexity(m.num_states, m.num_actions, m.d_min, m.d_max,
                                         m.discount, eps, delta)
            worst = max(worst, b.phi1 + b.phi2 - delta)
    return [_check("complexity.back_substitution", 1e-12 - worst, f"max excess {worst:.2e}")]


def verify_all(mdp_source, alpha: float = 0.01, probe_count: int = 200, seed: int = 0, *,
               num_trials: int = 200, num_steps: int = 2000) -> VerificationReport:
    """Run the full invariant checklist on one model.

    Validation errors produce a single failed ``validation`` entry and no
    further checks.
    """
    name = str(mdp_source) if not isinstance(mdp_source, Mdp) else "custom"
    try:
        mdp = load_mdp(mdp_source, seed)
    except (MdpValidationError, OSError, ValueError) as exc:
        return VerificationReport(name, [CheckResult("validation", False, -1.0, str(exc))])
    rng = np.random.default_rng(seed)
    q_star = solve_qstar(mdp)
    scale = max(1.0, mdp.r_max) / (1.0 - mdp.discount)
    probes = [_random_probe(rng, mdp.size, scale) for _ in range(probe_count)]
    # include exact ties, which exercise the tie-break rule
    probes[:3] = [np.zeros(mdp.size), q_star.copy(), np.full(mdp.size, 1.0)]

    checks = [CheckResult("validation", True, 0.0, "")]
    checks += check_model(mdp, q_star, probes, rng)
    checks += check_noise_and_update(mdp, alpha, probes, rng)
    checks += check_switching(mdp, alpha, q_star, probes, rng)
    checks += check_engine(mdp, alpha, q_star, rng)
    checks += check_certificate(mdp, alpha, q_star)
    checks += check_trajectories(mdp, alpha, q_star, num_trials, num_steps, seed)
    checks += check_mean_decay(mdp, alpha, q_star, num_trials, num_steps, seed + 1, rng)
    grid = [g for g in (100, 1000, 10_000) if g <= num_steps] or [num_steps]
    checks += check_error_bounds(mdp, alpha, q_star, num_trials, grid, seed + 2)
    checks += check_overestimation(mdp, alpha, q_star, num_trials,
                                   sorted({min(100, num_steps), num_steps}), seed + 3)
    checks += check_sample_complexity(mdp)
    return VerificationReport(name, checks)


@dataclass
class ContrastRow:
    alpha: float
    initial_error: float
    terminal_error: float
    gap_variance: float


def step_size_contrast(mdp, alphas, num_steps: int = 10_000, num_trials: int = 20,
                       seed: int = 0, q_star=None):
    """Terminal error and late-phase variability of ||Q^U_k - Q^L_k|| per step size.

    ``gap_variance`` is the temporal variance of the gap norm over the last
    10% of steps, averaged over trials. Rows are sorted by step size.
    """
    if not alphas:
        raise ValueError("need at least one step size")
    mdp = load_mdp(mdp, seed)
    if q_star is None:
        q_star = solve_qstar(mdp)
    start = num_steps - max(1, num_steps // 10)
    tail = np.arange(start, num_steps + 1)
    rows = []
    for alpha in sorted(alphas):
        engine = CoupledEngine(mdp, alpha, q_star)
        rngs = [trial_rng(seed, i) for i in range(num_trials)]
        q0 = np.stack([uniform_q0(g, mdp.size) for g in rngs])
        gaps = []
        final = {}

        def observe(snap):
            gaps.append(np.max(np.abs(snap.q_upper - snap.q_lower), axis=1))
            if snap.k == num_steps:
                final["q"] = snap.q.copy()

        engine.run(num_steps, rngs, q0, record_at=tail, observer=observe)
        gaps = np.array(gaps)
        rows.append(ContrastRow(
            alpha=float(alpha),
            initial_error=float(np.mean(np.max(np.abs(q0 - q_star), axis=1))),
            terminal_error=float(np.mean(np.max(np.abs(final["q"] - q_star), axis=1))),
            gap_variance=float(np.mean(gaps.var(axis=0))),
        ))
    return rows
