import numpy as np
import pytest

from qswitch.experiments import reference_trajectory
from qswitch.learning import run_qlearning, trial_rng, uniform_q0
from qswitch.mdp import (action_transition_matrix, build_matrices, example1, greedy_policy,
                         paper2state, random_mdp, solve_qstar)
from qswitch.switching import (CoupledEngine, co_simulate, realize_matrices, recorded_steps,
                               simulate_deterministic_switched, step_error, step_lower,
                               step_original, step_upper)


def _explicit(q, q_star, mdp, alpha):
    m = build_matrices(mdp)
    S, A = mdp.num_states, mdp.num_actions
    D = np.diag(mdp.d)
    Pi_q = action_transition_matrix(greedy_policy(q, S), A)
    Pi_s = action_transition_matrix(greedy_policy(q_star, S), A)
    A_q = np.eye(m.size) + alpha * (mdp.discount * D @ m.P_mat @ Pi_q - D)
    b = alpha * mdp.discount * D @ m.P_mat @ (Pi_q - Pi_s) @ q_star
    return A_q, b


def test_realized_matrices_match_definitions():
    mdp = paper2state()
    q_star = solve_qstar(mdp)
    rng = np.random.default_rng(0)
    for _ in range(20):
        q = rng.uniform(-20, 20, 4)
        sw = realize_matrices(q, q_star, build_matrices(mdp), 0.3)
        A_q, b = _explicit(q, q_star, mdp, 0.3)
        np.testing.assert_allclose(sw.A, A_q, atol=1e-15)
        np.testing.assert_allclose(sw.b, b, atol=1e-13)
        assert np.all(sw.A >= 0) and np.all(sw.b <= 1e-15)


def test_affine_form_reproduces_asynchronous_update():
    # x_{k+1} = A x + b + alpha w equals the Q-learning step in error coordinates
    mdp = random_mdp(3, 2, np.random.default_rng(4))
    q_star = solve_qstar(mdp)
    alpha, N, seed = 0.2, 300, 9
    q0 = uniform_q0(trial_rng(seed), mdp.size)
    ref = run_qlearning(mdp, alpha, N, seed, q0=None)
    traj = co_simulate(mdp, alpha, N, seed, q_star=q_star)
    np.testing.assert_array_equal(traj.q[0], q0)
    np.testing.assert_allclose(traj.q[-1], ref.q, atol=1e-12)
    np.testing.assert_allclose(traj.q_avg[-1], ref.q_avg, atol=1e-12)


def test_plain_qlearning_agreement_long_run():
    mdp = paper2state()
    traj = co_simulate(mdp, 0.002, 10_000, 3, stride=10_000)
    ref = run_qlearning(mdp, 0.002, 10_000, 3)
    np.testing.assert_allclose(traj.q[-1], ref.q, atol=1e-10)
    np.testing.assert_allclose(traj.q_avg[-1], ref.q_avg, atol=1e-10)


def test_engine_matches_step_functions():
    mdp = random_mdp(4, 3, np.random.default_rng(1))
    q_star = solve_qstar(mdp)
    q0 = np.random.default_rng(2).uniform(-1, 1, mdp.size)
    traj = co_simulate(mdp, 0.05, 150, 17, q0, q_star=q_star)
    q, ql, qu = reference_trajectory(mdp, 0.05, 150, 17, q0, q_star)
    for got, want in ((traj.q, q), (traj.q_lower, ql), (traj.q_upper, qu)):
        np.testing.assert_allclose(got, want, atol=1e-12)


def test_error_recursion_matches_difference():
    mdp = random_mdp(3, 3, np.random.default_rng(5))
    m = build_matrices(mdp)
    q_star = solve_qstar(mdp)
    traj = co_simulate(mdp, 0.1, 200, 4, q_star=q_star, offset=0.5)
    err = traj.err_upper_lower[0]
    for k in range(200):
        sw = realize_matrices(traj.q[k], q_star, m, 0.1)
        err = step_error(err, traj.q_lower[k], q_star, sw)
        np.testing.assert_allclose(err, traj.err_upper_lower[k + 1], atol=1e-11)


def test_batch_reproduces_single_trials_bitwise():
    mdp = random_mdp(3, 2, np.random.default_rng(6))
    eng = CoupledEngine(mdp, 0.01)
    rngs = [trial_rng(100, i) for i in range(5)]
    q0 = np.stack([uniform_q0(g, mdp.size) for g in rngs])
    finals = {}
    eng.run(500, rngs, q0, record_at=[500], observer=lambda s: finals.update(batch=s.q.copy()))
    for i in range(5):
        alone = co_simulate(mdp, 0.01, 500, 100 + i, stride=500)
        np.testing.assert_array_equal(finals["batch"][i], alone.q[-1])


def test_chunk_size_does_not_change_stream():
    mdp = paper2state()
    a = CoupledEngine(mdp, 0.1)
    b = CoupledEngine(mdp, 0.1)
    b.chunk = 64
    out = []
    for eng in (a, b):
        rng = [trial_rng(0)]
        got = {}
        eng.run(1000, rng, np.zeros((1, 4)), record_at=[1000],
                observer=lambda s: got.update(q=s.q.copy()))
        out.append(got["q"])
    np.testing.assert_array_equal(out[0], out[1])


@pytest.mark.parametrize("alpha", [0.1, 0.5, 0.9])
def test_example1_channels_identical(alpha):
    traj = co_simulate(example1(), alpha, 300, 0)
    np.testing.assert_array_equal(traj.q, traj.q_lower)
    np.testing.assert_array_equal(traj.q, traj.q_upper)


def test_sandwich_with_separated_starts():
    mdp = paper2state()
    traj = co_simulate(mdp, 0.5, 2000, 1, offset=1.0)
    assert np.all(traj.q_lower <= traj.q + 1e-12)
    assert np.all(traj.q <= traj.q_upper + 1e-12)
    assert traj.summary.sandwich_violations.sum() == 0


def test_step_functions_order_preserving():
    mdp = random_mdp(3, 2, np.random.default_rng(9))
    m = build_matrices(mdp)
    q_star = solve_qstar(mdp)
    A_star = realize_matrices(q_star, q_star, m, 0.2).A
    rng = np.random.default_rng(10)
    for _ in range(100):
        q = q_star + rng.uniform(-3, 3, 6)
        ql = q - rng.uniform(0, 1, 6)
        qu = q + rng.uniform(0, 1, 6)
        w = rng.uniform(-1, 1, 6)
        sw = realize_matrices(q, q_star, m, 0.2)
        nq = step_original(q, q_star, w, sw, 0.2)
        assert np.all(step_lower(ql, q_star, w, A_star, 0.2) <= nq + 1e-12)
        assert np.all(nq <= step_upper(qu, q, q_star, w, m, 0.2) + 1e-12)


def test_stride_row_count_and_final_sample():
    traj = co_simulate(paper2state(), 0.002, 100, 0, stride=1)
    assert len(traj.steps) == 101
    np.testing.assert_array_equal(traj.steps, np.arange(101))
    assert traj.sample_s[-1] == -1 and np.isnan(traj.sample_r[-1])
    assert np.all(traj.sample_s[:-1] >= 0)


def test_recorded_steps_include_end():
    np.testing.assert_array_equal(recorded_steps(25, 10), [0, 10, 20, 25])
    with pytest.raises(ValueError):
        recorded_steps(10, 0)


def test_deterministic_switched_decay_example():
    mdp = paper2state()
    m = build_matrices(mdp)
    q_star = solve_qstar(mdp)
    rng = np.random.default_rng(0)
    pols = [rng.integers(0, 2, 2) for _ in range(100)]
    norms = simulate_deterministic_switched(m, q_star, 0.5, q_star + 1, pols)
    rho = 1 - 0.5 * 0.04 * 0.1
    assert np.all(norms <= rho ** np.arange(101) * norms[0] + 1e-10)


def test_engine_rejects_bad_alpha():
    with pytest.raises(ValueError):
        CoupledEngine(paper2state(), 1.0)
