import itertools

import numpy as np
import pytest

from qswitch.mdp import BUILTINS, build_matrices, random_mdp

CORPUS_SEED = 2024
NUM_RANDOM = 20

_acceptance_lines = []


def random_corpus(count=NUM_RANDOM, seed=CORPUS_SEED):
    """Seeded random models with 1 <= |S|, |A| <= 5."""
    rng = np.random.default_rng(seed)
    models = []
    for i in range(count):
        n_s, n_a = (int(x) for x in rng.integers(1, 6, size=2))
        gamma = float(rng.uniform(0.5, 0.95))
        models.append((f"random{i}_{n_s}x{n_a}", random_mdp(n_s, n_a, rng, discount=gamma)))
    return models


def full_corpus():
    return [(name, make()) for name, make in BUILTINS.items()] + random_corpus()


@pytest.fixture(scope="session")
def corpus():
    return full_corpus()


def brute_force_qstar(mdp):
    """Q* as the elementwise max of Q^pi over every deterministic policy,
    each from a direct linear solve."""
    m = build_matrices(mdp)
    S, A, n = m.num_states, m.num_actions, m.size
    best = np.full(n, -np.inf)
    for pol in itertools.product(range(A), repeat=S):
        Pi = np.zeros((S, n))
        Pi[np.arange(S), np.array(pol) * S + np.arange(S)] = 1.0
        q = np.linalg.solve(np.eye(n) - m.discount * m.P_mat @ Pi, m.R_vec)
        best = np.maximum(best, q)
    return best


def record_criterion(number, title, passed, detail):
    line = f"criterion {number:>2} [{'PASS' if passed else 'FAIL'}] {title}: {detail}"
    _acceptance_lines.append(line)
    print(line)


def pytest_terminal_summary(terminalreporter):
    if _acceptance_lines:
        terminalreporter.section("acceptance criteria")
        for line in sorted(_acceptance_lines, key=lambda s: int(s.split()[1])):
            terminalreporter.write_line(line)
