"""Constant step-size Q-learning as a stochastic affine switching system.

Co-simulates Q-learning with its lower and upper comparison systems and
checks the finite-time error bounds derived from them.
"""

from .mdp import (BUILTINS, CompactMatrices, Mdp, MdpValidationError, build_matrices,
                  example1, example3, greedy_policy, paper2state, random_mdp, solve_qstar,
                  validate)
from .learning import LearnerState, Sample, TransitionSampler, noise_vector, qlearning_step, run_qlearning
from .switching import CoupledEngine, CoupledTrajectory, co_simulate, realize_matrices
from .bounds import (averaged_iterate_bound, bound_report, decay_rate, lower_average_bound,
                     lyapunov_certificate, sample_complexity)
from .experiments import ExperimentConfig, run_ensemble, step_size_contrast, verify_all

__version__ = "0.1.0"
