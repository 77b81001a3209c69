"""Relaxation systems: certification, closed-form static control and RL network tools."""

from .analysis import (close_loop, costs, hinf_norm, simulate, step_cost_limit,
                       worst_case_cost, worst_case_identity)
from .config import DEFAULT_TOL, ToleranceConfig
from .errors import *  # noqa: F401,F403
from .netlab import build_model, dual_controller, lsq_solve, parse_netlist
from .realization import (StateSpace, StorageMatrix, compute_Q, minimality, symmetric_form,
                          transfer_eval)
from .relaxation import check_relaxation, monotonicity_probe
from .synthesis import StaticController, lemma_lb, synth_p1, synth_p2, verify_static_optimality

__version__ = "0.1.0"
