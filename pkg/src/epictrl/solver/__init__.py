"""Dynamic programming over the filtered epidemic state."""

from .basis import N_BASIS, ansatz_eval, basis_matrix
from .bellman import NumericalError, Problem, bellman_step, policy_lookup, quantizer_hash, solve
from .grid import CONTROL_AXES, STATE_AXES, Axis, Grid, GridSpec
from .interp import interpolate
from .nnls import RankDeficiencyWarning, fit_nonneg, nnls
from .solution import Solution

__all__ = ["N_BASIS", "ansatz_eval", "basis_matrix", "NumericalError", "Problem", "bellman_step",
           "policy_lookup", "quantizer_hash", "solve", "CONTROL_AXES", "STATE_AXES", "Axis", "Grid",
           "GridSpec", "interpolate", "RankDeficiencyWarning", "fit_nonneg", "nnls", "Solution"]
