"""Periodic nonuniform (multi-coset) sampling design for multiband signals."""

from .errors import CapExceededError, InfeasibleError, RankDeficientError
from .modulation import (ConditionReport, ModulationMatrix, SamplePattern,
                         build_modulation_matrix, condition_number)
from .pattern_search import (CondHistogram, SearchResult, exhaustive_search,
                             random_pattern_trials, random_search, sfs_over_random_supports,
                             sfs_search)
from .reconstruction import ReconstructionReport, Simulation, simulate, solve_bins
from .signal_lab import BasebandSignal, GridSpec, make_grid, synthesize_multiband
from .spectrum_model import (BandSet, RatePlan, SpectralIndexSet, compute_spectral_index_set,
                             make_rate_plan, sweep_rates)

__version__ = "0.1.0"
