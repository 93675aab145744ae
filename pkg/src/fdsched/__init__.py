"""Temporal-fair opportunistic scheduling for a single-cell full-duplex system."""

from .feasibility import (InfeasibleDemandError, NonIntegralDemandError, SlotAllocation,
                          TemporalDemands, feasible_longterm, feasible_shortterm,
                          longterm_witness, witness_schedule)
from .geomchan import (AllNlos, CellConfig, CellDrop, ChannelParams, ChannelRealization,
                       FixedLosProbability, Hotspot, Uniform, draw_realization,
                       draw_realizations, make_drop)
from .ratemodel import (LinkBudget, Mode, PerformanceMatrix, VirtualUser, link_budget,
                        maxmin_power, performance_matrices, performance_matrix, sic_flags,
                        truncated_rate, virtual_users)
from .scheduler import (ATBSRunner, EmptyCandidateSetError, ScheduleState, TBSRunner,
                        ThresholdVector, atbs_feasible_set, atbs_select, hd_baseline_select,
                        state_update, tbs_select)
from .threshopt import OptimizerState, ThresholdLearner, check_slackness, opt_step

__version__ = "0.1.0"
