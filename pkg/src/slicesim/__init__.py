"""Slot-level simulator for dynamic eMBB/URLLC multiplexing on a shared grid.

DRRA (block-coordinate convex relaxation with rounding) allocates RBs,
power and puncture weights per slot; PGACL (Gibbs actor, linear TD critic)
learns where URLLC preemptions should land.  Baseline schedulers, metrics
and a seeded experiment harness round out the toolkit.
"""

__version__ = "0.1.0"

from .config import ConfigError, ScenarioConfig, load_config
from .env import RngStream, UserGeometry, pathloss, sample_geometry, sample_slot
from .model import (Allocation, SlotState, channel_dispersion, embb_rb_rate,
                    embb_user_rate, embb_user_rates, exp_utility, inverse_q,
                    markov_required_rate, mean_variance_objective,
                    rate_no_puncturing, risk_averse_utility, urllc_sum_rate)
from .drra import (SolveReport, round_rb_allocation, run_drra,
                   solve_power_allocation, solve_rb_allocation,
                   solve_urllc_weights, weights_to_minislots)
from .metrics import (MetricsLog, SlotRecord, ccdf, embb_reliability,
                      jain_index, outage_series)
from .harness import ExperimentPlan, load_plan, run_experiment, run_single
