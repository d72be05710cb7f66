"""Joint beam management and power allocation for THz-NOMA downlinks.

Secondary users are admitted onto beams that were built for legacy primary
users. The package samples such networks, reformulates the sum-rate problem
over the admissible (user, beam) pairs and solves it by branch and bound,
successive convex approximation or a greedy rule.
"""

__version__ = "0.1.0"

from .channel import (EffectiveGains, SystemConfig, dbm_to_watts, sample_network,  # noqa: E402
                      watts_to_dbm)
from .reformulation import (Allocation, build_active_set, build_problem,  # noqa: E402
                            check_feasible, objective, true_rates)
from .bb import BBConfig, run_bb  # noqa: E402
from .sca import SCAConfig, run_sca  # noqa: E402
from .baselines import brute_force, f_alpha, greedy_schedule  # noqa: E402

__all__ = [
    "SystemConfig", "EffectiveGains", "sample_network", "dbm_to_watts", "watts_to_dbm",
    "Allocation", "build_active_set", "build_problem", "check_feasible", "objective",
    "true_rates", "BBConfig", "run_bb", "SCAConfig", "run_sca", "brute_force", "f_alpha",
    "greedy_schedule",
]
