"""Thermodynamic formalism on subshifts of finite type.

Pressure, equilibrium states, moment rate functions and finite-n large
deviation estimates for locally constant potentials.
"""
from .convex import (RateFunctionHandle, cylinder_family, entropy_approximation_sequence,
                     grid_conjugate_oracle, l_eval, l_grad, q_star, rate_at)
from .errors import (ConvergenceError, EnumerationCapError, NotPrimitiveError,
                     ReducibleChainError, SpaceError, ThermoformError)
from .ldp import (BoxQuery, WeightedPointCloud, empirical_distribution_gibbs,
                  empirical_distribution_periodic, empirical_distribution_separated,
                  inf_rate_over_box, ldp_report, rate_estimate)
from .measures import (InvariantMeasure, MarkovMeasure, bernoulli, cylinder_probability,
                       entropy_rate, integrate, mix, moments, orbit_empirical,
                       periodic_orbit_measure)
from .potential import ObservableFamily, Potential
from .pressure import (equilibrium_state, pressure_2d_box, pressure_2d_strip,
                       pressure_periodic, pressure_separated, pressure_spectral,
                       variational_gap)
from .shift import (Box, ShiftSpace, admissible_words, build_sft, canonical_extension,
                    count_periodic, enumerate_periodic_points, full_shift, golden_mean,
                    higher_block_recode, separated_set_representatives)

__version__ = "0.1.0"
