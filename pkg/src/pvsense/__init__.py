"""Probabilistic voltage sensitivity and PV hosting capacity for unbalanced
radial distribution feeders."""

from .feeder import (FeederError, NetworkModel, load_bundled, load_feeder,
                     load_feeder_path, shared_path_impedance)
from .powerflow import (PowerFlowError, VoltageSolution, solve, solve_batch,
                        voltage_change_oracle)
from .sensitivity import (ImpedanceStats, PowerChangeVector, ZVectors,
                          delta_v_multi, delta_v_real_imag, delta_v_single,
                          path_statistics, z_vectors)
from .moments import (MomentError, PowerChangeModel, VoltageChangeMoments,
                      aggregate_moments, cross_actor_covariance,
                      multi_actor_moments, real_imag_covariance,
                      single_actor_moments)
from .distributions import (Nakagami, Rician, ScaledNCChiSquare,
                            chi_square_params, future_voltage_distribution,
                            magnitude_distribution, violation_probability)
from .montecarlo import (EmpiricalDistribution, Histogram, ScenarioConfig,
                         empirical_voltage_distribution, js_distance,
                         sample_power_changes, substream)
from .hosting import (HCConfig, HCResult, hc_loadflow, hc_stpvsa,
                      load_pv_size_table, pv_units_for_band)

__version__ = "0.1.0"

__all__ = [
    "FeederError", "NetworkModel", "load_bundled", "load_feeder",
    "load_feeder_path", "shared_path_impedance",
    "PowerFlowError", "VoltageSolution", "solve", "solve_batch",
    "voltage_change_oracle",
    "ImpedanceStats", "PowerChangeVector", "ZVectors", "delta_v_multi",
    "delta_v_real_imag", "delta_v_single", "path_statistics", "z_vectors",
    "MomentError", "PowerChangeModel", "VoltageChangeMoments",
    "aggregate_moments", "cross_actor_covariance", "multi_actor_moments",
    "real_imag_covariance", "single_actor_moments",
    "Nakagami", "Rician", "ScaledNCChiSquare", "chi_square_params",
    "future_voltage_distribution", "magnitude_distribution",
    "violation_probability",
    "EmpiricalDistribution", "Histogram", "ScenarioConfig",
    "empirical_voltage_distribution", "js_distance", "sample_power_changes",
    "substream",
    "HCConfig", "HCResult", "hc_loadflow", "hc_stpvsa", "load_pv_size_table",
    "pv_units_for_band",
    "__version__",
]
