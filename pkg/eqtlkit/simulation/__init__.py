from .config import ConfigurationError, SimConfig, SimTruth
from .generate import (
    SimulatedData,
    gen_beta_star,
    gen_dataset,
    gen_design,
    gen_noise_scale,
    gen_sigma_E,
    prune_correlated,
    simulate,
)
from .study import StudySetting, default_settings, run_study
