from InfoGeoDetect.__version__ import __version__
from InfoGeoDetect.channel import (
    ChannelInstance,
    ReceivedSignal,
    generate_iid_rayleigh,
    lift_to_real,
    load_channel,
    noise_var_from_snr,
    transmit,
)
from InfoGeoDetect.constellation import (
    ComplexConstellation,
    RealAlphabet,
    bits_to_symbols,
    make_qam,
    real_alphabet,
    symbols_to_bits,
)
from InfoGeoDetect.exceptions import (
    ChannelFileError,
    ConfigFileError,
    DimensionMismatchError,
    InvalidConfigError,
    NoiseVarianceError,
    NonPositiveProbabilityError,
    OffConstellationError,
    OracleSizeError,
    SignalFileError,
    SingularSystemError,
    UnsupportedModulationError,
)
from InfoGeoDetect.exp_family import (
    EacsVector,
    MarginalBelief,
    PriorNaturalParams,
    belief_moments,
    belief_to_theta,
    fim_product,
    free_energy,
    kl_divergence_product,
    prior_np,
    theta_to_belief,
)
from InfoGeoDetect.experiment import BerRecord, ExperimentConfig
from InfoGeoDetect.harness import run_ber_sweep, run_convergence_trace, run_diagnostics
from InfoGeoDetect.iga import DetectionReport, IgaConfig, IgaState, detect
from InfoGeoDetect.oracle import (
    JointPosterior,
    exact_m_projection,
    exact_map,
    exact_marginals,
    exact_mpm,
    lmmse_detect,
)

__all__ = [
    "__version__",
    "make_qam",
    "real_alphabet",
    "bits_to_symbols",
    "symbols_to_bits",
    "ComplexConstellation",
    "RealAlphabet",
    "ChannelInstance",
    "ReceivedSignal",
    "generate_iid_rayleigh",
    "lift_to_real",
    "load_channel",
    "noise_var_from_snr",
    "transmit",
    "PriorNaturalParams",
    "EacsVector",
    "MarginalBelief",
    "prior_np",
    "theta_to_belief",
    "belief_to_theta",
    "belief_moments",
    "free_energy",
    "kl_divergence_product",
    "fim_product",
    "IgaConfig",
    "IgaState",
    "DetectionReport",
    "detect",
    "JointPosterior",
    "exact_marginals",
    "exact_m_projection",
    "exact_map",
    "exact_mpm",
    "lmmse_detect",
    "ExperimentConfig",
    "BerRecord",
    "run_ber_sweep",
    "run_convergence_trace",
    "run_diagnostics",
    "UnsupportedModulationError",
    "OffConstellationError",
    "DimensionMismatchError",
    "NonPositiveProbabilityError",
    "NoiseVarianceError",
    "OracleSizeError",
    "SingularSystemError",
    "ChannelFileError",
    "SignalFileError",
    "ConfigFileError",
    "InvalidConfigError",
]
