"""Unbalanced homodyne correlation measurements: moments, simulation, witnesses."""

__version__ = "0.1.0"

from .errors import UHCMError  # noqa: E402
from .fock import DensityMatrix, StateSpec, build_state, displace, loss_channel  # noqa: E402
from .moments import (  # noqa: E402
    MomentSet,
    PhotocountDistribution,
    moment_direct,
    moment_set,
    moment_via_displacement,
    photocount_direct,
    photocount_from_moments,
    quasiprob_s,
)
from .simulation import (  # noqa: E402
    ClassicalSignalModel,
    CorrelationRecord,
    OpticalChainConfig,
    balance_gains,
    dark_noise_experiment,
    estimate_gamma,
    gamma_to_moment,
    implied_displacement,
    make_chain,
    simulate_run,
)
from .witness import (  # noqa: E402
    FilterVector,
    MomentMatrix,
    WitnessReport,
    agarwal_tara_matrix,
    bootstrap_witness,
    build_moment_matrix,
    filter_vector,
    matrix_from_gamma,
    min_eigenvalue_witness,
    scan,
    truncated_regularized_p,
)
