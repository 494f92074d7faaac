"""Simulator and analysis toolkit for an atom-photon entanglement experiment.

Generation of the entangled state under configurable noise, projective
measurement simulation with finite statistics, full two-qubit state
tomography with maximum-likelihood refinement, entanglement metrics, and
feasibility arithmetic for an event-ready loophole-free Bell test.
"""

from .qmath import (
    hermitian_eigenvalues,
    overlap,
    partial_trace,
    partial_transpose,
    tensor_product,
)
from .states import (
    DecayChannel,
    NoiseModel,
    apply_noise,
    ideal_ket,
    ideal_state,
    standard_decay_channels,
    state_from_channels,
    werner,
)
from .measurement import (
    AtomSetting,
    CountRecord,
    Dataset,
    MeasurementSetting,
    PhotonSetting,
    apply_readout_confusion,
    atom_projectors,
    joint_probabilities,
    photon_projectors,
    read_counts_csv,
    sample_counts,
    simulate_scan,
    simulate_settings,
    write_counts_csv,
)
from .tomography import (
    CorrelationData,
    TomographySet,
    bootstrap_metrics,
    canonical_settings,
    extract_correlations,
    linear_inversion,
    mle_reconstruct,
    project_physical,
    simulate_tomography,
)
from .metrics import (
    FringeScan,
    VisibilityFit,
    chsh_max,
    fidelity_to_target,
    fit_fringe,
    fringe_scans_from_dataset,
    negativity,
    purity,
)
from .planner import (
    ExperimentPlan,
    PlanReport,
    build_plan,
    collapse_probability,
    measurement_duration,
    min_separation,
    pair_rate,
    pairs_for_sigmas,
    single_pair_rate,
    swapped_visibility,
    violation_sigmas,
)
from .calibrate import CalibrationError, CalibrationResult, calibrate_noise, exact_observables

__version__ = "0.1.0"
