"""Basis settings, histograms, fringe fits and state/process reconstruction."""

from .fringe import FringeFit, FringeFitError, InsufficientDataError, fit_larmor_fringe
from .histograms import (
    AXES,
    BasisSetting,
    CoincidenceHistogram,
    HistogramError,
    all_settings,
    check_complete,
    load_histograms,
    save_histograms,
)
from .state import (
    MLEConvergenceError,
    MLEResult,
    TomographyData,
    data_from_counts,
    data_from_histograms,
    error_bars,
    expectations_from_counts,
    expectations_from_histograms,
    linear_reconstruct,
    mle_reconstruct,
)
from .process import (
    ProcessMatrix,
    ProcessTomographyError,
    StokesVector,
    apply_chi,
    chi_from_unitary,
    chi_to_ptm,
    depolarizing_chi,
    probe_states,
    process_fidelity,
    process_tomography,
    ptm_to_chi,
)
