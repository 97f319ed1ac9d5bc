"""Spatiotemporal infection-rate estimation, forecasting and wave detection.

Daily case counts over adjacent regions are explained by a Gamma infection
rate convolved with a stochastic lognormal incubation delay, with a
proper-CAR spatial error model. Parameters are sampled with adaptive
pseudo-marginal Metropolis; the posterior drives forecasts, CRPS scoring,
an anomaly-based wave detector and dependence diagnostics.
"""

from .analysis import DcorMatrix, dcor, dcor_table
from .data import (
    Adjacency,
    CaseSeries,
    DataError,
    ParseError,
    RegionNotFoundError,
    StudyWindow,
    load_adjacency,
    load_cases,
    load_distances,
    load_populations,
    load_region_values,
    normalize,
    smooth_7day,
    write_cases,
)
from .detect import (
    AlignmentError,
    DetectionReport,
    GlrFitError,
    GlrModel,
    detect_alarms,
    glr_detect,
    glr_fit,
    glr_statistic,
    outlier_boundary,
    verify_report,
)
from .epimodel import (
    DEFAULT_HYPER,
    IncubationDraw,
    IncubationHyper,
    RegionParams,
    forecast_cutoff,
    incubation_cdf,
    incubation_pdf,
    infection_rate_pdf,
    predict_daily,
    sample_incubation,
)
from .forecast import ForecastBand, HorizonError, average_crps, crps, posterior_predictive, write_bands
from .inference import (
    AMCMCConfig,
    CalibrationProblem,
    Chain,
    ParamLayout,
    ParamVector,
    PriorSpec,
    SamplerError,
    amcmc_run,
    calibrate,
    ess,
    find_start,
    load_chain,
    log_likelihood,
    log_prior,
    save_chain,
)
from .spatial import GlobalParams, MoranResult, NumericalError, morans_i, observation_covariance, precision_matrix

__version__ = "0.1.0"
