"""Max-stable random fields built from tilted spectral processes.

Simulation (exact and truncated), finite-dimensional distributions,
Pickands-type constants and stationarity checks for Brown-Resnick and
related max-stable models.
"""
__version__ = "0.1.0"

from .grid import Grid, LogPath, lag_shift, log_sum_exp  # noqa: E402
from .randomness import RngStream, child_seed  # noqa: E402
from .report import EstimatorReport  # noqa: E402
from .spectral import (  # noqa: E402
    GaussianSpectral,
    MaskedSpectral,
    brownian,
    fbm,
    linear_drift,
    model_from_spec,
    quadratic,
    theta_process,
    tilt_closed_form,
    xi_process,
)
from .simulate import simulate_direct, simulate_dm, simulate_fields, simulate_two_sided  # noqa: E402
from .distribution import (  # noqa: E402
    FidiQuery,
    empirical_fidi,
    hr_closed_form,
    neglog_fidi_infargmax,
    neglog_fidi_mc,
)
from .pickands import (  # noqa: E402
    pickands_argmax_prob,
    pickands_direct,
    pickands_lower_bound_c0,
    pickands_ratio,
)
from .stationarity import (  # noqa: E402
    check_field_stationarity,
    check_theta_shift,
    check_tilt_shift_mc,
    check_xi_shift_gaussian,
)

__all__ = [
    "__version__",
    "Grid", "LogPath", "lag_shift", "log_sum_exp",
    "RngStream", "child_seed", "EstimatorReport",
    "GaussianSpectral", "MaskedSpectral", "brownian", "fbm", "linear_drift", "model_from_spec", "quadratic",
    "theta_process", "tilt_closed_form", "xi_process",
    "simulate_direct", "simulate_dm", "simulate_fields", "simulate_two_sided",
    "FidiQuery", "empirical_fidi", "hr_closed_form", "neglog_fidi_infargmax", "neglog_fidi_mc",
    "pickands_argmax_prob", "pickands_direct", "pickands_lower_bound_c0", "pickands_ratio",
    "check_field_stationarity", "check_theta_shift", "check_tilt_shift_mc", "check_xi_shift_gaussian",
]
