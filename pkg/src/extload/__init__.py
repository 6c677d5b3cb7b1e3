"""Extreme load estimation for wind turbines.

A Bayesian spline model (nonhomogeneous GEV with hinge-basis location and
log-scale, sampled by reversible jumps over knot sets) gives posterior
draws of the T-year extreme load level. The binning baseline, quantile
scoring and a synthetic-data generator support head-to-head comparisons.
"""

from .binning import BinGrid, binned_extreme_load, fit_binned, interpolate_empty_bin
from .distributions import (GevParams, TruncNormParams, WindDistKind, WindDistParams,
                            gev_cdf, gev_log_pdf, gev_quantile, gev_sample,
                            target_exceedance, trunc_norm_log_pdf, trunc_norm_sample,
                            wind_log_pdf)
from .estimator import (QuantileResult, estimate_extreme_load, long_term_quantile,
                        pointwise_credible_band, short_term_params)
from .mle import FitResult, RegressionData, draw_params_normal_approx, fit_mle
from .rjs import ChainConfig, run_chain, rjs_step
from .scoring import ScoreReport, compare_methods, gpl_score, mean_score
from .simulate import SimConfig, generate_reference_quantiles, generate_training
from .wind import fit_turbulence, sample_wind_joint, select_wind_family

__version__ = "0.1.0"
