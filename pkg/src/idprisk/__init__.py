"""Accounting, calibration and risk auditing for individualised DP-SGD."""

from .accountant import (PrivacyProfile, SubsampledGaussian, TradeoffCurve, advantage,
                         delta_for, gaussian_delta, mechanism_advantage, mechanism_tradeoff,
                         pld_profile, profile_to_tradeoff)
from .calibration import (BudgetGroup, MechanismParams, PrivacySpec, ScaleParams,
                          calibrate_sampling_idp, calibrate_sensitivity_idp, check_params,
                          get_noise, get_sample_rate)
from .divergence import delta_divergence, meta_select, symmetric_delta, validate_contract
from .errors import CalibrationError, DomainError, IdpError, PrecisionError

__version__ = "0.1.0"
