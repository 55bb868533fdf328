"""Efficiency chains, rate and background budgets, curve fits, background subtraction."""

from .background import BACKGROUND_FRACTIONS, background_fraction, corrected_totals, subtract_background
from .chain import CONVERTER_H_ARM, CONVERTER_V_ARM, BudgetError, EfficiencyChain, chain_product
from .curve import CurveFit, CurveFitError, EfficiencyCurvePoint, eta_ext, fit_efficiency_curve, working_point
from .rates import BudgetReport, background_budget, compare, rate_budget, sbr
