"""Planning and analysis of three-arm retention-of-effect non-inferiority trials."""

from .errors import (BudgetExceeded, DegenerateAllocation, DegenerateData, DomainError,
                     HypothesisMismatch, InconsistentStat, MissingGroup, NegativeDiscriminant,
                     NumericalError, OptimizationFailure, ParseError, RangeError, RetError,
                     SingularInformation, ValidationError)
from .families import (Binary, Exponential, FamilySpec, GroupStat, Normal, Poisson, ScalarFamily,
                       efficacy_variance, family_names, get_family, group_mle, kl_divergence,
                       register_family)
from .hypothesis import Contrast, RetentionHypothesis, boundary_substitute, contrast
from .kl_projection import (KlProjection, Weights, convexity_certificate, poisson_projection_closed_form,
                            project_to_null, weighted_kl)
from .planning import (Alternative, PlanReport, gssp, optimal_allocation, power_approx,
                       rule_of_thumb_check, sample_size, sigma0_squared)
from .power_engine import (PowerEstimate, PowerQuery, exact_power, exact_power_binary,
                           exact_power_poisson, mc_power)
from .ret_test import GroupData, TestReport, restricted_mle, run_test

__version__ = "0.1.0"

__all__ = [
    "Alternative", "Binary", "BudgetExceeded", "Contrast", "DegenerateAllocation", "DegenerateData",
    "DomainError", "Exponential", "FamilySpec", "GroupData", "GroupStat", "HypothesisMismatch",
    "InconsistentStat", "KlProjection", "MissingGroup", "NegativeDiscriminant", "Normal",
    "NumericalError", "OptimizationFailure", "ParseError", "PlanReport", "Poisson", "PowerEstimate",
    "PowerQuery", "RangeError", "RetError", "RetentionHypothesis", "ScalarFamily",
    "SingularInformation", "TestReport", "ValidationError", "Weights", "boundary_substitute",
    "contrast", "convexity_certificate", "efficacy_variance", "exact_power", "exact_power_binary",
    "exact_power_poisson", "family_names", "get_family", "group_mle", "gssp", "kl_divergence",
    "mc_power", "optimal_allocation", "poisson_projection_closed_form", "power_approx",
    "project_to_null", "register_family", "restricted_mle", "rule_of_thumb_check", "run_test",
    "sample_size", "sigma0_squared", "weighted_kl",
]
