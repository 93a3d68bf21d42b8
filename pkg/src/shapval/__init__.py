"""Workbench for comparing Shapley value-function semantics.

The package covers the full loop: dataset preparation, predictive models,
the eight coalition value functions, exact and sampled Shapley oracles,
amortized explainer training, explanation-quality metrics, a blinded
case-review study service, and the statistical analysis of review logs.
"""

__version__ = "0.1.0"

VARIANTS = (
    "fixed_zero",
    "fixed_mean",
    "uniform",
    "marginal",
    "joint_marginal",
    "conditional",
    "counterfactual",
    "filtered_conditional",
)
