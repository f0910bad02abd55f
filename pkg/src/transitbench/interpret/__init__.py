"""Model-agnostic explanations over any FittedModel or prediction callable."""
from .importance import ImportanceReport, permutation_importance
from .lime import LimeExplanation, lime_explain
from .pdp import GridSpec, ICEBundle, PDPCurve, ice, make_grid, pdp
from .shapley import ShapExplanation, beeswarm_frame, shap_exact, shap_many, shap_sampled

__all__ = [
    "ImportanceReport", "permutation_importance", "LimeExplanation", "lime_explain",
    "GridSpec", "ICEBundle", "PDPCurve", "ice", "make_grid", "pdp",
    "ShapExplanation", "beeswarm_frame", "shap_exact", "shap_many", "shap_sampled",
]
