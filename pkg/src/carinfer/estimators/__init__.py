"""Analysis-model fitters: OLS, Firth logistic, Cox and IPCW RMST regression."""
from __future__ import annotations

from .cox import cox_log_partial_likelihood, fit_cox
from .design import MODEL_SPECS, DesignError, DesignMatrix, build_design, covariate_block
from .firth import fit_firth_logistic, penalized_loglik
from .km import StepFunction, km_censoring_survival
from .ols import fit_ols, ols_treatment_batch
from .result import FitResult, SingularDesignError
from .rmst import G_FLOOR, fit_rmst_tian, ipcw_weights

# Outcome variables of the simulation study and the fitter each one uses.
ANALYSES = ("normal", "binary", "cox", "rmst")
DEFAULT_TAU = 80.0


def fit_model(dataset, model_spec: str, analysis: str, arm=None,
              tau: float = DEFAULT_TAU) -> FitResult:
    """Fit ``model_spec`` for outcome variable ``analysis`` to ``dataset``.

    Cox coefficients are returned as minus log hazard ratios, so a positive
    treatment coefficient means longer survival, the same direction as the
    effect on log event time in the generator and as the test margins.
    """
    if analysis not in ANALYSES:
        raise ValueError(f"unknown analysis {analysis!r}; expected one of {ANALYSES}")
    X = build_design(dataset, model_spec, analysis, arm=arm)
    if analysis == "normal":
        return fit_ols(X, dataset.y)
    if analysis == "binary":
        return fit_firth_logistic(X, dataset.y)
    if analysis == "cox":
        fit = fit_cox(X, dataset.time, dataset.event)
        fit.beta = -fit.beta
        fit.extra["log_hazard_sign"] = -1
        return fit
    return fit_rmst_tian(X, dataset.time, dataset.event, tau)


__all__ = [
    "ANALYSES", "DEFAULT_TAU", "MODEL_SPECS", "DesignError", "DesignMatrix", "FitResult",
    "G_FLOOR", "SingularDesignError", "StepFunction", "build_design", "covariate_block",
    "cox_log_partial_likelihood", "fit_cox", "fit_firth_logistic", "fit_model", "fit_ols",
    "fit_rmst_tian", "ipcw_weights", "km_censoring_survival", "ols_treatment_batch",
    "penalized_loglik",
]
