"""Exact and variational Bayesian learning and unlearning on 1-D grids."""

__version__ = "0.1.0"

from .grid import (
    GridDensity,
    ParameterGrid,
    expectation,
    kl_divergence,
    make_grid,
    normalize,
    quadrature,
)
from .models import (
    AR1Model,
    BernoulliModel,
    ConjugateState,
    Dataset,
    GaussianModel,
    PoissonModel,
    conjugate_downdate,
    conjugate_to_grid,
    conjugate_update,
    loglik_group,
    simulate,
)
from .learn import LearnInputs, LearnOutputs, info_loss_processing, posterior_exact
from .delete import (
    DeleteInputs,
    DeleteOutputs,
    InfoLossReport,
    delete_group_exact,
    info_loss_deletion,
    perturbation_stationarity_check,
    verify_equivalence,
    verify_zero_loss,
)
from .varinf import (
    OptimizerConfig,
    VariationalParams,
    VariationalResult,
    fit,
    gradient,
    objective_learn,
    objective_unlearn,
)
from .cv import CVPlan, CVReport, compare_methods, run_cv
