"""Likelihood-based analysis of interval- and rectangle-valued data built from latent samples."""

from .distributions import BivariateGaussian, Gaussian, Uniform, family_from_dict, make_rng
from .intervals import AggregationSpec, Hypercube, Interval, aggregate, aggregate_hypercube, reparam_centre_logrange
from .likelihood import (
    DescriptiveModel,
    HierarchicalModel,
    IIDGenerativeModel,
    UniformMixtureModel,
    containment_cdf_iid,
    dataset_loglik,
    loglik_descriptive,
    loglik_hier_general,
    loglik_hier_uniform_minmax,
    loglik_minmax_iid,
    loglik_order_iid,
)
from .hypercube import (
    CreditDescriptiveModel,
    CreditModelSpec,
    loglik_bivariate_minmax_iid,
    loglik_hypercube_hier,
)
from .quadrature import gauss_hermite_rule, gauss_laguerre_rule, tensor_grid
from .asymptotics import LimitSpec, convergence_diagnostic, limiting_density_general, limiting_density_uniform
from .inference import FitOptions, FitResult, fit_mle, local_posterior, predictive_interval, predictive_latent
from .studies import StudyConfig, run_credit_study, run_likelihood_profile, run_sim_compare, simulate

__version__ = "0.1.0"
