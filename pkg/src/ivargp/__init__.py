"""Integrated-variance experimental design for Gaussian-process surrogates,
with pseudospectral comparison tools."""

from .bench import (
    AdaptiveTrace,
    PriorSampler,
    adaptive_gp_loop,
    compare_designs,
    relative_l2_error,
    sample_prior_function,
    test_function,
)
from .design import (
    OptimizerConfig,
    SaaContext,
    alm_design,
    ivar_eigen,
    ivar_saa,
    ivar_saa_grad,
    mi_design,
    minimize_ivar_batch,
    minimize_ivar_greedy,
)
from .domains import (
    Ball,
    DiscDifference,
    Domain,
    GaussianDomain,
    Hypercube,
    default_nonconvex_domain,
    domain_from_spec,
)
from .errors import (
    ConfigError,
    DomainError,
    EigensystemUnavailableError,
    IllConditionedError,
    NonOrthogonalizingRuleError,
    NumericalError,
)
from .gp import (
    Design,
    GpPosterior,
    cardinal_functions,
    design_from_csv,
    design_to_csv,
    fit,
    lebesgue_constant,
    log_marginal_likelihood,
    optimize_hyperparameters,
    posterior_from_points,
)
from .kernels import (
    EigenSystem,
    FiniteRankKernel,
    Kernel,
    Mehler,
    SquaredExponential,
    eigensystem_of,
    kernel_from_spec,
    truncate_kernel,
)
from .spectral import (
    HermiteBasis,
    PsaApproximation,
    QuadratureRule,
    error_spectrum,
    gauss_hermite,
    gp_psa_bound,
    hermite_basis_1d,
    hermite_normalized,
    ivar_orthogonal_identity,
    orthogonality_defect,
    psa_fit,
    tensor_rule,
)

__version__ = "0.1.0"
