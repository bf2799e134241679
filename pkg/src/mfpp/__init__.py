"""Multivariate space-time fractional Poisson and compound Poisson processes.

The counting vector is ``N(A^eta(L^nu(t)))``: independent Poisson counts run
on a stable subordinator clock composed with an inverse stable clock.
"""

from .analytics import (
    codifference,
    compound_pgf,
    compound_pmf,
    covariance,
    f_tilde,
    levy_measure_C,
    levy_measure_N,
    levy_point_masses,
    pgf,
    pgf_OT,
    pmf,
    pmf_OT,
    pmf_eta1,
    total_count_pmf,
    z_nu,
)
from .errors import DomainError, NumericalFailure
from .model import (
    BernsteinFamily,
    JumpDistribution,
    JumpFamily,
    ModelParams,
    PowerSeriesTNu,
    s_lambda,
)
from .specfun import fox_wright, mittag_leffler, mittag_leffler_3
from .stochastic import (
    RngStream,
    sample_compound,
    sample_inverse_stable,
    sample_OT_process,
    sample_process,
    sample_stable,
)

__version__ = "0.1.0"

__all__ = [
    "BernsteinFamily",
    "DomainError",
    "JumpDistribution",
    "JumpFamily",
    "ModelParams",
    "NumericalFailure",
    "PowerSeriesTNu",
    "RngStream",
    "codifference",
    "compound_pgf",
    "compound_pmf",
    "covariance",
    "f_tilde",
    "fox_wright",
    "levy_measure_C",
    "levy_measure_N",
    "levy_point_masses",
    "mittag_leffler",
    "mittag_leffler_3",
    "pgf",
    "pgf_OT",
    "pmf",
    "pmf_OT",
    "pmf_eta1",
    "s_lambda",
    "sample_OT_process",
    "sample_compound",
    "sample_inverse_stable",
    "sample_process",
    "sample_stable",
    "total_count_pmf",
    "z_nu",
]
