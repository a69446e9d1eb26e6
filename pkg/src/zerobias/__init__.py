"""Zero-bias expansions of E[h(W)] for sums of independent summands.

The package solves Stein's equation numerically, evaluates the recursive
expansion C_N(h) with a full term ledger, bounds its error, and checks the
result against exact convolution and Monte Carlo oracles.
"""
from .admissible import AdmissibleFunction, call_function, cosine, exp_bounded, indicator, polynomial, smooth
from .bounds import (
    concentration_W,
    concentration_leave_one_out,
    remainder_bound,
    reverse_taylor_remainder,
    taylor_remainder,
    zero_bias_distance_bound,
)
from .compositions import Composition, compositions_up_to
from .distributions import (
    Coupling,
    MeanZeroDistribution,
    finite_discrete,
    make_two_point,
    scaled,
    sum_law,
    uniform_symmetric,
    zero_bias,
)
from .errors import (
    CapacityError,
    ContractError,
    DegenerateFitError,
    DomainError,
    NumericalError,
    OrderError,
    PreconditionError,
    ValidationError,
    ZeroBiasError,
)
from .expansion import ErrorBudget, ExpansionLedger, error_budget, expand, normal_expectation_reduced
from .oracle import OracleResult, OrderFit, exact_expectation, fit_power_law, mc_expectation, order_fit
from .stein import SteinSolution, modified_solve, nested_admissible, normal_expectation, solve

__version__ = "0.1.0"
