"""Hierarchical maximum entropy by renormalization.

Tabular solver and oracles live in :mod:`hime.rg` and :mod:`hime.oracle`;
closed-form flows for quadratic, logarithmic and nearest-neighbor losses in
:mod:`hime.gaussian`, :mod:`hime.dirichlet` and :mod:`hime.ising`.
"""
from .core import (
    SigmaSchedule,
    TabularDistribution,
    TransformChain,
    TransformStep,
    compose,
    disintegrate,
    entropy,
    hierarchical_entropy,
    hierarchical_kl,
    kl,
    pushforward,
)
from .errors import (
    ContractError,
    DegenerateSupportError,
    FlowBreakdownError,
    HimeError,
    InfeasibleConstraintError,
    NumericRangeError,
    SingularBlockError,
)
from .renorm import escort, generalized_escort
from .rg import SolveReport, pareto_sweep, run_generalized_rg, run_rg, solve_lambda

__version__ = "0.1.0"
