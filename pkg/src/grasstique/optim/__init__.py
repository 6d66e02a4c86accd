from .drivers import (
    SOLVERS,
    IterInfo,
    SolverOptions,
    SolverResult,
    bfgs_global,
    bfgs_local,
    lbfgs,
    newton_grassmann,
)
from .linesearch import LineSearchParams, NonAscentError, forced_step, wolfe_search
from .trace import RunTrace, read_trace
from .updates import (
    DenseQNState,
    LbfgsState,
    bfgs_direct_update,
    bfgs_inverse_update,
    init_inverse_hessian,
)

__all__ = [
    "SOLVERS",
    "DenseQNState",
    "IterInfo",
    "LbfgsState",
    "LineSearchParams",
    "NonAscentError",
    "RunTrace",
    "SolverOptions",
    "SolverResult",
    "bfgs_direct_update",
    "bfgs_global",
    "bfgs_inverse_update",
    "bfgs_local",
    "forced_step",
    "init_inverse_hessian",
    "lbfgs",
    "newton_grassmann",
    "read_trace",
    "wolfe_search",
]
