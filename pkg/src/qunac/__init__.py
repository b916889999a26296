"""Action-constrained quasi-Newton updates and preconditioned Newton-CG."""
from .driver import IterationRecord, Method, NewtonConfig, SolveReport, StopReason, minimize
from .pcg import CGConfig, CGResult, CGStatus, pcg_collect, pcg_tolerance
from .problems import ProblemInstance, builtin_problem, logistic_svm
from .updates import (
    RankDeficientSampling,
    SamplingBlock,
    UpdateResult,
    family_blend,
    least_change_update,
    qunac_direct,
    qunac_direct_inverse,
    qunac_inverse,
)

__version__ = "0.1.0"
