"""Low-rank matrix recovery by graduated rank approximation."""
from .errors import IcraError
from .icra import IcraConfig, SolveReport, icra_solve, lgd_solve, nnm_report, snr_db
from .nnm import SplitSolverConfig, solve_nnm, solve_weighted_nnm
from .operators import DenseOperator, SamplingOperator
from .ua import UAFamily

__all__ = [
    "DenseOperator", "IcraConfig", "IcraError", "SamplingOperator", "SolveReport",
    "SplitSolverConfig", "UAFamily", "icra_solve", "lgd_solve", "nnm_report", "snr_db",
    "solve_nnm", "solve_weighted_nnm",
]
