"""Universal mesh finite elements for heat problems on moving domains."""
from .driver import RunConfig, RunResult, convergence_study, interpolant_gap_study, run
from .problems import flower_demo, get_problem, stefan_1d, stefan_2d

__version__ = "0.1.0"

__all__ = ["RunConfig", "RunResult", "convergence_study", "flower_demo", "get_problem",
           "interpolant_gap_study", "run", "stefan_1d", "stefan_2d"]
