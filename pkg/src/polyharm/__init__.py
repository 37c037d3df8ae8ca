"""Mixed finite elements for (-1)^m Δ^m u = f, m = 1, 2, 3, with adaptive refinement."""

from .adaptivity import AfemConfig, afem_loop, doerfler_mark
from .assembly import solve_mixed
from .estimator import estimate_lambda, estimate_mu
from .fespace import build_spaces, kernel_basis, project_X
from .mesh import Triangulation, initial_mesh, overlay, refine_nvb, uniform_red

__version__ = "0.1.0"

__all__ = [
    "AfemConfig",
    "Triangulation",
    "afem_loop",
    "build_spaces",
    "doerfler_mark",
    "estimate_lambda",
    "estimate_mu",
    "initial_mesh",
    "kernel_basis",
    "overlay",
    "project_X",
    "refine_nvb",
    "solve_mixed",
    "uniform_red",
]
