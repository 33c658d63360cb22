"""Numerical comparison geometry on Sasakian model spaces.

Modules
-------
kernels
    Scalar comparison kernels and their windows.
models
    Heisenberg, Hopf and anti-de Sitter model spaces, connections, curvature.
geodesics
    Exponential maps, shooting solver, distances for ``g_eps`` and ``eps = 0``.
jacobi
    Jacobi fields, closed forms, index form, Hessian of the distance.
comparison
    Seeded verification of Hessian, Laplacian and foliation-level bounds.
mcp
    Measure contraction probes and the contraction density bound.
reports, cli
    Report writers and the command-line front end.
"""

from .geodesics import distance, exp_eps, solve_bvp, sr_exp
from .jacobi import closed_form, hessian_from_arc, hessian_of_distance, index_form
from .kernels import kernel_bundle, pole_window
from .models import ModelKind, build_model, model_from_name

__version__ = "0.1.0"

__all__ = ["ModelKind", "build_model", "model_from_name", "kernel_bundle", "pole_window",
           "distance", "exp_eps", "solve_bvp", "sr_exp", "closed_form", "hessian_from_arc",
           "hessian_of_distance", "index_form"]
