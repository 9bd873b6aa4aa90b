"""Finite-difference multi-grade deep learning for the Helmholtz equation.

Kept import-light: the CLI sets BLAS thread variables before numpy loads.
Import submodules directly, e.g. ``from fdmgdl.mgdl import run_adaptive``.
"""

__version__ = "0.1.0"

__all__ = ["cli", "convex", "experiment", "fdm", "grid", "helmholtz", "metrics", "mgdl", "net", "optim", "pml",
           "presets", "report"]
