"""Minimization of the reduced Ginzburg-Landau energy in LOD multiscale spaces.

The package is organized bottom-up:

- ``mesh``: structured triangulations of the unit square, refinement
  hierarchies and element patches.
- ``forms``: P1 assembly of the magnetic form, mass forms, energy,
  gradient and Hessian over complex nodal fields.
- ``lod``: coarse L2 projection, patch-localized corrector solves and
  the multiscale basis.
- ``spaces``: discrete subspaces of the fine P1 space (LOD or standard
  Lagrange) with cached compressed operators.
- ``minimize``: conjugate Sobolev gradient descent with adapted metric.
- ``spectrum``: Hessian eigenvalue post-checks of computed minimizers.
- ``experiments``: initial data, energy tables, rate studies, field I/O.
- ``cli``: command-line entry point.
"""

from gllod.mesh import Mesh, Hierarchy, Patch, build_uniform, refine, element_patch

__all__ = [
    "Mesh",
    "Hierarchy",
    "Patch",
    "build_uniform",
    "refine",
    "element_patch",
]

__version__ = "0.1.0"
