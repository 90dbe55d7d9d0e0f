"""Desk-scale numerics for direct finiteness of group algebras.

Modules
-------
qalg      quasi-inverses, range projections, trace certificates
fingroup  Cayley-table groups, group algebras, convolution spectra
pnorm     p->p norm brackets, Herz comparison, Kunze-Stein sweeps, X_p(G)
affine    Aff(R), Diep's function and the Galerkin refinement study
cli       the ``dfwb`` command
"""

from __future__ import annotations

__version__ = "0.1.0"
