"""
rombuckle: reduced-order models for buckling of hyperelastic beams and tubes.

Submodules
----------
mesh            structured simplicial beams and tubes with tagged boundaries
constitutive    Saint Venant-Kirchhoff and neo-Hookean energies, stresses, tangents
assembly        P1 residual/Jacobian assembly, boundary data, geometric maps
solver          Newton, simple continuation, output functionals, branch I/O
rom             snapshots, POD, reduced Galerkin sweeps, error sweeps
hyperreduction  DEIM of the internal force with support-only assembly
scenario, cli   scenario files and the ``rombuckle`` command
"""

__version__ = "0.1.0"

from . import assembly, constitutive, errors, hyperreduction, mesh, rom, solver  # noqa: E402,F401
