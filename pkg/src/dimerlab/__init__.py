"""Dimer and double-dimer tools on the square lattice.

Modules: ``lattice`` (domains and coordinates), ``kasteleyn`` (matrices,
counts, couplings), ``dbar`` (discrete holomorphic boundary problems),
``primitive`` (the vertex function H), ``doubledimer`` (tilings, heights,
leap-frog harmonicity checks, sampling), ``continuum`` (half-plane limits and the grid
harmonic-measure oracle), ``cli``.
"""

__version__ = "0.1.0"
