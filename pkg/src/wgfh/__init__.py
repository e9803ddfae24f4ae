"""Numerical laboratory for Fokker-Planck gradient flows in oscillatory media.

Modules by capability:

  expressions  arithmetic expressions for media and initial data
  media        mobility tensors, stationary densities, grid sampling
  cell         periodic cell problems and effective tensors
  flow         structure-preserving finite-volume evolution
  edi          free energy, dissipation potentials, ledgers and sweeps
  metrics      point metrics, 1-d transport distances, geodesic lab
  gammaconv    oscillatory Dirichlet energies and recovery fields
  experiments  JSON-configured experiment runner and report
"""

__version__ = "0.1.0"
