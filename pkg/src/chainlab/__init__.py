"""chainlab: simulation and verification lab for a weakly anharmonic
oscillator chain with stretch-conserving noise.

Subpackages
-----------
potentials   spring perturbations, model parameters, scaling regimes
thermo       one-site thermodynamics (partition function, tension, ...)
gibbs        exact Gibbs sampling and block-mean densities
dynamics     SDE integration of the rescaled chain (compiled + NumPy cores)
psystem      macroscopic p-system solvers and the shock-time bound
fluctuation  fluctuation fields, Sobolev norms, hydrodynamic-error stats
verify       numerical verification toolbox (CLT expansion, ensembles, ...)
cli          the `lab` experiment runner
"""

__version__ = "0.1.0"
