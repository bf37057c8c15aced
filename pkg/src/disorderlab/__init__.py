"""Wave packets in weak, long-range correlated random potentials in 2D.

Spectral simulation, kinetic solvers and closed-form predictions for
momentum broadening, isotropization and diffusion.
"""

__version__ = "0.1.0"
