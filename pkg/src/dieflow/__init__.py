"""RL-driven shape optimization of 2D extrusion-die flow channels.

Subpackages: spline (B-spline kernel), mesh (geometry generators + VTK),
ffd (free-form deformation), solver (stabilized shear-thinning Stokes FEM),
objectives (mass flows and outflow homogeneity), environment / surrogate
(RL environments), nn (MLP + Adam + policy heads), agents (PPO / A2C / DQN),
vecenv (synchronous vectorization), cli (experiment runner).
"""

__version__ = "0.1.0"

from . import (  # noqa: F401
    _kernels,
    agents,
    environment,
    ffd,
    mesh,
    nn,
    objectives,
    runconfig,
    solver,
    spline,
    surrogate,
    vecenv,
)
