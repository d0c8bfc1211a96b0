"""Numerical checks of quasi-invariance, Harnack and Wang inequalities.

Modules: :mod:`measure_core` (Gaussian shifts), :mod:`kernel_duality`
(finite kernels), :mod:`harnack_models` (Euclidean and torus heat kernels),
:mod:`heisenberg` (step-2 groups and their Brownian motions) and
:mod:`geodesics` (discrete lengths and distances).
"""

__version__ = "0.1.0"
