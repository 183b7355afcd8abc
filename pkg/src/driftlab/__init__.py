"""driftlab: a desk-scale numerical laboratory for 1D drift-diffusion equations
with singular lower-order terms.

The package bundles closed-form kernels and singular drift families, evaluators
for the a-priori growth envelopes attached to them, a finite-difference solver
for the linear and nonlocal equations, Monte-Carlo simulation of the associated
stochastic flow, and an experiment layer that measures solver output against
every bound in scope.
"""

from .accel import numba_enabled
from .special_functions import (
    DriftFamily,
    DriftSign,
    DriftSpec,
    KernelParams,
    Modulus,
    ModulusKind,
    chi_forcing,
    drift_deriv,
    drift_eval,
    explicit_modulus,
    explicit_modulus_residual,
    heat_kernel,
    heat_kernel_moment,
    initial_modulus,
    phi_forcing,
)

__version__ = "0.1.0"
