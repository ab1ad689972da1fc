"""Lyapunov exponents and Hörmander-type spanning checks for Euler-like SDEs.

Models have the form ``dx = (B(x, x) - eps A x) dt + s(eps) sum_k X_k dW^k``
with ``B`` energy conserving and ``A`` symmetric positive definite.
"""

from ._accel import backend, set_backend
from .estimates import ExponentEstimate
from .exponents import (DegenerateForcingError, SweepResult, SweepRow, epsilon_sweep, fk_average,
                        gaussian_fisher_check, moment_lyapunov, top_exponent)
from .liealg import ClosureResult, RationalMatrix, bracket, lie_closure, span_rank
from .models import (BilinearForm, BilinearModel, GNSEConfig, Scaling, build_gnse, build_l96,
                     build_linear, build_ou, eval_drift, eval_drift_jacobian, model_from_dict,
                     model_to_dict, rescale_fd)
from .projective import (Spectrum, fk_integrands, lift_field, qr_spectrum, shear_bound_check,
                         sphere_divergence, step_projective)
from .sde import (BlowUpError, IntegratorConfig, Scheme, Trajectory, energy_balance, integrate,
                  stationary_samples)
from .spanning import (DistinctnessReport, HkFamily, build_Dk, build_Hk, check_distinctness,
                       verify_sl_generation, zn_propagation)

__version__ = "0.1.0"

__all__ = [
    "BilinearForm", "BilinearModel", "BlowUpError", "ClosureResult", "DegenerateForcingError",
    "DistinctnessReport", "ExponentEstimate", "GNSEConfig", "HkFamily", "IntegratorConfig",
    "RationalMatrix", "Scaling", "Scheme", "Spectrum", "SweepResult", "SweepRow", "Trajectory",
    "backend", "bracket", "build_Dk", "build_Hk", "build_gnse", "build_l96", "build_linear",
    "build_ou", "check_distinctness", "energy_balance", "epsilon_sweep", "eval_drift",
    "eval_drift_jacobian", "fk_average", "fk_integrands", "gaussian_fisher_check", "integrate",
    "lie_closure", "lift_field", "model_from_dict", "model_to_dict", "moment_lyapunov",
    "qr_spectrum", "rescale_fd", "set_backend", "shear_bound_check", "span_rank",
    "sphere_divergence", "stationary_samples", "step_projective", "top_exponent",
    "verify_sl_generation", "zn_propagation",
]
