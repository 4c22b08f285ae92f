"""Replica formula for mutual information in random linear estimation with
right-rotationally invariant matrices, plus finite-n oracles."""

__version__ = "0.1.0"

from .errors import DomainError, InvalidArgument, NumericalFailure, UnsupportedOperation
from .prior import Prior, QuadratureRule, gauss_hermite, mmse, mutual_info, sample
from .spectra import (
    Ensemble,
    Spectrum,
    esd_R,
    esd_T,
    limiting_spectrum_T,
    load_spectrum,
    mp_identity_residual,
    r_transform,
    sample_phi_prime,
    shannon_G,
    stieltjes,
)
from .potential import (
    FORMULATIONS,
    PotentialPoint,
    PotentialResult,
    extremize,
    fixed_points,
    i_rs,
    mmse_prediction,
    se_step,
)
from .gibbs import (
    Estimate,
    exact_mi,
    exact_mi_gaussian,
    generate,
    nishimori_residual,
    posterior_stats,
)
from .interp import InterpPath, boundary_check, derivative_check, hamiltonian, interp_mi
from .config import RunConfig, parse_config, serialize

__all__ = [name for name in dir() if not name.startswith("_")]
