"""Closed-form Laguerre-Gaussian coincidence amplitudes of SPDC biphotons.

Modules
-------
specialfn    complex log-Gamma and the regularized 2F1
dispersion   crystal data and phase mismatch
lgmodes      momentum-space LG modes
amplitude    closed-form amplitudes and the batch spectral engine
oracle       brute-force overlap-integral reference
state        CW biphoton state, purity, Schmidt numbers, filters
engineering  pump design for target OAM matrices, Gouy diagnostics
cli          command-line front end
"""
__version__ = "0.1.0"

from .amplitude import (AmplitudeRequest, PumpSpec, SpectralEngine, Truncation, amplitude_for_pump,
                        coincidence_amplitude, gouy_reduced_amplitude, z_integrand)
from .dispersion import (BeamGeometry, CrystalSpec, SellmeierSet, crystal_from_sellmeier, delta_omega,
                         phase_mismatch_kz, sellmeier_wavenumber, wavelength_to_detuning)
from .engineering import (TargetMatrix, relative_mode_number, solve_pump_coefficients,
                          verify_gouy_spectral_invariance)
from .errors import *  # noqa: F401,F403
from .lgmodes import ModeIndex, lg_amplitude, t_coefficient
from .oracle import QuadratureGrid, brute_force_amplitude, brute_force_spectrum
from .specialfn import hyp2f1_regularized, ln_gamma
from .state import (BiphotonState, SpatialDensityMatrix, SpectralGrid, apply_spectral_filter, build_state,
                    purity, purity_sweep, schmidt_number_full, schmidt_number_subspace, spatial_overlap_matrix,
                    spatial_purity)
