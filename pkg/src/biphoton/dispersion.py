"""Crystal dispersion data and the longitudinal phase mismatch.

All quantities are SI: meters, seconds, rad/s, rad/m.
"""
import math
import warnings
from dataclasses import dataclass, field
from typing import Optional, Tuple

import numpy as np

from .errors import PreconditionError, RangeError

C_LIGHT = 299_792_458.0

# paraxial narrow-deviation regime: detunings above this fraction of the
# carrier frequency trigger a warning
MAX_RELATIVE_DETUNING = 0.2


class DetuningWarning(UserWarning):
    """Detuning is not small compared to the carrier frequency."""


@dataclass(frozen=True)
class CrystalSpec:
    """Length and per-beam dispersion of the nonlinear crystal.

    ``k_*`` are central wavenumbers inside the crystal, ``ug_*`` group
    velocities and ``G_*`` group-velocity dispersions (d(1/u_g)/dOmega).
    """

    length: float
    k_p: float
    k_s: float
    k_i: float
    ug_p: float
    ug_s: float
    ug_i: float
    G_p: float = 0.0
    G_s: float = 0.0
    G_i: float = 0.0
    poling_period: Optional[float] = None
    phase_matching_tolerance: float = 1.0
    omega_p: Optional[float] = None

    def __post_init__(self):
        if not self.length > 0:
            raise PreconditionError("crystal length must be positive")
        if min(self.k_p, self.k_s, self.k_i) <= 0:
            raise PreconditionError("wavenumbers must be positive")
        if min(self.ug_p, self.ug_s, self.ug_i) <= 0:
            raise PreconditionError("group velocities must be positive")
        if self.poling_period is not None and not self.poling_period > 0:
            raise PreconditionError("poling period must be positive")
        mismatch = self.central_mismatch
        if abs(mismatch) > self.phase_matching_tolerance:
            raise PreconditionError(
                f"central phase matching violated: k_p - k_s - k_i - K_G = {mismatch:.4g} rad/m "
                f"(tolerance {self.phase_matching_tolerance:g})")

    @property
    def grating_wavenumber(self):
        return 0.0 if self.poling_period is None else 2.0 * math.pi / self.poling_period

    @property
    def central_mismatch(self):
        """k_p - k_s - k_i - 2 pi / Lambda (rad/m)."""
        return self.k_p - self.k_s - self.k_i - self.grating_wavenumber

    def swapped(self):
        """Same crystal with the signal and idler roles exchanged."""
        return CrystalSpec(
            length=self.length, k_p=self.k_p, k_s=self.k_i, k_i=self.k_s,
            ug_p=self.ug_p, ug_s=self.ug_i, ug_i=self.ug_s,
            G_p=self.G_p, G_s=self.G_i, G_i=self.G_s,
            poling_period=self.poling_period,
            phase_matching_tolerance=self.phase_matching_tolerance,
            omega_p=self.omega_p)


@dataclass(frozen=True)
class BeamGeometry:
    """Waists of the pump and of the signal/idler detection modes (meters)."""

    w_p: float
    w_s: float
    w_i: float

    def __post_init__(self):
        if min(self.w_p, self.w_s, self.w_i) <= 0:
            raise PreconditionError("beam waists must be positive")

    def rayleigh_lengths(self, crystal):
        """(z_Rp, z_Rs, z_Ri) with z_R = k w^2 / 2."""
        return (crystal.k_p * self.w_p ** 2 / 2,
                crystal.k_s * self.w_s ** 2 / 2,
                crystal.k_i * self.w_i ** 2 / 2)

    def swapped(self):
        return BeamGeometry(self.w_p, self.w_i, self.w_s)


def _check_detuning(omega, crystal):
    if crystal.omega_p is None:
        return
    carrier = crystal.omega_p / 2
    if np.any(np.abs(omega) > MAX_RELATIVE_DETUNING * carrier):
        warnings.warn("detuning exceeds 20% of the carrier frequency; the "
                      "quadratic dispersion expansion is unreliable", DetuningWarning, stacklevel=3)


def delta_omega(omega_s, omega_i, crystal):
    """Spectral part of the phase mismatch (rad/m).

    Second-order expansion in the signal and idler detunings ``omega_s`` and
    ``omega_i`` (rad/s); array inputs broadcast.
    """
    ws = np.asarray(omega_s, dtype=float)
    wi = np.asarray(omega_i, dtype=float)
    _check_detuning(ws, crystal)
    _check_detuning(wi, crystal)
    wp = ws + wi
    # signal and idler terms are paired so exchanging them is bit-exact
    out = (wp / crystal.ug_p - (ws / crystal.ug_s + wi / crystal.ug_i)
           + 0.5 * (crystal.G_p * wp ** 2 - (crystal.G_s * ws ** 2 + crystal.G_i * wi ** 2)))
    return out[()] if out.ndim == 0 else out


def phase_mismatch_kz(q_s, q_i, detunings, crystal):
    """Longitudinal phase mismatch Delta k_z in the Fresnel approximation.

    Parameters
    ----------
    q_s, q_i : tuple of (rho, phi)
        Transverse momenta of signal and idler in polar form (rad/m, rad).
    detunings : tuple of (omega_s, omega_i)
    crystal : CrystalSpec
    """
    rho_s, phi_s = (np.asarray(x, dtype=float) for x in q_s)
    rho_i, phi_i = (np.asarray(x, dtype=float) for x in q_i)
    k_p, k_s, k_i = crystal.k_p, crystal.k_s, crystal.k_i
    out = (delta_omega(*detunings, crystal)
           + rho_s ** 2 * (k_p - k_s) / (2 * k_p * k_s)
           + rho_i ** 2 * (k_p - k_i) / (2 * k_p * k_i)
           - rho_s * rho_i * np.cos(phi_i - phi_s) / k_p)
    return out[()] if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SellmeierSet:
    """Refractive-index model n(lambda) with lambda in micrometers.

    ``n^2 = A + sum_j B_j lambda^2 / (lambda^2 - C_j)
    + sum_k E_k / (lambda^2 - F_k) - D lambda^2``, plus an optional linear
    thermal term ``dn_dT * (T - T_ref)``. ``terms`` holds the (B, C) pairs
    and ``pole_terms`` the (E, F) pairs.
    """

    A: float
    terms: Tuple[Tuple[float, float], ...] = ()
    pole_terms: Tuple[Tuple[float, float], ...] = ()
    D: float = 0.0
    valid_range_um: Tuple[float, float] = (0.0, math.inf)
    dn_dT: float = 0.0
    reference_temperature: float = 25.0
    name: str = ""

    def index(self, wavelength, temperature=None):
        """Refractive index at ``wavelength`` in meters."""
        lam = np.asarray(wavelength, dtype=float) * 1e6
        lo, hi = self.valid_range_um
        if np.any(lam < lo) or np.any(lam > hi):
            raise RangeError(f"wavelength outside validity range {lo}-{hi} um of {self.name or 'model'}")
        lam2 = lam * lam
        n2 = self.A - self.D * lam2
        for b, c in self.terms:
            n2 = n2 + b * lam2 / (lam2 - c)
        for e, f in self.pole_terms:
            n2 = n2 + e / (lam2 - f)
        n = np.sqrt(n2)
        if temperature is not None:
            n = n + self.dn_dT * (temperature - self.reference_temperature)
        return n


@dataclass(frozen=True)
class BeamDispersion:
    """Wavenumber k (rad/m), group velocity (m/s) and GVD (s^2/m) of one beam."""

    k: float
    group_velocity: float
    gvd: float
    index: float = field(default=float("nan"))


def sellmeier_wavenumber(wavelength, coefficients, temperature=None, step=1e-10):
    """Wavenumber, group velocity and GVD from a Sellmeier model.

    Derivatives of n(lambda) use central differences with spacing ``step``
    (meters)::

        1/u_g = (n - lambda n') / c,    G = lambda^3 n'' / (2 pi c^2)

    Parameters
    ----------
    wavelength : float
        Vacuum wavelength in meters.
    coefficients : SellmeierSet or callable
        Any callable ``n(wavelength_m)`` is accepted as well.
    """
    if isinstance(coefficients, SellmeierSet):
        def n_of(lam):
            return float(coefficients.index(lam, temperature))
    else:
        n_of = coefficients
    lam, h = float(wavelength), float(step)
    n0 = n_of(lam)
    n_plus, n_minus = n_of(lam + h), n_of(lam - h)
    dn = (n_plus - n_minus) / (2 * h)
    d2n = (n_plus - 2 * n0 + n_minus) / h ** 2
    k = 2 * math.pi * n0 / lam
    inv_ug = (n0 - lam * dn) / C_LIGHT
    gvd = lam ** 3 * d2n / (2 * math.pi * C_LIGHT ** 2)
    return BeamDispersion(k=k, group_velocity=1.0 / inv_ug, gvd=gvd, index=n0)


def crystal_from_sellmeier(length, pump_wavelength, pump_model, signal_model, idler_model,
                           signal_wavelength=None, temperature=None, poling_period="auto",
                           phase_matching_tolerance=1.0):
    """Build a :class:`CrystalSpec` for (by default) degenerate SPDC.

    ``poling_period="auto"`` picks the period that removes the central
    mismatch; pass ``None`` for a birefringently phase-matched crystal.
    """
    lam_p = float(pump_wavelength)
    lam_s = 2 * lam_p if signal_wavelength is None else float(signal_wavelength)
    lam_i = 1.0 / (1.0 / lam_p - 1.0 / lam_s)
    p = sellmeier_wavenumber(lam_p, pump_model, temperature)
    s = sellmeier_wavenumber(lam_s, signal_model, temperature)
    i = sellmeier_wavenumber(lam_i, idler_model, temperature)
    if poling_period == "auto":
        mismatch = p.k - s.k - i.k
        poling_period = 2 * math.pi / mismatch if mismatch != 0 else None
    return CrystalSpec(
        length=length, k_p=p.k, k_s=s.k, k_i=i.k,
        ug_p=p.group_velocity, ug_s=s.group_velocity, ug_i=i.group_velocity,
        G_p=p.gvd, G_s=s.gvd, G_i=i.gvd, poling_period=poling_period,
        phase_matching_tolerance=phase_matching_tolerance,
        omega_p=2 * math.pi * C_LIGHT / lam_p)


def wavelength_to_detuning(wavelength, center):
    """Exact detuning Omega = 2 pi c (1/lambda - 1/lambda_0)."""
    return 2 * math.pi * C_LIGHT * (1.0 / np.asarray(wavelength, dtype=float) - 1.0 / center)


def detuning_to_wavelength(omega, center):
    return 1.0 / (np.asarray(omega, dtype=float) / (2 * math.pi * C_LIGHT) + 1.0 / center)


def symmetric_gl_grid(half_span, nodes):
    """Gauss-Legendre nodes and weights on [-half_span, half_span]."""
    x, w = np.polynomial.legendre.leggauss(int(nodes))
    return x * half_span, w * half_span
