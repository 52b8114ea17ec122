"""Brute-force coincidence amplitudes by direct quadrature of the overlap integral.

The integrand is built from the pump, signal and idler polynomials in
``(rho_s, rho_i, dphi)`` with ``dphi = phi_i - phi_s``:

    [rho_p^2]^(u + (|l| - l)/2) rho_s^(|ls| + 2s + 1) rho_i^(|li| + 2i + 1)
        (rho_s + rho_i e^{i dphi})^l  x  Gaussians  x  exp(i z dk_z)

The absolute angle integrates to ``2 pi`` (or zero when OAM is not
conserved) and the crystal integral is ``L sinc(dk_z L / 2)``, leaving a
three-dimensional quadrature. Nothing here shares code with the closed form
beyond the mode coefficients and the phase mismatch.
"""
import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np
from scipy.special import roots_genlaguerre

from .amplitude import spectral_envelope
from .dispersion import delta_omega
from .errors import AccuracyError, PreconditionError
from .lgmodes import t_coefficient

MIN_RADIAL_NODES = 16
MIN_ANGULAR_NODES = 16
# radial cutoff in units of 2 / w for the tightest beam
RADIUS_WIDTHS = 8.0


@dataclass(frozen=True)
class QuadratureGrid:
    """Node counts and family of the radial/angular product rule.

    ``family`` is ``"legendre"`` (Gauss-Legendre truncated to
    ``[0, R]``, ``R = radius_widths * 2 / min(w)``) or ``"laguerre"``
    (Gauss-Laguerre in ``t = c rho^2`` with ``c`` the slowest Gaussian
    decay rate of the integrand).
    """

    radial_nodes: int = 96
    angular_nodes: int = 128
    family: str = "legendre"
    radius_widths: float = RADIUS_WIDTHS

    def __post_init__(self):
        if self.radial_nodes < MIN_RADIAL_NODES or self.angular_nodes < MIN_ANGULAR_NODES:
            raise PreconditionError(
                f"grid needs at least {MIN_RADIAL_NODES} radial and {MIN_ANGULAR_NODES} angular nodes")
        if self.family not in ("legendre", "laguerre"):
            raise PreconditionError(f"unknown radial family {self.family!r}")
        if self.family == "legendre" and self.radius_widths < RADIUS_WIDTHS:
            raise PreconditionError(f"radial cutoff must cover at least {RADIUS_WIDTHS:g} widths")

    def refined(self, factor=1.5):
        return QuadratureGrid(int(math.ceil(self.radial_nodes * factor)),
                              int(math.ceil(self.angular_nodes * factor / 2)) * 2,
                              self.family, self.radius_widths)

    def radial_rule(self, geometry):
        """Nodes ``rho`` and weights for ``int_0^inf f(rho) d rho``."""
        w_min = min(geometry.w_p, geometry.w_s, geometry.w_i)
        if self.family == "legendre":
            R = self.radius_widths * 2.0 / w_min
            x, w = np.polynomial.legendre.leggauss(self.radial_nodes)
            return (x + 1) * R / 2, w * R / 2
        rate = _slowest_decay(geometry)
        # d rho = dt / (2 sqrt(c t)); the e^{-t} weight is divided back out
        t, w = roots_genlaguerre(self.radial_nodes, 0.0)
        rho = np.sqrt(t / rate)
        return rho, w * np.exp(t) / (2 * np.sqrt(rate * t))

    def angular_rule(self):
        """Trapezoid nodes on [0, 2 pi) for the periodic relative angle."""
        m = self.angular_nodes
        return np.arange(m) * 2 * np.pi / m, np.full(m, 2 * np.pi / m)


def _slowest_decay(geometry):
    """Smallest eigenvalue of the Gaussian quadratic form in (rho_s, rho_i)."""
    wp2, ws2, wi2 = geometry.w_p ** 2, geometry.w_s ** 2, geometry.w_i ** 2
    form = np.array([[(wp2 + ws2) / 4, wp2 / 4], [wp2 / 4, (wp2 + wi2) / 4]])
    # the cross term's cosine ranges over [-1, 1]; the worst sign is the
    # one that lowers the eigenvalue
    form[0, 1] = form[1, 0] = -wp2 / 4
    return float(np.linalg.eigvalsh(form)[0])


@lru_cache(maxsize=2)
def _kernel(grid, geometry, crystal):
    """Mode-independent arrays on the (rho_s, rho_i, dphi) grid."""
    r, wr = grid.radial_rule(geometry)
    a, wa = grid.angular_rule()
    rs, ri, dp = np.meshgrid(r, r, a, indexing="ij")
    weight = wr[:, None, None] * wr[None, :, None] * wa[None, None, :]
    cos = np.cos(dp)
    rho_p2 = rs * rs + ri * ri + 2 * rs * ri * cos
    gauss = np.exp(-(rho_p2 * geometry.w_p ** 2 + rs * rs * geometry.w_s ** 2
                     + ri * ri * geometry.w_i ** 2) / 4)
    k_p, k_s, k_i = crystal.k_p, crystal.k_s, crystal.k_i
    transverse = (rs * rs * (k_p - k_s) / (2 * k_p * k_s) + ri * ri * (k_p - k_i) / (2 * k_p * k_i)
                  - rs * ri * cos / k_p)
    q = rs + ri * np.exp(1j * dp)
    return dict(rs=rs, ri=ri, dp=dp, weight=weight * gauss, rho_p2=rho_p2, q=q,
                transverse=transverse)


def _radial_polynomial(x, mode, waist, power_offset):
    """sum_u T_u x**(u + power_offset) for x = rho^2."""
    out = np.zeros_like(x, dtype=complex)
    for u in reversed(range(mode[0] + 1)):
        out = out * x + t_coefficient(u, mode, waist)
    return out * x ** power_offset if power_offset else out


def _mode_factor(req, kern):
    """Angular-and-radial part of the integrand for the requested triple."""
    (p, l), (ps, ls), (pi_, li) = req.pump_mode, req.signal_mode, req.idler_mode
    g = req.geometry
    rs, ri = kern["rs"], kern["ri"]
    pump = _radial_polynomial(kern["rho_p2"], (p, l), g.w_p, 0)
    if l >= 0:
        pump = pump * kern["q"] ** l
    else:
        # [rho_p^2]^|l| (rho_s + rho_i e^{i dphi})^l, written without the
        # removable singularity at rho_p = 0
        pump = pump * np.conj(kern["q"]) ** (-l)
    sig = np.conj(_radial_polynomial(rs * rs, (ps, ls), g.w_s, 0)) * rs ** (abs(ls) + 1)
    idl = np.conj(_radial_polynomial(ri * ri, (pi_, li), g.w_i, 0)) * ri ** (abs(li) + 1)
    # remaining idler phase after the absolute angle is integrated out
    return pump * sig * idl * np.exp(-1j * li * kern["dp"]) * kern["weight"]


def _evaluate(req, grid, detunings):
    """Amplitudes of the triple in ``req`` at each ``(omega_s, omega_i)`` pair."""
    kern = _kernel(grid, req.geometry, req.crystal)
    L = req.crystal.length
    factor = _mode_factor(req, kern).ravel()
    transverse = kern["transverse"].ravel()
    out = np.empty(len(detunings), dtype=complex)
    for k, (ws, wi) in enumerate(detunings):
        dk = delta_omega(ws, wi, req.crystal) + transverse
        # fixed-order pairwise summation keeps results bit-reproducible
        total = np.sum(factor * (L * np.sinc(dk * L / (2 * np.pi))))
        out[k] = 2 * np.pi * total * spectral_envelope(ws, wi, req.pulse_duration)
    return out


def brute_force_spectrum(req, detunings, grid=QuadratureGrid(), rtol=1e-7, max_refinements=3):
    """Brute-force amplitudes of one mode triple at several detuning pairs.

    ``req.detunings`` is ignored in favour of ``detunings``. The grid is
    refined (x1.5 nodes) until successive results agree to ``rtol``
    relative to the largest amplitude; the last change is the error
    estimate.

    Returns
    -------
    values, errors : ndarray

    Raises
    ------
    AccuracyError
        Refinement does not stabilize within ``max_refinements`` steps.
    """
    detunings = [tuple(map(float, d)) for d in detunings]
    if not req.conserves_oam:
        return np.zeros(len(detunings), dtype=complex), np.zeros(len(detunings))
    current = _evaluate(req, grid, detunings)
    err = np.full(len(detunings), np.inf)
    for _ in range(max_refinements):
        grid = grid.refined()
        nxt = _evaluate(req, grid, detunings)
        err = np.abs(nxt - current)
        current = nxt
        if np.all(err <= rtol * np.max(np.abs(current))):
            return current, err
    raise AccuracyError(f"brute-force quadrature did not stabilize (last change {np.max(err):.3g})",
                        estimate=float(np.max(err)))


def brute_force_amplitude(req, grid=QuadratureGrid(), rtol=1e-7, full_output=False, max_refinements=3):
    """Coincidence amplitude of ``req`` by direct quadrature.

    Returns the amplitude, or ``(amplitude, error_estimate)`` with
    ``full_output``. Zero without integrating when OAM is not conserved.

    Raises
    ------
    AccuracyError
        Grid refinement does not stabilize to ``rtol``.
    """
    values, errors = brute_force_spectrum(req, [req.detunings], grid, rtol, max_refinements)
    value, err = complex(values[0]), float(errors[0])
    return (value, err) if full_output else value


def evaluate_on_grid(req, grid):
    """Single evaluation on ``grid`` without refinement."""
    if not req.conserves_oam:
        return 0j
    return complex(_evaluate(req, grid, [req.detunings])[0])
