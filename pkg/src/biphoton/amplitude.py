"""Closed-form coincidence amplitudes of the SPDC biphoton state in the LG basis.

For a pump ``LG_p^l`` (l >= 0) and detection modes ``LG_ps^ls``,
``LG_pi^li`` the amplitude reduces to a finite sum over seven indices of

    Gamma(h) Gamma(b) * int dz exp(i z Delta_Omega) D^d / (H^h B^b)
                                * 2F1~(h, b; 1 + d; D^2 / (H B))

with z-dependent Gaussian coefficients H, B, D. Negative pump OAM follows
from ``C(l, ls, li) = conj(C(-l, -ls, -li))``.

Transverse lengths are measured in units of the pump waist internally so the
high powers of H, B and the waists stay inside double range.
"""
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import NamedTuple, Optional, Tuple

import numpy as np
from scipy.special import spherical_jn

from .dispersion import BeamGeometry, CrystalSpec, delta_omega
from .errors import AccuracyError, DomainError, PreconditionError, TruncationError
from .lgmodes import ModeIndex, t_coefficient
from .specialfn import hyp2f1_regularized, ln_gamma

PANEL_ORDER = 16
QUADRATURE_BUDGET = 1e-8
# error estimates below this fraction of the summed term magnitudes are roundoff
ROUNDOFF_FLOOR = 1e-13


class Truncation(NamedTuple):
    p_max: int = 10
    l_max: int = 10

    def check(self, *modes):
        for m in modes:
            if m.p < 0 or m.p > self.p_max or abs(m.l) > self.l_max:
                raise TruncationError(f"mode {tuple(m)} outside truncation p<={self.p_max}, |l|<={self.l_max}")


@dataclass(frozen=True)
class PumpSpec:
    """Pump as a superposition of LG modes with a CW or Gaussian-pulse spectrum.

    ``components`` is a tuple of ``(ModeIndex, coefficient)`` pairs whose
    squared magnitudes sum to one. ``pulse_duration`` is None for a CW pump.
    """

    components: Tuple[Tuple[ModeIndex, complex], ...]
    pulse_duration: Optional[float] = None
    wavelength: Optional[float] = None

    def __post_init__(self):
        comps = tuple((ModeIndex(*m).validate(), complex(a)) for m, a in self.components)
        object.__setattr__(self, "components", comps)
        if not comps:
            raise PreconditionError("pump needs at least one component")
        norm = sum(abs(a) ** 2 for _, a in comps)
        if abs(norm - 1.0) > 1e-12:
            raise PreconditionError(f"pump coefficients must satisfy sum |a|^2 = 1 (got {norm:.15g})")
        if self.pulse_duration is not None and not self.pulse_duration > 0:
            raise PreconditionError("pulse duration must be positive")

    @classmethod
    def normalized(cls, components, **kwargs):
        comps = [(ModeIndex(*m), complex(a)) for m, a in components]
        norm = math.sqrt(sum(abs(a) ** 2 for _, a in comps))
        if norm == 0:
            raise PreconditionError("pump coefficients are all zero")
        return cls(tuple((m, a / norm) for m, a in comps if a != 0), **kwargs)

    @property
    def is_cw(self):
        return self.pulse_duration is None

    @property
    def oam_values(self):
        return sorted({m.l for m, _ in self.components})


@dataclass(frozen=True)
class AmplitudeRequest:
    pump_mode: ModeIndex
    signal_mode: ModeIndex
    idler_mode: ModeIndex
    detunings: Tuple[float, float]
    geometry: BeamGeometry
    crystal: CrystalSpec
    pulse_duration: Optional[float] = None

    def __post_init__(self):
        for name in ("pump_mode", "signal_mode", "idler_mode"):
            object.__setattr__(self, name, ModeIndex(*getattr(self, name)).validate())
        ws, wi = (float(x) for x in self.detunings)
        object.__setattr__(self, "detunings", (ws, wi))
        if self.pulse_duration is None and ws != -wi:
            raise PreconditionError("a CW pump fixes omega_i = -omega_s")

    @property
    def conserves_oam(self):
        return self.pump_mode.l == self.signal_mode.l + self.idler_mode.l

    def mirrored(self):
        """Request with every OAM number negated."""
        def neg(m):
            return ModeIndex(m.p, -m.l)
        return AmplitudeRequest(neg(self.pump_mode), neg(self.signal_mode), neg(self.idler_mode),
                                self.detunings, self.geometry, self.crystal, self.pulse_duration)


@dataclass(frozen=True)
class ZIntegrandCoefficients:
    """Gaussian coefficients H, D, B (m^2) at one z and the exponents d, h, b."""

    H: complex
    D: complex
    B: complex
    d: int = 0
    h: float = 0.0
    b: float = 0.0


def gaussian_coefficients(z, geometry, crystal, scale=1.0):
    """H, D, B at position(s) ``z``, divided by ``scale**2``."""
    z = np.asarray(z, dtype=float)
    k_p, k_s, k_i = crystal.k_p, crystal.k_s, crystal.k_i
    w_p, w_s, w_i = geometry.w_p, geometry.w_s, geometry.w_i
    s2 = scale * scale
    H = (w_p ** 2 / 4 + w_s ** 2 / 4 - 1j * z * (k_p - k_s) / (2 * k_p * k_s)) / s2
    B = (w_p ** 2 / 4 + w_i ** 2 / 4 - 1j * z * (k_p - k_i) / (2 * k_p * k_i)) / s2
    D = (-w_p ** 2 / 4 - 1j * z / (2 * k_p)) / s2
    return H, D, B


def exponents(pump_l, signal_mode, idler_mode, u, s, i, n, m, f, v):
    """Exponents (d, h, b) of one summand; ``pump_l`` must be non-negative."""
    ls, li = signal_mode.l, idler_mode.l
    d = li + m - n - 2 * v
    h = (2 + 2 * s + pump_l + li + 2 * (u - f) - 2 * n - 2 * v + abs(ls)) / 2
    b = (2 + 2 * f + 2 * i + li + 2 * m - 2 * v + abs(li)) / 2
    return d, h, b


def _summation_indices(p, ps, pi_, l):
    for u in range(p + 1):
        for s in range(ps + 1):
            for i in range(pi_ + 1):
                for n in range(l + 1):
                    for m in range(u + 1):
                        for f in range(u - m + 1):
                            for v in range(m + 1):
                                yield u, s, i, n, m, f, v


@lru_cache(maxsize=65536)
def _term_table(pump_mode, signal_mode, idler_mode, w_p, w_s, w_i):
    """Summands grouped by exponent triple for a pump with l >= 0.

    Waists are in units of the reference length. Returns
    ``(coef, d, h, b)`` arrays; ``coef`` includes the pi^2 angular/radial
    prefactor and the binomial and T factors.
    """
    p, l = pump_mode
    ps, ls = signal_mode
    pi_, li = idler_mode
    groups = {}
    T_p = [t_coefficient(u, pump_mode, w_p) for u in range(p + 1)]
    T_s = [np.conj(t_coefficient(s, signal_mode, w_s)) for s in range(ps + 1)]
    T_i = [np.conj(t_coefficient(i, idler_mode, w_i)) for i in range(pi_ + 1)]
    for u, s, i, n, m, f, v in _summation_indices(p, ps, pi_, l):
        d, h, b = exponents(l, signal_mode, idler_mode, u, s, i, n, m, f, v)
        c = (math.comb(l, n) * math.comb(u, m) * math.comb(u - m, f) * math.comb(m, v)
             * T_p[u] * T_s[s] * T_i[i])
        key = (d, int(round(2 * h)), int(round(2 * b)))
        groups[key] = groups.get(key, 0.0) + c
    keys = sorted(groups)
    coef = np.array([groups[k] for k in keys], dtype=complex) * math.pi ** 2
    d = np.array([k[0] for k in keys], dtype=int)
    h = np.array([k[1] / 2 for k in keys])
    b = np.array([k[2] / 2 for k in keys])
    return coef, d, h, b


def _basis(d, h, b, H, D, B):
    """Gamma(h) Gamma(b) D^d H^-h B^-b 2F1~(h, b; 1+d; D^2/(HB)).

    ``d, h, b`` have shape (K,), ``H, D, B`` shape (Z,); result (K, Z).
    """
    x = D * D / (H * B)
    if np.any(np.abs(x) >= 1.0):
        raise AccuracyError("hypergeometric argument D^2/(HB) left the unit disk",
                            estimate=float(np.max(np.abs(x))))
    if np.any(H.real <= 0) or np.any(B.real <= 0):
        raise AccuracyError("Gaussian coefficients lost positive real part")
    dd, hh, bb = d[:, None], h[:, None], b[:, None]
    lng = (ln_gamma(h) + ln_gamma(b)).real[:, None]
    logs = lng - hh * np.log(H)[None, :] - bb * np.log(B)[None, :]
    hyp = hyp2f1_regularized(hh, bb, 1.0 + dd, x[None, :])
    # D^d with integer d is branch free
    return np.exp(logs) * D[None, :] ** dd * hyp


def _oriented(req):
    """(pump, signal, idler) with pump l >= 0 and whether to conjugate."""
    if req.pump_mode.l >= 0:
        return req.pump_mode, req.signal_mode, req.idler_mode, False
    m = req.mirrored()
    return m.pump_mode, m.signal_mode, m.idler_mode, True


def z_profile(pump, signal, idler, z, geometry, crystal, with_magnitude=False):
    """Closed-form z-integrand without the e^{i z Delta_Omega} phase.

    Returned in units where transverse lengths are measured in pump waists;
    the physical amplitude is the z-integral divided by ``geometry.w_p``.
    ``pump.l`` must be non-negative.
    """
    z = np.atleast_1d(np.asarray(z, dtype=float))
    coef, d, h, b = _term_table(pump, signal, idler, 1.0,
                                geometry.w_s / geometry.w_p, geometry.w_i / geometry.w_p)
    H, D, B = gaussian_coefficients(z, geometry, crystal, scale=geometry.w_p)
    terms = coef[:, None] * _basis(d, h, b, H, D, B)
    total = terms.sum(axis=0)
    if with_magnitude:
        return total, np.abs(terms).sum(axis=0)
    return total


def z_integrand(z, req, indices):
    """One summand of the closed form at crystal position ``z`` (SI units).

    Returns ``exp(i z Delta_Omega) D^d / (H^h B^b) 2F1~(h, b; 1+d; D^2/(HB))``
    for the summation indices ``(u, s, i, n, m, f, v)``; the Gamma and
    coefficient prefactors are not included.
    """
    u, s, i, n, m, f, v = indices
    p, l = req.pump_mode
    if l < 0:
        raise DomainError("z_integrand is defined for non-negative pump OAM; use the conjugation rule")
    if not (0 <= u <= p and 0 <= s <= req.signal_mode.p and 0 <= i <= req.idler_mode.p
            and 0 <= n <= l and 0 <= m <= u and 0 <= f <= u - m and 0 <= v <= m):
        raise DomainError(f"summation indices {indices} outside their ranges")
    d, h, b = exponents(l, req.signal_mode, req.idler_mode, u, s, i, n, m, f, v)
    H, D, B = gaussian_coefficients(z, req.geometry, req.crystal)
    x = D * D / (H * B)
    if np.any(np.abs(x) >= 1):
        raise AccuracyError("hypergeometric argument D^2/(HB) left the unit disk")
    phase = np.exp(1j * np.asarray(z) * delta_omega(*req.detunings, req.crystal))
    return phase * D ** d / (H ** h * B ** b) * hyp2f1_regularized(h, b, 1 + d, x)


def spectral_envelope(omega_s, omega_i, pulse_duration):
    """Pump spectral amplitude; unity for a CW pump."""
    if pulse_duration is None:
        return 1.0
    t0 = pulse_duration
    return t0 / math.sqrt(math.pi) * np.exp(-(t0 ** 2) * (np.asarray(omega_s) + omega_i) ** 2 / 4)


def panel_count(delta, length):
    """Gauss-Legendre panels needed to resolve exp(i z delta) over the crystal."""
    return max(8, int(math.ceil(abs(delta) * length / math.pi)) * 4)


def _panel_rule(n_panels, length, order=PANEL_ORDER):
    x, w = np.polynomial.legendre.leggauss(order)
    edges = np.linspace(-length / 2, length / 2, n_panels + 1)
    half = np.diff(edges) / 2
    mid = (edges[:-1] + edges[1:]) / 2
    z = (mid[:, None] + half[:, None] * x[None, :]).ravel()
    wz = (half[:, None] * w[None, :]).ravel()
    return z, wz


def _panel_integral(pump, signal, idler, geometry, crystal, delta, n_panels):
    z, wz = _panel_rule(n_panels, crystal.length)
    prof, mag = z_profile(pump, signal, idler, z, geometry, crystal, with_magnitude=True)
    return np.sum(wz * np.exp(1j * z * delta) * prof), np.sum(wz * mag)


def coincidence_amplitude(req, truncation=Truncation(), budget=QUADRATURE_BUDGET, full_output=False):
    """Coincidence amplitude C for one pump/signal/idler mode triple.

    Zero (without any computation) unless ``l == ls + li``. The z-integral
    uses Gauss-Legendre panels sized to the oscillation of
    ``exp(i z Delta_Omega)``; the error estimate comes from doubling the
    panel count. The reported error adds the roundoff of the closed-form
    term sum, which cancels strongly for high radial orders.

    Returns the amplitude, or ``(amplitude, error_estimate)`` when
    ``full_output`` is true.

    Raises
    ------
    TruncationError
        A mode lies outside ``truncation``.
    AccuracyError
        The doubling estimate exceeds ``budget`` relative to the amplitude.
    """
    truncation.check(req.pump_mode, req.signal_mode, req.idler_mode)
    if not req.conserves_oam:
        return (0j, 0.0) if full_output else 0j
    pump, signal, idler, conjugate = _oriented(req)
    ws, wi = req.detunings
    delta = delta_omega(ws, wi, req.crystal)
    n = panel_count(delta, req.crystal.length)
    coarse, _ = _panel_integral(pump, signal, idler, req.geometry, req.crystal, delta, n)
    fine, scale = _panel_integral(pump, signal, idler, req.geometry, req.crystal, delta, 2 * n)
    err = abs(fine - coarse)
    if err > budget * abs(fine) + ROUNDOFF_FLOOR * scale:
        raise AccuracyError(f"z-quadrature error {err:.3g} exceeds budget for {req}", estimate=err)
    # the closed-form term sum cancels; its roundoff is eps times the summed magnitudes
    err = err + np.finfo(float).eps * scale
    env = spectral_envelope(ws, wi, req.pulse_duration)
    value = complex(fine * env / req.geometry.w_p)
    err = float(err * abs(env) / req.geometry.w_p)
    if conjugate:
        value = value.conjugate()
    return (value, err) if full_output else value


def amplitude_for_pump(pump, signal_mode, idler_mode, detunings, geometry, crystal,
                       truncation=Truncation(), engine=None):
    """Amplitude of a superposition pump: sum_n a_n C_n."""
    total = 0j
    for mode, a in pump.components:
        req = AmplitudeRequest(mode, signal_mode, idler_mode, detunings, geometry, crystal,
                               pump.pulse_duration)
        if not req.conserves_oam:
            continue
        if engine is None:
            total += a * coincidence_amplitude(req, truncation)
        else:
            truncation.check(mode, req.signal_mode, req.idler_mode)
            total += a * engine.amplitudes(mode, signal_mode, idler_mode, [detunings[0]],
                                           [detunings[1]], pump.pulse_duration)[0]
    return total


def check_gouy_geometry(geometry, crystal, rtol=1e-6):
    """Raise PreconditionError unless z_Rp = z_Rs = z_Ri and k_p = 2 k_s = 2 k_i."""
    zp, zs, zi = geometry.rayleigh_lengths(crystal)
    if abs(zs - zp) > rtol * zp or abs(zi - zp) > rtol * zp:
        raise PreconditionError(f"Rayleigh lengths differ: {zp:.6g}, {zs:.6g}, {zi:.6g} m")
    if abs(crystal.k_p - 2 * crystal.k_s) > rtol * crystal.k_p or \
            abs(crystal.k_p - 2 * crystal.k_i) > rtol * crystal.k_p:
        raise PreconditionError("Gouy reduction needs k_p = 2 k_s = 2 k_i")


def gouy_reduced_amplitude(n_r, detunings, geometry, crystal, budget=QUADRATURE_BUDGET):
    """Reduced z-integral fixed by the relative mode number alone.

    With equal Rayleigh lengths and k_p = 2 k_s every triple with relative
    mode number ``n_r`` has, up to a constant factor, the amplitude::

        int dz exp(i z Delta_Omega) (i 2z + k_p w_p^2)^M / (-i 2z + k_p w_p^2)^(M+1)

    with ``M = -n_r / 2``. Triples with ``n_r > 0`` vanish identically in
    this geometry; the integral is still returned for them.
    """
    check_gouy_geometry(geometry, crystal)
    if n_r % 2:
        raise DomainError("relative mode number of an OAM-conserving triple is even")
    order = -n_r // 2
    a = crystal.k_p * geometry.w_p ** 2
    delta = delta_omega(*detunings, crystal)

    def integral(n_panels):
        z, wz = _panel_rule(n_panels, crystal.length)
        f = (2j * z + a) ** order / (-2j * z + a) ** (order + 1)
        return np.sum(wz * np.exp(1j * z * delta) * f), np.sum(wz * np.abs(f))

    n = panel_count(delta, crystal.length)
    coarse, _ = integral(n)
    fine, scale = integral(2 * n)
    if abs(fine - coarse) > budget * abs(fine) + ROUNDOFF_FLOOR * scale:
        raise AccuracyError("reduced Gouy integral did not converge", estimate=abs(fine - coarse))
    return complex(fine)


def oscillatory_weights(nodes, length, deltas):
    """Quadrature weights for int_{-L/2}^{L/2} exp(i z delta) f(z) dz.

    ``f`` is sampled at ``nodes`` Gauss-Legendre points; the rule is exact
    for polynomial ``f`` of degree below ``nodes`` at any ``delta`` since the
    Legendre moments of the exponential are ``2 i^n j_n(delta L / 2)``.
    Returns ``(z, W)`` with ``W`` of shape (nodes, len(deltas)).
    """
    t, w = np.polynomial.legendre.leggauss(nodes)
    a = np.asarray(deltas, dtype=float) * length / 2
    orders = np.arange(nodes)
    legendre = np.polynomial.legendre.legvander(t, nodes - 1)          # (nodes, n)
    moments = (1j ** (orders % 4))[:, None] * spherical_jn(orders[:, None], np.abs(a)[None, :])
    # j_n(-x) = (-1)^n j_n(x)
    moments = np.where((a[None, :] < 0) & (orders[:, None] % 2 == 1), -moments, moments)
    W = length * w[:, None] * (legendre * (orders + 0.5)[None, :]) @ moments
    return t * length / 2, W


class _Level:
    """Closed-form basis values at one Gauss-Legendre node count."""

    def __init__(self, nodes, geometry, crystal):
        self.nodes = nodes
        t, w = np.polynomial.legendre.leggauss(nodes)
        self.z = t * crystal.length / 2
        self.H, self.D, self.B = gaussian_coefficients(self.z, geometry, crystal, scale=geometry.w_p)
        # maps samples to Legendre coefficients
        V = np.polynomial.legendre.legvander(t, nodes - 1)
        self.analysis = (V * w[:, None]).T * (np.arange(nodes) + 0.5)[:, None]
        self.basis = {}
        self.weights = {}

    def basis_rows(self, d, h, b):
        keys = list(zip(d.tolist(), np.rint(2 * h).astype(int).tolist(), np.rint(2 * b).astype(int).tolist()))
        missing = [k for k in dict.fromkeys(keys) if k not in self.basis]
        if missing:
            md = np.array([k[0] for k in missing])
            mh = np.array([k[1] / 2 for k in missing])
            mb = np.array([k[2] / 2 for k in missing])
            for k, row in zip(missing, _basis(md, mh, mb, self.H, self.D, self.B)):
                self.basis[k] = row
        return np.array([self.basis[k] for k in keys])

    def tail(self, profile, magnitude):
        """Top Legendre coefficients relative to the largest one.

        Coefficients at the roundoff level of the summed term magnitudes
        count as zero, so cancelling (or vanishing) profiles are accepted.
        """
        c = np.abs(self.analysis @ profile)
        floor = ROUNDOFF_FLOOR * float(np.max(magnitude))
        top = max(float(np.max(c[-4:])) - floor, 0.0)
        ref = float(np.max(c))
        return top / ref if ref > 0 else 0.0


@dataclass
class SpectralEngine:
    """Batch evaluator of amplitude spectra for a fixed geometry and crystal.

    The closed-form z-profile of a mode triple is sampled at Gauss-Legendre
    nodes; the node count starts at ``nodes`` and doubles (up to
    ``max_nodes``) until the top Legendre coefficients of the profile fall
    below ``tail_budget`` of the largest. The oscillatory z-integral for any
    set of detunings is then a matrix product with
    :func:`oscillatory_weights`. Basis values and weights are cached.
    """

    geometry: BeamGeometry
    crystal: CrystalSpec
    nodes: int = 48
    max_nodes: int = 768
    tail_budget: float = 1e-10
    _levels: dict = field(default_factory=dict, repr=False)
    _profiles: dict = field(default_factory=dict, repr=False)

    def _level(self, n):
        if n not in self._levels:
            self._levels[n] = _Level(n, self.geometry, self.crystal)
        return self._levels[n]

    @staticmethod
    def _oriented(pump_mode, signal_mode, idler_mode):
        pump, signal, idler = (ModeIndex(*m) for m in (pump_mode, signal_mode, idler_mode))
        if pump.l < 0:
            return tuple(ModeIndex(m.p, -m.l) for m in (pump, signal, idler)), True
        return (pump, signal, idler), False

    def profile(self, pump, signal, idler):
        """``(node_count, tail, values)`` of the scaled z-profile for ``pump.l >= 0``.

        Raises
        ------
        AccuracyError
            The profile is not resolved at ``max_nodes``.
        """
        key = (ModeIndex(*pump), ModeIndex(*signal), ModeIndex(*idler))
        if key not in self._profiles:
            g = self.geometry
            coef, d, h, b = _term_table(*key, 1.0, g.w_s / g.w_p, g.w_i / g.w_p)
            n = self.nodes
            while True:
                lev = self._level(n)
                rows = lev.basis_rows(d, h, b)
                values = coef @ rows
                tail = lev.tail(values, np.abs(coef) @ np.abs(rows))
                if tail <= self.tail_budget:
                    break
                if 2 * n > self.max_nodes:
                    raise AccuracyError(f"z-profile of {key} unresolved with {n} nodes (tail {tail:.2e})",
                                        estimate=tail)
                n *= 2
            self._profiles[key] = (n, tail, values)
        return self._profiles[key]

    def weights(self, omega_s, omega_i, nodes=None):
        """Oscillatory weights (nodes x len(omega)) at the given node count."""
        n = self.nodes if nodes is None else nodes
        ws = np.atleast_1d(np.asarray(omega_s, float))
        wi = np.atleast_1d(np.asarray(omega_i, float))
        lev = self._level(n)
        key = (ws.tobytes(), wi.tobytes())
        if key not in lev.weights:
            if len(lev.weights) > 16:
                lev.weights.clear()
            deltas = np.atleast_1d(delta_omega(ws, wi, self.crystal))
            lev.weights[key] = oscillatory_weights(n, self.crystal.length, deltas)[1]
        return lev.weights[key]

    def amplitudes(self, pump_mode, signal_mode, idler_mode, omega_s, omega_i, pulse_duration=None):
        """Amplitudes of one mode triple at each detuning pair ``(omega_s[k], omega_i[k])``."""
        omega_s = np.atleast_1d(np.asarray(omega_s, dtype=float))
        omega_i = np.atleast_1d(np.asarray(omega_i, dtype=float))
        (pump, signal, idler), conjugate = self._oriented(pump_mode, signal_mode, idler_mode)
        if pump.l != signal.l + idler.l:
            return np.zeros(omega_s.shape, dtype=complex)
        n, _, values = self.profile(pump, signal, idler)
        out = values @ self.weights(omega_s, omega_i, n) / self.geometry.w_p
        if conjugate:
            out = out.conj()
        return out * spectral_envelope(omega_s, omega_i, pulse_duration)

    def tail_estimate(self, pump_mode, signal_mode, idler_mode):
        """Relative size of the highest Legendre coefficients of the accepted profile."""
        (pump, signal, idler), _ = self._oriented(pump_mode, signal_mode, idler_mode)
        return self.profile(pump, signal, idler)[1]
