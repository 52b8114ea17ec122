"""Pump-superposition design for target OAM coincidence matrices and Gouy diagnostics."""
import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence

import numpy as np

from .amplitude import (PumpSpec, SpectralEngine, _panel_rule, check_gouy_geometry,
                        gouy_reduced_amplitude, z_profile)
from .errors import InfeasibleTargetError, PreconditionError
from .lgmodes import ModeIndex

INFEASIBLE_THRESHOLD = 0.05
GOUY_TOLERANCE = 1e-6
GOUY_DISTINCT = 1e-3
# amplitudes below this fraction of the summed closed-form term magnitudes
# are cancellation roundoff, i.e. identically zero
VANISHING_FRACTION = 1e-10


@dataclass(frozen=True)
class TargetMatrix:
    """Target coincidence matrix ``entries[a, b]`` for ``l_s = oam[a]``, ``l_i = oam[b]``.

    ``oam`` is a contiguous run of OAM numbers shared by signal and idler.
    """

    oam: tuple
    entries: np.ndarray

    def __post_init__(self):
        oam = tuple(int(x) for x in self.oam)
        E = np.asarray(self.entries, dtype=complex)
        if E.shape != (len(oam), len(oam)):
            raise PreconditionError("target matrix must be square over the OAM list")
        if len(oam) == 0 or any(b - a != 1 for a, b in zip(oam, oam[1:])):
            raise PreconditionError("target OAM values must be contiguous and increasing")
        if not np.any(E != 0):
            raise PreconditionError("target matrix is zero")
        object.__setattr__(self, "oam", oam)
        object.__setattr__(self, "entries", E)

    @classmethod
    def from_offset(cls, start, entries):
        entries = np.asarray(entries)
        return cls(tuple(range(start, start + entries.shape[0])), entries)

    @property
    def dimension(self):
        return len(self.oam)

    @property
    def antidiagonals(self):
        """Sorted pump OAM values ``l_s + l_i`` covered by the subspace."""
        return sorted({a + b for a in self.oam for b in self.oam})

    def cells(self, l):
        """Index pairs ``(a, b)`` on the anti-diagonal ``oam[a] + oam[b] = l``."""
        return [(a, b) for a, la in enumerate(self.oam) for b, lb in enumerate(self.oam) if la + lb == l]


@dataclass
class SolverReport:
    """Outcome of :func:`solve_pump_coefficients`.

    ``fit_residual`` is ``||t - a C||`` over the nonzero target entries
    relative to ``||t||``; ``leakage`` is the realized weight on target-zero
    entries of the subspace relative to the realized subspace weight;
    ``asymmetry`` is the largest ``|C_ab - C_ba| / |C_ab|`` on the target's
    support.
    """

    coefficients: Dict[int, complex]
    fit_residual: float
    residuals: Dict[int, float]
    leakage: float
    asymmetry: float
    threshold: float
    realized: np.ndarray = field(repr=False)
    amplitudes: Dict[tuple, complex] = field(default_factory=dict, repr=False)

    @property
    def feasible(self):
        return self.fit_residual <= self.threshold


def _central_amplitudes(target, geometry, crystal, engine, pump_modes, p_s, p_i):
    out = {}
    for mode in pump_modes:
        for a, ls in enumerate(target.oam):
            for b, li in enumerate(target.oam):
                if ls + li == mode.l:
                    out[(mode, a, b)] = complex(engine.amplitudes(mode, (p_s, ls), (p_i, li), [0.0], [0.0])[0])
    return out


def realized_matrix(pump, oam, geometry, crystal, p_s=0, p_i=0, engine=None):
    """Zero-detuning coincidence matrix ``sum_n a_n C_n`` over the OAM list."""
    engine = engine or SpectralEngine(geometry, crystal)
    oam = list(oam)
    M = np.zeros((len(oam), len(oam)), complex)
    for a, ls in enumerate(oam):
        for b, li in enumerate(oam):
            for mode, coef in pump.components:
                if mode.l == ls + li:
                    M[a, b] += coef * engine.amplitudes(mode, (p_s, ls), (p_i, li), [0.0], [0.0])[0]
    return M


def solve_pump_coefficients(target, geometry, crystal, p_s=0, p_i=0, threshold=INFEASIBLE_THRESHOLD,
                            pump_modes=None, engine=None, wavelength=None):
    """Pump LG coefficients that realize ``target`` at zero detuning.

    With ``p = 0`` pump components every anti-diagonal ``l_s + l_i = l`` is
    fed by one coefficient ``a_l``, fitted by least squares to the nonzero
    target entries of that anti-diagonal. Anti-diagonals without nonzero
    target entries get ``a_l = 0``. When ``pump_modes`` contains ``p > 0``
    modes a joint linear least-squares fit over all subspace entries
    (zeros included) is used instead.

    Returns
    -------
    pump : PumpSpec
    report : SolverReport

    Raises
    ------
    InfeasibleTargetError
        If the relative fit residual exceeds ``threshold``.
    """
    engine = engine or SpectralEngine(geometry, crystal)
    if pump_modes is None:
        pump_modes = [ModeIndex(0, l) for l in target.antidiagonals]
    pump_modes = [ModeIndex(*m) for m in pump_modes]
    amps = _central_amplitudes(target, geometry, crystal, engine, pump_modes, p_s, p_i)
    t = target.entries
    tnorm = float(np.linalg.norm(t))
    coeffs, residuals = {}, {}

    if all(m.p == 0 for m in pump_modes) and len({m.l for m in pump_modes}) == len(pump_modes):
        for mode in pump_modes:
            cells = [(a, b) for a, b in target.cells(mode.l) if t[a, b] != 0]
            if not cells:
                coeffs[mode] = 0j
                residuals[mode.l] = 0.0
                continue
            c = np.array([amps[(mode, a, b)] for a, b in cells])
            tv = np.array([t[a, b] for a, b in cells])
            a_l = complex(np.vdot(c, tv) / np.vdot(c, c).real)
            coeffs[mode] = a_l
            residuals[mode.l] = float(np.linalg.norm(tv - a_l * c))
        fit = math.sqrt(sum(r * r for r in residuals.values())) / tnorm
    else:
        n = target.dimension
        cols = []
        for mode in pump_modes:
            col = np.zeros((n, n), complex)
            for a, b in target.cells(mode.l):
                col[a, b] = amps[(mode, a, b)]
            cols.append(col.ravel())
        A = np.array(cols).T
        sol, *_ = np.linalg.lstsq(A, t.ravel(), rcond=None)
        coeffs = {m: complex(x) for m, x in zip(pump_modes, sol)}
        fit = float(np.linalg.norm(A @ sol - t.ravel())) / tnorm
        residuals = {m.l: float("nan") for m in pump_modes}

    scale = math.sqrt(sum(abs(a) ** 2 for a in coeffs.values()))
    if scale == 0:
        raise InfeasibleTargetError("no pump component reaches the target entries")
    realized = np.zeros_like(t)
    for (mode, a, b), c in amps.items():
        realized[a, b] += coeffs[mode] * c
    off = t == 0
    total = float(np.sum(np.abs(realized) ** 2))
    leakage = float(np.sum(np.abs(realized[off]) ** 2) / total) if total > 0 else 0.0
    asym = 0.0
    for a, b in zip(*np.nonzero(t)):
        for mode in pump_modes:
            if (mode, a, b) in amps and (mode, b, a) in amps and abs(amps[(mode, a, b)]) > 0:
                asym = max(asym, abs(amps[(mode, a, b)] - amps[(mode, b, a)]) / abs(amps[(mode, a, b)]))
    normalized = {m.l if m.p == 0 else (m.p, m.l): a / scale for m, a in coeffs.items()}
    report = SolverReport(normalized, fit, residuals, leakage, asym, threshold, realized / scale,
                          {(m.p, m.l, a, b): c for (m, a, b), c in amps.items()})
    if fit > threshold:
        raise InfeasibleTargetError(
            f"target not reachable with the given pump modes: relative residual {fit:.3g} > {threshold:g}",
            report=report)
    pump = PumpSpec.normalized([(m, a) for m, a in coeffs.items() if a != 0], wavelength=wavelength)
    return pump, report


def relative_mode_number(pump_mode, signal_mode, idler_mode):
    """``N_p - N_s - N_i`` with ``N = 2p + |l|``."""
    return ModeIndex(*pump_mode).order - ModeIndex(*signal_mode).order - ModeIndex(*idler_mode).order


@dataclass
class GouyReport:
    """Peak-normalized spectra grouped by relative mode number.

    ``within[n]``: largest pairwise deviation inside class ``n``;
    ``reduced[n]``: largest deviation from the reduced one-dimensional
    integral; ``between``: smallest over class pairs of the largest
    deviation between class representatives; ``vanishing``: classes whose
    amplitudes are identically zero in this geometry (excluded from the
    comparisons).
    """

    omega: np.ndarray
    curves: Dict[tuple, np.ndarray]
    classes: Dict[int, List[tuple]]
    within: Dict[int, float]
    reduced: Dict[int, float]
    between: float
    vanishing: List[int]
    tolerance: float = GOUY_TOLERANCE
    distinct: float = GOUY_DISTINCT

    @property
    def passed(self):
        ok = all(v <= self.tolerance for v in self.within.values())
        ok = ok and all(v <= self.tolerance for v in self.reduced.values())
        live = [n for n in self.classes if n not in self.vanishing]
        if len(live) > 1:
            ok = ok and self.between > self.distinct
        return ok


def _normalized(curve):
    peak = np.max(curve)
    return curve / peak if peak > 0 else curve


def _term_scale(triple, geometry, crystal):
    """Integral of the summed closed-form term magnitudes along the crystal."""
    pump, s, i = triple
    if pump.l < 0:
        pump, s, i = (ModeIndex(m.p, -m.l) for m in triple)
    z, wz = _panel_rule(8, crystal.length)
    _, mag = z_profile(pump, s, i, z, geometry, crystal, with_magnitude=True)
    return float(np.sum(wz * mag)) / geometry.w_p


def verify_gouy_spectral_invariance(mode_triplets, geometry, crystal, omega_grid,
                                    tolerance=GOUY_TOLERANCE, distinct=GOUY_DISTINCT, engine=None):
    """Check that the spectral shape depends on the triple only through N_R.

    Requires equal Rayleigh lengths and ``k_p = 2 k_s = 2 k_i``.

    Raises
    ------
    PreconditionError
        Geometry does not satisfy the assumptions, or a triple breaks OAM
        conservation.
    """
    check_gouy_geometry(geometry, crystal)
    engine = engine or SpectralEngine(geometry, crystal)
    omega = np.asarray(omega_grid.nodes if hasattr(omega_grid, "nodes") else omega_grid, dtype=float)
    curves, classes, vanishing = {}, {}, set()
    for triple in mode_triplets:
        triple = tuple(ModeIndex(*m) for m in triple)
        pump, s, i = triple
        if pump.l != s.l + i.l:
            raise PreconditionError(f"triple {triple} does not conserve OAM")
        n_r = relative_mode_number(*triple)
        amp = engine.amplitudes(pump, s, i, omega, -omega)
        if np.max(np.abs(amp)) <= VANISHING_FRACTION * _term_scale(triple, geometry, crystal):
            vanishing.add(n_r)
        curves[triple] = _normalized(np.abs(amp) ** 2)
        classes.setdefault(n_r, []).append(triple)

    within, reduced = {}, {}
    for n_r, members in classes.items():
        if n_r in vanishing:
            continue
        ref = curves[members[0]]
        within[n_r] = max((float(np.max(np.abs(curves[m] - ref))) for m in members[1:]), default=0.0)
        red = np.array([gouy_reduced_amplitude(n_r, (w, -w), geometry, crystal) for w in omega])
        reduced[n_r] = max(float(np.max(np.abs(curves[m] - _normalized(np.abs(red) ** 2))))
                           for m in members)
    live = [n for n in classes if n not in vanishing]
    between = math.inf
    for x in range(len(live)):
        for y in range(x + 1, len(live)):
            d = float(np.max(np.abs(curves[classes[live[x]][0]] - curves[classes[live[y]][0]])))
            between = min(between, d)
    return GouyReport(omega, curves, classes, within, reduced, between, sorted(vanishing),
                      tolerance, distinct)


def gouy_geometry(crystal_length, pump_wavelength, pump_waist, index=1.0, ug=(1.4e8, 1.6e8, 1.5e8),
                  gvd=(0.0, 0.0, 0.0)):
    """Crystal and beams with ``k_p = 2 k_s = 2 k_i`` and equal Rayleigh lengths.

    Returns ``(geometry, crystal)``; the signal and idler waists are
    ``sqrt(2) w_p``.
    """
    from .dispersion import BeamGeometry, CrystalSpec
    k_p = 2 * math.pi * index / pump_wavelength
    crystal = CrystalSpec(crystal_length, k_p, k_p / 2, k_p / 2, *ug, *gvd)
    w = math.sqrt(2) * pump_waist
    return BeamGeometry(pump_waist, w, w), crystal
