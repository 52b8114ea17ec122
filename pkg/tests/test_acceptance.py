"""Acceptance criteria, one recorded PASS/FAIL line each.

Run ``pytest tests/test_acceptance.py -v -s`` to see the verdict lines as
they are produced; they are also collected in an "acceptance criteria"
section of the terminal summary. Criterion 5 carries the ``extended``
marker (deselect with ``-m "not extended"``).
"""
import itertools
import math

import numpy as np
import pytest

from biphoton.amplitude import AmplitudeRequest, PumpSpec, SpectralEngine, Truncation, coincidence_amplitude
from biphoton.dispersion import BeamGeometry, crystal_from_sellmeier
from biphoton.engineering import TargetMatrix, solve_pump_coefficients, verify_gouy_spectral_invariance
from biphoton.errors import AccuracyError
from biphoton.lgmodes import ModeIndex, lg_amplitude
from biphoton.oracle import QuadratureGrid, brute_force_spectrum
from biphoton.specialfn import hyp2f1_regularized, ln_gamma
from biphoton.state import (SpectralGrid, build_state, purity_sweep, schmidt_number_central, schmidt_number_full,
                            schmidt_number_subspace, spatial_overlap_matrix, spatial_purity)

from conftest import (CRYSTAL_LENGTH, KTP_Y, KTP_Z, PAIR_WAIST, PSI4_PAIRS, PUMP_WAIST, PUMP_WAVELENGTH,
                      omega_of, record_acceptance)

# tolerances pinned from the acceptance criteria
ORACLE_RTOL = 1e-4
NEAR_ZERO_FRACTION = 1e-6
NEAR_ZERO_ATOL = 1e-8
K_PSI4, K_PSI4_PRIME, K_SUBSPACE_TOL = 4.00, 2.04, 0.05
SUBSPACE_PURITY_TOL = 1e-3
FILTER_PURITY, FILTER_PURITY_TOL = 0.33, 0.03
K_CENTRAL, K_CENTRAL_RTOL = 5.8, 0.05
K_FULL, K_FULL_RTOL = 140.0, 0.10
GOUY_TOL, GOUY_DISTINCT = 1e-6, 1e-3
THIN_PURITY_TOL = 1e-4
THIN_FLATNESS_TOL = 1e-4

SWEEP_BANDWIDTHS = [0.1e-9, 0.5e-9, 1e-9, 2e-9, 5e-9, 20e-9]
FULL_TRUNCATION = Truncation(10, 10)
SUBSPACE = [((0, a), (0, b)) for a in range(4) for b in range(4)]


def _verdict(number, title, ok, detail):
    record_acceptance(f"criterion {number}: {'PASS' if ok else 'FAIL'}  {title}  [{detail}]")


@pytest.fixture(scope="module")
def acceptance_engine(geometry, crystal):
    return SpectralEngine(geometry, crystal)


@pytest.fixture(scope="module")
def psi_prime_pump(geometry, crystal, acceptance_engine):
    pump, _ = solve_pump_coefficients(TargetMatrix((0, 1, 2, 3), np.eye(4)), geometry, crystal,
                                      engine=acceptance_engine)
    return pump


def _oracle_tuples():
    out = []
    for p, ps, pi_ in itertools.product(range(3), repeat=3):
        for ls, li in itertools.product(range(-2, 3), repeat=2):
            if abs(ls + li) <= 2:
                out.append(((p, ls + li), (ps, ls), (pi_, li)))
    return out


def test_criterion_1_oracle_equivalence(geometry, crystal):
    tuples = _oracle_tuples()
    omegas = [0.0, float(omega_of(809.5e-9)), float(omega_of(811e-9))]
    grid = QuadratureGrid(64, 96)
    closed, oracle = [], []
    for pump, s, i in tuples:
        req = AmplitudeRequest(ModeIndex(*pump), ModeIndex(*s), ModeIndex(*i), (0.0, 0.0), geometry, crystal)
        values, _ = brute_force_spectrum(req, [(w, -w) for w in omegas], grid)
        oracle.append(values)
        closed.append([coincidence_amplitude(AmplitudeRequest(req.pump_mode, req.signal_mode, req.idler_mode,
                                                              (w, -w), geometry, crystal)) for w in omegas])
    closed, oracle = np.array(closed), np.array(oracle)
    dominant = float(np.max(np.abs(oracle)))
    small = np.abs(oracle) < NEAR_ZERO_FRACTION * dominant
    dev = np.abs(closed - oracle)
    rel = np.where(small, 0.0, dev / np.where(small, 1.0, np.abs(oracle)))
    ok_rel = bool(np.all(rel[~small] <= ORACLE_RTOL))
    ok_abs = bool(np.all(dev[small] <= NEAR_ZERO_ATOL * dominant))
    mixed = sum(1 for _, s, i in tuples if s[1] * i[1] < 0)
    _verdict(1, "closed form vs brute-force overlap integral", ok_rel and ok_abs,
             f"{len(tuples)} tuples x {len(omegas)} detunings ({mixed} mixed-sign), max rel {rel.max():.2e} "
             f"<= {ORACLE_RTOL:g}, {int(small.sum())} near-zero within {NEAR_ZERO_ATOL:g} x dominant")
    assert ok_rel and ok_abs


def test_criterion_2_subspace_schmidt(psi4_pump, psi_prime_pump, geometry, crystal, acceptance_engine):
    tr = Truncation(0, 6)
    k4 = schmidt_number_subspace(build_state(psi4_pump, tr, SpectralGrid.single(), geometry, crystal,
                                             acceptance_engine), SUBSPACE)
    k4p = schmidt_number_subspace(build_state(psi_prime_pump, tr, SpectralGrid.single(), geometry, crystal,
                                              acceptance_engine), SUBSPACE)
    ok = abs(k4 - K_PSI4) <= K_SUBSPACE_TOL and abs(k4p - K_PSI4_PRIME) <= K_SUBSPACE_TOL
    coeffs = ", ".join(f"a{m.l}={a.real:.3f}" for m, a in psi_prime_pump.components)
    _verdict(2, "subspace Schmidt numbers", ok,
             f"K(Psi4)={k4:.4f} vs {K_PSI4}+-{K_SUBSPACE_TOL}, K(Psi'4)={k4p:.4f} vs {K_PSI4_PRIME}+-"
             f"{K_SUBSPACE_TOL}; Psi'4 pump {coeffs}")
    assert ok


def test_criterion_3_subspace_purity(psi4_pump, geometry, crystal, acceptance_engine):
    st = build_state(psi4_pump, Truncation(0, 10), SpectralGrid.symmetric(10e-9, 201), geometry, crystal,
                     acceptance_engine, edge_tolerance=None)
    p = spatial_purity(st, SUBSPACE)
    p_target = spatial_purity(st, PSI4_PAIRS)
    ok = abs(p - 1.0) <= SUBSPACE_PURITY_TOL
    _verdict(3, "Psi4 subspace spatial purity", ok,
             f"Tr(rho^2)={p:.5f} over l_s,l_i in 0..3 (target pairs only {p_target:.5f}), tol {SUBSPACE_PURITY_TOL:g}")
    assert ok


def test_criterion_4_filter_sweep(psi4_pump, geometry, crystal, acceptance_engine):
    sweep = purity_sweep(psi4_pump, SWEEP_BANDWIDTHS, FULL_TRUNCATION, geometry, crystal, nodes=32,
                         engine=acceptance_engine)
    vals = dict(sweep)
    monotone = all(b <= a for (_, a), (_, b) in zip(sweep, sweep[1:]))
    at_1nm = vals[1e-9]
    ok_value = abs(at_1nm - FILTER_PURITY) <= FILTER_PURITY_TOL
    table = ", ".join(f"{bw * 1e9:g} nm: {p:.3f}" for bw, p in sweep)
    _verdict(4, "filter sweep purity", ok_value and monotone,
             f"purity(1 nm)={at_1nm:.3f} vs {FILTER_PURITY}+-{FILTER_PURITY_TOL}; monotone={monotone}; "
             f"p_max=l_max=10; sweep {table}; 1 nm read as half-width (2 nm full): {vals[2e-9]:.3f}")
    assert monotone
    assert ok_value


@pytest.mark.extended
def test_criterion_5_full_schmidt(psi4_pump, geometry, crystal, acceptance_engine):
    central = build_state(psi4_pump, FULL_TRUNCATION, SpectralGrid.single(), geometry, crystal, acceptance_engine)
    k_central = schmidt_number_central(central)
    curve = []
    for p_max in (4, 7, 10):
        for nodes in (41, 101, 201):
            st = build_state(psi4_pump, Truncation(p_max, 10), SpectralGrid.symmetric(10e-9, nodes), geometry,
                             crystal, acceptance_engine, edge_tolerance=None)
            curve.append((p_max, nodes, schmidt_number_full(st)))
    k_full = curve[-1][2]
    ok_central = abs(k_central - K_CENTRAL) <= K_CENTRAL_RTOL * K_CENTRAL
    ok_full = abs(k_full - K_FULL) <= K_FULL_RTOL * K_FULL
    table = "; ".join(f"p{p}/n{n}: {k:.1f}" for p, n, k in curve)
    _verdict(5, "full Schmidt numbers", ok_central and ok_full,
             f"K_central={k_central:.3f} vs {K_CENTRAL}+-5%; K_full={k_full:.1f} vs {K_FULL}+-10% at p_max=10, "
             f"201 nodes; convergence (p_max/nodes: K_full) {table}")
    assert ok_central
    assert ok_full


def test_criterion_6_gouy_invariance(gouy_setup):
    geometry, crystal = gouy_setup
    triplets = [((0, 0), (0, 0), (0, 0)), ((1, 0), (1, 0), (0, 0)), ((0, 2), (0, 1), (0, 1)),
                ((0, 2), (0, 2), (0, 0)), ((0, 0), (0, 1), (0, -1)), ((0, 0), (1, 0), (0, 0)),
                ((0, 1), (0, 2), (0, -1)), ((1, 0), (0, 0), (0, 0)), ((0, 2), (0, 1), (1, 1))]
    omega = SpectralGrid.symmetric(2e-9, 41).nodes
    report = verify_gouy_spectral_invariance(triplets, geometry, crystal, omega, GOUY_TOL, GOUY_DISTINCT)
    within = max(report.within.values())
    reduced = max(report.reduced.values())
    ok = within <= GOUY_TOL and reduced <= GOUY_TOL and report.between > GOUY_DISTINCT
    _verdict(6, "Gouy spectral invariance", ok,
             f"classes {sorted(report.classes)}, within-class {within:.1e}, vs reduced integral {reduced:.1e} "
             f"(tol {GOUY_TOL:g}); N_R 0 vs -2 differ by {report.between:.3f} > {GOUY_DISTINCT:g}; "
             f"identically vanishing classes {report.vanishing}")
    assert ok
    assert report.vanishing == [2]


def test_criterion_7_invariants(geometry, crystal, acceptance_engine, psi4_pump):
    checks = {}
    rng = np.random.default_rng(2024)
    zeros = 0
    while zeros < 1000:
        p, ps, pi_ = (int(x) for x in rng.integers(0, 11, 3))
        l, ls, li = (int(x) for x in rng.integers(-10, 11, 3))
        if l == ls + li:
            continue
        w = float(rng.normal(scale=1e12))
        req = AmplitudeRequest(ModeIndex(p, l), ModeIndex(ps, ls), ModeIndex(pi_, li), (w, -w), geometry, crystal)
        assert coincidence_amplitude(req) == 0
        zeros += 1
    checks["OAM zeros (1000 tuples)"] = True

    om = np.array([0.0, 1e12, -2.5e12])
    worst = 0.0
    for _ in range(30):
        p, ps, pi_ = (int(x) for x in rng.integers(0, 4, 3))
        ls, li = (int(x) for x in rng.integers(-4, 5, 2))
        a = acceptance_engine.amplitudes((p, ls + li), (ps, ls), (pi_, li), om, -om)
        b = acceptance_engine.amplitudes((p, -ls - li), (ps, -ls), (pi_, -li), om, -om)
        worst = max(worst, float(np.max(np.abs(a - b.conj())) / np.max(np.abs(a))))
    checks[f"conjugation {worst:.1e} <= 1e-12"] = worst <= 1e-12

    st = build_state(psi4_pump, Truncation(1, 6), SpectralGrid.symmetric(10e-9, 81), geometry, crystal,
                     acceptance_engine)
    A = spatial_overlap_matrix(st).entries
    herm = float(np.max(np.abs(A - A.conj().T)))
    trace = abs(np.trace(A).real - 1)
    low = float(np.linalg.eigvalsh(A)[0])
    checks[f"density matrix herm {herm:.0e}, trace {trace:.0e}, min eig {low:.0e}"] = (
        herm <= 1e-12 and trace <= 1e-12 and low >= -1e-10)

    x, wx = np.polynomial.legendre.leggauss(200)
    r_max = 14 / PAIR_WAIST
    rho = 0.5 * r_max * (x + 1)
    phi = 2 * np.pi * np.arange(16) / 16
    R, P = np.meshgrid(rho, phi, indexing="ij")
    wt = np.outer(0.5 * r_max * wx * rho, np.full(16, 2 * np.pi / 16)).ravel()
    modes = [(p, l) for p in range(4) for l in range(-3, 4)]
    V = np.array([lg_amplitude(R, P, m, PAIR_WAIST).ravel() for m in modes])
    ortho = float(np.max(np.abs((V.conj() * wt) @ V.T - np.eye(len(modes)))))
    checks[f"LG orthonormality {ortho:.1e} <= 1e-8"] = ortho <= 1e-8

    z = rng.uniform(0.1, 8, 50) + 1j * rng.uniform(-8, 8, 50)
    rec = float(np.max(np.abs(ln_gamma(z + 1) - ln_gamma(z) - np.log(z))))
    xr = rng.uniform(0.05, 0.95, 50)
    refl = float(np.max(np.abs(np.exp(ln_gamma(xr) + ln_gamma(1 - xr)) - np.pi / np.sin(np.pi * xr))
                        / (np.pi / np.sin(np.pi * xr))))
    sym = float(np.max(np.abs(hyp2f1_regularized(1.5, 2.5, 3.0, 0.4 + 0.3j) -
                              hyp2f1_regularized(2.5, 1.5, 3.0, 0.4 + 0.3j))))
    checks[f"ln_gamma recurrence {rec:.0e}, reflection {refl:.0e}, 2F1 symmetry {sym:.0e}"] = (
        rec <= 1e-12 and refl <= 1e-10 and sym <= 1e-13)

    ok = all(checks.values())
    _verdict(7, "invariant suites", ok, "; ".join(f"{k}: {'ok' if v else 'FAIL'}" for k, v in checks.items()))
    assert ok


def test_criterion_8_thin_crystal(psi4_pump, geometry):
    thin = crystal_from_sellmeier(1e-6, PUMP_WAVELENGTH, KTP_Y, KTP_Y, KTP_Z)
    engine = SpectralEngine(geometry, thin)
    st = build_state(psi4_pump, Truncation(2, 6), SpectralGrid.symmetric(10e-9, 41), geometry, thin, engine,
                     edge_tolerance=None)
    p = spatial_purity(st)
    mags = np.abs(st.spectra)
    live = mags.max(axis=1) > 0
    flat = float(np.max(np.ptp(mags[live], axis=1) / mags[live].max(axis=1)))
    ok = abs(p - 1) <= THIN_PURITY_TOL and flat <= THIN_FLATNESS_TOL
    _verdict(8, "thin crystal (L = 1 um) decoupling", ok,
             f"purity {p:.8f} (tol {THIN_PURITY_TOL:g}), largest relative spectral variation {flat:.1e} "
             f"(tol {THIN_FLATNESS_TOL:g}) over 810+-10 nm, {int(live.sum())} pairs")
    assert ok
