"""Command-line front end: ``biphoton <command> --config run.yaml --out table.csv``.

Exit codes: 0 success, 1 configuration error, 2 infeasible target,
3 accuracy failure (or a failed check).
"""
import argparse
import csv
import hashlib
import io
import json
import logging
import math
import platform
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np
import scipy
import yaml

from . import __version__
from .amplitude import AmplitudeRequest, SpectralEngine, Truncation, coincidence_amplitude
from .config import dump_pump, load, parse_quantity
from .dispersion import wavelength_to_detuning
from .engineering import (TargetMatrix, solve_pump_coefficients, relative_mode_number,
                          verify_gouy_spectral_invariance)
from .errors import AccuracyError, BiphotonError, ConfigError, InfeasibleTargetError
from .lgmodes import ModeIndex
from .oracle import QuadratureGrid, brute_force_spectrum
from .state import (SpectralGrid, build_state, purity_sweep, schmidt_convergence,
                    schmidt_number_central, schmidt_number_full, schmidt_number_subspace,
                    spatial_purity, apply_spectral_filter)

log = logging.getLogger("biphoton")

EXIT_OK, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_ACCURACY = 0, 1, 2, 3
ORACLE_TOLERANCE = 1e-4
# near-zero amplitudes are compared absolutely, relative to the dominant one
NEAR_ZERO = 1e-6
NEAR_ZERO_ABS = 1e-8


def _fmt(x):
    return repr(float(x))


def _tuples(block, key, where):
    v = block.get(key)
    if not isinstance(v, list) or not v:
        raise ConfigError(f"{where}.{key}: expected a non-empty list of [p, l, p_s, l_s, p_i, l_i]",
                          block.line_of(key))
    out = []
    for t in v:
        if not isinstance(t, list) or len(t) != 6 or not all(isinstance(x, int) for x in t):
            raise ConfigError(f"{where}.{key}: bad tuple {t!r}", block.line_of(key))
        if min(t[0], t[2], t[4]) < 0:
            raise ConfigError(f"{where}.{key}: radial numbers must be >= 0 in {t!r}", block.line_of(key))
        out.append((ModeIndex(t[0], t[1]), ModeIndex(t[2], t[3]), ModeIndex(t[4], t[5])))
    return out


def _detunings(block, cfg, where):
    if "detunings" in block and "signal_wavelengths" in block:
        raise ConfigError(f"{where}: give either detunings or signal_wavelengths", block.line)
    if "detunings" in block:
        v = block["detunings"]
        if not isinstance(v, list):
            raise ConfigError(f"{where}.detunings: expected a list", block.line_of("detunings"))
        return [parse_quantity(x, "angular_frequency", block.line_of("detunings"), f"{where}.detunings")
                for x in v]
    if "signal_wavelengths" in block:
        v = block["signal_wavelengths"]
        if not isinstance(v, list):
            raise ConfigError(f"{where}.signal_wavelengths: expected a list", block.line_of("signal_wavelengths"))
        lams = [parse_quantity(x, "length", block.line_of("signal_wavelengths"), f"{where}.signal_wavelengths")
                for x in v]
        return [float(wavelength_to_detuning(lam, cfg.spectral["center"])) for lam in lams]
    return [0.0]


def _grid(cfg):
    sp = cfg.spectral
    return SpectralGrid.symmetric(sp["half_span"], sp["nodes"], sp["center"])


def _engine(cfg):
    return SpectralEngine(cfg.geometry, cfg.crystal, nodes=cfg.spectral["engine_nodes"])


def _need_pump(cfg):
    if cfg.pump is None:
        raise ConfigError("this command needs a 'pump' block", cfg.raw.line)
    return cfg.pump


def _map(fn, items, threads):
    if threads <= 1:
        return [fn(x) for x in items]
    # results come back in submission order whatever the completion order
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(fn, items))


def cmd_amplitude(cfg, args):
    block = cfg.section("amplitude")
    tuples = _tuples(block, "tuples", "amplitude")
    omegas = _detunings(block, cfg, "amplitude")
    budget = args.tolerance if args.tolerance is not None else float(block.get("budget", 1e-8))
    pulse = cfg.pump.pulse_duration if cfg.pump is not None else None
    items = [(t, om) for t in tuples for om in omegas]

    def run(item):
        (pump, s, i), om = item
        req = AmplitudeRequest(pump, s, i, (om, -om), cfg.geometry, cfg.crystal, pulse)
        value, err = coincidence_amplitude(req, cfg.truncation, budget, full_output=True)
        return value, err, "ok" if req.conserves_oam else "forbidden"

    results = _map(run, items, args.threads)
    header = ["p", "l", "p_s", "l_s", "p_i", "l_i", "omega_s", "omega_i", "re", "im", "abs2", "error", "flag"]
    rows = []
    for ((pump, s, i), om), (v, e, flag) in zip(items, results):
        rows.append([pump.p, pump.l, s.p, s.l, i.p, i.l, _fmt(om), _fmt(0.0 - om), _fmt(v.real), _fmt(v.imag),
                     _fmt(abs(v) ** 2), _fmt(e), flag])
    return header, rows, EXIT_OK, {"budget": budget}


def cmd_spiral_bandwidth(cfg, args):
    pump = _need_pump(cfg)
    block = cfg.section("spiral_bandwidth")
    p_s = block.get("p_s", 0)
    p_i = block.get("p_i", 0)
    l_max = block.get("l_max", cfg.truncation.l_max)
    engine = _engine(cfg)
    cells = []
    for ls in range(-l_max, l_max + 1):
        for li in range(-l_max, l_max + 1):
            c = 0j
            for mode, a in pump.components:
                if mode.l == ls + li:
                    cfg.truncation.check(mode, ModeIndex(p_s, ls), ModeIndex(p_i, li))
                    c += a * engine.amplitudes(mode, (p_s, ls), (p_i, li), [0.0], [0.0], pump.pulse_duration)[0]
            cells.append((ls, li, c))
    total = sum(abs(c) ** 2 for *_, c in cells)
    header = ["l_s", "l_i", "re", "im", "weight"]
    rows = [[ls, li, _fmt(c.real), _fmt(c.imag), _fmt(abs(c) ** 2 / total if total else 0.0)]
            for ls, li, c in cells]
    return header, rows, EXIT_OK, {"p_s": p_s, "p_i": p_i}


def _subspace(block, cfg):
    sub = block.get("subspace", {"oam": [0, 3]})
    if not isinstance(sub, dict) or "oam" not in sub:
        raise ConfigError("schmidt.subspace: expected {oam: [low, high]}", block.line_of("subspace"))
    lo, hi = sub["oam"]
    return [((0, a), (0, b)) for a in range(lo, hi + 1) for b in range(lo, hi + 1)]


def cmd_schmidt(cfg, args):
    pump = _need_pump(cfg)
    block = cfg.section("schmidt")
    engine = _engine(cfg)
    grid = _grid(cfg)
    # the window is the analysis range itself, not the spectral support
    state = build_state(pump, cfg.truncation, grid, cfg.geometry, cfg.crystal, engine, edge_tolerance=None)
    if cfg.spectral["filter"] is not None:
        state = apply_spectral_filter(state, *cfg.spectral["filter"])
    sub = _subspace(block, cfg)
    tr = cfg.truncation
    n = grid.nodes.size
    rows = [
        ["K_subspace_center", tr.p_max, tr.l_max, n, _fmt(schmidt_number_subspace(state, sub, "center"))],
        ["K_subspace_traced", tr.p_max, tr.l_max, n, _fmt(schmidt_number_subspace(state, sub, "traced"))],
        ["purity_subspace", tr.p_max, tr.l_max, n, _fmt(spatial_purity(state, sub))],
        ["purity_full", tr.p_max, tr.l_max, n, _fmt(spatial_purity(state))],
        ["K_central", tr.p_max, tr.l_max, n, _fmt(schmidt_number_central(state))],
        ["K_full", tr.p_max, tr.l_max, n, _fmt(schmidt_number_full(state))],
    ]
    if "convergence" in block:
        cb = block["convergence"]
        p_list = cb.get("p_max", [tr.p_max])
        n_list = cb.get("nodes", [n])
        truncs = [Truncation(int(p), tr.l_max) for p in p_list]
        grids = [SpectralGrid.symmetric(cfg.spectral["half_span"], int(k), cfg.spectral["center"]) for k in n_list]
        for p_max, l_max, nodes, k_full, k_central in schmidt_convergence(pump, cfg.geometry, cfg.crystal,
                                                                         truncs, grids, engine):
            rows.append(["K_full_convergence", p_max, l_max, nodes, _fmt(k_full)])
            rows.append(["K_central_convergence", p_max, l_max, nodes, _fmt(k_central)])
    return ["quantity", "p_max", "l_max", "nodes", "value"], rows, EXIT_OK, {}


def cmd_purity_sweep(cfg, args):
    pump = _need_pump(cfg)
    block = cfg.section("purity_sweep")
    if "bandwidths" not in block:
        raise ConfigError("purity_sweep: missing required key 'bandwidths'", block.line)
    bws = [parse_quantity(x, "length", block.line_of("bandwidths"), "purity_sweep.bandwidths")
           for x in block["bandwidths"]]
    shape = block.get("shape", "rectangular")
    nodes = int(block.get("nodes", 128))
    res = purity_sweep(pump, bws, cfg.truncation, cfg.geometry, cfg.crystal, nodes=nodes, shape=shape,
                       engine=_engine(cfg), span=cfg.spectral["half_span"], center=cfg.spectral["center"])
    rows = [[_fmt(round(bw * 1e9, 9)), _fmt(p)] for bw, p in res]
    monotone = all(b[1] <= a[1] + 1e-12 for a, b in zip(sorted(res), sorted(res)[1:]))
    return ["bandwidth_nm", "purity"], rows, EXIT_OK, {"monotone": monotone}


def _read_target_csv(path, line):
    try:
        data = np.loadtxt(path, delimiter=",", dtype=str, ndmin=2)
    except OSError as exc:
        raise ConfigError(f"engineer.target_csv: cannot read {path}: {exc}", line) from None
    return np.array([[complex(x.strip().replace("i", "j")) for x in row] for row in data])


def cmd_engineer(cfg, args):
    block = cfg.section("engineer")
    if "target" in block:
        entries = np.array([[complex(x) for x in row] for row in block["target"]])
    elif "target_csv" in block:
        base = Path(cfg.path).parent if cfg.path else Path(".")
        entries = _read_target_csv(base / block["target_csv"], block.line_of("target_csv"))
    else:
        raise ConfigError("engineer: give 'target' or 'target_csv'", block.line)
    try:
        target = TargetMatrix.from_offset(int(block.get("oam_start", 0)), entries)
    except BiphotonError as exc:
        raise ConfigError(f"engineer: {exc}", block.line) from None
    threshold = args.tolerance if args.tolerance is not None else float(block.get("threshold", 0.05))
    p_s, p_i = int(block.get("p_s", 0)), int(block.get("p_i", 0))
    lam = cfg.pump.wavelength if cfg.pump is not None else None
    code = EXIT_OK
    try:
        pump, report = solve_pump_coefficients(target, cfg.geometry, cfg.crystal, p_s, p_i, threshold,
                                               engine=_engine(cfg), wavelength=lam)
    except InfeasibleTargetError as exc:
        log.error("%s", exc)
        report, pump, code = exc.report, None, EXIT_INFEASIBLE
    rows = []
    for l, a in sorted(report.coefficients.items(), key=lambda kv: (kv[0] if isinstance(kv[0], int) else kv[0][1])):
        rows.append([l, _fmt(a.real), _fmt(a.imag), _fmt(report.residuals.get(l, float("nan"))
                                                        if isinstance(l, int) else float("nan"))])
    extra = {"fit_residual": report.fit_residual, "leakage": report.leakage,
             "asymmetry": report.asymmetry, "feasible": report.feasible, "threshold": threshold}
    if pump is not None and args.out:
        pump_path = Path(args.out).with_suffix(".pump.yaml")
        pump_path.write_text(dump_pump(pump))
        extra["pump_yaml"] = str(pump_path)
    elif pump is not None:
        sys.stderr.write(dump_pump(pump))
    return ["l", "re", "im", "residual"], rows, code, extra


def _near_zero_ok(closed, oracle, dominant, tol):
    if abs(oracle) < NEAR_ZERO * dominant:
        return abs(closed - oracle) <= NEAR_ZERO_ABS * dominant
    return abs(closed - oracle) <= tol * abs(oracle)


def cmd_validate_oracle(cfg, args):
    block = cfg.section("oracle")
    tuples = _tuples(block, "tuples", "oracle")
    omegas = _detunings(block, cfg, "oracle")
    tol = args.tolerance if args.tolerance is not None else float(block.get("tolerance", ORACLE_TOLERANCE))
    try:
        grid = QuadratureGrid(int(block.get("radial_nodes", 96)), int(block.get("angular_nodes", 128)),
                              str(block.get("family", "legendre")))
    except BiphotonError as exc:
        raise ConfigError(f"oracle: {exc}", block.line) from None
    rtol = float(block.get("rtol", 1e-7))
    refinements = int(block.get("max_refinements", 3))
    pulse = cfg.pump.pulse_duration if cfg.pump is not None else None
    engine = _engine(cfg)

    def run(triple):
        pump, s, i = triple
        req = AmplitudeRequest(pump, s, i, (0.0, 0.0), cfg.geometry, cfg.crystal, pulse)
        cfg.truncation.check(pump, s, i)
        oracle, err = brute_force_spectrum(req, [(om, -om) for om in omegas], grid, rtol, refinements)
        closed = engine.amplitudes(pump, s, i, omegas, [-om for om in omegas], pulse)
        return closed, oracle, err

    results = _map(run, tuples, args.threads)
    dominant = max(max(float(np.max(np.abs(o))) for _, o, _ in results), 1e-300)
    header = ["p", "l", "p_s", "l_s", "p_i", "l_i", "omega_s", "closed_re", "closed_im", "oracle_re",
              "oracle_im", "rel_error", "oracle_error", "pass"]
    rows, ok = [], True
    for (pump, s, i), (closed, oracle, err) in zip(tuples, results):
        for k, om in enumerate(omegas):
            c, o = complex(closed[k]), complex(oracle[k])
            rel = abs(c - o) / abs(o) if o != 0 else abs(c - o)
            good = _near_zero_ok(c, o, dominant, tol)
            ok &= good
            rows.append([pump.p, pump.l, s.p, s.l, i.p, i.l, _fmt(om), _fmt(c.real), _fmt(c.imag), _fmt(o.real),
                         _fmt(o.imag), _fmt(rel), _fmt(err[k]), "pass" if good else "FAIL"])
    return header, rows, EXIT_OK if ok else EXIT_ACCURACY, {"tolerance": tol}


def cmd_gouy_check(cfg, args):
    block = cfg.section("gouy")
    tuples = _tuples(block, "triplets", "gouy")
    if "signal_wavelengths" in block:
        omega = np.array(_detunings(block, cfg, "gouy"))
    else:
        half = parse_quantity(block.get("half_span", "2 nm"), "length", block.line_of("half_span"), "gouy.half_span")
        omega = SpectralGrid.symmetric(half, int(block.get("nodes", 41)), cfg.spectral["center"]).nodes
    tol = args.tolerance if args.tolerance is not None else float(block.get("tolerance", 1e-6))
    distinct = float(block.get("distinct", 1e-3))
    try:
        report = verify_gouy_spectral_invariance(tuples, cfg.geometry, cfg.crystal, omega, tol, distinct,
                                                 engine=_engine(cfg))
    except BiphotonError as exc:
        if isinstance(exc, AccuracyError):
            raise
        raise ConfigError(f"gouy: {exc}", block.line) from None
    rows = []
    for n_r in sorted(report.classes):
        for triple in report.classes[n_r]:
            pump, s, i = triple
            status = "vanishing" if n_r in report.vanishing else "live"
            rows.append([pump.p, pump.l, s.p, s.l, i.p, i.l, n_r, status,
                         _fmt(report.within.get(n_r, float("nan"))), _fmt(report.reduced.get(n_r, float("nan")))])
    header = ["p", "l", "p_s", "l_s", "p_i", "l_i", "N_R", "class", "within_class_dev", "reduced_dev"]
    extra = {"between_classes": report.between if math.isfinite(report.between) else None,
             "passed": report.passed, "vanishing_classes": report.vanishing}
    return header, rows, EXIT_OK if report.passed else EXIT_ACCURACY, extra


COMMANDS = {
    "amplitude": cmd_amplitude,
    "spiral-bandwidth": cmd_spiral_bandwidth,
    "schmidt": cmd_schmidt,
    "purity-sweep": cmd_purity_sweep,
    "engineer": cmd_engineer,
    "validate-oracle": cmd_validate_oracle,
    "gouy-check": cmd_gouy_check,
}


def _csv_text(header, rows):
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(header)
    w.writerows(rows)
    return buf.getvalue()


def build_parser():
    ap = argparse.ArgumentParser(prog="biphoton", description=__doc__.splitlines()[0])
    ap.add_argument("command", choices=sorted(COMMANDS))
    ap.add_argument("--config", required=True, help="YAML run configuration")
    ap.add_argument("--out", help="CSV output path (default: stdout); a .manifest.json is written next to it")
    ap.add_argument("--threads", type=int, default=1, help="worker threads (output order is fixed)")
    ap.add_argument("--tolerance", type=float, default=None,
                    help="override the command's tolerance (quadrature budget, oracle or Gouy tolerance, "
                         "solver threshold)")
    ap.add_argument("-v", "--verbose", action="store_true")
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    if args.threads < 1:
        sys.stderr.write("error: --threads must be >= 1\n")
        return EXIT_CONFIG
    try:
        cfg = load(args.config)
        header, rows, code, extra = COMMANDS[args.command](cfg, args)
    except ConfigError as exc:
        sys.stderr.write(f"config error: {exc}\n")
        return EXIT_CONFIG
    except AccuracyError as exc:
        sys.stderr.write(f"accuracy failure: {exc}\n")
        return EXIT_ACCURACY
    except InfeasibleTargetError as exc:
        sys.stderr.write(f"infeasible target: {exc}\n")
        return EXIT_INFEASIBLE
    except BiphotonError as exc:
        sys.stderr.write(f"error: {exc}\n")
        return EXIT_CONFIG

    text = _csv_text(header, rows)
    if args.out:
        out = Path(args.out)
        out.write_text(text)
        manifest = {
            "command": args.command,
            "config": str(args.config),
            "config_sha256": cfg.sha256,
            "output_sha256": hashlib.sha256(text.encode()).hexdigest(),
            "rows": len(rows),
            "exit_code": code,
            "tolerance_override": args.tolerance,
            "versions": {"biphoton": __version__, "numpy": np.__version__, "scipy": scipy.__version__,
                         "pyyaml": yaml.__version__, "python": platform.python_version()},
            "details": extra,
        }
        out.with_suffix(".manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True, default=str))
    else:
        sys.stdout.write(text)
    return code


if __name__ == "__main__":
    sys.exit(main())
