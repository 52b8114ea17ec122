import json
import math
from pathlib import Path

import numpy as np
import pytest

from biphoton.amplitude import AmplitudeRequest, coincidence_amplitude
from biphoton.cli import EXIT_ACCURACY, EXIT_CONFIG, EXIT_INFEASIBLE, EXIT_OK, main
from biphoton.config import load, loads
from biphoton.errors import ConfigError
from biphoton.lgmodes import ModeIndex
from biphoton.units import parse_quantity

CONFIGS = Path(__file__).resolve().parent.parent / "configs"
BASE = (CONFIGS / "ppktp.yaml").read_text()


def _line_of(text, needle):
    return next(k for k, line in enumerate(text.splitlines(), 1) if needle in line)


def _write(tmp_path, text, name="run.yaml"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


def _run(capsys, *argv):
    code = main(list(argv))
    out = capsys.readouterr()
    return code, out.out, out.err


def test_shipped_configs_load():
    cfg = load(CONFIGS / "ppktp.yaml")
    assert cfg.crystal.length == pytest.approx(15e-3)
    assert cfg.geometry.w_s == pytest.approx(33e-6)
    assert len(cfg.pump.components) == 2
    assert abs(cfg.crystal.central_mismatch) < 1e-6
    gouy = load(CONFIGS / "gouy.yaml")
    assert gouy.crystal.k_p == pytest.approx(2 * gouy.crystal.k_s, rel=1e-15)


@pytest.mark.parametrize("text, kind, value", [("15 mm", "length", 15e-3), ("405 nm", "length", 405e-9),
                                               ("1.5e8 m/s", "velocity", 1.5e8), ("2 ps", "time", 2e-12),
                                               ("3", "dimensionless", 3.0)])
def test_quantity_parsing(text, kind, value):
    assert parse_quantity(text, kind) == pytest.approx(value, rel=1e-15)


def test_unknown_key_is_line_anchored():
    text = BASE.replace("  w_i: 33 um\n", "  w_i: 33 um\n  w_x: 33 um\n")
    with pytest.raises(ConfigError) as exc:
        loads(text)
    assert exc.value.line == _line_of(text, "w_x")
    assert f"line {exc.value.line}" in str(exc.value)


def test_missing_unit_is_line_anchored():
    text = BASE.replace("length: 15 mm", "length: 15")
    with pytest.raises(ConfigError) as exc:
        loads(text)
    assert exc.value.line == _line_of(text, "length: 15")


def test_wrong_unit_kind():
    with pytest.raises(ConfigError, match="not a length unit"):
        loads(BASE.replace("w_p: 25 um", "w_p: 25 m/s"))


def test_duplicate_key_is_line_anchored():
    text = BASE.replace("  w_s: 33 um\n", "  w_s: 33 um\n  w_s: 34 um\n")
    with pytest.raises(ConfigError) as exc:
        loads(text)
    assert exc.value.line == _line_of(text, "w_s: 34 um")


def test_unnormalized_pump_rejected():
    text = BASE.replace("coefficient: 0.7908663184920744}", "coefficient: 0.9}\n  normalize: false")
    with pytest.raises(ConfigError):
        loads(text)


def test_exit_code_config_error(tmp_path, capsys):
    path = _write(tmp_path, BASE.replace("w_p: 25 um", "w_p: 25"))
    code, _, err = _run(capsys, "amplitude", "--config", path)
    assert code == EXIT_CONFIG
    assert "line" in err


def test_amplitude_matches_library(tmp_path, capsys):
    cfg = load(CONFIGS / "ppktp.yaml")
    text = BASE.replace("    - [0, 1, 0, 0, 0, 1]\n", "    - [0, 2, 0, 1, 0, 1]\n    - [0, 1, 0, 1, 0, 1]\n", 1)
    out = tmp_path / "amp.csv"
    code, _, _ = _run(capsys, "amplitude", "--config", _write(tmp_path, text), "--out", str(out))
    assert code == EXIT_OK
    rows = out.read_text().splitlines()
    header = rows[0].split(",")
    first = dict(zip(header, rows[1].split(",")))
    req = AmplitudeRequest(ModeIndex(0, 2), ModeIndex(0, 1), ModeIndex(0, 1), (0.0, 0.0), cfg.geometry,
                           cfg.crystal)
    ref = coincidence_amplitude(req, cfg.truncation)
    assert float(first["re"]) == ref.real and float(first["im"]) == ref.imag
    forbidden = [dict(zip(header, r.split(","))) for r in rows[1:] if r.startswith("0,1,0,1,0,1,")]
    assert forbidden and all(f["flag"] == "forbidden" and float(f["re"]) == 0 == float(f["im"])
                             for f in forbidden)
    manifest = json.loads(out.with_suffix(".manifest.json").read_text())
    assert manifest["exit_code"] == 0 and manifest["rows"] == len(rows) - 1


def test_output_independent_of_threads(tmp_path, capsys):
    rng = np.random.default_rng(0)
    tuples = []
    while len(tuples) < 100:
        p, ps, pi_ = (int(x) for x in rng.integers(0, 3, 3))
        ls, li = (int(x) for x in rng.integers(-3, 4, 2))
        l = ls + li if rng.random() < 0.8 else ls + li + 1
        tuples.append(f"    - [{p}, {l}, {ps}, {ls}, {pi_}, {li}]")
    block = "amplitude:\n  tuples:\n" + "\n".join(tuples) + "\n  signal_wavelengths: [810 nm, 809 nm]\n"
    start, end = BASE.index("amplitude:"), BASE.index("spiral_bandwidth:")
    path = _write(tmp_path, BASE[:start] + block + "\n" + BASE[end:])
    outputs = []
    for threads in ("1", "2", "2"):
        out = tmp_path / f"amp{len(outputs)}.csv"
        assert _run(capsys, "amplitude", "--config", path, "--out", str(out), "--threads", threads)[0] == EXIT_OK
        outputs.append(out.read_bytes())
    assert outputs[0] == outputs[1] == outputs[2]


def test_spiral_bandwidth_gaussian_symmetric(tmp_path, capsys):
    start, end = BASE.index("\npump:") + 1, BASE.index("truncation:")
    text = BASE[:start] + "pump:\n  components:\n    - {p: 0, l: 0, coefficient: 1}\n\n" + BASE[end:]
    code, out, _ = _run(capsys, "spiral-bandwidth", "--config", _write(tmp_path, text))
    assert code == EXIT_OK
    weights = {}
    for line in out.splitlines()[1:]:
        ls, li, _, _, w = line.split(",")
        weights[(int(ls), int(li))] = float(w)
    for (ls, li), w in weights.items():
        assert weights[(-ls, -li)] == pytest.approx(w, rel=1e-12, abs=1e-300)
    assert weights[(0, 0)] == max(weights.values())


def test_spiral_bandwidth_psi4_bars(capsys):
    code, out, _ = _run(capsys, "spiral-bandwidth", "--config", str(CONFIGS / "ppktp.yaml"))
    assert code == EXIT_OK
    rows = sorted(((float(r.split(",")[4]), int(r.split(",")[0]), int(r.split(",")[1]))
                   for r in out.splitlines()[1:]), reverse=True)
    assert {(ls, li) for _, ls, li in rows[:4]} == {(0, 1), (1, 0), (2, 3), (3, 2)}
    # amplitudes within 1% of their common value, so weights within 2%
    top = np.array([w for w, *_ in rows[:4]])
    assert np.max(np.abs(top - top.mean())) <= 0.02 * top.mean()


def test_engineer_round_trip(tmp_path, capsys):
    out = tmp_path / "eng.csv"
    code, _, _ = _run(capsys, "engineer", "--config", str(CONFIGS / "ppktp.yaml"), "--out", str(out))
    assert code == EXIT_OK
    manifest = json.loads(out.with_suffix(".manifest.json").read_text())
    residual = manifest["details"]["fit_residual"]
    pump_yaml = out.with_suffix(".pump.yaml").read_text()
    start, end = BASE.index("\npump:") + 1, BASE.index("truncation:")
    path = _write(tmp_path, BASE[:start] + pump_yaml + "\n" + BASE[end:])
    code, table, _ = _run(capsys, "spiral-bandwidth", "--config", path)
    assert code == EXIT_OK
    bars = {}
    for line in table.splitlines()[1:]:
        ls, li, re, im, _ = line.split(",")
        bars[(int(ls), int(li))] = complex(float(re), float(im))
    M = np.array([[bars[(a, b)] for b in range(4)] for a in range(4)])
    t = np.array([[0, 1, 0, 0], [1, 0, 0, 0], [0, 0, 0, 1], [0, 0, 1, 0]], dtype=float)
    lam = np.vdot(M.ravel(), t.ravel()) / np.vdot(M.ravel(), M.ravel())
    assert np.linalg.norm(t - lam * M) / np.linalg.norm(t) <= residual + 1e-10


def test_engineer_infeasible_exit(tmp_path, capsys):
    start, end = BASE.index("engineer:"), BASE.index("oracle:")
    block = "engineer:\n  oam_start: 0\n  target:\n    - [0, 1]\n    - [2, 0]\n\n"
    code, _, _ = _run(capsys, "engineer", "--config", _write(tmp_path, BASE[:start] + block + BASE[end:]))
    assert code == EXIT_INFEASIBLE


def test_engineer_target_csv(tmp_path, capsys):
    (tmp_path / "target.csv").write_text("1,0\n0,1\n")
    start, end = BASE.index("engineer:"), BASE.index("oracle:")
    block = "engineer:\n  target_csv: target.csv\n\n"
    code, out, _ = _run(capsys, "engineer", "--config", _write(tmp_path, BASE[:start] + block + BASE[end:]))
    assert code == EXIT_OK
    coeffs = {int(r.split(",")[0]): float(r.split(",")[1]) for r in out.splitlines()[1:]}
    assert coeffs[1] == 0 and coeffs[0] > 0 and coeffs[2] > 0


def _oracle_config(block):
    start = BASE.index("oracle:")
    return BASE[:start] + block


def test_validate_oracle_forbidden_tuple(tmp_path, capsys):
    block = "oracle:\n  tuples:\n    - [0, 1, 0, 1, 0, 1]\n    - [0, 0, 0, 0, 0, 0]\n  radial_nodes: 48\n" \
            "  angular_nodes: 48\n"
    code, out, _ = _run(capsys, "validate-oracle", "--config", _write(tmp_path, _oracle_config(block)))
    assert code == EXIT_OK
    row = dict(zip(out.splitlines()[0].split(","), out.splitlines()[1].split(",")))
    assert [float(row[k]) for k in ("closed_re", "closed_im", "oracle_re", "oracle_im")] == [0.0] * 4
    assert row["pass"] == "pass"


def test_validate_oracle_coarse_grid_fails(tmp_path, capsys):
    block = "oracle:\n  tuples:\n    - [2, 2, 2, 1, 2, 1]\n  radial_nodes: 16\n  angular_nodes: 16\n" \
            "  max_refinements: 0\n"
    code, _, err = _run(capsys, "validate-oracle", "--config", _write(tmp_path, _oracle_config(block)))
    assert code == EXIT_ACCURACY
    assert "accuracy failure" in err


def test_gouy_check_config(capsys):
    code, out, _ = _run(capsys, "gouy-check", "--config", str(CONFIGS / "gouy.yaml"))
    assert code == EXIT_OK
    classes = {int(r.split(",")[6]) for r in out.splitlines()[1:]}
    assert classes == {0, -2}


def test_purity_sweep_command(tmp_path, capsys):
    text = BASE.replace("  p_max: 4\n", "  p_max: 0\n").replace("  l_max: 10\n", "  l_max: 6\n", 1)
    text = text.replace("bandwidths: [0.1 nm, 0.5 nm, 1 nm, 2 nm, 5 nm, 20 nm]", "bandwidths: [0.5 nm, 1 nm, 2 nm]")
    out = tmp_path / "sweep.csv"
    code, _, _ = _run(capsys, "purity-sweep", "--config", _write(tmp_path, text), "--out", str(out))
    assert code == EXIT_OK
    rows = out.read_text().splitlines()
    assert rows[0] == "bandwidth_nm,purity"
    assert [r.split(",")[0] for r in rows[1:]] == ["0.5", "1.0", "2.0"]
    assert json.loads(out.with_suffix(".manifest.json").read_text())["details"]["monotone"] is True


def test_schmidt_command(tmp_path, capsys):
    text = BASE.replace("  p_max: 4\n", "  p_max: 0\n").replace("  nodes: 41\n", "  nodes: 21\n")
    code, out, _ = _run(capsys, "schmidt", "--config", _write(tmp_path, text))
    assert code == EXIT_OK
    values = {r.split(",")[0]: float(r.split(",")[4]) for r in out.splitlines()[1:]}
    assert values["K_subspace_center"] == pytest.approx(4.0, abs=0.05)
    assert math.isfinite(values["K_full"])
