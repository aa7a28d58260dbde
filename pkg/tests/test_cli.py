import json
import shutil
import subprocess

import numpy as np
import pytest

from tethersim.cli import EXIT_IO, EXIT_OK, EXIT_SIMULATION, EXIT_USAGE, main
from tethersim.config import SCENARIO_DIR
from tethersim.profiles import case_profile
from tethersim.telemetry import read_profile, read_telemetry, telemetry_header


@pytest.fixture
def gusty(tmp_path):
    cfg = json.loads((SCENARIO_DIR / "equilibrium.json").read_text())
    cfg["sim"].update(duration=2.0, turbulence=0.05)
    cfg["gusts"] = [{"start": 0.5, "duration": 1.0, "velocity": [0.2, 0.0, 0.0]}]
    p = tmp_path / "gusty.json"
    p.write_text(json.dumps(cfg))
    return p


def test_entry_point_installed():
    exe = shutil.which("tethersim")
    assert exe is not None
    out = subprocess.run([exe, "--help"], capture_output=True, text=True)
    assert out.returncode == 0 and "simulate" in out.stdout


def test_usage_errors_exit_one(capsys):
    with pytest.raises(SystemExit) as info:
        main(["frobnicate"])
    assert info.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as info:
        main(["simulate"])
    assert info.value.code == EXIT_USAGE


def test_missing_config_is_io_error(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "none.json")]) == EXIT_IO


def test_invalid_config_exits_one(tmp_path):
    p = tmp_path / "bad.json"
    p.write_text('{"tether": {"l_R": -2}}')
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o.csv")]) == EXIT_USAGE
    p.write_text('{"tether": ')
    assert main(["simulate", "--config", str(p), "--out", str(tmp_path / "o.csv")]) == EXIT_USAGE


def test_seeded_runs_are_byte_identical(tmp_path, gusty):
    a, b, c = (tmp_path / f"{k}.csv" for k in "abc")
    assert main(["simulate", "--config", str(gusty), "--seed", "7", "--out", str(a)]) == EXIT_OK
    assert main(["simulate", "--config", str(gusty), "--seed", "7", "--out", str(b)]) == EXIT_OK
    assert main(["simulate", "--config", str(gusty), "--seed", "8", "--out", str(c)]) == EXIT_OK
    assert a.read_bytes() == b.read_bytes()
    assert a.read_bytes() != c.read_bytes()
    assert (tmp_path / "a_trace.csv").read_bytes() == (tmp_path / "b_trace.csv").read_bytes()


def test_equilibrium_scenario_stays_put(tmp_path):
    out = tmp_path / "eq.csv"
    wheels = tmp_path / "wheels.csv"
    assert main(["simulate", "--config", "equilibrium.json", "--out", str(out),
                 "--duration", "5", "--wheels", str(wheels)]) == EXIT_OK
    header, data = read_telemetry(out)
    assert header == telemetry_header(3)
    assert data.shape == (251, len(header))
    np.testing.assert_allclose(data[:, 1:4], [[0.0, 0.0, 0.5]] * len(data), atol=1e-4)
    raw = out.read_bytes()
    assert b"\r" not in raw and raw.endswith(b"\n")
    _, w = read_telemetry(wheels)
    assert w.shape == (251, 13)


def test_telemetry_keeps_nine_significant_digits(tmp_path):
    out = tmp_path / "eq.csv"
    main(["simulate", "--config", "equilibrium.json", "--out", str(out), "--duration", "0.1"])
    _, data = read_telemetry(out)
    first = out.read_text().splitlines()[1].split(",")
    for field, value in zip(first, data[0]):
        assert float(field) == value
        digits = field.lstrip("-").split("e")[0].replace(".", "").lstrip("0")
        assert len(digits) <= 9


@pytest.mark.parametrize("case", [1, 3])
def test_replay_bundled_profiles(tmp_path, case):
    out = tmp_path / "r.csv"
    assert main(["replay", "--config", "equilibrium.json", "--profile", f"case{case}.csv",
                 "--out", str(out)]) == EXIT_OK
    header, data = read_telemetry(out)
    x = data[:, header.index("rP_x")]
    if case == 1:
        assert x[-1] > 0.3
    else:
        z = data[:, header.index("rP_z")]
        assert z[-1] < z[0] - 0.1


def test_profile_gap_exits_three(tmp_path):
    times = np.r_[np.arange(0.0, 2.0, 0.1), np.arange(3.0, 5.0, 0.1)]
    rows = ["t,a_1_1,a_1_2,a_1_3,a_2_1,a_2_2,a_2_3,a_3_1,a_3_2,a_3_3"]
    rows += [f"{t:.1f}" + ",0" * 9 for t in times]
    p = tmp_path / "gap.csv"
    p.write_text("\n".join(rows) + "\n")
    assert main(["replay", "--config", "equilibrium.json", "--profile", str(p),
                 "--out", str(tmp_path / "o.csv")]) == EXIT_SIMULATION


def test_malformed_profile_exits_three(tmp_path):
    p = tmp_path / "bad.csv"
    p.write_text("time,a\n0,1\n")
    assert main(["replay", "--config", "equilibrium.json", "--profile", str(p),
                 "--out", str(tmp_path / "o.csv")]) == EXIT_SIMULATION


@pytest.mark.parametrize("case", [1, 2, 3])
def test_bundled_profiles_match_generator(case):
    stored = read_profile(SCENARIO_DIR / f"case{case}.csv")
    fresh = case_profile(case)
    np.testing.assert_allclose(stored.times, fresh.times, atol=1e-12)
    np.testing.assert_allclose(stored.accels, fresh.accels, atol=1e-12)


def test_validate_fast_passes(capsys):
    assert main(["validate", "--fast"]) == EXIT_OK
    out = capsys.readouterr().out
    assert "5/5 checks passed" in out


def test_validate_without_stabilisation_fails_drift(capsys):
    assert main(["validate", "--fast", "--baumgarte-gains", "0", "0"]) == EXIT_SIMULATION
    lines = capsys.readouterr().out.splitlines()
    drift = next(line for line in lines if "constraint_drift" in line)
    assert "FAIL" in drift
