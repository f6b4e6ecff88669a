"""Config parsing (line-anchored diagnostics, every value form) and the
command-line interface (all four subcommands, exit codes, report and CSV
formats), exercised through real subprocesses."""
import math
import subprocess
import sys

import numpy as np
import pytest

import so3lab
from so3lab import cli
from so3lab.config import parse_config, scenario_from_config
from so3lab.errors import ConfigError

from conftest import report_dict, run_cli

VA_CFG = """\
[inertia]
diagonal = 5 1 2

[weights]
G = 1.1 1 0.9
G_E = 1.1 1 0.9

[gains]
k_R = matrix_of_inertia: 16
k_Omega = matrix_of_inertia: 5.6
k_E = matrix_of_inertia: 10
k_v = matrix_of_inertia: 5.6

[initial]
R0 = axis_angle: 0.7853981633974483 0 0
Omega0 = 1 -1.5 2.5
Rbar0 = identity
omega_bar0 = 0 0 0

[trajectory]
type = setpoint
R_d = identity

[integrator]
h = 0.001
duration = 30

[mode]
control = velocity-free
"""

BLOW_CFG = """\
[inertia]
diagonal = 5 1 2

[weights]
G = 1.1 1 0.9
G_E = 1.1 1 0.9

[gains]
k_R = 1
k_Omega = 1
k_E = 1
k_v = 1

[initial]
R0 = identity
Omega0 = 1 0 0
Rbar0 = identity
omega_bar0 = 0 0 0

[trajectory]
type = setpoint
R_d = identity

[integrator]
h = 0.001
duration = 30

[mode]
control = open-loop
tau = 1e13 0 0
"""


def scenarios_equal(a, b):
    assert np.array_equal(a.inertia.J0, b.inertia.J0)
    assert np.array_equal(a.weights.eps, b.weights.eps)
    assert np.array_equal(a.weights_E.eps, b.weights_E.eps)
    for attr in ("k_R", "k_Omega"):
        assert np.allclose(np.atleast_2d(getattr(a.controller_gains, attr)),
                           np.atleast_2d(getattr(b.controller_gains, attr)),
                           atol=1e-15)
    for attr in ("k_E", "k_v"):
        assert np.allclose(np.atleast_2d(getattr(a.observer_gains, attr)),
                           np.atleast_2d(getattr(b.observer_gains, attr)),
                           atol=1e-15)
    assert np.allclose(a.R0, b.R0, atol=1e-15)
    assert np.array_equal(a.Omega0, b.Omega0)
    assert np.allclose(a.Rbar0, b.Rbar0, atol=1e-12)
    assert np.allclose(a.omega_bar0, b.omega_bar0, atol=1e-12)
    assert a.mode == b.mode
    assert a.h == b.h and a.duration == b.duration
    assert a.log_every == b.log_every


# ---------------------------------------------------------------------------
# parser diagnostics

@pytest.mark.parametrize("text,line,msg", [
    ("[inertia\ndiagonal = 1 2 3\n", 1, "unterminated section header"),
    ("[banana]\n", 1, "unknown section"),
    ("[inertia]\ndiagonal = 1 2 3\n[inertia]\n", 3, "duplicate section"),
    ("[inertia]\ndiagonal 1 2 3\n", 2, "expected 'key = value'"),
    ("diagonal = 1 2 3\n", 1, "key outside any section"),
    ("[inertia]\nradius = 1\n", 2, "unknown key 'radius' in section"),
    ("[inertia]\ndiagonal = 1 2 3\ndiagonal = 4 5 6\n", 3, "duplicate key"),
    ("[inertia]\ndiagonal =\n", 2, "empty value for 'diagonal'"),
])
def test_parse_errors_are_line_anchored(text, line, msg):
    with pytest.raises(ConfigError) as exc:
        parse_config(text)
    assert exc.value.line == line
    assert msg in str(exc.value)


def test_parser_accepts_comments_and_blank_lines():
    tree = parse_config("# header\n\n[inertia]\n# inline note\n"
                        "diagonal = 5 1 2\n")
    assert tree["inertia"]["diagonal"].raw == "5 1 2"
    assert tree["inertia"]["diagonal"].line == 5


@pytest.mark.parametrize("missing,msg", [
    ("[weights]\nG = 1.1 1 0.9\nG_E = 1.1 1 0.9\n", "missing section"),
    ("", "missing section [inertia]"),
])
def test_missing_sections_detected(missing, msg):
    with pytest.raises(ConfigError, match="missing section"):
        scenario_from_config(missing)


def test_missing_key_detected():
    broken = VA_CFG.replace("G_E = 1.1 1 0.9\n", "")
    with pytest.raises(ConfigError,
                       match=r"missing required key 'G_E' in section "
                             r"\[weights\]"):
        scenario_from_config(broken)


def test_scenario_value_errors_carry_lines():
    bad_h = VA_CFG.replace("h = 0.001", "h = -0.001")
    with pytest.raises(ConfigError, match="step size h must be positive") as e:
        scenario_from_config(bad_h)
    assert e.value.line == VA_CFG.splitlines().index("h = 0.001") + 1
    bad_rot = VA_CFG.replace("Rbar0 = identity",
                             "Rbar0 = 1 0 0 0 1 0 0 0 2")
    with pytest.raises(ConfigError, match="not a rotation matrix"):
        scenario_from_config(bad_rot)
    bad_gain = VA_CFG.replace("k_E = matrix_of_inertia: 10", "k_E = -10")
    with pytest.raises(ConfigError, match="gain must be positive"):
        scenario_from_config(bad_gain)
    bad_scale = VA_CFG.replace("k_E = matrix_of_inertia: 10",
                               "k_E = matrix_of_inertia: 0")
    with pytest.raises(ConfigError, match="gain scale must be positive"):
        scenario_from_config(bad_scale)
    both = VA_CFG.replace("diagonal = 5 1 2",
                          "diagonal = 5 1 2\nmatrix = 5 0 0 0 1 0 0 0 2")
    with pytest.raises(ConfigError, match="not both"):
        scenario_from_config(both)
    bad_mode = VA_CFG.replace("control = velocity-free", "control = fuzzy")
    with pytest.raises(ConfigError, match="control mode must be one of"):
        scenario_from_config(bad_mode)
    bad_traj = VA_CFG.replace("type = setpoint", "type = spline")
    with pytest.raises(ConfigError,
                       match="trajectory type must be 'setpoint' or"):
        scenario_from_config(bad_traj)
    bad_angle = (VA_CFG.replace("type = setpoint", "type = euler321")
                 .replace("R_d = identity",
                          "alpha = ramp: 1\nbeta = sine: 1 0.05\n"
                          "gamma = cosine_plus: 1 0.1 2"))
    with pytest.raises(ConfigError, match="angle profile must be"):
        scenario_from_config(bad_angle)


def test_value_forms_round_trip():
    cfg = (VA_CFG
           .replace("R0 = axis_angle: 0.7853981633974483 0 0",
                    "R0 = 1 0 0 0 0 -1 0 1 0")
           .replace("k_R = matrix_of_inertia: 16", "k_R = 16")
           .replace("type = setpoint", "type = euler321")
           .replace("R_d = identity",
                    "alpha = constant: 1\nbeta = sine: 1 0.05\n"
                    "gamma = cosine_plus: 1 0.1 2"))
    sc = scenario_from_config(cfg)
    assert np.allclose(sc.R0, so3lab.exp_so3([np.pi / 2.0, 0.0, 0.0]),
                       atol=1e-12)
    assert sc.controller_gains.k_R == 16.0
    assert isinstance(sc.trajectory, so3lab.Euler321Trajectory)
    rd0, _, _ = so3lab.evaluate_desired(sc.trajectory, 0.0)
    assert np.allclose(rd0, so3lab.euler321_rotation(1.0, 0.0, 3.0),
                       atol=1e-14)


def test_shipped_configs_match_presets():
    with open("configs/stabilization.cfg") as f:
        scenarios_equal(scenario_from_config(f.read()),
                        so3lab.stabilization_v_a())
    with open("configs/tracking.cfg") as f:
        scenarios_equal(scenario_from_config(f.read()), so3lab.tracking_v_b())


def test_shipped_certified_config_matches_fixture(certified_setup):
    with open("configs/certified.cfg") as f:
        scenarios_equal(scenario_from_config(f.read()),
                        certified_setup["scenario"])


def test_inline_config_matches_preset():
    scenarios_equal(scenario_from_config(VA_CFG), so3lab.stabilization_v_a())


# ---------------------------------------------------------------------------
# in-process report helpers

def test_error_norm_sum_and_settling_time(va_log):
    s = cli.error_norm_sum(va_log)
    i = 12345
    direct = (np.linalg.norm(va_log.e_RE[i]) + np.linalg.norm(va_log.omega_err[i])
              + np.linalg.norm(va_log.e_R[i]) + np.linalg.norm(va_log.e_Omega[i]))
    assert s[i] == pytest.approx(direct, rel=1e-14)
    assert cli.time_to_threshold(va_log, 1e-2) == pytest.approx(23.973,
                                                                abs=1e-9)
    assert math.isnan(cli.time_to_threshold(va_log, 1e-4))
    assert cli.time_to_threshold(va_log, 1e3) == 0.0


def test_exponential_fit_pinned(va_log):
    slope, r2 = cli.exponential_fit(va_log)
    assert slope == pytest.approx(-0.20509902394600693, rel=1e-9)
    assert r2 == pytest.approx(0.9914704469411644, rel=1e-9)


def test_certificate_from_scenario_initial_conditions(certified_setup):
    cert = cli.build_certificate_for(certified_setup["scenario"])
    assert cert.certified
    assert cert.psi_bar_E == pytest.approx(0.4638728132290364, rel=1e-12)
    assert cert.c1 == pytest.approx(0.01561649327126074, rel=1e-12)
    assert cert.c2 == pytest.approx(0.7565030806897919, rel=1e-12)


# ---------------------------------------------------------------------------
# CLI subprocesses

def test_simulate_preset_report(tmp_path):
    out = tmp_path / "va.csv"
    r = run_cli("simulate", "--preset", "v-a", "--out", str(out))
    assert r.returncode == 0, r.stderr
    keys = [line.split("=", 1)[0] for line in r.stdout.splitlines()]
    assert keys == ["mode", "h", "duration", "samples", "trajectory",
                    "terminal_eRE_norm", "terminal_westim_err_norm",
                    "terminal_eR_norm", "terminal_eOmega_norm",
                    "time_to_error_sum_1e-2", "time_to_error_sum_1e-4",
                    "fit_rate", "fit_r2", "reprojections_R",
                    "reprojections_Rbar", "max_ortho_R", "max_ortho_Rbar",
                    "verdict", "wall_time_s", "csv"]
    rep = report_dict(r.stdout)
    assert rep["mode"] == "velocity-free"
    assert rep["h"] == "0.001"
    assert rep["duration"] == "30.0"
    assert rep["samples"] == "30001"
    assert rep["trajectory"] == "setpoint"
    assert rep["terminal_eRE_norm"] == "0.0003715094857034054"
    assert rep["terminal_westim_err_norm"] == "0.0020081044833245316"
    assert rep["terminal_eR_norm"] == "0.000752427623536245"
    assert rep["terminal_eOmega_norm"] == "0.00014652970455657203"
    assert rep["time_to_error_sum_1e-2"] == "23.973"
    assert rep["time_to_error_sum_1e-4"] == "nan"
    assert rep["fit_rate"] == "-0.20509902394600693"
    assert rep["fit_r2"] == "0.9914704469411644"
    assert rep["reprojections_R"] == "0"
    assert rep["reprojections_Rbar"] == "0"
    assert float(rep["max_ortho_R"]) < 1e-9
    assert float(rep["max_ortho_Rbar"]) < 1e-9
    assert rep["verdict"] == "UNCERTIFIED-CONVERGENT"
    assert rep["csv"] == str(out)


def test_simulate_csv_contents(tmp_path, va_log):
    out = tmp_path / "va.csv"
    r = run_cli("simulate", "--preset", "v-a", "--out", str(out))
    assert r.returncode == 0, r.stderr
    lines = out.read_text().splitlines()
    assert lines[0] == ("t,eRE_x,eRE_y,eRE_z,westim_err_x,westim_err_y,"
                        "westim_err_z,eR_x,eR_y,eR_z,eOmega_x,eOmega_y,"
                        "eOmega_z,u_x,u_y,u_z,Psi,PsiE,U,ortho_R,ortho_Rbar")
    assert len(lines) == 1 + len(va_log)
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert np.array_equal(data[:, 0], va_log.t)
    assert np.array_equal(data[:, 1:4], va_log.e_RE)
    assert np.array_equal(data[:, 4:7], va_log.omega_err)
    assert np.array_equal(data[:, 7:10], va_log.e_R)
    assert np.array_equal(data[:, 10:13], va_log.e_Omega)
    assert np.array_equal(data[:, 13:16], va_log.u)
    assert np.array_equal(data[:, 16], va_log.Psi)
    assert np.array_equal(data[:, 17], va_log.Psi_E)
    assert np.array_equal(data[:, 18], va_log.U)
    # a second run produces a byte-identical file
    out2 = tmp_path / "va2.csv"
    r = run_cli("simulate", "--preset", "v-a", "--out", str(out2))
    assert r.returncode == 0
    assert out.read_bytes() == out2.read_bytes()


def test_simulate_certified_config_emits_composite_column(tmp_path,
                                                          certified_setup):
    cfg = tmp_path / "certified.cfg"
    with open("configs/certified.cfg") as f:
        cfg.write_text(f.read())
    out = tmp_path / "cert.csv"
    r = run_cli("simulate", "--config", str(cfg), "--out", str(out))
    assert r.returncode == 0, r.stderr
    rep = report_dict(r.stdout)
    assert rep["verdict"] == "CERTIFIED"
    header = out.read_text().splitlines()[0].split(",")
    assert "V" in header
    assert header.index("V") == header.index("U") + 1
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    v = data[:, header.index("V")]
    assert v[0] > 0.0
    assert np.diff(v).max() < 0.0  # certified run: monotone decrease


def test_simulate_mode_override(tmp_path):
    r = run_cli("simulate", "--preset", "v-a", "--mode", "full-state")
    assert r.returncode == 0, r.stderr
    rep = report_dict(r.stdout)
    assert rep["mode"] == "full-state"
    assert float(rep["terminal_eR_norm"]) < 1e-14


def test_certify_ratio_failure():
    r = run_cli("certify", "--preset", "v-a")
    assert r.returncode == 0, r.stderr
    assert r.stdout.splitlines() == [
        "ratio_lhs=5.0",
        "ratio_rhs=2.727272727272727",
        "ratio_ok=False",
        "certified=False",
        "verdict=UNCERTIFIABLE",
    ]


def test_certify_with_simulation_fallback():
    r = run_cli("certify", "--preset", "v-a", "--simulate")
    assert r.returncode == 0, r.stderr
    rep = report_dict(r.stdout)
    assert rep["certified"] == "False"
    assert rep["verdict"] == "UNCERTIFIED-CONVERGENT"


def test_certify_certified_config():
    r = run_cli("certify", "--config", "configs/certified.cfg")
    assert r.returncode == 0, r.stderr
    rep = report_dict(r.stdout)
    assert rep["ratio_lhs"] == "1.05"
    assert rep["ratio_rhs"] == "2.727272727272727"
    assert rep["ratio_ok"] == "True"
    assert rep["psi_bar_E"] == "0.4638728132290364"
    assert rep["psi"] == "1.71"
    assert rep["c1"] == "0.01561649327126074"
    assert rep["c2"] == "0.7565030806897919"
    assert rep["all_pd"] == "True"
    assert rep["roa_ok"] == "True"
    assert rep["certified"] == "True"
    assert rep["verdict"] == "CERTIFIED"


def test_montecarlo_cli(tmp_path):
    out1 = tmp_path / "mc1.csv"
    out2 = tmp_path / "mc2.csv"
    r1 = run_cli("montecarlo", "--preset", "v-a", "--n", "3", "--seed", "11",
                 "--out", str(out1))
    r2 = run_cli("montecarlo", "--preset", "v-a", "--n", "3", "--seed", "11",
                 "--out", str(out2))
    assert r1.returncode == 0, r1.stderr
    assert r2.returncode == 0
    assert out1.read_bytes() == out2.read_bytes()
    rep = report_dict(r1.stdout)
    assert rep["n"] == "3"
    assert rep["sampler"] == "haar"
    assert rep["seed"] == "11"
    assert rep["threshold"] == "0.0001"
    assert rep["count[NotEquilibrium]"] == "3"
    assert rep["settled_below_threshold"] == "0"
    lines = out1.read_text().splitlines()
    assert lines[0] == "run_id,classification,time_to_threshold,max_PsiE"
    assert lines[1] == "0,NotEquilibrium,nan,1.7884397103593805"
    assert lines[2] == "1,NotEquilibrium,nan,1.9422525114207954"
    assert lines[3] == "2,NotEquilibrium,nan,1.235334624979349"


def test_montecarlo_equilibrium_sampler():
    r = run_cli("montecarlo", "--preset", "v-a", "--n", "1", "--seed", "0",
                "--sampler", "equilibrium-3")
    assert r.returncode == 0, r.stderr
    rep = report_dict(r.stdout)
    assert rep["sampler"] == "equilibrium-3"
    assert rep["count[NotEquilibrium]"] == "1"
    assert rep["settled_below_threshold"] == "1"


def test_validate_cli_pass_and_fail(tmp_path):
    # a 2 s horizon keeps the residuals clear of the converged tail where
    # the observed orders turn into roundoff noise
    cfg = tmp_path / "short.cfg"
    cfg.write_text(VA_CFG.replace("duration = 30", "duration = 2"))
    r = run_cli("validate", "--config", str(cfg), "--h", "0.001")
    assert r.returncode == 0, r.stderr
    assert "h_values=0.004,0.002,0.001" in r.stdout
    assert "validate_passed=True" in r.stdout
    r = run_cli("validate", "--config", str(cfg), "--h", "0.001",
                "--inject-fault")
    assert r.returncode == 4
    assert "validate_passed=False" in r.stdout


def test_config_error_exit_code(tmp_path):
    bad = tmp_path / "bad.cfg"
    bad.write_text(VA_CFG.replace("h = 0.001", "h = -0.001"))
    r = run_cli("simulate", "--config", str(bad))
    assert r.returncode == 2
    line = VA_CFG.splitlines().index("h = 0.001") + 1
    assert r.stderr.strip() == (f"config error: line {line}: "
                                "step size h must be positive")


def test_blowup_exit_code(tmp_path):
    cfg = tmp_path / "blow.cfg"
    cfg.write_text(BLOW_CFG)
    r = run_cli("simulate", "--config", str(cfg))
    assert r.returncode == 3
    assert r.stderr.strip() == ("numerical blowup: state norm exceeded 1e12 "
                                "at t=0.101000 s")


def test_missing_scenario_source_exit_code():
    r = run_cli("simulate")
    assert r.returncode == 2
    assert "give --config PATH or --preset" in r.stderr


def test_console_script_entry_point():
    r = subprocess.run(["so3lab", "certify", "--preset", "v-a"],
                       capture_output=True, text=True, timeout=300)
    assert r.returncode == 0, r.stderr
    assert "verdict=UNCERTIFIABLE" in r.stdout


def test_main_is_importable_entry():
    assert cli.main(["certify", "--preset", "v-a"]) == 0
