"""Shared fixtures: the two benchmark runs, the certified scenario, and the
Monte Carlo basin sweep. All are session-scoped; every run in this suite is
deterministic, so sharing logs across test modules is safe."""
import subprocess
import sys
from dataclasses import replace

import numpy as np
import pytest

import so3lab

CLI = [sys.executable, "-m", "so3lab.cli"]


def run_cli(*args, timeout=300):
    return subprocess.run(CLI + list(args), capture_output=True, text=True,
                          timeout=timeout)


def report_dict(stdout):
    """Parse key=value report lines into a dict (last wins on repeats)."""
    out = {}
    for line in stdout.splitlines():
        if "=" in line:
            key, _, val = line.partition("=")
            out[key.strip()] = val.strip()
    return out


def terminal_norms(log):
    """The four error norms at the last sample: attitude-estimate,
    velocity-estimate, attitude-tracking, rate-tracking."""
    return (float(np.linalg.norm(log.e_RE[-1])),
            float(np.linalg.norm(log.omega_err[-1])),
            float(np.linalg.norm(log.e_R[-1])),
            float(np.linalg.norm(log.e_Omega[-1])))


@pytest.fixture(scope="session")
def va_scenario():
    return so3lab.stabilization_v_a()


@pytest.fixture(scope="session")
def va_log(va_scenario):
    return so3lab.run(va_scenario)


@pytest.fixture(scope="session")
def vb_log():
    return so3lab.run(so3lab.tracking_v_b())


@pytest.fixture(scope="session")
def fs_log():
    return so3lab.run(so3lab.stabilization_v_a(mode="full-state"))


@pytest.fixture(scope="session")
def certified_setup():
    """Near-spherical scalar-gain scenario that passes the whole
    certificate pipeline, with the certificate built from pinned inputs."""
    inertia = so3lab.InertiaSpec.diagonal(1.0, 1.02, 1.05)
    w = so3lab.WeightMatrix.from_values(1.1, 1.0, 0.9)
    cgains = so3lab.ControllerGains(1.0, 0.1)
    ogains = so3lab.ObserverGains(50.0, 0.5)
    R0 = so3lab.exp_so3([0.0, 0.25, 0.0])
    QE0 = so3lab.exp_so3([0.0, 0.0, 0.1])
    Omega0 = np.array([0.05, -0.05, 0.05])
    omega0 = R0 @ Omega0
    scenario = so3lab.Scenario(
        inertia=inertia, weights=w, weights_E=w,
        controller_gains=cgains, observer_gains=ogains,
        R0=R0, Omega0=Omega0, Rbar0=QE0.T @ R0,
        omega_bar0=omega0 + np.array([0.1, 0.1, -0.1]),
        trajectory=so3lab.SetpointTrajectory(np.eye(3)),
        mode="velocity-free", duration=60.0)
    cert = so3lab.build_certificate(
        inertia, w, w, cgains, ogains, psi=1.71, psi_bar_E=0.2,
        Omega_max=0.0, Psi_E0=0.0053, e_wE0_norm=0.35)
    return dict(inertia=inertia, weights=w, cgains=cgains, ogains=ogains,
                scenario=scenario, cert=cert)


@pytest.fixture(scope="session")
def certified_log(certified_setup):
    return so3lab.run(certified_setup["scenario"])


@pytest.fixture(scope="session")
def certified_trace(certified_setup, certified_log):
    cert = certified_setup["cert"]
    return so3lab.lyapunov_trace(certified_log, cert.c1, cert.c2,
                                 psi=1.71, psi_bar_E=0.2)


@pytest.fixture(scope="session")
def mc_report(va_scenario):
    """100 observer initializations drawn uniformly over rotations."""
    return so3lab.monte_carlo(va_scenario, 100, sampler="haar", seed=0)


@pytest.fixture(scope="session")
def perturbed_eq_logs(va_scenario):
    """Observer started a 1e-6 rotation away from each undesired
    equilibrium, with the velocity estimate exact."""
    logs = {}
    for i in (1, 2, 3):
        d = so3lab.observer.EQUILIBRIUM_ROTATIONS[i - 1]
        rng = np.random.default_rng(100 + i)
        axis = rng.standard_normal(3)
        axis /= np.linalg.norm(axis)
        rbar0 = so3lab.exp_so3(1e-6 * axis) @ (d.T @ va_scenario.R0)
        sc = replace(va_scenario, Rbar0=rbar0,
                     omega_bar0=va_scenario.R0 @ va_scenario.Omega0)
        logs[i] = so3lab.run(sc)
    return logs


@pytest.fixture(scope="session")
def exact_eq_logs(va_scenario):
    """Observer started exactly on each undesired equilibrium, 5 s."""
    logs = {}
    for i in (1, 2, 3):
        d = so3lab.observer.EQUILIBRIUM_ROTATIONS[i - 1]
        sc = replace(va_scenario, Rbar0=d.T @ va_scenario.R0,
                     omega_bar0=va_scenario.R0 @ va_scenario.Omega0,
                     duration=5.0)
        logs[i] = so3lab.run(sc)
    return logs
