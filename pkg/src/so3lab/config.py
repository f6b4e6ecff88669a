"""Plain-text scenario configuration.

The format is a small INI dialect: `[section]` headers, `key = value`
pairs, `#` comments. The parser is hand-rolled so every rejection can
point at the offending line; the schema is closed (unknown sections or
keys are errors, not warnings).

Example:

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
    R0 = axis_angle: 0.785398163 0 0
    Omega0 = 1 -1.5 2.5
    Rbar0 = identity
    omega_bar0 = 0 0 0

    [trajectory]
    type = setpoint
    R_d = identity

    [integrator]
    h = 0.001
    duration = 30
    log_every = 1
    seed = 0

    [mode]
    control = velocity-free

An euler321 trajectory replaces R_d with three angle profiles:
`alpha = constant: 1`, `beta = sine: 1 0.05`,
`gamma = cosine_plus: 1 0.1 2`. Gains are a bare positive number or
`matrix_of_inertia: <scalar>`, meaning scalar times the inertia matrix.
"""

from dataclasses import dataclass

import numpy as np

from . import so3
from .controller import (AngleFunction, ControllerGains, Euler321Trajectory,
                         SetpointTrajectory)
from .errors import ConfigError
from .observer import ObserverGains
from .rigid_body import InertiaSpec
from .sim import MODES, Scenario
from .so3 import WeightMatrix

_SCHEMA = {
    "inertia": {"diagonal", "matrix"},
    "weights": {"G", "G_E"},
    "gains": {"k_R", "k_Omega", "k_E", "k_v"},
    "initial": {"R0", "Omega0", "Rbar0", "omega_bar0"},
    "trajectory": {"type", "R_d", "alpha", "beta", "gamma"},
    "integrator": {"h", "duration", "log_every", "seed"},
    "mode": {"control", "tau"},
}


@dataclass(frozen=True)
class ConfigValue:
    raw: str
    line: int


def parse_config(text: str):
    """Parse config text into {section: {key: ConfigValue}}."""
    tree = {}
    section = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if line.startswith("["):
            if not line.endswith("]"):
                raise ConfigError("unterminated section header", lineno)
            name = line[1:-1].strip()
            if name not in _SCHEMA:
                raise ConfigError(f"unknown section [{name}]", lineno)
            if name in tree:
                raise ConfigError(f"duplicate section [{name}]", lineno)
            tree[name] = {}
            section = name
            continue
        if "=" not in line:
            raise ConfigError("expected 'key = value'", lineno)
        if section is None:
            raise ConfigError("key outside any section", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        if key not in _SCHEMA[section]:
            raise ConfigError(f"unknown key {key!r} in section [{section}]", lineno)
        if key in tree[section]:
            raise ConfigError(f"duplicate key {key!r}", lineno)
        if not value:
            raise ConfigError(f"empty value for {key!r}", lineno)
        tree[section][key] = ConfigValue(raw=value, line=lineno)
    return tree


def _require(tree, section, key):
    try:
        return tree[section][key]
    except KeyError:
        raise ConfigError(f"missing required key {key!r} in section [{section}]") from None


def _floats(cv: ConfigValue, count: int):
    parts = cv.raw.split()
    if len(parts) != count:
        raise ConfigError(f"expected {count} numbers, got {len(parts)}", cv.line)
    try:
        return [float(p) for p in parts]
    except ValueError as exc:
        raise ConfigError(str(exc), cv.line) from None


def _float(cv: ConfigValue) -> float:
    return _floats(cv, 1)[0]


def _int(cv: ConfigValue) -> int:
    try:
        return int(cv.raw.strip())
    except ValueError as exc:
        raise ConfigError(str(exc), cv.line) from None


def _rotation(cv: ConfigValue) -> np.ndarray:
    """identity | axis_angle: x y z | nine row-major entries."""
    raw = cv.raw.strip()
    if raw == "identity":
        return np.eye(3)
    if raw.startswith("axis_angle:"):
        v = ConfigValue(raw[len("axis_angle:"):], cv.line)
        return so3.exp_so3(np.array(_floats(v, 3)))
    vals = _floats(cv, 9)
    r = np.array(vals).reshape(3, 3)
    try:
        return so3.check_rotation(r)
    except Exception as exc:
        raise ConfigError(f"not a rotation matrix: {exc}", cv.line) from None


def _gain(cv: ConfigValue, j0: np.ndarray):
    raw = cv.raw.strip()
    if raw.startswith("matrix_of_inertia:"):
        scale = _float(ConfigValue(raw[len("matrix_of_inertia:"):], cv.line))
        if scale <= 0.0:
            raise ConfigError("gain scale must be positive", cv.line)
        return scale * j0
    g = _float(cv)
    if g <= 0.0:
        raise ConfigError("gain must be positive", cv.line)
    return g


def _angle(cv: ConfigValue) -> AngleFunction:
    raw = cv.raw.strip()
    for name, count, make in (
        ("constant:", 1, lambda a: AngleFunction.constant(a[0])),
        ("sine:", 2, lambda a: AngleFunction.sine(a[0], a[1])),
        ("cosine_plus:", 3, lambda a: AngleFunction.cosine_plus(a[0], a[1], a[2])),
    ):
        if raw.startswith(name):
            args = _floats(ConfigValue(raw[len(name):], cv.line), count)
            return make(args)
    raise ConfigError(
        "angle profile must be 'constant: c', 'sine: a w' or "
        "'cosine_plus: a w c'", cv.line)


def scenario_from_config(text: str) -> Scenario:
    """Build a validated Scenario from config text."""
    tree = parse_config(text)
    for section in _SCHEMA:
        if section not in tree and section != "mode":
            raise ConfigError(f"missing section [{section}]")

    inert = tree["inertia"]
    if "diagonal" in inert and "matrix" in inert:
        raise ConfigError("give either 'diagonal' or 'matrix', not both",
                          inert["matrix"].line)
    if "diagonal" in inert:
        j0 = np.diag(_floats(inert["diagonal"], 3))
        line = inert["diagonal"].line
    elif "matrix" in inert:
        j0 = np.array(_floats(inert["matrix"], 9)).reshape(3, 3)
        line = inert["matrix"].line
    else:
        raise ConfigError("section [inertia] needs 'diagonal' or 'matrix'")
    try:
        inertia = InertiaSpec(j0)
    except Exception as exc:
        raise ConfigError(str(exc), line) from None

    def weight(key):
        cv = _require(tree, "weights", key)
        try:
            return WeightMatrix.from_values(*_floats(cv, 3))
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(str(exc), cv.line) from None

    weights, weights_e = weight("G"), weight("G_E")

    def gain(key):
        cv = _require(tree, "gains", key)
        return _gain(cv, j0)

    try:
        cgains = ControllerGains(gain("k_R"), gain("k_Omega"))
        ogains = ObserverGains(gain("k_E"), gain("k_v"))
    except ConfigError:
        raise
    except Exception as exc:
        raise ConfigError(str(exc)) from None

    r0 = _rotation(_require(tree, "initial", "R0"))
    omega0 = np.array(_floats(_require(tree, "initial", "Omega0"), 3))
    rbar0 = _rotation(_require(tree, "initial", "Rbar0"))
    omega_bar0 = np.array(_floats(_require(tree, "initial", "omega_bar0"), 3))

    traj_type = _require(tree, "trajectory", "type")
    kind = traj_type.raw.strip()
    if kind == "setpoint":
        trajectory = SetpointTrajectory(_rotation(_require(tree, "trajectory", "R_d")))
    elif kind == "euler321":
        try:
            trajectory = Euler321Trajectory(
                alpha=_angle(_require(tree, "trajectory", "alpha")),
                beta=_angle(_require(tree, "trajectory", "beta")),
                gamma=_angle(_require(tree, "trajectory", "gamma")))
        except ConfigError:
            raise
        except Exception as exc:
            raise ConfigError(str(exc), traj_type.line) from None
    else:
        raise ConfigError("trajectory type must be 'setpoint' or 'euler321'",
                          traj_type.line)

    h_cv = _require(tree, "integrator", "h")
    h = _float(h_cv)
    if h <= 0.0:
        raise ConfigError("step size h must be positive", h_cv.line)
    dur_cv = _require(tree, "integrator", "duration")
    duration = _float(dur_cv)
    log_every = _int(tree["integrator"]["log_every"]) \
        if "log_every" in tree["integrator"] else 1
    seed = _int(tree["integrator"]["seed"]) if "seed" in tree["integrator"] else 0

    mode = "velocity-free"
    tau = None
    if "mode" in tree:
        if "control" in tree["mode"]:
            cv = tree["mode"]["control"]
            mode = cv.raw.strip()
            if mode not in MODES:
                raise ConfigError(f"control mode must be one of {MODES}", cv.line)
        if "tau" in tree["mode"]:
            tau = np.array(_floats(tree["mode"]["tau"], 3))

    try:
        return Scenario(
            inertia=inertia, weights=weights, weights_E=weights_e,
            controller_gains=cgains, observer_gains=ogains,
            R0=r0, Omega0=omega0, Rbar0=rbar0, omega_bar0=omega_bar0,
            trajectory=trajectory, mode=mode, tau=tau,
            duration=duration, h=h, seed=seed, log_every=log_every)
    except Exception as exc:
        raise ConfigError(str(exc), dur_cv.line) from None


def load_scenario(path: str) -> Scenario:
    with open(path, "r", encoding="utf-8") as fh:
        return scenario_from_config(fh.read())
