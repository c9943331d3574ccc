"""Run configuration: YAML loading, defaults, validation and the effective-config echo.

Every section is optional; absent keys take the defaults below. Unknown keys
are rejected. Errors carry the offending key and, where known, the line.
"""

import copy
import math
import re
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
import yaml

from . import seeding
from .actuation import ActuatorConfig, FieldModel, PidGains
from .compensator import IterationConfig, Scenario
from .disturbance import DisturbanceModel
from .dynamics import FormationGeometry, reference_basis
from .errors import DegenerateGeometry, ParseError, ValidationError
from .gru import TrainConfig

EFFECTIVE_CONFIG = "effective_config"
SEPARATION_RANGE = (170e3, 270e3)  # m


def _default_r2():
    return [7.0e6, 0.0, 0.0]


def _default_r1():
    tilt = math.radians(10.0)
    return [7.0e6, 220e3 * math.cos(tilt), 220e3 * math.sin(tilt)]


# Section name -> {key: default}. Order here is the order of the echo.
DEFAULTS = {
    "seed": 42,
    "output_dir": None,
    "scenario": {
        "inertia": [[120.0, 0.0, 0.0], [0.0, 100.0, 0.0], [0.0, 0.0, 90.0]],
        "initial_euler": [0.0, 0.0, 0.0],
        "initial_omega": [0.0, 0.0, 0.0],
        "control_dt": 1.0,
        "substeps": 10,
        "gains": {"kp": 0.5, "kd": 5.0, "ki": 0.01, "integral_clamp": 10.0},
        "actuator": {"fallback_fraction": 0.05, "tau_max": 1e-3,
                     "thruster_mode": "assist", "normalize_dipole": True},
        "field": {"B0": 3e-5, "orbit_period": 5400.0, "out_of_plane": 0.3},
        "formation": {"r1": _default_r1(), "r2": _default_r2()},
        "disturbance": {
            "amplitudes": [[1.0e-4, 5.0e-5], [8.0e-5, 4.0e-5], [6.0e-5, 6.0e-5]],
            "frequencies": [[1 / 5400, 2 / 5400] for _ in range(3)],
            "phases": [[0.0, 0.7], [1.9, 2.6], [4.1, 5.3]],
            "drift": [1e-9, 1e-9, 1e-9],
            "noise_sigma": 1e-6,
            "seed": None,  # None -> derived from the master seed
        },
    },
    "iteration": {"period": 5400.0, "num_iterations": 4, "prediction_mode": "conditioned",
                  "stop_rule": "fixed_N", "plateau_tol": 0.01},
    "train": {f.name: f.default for f in fields(TrainConfig) if f.name != "seed"},
}


@dataclass
class RunConfig:
    scenario: Scenario
    iteration: IterationConfig
    train: TrainConfig
    seed: int = 42
    output_dir: str = None
    raw: dict = field(default_factory=dict)  # effective values, plain YAML types

    def echo(self) -> str:
        return dump_effective(self.raw)


# -- parsing -----------------------------------------------------------------------

def _key_lines(node, prefix=""):
    """Map dotted key paths to 1-based line numbers from a composed YAML node."""
    out = {}
    if isinstance(node, yaml.MappingNode):
        for k, v in node.value:
            path = f"{prefix}.{k.value}" if prefix else str(k.value)
            out[path] = k.start_mark.line + 1
            out.update(_key_lines(v, path))
    return out


def _merge(defaults, given, lines, prefix=""):
    if given is None:
        given = {}
    if not isinstance(given, dict):
        raise ParseError("expected a mapping", lines.get(prefix), prefix or None)
    out = {}
    for key in given:
        path = f"{prefix}.{key}" if prefix else str(key)
        if key not in defaults:
            raise ParseError("unknown key", lines.get(path), path)
    for key, default in defaults.items():
        path = f"{prefix}.{key}" if prefix else key
        if isinstance(default, dict):
            out[key] = _merge(default, given.get(key), lines, path)
        else:
            out[key] = copy.deepcopy(given.get(key, default))
    return out


def parse_config(text: str) -> dict:
    """Parse YAML text and merge it over the defaults (no validation)."""
    try:
        root = yaml.compose(text, Loader=yaml.SafeLoader)
        data = yaml.safe_load(text)
    except yaml.MarkedYAMLError as exc:
        mark = exc.problem_mark or exc.context_mark
        raise ParseError(f"invalid YAML: {exc.problem}", mark.line + 1 if mark else None) from None
    except yaml.YAMLError as exc:
        raise ParseError(f"invalid YAML: {exc}") from None
    lines = _key_lines(root) if root is not None else {}
    return _merge(DEFAULTS, data, lines)


# -- validation --------------------------------------------------------------------

_CONSTRAINT = re.compile(r"^(\w+) must (?:be |have )?(.*)$")


def _number(value, name):
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        raise ValidationError(name, "a number")
    return float(value)


def _integer(value, name):
    if isinstance(value, bool) or not isinstance(value, int):
        raise ValidationError(name, "an integer")
    return value


def _array(value, name, shape=None):
    try:
        arr = np.array(value, dtype=float)
    except (TypeError, ValueError):
        raise ValidationError(name, "a numeric array") from None
    if shape is not None and arr.shape != shape:
        raise ValidationError(name, f"of shape {shape}")
    if not np.all(np.isfinite(arr)):
        raise ValidationError(name, "finite")
    return arr


def _build(cls, name, **kwargs):
    """Construct a config dataclass, turning its ValueErrors into ValidationErrors."""
    try:
        return cls(**kwargs)
    except ValueError as exc:
        m = _CONSTRAINT.match(str(exc))
        if m:
            raise ValidationError(m.group(1), m.group(2)) from None
        raise ValidationError(name, f"valid ({exc})") from None


def _typed(section: dict, cls, name):
    out = {}
    for f in fields(cls):
        if f.name not in section:
            continue
        v = section[f.name]
        if f.type in (int, "int"):
            out[f.name] = _integer(v, f.name)
        elif f.type in (float, "float"):
            out[f.name] = _number(v, f.name)
        elif f.type in (bool, "bool"):
            if not isinstance(v, bool):
                raise ValidationError(f.name, "true or false")
            out[f.name] = v
        elif f.type in (str, "str"):
            if not isinstance(v, str):
                raise ValidationError(f.name, "a string")
            out[f.name] = v
        else:
            out[f.name] = v
    return out


def field_basis(r1, r2) -> np.ndarray:
    """Rows a, b, c: inertial x, y, z axes expressed in the formation reference frame."""
    e = np.column_stack(reference_basis(FormationGeometry(np.asarray(r1), np.asarray(r2))))
    return e.copy()


def build_config(raw: dict) -> RunConfig:
    seed = _integer(raw["seed"], "seed")
    if seed < 0:
        raise ValidationError("seed", ">= 0")
    out_dir = raw["output_dir"]
    if out_dir is not None and not isinstance(out_dir, str):
        raise ValidationError("output_dir", "a string")
    s = raw["scenario"]

    gains = _build(PidGains, "gains", **_typed(s["gains"], PidGains, "gains"))
    actuator = _build(ActuatorConfig, "actuator", **_typed(s["actuator"], ActuatorConfig, "actuator"))

    geo = s["formation"]
    r1, r2 = _array(geo["r1"], "r1", (3,)), _array(geo["r2"], "r2", (3,))
    sep = float(np.linalg.norm(r1 - r2))
    lo, hi = SEPARATION_RANGE
    if not lo <= sep <= hi:
        raise ValidationError("separation", f"within [{lo / 1e3:g} km, {hi / 1e3:g} km]")
    try:
        basis = field_basis(r1, r2)
    except DegenerateGeometry:
        raise ValidationError("formation", "non-degenerate") from None
    fm = s["field"]
    for key in ("B0", "orbit_period"):
        if not _number(fm[key], key) > 0:
            raise ValidationError(key, "> 0")
    field_model = FieldModel(float(fm["B0"]), float(fm["orbit_period"]),
                             _number(fm["out_of_plane"], "out_of_plane"), basis)

    dm = s["disturbance"]
    dseed = dm["seed"]
    if dseed is None:
        dseed = seeding.derive_seed(seed, "disturbance")
    else:
        dseed = _integer(dseed, "disturbance.seed")
    drift = _array(dm["drift"], "drift")
    if drift.shape not in ((), (3,)):
        raise ValidationError("drift", "a scalar or 3-vector")
    disturbance = _build(DisturbanceModel, "disturbance",
                         amplitudes=_array(dm["amplitudes"], "amplitudes"),
                         frequencies=_array(dm["frequencies"], "frequencies"),
                         phases=_array(dm["phases"], "phases"), drift=drift,
                         noise_sigma=_number(dm["noise_sigma"], "noise_sigma"), rng_seed=dseed)

    control_dt = _number(s["control_dt"], "control_dt")
    if not control_dt > 0:
        raise ValidationError("control_dt", "> 0")
    scenario = _build(Scenario, "scenario",
                      inertia=_array(s["inertia"], "inertia", (3, 3)), gains=gains, actuator=actuator,
                      field_model=field_model, disturbance=disturbance,
                      initial_euler=_array(s["initial_euler"], "initial_euler", (3,)),
                      initial_omega=_array(s["initial_omega"], "initial_omega", (3,)),
                      control_dt=control_dt, substeps=_integer(s["substeps"], "substeps"))

    iteration = _build(IterationConfig, "iteration", **_typed(raw["iteration"], IterationConfig, "iteration"))
    if iteration.period < 100 * control_dt:
        raise ValidationError("period", ">= 100 * control_dt")
    train = _build(TrainConfig, "train", **_typed(raw["train"], TrainConfig, "train"))
    return RunConfig(scenario, iteration, train, seed, out_dir, raw)


def load_config_text(text: str) -> RunConfig:
    return build_config(parse_config(text))


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        text = path.read_text(encoding="utf-8")
    except OSError as exc:
        raise ParseError(f"cannot read {path}: {exc.strerror}") from None
    return load_config_text(text)


def with_overrides(cfg: RunConfig, seed=None, iterations=None, quick=False) -> RunConfig:
    """Apply command-line overrides, keeping the echo in sync."""
    raw = {**cfg.raw, "iteration": dict(cfg.raw["iteration"]), "train": dict(cfg.raw["train"])}
    if seed is not None:
        raw["seed"] = seed
    if iterations is not None:
        raw["iteration"]["num_iterations"] = iterations
    if quick:
        raw["iteration"]["num_iterations"] = 1
        raw["train"]["restarts"] = 1
    return build_config(raw)


def dump_effective(raw: dict) -> str:
    return yaml.safe_dump(raw, sort_keys=False, default_flow_style=None, width=100)


def write_effective(cfg: RunConfig, outdir) -> Path:
    path = Path(outdir) / EFFECTIVE_CONFIG
    path.write_text(cfg.echo(), encoding="utf-8")
    return path
