"""Scenario files.

A scenario is a YAML mapping with a fixed set of sections.  Every section is
validated against a typed schema and completed with defaults, so the resolved
scenario (``Scenario.to_dict``) fully determines a run.  It is embedded in
every output header and re-parses to an identical scenario.
"""

import copy
import math
import os

import yaml

from .errors import ConfigError
from .expr import Expr

__all__ = [
    "Scenario",
    "load_scenario",
    "parse_scenario",
    "dump_scenario",
    "build_grid",
    "build_kernel",
    "build_program",
    "build_gas_scenario",
    "SCHEMA",
    "shipped_scenario",
    "shipped_path",
]

_REQ = object()

# section -> key -> (type, default)
SCHEMA = {
    "geometry": {
        "kind": ("choice:radial,annulus2d", "radial"),
        "r_i": ("float", 1.0),
        "r_e": ("float", 2.0),
        "ratio": ("float", 1.05),
        "outer": ("floats2", [4.0, 4.0]),
        "inner": ("floats2", [1.0, 1.0]),
        "center": ("floats2?", None),
        "n": ("int", 128),
    },
    "kernel": {
        "coeffs": ("floats?", None),
        "exponents": ("floats?", None),
        "alpha": ("float?", None),
        "beta": ("float?", None),
    },
    "boundary": {
        "kind": ("choice:ibvp1,ibvp2", "ibvp1"),
        "phi": ("expr", "0"),
        "q_s": ("float", 1.0),
        "psi": ("expr?", None),
        "q": ("expr?", None),
        "gamma": ("expr?", None),
    },
    "initial": {
        "kind": ("choice:pss,bump,constant", "pss"),
        "amplitude": ("float", 0.0),
        "width": ("float?", None),
        "value": ("float", 0.0),
    },
    "numerics": {
        "dt": ("float?", None),
        "t_end": ("float?", None),
        "dt_tau": ("float", 0.02),
        "t_end_tau": ("float", 20.0),
        "tol": ("float", 1e-10),
        "max_iter": ("int", 100),
        "method": ("choice:newton,picard", "newton"),
    },
    "gas": {
        "alpha": ("float", 10.0),
        "beta": ("float", 1000.0),
        "B": ("float", 2000.0),
        "A": ("float", 1.0),
        "phi0": ("float?", None),
        "dt": ("float", 5.0),
        "t_end": ("float?", None),
        "tol": ("float", 1e-12),
        "max_iter": ("int", 30),
        "approach": ("float", 0.1),
    },
    "diagnose": {
        "t0": ("float", 0.0),
        "t1": ("float", 20.0),
        "n_samples": ("int", 101),
        "alpha": ("float?", None),
        "beta": ("float", 2.0),
        "eps": ("float", 1.0),
        "tail_fraction": ("float", 0.2),
        "decay_threshold": ("float", 1e-4),
        "growth_rtol": ("float", 0.05),
        "c_a2": ("float", 1.0),
        "p0_mismatch": ("float", 0.0),
        "trajectory": ("bool", False),
    },
    "sweep": {
        "B": ("floats", [250.0, 500.0, 1000.0, 2000.0, 4000.0]),
        "T0": ("float", 0.1),
    },
    "identity": {
        "T": ("float?", None),
        "refine": ("bool", True),
    },
    "output": {
        "dir": ("str", "out"),
        "stride": ("int", 1),
        "plot": ("bool", False),
    },
}
_TOP = {"name": ("str", _REQ), "model": ("choice:liquid,gas", "liquid")}


def _coerce(kind, value, where):
    optional = kind.endswith("?")
    base = kind.rstrip("?")
    if value is None:
        if optional:
            return None
        raise ConfigError(f"{where} must not be empty")
    try:
        if base == "float":
            if isinstance(value, bool):
                raise TypeError
            out = float(value)
            if not math.isfinite(out):
                raise ValueError
            return out
        if base == "int":
            if isinstance(value, bool) or float(value) != int(float(value)):
                raise TypeError
            return int(float(value))
        if base == "bool":
            if not isinstance(value, bool):
                raise TypeError
            return value
        if base == "str":
            if not isinstance(value, str) or not value:
                raise TypeError
            return value
        if base == "expr":
            if isinstance(value, bool) or not isinstance(value, (str, int, float)):
                raise TypeError
            text = value if isinstance(value, str) else repr(value)
            Expr(text)
            return text
        if base.startswith("floats"):
            if not isinstance(value, (list, tuple)) or not value:
                raise TypeError
            out = [_coerce("float", v, where) for v in value]
            if base == "floats2" and len(out) != 2:
                raise ValueError
            return out
        if base.startswith("choice:"):
            choices = base.split(":", 1)[1].split(",")
            if value not in choices:
                raise ConfigError(f"{where} must be one of {choices}, got {value!r}")
            return value
    except ConfigError:
        raise
    except Exception as exc:  # noqa: BLE001 - reported uniformly
        msg = f": {exc}" if str(exc) else ""
        raise ConfigError(f"{where} has an invalid value {value!r} (expected {kind}){msg}") from None
    raise AssertionError(kind)


class Scenario:
    """A validated, fully resolved scenario."""

    def __init__(self, data):
        self._data = data

    def __getitem__(self, key):
        return self._data[key]

    def __getattr__(self, key):
        try:
            return self._data[key]
        except KeyError:
            raise AttributeError(key) from None

    def __eq__(self, other):
        return isinstance(other, Scenario) and self._data == other._data

    def __repr__(self):
        return f"Scenario(name={self._data['name']!r}, model={self._data['model']!r})"

    def to_dict(self):
        return copy.deepcopy(self._data)

    def replace(self, section, **updates):
        data = self.to_dict()
        data[section].update(updates)
        return parse_scenario(data)


def parse_scenario(raw):
    """Validate a raw mapping and fill defaults."""
    if not isinstance(raw, dict):
        raise ConfigError("a scenario must be a mapping")
    unknown = set(raw) - set(_TOP) - set(SCHEMA)
    if unknown:
        raise ConfigError(f"unknown top-level keys: {sorted(unknown)}")
    data = {}
    for key, (kind, default) in _TOP.items():
        if key not in raw:
            if default is _REQ:
                raise ConfigError(f"missing required key {key!r}")
            data[key] = default
        else:
            data[key] = _coerce(kind, raw[key], key)
    for sec, schema in SCHEMA.items():
        given = raw.get(sec) or {}
        if not isinstance(given, dict):
            raise ConfigError(f"section {sec!r} must be a mapping")
        bad = set(given) - set(schema)
        if bad:
            raise ConfigError(f"unknown keys in {sec!r}: {sorted(bad)}")
        data[sec] = {
            k: _coerce(kind, given[k], f"{sec}.{k}") if k in given else copy.deepcopy(default)
            for k, (kind, default) in schema.items()
        }
    _check(data)
    return Scenario(data)


def _check(data):
    ker = data["kernel"]
    has_poly = ker["coeffs"] is not None or ker["exponents"] is not None
    has_tt = ker["alpha"] is not None or ker["beta"] is not None
    if has_poly and has_tt:
        raise ConfigError("kernel: give either coeffs/exponents or alpha/beta, not both")
    if has_poly and (ker["coeffs"] is None or ker["exponents"] is None):
        raise ConfigError("kernel: coeffs and exponents go together")
    if has_tt and ker["alpha"] is None:
        raise ConfigError("kernel: alpha is required with beta")
    if not has_poly and not has_tt:
        ker["coeffs"], ker["exponents"] = [1.0], [0.0]
    if ker["alpha"] is not None and ker["beta"] is None:
        ker["beta"] = 0.0
    bnd = data["boundary"]
    if bnd["kind"] == "ibvp1" and bnd["gamma"] is not None:
        raise ConfigError("boundary: gamma belongs to ibvp2 programs")
    if bnd["kind"] == "ibvp2" and bnd["q"] is not None:
        raise ConfigError("boundary: q belongs to ibvp1 programs")
    num = data["numerics"]
    for key in ("dt", "t_end", "dt_tau", "t_end_tau", "tol"):
        if num[key] is not None and num[key] <= 0:
            raise ConfigError(f"numerics.{key} must be positive")
    if data["output"]["stride"] < 1:
        raise ConfigError("output.stride must be >= 1")
    # build the objects once so that inconsistent values surface here
    build_kernel(Scenario(data))
    build_grid(Scenario(data))
    if data["model"] == "gas":
        gas = data["gas"]
        if gas["alpha"] <= 0 or gas["beta"] < 0 or gas["B"] <= 0 or gas["A"] <= 0:
            raise ConfigError("gas: need alpha > 0, beta >= 0, B > 0, A > 0")
        if gas["t_end"] is not None and gas["t_end"] > (1 - 1e-3) * gas["B"] / gas["A"]:
            raise ConfigError("gas.t_end must stay below (1 - 1e-3) B/A")


def load_scenario(path):
    """Read and validate a YAML scenario file."""
    try:
        with open(path) as fh:
            raw = yaml.safe_load(fh)
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from None
    return parse_scenario(raw)


def shipped_path(name):
    """Path of a scenario file bundled with the package."""
    from importlib import resources

    path = resources.files("forchpi") / "scenarios" / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError(f"no shipped scenario named {name!r}")
    return str(path)


def shipped_scenario(name):
    return load_scenario(shipped_path(name))


def dump_scenario(sc):
    return yaml.safe_dump(sc.to_dict(), sort_keys=False, default_flow_style=None, width=100)


# -- builders -------------------------------------------------------------------------


def build_grid(sc):
    from .grid import build_annulus2d, build_radial

    geo = sc["geometry"]
    if geo["kind"] == "radial":
        return build_radial(geo["r_i"], geo["r_e"], geo["n"], ratio=geo["ratio"])
    return build_annulus2d(tuple(geo["outer"]), tuple(geo["inner"]), geo["n"], center=geo["center"])


def build_kernel(sc):
    from .kernel import GPolynomial, Kernel, two_term

    ker = sc["kernel"]
    if ker["alpha"] is not None:
        return Kernel(two_term(ker["alpha"], ker["beta"]))
    return Kernel(GPolynomial(tuple(ker["coeffs"]), tuple(ker["exponents"])))


def build_program(sc, volume):
    from .transient import BoundaryProgram

    bnd = sc["boundary"]
    if bnd["kind"] == "ibvp1":
        q = bnd["q"] if bnd["q"] is not None else repr(bnd["q_s"])
        return BoundaryProgram(phi=bnd["phi"], q_s=bnd["q_s"], psi=bnd["psi"], q=q)
    gamma = bnd["gamma"]
    if gamma is None:
        gamma = f"-{bnd['q_s'] / volume!r}*t"
    return BoundaryProgram(phi=bnd["phi"], q_s=bnd["q_s"], psi=bnd["psi"], gamma=gamma)


def build_gas_scenario(sc, grid, stride=None, t_end=None):
    from .gas import STOP_FRACTION, GasScenario

    gas = sc["gas"]
    if t_end is None:
        t_end = gas["t_end"] if gas["t_end"] is not None else STOP_FRACTION * gas["B"] / gas["A"]
    return GasScenario(
        grid=grid,
        alpha_f=gas["alpha"],
        beta_f=gas["beta"],
        b_reserve=gas["B"],
        a_rate=gas["A"],
        dt=gas["dt"],
        t_end=t_end,
        phi0=gas["phi0"],
        stride=stride or sc["output"]["stride"],
        tol=gas["tol"],
        max_iter=gas["max_iter"],
        approach=gas["approach"],
    )


def output_dir(sc, override=None):
    """``--out`` beats ``FORCHPI_OUT`` beats the scenario."""
    if override:
        return override
    return os.environ.get("FORCHPI_OUT") or sc["output"]["dir"]
