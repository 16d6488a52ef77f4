"""Experiment configuration: flat ``key = value`` files with section prefixes.

Keys live under ``problem.*``, ``noise.*``, ``run.*`` and ``tol.*``.  A JSON
object with the same keys is accepted too, as is a report JSON carrying a
``"config"`` entry, so every run can be replayed from its own report.
"""

from __future__ import annotations

import hashlib
import json
import math

import numpy as np

from .errors import ConfigError
from .gubinelli import affine_function, constant_function, cosine_function, sine_function
from .rde import RdeProblem, constant_drift, linear_drift, sine_drift, zero_drift
from .rough_core import FbmSpec, TimeGrid


def _floats(text):
    if isinstance(text, (list, tuple)):
        return [float(v) for v in text]
    return [float(v) for v in str(text).replace(";", ",").split(",") if v.strip()]


def _ints(text):
    if isinstance(text, (list, tuple)):
        return [int(v) for v in text]
    return [int(v) for v in str(text).split(",") if v.strip()]


def _matrix(text):
    """``"-1,0;0,-2"`` -> nested list; a JSON nested list passes through."""
    if isinstance(text, (list, tuple)):
        rows = [[float(v) for v in np.atleast_1d(r)] for r in text]
    else:
        rows = [[float(v) for v in r.split(",")] for r in str(text).split(";")]
    if any(len(r) != len(rows) for r in rows):
        raise ConfigError(f"problem.A must be square, got {text!r}")
    return rows


def _choice(*options):
    def conv(v):
        v = str(v)
        if v not in options:
            raise ConfigError(f"expected one of {options}, got {v!r}")
        return v
    return conv


def _optional_float(v):
    if v is None or str(v).lower() in ("", "none", "auto"):
        return None
    return float(v)


# key -> (converter, default)
KEYS = {
    "problem.d": (int, 1),
    "problem.m": (int, 1),
    "problem.A": (_matrix, [[-1.0]]),
    "problem.f": (_choice("zero", "const", "linear", "sin"), "zero"),
    "problem.f_scale": (float, 0.0),
    "problem.f_shift": (float, 0.0),
    "problem.g": (_choice("zero", "additive", "affine", "sin", "cos"), "zero"),
    "problem.g_scale": (float, 0.0),
    "problem.g_shift": (float, 0.0),
    "noise.hurst": (float, 0.4),
    "noise.p": (float, 2.5),
    "noise.t0": (float, 0.0),
    "noise.t1": (float, 1.0),
    "noise.dt": (float, 1.0 / 32.0),
    "noise.lift_level": (int, 3),
    "noise.method": (_choice("auto", "circulant", "cholesky"), "auto"),
    "run.y0": (_floats, [1.0]),
    "run.y0b": (_floats, [-1.0]),
    "run.horizons": (_floats, [5.0, 10.0, 15.0, 20.0]),
    "run.ensemble": (int, 2),
    "run.ball_radius": (float, 1.0),
    "run.gamma": (_optional_float, None),
    "run.gamma_samples": (int, 200),
    "run.gamma_steps": (int, 64),
    "run.cg_sweep": (_floats, [0.2, 0.1, 0.05, 0.025]),
    "run.n_forward": (int, 20),
    "run.criterion": (_choice("theorem", "general", "linear"), "general"),
    "run.scheme": (_choice("euler", "exponential"), "euler"),
    "run.encoding": (_choice("decimal", "hex"), "decimal"),
    "run.semigroup_margin": (float, 0.02),
    "run.absorbing": (int, 0),
    "run.seeds": (_ints, []),
    "tol.divergence": (float, 1e8),
    "tol.singleton": (float, 1e-6),
}


def valid_keys():
    return sorted(KEYS)


def _unknown(key):
    return ConfigError(f"unknown config key {key!r}; valid keys: {', '.join(valid_keys())}")


def parse_text(text):
    """Parse ``key = value`` lines (``#`` starts a comment) into raw strings."""
    raw = {}
    for lineno, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value', got {line!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in KEYS:
            raise _unknown(key)
        if key in raw:
            raise ConfigError(f"line {lineno}: duplicate key {key!r}")
        raw[key] = value
    return raw


def load_raw(path):
    """Raw key/value pairs from a text config, a JSON config or a report JSON."""
    try:
        with open(path) as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    stripped = text.lstrip()
    if stripped.startswith("{"):
        obj = json.loads(text)
        if "config" in obj and isinstance(obj["config"], dict):
            obj = obj["config"]
        for key in obj:
            if key not in KEYS:
                raise _unknown(key)
        return dict(obj)
    return parse_text(text)


def resolve(raw, seeds=None, tol=None):
    """Typed, fully populated configuration; ``--seed`` values override ``run.seeds``."""
    cfg = {}
    for key, (conv, default) in KEYS.items():
        if key in raw:
            try:
                cfg[key] = conv(raw[key])
            except (TypeError, ValueError) as exc:
                raise ConfigError(f"bad value for {key}: {raw[key]!r} ({exc})") from exc
        else:
            cfg[key] = default
    for item in tol or []:
        if "=" not in item:
            raise ConfigError(f"--tol expects KEY=VAL, got {item!r}")
        k, v = item.split("=", 1)
        key = k if k.startswith("tol.") else f"tol.{k}"
        if key not in KEYS:
            raise _unknown(key)
        cfg[key] = float(v)
    if seeds:
        cfg["run.seeds"] = [int(s) for s in seeds]
    for s in cfg["run.seeds"]:
        if not 0 <= s < 2 ** 64:
            raise ConfigError(f"seed {s} is not a 64-bit unsigned integer")
    d, m = cfg["problem.d"], cfg["problem.m"]
    if d < 1 or m < 1:
        raise ConfigError("problem.d and problem.m must be positive")
    if len(cfg["problem.A"]) != d:
        raise ConfigError(f"problem.A is {len(cfg['problem.A'])}x{len(cfg['problem.A'])}, expected {d}x{d}")
    for key in ("run.y0", "run.y0b"):
        if len(cfg[key]) == 1 and d > 1:
            cfg[key] = cfg[key] * d
        if len(cfg[key]) != d:
            raise ConfigError(f"{key} must have {d} components")
    return cfg


def require_seeds(cfg):
    if not cfg["run.seeds"]:
        raise ConfigError("no seed given: pass --seed N (repeatable) or set run.seeds")
    return cfg["run.seeds"]


def config_hash(cfg):
    blob = json.dumps(cfg, sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(blob.encode()).hexdigest()


def build_problem(cfg):
    d = cfg["problem.d"]
    A = np.array(cfg["problem.A"], dtype=float)
    fs, fh = cfg["problem.f_scale"], cfg["problem.f_shift"]
    f = {
        "zero": lambda: zero_drift(d),
        "const": lambda: constant_drift(fh, d),
        "linear": lambda: linear_drift(fs, d, fh),
        "sin": lambda: sine_drift(fs, d, fh),
    }[cfg["problem.f"]]()
    return RdeProblem(A, f, build_diffusion(cfg, cfg["problem.g_scale"]))


def build_diffusion(cfg, scale):
    """``g`` of the configured kind with size ``scale`` (the sweep variable of ``drift``)."""
    d, m = cfg["problem.d"], cfg["problem.m"]
    shift = cfg["problem.g_shift"]
    E = np.eye(d, m)
    kind = cfg["problem.g"]
    if kind == "zero":
        return constant_function(np.zeros((d, m)), d)
    if kind == "additive":
        return constant_function(scale * E, d)
    if kind == "affine":
        C = scale * E[:, :, None] * np.eye(d)[:, None, :]
        return affine_function(C, shift * E)
    if kind == "sin":
        return sine_function(scale, d, m, shift)
    return cosine_function(scale, d, m, shift)


def noise_spec(cfg, seed, t0=None, t1=None):
    """fBm spec on ``[t0, t1]`` (defaults from ``noise.*``) with step ``noise.dt``."""
    t0 = cfg["noise.t0"] if t0 is None else t0
    t1 = cfg["noise.t1"] if t1 is None else t1
    steps = (t1 - t0) / cfg["noise.dt"]
    n = int(round(steps))
    if n < 1 or not math.isclose(steps, n, rel_tol=1e-9):
        raise ConfigError(f"noise.dt={cfg['noise.dt']} does not divide [{t0}, {t1}]")
    return FbmSpec(cfg["noise.hurst"], cfg["problem.m"], int(seed), TimeGrid.uniform(t0, t1, n),
                   cfg["noise.lift_level"], cfg["noise.p"], 1.0, cfg["noise.method"])
