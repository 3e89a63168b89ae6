"""Experiment configuration: YAML or JSON mapping, validated eagerly, unknown keys rejected."""

from dataclasses import dataclass, field
import json
import math
from pathlib import Path

import yaml

from .errors import ConfigError, ConstructionError
from .laws import increment_from_dict, offspring_from_dict

KINDS = ("simulate", "phase", "lemmas", "exceedance", "chain", "rde", "sssi")

COMMON_KEYS = {"experiment", "seed", "threads", "out"}

# key -> default (None: required)
KIND_KEYS = {
    "simulate": {"increment": None, "offspring": {"kind": "deterministic", "m": 2}, "H": None,
                 "N": None, "replicas": 1, "node_budget": 200_000_000},
    "phase": {"grid": None, "offspring": {"kind": "deterministic", "m": 2}, "N": 24,
              "replicas": 32, "node_budget": 200_000_000, "flat_threshold": 0.02,
              "grow_threshold": 0.05, "calibrate": False},
    "lemmas": {"increment": None, "offspring": {"kind": "deterministic", "m": 2}, "H": None,
               "n_points": 20, "u_min": 1e-6},
    "exceedance": {"increment": None, "offspring": {"kind": "deterministic", "m": 2}, "H": None,
                   "N": None, "replicas": 1000, "u": 1.0, "r_values": [3, 5, 8], "levels": [],
                   "node_budget": 200_000_000},
    "chain": {"increment": None, "offspring": {"kind": "deterministic", "m": 2}, "H": None,
              "N": None, "n_max": 5, "rule": "deepest", "bernoulli": "auto",
              "mc_replicas": 100_000, "dump_partitions": False},
    "rde": {"increment": None, "offspring": {"kind": "deterministic", "m": 2}, "c": None,
            "pool_size": 100_000, "max_iters": 500, "ks_tol": 0.02, "init": 0.0,
            "escalate": True, "dump_pool": False},
    "sssi": {"increment": None, "p": 2, "c": None, "K_min": 8, "K_max": 14, "replicas": 32,
             "equivalence_K": 0, "equivalence_replicas": 200},
}


@dataclass
class ExperimentConfig:
    kind: str
    seed: int = 0
    threads: int = None
    out: str = "out"
    params: dict = field(default_factory=dict)
    raw: dict = field(default_factory=dict, repr=False)

    def __getitem__(self, key):
        return self.params[key]


def read_config_file(path):
    text = Path(path).read_text()
    try:
        data = json.loads(text) if str(path).endswith(".json") else yaml.safe_load(text)
    except (json.JSONDecodeError, yaml.YAMLError) as exc:
        raise ConfigError(f"cannot parse {path}: {exc}") from exc
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    return data


def _positive_int(name, v, minimum=1):
    if isinstance(v, bool) or not isinstance(v, int) or v < minimum:
        raise ConfigError(f"{name} must be an integer >= {minimum}, got {v!r}")
    return v


def _positive_float(name, v):
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not (v > 0 and math.isfinite(v)):
        raise ConfigError(f"{name} must be a positive finite number, got {v!r}")
    return float(v)


def _laws(p, need_increment=True):
    try:
        if need_increment:
            p["increment"] = increment_from_dict(p["increment"])
        if "offspring" in p:
            p["offspring"] = offspring_from_dict(p["offspring"])
    except ConstructionError as exc:
        raise ConfigError(str(exc)) from exc


def _grid(cells):
    from .experiments import PhaseCell

    if not isinstance(cells, list) or not cells:
        raise ConfigError("phase grid must be a nonempty list of {H, increment} entries")
    out = []
    for c in cells:
        if not isinstance(c, dict) or set(c) - {"H", "increment"} or not {"H", "increment"} <= set(c):
            raise ConfigError(f"grid entry needs exactly the keys H and increment, got {c!r}")
        try:
            out.append(PhaseCell(_positive_float("H", c["H"]), increment_from_dict(c["increment"])))
        except ConstructionError as exc:
            raise ConfigError(str(exc)) from exc
    return out


def validate(data, kind=None):
    """ExperimentConfig from a raw mapping; ``kind`` (from the command line) overrides nothing silently."""
    data = dict(data)
    file_kind = data.get("experiment")
    if kind is None:
        kind = file_kind
    elif file_kind is not None and file_kind != kind:
        raise ConfigError(f"config is for experiment {file_kind!r}, not {kind!r}")
    if kind not in KINDS:
        raise ConfigError(f"experiment must be one of {list(KINDS)}, got {kind!r}")
    keys = KIND_KEYS[kind]
    unknown = set(data) - COMMON_KEYS - set(keys)
    if unknown:
        raise ConfigError(f"unknown keys for {kind!r}: {sorted(unknown)}")
    p = {}
    for key, default in keys.items():
        if key in data:
            p[key] = data[key]
        elif default is None:
            raise ConfigError(f"missing required key {key!r} for {kind!r}")
        else:
            p[key] = default
    seed = data.get("seed", 0)
    if isinstance(seed, bool) or not isinstance(seed, int) or not 0 <= seed < 2 ** 64:
        raise ConfigError(f"seed must be an unsigned 64-bit integer, got {seed!r}")
    threads = data.get("threads")
    if threads is not None:
        _positive_int("threads", threads)
    out = str(data.get("out", "out"))

    if kind == "phase":
        p["grid"] = _grid(p["grid"])
    _laws(p, need_increment=kind != "phase")
    for key in ("H", "c", "u", "u_min", "flat_threshold", "grow_threshold", "ks_tol"):
        if key in p:
            _positive_float(key, p[key])
    for key in ("N", "replicas", "node_budget", "n_points", "mc_replicas", "pool_size",
                "max_iters", "K_min", "K_max", "equivalence_replicas"):
        if key in p:
            _positive_int(key, p[key])
    if "n_max" in p:
        _positive_int("n_max", p["n_max"], 0)
    if "equivalence_K" in p:
        _positive_int("equivalence_K", p["equivalence_K"], 0)
    if kind in ("rde", "sssi") and not p["c"] < 1:
        raise ConfigError(f"c must lie in (0, 1), got {p['c']}")
    if kind == "sssi" and p["K_min"] + 2 > p["K_max"]:
        raise ConfigError("sssi needs K_max >= K_min + 2")
    if kind == "phase" and not p["flat_threshold"] <= p["grow_threshold"]:
        raise ConfigError("flat_threshold must not exceed grow_threshold")
    if kind == "chain" and p["rule"] not in ("deepest", "maximal"):
        raise ConfigError(f"rule must be 'deepest' or 'maximal', got {p['rule']!r}")
    if kind == "chain" and p["bernoulli"] not in ("auto", "exhaustive", "montecarlo", "none"):
        raise ConfigError(f"unknown bernoulli mode {p['bernoulli']!r}")
    if kind == "exceedance":
        if not all(isinstance(r, int) and r >= 1 for r in p["r_values"]):
            raise ConfigError("r_values must be positive integers")
        if not all(isinstance(n, int) and n >= 0 for n in p["levels"]):
            raise ConfigError("levels must be nonnegative integers")
    return ExperimentConfig(kind, seed, threads, out, p, data)


def load(path, kind=None):
    return validate(read_config_file(path), kind)
