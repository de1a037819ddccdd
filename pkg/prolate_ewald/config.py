"""
Run configuration for the benchmark CLI.

Configuration files:
  run.json        - Main configuration (committed with the experiment)
  run.local.json  - Local overrides next to it (machine-specific: threads, cache_dir, out)

When both files exist they are merged key by key, the local file winning. Explicit command
line flags override both. Every key mirrors the flag of the same name:

  { "seed": 1, "n": 100, "box": 1.0, "rc": 0.1, "eps": [1e-3, 1e-6],
    "split": "pswf", "window": "pswf", "threads": 4 }

Loading never raises: problems are reported through "has_error" / "error_message" on the
config dict, and the CLI turns them into exit code 2.
"""

import hashlib
import json
import math
import os
from dataclasses import dataclass
from typing import Any, Dict, List, Optional, Tuple

from .errors import ConfigurationError

LOCAL_SUFFIX = ".local.json"

SPLIT_CHOICES = ("pswf", "gaussian")
WINDOW_CHOICES = ("pswf", "gaussian", "bspline")
FORMAT_CHOICES = ("csv", "bin")

# Key -> default value
DEFAULTS: Dict[str, Any] = {
    "seed": 1,
    "seeds": None,
    "n": 100,
    "box": 1.0,
    "rc": 0.1,
    "split": "pswf",
    "window": "pswf",
    "direct": False,
    "check": False,
    "eps": [1e-6],
    "m": None,
    "support": None,
    "c_s": None,
    "c_w": None,
    "c_g": None,
    "m_max": 128,
    "p_max": 24,
    "n_values": None,
    "rc_values": None,
    "reference_m": 64,
    "input": None,
    "format": "csv",
    "out": "results",
    "cache_dir": None,
    "threads": 1,
}

# Keys that do not change any computed number; left out of the config hash
NON_SEMANTIC_KEYS = ("out", "cache_dir", "threads")

_INT_KEYS = ("seed", "n", "m_max", "p_max", "reference_m", "threads")
_FLOAT_KEYS = ("box", "rc")
_OPTIONAL_FLOAT_KEYS = ("c_s", "c_w", "c_g")
_INT_LIST_KEYS = ("seeds", "m", "support", "n_values")
_FLOAT_LIST_KEYS = ("eps", "rc_values")
_OPTIONAL_STR_KEYS = ("input", "cache_dir")


def _create_default_config(
    has_error: bool = False,
    error_message: str = "",
    is_empty: bool = True,
    provided: Optional[List[str]] = None,
    **values: Any,
) -> dict:
    """Create a config dict holding the defaults, with optional overrides."""
    config = {key: (list(value) if isinstance(value, list) else value) for key, value in DEFAULTS.items()}
    config.update(values)
    config["has_error"] = has_error
    config["error_message"] = error_message
    config["is_empty"] = is_empty
    config["provided"] = list(provided) if provided is not None else []
    return config


def _error_config(message: str) -> dict:
    return _create_default_config(has_error=True, error_message=message, is_empty=False)


def local_config_path(path: str) -> str:
    """run.json -> run.local.json"""
    root, ext = os.path.splitext(path)
    if ext == ".json":
        return root + LOCAL_SUFFIX
    return path + LOCAL_SUFFIX


def load_config_file(path: str) -> dict:
    """Parse one JSON config file. Missing or blank files give an empty config."""
    config = _create_default_config()

    if not os.path.isfile(path):
        return config

    try:
        with open(path, encoding="utf-8") as f:
            content = f.read()
    except OSError as exc:
        return _error_config(f"Cannot read {path}: {exc}")

    if not content or content.isspace():
        return config

    try:
        data = json.loads(content)
    except json.JSONDecodeError as exc:
        return _error_config(f"Invalid JSON in {path}: {exc.msg} (line {exc.lineno})")

    if not isinstance(data, dict):
        return _error_config(f"Invalid {path}: expected a JSON object")

    unknown = sorted(set(data) - set(DEFAULTS))
    if unknown:
        return _error_config(f"Invalid {path}: unknown key(s) {', '.join(unknown)}")

    config.update(data)
    config["is_empty"] = False
    config["provided"] = sorted(data)
    return config


def merge_configs(main_config: dict, local_config: Optional[dict]) -> dict:
    """Merge two configs (main and local); keys present in local win."""
    if not local_config:
        return main_config

    if main_config.get("has_error"):
        return main_config
    if local_config.get("has_error"):
        return local_config

    if local_config.get("is_empty", True):
        return main_config

    merged = dict(main_config)
    for key in local_config.get("provided", []):
        merged[key] = local_config[key]
    merged["provided"] = sorted(set(main_config.get("provided", [])) | set(local_config.get("provided", [])))
    merged["is_empty"] = False
    return merged


def apply_overrides(config: dict, overrides: Dict[str, Any]) -> dict:
    """Apply explicit flag values (None means "not given")."""
    if config.get("has_error"):
        return config
    given = {key: value for key, value in overrides.items() if value is not None}
    if not given:
        return config
    return merge_configs(config, _create_default_config(is_empty=False, provided=sorted(given), **given))


def _as_list(value: Any) -> Any:
    if value is None or isinstance(value, list):
        return value
    return [value]


def _check_number(key: str, value: Any, kind: type) -> Optional[str]:
    if isinstance(value, bool) or not isinstance(value, (int, float)):
        return f"'{key}' must be a number"
    if not math.isfinite(value):
        return f"'{key}' must be finite"
    if kind is int and float(value) != int(value):
        return f"'{key}' must be an integer"
    return None


def validate_config(config: dict) -> dict:
    """Check types and ranges; returns a normalized copy (lists wrapped, numbers coerced)."""
    if config.get("has_error"):
        return config
    result = dict(config)

    for key in _INT_LIST_KEYS + _FLOAT_LIST_KEYS:
        result[key] = _as_list(result[key])

    problems: List[str] = []
    for key in _INT_KEYS + _FLOAT_KEYS:
        problem = _check_number(key, result[key], int if key in _INT_KEYS else float)
        if problem:
            problems.append(problem)
        else:
            result[key] = int(result[key]) if key in _INT_KEYS else float(result[key])
    for key in _OPTIONAL_FLOAT_KEYS:
        if result[key] is not None:
            problem = _check_number(key, result[key], float)
            if problem:
                problems.append(problem)
            else:
                result[key] = float(result[key])
    for key in _INT_LIST_KEYS + _FLOAT_LIST_KEYS:
        if result[key] is None:
            continue
        kind = int if key in _INT_LIST_KEYS else float
        item_problems = [p for p in (_check_number(key, v, kind) for v in result[key]) if p]
        if item_problems or not result[key]:
            problems.append(f"'{key}' must be a non-empty list of numbers")
        else:
            result[key] = [kind(v) for v in result[key]]
    for key in _OPTIONAL_STR_KEYS + ("out",):
        if result[key] is not None and not isinstance(result[key], str):
            problems.append(f"'{key}' must be a string")
    for key in ("direct", "check"):
        if not isinstance(result[key], bool):
            problems.append(f"'{key}' must be true or false")

    if result["split"] not in SPLIT_CHOICES:
        problems.append(f"'split' must be one of {', '.join(SPLIT_CHOICES)}")
    if result["window"] not in WINDOW_CHOICES:
        problems.append(f"'window' must be one of {', '.join(WINDOW_CHOICES)}")
    if result["format"] not in FORMAT_CHOICES:
        problems.append(f"'format' must be one of {', '.join(FORMAT_CHOICES)}")

    if not problems:
        problems.extend(_range_problems(result))

    if problems:
        return _error_config("Invalid configuration: " + "; ".join(problems))
    return result


def _range_problems(config: dict) -> List[str]:
    problems = []
    if config["n"] < 2:
        problems.append("'n' must be at least 2 (a neutral system needs two charges)")
    if config["box"] <= 0:
        problems.append("'box' must be positive")
    for rc in [config["rc"]] + (config["rc_values"] or []):
        if not 0 < rc < 0.5 * config["box"]:
            problems.append(f"cutoff {rc:g} must lie in (0, box/2)")
    if config["eps"] is None:
        problems.append("'eps' needs at least one tolerance")
    for eps in config["eps"] or []:
        if not 0 < eps < 1:
            problems.append(f"tolerance {eps:g} must lie in (0, 1)")
    for key in ("m", "support", "n_values"):
        if config[key] is not None and min(config[key]) < 1:
            problems.append(f"'{key}' entries must be positive")
    if config["threads"] < 1:
        problems.append("'threads' must be at least 1")
    if config["m_max"] < 2 or config["p_max"] < 2:
        problems.append("'m_max' and 'p_max' must be at least 2")
    for key in _OPTIONAL_FLOAT_KEYS:
        if config[key] is not None and config[key] <= 0:
            problems.append(f"'{key}' must be positive")
    return problems


def load_run_config(path: Optional[str], overrides: Optional[Dict[str, Any]] = None) -> dict:
    """Main file, local file, then flags; validated."""
    config = _create_default_config()
    if path is not None:
        if not os.path.isfile(path):
            return _error_config(f"Config file not found: {path}")
        config = merge_configs(load_config_file(path), load_config_file(local_config_path(path)))
    config = apply_overrides(config, overrides or {})
    return validate_config(config)


def semantic_items(config: dict) -> Dict[str, Any]:
    return {
        key: config[key] for key in DEFAULTS if key not in NON_SEMANTIC_KEYS
    }


def config_hash(config: dict) -> str:
    """First 12 hex chars of SHA-256 over the canonical JSON of the semantic keys."""
    canonical = json.dumps(semantic_items(config), sort_keys=True, separators=(",", ":"))
    return hashlib.sha256(canonical.encode("utf-8")).hexdigest()[:12]


@dataclass(frozen=True)
class RunConfig:
    """A validated configuration, frozen before any compute."""

    seed: int
    seeds: Tuple[int, ...]
    n: int
    box: float
    rc: float
    split: str
    window: str
    direct: bool
    check: bool
    eps: Tuple[float, ...]
    m: Optional[Tuple[int, ...]]
    support: Optional[Tuple[int, ...]]
    c_s: Optional[float]
    c_w: Optional[float]
    c_g: Optional[float]
    m_max: int
    p_max: int
    n_values: Tuple[int, ...]
    rc_values: Tuple[float, ...]
    reference_m: int
    input: Optional[str]
    format: str
    out: str
    cache_dir: Optional[str]
    threads: int
    config_hash: str

    @classmethod
    def from_dict(cls, config: dict) -> "RunConfig":
        if config.get("has_error"):
            raise ConfigurationError(config.get("error_message", "invalid configuration"))

        def opt_tuple(key: str) -> Optional[tuple]:
            return tuple(config[key]) if config[key] is not None else None

        seeds = config["seeds"] or [config["seed"] + i for i in range(5)]
        return cls(
            seed=config["seed"],
            seeds=tuple(seeds),
            n=config["n"],
            box=config["box"],
            rc=config["rc"],
            split=config["split"],
            window=config["window"],
            direct=config["direct"],
            check=config["check"],
            eps=tuple(config["eps"]),
            m=opt_tuple("m"),
            support=opt_tuple("support"),
            c_s=config["c_s"],
            c_w=config["c_w"],
            c_g=config["c_g"],
            m_max=config["m_max"],
            p_max=config["p_max"],
            n_values=tuple(config["n_values"] or [config["n"]]),
            rc_values=tuple(config["rc_values"] or [config["rc"]]),
            reference_m=config["reference_m"],
            input=config["input"],
            format=config["format"],
            out=config["out"],
            cache_dir=config["cache_dir"],
            threads=config["threads"],
            config_hash=config_hash(config),
        )
