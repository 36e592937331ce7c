"""Run configuration: a small TOML schema mapped onto the protocol runners.

A config file names one protocol and parametrizes it in a block of the same
name, with shared numerics and output settings in their own blocks:

    protocol = "section3"

    [section3]
    e0 = 10.0
    beta = 1.0
    policy = "sLPM"

    [numerics]
    tol = 1e-9
    seed = 7

Unknown keys anywhere are rejected so a typo cannot silently fall back to a
default. Values stay in the natural units used throughout the package.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

try:
    import tomllib
except ModuleNotFoundError:
    import tomli as tomllib

from .errors import ConfigError

PROTOCOLS = ("section3", "process_a", "process_b", "erasure", "needle", "relax")
POLICIES = ("sLPM", "LPM")

_F = "float"
_I = "int"
_POLICY = "policy"

# per-protocol parameter schema: name -> (kind, required)
SCHEMAS = {
    "section3": {
        "e0": (_F, True), "beta": (_F, True), "gamma0": (_F, False),
        "tau_ramp": (_F, False), "settle": (_F, False),
        "policy": (_POLICY, False),
    },
    "process_a": {
        "e": (_F, True), "beta": (_F, True), "n_cycles": (_I, False),
        "epsilon": (_F, False), "policy": (_POLICY, False),
    },
    "process_b": {
        "e0": (_F, True), "beta": (_F, True), "gamma0": (_F, False),
        "tau_ramp": (_F, False), "settle": (_F, False),
        "policy": (_POLICY, False),
    },
    "erasure": {
        "e_max": (_F, False), "beta": (_F, False), "gamma0": (_F, False),
        "tau": (_F, False), "policy": (_POLICY, False),
    },
    "relax": {
        "e0": (_F, True), "beta": (_F, True), "gamma0": (_F, False),
        "t_final": (_F, False), "policy": (_POLICY, False),
    },
    "needle": {
        "mu": (_F, False), "beta": (_F, False), "b_max": (_F, False),
        "width": (_F, False), "z_far": (_F, False), "z_near": (_F, False),
        "n_phi": (_I, False), "n_z": (_I, False),
    },
}

_NUMERICS_FIELDS = {"tol": _F, "seed": _I, "sample_stride": _I}


@dataclass(frozen=True)
class RunConfig:
    """One validated run: protocol, its parameters, numerics, output dir."""

    protocol: str
    params: dict = field(default_factory=dict)
    tol: float | None = None
    seed: int = 0
    sample_stride: int | None = None
    out_dir: str | None = None


def _check_value(block: str, key: str, kind: str, value):
    if kind == _F:
        if isinstance(value, bool) or not isinstance(value, (int, float)):
            raise ConfigError(f"{block}.{key} must be a number, got {value!r}")
        return float(value)
    if kind == _I:
        if isinstance(value, bool) or not isinstance(value, int):
            raise ConfigError(f"{block}.{key} must be an integer, got {value!r}")
        return value
    if kind == _POLICY:
        if value not in POLICIES:
            raise ConfigError(
                f"{block}.{key} must be one of {POLICIES}, got {value!r}")
        return value
    raise AssertionError(kind)


def _validate_params(protocol: str, raw: dict) -> dict:
    schema = SCHEMAS[protocol]
    unknown = sorted(set(raw) - set(schema))
    if unknown:
        raise ConfigError(f"unknown fields in [{protocol}]: {', '.join(unknown)}")
    missing = sorted(k for k, (_, req) in schema.items()
                     if req and k not in raw)
    if missing:
        raise ConfigError(f"[{protocol}] is missing: {', '.join(missing)}")
    return {k: _check_value(protocol, k, schema[k][0], v)
            for k, v in raw.items()}


def load_config(path: str) -> RunConfig:
    """Parse and validate a TOML run configuration."""
    try:
        with open(path, "rb") as fh:
            doc = tomllib.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"config {path} is not valid TOML: {exc}") from exc

    protocol = doc.get("protocol")
    if protocol is None:
        raise ConfigError("config must set 'protocol'")
    if protocol not in PROTOCOLS:
        raise ConfigError(
            f"unknown protocol {protocol!r}; expected one of {PROTOCOLS}")

    allowed = {"protocol", "numerics", "output", protocol}
    unknown = sorted(set(doc) - allowed)
    if unknown:
        raise ConfigError(f"unknown top-level fields: {', '.join(unknown)}")

    params = _validate_params(protocol, doc.get(protocol, {}))

    numerics = doc.get("numerics", {})
    if not isinstance(numerics, dict):
        raise ConfigError("[numerics] must be a table")
    bad = sorted(set(numerics) - set(_NUMERICS_FIELDS))
    if bad:
        raise ConfigError(f"unknown fields in [numerics]: {', '.join(bad)}")
    numerics = {k: _check_value("numerics", k, _NUMERICS_FIELDS[k], v)
                for k, v in numerics.items()}

    output = doc.get("output", {})
    if not isinstance(output, dict):
        raise ConfigError("[output] must be a table")
    bad = sorted(set(output) - {"dir"})
    if bad:
        raise ConfigError(f"unknown fields in [output]: {', '.join(bad)}")
    out_dir = output.get("dir")
    if out_dir is not None and not isinstance(out_dir, str):
        raise ConfigError("output.dir must be a string")

    return RunConfig(
        protocol=protocol,
        params=params,
        tol=numerics.get("tol"),
        seed=numerics.get("seed", 0),
        sample_stride=numerics.get("sample_stride"),
        out_dir=out_dir,
    )


def parse_scalar(text: str):
    """Parse a command-line override value as a TOML scalar.

    Bare words that are not valid TOML (like policy names) fall back to
    strings, so ``--set policy=sLPM`` works without shell quoting tricks.
    """
    try:
        return tomllib.loads(f"v = {text}")["v"]
    except tomllib.TOMLDecodeError:
        return text


def apply_assignment(cfg: RunConfig, key: str, value) -> RunConfig:
    """Return a copy of cfg with one ``key=value`` override applied.

    Keys may be qualified (``numerics.tol``, ``section3.tau_ramp``) or bare;
    bare keys resolve to the protocol block first, then to numerics.
    """
    if "." in key:
        block, name = key.split(".", 1)
        if block == "numerics":
            if name not in _NUMERICS_FIELDS:
                raise ConfigError(f"unknown numerics field {name!r}")
            value = _check_value("numerics", name, _NUMERICS_FIELDS[name], value)
            return replace(cfg, **{name: value})
        if block == "output":
            if name != "dir" or not isinstance(value, str):
                raise ConfigError("only output.dir=<string> may be set")
            return replace(cfg, out_dir=value)
        if block == cfg.protocol:
            key = name
        else:
            raise ConfigError(
                f"override block {block!r} does not match protocol "
                f"{cfg.protocol!r}")

    schema = SCHEMAS[cfg.protocol]
    if key in schema:
        value = _check_value(cfg.protocol, key, schema[key][0], value)
        return replace(cfg, params={**cfg.params, key: value})
    if key in _NUMERICS_FIELDS:
        value = _check_value("numerics", key, _NUMERICS_FIELDS[key], value)
        return replace(cfg, **{key: value})
    raise ConfigError(
        f"unknown override {key!r} for protocol {cfg.protocol!r}")


def parse_grid(text: str) -> list[tuple[str, list]]:
    """Parse a sweep grid ``k=v1,v2;k2=w1,w2`` into (key, values) pairs."""
    entries = [chunk.strip() for chunk in text.split(";") if chunk.strip()]
    if not entries:
        raise ConfigError("sweep grid is empty")
    grid = []
    for entry in entries:
        if "=" not in entry:
            raise ConfigError(f"grid entry {entry!r} is not key=v1,v2,...")
        key, _, values = entry.partition("=")
        key = key.strip()
        parsed = [parse_scalar(v.strip()) for v in values.split(",") if v.strip()]
        if not key or not parsed:
            raise ConfigError(f"grid entry {entry!r} has no values")
        grid.append((key, parsed))
    return grid
