"""Flat, typed key/value run configs (TOML syntax, top-level keys only).

Example::

    schema_version = 1
    N = 24
    K = 10
    alpha = 0.5
    channel = "hard"
    horizon = 100000
    probe_every = 24
    stop = "threshold"
    seed = 7
"""
import math
import re

try:
    import tomllib
except ModuleNotFoundError:  # Python < 3.11
    import tomli as tomllib

from .channels import KINDS, ChannelSpec
from .dynamics import SimConfig
from .errors import ConfigError, QSGError
from .protocol import NNDConfig

SCHEMA_VERSION = 1

SIM_KEYS = {"N", "K", "alpha", "channel", "m", "temperature", "bias_h", "init",
            "concentration", "init_states", "horizon", "probe_every", "stop", "U_star", "seed"}
COMMON_KEYS = {"schema_version", "trials", "mode", "seed"}
SWEEP_KEYS = {"axis", "values"}
DRIFT_KEYS = {"snapshots", "samples", "snapshot_kind", "first_step", "last_step",
              "include_consensus"}
FIXATION_KEYS = {"N_values", "h_values"}
NND_KEYS = {"H", "referent", "probe_samples_per_agent", "policy", "smoothing",
            "stop_at_threshold"}
THEORY_KEYS = {"points"}
ALL_KEYS = SIM_KEYS | COMMON_KEYS | SWEEP_KEYS | DRIFT_KEYS | FIXATION_KEYS | NND_KEYS | THEORY_KEYS

SWEEP_AXES = ("N", "m", "T", "h", "alpha")

_TYPES = {
    "schema_version": int, "N": int, "K": int, "m": int, "horizon": int, "probe_every": int,
    "seed": int, "trials": int, "H": int, "probe_samples_per_agent": int, "snapshots": int,
    "samples": int, "first_step": int, "last_step": int, "points": int,
    "alpha": float, "temperature": float, "bias_h": float, "concentration": float,
    "U_star": float, "smoothing": float,
    "channel": str, "init": str, "stop": str, "mode": str, "axis": str, "referent": str,
    "policy": str, "snapshot_kind": str,
    "include_consensus": bool, "stop_at_threshold": bool,
    "values": list, "N_values": list, "h_values": list, "init_states": list,
}


class RawConfig(dict):
    """Parsed key/value pairs plus the source text for line diagnostics."""

    def __init__(self, data, text="", path=None):
        super().__init__(data)
        self.text = text
        self.path = path

    def line_of(self, key):
        pat = re.compile(rf"^\s*{re.escape(key)}\s*=", re.MULTILINE)
        m = pat.search(self.text)
        return self.text.count("\n", 0, m.start()) + 1 if m else None

    def error(self, key, message):
        return ConfigError(message, key, self.line_of(key))

    def require(self, key):
        if key not in self:
            raise ConfigError("missing required field", key)
        return self[key]


def parse_config(text, path=None) -> RawConfig:
    try:
        data = tomllib.loads(text)
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path or '<config>'}: {exc}") from None
    raw = RawConfig(data, text, path)
    for key, value in data.items():
        if isinstance(value, dict):
            raise raw.error(key, "tables are not allowed; use flat key = value pairs")
        if key not in ALL_KEYS:
            raise raw.error(key, "unknown field")
        want = _TYPES[key]
        if want is float and isinstance(value, int) and not isinstance(value, bool):
            raw[key] = float(value)
        elif (want is int and isinstance(value, bool)) or not isinstance(raw[key], want):
            raise raw.error(key, f"expected {want.__name__}, got {type(value).__name__}")
    version = raw.require("schema_version")
    if version != SCHEMA_VERSION:
        raise raw.error("schema_version", f"unsupported schema version {version}; expected {SCHEMA_VERSION}")
    return raw


def load_config(path) -> RawConfig:
    try:
        with open(path, encoding="utf-8") as fh:
            text = fh.read()
    except OSError as exc:
        raise ConfigError(f"cannot read config: {exc}") from None
    return parse_config(text, path)


def channel_from(raw: RawConfig) -> ChannelSpec:
    kind = raw.require("channel")
    if kind not in KINDS:
        raise raw.error("channel", f"must be one of {KINDS}, got {kind!r}")
    if kind == "topm" and "m" not in raw:
        raise ConfigError("missing required field (channel = 'topm')", "m")
    m = raw.get("m")
    if m is not None and (m < 1 or (kind == "hard" and m != 1) or kind == "soft"):
        raise raw.error("m", f"invalid bandwidth {m!r} for channel {kind!r}")
    T = raw.get("temperature")
    if T is not None and not T > 0:
        raise raw.error("temperature", f"must be positive, got {T!r}")
    return ChannelSpec.from_dict({k: raw[k] for k in ("channel", "m", "temperature", "bias_h")
                                  if k in raw})


def sim_config_from(raw: RawConfig, **overrides) -> SimConfig:
    fields = {k: raw[k] for k in SIM_KEYS if k in raw and k not in ("channel", "m", "temperature", "bias_h")}
    for key in ("N", "K", "alpha", "horizon"):
        if key not in overrides:
            raw.require(key)
    fields["channel"] = channel_from(raw)
    if "init_states" in fields:
        fields["init_states"] = tuple(map(tuple, fields["init_states"]))
    fields.update(overrides)
    try:
        return SimConfig(**fields)
    except ConfigError as exc:
        if exc.field is not None:
            raise raw.error(exc.field, str(exc).split(": ", 1)[-1]) from None
        raise
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from None


def nnd_config_from(raw: RawConfig, **overrides) -> NNDConfig:
    for key in ("N", "K", "horizon"):
        raw.require(key)
    keys = {"N", "K", "m", "H", "referent", "horizon", "probe_every", "probe_samples_per_agent",
            "U_star", "seed", "policy", "alpha", "smoothing", "stop_at_threshold"}
    fields = {k: raw[k] for k in keys if k in raw}
    fields.update(overrides)
    try:
        return NNDConfig(**fields)
    except ConfigError as exc:
        if exc.field is not None:
            raise raw.error(exc.field, str(exc).split(": ", 1)[-1]) from None
        raise


def sweep_axis(raw: RawConfig):
    axis = raw.require("axis")
    if axis not in SWEEP_AXES:
        raise raw.error("axis", f"must be one of {SWEEP_AXES}, got {axis!r}")
    values = raw.require("values")
    if not values:
        raise raw.error("values", "must list at least one value")
    for v in values:
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
            raise raw.error("values", f"non-numeric value {v!r}")
    return axis, list(values)


def apply_axis(config: SimConfig, axis: str, value) -> SimConfig:
    ch = config.channel
    if axis == "N":
        return config.with_(N=int(value))
    if axis == "alpha":
        return config.with_(alpha=float(value))
    if axis == "m":
        value = int(value)
        new = ChannelSpec.hard(temperature=ch.temperature, bias_h=ch.bias_h) if value == 1 else \
            ChannelSpec.topm(value, temperature=ch.temperature, bias_h=ch.bias_h)
        return config.with_(channel=new)
    if axis == "T":
        return config.with_(channel=ChannelSpec(ch.kind, ch.m, float(value), ch.bias_h))
    if axis == "h":
        return config.with_(channel=ChannelSpec(ch.kind, ch.m, ch.temperature, float(value)))
    raise ConfigError(f"unknown axis {axis!r}", "axis")
