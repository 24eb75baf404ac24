"""Flat ``key = value`` run configuration."""

from __future__ import annotations

from dataclasses import fields

from .energy import EnergyParams
from .frontend import SimConfig
from .scheme import Layout


class ConfigError(ValueError):
    pass


def _defaults() -> dict:
    d = {}
    for f in fields(SimConfig):
        d[f.name] = f.default
    for f in fields(EnergyParams):
        d[f.name] = f.default
    d.update(Layout().as_dict())
    d.update(seed=0, mix_length=100_000, step_limit=1_000_000, profile_scale=10_000)
    return d


DEFAULTS = _defaults()

HELP = {
    "cache_size": "instruction cache size in bytes (power of two)",
    "line_size": "cache line size in bytes (power of two, >= 4)",
    "miss_latency": "cycles a cache miss stalls fetch",
    "perfect_icache": "every fetch hits",
    "btb_entries": "direct-mapped BTB entries (power of two)",
    "mispredict_penalty": "flush cycles charged per mispredicted branch",
    "full_bypass": "let depack take a FULL code in the cycle its chunk arrives",
    "max_cycles": "simulation cycle limit (0 = derived from trace length)",
    "seed": "RNG seed for synthetic mixes",
    "mix_length": "instructions in a synthetic mix",
    "step_limit": "interpreter step limit",
    "profile_scale": "dynamic count a frequency table is scaled to",
}


def coerce(key: str, value):
    if key not in DEFAULTS:
        raise ConfigError(f"unknown config key {key!r}")
    default = DEFAULTS[key]
    if not isinstance(value, str):
        return type(default)(value)
    text = value.strip()
    try:
        if isinstance(default, bool):
            low = text.lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(text)
        if isinstance(default, int):
            return int(text, 0)
        return float(text)
    except ValueError:
        raise ConfigError(f"bad value for {key}: {value!r}") from None


def parse_config(text: str) -> dict:
    out = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"config line {lineno}: expected key=value, got {raw!r}")
        out[key.strip()] = coerce(key.strip(), value)
    return out


def resolve(overrides: dict) -> dict:
    cfg = dict(DEFAULTS)
    for k, v in overrides.items():
        cfg[k] = coerce(k, v)
    return cfg


def sim_config(cfg: dict) -> SimConfig:
    try:
        return SimConfig(**{f.name: cfg[f.name] for f in fields(SimConfig)})
    except ValueError as e:
        raise ConfigError(str(e)) from None


def energy_params(cfg: dict) -> EnergyParams:
    try:
        return EnergyParams(**{f.name: cfg[f.name] for f in fields(EnergyParams)})
    except ValueError as e:
        raise ConfigError(str(e)) from None


def layout(cfg: dict) -> Layout:
    try:
        return Layout.from_bits(**{k: cfg[k] for k in Layout().as_dict()})
    except ValueError as e:
        raise ConfigError(str(e)) from None


def describe(cfg: dict) -> str:
    return "config: " + " ".join(f"{k}={cfg[k]}" for k in sorted(cfg))
