"""Run configuration: defaults, a flat ``key = value`` file, and flag overrides."""

from __future__ import annotations

import os
from dataclasses import dataclass, fields, replace
from pathlib import Path

from .modes import XI_MAX, XI_MIN
from .quadrature import MAX_FREQUENCY, QuadratureSpec
from .spectral import MAX_L

METHODS = ("spectral", "direct", "polar", "all")
CACHE_ENV = "NPTORUS_CACHE"


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class RunConfig:
    xi: tuple = (0.5,)
    k_max: int = 8
    l_max: int = 8
    L: int = 64
    rel_tol: float = 1e-9
    abs_tol: float = 1e-12
    jobs: int = 1
    out_dir: Path = Path(".")
    cache_dir: Path | None = None
    method: str = "all"
    L_seq: tuple = (16, 32, 64)
    lscan_k: tuple = (0, 3, 12)

    def validate(self) -> "RunConfig":
        if not self.xi:
            raise ConfigError("at least one xi is required")
        for x in self.xi:
            if not (XI_MIN <= x <= XI_MAX):
                raise ConfigError(f"xi={x} outside the supported range [{XI_MIN}, {XI_MAX}]")
        for name in ("k_max", "l_max"):
            v = getattr(self, name)
            if not (0 <= v <= MAX_FREQUENCY):
                raise ConfigError(f"{name}={v} must lie in [0, {MAX_FREQUENCY}]")
        if not (1 <= self.L <= MAX_L):
            raise ConfigError(f"L={self.L} must lie in [1, {MAX_L}]")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        if self.method not in METHODS:
            raise ConfigError(f"method must be one of {', '.join(METHODS)}")
        if not self.L_seq or any(not (1 <= L <= MAX_L) for L in self.L_seq) \
                or any(b <= a for a, b in zip(self.L_seq, self.L_seq[1:])):
            raise ConfigError("L_seq must be strictly increasing values in [1, 256]")
        if any(abs(k) > MAX_FREQUENCY for k in self.lscan_k):
            raise ConfigError("lscan_k entries exceed the supported maximum")
        try:
            self.spec()
        except ValueError as exc:
            raise ConfigError(str(exc)) from exc
        return self

    def spec(self) -> QuadratureSpec:
        return QuadratureSpec(rel_tol=self.rel_tol, abs_tol=self.abs_tol)

    @property
    def methods(self) -> tuple:
        return ("spectral", "direct", "polar") if self.method == "all" else ("spectral",) + (
            () if self.method == "spectral" else (self.method,))


def _floats(text: str) -> tuple:
    return tuple(float(t) for t in str(text).replace(",", " ").split())


def _ints(text: str) -> tuple:
    return tuple(int(t) for t in str(text).replace(",", " ").split())


_PARSERS = {
    "xi": _floats, "k_max": int, "l_max": int, "L": int, "rel_tol": float, "abs_tol": float,
    "jobs": int, "out_dir": Path, "cache_dir": Path, "method": str, "L_seq": _ints, "lscan_k": _ints,
}
_ALIASES = {"kmax": "k_max", "lmax": "l_max", "out": "out_dir", "cache": "cache_dir",
            "rel-tol": "rel_tol", "abs-tol": "abs_tol", "l-seq": "L_seq", "lscan-k": "lscan_k",
            "L-seq": "L_seq"}


def _canonical_name(key: str) -> str:
    key = key.strip()
    key = _ALIASES.get(key, key)
    key = _ALIASES.get(key.replace("_", "-"), key)
    if key not in _PARSERS:
        raise ConfigError(f"unknown configuration key {key!r}")
    return key


def parse_config_text(text: str) -> dict:
    out = {}
    for n, line in enumerate(text.splitlines(), 1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        key, sep, value = line.partition("=")
        if not sep:
            raise ConfigError(f"line {n}: expected key = value")
        name = _canonical_name(key)
        try:
            out[name] = _PARSERS[name](value.strip())
        except ValueError as exc:
            raise ConfigError(f"line {n}: bad value for {name}: {value.strip()!r}") from exc
    return out


def load_config_file(path) -> dict:
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise ConfigError(f"cannot read config file {path}: {exc}") from exc
    return parse_config_text(text)


def build_config(file_values: dict | None = None, flag_values: dict | None = None,
                 environ=None) -> RunConfig:
    """Merge defaults, file values and flags (flags win); the cache env var wins over both."""
    environ = os.environ if environ is None else environ
    merged = {}
    known = {f.name for f in fields(RunConfig)}
    for src in (file_values or {}, flag_values or {}):
        merged.update({k: v for k, v in src.items() if v is not None and k in known})
    if environ.get(CACHE_ENV):
        merged["cache_dir"] = Path(environ[CACHE_ENV])
    if "xi" in merged:
        merged["xi"] = tuple(float(x) for x in merged["xi"])
    for key in ("L_seq", "lscan_k"):
        if key in merged:
            merged[key] = tuple(int(x) for x in merged[key])
    return replace(RunConfig(), **merged).validate()
