"""Project configuration: the tlv.toml document plus environment overrides.

Recognized keys, all optional unless a command needs them:

    [design]
    files = ["duv.pdvl", "tb.pdvl"]   # sources, relative to this file
    top = "TB"                         # build command when several exist

    [prove]
    budget_bits = 20        # enumeration budget per obligation
    max_cycles = 256        # cycle budget per sequence run
    cache = ".tlvc-cache"   # proof cache directory
    jobs = 1                # worker processes for prove

    [sva]
    activation_bound = 4    # concurrent assertion activations tracked
    trace_cycles = 8        # monitor trace length for assert directives

The TLVC_CACHE environment variable overrides the cache directory.
"""

from __future__ import annotations

import os
from dataclasses import dataclass
from pathlib import Path

try:
    import tomllib
except ModuleNotFoundError:  # Python 3.10
    import tomli as tomllib

from .prove import DEFAULT_BUDGET_BITS
from .source import CompileError

CACHE_ENV = "TLVC_CACHE"
DEFAULT_CACHE = ".tlvc-cache"


@dataclass
class Config:
    files: tuple[str, ...] = ()
    top: str | None = None
    budget_bits: int = DEFAULT_BUDGET_BITS
    max_cycles: int | None = None
    cache: str = DEFAULT_CACHE
    jobs: int = 1
    sva_activation_bound: int | None = None
    sva_trace_cycles: int | None = None
    path: str | None = None  # where this configuration was loaded from

    @property
    def cache_dir(self) -> str:
        return os.environ.get(CACHE_ENV) or self.cache


_SCHEMA = {
    "design": {"files": list, "top": str},
    "prove": {"budget_bits": int, "max_cycles": int, "cache": str, "jobs": int},
    "sva": {"activation_bound": int, "trace_cycles": int},
}


def load_config(path: str | Path) -> Config:
    """Read and validate a tlv.toml file; unknown keys are errors."""
    path = Path(path)
    try:
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
    except OSError as err:
        raise CompileError(f"cannot read config {path}: {err.strerror}") from None
    except tomllib.TOMLDecodeError as err:
        raise CompileError(f"bad config {path}: {err}") from None

    for section, table in data.items():
        if section not in _SCHEMA:
            raise CompileError(f"{path}: unknown config section [{section}]")
        if not isinstance(table, dict):
            raise CompileError(f"{path}: [{section}] must be a table")
        for key, value in table.items():
            want = _SCHEMA[section].get(key)
            if want is None:
                raise CompileError(f"{path}: unknown config key {section}.{key}")
            if not isinstance(value, want) or isinstance(value, bool):
                raise CompileError(
                    f"{path}: config key {section}.{key} must be a {want.__name__}"
                )

    design = data.get("design", {})
    prove = data.get("prove", {})
    sva = data.get("sva", {})

    files = design.get("files", [])
    if not all(isinstance(f, str) for f in files):
        raise CompileError(f"{path}: design.files must be a list of strings")
    root = path.parent
    resolved = tuple(str(root / f) for f in files)

    cache = prove.get("cache", DEFAULT_CACHE)
    if "cache" in prove:
        cache = str(root / cache)

    return Config(
        files=resolved,
        top=design.get("top"),
        budget_bits=prove.get("budget_bits", DEFAULT_BUDGET_BITS),
        max_cycles=prove.get("max_cycles"),
        cache=cache,
        jobs=prove.get("jobs", 1),
        sva_activation_bound=sva.get("activation_bound"),
        sva_trace_cycles=sva.get("trace_cycles"),
        path=str(path),
    )
