"""Transaction-level design compiler and proof toolchain."""

import pathlib

__version__ = "0.1.0"


def examples_root() -> pathlib.Path:
    """Directory holding the bundled example projects."""
    return pathlib.Path(__file__).resolve().parent / "examples"
