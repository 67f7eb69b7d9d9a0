"""
Quantity strings with explicit units, e.g. ``"2 T"``, ``"100 kHz_x2pi"``.

Frequencies written as ``<prefix>Hz_x2pi`` are angular frequencies
2π×value; plain ``Hz`` values are rejected for angular quantities so that a
missing 2π never goes unnoticed. Vectors are written as space-separated
components followed by one unit, e.g. ``"0.1262 0.8016 0.8245 nm"``.
"""

import re

import numpy as np

TWO_PI = 2 * np.pi

# unit -> (dimension, factor to SI / rad/s)
UNITS = {
    "T": ("field", 1.0),
    "mT": ("field", 1e-3),
    "rad/s": ("angular", 1.0),
    "Hz_x2pi": ("angular", TWO_PI),
    "kHz_x2pi": ("angular", TWO_PI * 1e3),
    "MHz_x2pi": ("angular", TWO_PI * 1e6),
    "GHz_x2pi": ("angular", TWO_PI * 1e9),
    "s": ("time", 1.0),
    "ms": ("time", 1e-3),
    "us": ("time", 1e-6),
    "ns": ("time", 1e-9),
    "nm": ("length", 1.0),
    "A": ("length", 0.1),
    "rad": ("angle", 1.0),
    "deg": ("angle", np.pi / 180),
    "%": ("fraction", 1e-2),
    "frac": ("fraction", 1.0),
}

_NUMBER = re.compile(r"^[+-]?(\d+(\.\d*)?|\.\d+)([eE][+-]?\d+)?$")


class UnitError(ValueError):
    """Raised for malformed quantities or dimension mismatches."""


def parse_quantity(text, dimension, where="value"):
    """Parse ``"<number> <unit>"`` into SI units for the expected dimension.

    Parameters
    ----------
    text : str
        The quantity string.
    dimension : str
        One of the dimensions in :data:`UNITS` (``field``, ``angular``, ...).
    where : str
        Name used in error messages.
    """
    vec = parse_vector(text, dimension, where)
    if vec.size != 1:
        raise UnitError(f"{where}: expected a scalar, got {vec.size} components")
    return float(vec[0])


def parse_vector(text, dimension, where="value"):
    """Parse ``"<n1> <n2> ... <unit>"`` into a numpy array in SI units."""
    if isinstance(text, bool) or isinstance(text, (int, float)):
        raise UnitError(f"{where}: unitless number {text!r}; write e.g. '{text} {_example(dimension)}'")
    if not isinstance(text, str):
        raise UnitError(f"{where}: expected a quantity string, got {type(text).__name__}")
    tokens = text.replace(",", " ").split()
    if len(tokens) < 2:
        raise UnitError(f"{where}: {text!r} lacks a unit")
    *numbers, unit = tokens
    if unit not in UNITS:
        hint = " (angular frequencies need the _x2pi suffix)" if unit.endswith("Hz") else ""
        raise UnitError(f"{where}: unknown unit {unit!r}{hint}")
    dim, factor = UNITS[unit]
    if dim != dimension:
        raise UnitError(f"{where}: unit {unit!r} is a {dim}, expected a {dimension}")
    bad = [t for t in numbers if not _NUMBER.match(t)]
    if bad:
        raise UnitError(f"{where}: cannot read number(s) {bad} in {text!r}")
    return np.array([float(t) for t in numbers]) * factor


def _example(dimension):
    for unit, (dim, _) in UNITS.items():
        if dim == dimension:
            return unit
    return "?"


def format_quantity(value, unit):
    """Inverse of :func:`parse_quantity` for reports."""
    return f"{value / UNITS[unit][1]:.10g} {unit}"
