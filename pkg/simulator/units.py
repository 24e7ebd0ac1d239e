"""
Quantities with explicit units for scenario files
Parses strings like "5.0e-5 m", "0 0 1 m", "6.6743e-11 m^3 kg^-1 s^-2" into SI floats.
"""

import math
import re

from .exceptions import UnitError

# Dimension exponents (kg, m, s)
MASS = (1, 0, 0)
LENGTH = (0, 1, 0)
TIME = (0, 0, 1)
VELOCITY = (0, 1, -1)
ENERGY = (1, 2, -2)
ACTION = (1, 2, -1)
GRAVITATIONAL = (-1, 3, -2)
DIMENSIONLESS = (0, 0, 0)

DIMENSION_NAMES = {
    MASS: 'mass', LENGTH: 'length', TIME: 'time', VELOCITY: 'velocity',
    ENERGY: 'energy', ACTION: 'action', GRAVITATIONAL: 'G', DIMENSIONLESS: 'dimensionless',
}

# Canonical unit written back by serialize_scenario
CANONICAL_UNITS = {
    MASS: 'kg', LENGTH: 'm', TIME: 's', VELOCITY: 'm/s', ENERGY: 'J',
    ACTION: 'J s', GRAVITATIONAL: 'm^3 kg^-1 s^-2', DIMENSIONLESS: '',
}

BASE_UNITS = {
    'm': (1.0, LENGTH),
    's': (1.0, TIME),
    'g': (1e-3, MASS),
    'kg': (1.0, MASS),
    'J': (1.0, ENERGY),
    'N': (1.0, (1, 1, -2)),
    'Hz': (1.0, (0, 0, -1)),
    'eV': (1.602176634e-19, ENERGY),
    'rad': (1.0, DIMENSIONLESS),
}

PREFIXES = {
    'f': 1e-15, 'p': 1e-12, 'n': 1e-9, 'u': 1e-6, 'µ': 1e-6,
    'm': 1e-3, 'c': 1e-2, 'k': 1e3, 'M': 1e6, 'G': 1e9,
}

TOKEN = re.compile(r'^([A-Za-zµ]+)(?:\^(-?\d+))?$')


def _lookup(symbol: str):
    if symbol in BASE_UNITS:
        return BASE_UNITS[symbol]
    if len(symbol) > 1 and symbol[0] in PREFIXES and symbol[1:] in BASE_UNITS:
        factor, dimension = BASE_UNITS[symbol[1:]]
        return PREFIXES[symbol[0]] * factor, dimension
    raise UnitError(f"unknown unit '{symbol}'")


def parse_unit(expression: str):
    """Return (factor to SI, dimension exponents) for a unit expression."""
    factor, dimension = 1.0, [0, 0, 0]
    numerator, _, denominator = expression.partition('/')
    if '/' in denominator:
        raise UnitError(f"unit '{expression}' has more than one '/'")
    for sign, part in ((1, numerator), (-1, denominator)):
        for token in part.replace('*', ' ').split():
            match = TOKEN.match(token)
            if not match:
                raise UnitError(f"cannot read unit token '{token}'")
            unit_factor, unit_dimension = _lookup(match.group(1))
            power = sign * int(match.group(2) or 1)
            factor *= unit_factor ** power
            for axis in range(3):
                dimension[axis] += unit_dimension[axis] * power
    return factor, tuple(dimension)


def _split(text: str):
    numbers, rest = [], []
    for token in str(text).split():
        if rest:
            rest.append(token)
            continue
        try:
            numbers.append(float(token))
        except ValueError:
            rest.append(token)
    if not numbers:
        raise UnitError(f"quantity '{text}' has no numeric value")
    return numbers, ' '.join(rest)


def parse_quantity(text, dimension=DIMENSIONLESS, vector=False):
    """
    Parse a scalar (or, with vector=True, a whitespace-separated vector) quantity
    and return it in SI units. Bare numbers are accepted only when dimensionless.
    """
    if isinstance(text, (int, float)) and not isinstance(text, bool):
        if dimension != DIMENSIONLESS:
            raise UnitError(f"value {text!r} needs a {DIMENSION_NAMES.get(dimension, dimension)} unit")
        return [float(text)] if vector else float(text)
    numbers, unit = _split(text)
    factor, found = parse_unit(unit) if unit else (1.0, DIMENSIONLESS)
    if found != dimension:
        expected = DIMENSION_NAMES.get(dimension, str(dimension))
        raise UnitError(f"'{text}' is not a {expected} quantity")
    values = [value * factor for value in numbers]
    if not all(math.isfinite(value) for value in values):
        raise UnitError(f"'{text}' is not finite")
    if vector:
        return values
    if len(values) != 1:
        raise UnitError(f"'{text}' should hold a single value")
    return values[0]


def format_quantity(value, dimension) -> str:
    """Inverse of parse_quantity for SI values; floats keep their shortest round-trip form."""
    if isinstance(value, (list, tuple)) or getattr(value, 'ndim', 0) > 0:
        number = ' '.join(repr(float(component)) for component in value)
    else:
        number = repr(float(value))
    unit = CANONICAL_UNITS[dimension]
    return f"{number} {unit}" if unit else number
