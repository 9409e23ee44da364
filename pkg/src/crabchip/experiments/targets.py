"""The nine population targets A-I of the state-preparation study."""

from fractions import Fraction

from crabchip.states import TargetSpec

_HALF = Fraction(1, 2)
_THIRD = Fraction(1, 3)
_FIFTH = Fraction(1, 5)

_ROWS = {
    "A": (_HALF, 0, 0, 0, _HALF),
    "B": (_HALF, 0, 0, _HALF, 0),
    "C": (0, _HALF, 0, _HALF, 0),
    "D": (_HALF, _HALF, 0, 0, 0),
    "E": (0, _THIRD, _THIRD, _THIRD, 0),
    "F": (_FIFTH,) * 5,
    "G": (0, 1, 0, 0, 0),
    "H": (0, 0, 0, 1, 0),
    "I": (0, 0, 1, 0, 0),
}


def _as_floats(row):
    return tuple(float(v) for v in row)


def builtin_targets() -> dict[str, TargetSpec]:
    return {name: TargetSpec(name, _as_floats(row)) for name, row in _ROWS.items()}


def get_target(name: str) -> TargetSpec:
    targets = builtin_targets()
    try:
        return targets[name.upper()]
    except KeyError:
        raise KeyError(f"unknown target {name!r}; built-ins are {', '.join(targets)}") from None


# populated levels (0-based) of the two-level targets used as beam splitters
TWO_LEVEL_TARGETS = {"A": (0, 4), "B": (0, 3), "C": (1, 3), "D": (0, 1)}
