"""Physical constants and the nuclear isotope table.

All quantities are SI: gyromagnetic ratios in rad s^-1 T^-1, distances in
meters. Angstrom conversions happen only at file-format boundaries.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources

ANGSTROM = 1e-10
NM = 1e-9


@dataclass(frozen=True)
class PhysicalConstants:
    """Electron gyromagnetic ratio, hbar, and mu0/4pi.

    Values follow CODATA 2018. They may be overridden through a config file,
    never in code.
    """

    gamma_e: float = 1.76085963023e11   # rad s^-1 T^-1 (magnitude)
    hbar: float = 1.054571817e-34       # J s
    mu0_over_4pi: float = 1e-7          # T m A^-1


CONSTANTS = PhysicalConstants()


@dataclass(frozen=True)
class NuclearSpecies:
    symbol: str
    element: str
    mass: int
    gamma: float  # rad s^-1 T^-1, signed
    spin: float

    def __post_init__(self):
        if self.gamma == 0.0:
            raise ValueError(f"{self.symbol} carries no nuclear spin")


class UnsupportedIsotopeError(KeyError):
    pass


def _load_table() -> dict:
    with resources.files("nanomri.data").joinpath("isotopes.json").open() as fh:
        return json.load(fh)


_TABLE = _load_table()


def normalize_isotope(label: str) -> str:
    """Canonicalize an isotope label: '13C', 'C13' and 'C-13' all map to '13C'.

    A bare element symbol maps to the element's default isotope.
    """
    label = label.strip().replace("-", "")
    digits = "".join(c for c in label if c.isdigit())
    letters = "".join(c for c in label if c.isalpha())
    if not letters:
        raise UnsupportedIsotopeError(f"not an isotope label: {label!r}")
    element = letters[0].upper() + letters[1:].lower()
    if not digits:
        defaults = _TABLE["default_isotope"]
        if element not in defaults:
            raise UnsupportedIsotopeError(f"unknown element symbol: {element!r}")
        digits = str(defaults[element])
    return f"{digits}{element}"


def known_element(symbol: str) -> bool:
    try:
        normalize_isotope(symbol)
        return True
    except UnsupportedIsotopeError:
        return False


def gyromagnetic(symbol: str) -> NuclearSpecies:
    """Look up a nuclear species by isotope label.

    Raises UnsupportedIsotopeError for unknown labels and ValueError for
    spin-0 isotopes (e.g. 12C, 16O), which cannot be imaged.
    """
    key = normalize_isotope(symbol)
    try:
        rec = _TABLE["isotopes"][key]
    except KeyError:
        raise UnsupportedIsotopeError(f"isotope not in table: {key!r}") from None
    return NuclearSpecies(symbol=key, element=rec["element"], mass=rec["mass"],
                          gamma=rec["gamma"], spin=rec["spin"])


def isotope_table_revision() -> int:
    return _TABLE["revision"]
