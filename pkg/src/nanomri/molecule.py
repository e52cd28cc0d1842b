"""Molecular structure I/O: XYZ files, a minimal PDB subset, species selection.

Positions are stored in meters internally; XYZ/PDB files use Angstrom.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable

import numpy as np

from .constants import (ANGSTROM, NuclearSpecies, UnsupportedIsotopeError,
                        gyromagnetic, normalize_isotope)


class StructureParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


@dataclass(frozen=True)
class AtomSite:
    element: str
    isotope: int
    position: tuple[float, float, float]  # meters

    def __post_init__(self):
        if not all(math.isfinite(c) for c in self.position):
            raise ValueError("non-finite coordinate")

    @property
    def isotope_label(self) -> str:
        return f"{self.isotope}{self.element}"


@dataclass
class MolecularStructure:
    sites: list[AtomSite]
    frame_offset: tuple[float, float, float] = (0.0, 0.0, 0.0)  # meters
    comment: str = ""

    def __post_init__(self):
        if len(self.sites) < 1:
            raise ValueError("structure must contain at least one site")

    def positions(self) -> np.ndarray:
        """Site positions with the frame offset applied, shape (n, 3), meters."""
        pos = np.array([s.position for s in self.sites], dtype=float)
        return pos + np.asarray(self.frame_offset, dtype=float)

    def check_above_surface(self) -> None:
        z = self.positions()[:, 2]
        if np.any(z < 0):
            raise ValueError(
                f"{int(np.sum(z < 0))} site(s) below the surface plane z=0 "
                "after offset application")


def _parse_isotope_token(token: str, line_no: int,
                         saturation: dict[str, int] | None) -> tuple[str, int]:
    """Resolve an element/isotope token to (element, mass number)."""
    try:
        label = normalize_isotope(token)
    except UnsupportedIsotopeError as exc:
        raise StructureParseError(str(exc), line_no) from None
    mass = int("".join(c for c in label if c.isdigit()))
    element = "".join(c for c in label if c.isalpha())
    had_explicit_mass = any(c.isdigit() for c in token)
    if not had_explicit_mass and saturation and element in saturation:
        mass = saturation[element]
    return element, mass


def parse_xyz(text: str, saturation: dict[str, int] | None = None,
              frame_offset_angstrom: tuple[float, float, float] = (0, 0, 0),
              ) -> MolecularStructure:
    """Parse XYZ-format text: count line, comment line, `element x y z` rows.

    The element column may carry an explicit isotope ("13C"); bare symbols get
    the element default, optionally overridden per element by `saturation`
    (e.g. {"C": 13} for a 13C-saturated sample). Coordinates are Angstrom.
    """
    lines = text.splitlines()
    if not lines:
        raise StructureParseError("empty file", 1)
    try:
        count = int(lines[0].split()[0])
    except (ValueError, IndexError):
        raise StructureParseError(f"malformed atom count: {lines[0]!r}", 1) from None
    if count < 1:
        raise StructureParseError(f"atom count must be >= 1, got {count}", 1)
    comment = lines[1] if len(lines) > 1 else ""
    sites = []
    for idx in range(count):
        line_no = idx + 3
        if idx + 2 >= len(lines):
            raise StructureParseError(
                f"expected {count} atom rows, file ends after {idx}", line_no)
        parts = lines[idx + 2].split()
        if len(parts) < 4:
            raise StructureParseError(
                f"expected 'element x y z', got {lines[idx + 2]!r}", line_no)
        element, mass = _parse_isotope_token(parts[0], line_no, saturation)
        try:
            xyz = tuple(float(p) * ANGSTROM for p in parts[1:4])
        except ValueError:
            raise StructureParseError(
                f"non-numeric coordinate in {parts[1:4]}", line_no) from None
        sites.append(AtomSite(element=element, isotope=mass, position=xyz))
    offset = tuple(c * ANGSTROM for c in frame_offset_angstrom)
    return MolecularStructure(sites=sites, frame_offset=offset, comment=comment)


def write_xyz(structure: MolecularStructure) -> str:
    """Serialize to XYZ text (Angstrom, isotope-explicit element column)."""
    out = [str(len(structure.sites)), structure.comment]
    for s in structure.sites:
        x, y, z = (c / ANGSTROM for c in s.position)
        out.append(f"{s.isotope_label} {x:.8f} {y:.8f} {z:.8f}")
    return "\n".join(out) + "\n"


def parse_pdb(text: str, saturation: dict[str, int] | None = None,
              frame_offset_angstrom: tuple[float, float, float] = (0, 0, 0),
              ) -> MolecularStructure:
    """Parse the ATOM/HETATM subset of PDB fixed-width records.

    Element is taken from columns 77-78 (falling back to the atom-name
    field), coordinates from columns 31-54. MODEL/altloc semantics are not
    supported: a second MODEL record or a non-blank altloc raises.
    """
    sites = []
    for line_no, line in enumerate(text.splitlines(), start=1):
        rec = line[:6].strip()
        if rec == "MODEL":
            if sites:
                raise StructureParseError("multi-MODEL files not supported", line_no)
            continue
        if rec not in ("ATOM", "HETATM"):
            continue
        if len(line) < 54:
            raise StructureParseError("truncated ATOM record", line_no)
        altloc = line[16:17]
        if altloc not in (" ", "", "A"):
            raise StructureParseError(
                f"alternate location {altloc!r} not supported", line_no)
        element_field = line[76:78].strip() if len(line) >= 78 else ""
        if not element_field:
            name = line[12:16].strip()
            element_field = "".join(c for c in name if c.isalpha())[:1]
        try:
            xyz = tuple(float(line[c0:c1]) * ANGSTROM
                        for c0, c1 in ((30, 38), (38, 46), (46, 54)))
        except ValueError:
            raise StructureParseError("non-numeric coordinate", line_no) from None
        element, mass = _parse_isotope_token(element_field, line_no, saturation)
        sites.append(AtomSite(element=element, isotope=mass, position=xyz))
    if not sites:
        raise StructureParseError("no ATOM/HETATM records found", 1)
    offset = tuple(c * ANGSTROM for c in frame_offset_angstrom)
    return MolecularStructure(sites=sites, frame_offset=offset)


def parse_structure(text: str, fmt: str = "auto", **kwargs) -> MolecularStructure:
    if fmt == "auto":
        for line in text.splitlines():
            if line[:6].strip() in ("ATOM", "HETATM", "MODEL", "HEADER"):
                fmt = "pdb"
                break
        else:
            fmt = "xyz"
    if fmt == "xyz":
        return parse_xyz(text, **kwargs)
    if fmt == "pdb":
        return parse_pdb(text, **kwargs)
    raise ValueError(f"unknown structure format {fmt!r}")


def select_species(structure: MolecularStructure,
                   species: NuclearSpecies | str) -> np.ndarray:
    """Positions (n, 3) in meters of sites matching the species' isotope.

    Spin-0 isotopes can never match because NuclearSpecies cannot represent
    them. Order and positions are preserved; the frame offset is applied.
    """
    label = species if isinstance(species, str) else species.symbol
    label = normalize_isotope(label)
    mask = [s.isotope_label == label for s in structure.sites]
    pos = structure.positions()
    return pos[np.array(mask, dtype=bool)]
