"""PDB parsing into alpha-carbon structure models.

All comparison measures operate on the CA trace, so a parsed model keeps
exactly one CA atom per residue and drops every other record. Column layout
follows the fixed-width PDB coordinate format (serial 7-11, name 13-16,
altLoc 17, resName 18-20, chain 22, resSeq 23-26, iCode 27, x/y/z 31-54).
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass

import numpy as np

from .errors import FormatError, MultiChainError

_CA_NAME = " CA "
_ALT_LOCS = (" ", "A")


@dataclass(frozen=True)
class ResidueKey:
    """Identity by which residues of two models are matched.

    Ordered by sequence number, then insertion code (blank sorts first);
    equality compares all three fields.
    """

    chain_id: str
    seq_num: int
    insertion_code: str = " "

    def _order(self) -> tuple[int, str]:
        return (self.seq_num, self.insertion_code)

    def __lt__(self, other: "ResidueKey") -> bool:
        return self._order() < other._order()

    def __le__(self, other: "ResidueKey") -> bool:
        return self._order() <= other._order()

    def __gt__(self, other: "ResidueKey") -> bool:
        return self._order() > other._order()

    def __ge__(self, other: "ResidueKey") -> bool:
        return self._order() >= other._order()


@dataclass(frozen=True)
class CaAtom:
    key: ResidueKey
    residue_name: str
    x: float
    y: float
    z: float


@dataclass(frozen=True)
class StructureModel:
    """One uploaded model: the ordered CA trace keyed by residue identity."""

    name: str
    atoms: tuple[CaAtom, ...]

    @property
    def declared_length(self) -> int:
        return len(self.atoms)

    def keys(self) -> tuple[ResidueKey, ...]:
        return tuple(a.key for a in self.atoms)

    def coords(self) -> np.ndarray:
        """(N, 3) float64 array of CA coordinates in residue order."""
        out = np.empty((len(self.atoms), 3), dtype=np.float64)
        for i, a in enumerate(self.atoms):
            out[i, 0] = a.x
            out[i, 1] = a.y
            out[i, 2] = a.z
        return out


def parse_pdb(raw_bytes: bytes, name: str) -> StructureModel:
    """Parse PDB text into a :class:`StructureModel`.

    Keeps ATOM records whose atom name is exactly ``" CA "`` and whose altLoc
    is blank or ``A``; stops at the first ENDMDL so only the first model of a
    multi-model file is read. Raises :class:`FormatError` on undecodable
    input, unparsable coordinate fields, duplicate residues or a missing CA
    trace, and :class:`MultiChainError` when the CA atoms span more than one
    chain.
    """
    try:
        text = raw_bytes.decode("utf-8")
    except UnicodeDecodeError as exc:
        raise FormatError(f"{name}: file is not ASCII/UTF-8 text") from exc

    atoms: dict[ResidueKey, CaAtom] = {}
    for lineno, line in enumerate(text.splitlines(), start=1):
        record = line[:6].rstrip()
        if record == "ENDMDL":
            break
        if record != "ATOM":
            continue
        line = line.ljust(80)
        if line[12:16] != _CA_NAME:
            continue
        if line[16] not in _ALT_LOCS:
            continue
        try:
            seq_num = int(line[22:26])
            x = float(line[30:38])
            y = float(line[38:46])
            z = float(line[46:54])
        except ValueError as exc:
            raise FormatError(
                f"{name}: unparsable ATOM record at line {lineno}"
            ) from exc
        if not (math.isfinite(x) and math.isfinite(y) and math.isfinite(z)):
            raise FormatError(
                f"{name}: non-finite coordinate at line {lineno}"
            )
        key = ResidueKey(line[21], seq_num, line[26])
        if key in atoms:
            raise FormatError(
                f"{name}: duplicate residue {key.chain_id}{key.seq_num}"
                f"{key.insertion_code.strip()} at line {lineno}"
            )
        atoms[key] = CaAtom(key, line[17:20].strip(), x, y, z)

    if not atoms:
        raise FormatError(f"{name}: no CA atoms found")
    chains = {k.chain_id for k in atoms}
    if len(chains) > 1:
        raise MultiChainError(
            f"{name}: CA atoms span chains {sorted(chains)}"
        )
    ordered = tuple(atoms[k] for k in sorted(atoms))
    return StructureModel(name=name, atoms=ordered)


def model_digest(model: StructureModel) -> str:
    """Deterministic content digest; used as the structure-cache key."""
    h = hashlib.sha256()
    h.update(model.name.encode("utf-8"))
    for a in model.atoms:
        h.update(
            f"|{a.key.chain_id}/{a.key.seq_num}/{a.key.insertion_code}"
            f"/{a.residue_name}/{a.x:.3f}/{a.y:.3f}/{a.z:.3f}".encode("utf-8")
        )
    return h.hexdigest()
