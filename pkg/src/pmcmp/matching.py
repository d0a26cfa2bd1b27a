"""Common-residue matching between two models of the same protein.

Models are frequently incomplete, so each pair is compared on the maximum
common subset of residues, identified purely by residue key. This is a
matching procedure over a correspondence that is fixed a priori, not a
sequence or structure alignment.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ChainMismatchError, MixedProteinError, NoCommonResiduesError
from .model_io import ResidueKey, StructureModel


@dataclass(frozen=True)
class ResidueMatch:
    """Paired coordinates of the residues present in both models."""

    keys: tuple[ResidueKey, ...]
    coords_a: np.ndarray
    coords_b: np.ndarray
    len_a: int
    len_b: int
    name_mismatches: int

    @property
    def matched_len(self) -> int:
        return len(self.keys)


def match_residues(a: StructureModel, b: StructureModel) -> ResidueMatch:
    """Intersect the residue-key sets of two models, in ascending key order.

    Residue-name disagreement at a shared key is tolerated and counted
    (``name_mismatches``, surfaced as a warning on the pair result) unless
    more than half of the matched keys disagree, which means the files are
    models of different proteins.
    """
    chain_a = a.atoms[0].key.chain_id
    chain_b = b.atoms[0].key.chain_id
    if chain_a != chain_b:
        raise ChainMismatchError(
            f"{a.name} uses chain {chain_a!r} but {b.name} uses chain {chain_b!r}"
        )

    index_a = {atom.key: i for i, atom in enumerate(a.atoms)}
    index_b = {atom.key: i for i, atom in enumerate(b.atoms)}
    common = sorted(index_a.keys() & index_b.keys())
    if not common:
        raise NoCommonResiduesError(
            f"{a.name} and {b.name} share no residues"
        )

    coords_a = np.empty((len(common), 3), dtype=np.float64)
    coords_b = np.empty((len(common), 3), dtype=np.float64)
    mismatches = 0
    for row, key in enumerate(common):
        atom_a = a.atoms[index_a[key]]
        atom_b = b.atoms[index_b[key]]
        coords_a[row, 0] = atom_a.x
        coords_a[row, 1] = atom_a.y
        coords_a[row, 2] = atom_a.z
        coords_b[row, 0] = atom_b.x
        coords_b[row, 1] = atom_b.y
        coords_b[row, 2] = atom_b.z
        if atom_a.residue_name != atom_b.residue_name:
            mismatches += 1

    if mismatches * 2 > len(common):
        raise MixedProteinError(
            f"{a.name} and {b.name} disagree on {mismatches}/{len(common)} "
            "residue names; these look like models of different proteins"
        )

    return ResidueMatch(
        keys=tuple(common),
        coords_a=coords_a,
        coords_b=coords_b,
        len_a=a.declared_length,
        len_b=b.declared_length,
        name_mismatches=mismatches,
    )
